//! Physical constants and the unit conversions used by the counting-statistics
//! pipeline. Every conversion between a dipole moment and a frequency shift
//! goes through this module so the unit bookkeeping lives in one place.

/// Reduced Planck constant, J s (2018 SI exact value).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Elementary charge, C (2018 SI exact value).
pub const E_CHARGE: f64 = 1.602_176_634e-19;

/// Angular frequency shift (rad/s) produced by a dipole moment `d_ecm`
/// (in e cm) precessing in an electric field `e_vcm` (in V/cm):
/// shift = 2 d E / hbar. The cm factors cancel, so d E = d_ecm * e_vcm * e
/// in joules.
pub fn shift_from_edm(d_ecm: f64, e_vcm: f64) -> f64 {
    2.0 * E_CHARGE * d_ecm * e_vcm / HBAR
}

/// Inverse of [`shift_from_edm`]: the dipole moment (e cm) that produces a
/// given angular frequency shift (rad/s) in the field `e_vcm` (V/cm).
pub fn edm_from_shift(shift_rad_s: f64, e_vcm: f64) -> f64 {
    shift_rad_s * HBAR / (2.0 * E_CHARGE * e_vcm)
}
