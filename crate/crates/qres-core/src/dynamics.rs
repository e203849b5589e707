//! Two-level dynamics: closed-form Rabi and Ramsey propagators in the lab
//! frame, time-dependent Hamiltonians for the same physics, and a fixed-step
//! RK4 integrator that serves as an independent oracle for every closed form.
//!
//! Conventions. The static Hamiltonian is `-(omega0/2) sigma3` (spin up is
//! the higher-energy state of a magnetic moment antiparallel to the field).
//! The resonant drive is circularly polarized,
//! `omega1 (cos(omega t) sigma1 - sin(omega t) sigma2)`, for which the
//! rotating-frame transformation `V(t) = e^{+i omega t sigma3 / 2}` is exact:
//!
//! `U_lab(t0 -> t1) = V(t1)^dag' ... = e^{+i omega t1 sigma3/2} e^{-i H' (t1-t0)} e^{-i omega t0 sigma3/2}`
//!
//! with the static rotating-frame generator
//! `H' = omega1 sigma1 + ((omega - omega0)/2) sigma3`.

use crate::pauli::{exp_i_pauli, Operator2, PauliForm};
use num_complex::Complex64 as C64;
use thiserror::Error;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("drive strength must be positive, got {0}")]
    NonPositiveDrive(f64),
    #[error("pulse time must be positive, got {0}")]
    NonPositivePulseTime(f64),
    #[error("free-precession time must be nonnegative, got {0}")]
    NegativeFreeTime(f64),
    #[error("integrator step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("integrator step {dt} exceeds the span {span}")]
    StepTooLarge { dt: f64, span: f64 },
}

/// Spinor amplitudes on the `sigma3` eigenbasis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpinState {
    pub a_plus: C64,
    pub a_minus: C64,
}

impl SpinState {
    pub fn new(a_plus: C64, a_minus: C64) -> Self {
        SpinState { a_plus, a_minus }
    }

    pub fn plus() -> Self {
        SpinState {
            a_plus: ONE,
            a_minus: ZERO,
        }
    }

    pub fn minus() -> Self {
        SpinState {
            a_plus: ZERO,
            a_minus: ONE,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.a_plus.norm_sqr() + self.a_minus.norm_sqr()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return *self;
        }
        SpinState {
            a_plus: self.a_plus / n,
            a_minus: self.a_minus / n,
        }
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &SpinState) -> C64 {
        self.a_plus.conj() * other.a_plus + self.a_minus.conj() * other.a_minus
    }

    pub fn apply(&self, u: &Operator2) -> SpinState {
        SpinState {
            a_plus: u.m[0][0] * self.a_plus + u.m[0][1] * self.a_minus,
            a_minus: u.m[1][0] * self.a_plus + u.m[1][1] * self.a_minus,
        }
    }

    /// Euclidean distance between amplitude vectors (phase-sensitive).
    pub fn distance(&self, other: &SpinState) -> f64 {
        ((self.a_plus - other.a_plus).norm_sqr() + (self.a_minus - other.a_minus).norm_sqr())
            .sqrt()
    }
}

/// Continuous resonant drive. `omega0` is the full level splitting, including
/// any perturbation `epsilon` on top of the unperturbed value; `omega0_bar()`
/// recovers the unperturbed splitting.
#[derive(Clone, Copy, Debug)]
pub struct RabiSpec {
    pub omega0: f64,
    pub omega1: f64,
    pub omega: f64,
    pub t0: f64,
    pub epsilon: f64,
}

impl RabiSpec {
    pub fn new(omega0: f64, omega1: f64, omega: f64, t0: f64, epsilon: f64) -> Result<Self, DynamicsError> {
        if !(omega1 > 0.0) {
            return Err(DynamicsError::NonPositiveDrive(omega1));
        }
        Ok(RabiSpec {
            omega0,
            omega1,
            omega,
            t0,
            epsilon,
        })
    }

    pub fn omega0_bar(&self) -> f64 {
        self.omega0 - self.epsilon
    }
}

/// Where the perturbation `epsilon` acts in a separated-pulse sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EpsilonRegions {
    /// Everywhere; the pulse factors keep their detuning terms, so the
    /// closed form matches the piecewise lab-frame Hamiltonian exactly.
    #[default]
    All,
    /// Idealized separated pulses: detuning and perturbation act only during
    /// free precession, and the pulse factors are pure drive rotations.
    FreeOnly,
}

/// Two pulses of total duration `tau` separated by free precession `t_free`.
/// `omega0` again includes `epsilon`.
#[derive(Clone, Copy, Debug)]
pub struct RamseySpec {
    pub omega0: f64,
    pub omega2: f64,
    pub omega: f64,
    pub tau: f64,
    pub t_free: f64,
    pub t0: f64,
    pub epsilon: f64,
    pub epsilon_regions: EpsilonRegions,
}

impl RamseySpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        omega0: f64,
        omega2: f64,
        omega: f64,
        tau: f64,
        t_free: f64,
        t0: f64,
        epsilon: f64,
        epsilon_regions: EpsilonRegions,
    ) -> Result<Self, DynamicsError> {
        if !(omega2 > 0.0) {
            return Err(DynamicsError::NonPositiveDrive(omega2));
        }
        if !(tau > 0.0) {
            return Err(DynamicsError::NonPositivePulseTime(tau));
        }
        if !(t_free >= 0.0) {
            return Err(DynamicsError::NegativeFreeTime(t_free));
        }
        Ok(RamseySpec {
            omega0,
            omega2,
            omega,
            tau,
            t_free,
            t0,
            epsilon,
            epsilon_regions,
        })
    }

    pub fn omega0_bar(&self) -> f64 {
        self.omega0 - self.epsilon
    }

    /// Total pulse area `omega2 * tau`.
    pub fn pulse_area(&self) -> f64 {
        self.omega2 * self.tau
    }
}

/// One piece of a piecewise-constant rotating-frame sequence.
#[derive(Clone, Copy, Debug)]
pub struct PulseSegment {
    pub generator: PauliForm,
    pub duration: f64,
}

/// Static generator seen in the frame rotating at the drive frequency:
/// `scale = omega1`, `n = (1, 0, (omega - omega0)/(2 omega1))`.
pub fn rotating_frame_hamiltonian(spec: &RabiSpec) -> PauliForm {
    PauliForm::traceless(
        spec.omega1,
        [1.0, 0.0, (spec.omega - spec.omega0) / (2.0 * spec.omega1)],
    )
}

fn rz(angle: f64) -> Operator2 {
    // e^{i angle sigma3}
    exp_i_pauli([ZERO, ZERO, C64::new(angle, 0.0)])
}

/// Lab-frame propagator for a continuous drive over `[t0, t0 + t]`.
pub fn rabi_unitary(spec: &RabiSpec, t: f64) -> Operator2 {
    let det = (spec.omega - spec.omega0) / 2.0;
    let rot = exp_i_pauli([
        C64::new(-spec.omega1 * t, 0.0),
        ZERO,
        C64::new(-det * t, 0.0),
    ]);
    rz(spec.omega * (spec.t0 + t) / 2.0) * rot * rz(-spec.omega * spec.t0 / 2.0)
}

/// Lab-frame propagator for the full separated-pulse sequence,
/// `[t0, t0 + tau + t_free]`, as a product of five factors: the two frame
/// rotations at the endpoints, the two pulse factors, and free precession.
pub fn ramsey_unitary(spec: &RamseySpec) -> Operator2 {
    let half_pulse = [
        C64::new(-spec.omega2 * spec.tau / 2.0, 0.0),
        ZERO,
        match spec.epsilon_regions {
            EpsilonRegions::All => {
                C64::new(-(spec.omega - spec.omega0) * spec.tau / 4.0, 0.0)
            }
            EpsilonRegions::FreeOnly => ZERO,
        },
    ];
    let pulse = exp_i_pauli(half_pulse);
    let free = rz(-(spec.omega - spec.omega0) * spec.t_free / 2.0);
    let total = spec.tau + spec.t_free;
    rz(spec.omega * (spec.t0 + total) / 2.0) * pulse * free * pulse * rz(-spec.omega * spec.t0 / 2.0)
}

/// `|<post| U |pre>|^2`.
pub fn transition_probability(u: &Operator2, pre: &SpinState, post: &SpinState) -> f64 {
    post.inner(&pre.apply(u)).norm_sqr()
}

/// Lab-frame Hamiltonians as explicit functions of time, for the integrator.
#[derive(Clone, Debug)]
pub enum TimeDependentH {
    /// Circularly polarized drive; rotating-frame treatment is exact.
    RabiLab { omega0: f64, omega1: f64, omega: f64 },
    /// Linearly polarized drive `2 omega1 cos(omega t) sigma1`; keeps the
    /// counter-rotating term that the rotating-wave picture discards.
    CosineDrive {
        omega_km: f64,
        omega1: f64,
        omega: f64,
    },
    /// Circular drive gated on during the two pulse windows of a
    /// separated-pulse sequence, off during free precession.
    PiecewiseRamsey(RamseySpec),
}

/// Smooth piece of a [`TimeDependentH`]; evaluating the Hamiltonian "in" a
/// region continues that region's expression past its boundary, which keeps
/// RK4 stage evaluations at segment endpoints on the correct side of a jump.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Region {
    Uniform,
    Pulse,
    Free,
}

impl TimeDependentH {
    pub fn hamiltonian(&self, t: f64) -> Operator2 {
        self.hamiltonian_in(self.region_at(t), t)
    }

    fn region_at(&self, t: f64) -> Region {
        match self {
            TimeDependentH::PiecewiseRamsey(spec) => {
                let rel = t - spec.t0;
                if rel >= spec.tau / 2.0 && rel < spec.tau / 2.0 + spec.t_free {
                    Region::Free
                } else {
                    Region::Pulse
                }
            }
            _ => Region::Uniform,
        }
    }

    /// Interior times at which the Hamiltonian jumps.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            TimeDependentH::PiecewiseRamsey(spec) => {
                let b1 = spec.t0 + spec.tau / 2.0;
                if spec.t_free > 0.0 {
                    vec![b1, b1 + spec.t_free]
                } else {
                    vec![b1]
                }
            }
            _ => Vec::new(),
        }
    }

    fn hamiltonian_in(&self, region: Region, t: f64) -> Operator2 {
        match self {
            TimeDependentH::RabiLab {
                omega0,
                omega1,
                omega,
            } => lab_h(*omega0, *omega1, *omega, t),
            TimeDependentH::CosineDrive {
                omega_km,
                omega1,
                omega,
            } => {
                let drive = 2.0 * omega1 * (omega * t).cos();
                Operator2::sigma_dot([
                    C64::new(drive, 0.0),
                    ZERO,
                    C64::new(-omega_km / 2.0, 0.0),
                ])
            }
            TimeDependentH::PiecewiseRamsey(spec) => match region {
                Region::Free => {
                    Operator2::sigma_dot([ZERO, ZERO, C64::new(-spec.omega0 / 2.0, 0.0)])
                }
                _ => {
                    let omega0_pulse = match spec.epsilon_regions {
                        EpsilonRegions::All => spec.omega0,
                        EpsilonRegions::FreeOnly => spec.omega0_bar(),
                    };
                    lab_h(omega0_pulse, spec.omega2, spec.omega, t)
                }
            },
        }
    }

    /// Largest angular frequency in play, used to choose a default step.
    fn max_frequency(&self) -> f64 {
        let fs = match self {
            TimeDependentH::RabiLab {
                omega0,
                omega1,
                omega,
            } => [*omega0, *omega1, *omega],
            TimeDependentH::CosineDrive {
                omega_km,
                omega1,
                omega,
            } => [*omega_km, *omega1, *omega],
            TimeDependentH::PiecewiseRamsey(spec) => [spec.omega0, spec.omega2, spec.omega],
        };
        fs.iter().fold(0.0f64, |m, f| m.max(f.abs()))
    }
}

fn lab_h(omega0: f64, omega1: f64, omega: f64, t: f64) -> Operator2 {
    let (s, c) = (omega * t).sin_cos();
    Operator2::sigma_dot([
        C64::new(omega1 * c, 0.0),
        C64::new(-omega1 * s, 0.0),
        C64::new(-omega0 / 2.0, 0.0),
    ])
}

/// Default integrator step: 1/2000 of the shortest period in the problem.
pub fn default_step(h: &TimeDependentH) -> f64 {
    let f = h.max_frequency();
    let f = if f > 0.0 { f } else { 1.0 };
    (2.0 * std::f64::consts::PI / f) / 2000.0
}

fn rhs(h: &TimeDependentH, region: Region, t: f64, psi: &SpinState) -> SpinState {
    // d psi / dt = -i H(t) psi
    let hp = psi.apply(&h.hamiltonian_in(region, t));
    SpinState {
        a_plus: -C64::i() * hp.a_plus,
        a_minus: -C64::i() * hp.a_minus,
    }
}

fn axpy(a: f64, x: &SpinState, y: &SpinState) -> SpinState {
    SpinState {
        a_plus: y.a_plus + a * x.a_plus,
        a_minus: y.a_minus + a * x.a_minus,
    }
}

/// Classic fixed-step RK4 for the Schrodinger equation, the independent
/// check on every closed-form propagator. `dt` defaults to
/// [`default_step`]; the span is divided into uniform steps of roughly that
/// size.
pub fn propagate_ode_oracle(
    h: &TimeDependentH,
    psi0: &SpinState,
    t0: f64,
    t1: f64,
    dt: Option<f64>,
) -> Result<SpinState, DynamicsError> {
    let dt = dt.unwrap_or_else(|| default_step(h));
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(DynamicsError::InvalidStep(dt));
    }
    let span = t1 - t0;
    if dt > span {
        return Err(DynamicsError::StepTooLarge { dt, span });
    }
    // Integrate each smooth piece separately so no RK4 stage straddles a
    // jump in the Hamiltonian.
    let mut edges = vec![t0];
    for b in h.breakpoints() {
        if b > t0 && b < t1 {
            edges.push(b);
        }
    }
    edges.push(t1);
    let mut psi = *psi0;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let region = h.region_at(0.5 * (a + b));
        let seg = b - a;
        let n = ((seg / dt).round() as usize).max(1);
        let step = seg / n as f64;
        let mut t = a;
        for k in 0..n {
            let k1 = rhs(h, region, t, &psi);
            let k2 = rhs(h, region, t + step / 2.0, &axpy(step / 2.0, &k1, &psi));
            let k3 = rhs(h, region, t + step / 2.0, &axpy(step / 2.0, &k2, &psi));
            let k4 = rhs(h, region, t + step, &axpy(step, &k3, &psi));
            psi = SpinState {
                a_plus: psi.a_plus
                    + step / 6.0 * (k1.a_plus + 2.0 * k2.a_plus + 2.0 * k3.a_plus + k4.a_plus),
                a_minus: psi.a_minus
                    + step / 6.0
                        * (k1.a_minus + 2.0 * k2.a_minus + 2.0 * k3.a_minus + k4.a_minus),
            };
            t = a + (k + 1) as f64 * step;
        }
    }
    Ok(psi)
}

/// Worst-case state distance between the full cosine drive and its
/// rotating-wave-exact circular counterpart, sampled at 32 checkpoints over
/// `[0, t]`. Scales like `omega1 / omega` for weak drives.
pub fn rwa_residual(
    omega_km: f64,
    omega1: f64,
    omega: f64,
    psi0: &SpinState,
    t: f64,
) -> Result<f64, DynamicsError> {
    if omega1 == 0.0 {
        // Both Hamiltonians degenerate to the same free precession.
        return Ok(0.0);
    }
    let full = TimeDependentH::CosineDrive {
        omega_km,
        omega1,
        omega,
    };
    let circ = TimeDependentH::RabiLab {
        omega0: omega_km,
        omega1,
        omega,
    };
    let dt = default_step(&full);
    let checkpoints = 32usize;
    let mut a = *psi0;
    let mut b = *psi0;
    let mut worst = 0.0f64;
    for k in 0..checkpoints {
        let seg0 = t * k as f64 / checkpoints as f64;
        let seg1 = t * (k + 1) as f64 / checkpoints as f64;
        let step = dt.min((seg1 - seg0) / 2.0);
        a = propagate_ode_oracle(&full, &a, seg0, seg1, Some(step))?;
        b = propagate_ode_oracle(&circ, &b, seg0, seg1, Some(step))?;
        worst = worst.max(a.distance(&b));
    }
    Ok(worst)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// First-order flip probability for the cosine drive,
/// `omega1^2 t^2 sinc^2(Delta t / 2)` with `Delta = omega_km - omega`.
pub fn perturbative_probability(omega_km: f64, omega1: f64, omega: f64, t: f64) -> f64 {
    let delta = omega_km - omega;
    let s = sinc(delta * t / 2.0);
    (omega1 * t) * (omega1 * t) * s * s
}
