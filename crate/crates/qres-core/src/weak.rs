//! Weak values of a perturbation between pre- and post-selected states, and
//! their appearance in first-order detection probabilities.
//!
//! The setting: evolution under `H0 = h (c0 I + n_h . sigma)` perturbed by
//! `V = v (c0v I + n_v . sigma)`, with amplitudes taken between a fixed
//! selection pair. The perturbation splits into a part along the generator
//! (weight `kappa`) and a part orthogonal to it, represented through the
//! operator `sigma_a` solving `[sigma_a, sigma_h] = 2i (sigma_v - kappa
//! sigma_h)`. To first order in `v` the detection probability shifts by
//! imaginary parts of three weak values: that of `sigma_h`, and the left and
//! right orderings of `sigma_a` against the unperturbed propagator.
//!
//! The `rabi_*` helpers put a continuous-drive fringe into this language
//! (noncommutative perturbation, `sigma_a = sigma_2 / 2`), the `ramsey_*`
//! helpers a separated-pulse fringe (commutative perturbation, pulses
//! absorbed into the selection states). Both extractions land on the same
//! quantity, `Im sigma_2_L`, which is what makes the two line shapes carry
//! identical first-order information.

use crate::dynamics::{transition_probability, SpinState};
use crate::pauli::{
    bilinear_dot, cross, exp_i_pauli, hermitian_norm_sqr, kappa as kappa_of, solve_sigma_a,
    v_add, v_scale, Operator2, PauliError, PauliForm, SigmaA,
};
use num_complex::Complex64 as C64;
use thiserror::Error;

/// Relative overlap `|<post|U0|pre>|` below which weak values are reported
/// as divergent rather than returned as huge unstable numbers.
pub const OVERLAP_THRESHOLD: f64 = 1e-12;

/// Divergence test for the closed-form fringe weak value: the denominator
/// `cos^2(area) + sin^2(area) sin^2(phi)` vanishes only where both
/// `cos(area)` and `sin(phi)` do.
pub const FRINGE_DIVERGENCE_THRESHOLD: f64 = 1e-9;

/// Base step for the finite-difference extraction of imaginary weak values.
pub const FD_STEP: f64 = 1e-4;

/// Baseline probability below which a relative finite-difference slope is
/// meaningless.
pub const FD_BASE_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum WeakError {
    #[error("selection overlap {overlap:e} vanishes; weak values diverge")]
    DivergedOverlap { overlap: f64 },
    #[error("baseline probability {0:e} is too small for finite differencing")]
    ZeroBaseProbability(f64),
    #[error(transparent)]
    Algebra(#[from] PauliError),
}

/// Generator, perturbation, and duration defining one weak-measurement
/// arrangement.
#[derive(Clone, Copy, Debug)]
pub struct WeakContext {
    pub h0: PauliForm,
    pub v: PauliForm,
    pub t: f64,
}

/// How the perturbation sits relative to the generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContextClass {
    /// `n_v` parallel to `n_h`: only `sigma_h` weak values appear.
    Commutative,
    /// `n_v` orthogonal to `n_h`: only the `sigma_a` orderings appear.
    Noncommutative,
    /// Both components present.
    Mixed,
}

/// Pre- and post-selection states.
#[derive(Clone, Copy, Debug)]
pub struct SelectionPair {
    pub pre: SpinState,
    pub post: SpinState,
}

/// The three weak values entering the first-order probability: the
/// generator direction, and the left/right orderings of `sigma_a` against
/// the unperturbed propagator. In the commutative case the last two both
/// hold the weak value of the perturbation direction itself.
#[derive(Clone, Copy, Debug)]
pub struct WeakValues {
    pub sigma_h_w: C64,
    pub sigma_al_w: C64,
    pub sigma_ar_w: C64,
}

impl WeakContext {
    pub fn new(h0: PauliForm, v: PauliForm, t: f64) -> Self {
        WeakContext { h0, v, t }
    }

    pub fn classify(&self) -> ContextClass {
        let scale = (hermitian_norm_sqr(self.h0.n) * hermitian_norm_sqr(self.v.n)).sqrt();
        let along = bilinear_dot(self.h0.n, self.v.n).norm();
        let across = hermitian_norm_sqr(cross(self.h0.n, self.v.n)).sqrt();
        if across <= 1e-12 * scale {
            ContextClass::Commutative
        } else if along <= 1e-12 * scale {
            ContextClass::Noncommutative
        } else {
            ContextClass::Mixed
        }
    }

    /// `e^{-i H0 t}`, including the identity-part phase. Not unitary when
    /// `c0` or `n` are complex; that is intentional.
    pub fn unperturbed_propagator(&self) -> Operator2 {
        let phase = (-C64::i() * self.h0.c0 * (self.h0.scale * self.t)).exp();
        exp_i_pauli(v_scale(self.h0.n, C64::new(-self.h0.scale * self.t, 0.0))).scaled(phase)
    }

    /// `e^{-i (H0 + V) t}` in closed form; the exact reference the
    /// first-order expressions are checked against.
    pub fn perturbed_propagator(&self) -> Operator2 {
        let c = self.h0.scale * self.h0.c0 + self.v.scale * self.v.c0;
        let phase = (-C64::i() * c * self.t).exp();
        let x = v_add(
            v_scale(self.h0.n, C64::new(-self.h0.scale * self.t, 0.0)),
            v_scale(self.v.n, C64::new(-self.v.scale * self.t, 0.0)),
        );
        exp_i_pauli(x).scaled(phase)
    }
}

fn bra_op_ket(post: &SpinState, op: &Operator2, pre: &SpinState) -> C64 {
    post.inner(&pre.apply(op))
}

/// Weak values of the generator direction and of both `sigma_a` orderings,
/// all normalized by the unperturbed amplitude `<post|U0|pre>`.
pub fn weak_values(ctx: &WeakContext, sel: &SelectionPair) -> Result<WeakValues, WeakError> {
    let u0 = ctx.unperturbed_propagator();
    let den = bra_op_ket(&sel.post, &u0, &sel.pre);
    let scale = (sel.pre.norm_sqr() * sel.post.norm_sqr()).sqrt()
        * (u0.frobenius_norm() / std::f64::consts::SQRT_2);
    if den.norm() <= OVERLAP_THRESHOLD * scale {
        return Err(WeakError::DivergedOverlap {
            overlap: den.norm(),
        });
    }
    let sigma_h = Operator2::sigma_dot(ctx.h0.n);
    let sigma_h_w = bra_op_ket(&sel.post, &(sigma_h * u0), &sel.pre) / den;
    let (sigma_al_w, sigma_ar_w) = match solve_sigma_a(ctx.h0.n, ctx.v.n)? {
        SigmaA::Vector(n_a) => {
            let sigma_a = Operator2::sigma_dot(n_a);
            (
                bra_op_ket(&sel.post, &(sigma_a * u0), &sel.pre) / den,
                bra_op_ket(&sel.post, &(u0 * sigma_a), &sel.pre) / den,
            )
        }
        SigmaA::Commutative => {
            let sigma_v = Operator2::sigma_dot(ctx.v.n);
            let w = bra_op_ket(&sel.post, &(sigma_v * u0), &sel.pre) / den;
            (w, w)
        }
    };
    Ok(WeakValues {
        sigma_h_w,
        sigma_al_w,
        sigma_ar_w,
    })
}

/// First-order transition amplitude
/// `<post|U0|pre> (1 - i v t kappa sigma_h_w - i (v/2h)(L - R)) e^{-i v c0v t}`.
pub fn first_order_amplitude(ctx: &WeakContext, sel: &SelectionPair) -> Result<C64, WeakError> {
    let u0 = ctx.unperturbed_propagator();
    let den = bra_op_ket(&sel.post, &u0, &sel.pre);
    let wv = weak_values(ctx, sel)?;
    let k = kappa_of(ctx.h0.n, ctx.v.n)?;
    let v = ctx.v.scale;
    let mut factor = C64::new(1.0, 0.0) - C64::i() * (v * ctx.t) * k * wv.sigma_h_w;
    if wv.sigma_al_w != wv.sigma_ar_w {
        factor -= C64::i() * (v / (2.0 * ctx.h0.scale)) * (wv.sigma_al_w - wv.sigma_ar_w);
    }
    let c0_phase = (-C64::i() * ctx.v.c0 * (v * ctx.t)).exp();
    Ok(den * factor * c0_phase)
}

/// First-order detection probability
/// `P0 e^{2 v t Im c0v} [1 + 2 v t (Im kappa Re sigma_h_w + Re kappa Im
/// sigma_h_w) + (v/h)(Im L - Im R)]`.
pub fn first_order_probability(ctx: &WeakContext, sel: &SelectionPair) -> Result<f64, WeakError> {
    let u0 = ctx.unperturbed_propagator();
    let den = bra_op_ket(&sel.post, &u0, &sel.pre);
    let wv = weak_values(ctx, sel)?;
    let k = kappa_of(ctx.h0.n, ctx.v.n)?;
    let v = ctx.v.scale;
    let vt = v * ctx.t;
    let mut bracket =
        1.0 + 2.0 * vt * (k.im * wv.sigma_h_w.re + k.re * wv.sigma_h_w.im);
    if wv.sigma_al_w != wv.sigma_ar_w {
        bracket += (v / ctx.h0.scale) * (wv.sigma_al_w.im - wv.sigma_ar_w.im);
    }
    Ok(den.norm_sqr() * (2.0 * vt * ctx.v.c0.im).exp() * bracket)
}

/// Exact detection probability under the perturbed propagator.
pub fn exact_probability(ctx: &WeakContext, sel: &SelectionPair) -> f64 {
    transition_probability(&ctx.perturbed_propagator(), &sel.pre, &sel.post)
}

/// Which first-order coefficient a probability slope encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FdMode {
    /// Probability sampled against `v t`; the slope is `2 P0` times an
    /// imaginary weak value.
    Commutative,
    /// Probability sampled against `v / h`; the slope is `P0` times
    /// `Im L - Im R`.
    Noncommutative,
}

/// Recovers an imaginary weak value from a measured probability curve by
/// Richardson-extrapolated central differences at [`FD_STEP`].
pub fn extract_im_weak_fd<F: Fn(f64) -> f64>(prob_at: F, mode: FdMode) -> Result<f64, WeakError> {
    let p0 = prob_at(0.0);
    if p0 < FD_BASE_THRESHOLD {
        return Err(WeakError::ZeroBaseProbability(p0));
    }
    let central = |h: f64| (prob_at(h) - prob_at(-h)) / (2.0 * h);
    let deriv = (4.0 * central(FD_STEP / 2.0) - central(FD_STEP)) / 3.0;
    Ok(match mode {
        FdMode::Commutative => deriv / (2.0 * p0),
        FdMode::Noncommutative => deriv / p0,
    })
}

/// Fringe phases and strength parameters for the two drive arrangements.
/// `phi` is the half detuning phase, `delta` the dimensionless perturbation
/// strength multiplying the extracted weak value.
#[derive(Clone, Copy, Debug)]
pub struct PhaseParams {
    pub phi: f64,
    pub delta: f64,
    pub pulse_area: f64,
}

impl PhaseParams {
    /// Continuous drive: `phi = (omega - omega_bar0)/(2 omega1)`,
    /// `delta = epsilon / omega1`.
    pub fn continuous_drive(
        omega: f64,
        omega_bar0: f64,
        omega1: f64,
        epsilon: f64,
        pulse_area: f64,
    ) -> Self {
        PhaseParams {
            phi: (omega - omega_bar0) / (2.0 * omega1),
            delta: epsilon / omega1,
            pulse_area,
        }
    }

    /// Separated pulses: `phi = (omega - omega_bar0) t_free / 2`,
    /// `delta = epsilon t_free`.
    pub fn separated_pulses(
        omega: f64,
        omega_bar0: f64,
        t_free: f64,
        epsilon: f64,
        pulse_area: f64,
    ) -> Self {
        PhaseParams {
            phi: (omega - omega_bar0) * t_free / 2.0,
            delta: epsilon * t_free,
            pulse_area,
        }
    }
}

/// Continuous-drive arrangement in normalized units (`omega1 = 1`): pure
/// `sigma_1` generator of total area `area`, perturbation `-(delta/2)
/// sigma_3`, detuning folded into tilted selection states.
pub fn rabi_weak_context(phi: f64, area: f64, delta: f64) -> (WeakContext, SelectionPair) {
    let h0 = PauliForm::traceless(1.0, [1.0, 0.0, 0.0]);
    let v = PauliForm::traceless(delta.abs(), [0.0, 0.0, -0.5 * delta.signum()]);
    let (s, c) = (phi / 2.0).sin_cos();
    let tilted = SpinState::new(C64::new(c, 0.0), C64::new(s, 0.0));
    (
        WeakContext::new(h0, v, area),
        SelectionPair {
            pre: tilted,
            post: tilted,
        },
    )
}

/// Separated-pulse arrangement in normalized units (`t_free = 1`): free
/// precession generator `phi sigma_3`, commutative perturbation
/// `-(delta/2) sigma_3`, pulses of area `theta2` absorbed into the
/// selection states.
pub fn ramsey_weak_context(theta2: f64, phi: f64, delta: f64) -> (WeakContext, SelectionPair) {
    let h0 = PauliForm::traceless(phi.abs(), [0.0, 0.0, phi.signum()]);
    let v = PauliForm::traceless(delta.abs() / 2.0, [0.0, 0.0, -delta.signum()]);
    let (s, c) = (theta2 / 2.0).sin_cos();
    (
        WeakContext::new(h0, v, 1.0),
        SelectionPair {
            pre: SpinState::new(C64::new(c, 0.0), C64::new(0.0, -s)),
            post: SpinState::new(C64::new(c, 0.0), C64::new(0.0, s)),
        },
    )
}

/// Unperturbed fringe `cos^2(area) + sin^2(area) sin^2(phi)`: the stay
/// probability shared by both arrangements.
pub fn fringe_probability(phi: f64, area: f64) -> f64 {
    let (sa, ca) = area.sin_cos();
    let sp = phi.sin();
    ca * ca + sa * sa * sp * sp
}

/// First-order fringe under a strength-`delta` perturbation,
/// `fringe - delta sin^2(area) sin(phi) cos(phi)`. Total in all arguments.
pub fn rabi_prob_first_order(phi: f64, area: f64, delta: f64) -> f64 {
    let sa = area.sin();
    fringe_probability(phi, area) - delta * (sa * sa) * phi.sin() * phi.cos()
}

/// The separated-pulse fringe carries the same first-order shift once
/// `delta` is expressed in its own strength unit.
pub fn ramsey_prob_first_order(phi: f64, area: f64, delta: f64) -> f64 {
    rabi_prob_first_order(phi, area, delta)
}

/// Closed form for the extracted imaginary weak value,
/// `-sin^2(area) sin(phi) cos(phi) / fringe`.
pub fn rabi_weak_value_im(phi: f64, area: f64) -> Result<f64, WeakError> {
    if area.cos().abs() < FRINGE_DIVERGENCE_THRESHOLD
        && phi.sin().abs() < FRINGE_DIVERGENCE_THRESHOLD
    {
        return Err(WeakError::DivergedOverlap {
            overlap: fringe_probability(phi, area).sqrt(),
        });
    }
    let sa = area.sin();
    Ok(-(sa * sa) * phi.sin() * phi.cos() / fringe_probability(phi, area))
}

/// Same quantity computed through the matrix-element machinery:
/// `Im L - Im R` for the continuous-drive arrangement.
pub fn rabi_weak_value_im_matrix(phi: f64, area: f64) -> Result<f64, WeakError> {
    let (ctx, sel) = rabi_weak_context(phi, area, 1.0);
    let wv = weak_values(&ctx, &sel)?;
    Ok(wv.sigma_al_w.im - wv.sigma_ar_w.im)
}

/// Finite-difference extraction against exact probabilities for the
/// continuous-drive arrangement; recovers `Im sigma_2_L`.
pub fn rabi_im_weak_from_fd(phi: f64, area: f64) -> Result<f64, WeakError> {
    extract_im_weak_fd(
        |x| {
            let (ctx, sel) = rabi_weak_context(phi, area, x);
            exact_probability(&ctx, &sel)
        },
        FdMode::Noncommutative,
    )
}

/// Finite-difference extraction for the separated-pulse arrangement; lands
/// on the same `Im sigma_2_L` as the continuous-drive extraction.
pub fn ramsey_im_weak_from_fd(theta2: f64, phi: f64) -> Result<f64, WeakError> {
    extract_im_weak_fd(
        |x| {
            let (ctx, sel) = ramsey_weak_context(theta2, phi, 2.0 * x);
            exact_probability(&ctx, &sel)
        },
        FdMode::Commutative,
    )
}

/// `sigma_3` weak value of the separated-pulse arrangement,
/// `(cos(phi) - i cos(theta2) sin(phi)) / (cos(theta2) cos(phi) - i sin(phi))`,
/// computed through the matrix-element machinery.
pub fn ramsey_sigma3_weak_value(theta2: f64, phi: f64) -> Result<C64, WeakError> {
    let (ctx, sel) = ramsey_weak_context(theta2, phi, 0.0);
    let wv = weak_values(&ctx, &sel)?;
    // sigma_h = sign(phi) sigma_3
    Ok(ctx.h0.n[2].re * wv.sigma_h_w)
}

/// Bare two-state weak value `<f|sigma_3|i> / <f|i>` for the selection pair
/// `|i> = (|+> + |->)/sqrt(2)`,
/// `|f> = (e^{-i alpha/2} cos(beta/2), e^{i alpha/2} sin(beta/2))`.
/// At `beta = -pi/2` it coincides with the separated-pulse `sigma_3` weak
/// value at `theta2 = pi/2`, `phi = -alpha/2`.
pub fn two_state_sigma3_weak_value(alpha: f64, beta: f64) -> Result<C64, WeakError> {
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let pre = SpinState::new(C64::new(inv_sqrt2, 0.0), C64::new(inv_sqrt2, 0.0));
    let (sb, cb) = (beta / 2.0).sin_cos();
    let half = C64::i() * (alpha / 2.0);
    let post = SpinState::new(cb * (-half).exp(), sb * half.exp());
    let den = post.inner(&pre);
    let scale = (pre.norm_sqr() * post.norm_sqr()).sqrt();
    if den.norm() <= OVERLAP_THRESHOLD * scale {
        return Err(WeakError::DivergedOverlap {
            overlap: den.norm(),
        });
    }
    Ok(post.inner(&pre.apply(&Operator2::sigma(3))) / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6, PI};

    const ZERO: C64 = C64::new(0.0, 0.0);

    fn im_sigma2l_closed(phi: f64, area: f64) -> f64 {
        let sa = area.sin();
        -(sa * sa) * phi.sin() * phi.cos() / fringe_probability(phi, area)
    }

    #[test]
    fn arrangement_classification() {
        let (rabi, _) = rabi_weak_context(0.3, 1.0, 0.1);
        assert_eq!(rabi.classify(), ContextClass::Noncommutative);
        let (ramsey, _) = ramsey_weak_context(1.0, 0.3, 0.1);
        assert_eq!(ramsey.classify(), ContextClass::Commutative);
        let mixed = WeakContext::new(
            PauliForm::traceless(1.0, [1.0, 0.0, 0.2]),
            PauliForm::traceless(0.1, [0.0, 0.0, 1.0]),
            1.0,
        );
        assert_eq!(mixed.classify(), ContextClass::Mixed);
    }

    #[test]
    fn continuous_drive_weak_value_reference_points() {
        // quarter-area drive: Im = -cot(phi)
        for phi in [0.4, FRAC_PI_4, 1.2, -0.7] {
            let got = rabi_weak_value_im(phi, FRAC_PI_2).unwrap();
            assert!((got + 1.0 / phi.tan()).abs() < 1e-12, "phi={phi}: {got}");
        }
        assert!((rabi_weak_value_im(FRAC_PI_4, FRAC_PI_2).unwrap() + 1.0).abs() < 1e-14);
        assert!((rabi_weak_value_im(FRAC_PI_4, FRAC_PI_4).unwrap() + 1.0 / 3.0).abs() < 1e-14);
        assert!((rabi_weak_value_im(FRAC_PI_6, FRAC_PI_2).unwrap() + 3.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn matrix_route_agrees_with_closed_form() {
        for &(phi, area) in &[
            (0.3, 1.1),
            (FRAC_PI_4, FRAC_PI_2),
            (-0.9, 2.4),
            (1.4, 0.2),
        ] {
            let m = rabi_weak_value_im_matrix(phi, area).unwrap();
            assert!(
                (m - im_sigma2l_closed(phi, area)).abs() < 1e-12,
                "phi={phi} area={area}"
            );
        }
    }

    #[test]
    fn left_and_right_orderings_are_opposite_here() {
        let (ctx, sel) = rabi_weak_context(0.45, 1.3, 0.1);
        let wv = weak_values(&ctx, &sel).unwrap();
        assert!((wv.sigma_al_w + wv.sigma_ar_w).norm() < 1e-12);
    }

    #[test]
    fn separated_pulse_sigma3_weak_value_forms() {
        // theta2 = pi/2: sigma_3 weak value is i cot(phi).
        for phi in [0.4, FRAC_PI_4, -0.9] {
            let w = ramsey_sigma3_weak_value(FRAC_PI_2, phi).unwrap();
            assert!((w - C64::i() / phi.tan()).norm() < 1e-12);
        }
        // General theta2 against the explicit ratio.
        for &(theta2, phi) in &[(0.7, 0.3), (2.1, -0.5), (1.2, 1.0)] {
            let w = ramsey_sigma3_weak_value(theta2, phi).unwrap();
            let den = C64::new(theta2.cos() * phi.cos(), -phi.sin());
            let num = C64::new(phi.cos(), -theta2.cos() * phi.sin());
            assert!((w - num / den).norm() < 1e-13);
        }
    }

    #[test]
    fn both_arrangements_share_one_imaginary_part() {
        // Im sigma_3_W of the pulse arrangement is minus the extracted
        // continuous-drive value at matched (phi, area).
        for &(phi, area) in &[(0.5, 0.8), (-0.3, 1.9), (1.1, FRAC_PI_2)] {
            let im_pulse = ramsey_sigma3_weak_value(area, phi).unwrap().im;
            assert!((im_pulse + im_sigma2l_closed(phi, area)).abs() < 1e-12);
        }
    }

    #[test]
    fn fd_extraction_recovers_weak_value_both_ways() {
        let want = -3.0f64.sqrt(); // -cot(pi/6)
        let got_nc = rabi_im_weak_from_fd(FRAC_PI_6, FRAC_PI_2).unwrap();
        assert!((got_nc - want).abs() < 1e-8, "continuous: {got_nc}");
        let got_c = ramsey_im_weak_from_fd(FRAC_PI_2, FRAC_PI_6).unwrap();
        assert!((got_c - want).abs() < 1e-8, "separated: {got_c}");
    }

    #[test]
    fn fd_extraction_rejects_dark_baseline() {
        // fringe(0, pi/2) = 0: no counts to difference.
        let r = rabi_im_weak_from_fd(0.0, FRAC_PI_2);
        assert!(matches!(r, Err(WeakError::ZeroBaseProbability(_))));
    }

    #[test]
    fn imaginary_identity_part_raises_probability() {
        // V = v (0.1 i) I: the exact probability gains e^{+0.2 v t}; the
        // sign of that exponent is what this test pins down.
        let h0 = PauliForm::traceless(1.0, [1.0, 0.0, 0.0]);
        let v = PauliForm::new(0.5, C64::new(0.0, 0.1), [ZERO; 3]);
        let ctx = WeakContext::new(h0, v, 2.0);
        let (s, c) = (0.25f64).sin_cos();
        let tilt = SpinState::new(C64::new(c, 0.0), C64::new(s, 0.0));
        let sel = SelectionPair {
            pre: tilt,
            post: tilt,
        };
        let p0 = {
            let mut bare = ctx;
            bare.v.scale = 0.0;
            exact_probability(&bare, &sel)
        };
        let grown = p0 * (0.2 * ctx.v.scale * ctx.t).exp();
        let exact = exact_probability(&ctx, &sel);
        assert!((exact - grown).abs() < 1e-12 * grown);
        let first = first_order_probability(&ctx, &sel).unwrap();
        assert!((first - grown).abs() < 1e-12 * grown);
    }

    #[test]
    fn first_order_probability_error_quarters_with_strength() {
        for &(phi, area) in &[(0.6, 1.1), (-0.4, FRAC_PI_2)] {
            let resid = |delta: f64| {
                let (ctx, sel) = rabi_weak_context(phi, area, delta);
                (exact_probability(&ctx, &sel) - first_order_probability(&ctx, &sel).unwrap())
                    .abs()
            };
            let ratio = resid(2e-3) / resid(1e-3);
            assert!(
                (3.0..=5.0).contains(&ratio),
                "phi={phi} area={area}: ratio {ratio}"
            );
        }
    }

    #[test]
    fn two_state_weak_value_matches_pulse_arrangement() {
        let alpha = -FRAC_PI_2;
        let w = two_state_sigma3_weak_value(alpha, -FRAC_PI_2).unwrap();
        assert!((w - C64::i()).norm() < 1e-12);
        let via_pulses = ramsey_sigma3_weak_value(FRAC_PI_2, -alpha / 2.0).unwrap();
        assert!((w - via_pulses).norm() < 1e-12);
    }

    #[test]
    fn orthogonal_selection_diverges_in_both_pictures() {
        assert!(matches!(
            two_state_sigma3_weak_value(0.0, -FRAC_PI_2),
            Err(WeakError::DivergedOverlap { .. })
        ));
        assert!(matches!(
            ramsey_sigma3_weak_value(FRAC_PI_2, 0.0),
            Err(WeakError::DivergedOverlap { .. })
        ));
    }

    #[test]
    fn closed_form_weak_value_divergence_is_pointlike() {
        assert!(matches!(
            rabi_weak_value_im(0.0, FRAC_PI_2),
            Err(WeakError::DivergedOverlap { .. })
        ));
        assert!(rabi_weak_value_im(0.1, FRAC_PI_2).is_ok());
        assert!(rabi_weak_value_im(0.0, 0.3).is_ok());
    }

    #[test]
    fn strength_parameters_for_both_drives() {
        let t_free = 130.0;
        let omega1 = FRAC_PI_2 / t_free;
        let eps = 1e-4;
        let cont = PhaseParams::continuous_drive(1.0, 1.0, omega1, eps, PI / 2.0);
        let sep = PhaseParams::separated_pulses(1.0, 1.0, t_free, eps, PI / 2.0);
        let ratio = sep.delta / cont.delta;
        assert!(((ratio - FRAC_PI_2) / FRAC_PI_2).abs() <= 1e-12);
    }

    proptest! {
        #[test]
        fn first_order_fringe_is_exactly_linear(
            phi in -1.5f64..1.5,
            area in 0.05f64..3.0,
            delta in -0.2f64..0.2,
        ) {
            let sa = area.sin();
            let want = fringe_probability(phi, area)
                - delta * sa * sa * phi.sin() * phi.cos();
            let got = rabi_prob_first_order(phi, area, delta);
            prop_assert!((got - want).abs() < 1e-15);
            prop_assert_eq!(got, ramsey_prob_first_order(phi, area, delta));
        }

        #[test]
        fn shifted_fringe_is_first_order_plus_quadratic(
            phi in -1.4f64..1.4,
            area in 0.05f64..3.0,
            delta in -0.05f64..0.05,
        ) {
            let exact = fringe_probability(phi - delta / 2.0, area);
            let first = rabi_prob_first_order(phi, area, delta);
            prop_assert!((exact - first).abs() <= 0.3 * delta * delta + 1e-15);
        }

        #[test]
        fn matrix_route_tracks_closed_form_everywhere(
            phi in -1.5f64..1.5,
            area in 0.05f64..3.0,
        ) {
            prop_assume!(fringe_probability(phi, area) > 1e-3);
            let m = rabi_weak_value_im_matrix(phi, area).unwrap();
            prop_assert!((m - im_sigma2l_closed(phi, area)).abs() < 1e-10);
        }

        #[test]
        fn first_order_probability_matches_product_form(
            phi in -1.4f64..1.4,
            area in 0.05f64..3.0,
            delta in -0.05f64..0.05,
        ) {
            prop_assume!(fringe_probability(phi, area) > 1e-3);
            let (ctx, sel) = rabi_weak_context(phi, area, delta);
            let got = first_order_probability(&ctx, &sel).unwrap();
            let want = rabi_prob_first_order(phi, area, delta);
            prop_assert!((got - want).abs() < 1e-12);
        }

        #[test]
        fn pulse_arrangement_probability_matches_product_form(
            phi in -1.4f64..1.4,
            theta2 in 0.05f64..3.0,
            delta in -0.05f64..0.05,
        ) {
            prop_assume!(fringe_probability(phi, theta2) > 1e-3);
            let (ctx, sel) = ramsey_weak_context(theta2, phi, delta);
            let got = first_order_probability(&ctx, &sel).unwrap();
            let want = ramsey_prob_first_order(phi, theta2, delta);
            prop_assert!((got - want).abs() < 1e-12);
        }

        #[test]
        fn two_state_equivalence_along_the_matched_slice(
            alpha in -2.8f64..2.8,
        ) {
            prop_assume!(alpha.abs() > 1e-3);
            let bare = two_state_sigma3_weak_value(alpha, -FRAC_PI_2).unwrap();
            let pulses = ramsey_sigma3_weak_value(FRAC_PI_2, -alpha / 2.0).unwrap();
            // Relative tolerance: near alpha = 0 the weak value itself
            // grows like 2/alpha and absolute agreement is meaningless.
            prop_assert!((bare - pulses).norm() < 1e-12 * (1.0 + bare.norm()));
        }
    }
}
