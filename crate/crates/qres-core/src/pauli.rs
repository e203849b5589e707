//! Complex 2x2 operator algebra over the Pauli basis.
//!
//! Operators are written as `scale * (c0 * I + n . sigma)` with a complex
//! 3-vector `n`. The complex bilinear square `n . n` (no conjugation) drives
//! the closed-form exponential, so generators may be non-Hermitian; evolution
//! under them is then non-unitary, which is exactly what the weak-measurement
//! probability formulas need.

use num_complex::Complex64 as C64;
use std::ops::{Add, Mul, Sub};
use thiserror::Error;

/// Complex 3-vector of Pauli coefficients.
pub type Vec3C = [C64; 3];

/// Below this magnitude of the bilinear square `x . x`, [`exp_i_pauli`]
/// switches to series evaluation of cos/sinc, avoiding 0/0 at the origin.
/// At the crossover the 2nd-order series is accurate to ~1e-16 relative.
pub const EXP_SERIES_THRESHOLD: f64 = 1e-8;

/// Hermitian squared norm below which the component of the perturbation
/// orthogonal to the generator counts as zero in [`solve_sigma_a`]
/// (the commutative case).
pub const COMMUTATIVE_THRESHOLD: f64 = 1e-20;

/// Magnitude of the bilinear square `n . n` below which a complex vector
/// counts as isotropic: it has no invertible square, so [`solve_sigma_a`]
/// cannot divide by it.
pub const DEGENERATE_THRESHOLD: f64 = 1e-20;

#[derive(Debug, Error)]
pub enum PauliError {
    /// The generator vector is isotropic (`n . n = 0`), so nothing can be
    /// divided by its bilinear square.
    #[error("degenerate generator: bilinear square n.n vanishes")]
    DegenerateGenerator,
}

/// Dense 2x2 complex matrix, row major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Operator2 {
    pub m: [[C64; 2]; 2],
}

/// An operator in the form `scale * (c0 * I + n . sigma)`.
///
/// `scale` is a nonnegative angular frequency when the form is a Hamiltonian
/// term; `c0` and `n` may be complex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PauliForm {
    pub scale: f64,
    pub c0: C64,
    pub n: Vec3C,
}

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

pub fn v_add(a: Vec3C, b: Vec3C) -> Vec3C {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn v_sub(a: Vec3C, b: Vec3C) -> Vec3C {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn v_scale(a: Vec3C, s: C64) -> Vec3C {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Bilinear dot product `a . b` without conjugation; complex in general.
pub fn bilinear_dot(a: Vec3C, b: Vec3C) -> C64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Hermitian squared norm `a . a*`.
pub fn hermitian_norm_sqr(a: Vec3C) -> f64 {
    a[0].norm_sqr() + a[1].norm_sqr() + a[2].norm_sqr()
}

/// Formal complex cross product (component formula applied to complex entries).
pub fn cross(a: Vec3C, b: Vec3C) -> Vec3C {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

impl Operator2 {
    pub fn zero() -> Self {
        Operator2 { m: [[ZERO; 2]; 2] }
    }

    pub fn identity() -> Self {
        Operator2 {
            m: [[ONE, ZERO], [ZERO, ONE]],
        }
    }

    /// Pauli matrix `sigma_k`, `k` in 1..=3.
    pub fn sigma(k: usize) -> Self {
        match k {
            1 => Operator2 {
                m: [[ZERO, ONE], [ONE, ZERO]],
            },
            2 => Operator2 {
                m: [[ZERO, -I], [I, ZERO]],
            },
            3 => Operator2 {
                m: [[ONE, ZERO], [ZERO, -ONE]],
            },
            _ => panic!("sigma index must be 1, 2 or 3"),
        }
    }

    /// `x . sigma` as a dense matrix.
    pub fn sigma_dot(x: Vec3C) -> Self {
        Operator2 {
            m: [[x[2], x[0] - I * x[1]], [x[0] + I * x[1], -x[2]]],
        }
    }

    pub fn trace(&self) -> C64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn det(&self) -> C64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn adjoint(&self) -> Self {
        Operator2 {
            m: [
                [self.m[0][0].conj(), self.m[1][0].conj()],
                [self.m[0][1].conj(), self.m[1][1].conj()],
            ],
        }
    }

    pub fn scaled(&self, s: C64) -> Self {
        Operator2 {
            m: [
                [self.m[0][0] * s, self.m[0][1] * s],
                [self.m[1][0] * s, self.m[1][1] * s],
            ],
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m
            .iter()
            .flatten()
            .map(|e| e.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Entrywise maximum absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d = 0.0f64;
        for r in 0..2 {
            for c in 0..2 {
                d = d.max((self.m[r][c] - other.m[r][c]).norm());
            }
        }
        d
    }

    /// `M M^dag = 1` within `tol` (entrywise).
    pub fn is_unitary(&self, tol: f64) -> bool {
        (*self * self.adjoint()).max_abs_diff(&Operator2::identity()) <= tol
    }
}

impl Add for Operator2 {
    type Output = Operator2;
    fn add(self, rhs: Operator2) -> Operator2 {
        let mut m = [[ZERO; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                m[r][c] = self.m[r][c] + rhs.m[r][c];
            }
        }
        Operator2 { m }
    }
}

impl Sub for Operator2 {
    type Output = Operator2;
    fn sub(self, rhs: Operator2) -> Operator2 {
        let mut m = [[ZERO; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                m[r][c] = self.m[r][c] - rhs.m[r][c];
            }
        }
        Operator2 { m }
    }
}

impl Mul for Operator2 {
    type Output = Operator2;
    fn mul(self, rhs: Operator2) -> Operator2 {
        let mut m = [[ZERO; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                m[r][c] = self.m[r][0] * rhs.m[0][c] + self.m[r][1] * rhs.m[1][c];
            }
        }
        Operator2 { m }
    }
}

impl PauliForm {
    pub fn new(scale: f64, c0: C64, n: Vec3C) -> Self {
        PauliForm { scale, c0, n }
    }

    /// Form with zero identity part from real vector components.
    pub fn traceless(scale: f64, n: [f64; 3]) -> Self {
        PauliForm {
            scale,
            c0: ZERO,
            n: [
                C64::new(n[0], 0.0),
                C64::new(n[1], 0.0),
                C64::new(n[2], 0.0),
            ],
        }
    }

    pub fn matrix(&self) -> Operator2 {
        pauli_compose(self)
    }

    /// `n . n* = 1` within `tol`.
    pub fn is_normalized(&self, tol: f64) -> bool {
        (hermitian_norm_sqr(self.n) - 1.0).abs() <= tol
    }
}

/// Dense matrix `scale * (c0 * I + n . sigma)`.
pub fn pauli_compose(p: &PauliForm) -> Operator2 {
    let s = C64::new(p.scale, 0.0);
    (Operator2::identity().scaled(p.c0) + Operator2::sigma_dot(p.n)).scaled(s)
}

/// Inverse of [`pauli_compose`]. Convention: `scale` is the Hermitian norm of
/// the traceless part when nonzero, else 1; `c0` and `n` carry the rest.
pub fn pauli_decompose(m: &Operator2) -> PauliForm {
    let c0 = m.trace() / 2.0;
    let n: Vec3C = [
        (m.m[0][1] + m.m[1][0]) / 2.0,
        (m.m[0][1] - m.m[1][0]) * I / 2.0,
        (m.m[0][0] - m.m[1][1]) / 2.0,
    ];
    let norm = hermitian_norm_sqr(n).sqrt();
    let scale = if norm > 0.0 { norm } else { 1.0 };
    let inv = C64::new(1.0 / scale, 0.0);
    PauliForm {
        scale,
        c0: c0 * inv,
        n: v_scale(n, inv),
    }
}

/// Commutator `a b - b a`.
pub fn commutator(a: &Operator2, b: &Operator2) -> Operator2 {
    *a * *b - *b * *a
}

/// Closed form for `e^{i x . sigma}` with complex `x`:
/// `cos(u) I + i sinc(u) (x . sigma)` where `u = sqrt(x . x)` (principal
/// branch). Both cos(u) and sinc(u) are even in `u`, so the branch choice
/// cannot change the result. For `|x . x| < EXP_SERIES_THRESHOLD`, cos and
/// sinc are evaluated by their series in `x . x`.
pub fn exp_i_pauli(x: Vec3C) -> Operator2 {
    exp_i_pauli_branch(x, false)
}

/// Same closed form with the opposite square root branch; used to demonstrate
/// branch independence.
pub(crate) fn exp_i_pauli_branch(x: Vec3C, flip_root: bool) -> Operator2 {
    let u2 = bilinear_dot(x, x);
    let (cos_u, sinc_u) = if u2.norm() < EXP_SERIES_THRESHOLD {
        let u4 = u2 * u2;
        (ONE - u2 / 2.0 + u4 / 24.0, ONE - u2 / 6.0 + u4 / 120.0)
    } else {
        let mut u = u2.sqrt();
        if flip_root {
            u = -u;
        }
        (u.cos(), u.sin() / u)
    };
    Operator2::identity().scaled(cos_u) + Operator2::sigma_dot(x).scaled(I * sinc_u)
}

/// Result of [`solve_sigma_a`].
#[derive(Clone, Debug, PartialEq)]
pub enum SigmaA {
    /// Coefficient vector `n_a` of the operator conjugate to the generator.
    Vector(Vec3C),
    /// The perturbation is parallel to the generator; no conjugate operator
    /// exists and none is needed.
    Commutative,
}

/// Solves `[n_a . sigma, n_h . sigma] = 2i (n_v . sigma - kappa n_h . sigma)`
/// for `n_a`, with `kappa = (n_h . n_v)/(n_h . n_h)`:
///
/// `n_a = (n_h x n_perp)/(n_h . n_h)`, `n_perp = n_v - kappa n_h`.
///
/// The general solution allows adding `lambda * n_h`; this takes `lambda = 0`.
pub fn solve_sigma_a(n_h: Vec3C, n_v: Vec3C) -> Result<SigmaA, PauliError> {
    let nh2 = bilinear_dot(n_h, n_h);
    if nh2.norm() < DEGENERATE_THRESHOLD {
        return Err(PauliError::DegenerateGenerator);
    }
    let kappa = bilinear_dot(n_h, n_v) / nh2;
    let n_perp = v_sub(n_v, v_scale(n_h, kappa));
    if hermitian_norm_sqr(n_perp) < COMMUTATIVE_THRESHOLD {
        return Ok(SigmaA::Commutative);
    }
    let n_a = v_scale(cross(n_h, n_perp), nh2.inv());
    Ok(SigmaA::Vector(n_a))
}

/// `kappa = (n_h . n_v)/(n_h . n_h)`, the commutative fraction of the
/// perturbation along the generator.
pub fn kappa(n_h: Vec3C, n_v: Vec3C) -> Result<C64, PauliError> {
    let nh2 = bilinear_dot(n_h, n_h);
    if nh2.norm() < DEGENERATE_THRESHOLD {
        return Err(PauliError::DegenerateGenerator);
    }
    Ok(bilinear_dot(n_h, n_v) / nh2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn rv(x: f64, y: f64, z: f64) -> Vec3C {
        [c(x, 0.0), c(y, 0.0), c(z, 0.0)]
    }

    /// Independent oracle: sum the matrix power series of e^{i x.sigma}.
    fn exp_series(x: Vec3C, terms: usize) -> Operator2 {
        let a = Operator2::sigma_dot(x).scaled(I);
        let mut sum = Operator2::identity();
        let mut term = Operator2::identity();
        for k in 1..=terms {
            term = term * a;
            term = term.scaled(c(1.0 / k as f64, 0.0));
            sum = sum + term;
        }
        sum
    }

    #[test]
    fn compose_sigma3() {
        let p = PauliForm::traceless(1.0, [0.0, 0.0, 1.0]);
        assert_eq!(pauli_compose(&p), Operator2::sigma(3));
    }

    #[test]
    fn compose_scaled_identity() {
        let p = PauliForm::new(2.0, ONE, [ZERO; 3]);
        let m = pauli_compose(&p);
        assert_eq!(m.m[0][0], c(2.0, 0.0));
        assert_eq!(m.m[1][1], c(2.0, 0.0));
        assert_eq!(m.m[0][1], ZERO);
    }

    #[test]
    fn compose_drive_with_detuning() {
        // scale w1, n = (1, 0, phi) -> w1 * [[phi, 1], [1, -phi]]
        let (w1, phi) = (0.37, 0.21);
        let m = pauli_compose(&PauliForm::traceless(w1, [1.0, 0.0, phi]));
        assert!((m.m[0][0] - c(w1 * phi, 0.0)).norm() < 1e-15);
        assert!((m.m[0][1] - c(w1, 0.0)).norm() < 1e-15);
        assert!((m.m[1][0] - c(w1, 0.0)).norm() < 1e-15);
        assert!((m.m[1][1] - c(-w1 * phi, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn decompose_sigma1_and_identity() {
        let p = pauli_decompose(&Operator2::sigma(1));
        assert!((p.scale - 1.0).abs() < 1e-15);
        assert!(p.c0.norm() < 1e-15);
        assert!((p.n[0] - ONE).norm() < 1e-15 && p.n[1].norm() < 1e-15 && p.n[2].norm() < 1e-15);

        let q = pauli_decompose(&Operator2::identity());
        assert!((q.scale - 1.0).abs() < 1e-15);
        assert!((q.c0 - ONE).norm() < 1e-15);
        assert!(hermitian_norm_sqr(q.n) < 1e-30);
    }

    #[test]
    fn exp_quarter_turn_is_i_sigma1() {
        let m = exp_i_pauli(rv(std::f64::consts::FRAC_PI_2, 0.0, 0.0));
        let want = Operator2::sigma(1).scaled(I);
        assert!(m.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn exp_zero_is_identity() {
        assert!(exp_i_pauli([ZERO; 3]).max_abs_diff(&Operator2::identity()) < 1e-16);
    }

    #[test]
    fn exp_imaginary_axis_is_hyperbolic() {
        // x = (0, 0, 0.3i) -> diag(e^{-0.3}, e^{0.3}), checked against the
        // 20-term power series oracle as well.
        let x = [ZERO, ZERO, c(0.0, 0.3)];
        let m = exp_i_pauli(x);
        assert!((m.m[0][0] - c((-0.3f64).exp(), 0.0)).norm() < 1e-14);
        assert!((m.m[1][1] - c(0.3f64.exp(), 0.0)).norm() < 1e-14);
        assert!(m.m[0][1].norm() < 1e-15 && m.m[1][0].norm() < 1e-15);
        assert!(m.max_abs_diff(&exp_series(x, 20)) < 1e-13);
    }

    #[test]
    fn exp_series_region_matches_oracle() {
        // Small |x.x| goes through the series branch; compare to the
        // matrix power series.
        let x = [c(1e-5, 2e-6), c(-3e-6, 0.0), c(0.0, 1e-5)];
        assert!(bilinear_dot(x, x).norm() < EXP_SERIES_THRESHOLD);
        let m = exp_i_pauli(x);
        assert!(m.max_abs_diff(&exp_series(x, 12)) < 1e-16);
    }

    #[test]
    fn commutator_pauli_algebra() {
        let lhs = commutator(&Operator2::sigma(1), &Operator2::sigma(2));
        let want = Operator2::sigma(3).scaled(c(0.0, 2.0));
        assert!(lhs.max_abs_diff(&want) < 1e-15);
        let zero = commutator(&Operator2::sigma(3), &Operator2::sigma(3));
        assert!(zero.frobenius_norm() < 1e-15);
    }

    /// Residual of the defining relation
    /// [sigma_a, sigma_h] - 2i (sigma_v - kappa sigma_h).
    fn defining_residual(n_h: Vec3C, n_v: Vec3C, n_a: Vec3C) -> f64 {
        let k = kappa(n_h, n_v).unwrap();
        let sh = Operator2::sigma_dot(n_h);
        let sv = Operator2::sigma_dot(n_v);
        let sa = Operator2::sigma_dot(n_a);
        let rhs = (sv - sh.scaled(k)).scaled(c(0.0, 2.0));
        (commutator(&sa, &sh) - rhs).frobenius_norm()
    }

    #[test]
    fn sigma_a_reference_case() {
        // n_h = x, n_v = z -> n_a = -y.
        match solve_sigma_a(rv(1.0, 0.0, 0.0), rv(0.0, 0.0, 1.0)).unwrap() {
            SigmaA::Vector(n_a) => {
                assert!((n_a[0]).norm() < 1e-15);
                assert!((n_a[1] + ONE).norm() < 1e-15);
                assert!((n_a[2]).norm() < 1e-15);
            }
            SigmaA::Commutative => panic!("expected a vector solution"),
        }
    }

    #[test]
    fn sigma_a_parallel_is_commutative() {
        match solve_sigma_a(rv(0.0, 0.0, 1.0), rv(0.0, 0.0, 1.0)).unwrap() {
            SigmaA::Commutative => {}
            SigmaA::Vector(_) => panic!("parallel vectors must report commutative"),
        }
    }

    #[test]
    fn sigma_a_isotropic_is_degenerate() {
        let iso = [ONE, I, ZERO]; // (1, i, 0): bilinear square is exactly 0
        assert!(matches!(
            solve_sigma_a(iso, rv(0.0, 0.0, 1.0)),
            Err(PauliError::DegenerateGenerator)
        ));
    }

    #[test]
    fn sigma_a_detuned_drive_case() {
        // n_h = (1, 0, phi), n_v = z. The solution satisfies the defining
        // relation exactly; against the phi = 0 form 2i(sigma3 - phi sigma1)
        // the gap is O(phi^2).
        let phi = 0.1;
        let n_h = rv(1.0, 0.0, phi);
        let n_v = rv(0.0, 0.0, 1.0);
        let n_a = match solve_sigma_a(n_h, n_v).unwrap() {
            SigmaA::Vector(v) => v,
            SigmaA::Commutative => panic!("noncommutative case"),
        };
        assert!(defining_residual(n_h, n_v, n_a) < 1e-12);
        let got = commutator(&Operator2::sigma_dot(n_a), &Operator2::sigma_dot(n_h));
        let approx = (Operator2::sigma(3) - Operator2::sigma(1).scaled(c(phi, 0.0)))
            .scaled(c(0.0, 2.0));
        assert!(got.max_abs_diff(&approx) < 5.0 * phi * phi);
    }

    proptest! {
        #[test]
        fn decompose_compose_round_trip(
            re in proptest::array::uniform8(-3.0f64..3.0),
            im in proptest::array::uniform8(-3.0f64..3.0),
        ) {
            let m = Operator2 {
                m: [
                    [c(re[0], im[0]), c(re[1], im[1])],
                    [c(re[2], im[2]), c(re[3], im[3])],
                ],
            };
            let back = pauli_compose(&pauli_decompose(&m));
            prop_assert!(m.max_abs_diff(&back) < 1e-14);
        }

        #[test]
        fn exp_times_exp_of_negative_is_identity(
            re in proptest::array::uniform3(-2.0f64..2.0),
            im in proptest::array::uniform3(-0.8f64..0.8),
        ) {
            let x = [c(re[0], im[0]), c(re[1], im[1]), c(re[2], im[2])];
            let neg = v_scale(x, -ONE);
            let prod = exp_i_pauli(x) * exp_i_pauli(neg);
            prop_assert!(prod.max_abs_diff(&Operator2::identity()) < 1e-12);
        }

        #[test]
        fn exp_real_generator_is_unitary_with_unit_det(
            re in proptest::array::uniform3(-2.0f64..2.0),
        ) {
            let x = rv(re[0], re[1], re[2]);
            let m = exp_i_pauli(x);
            prop_assert!(m.is_unitary(1e-12));
            prop_assert!((m.det() - ONE).norm() < 1e-12);
        }

        #[test]
        fn exp_matches_30_term_series(
            re in proptest::array::uniform3(-1.0f64..1.0),
            im in proptest::array::uniform3(-0.6f64..0.6),
        ) {
            // |x| <= 2 by construction of the ranges.
            let x = [c(re[0], im[0]), c(re[1], im[1]), c(re[2], im[2])];
            prop_assert!(exp_i_pauli(x).max_abs_diff(&exp_series(x, 30)) < 1e-10);
        }

        #[test]
        fn exp_branch_choice_is_irrelevant(
            re in proptest::array::uniform3(-2.0f64..2.0),
            im in proptest::array::uniform3(-0.8f64..0.8),
        ) {
            let x = [c(re[0], im[0]), c(re[1], im[1]), c(re[2], im[2])];
            let a = exp_i_pauli_branch(x, false);
            let b = exp_i_pauli_branch(x, true);
            prop_assert!(a.max_abs_diff(&b) < 1e-13);
        }

        #[test]
        fn sigma_a_satisfies_defining_relation(
            re_h in proptest::array::uniform3(-1.5f64..1.5),
            im_h in proptest::array::uniform3(-0.3f64..0.3),
            re_v in proptest::array::uniform3(-1.5f64..1.5),
            im_v in proptest::array::uniform3(-0.3f64..0.3),
        ) {
            let n_h = [c(re_h[0], im_h[0]), c(re_h[1], im_h[1]), c(re_h[2], im_h[2])];
            let n_v = [c(re_v[0], im_v[0]), c(re_v[1], im_v[1]), c(re_v[2], im_v[2])];
            prop_assume!(bilinear_dot(n_h, n_h).norm() > 1e-2);
            if let Ok(SigmaA::Vector(n_a)) = solve_sigma_a(n_h, n_v) {
                prop_assert!(defining_residual(n_h, n_v, n_a) < 1e-12);
            }
        }
    }
}
