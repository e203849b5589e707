//! Frequency scans over the two fringe arrangements: exact transition
//! probabilities, their first-order weak-value forms, and line-shape
//! diagnostics (half width, first-order residuals, count-rate sensitivity).

use crate::dynamics::{
    rabi_unitary, ramsey_unitary, transition_probability, DynamicsError, EpsilonRegions,
    RabiSpec, RamseySpec, SpinState,
};
use crate::pool::map_indexed;
use crate::weak::{fringe_probability, rabi_prob_first_order, rabi_weak_value_im};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("invalid {field}: {reason}")]
    InvalidConfig {
        field: &'static str,
        reason: String,
    },
    #[error("no unique interior peak with two half crossings")]
    NoPeak,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanMode {
    Rabi,
    Ramsey,
}

/// One frequency scan. `t_or_t` is the pulse duration in Rabi mode and the
/// free-precession time in Ramsey mode; `tau` (Ramsey only) is the total
/// duration of the two pulses. `drive_strength * duration` must equal
/// `pulse_area` for the mode's own duration.
#[derive(Clone, Copy, Debug)]
pub struct ScanConfig {
    pub mode: ScanMode,
    pub omega_bar0: f64,
    pub drive_strength: f64,
    pub t_or_t: f64,
    pub tau: Option<f64>,
    pub pulse_area: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub steps: usize,
    pub epsilon: f64,
}

/// Tolerance on `drive_strength * duration == pulse_area`.
const AREA_TOLERANCE: f64 = 1e-12;

impl ScanConfig {
    pub fn validate(&self) -> Result<(), ScanError> {
        let bad = |field: &'static str, reason: String| {
            Err(ScanError::InvalidConfig { field, reason })
        };
        if self.steps < 2 {
            return bad("steps", format!("need at least 2 grid points, got {}", self.steps));
        }
        if !(self.omega_min < self.omega_max) {
            return bad(
                "omega_range",
                format!("omega_min {} must lie below omega_max {}", self.omega_min, self.omega_max),
            );
        }
        if !(self.drive_strength > 0.0) {
            return bad("drive_strength", format!("must be positive, got {}", self.drive_strength));
        }
        if !(self.pulse_area > 0.0) {
            return bad("pulse_area", format!("must be positive, got {}", self.pulse_area));
        }
        let pulse_duration = match self.mode {
            ScanMode::Rabi => {
                if !(self.t_or_t > 0.0) {
                    return bad("t_or_t", format!("pulse duration must be positive, got {}", self.t_or_t));
                }
                if self.tau.is_some() {
                    return bad("tau", "only meaningful in ramsey mode".into());
                }
                self.t_or_t
            }
            ScanMode::Ramsey => {
                if !(self.t_or_t >= 0.0) {
                    return bad("t_or_t", format!("free time must be nonnegative, got {}", self.t_or_t));
                }
                match self.tau {
                    None => return bad("tau", "required in ramsey mode".into()),
                    Some(tau) if !(tau > 0.0) => {
                        return bad("tau", format!("must be positive, got {tau}"));
                    }
                    Some(tau) => tau,
                }
            }
        };
        let area = self.drive_strength * pulse_duration;
        if (area - self.pulse_area).abs() > AREA_TOLERANCE * self.pulse_area.max(1.0) {
            return bad(
                "pulse_area",
                format!(
                    "drive_strength * duration = {area} disagrees with pulse_area {}",
                    self.pulse_area
                ),
            );
        }
        Ok(())
    }

    /// Uniform frequency grid including both endpoints.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.steps;
        (0..n)
            .map(|k| {
                self.omega_min
                    + k as f64 * (self.omega_max - self.omega_min) / (n - 1) as f64
            })
            .collect()
    }

    /// Fringe phase at a drive frequency: `(omega - omega_bar0)/(2 w1)` for
    /// the continuous drive, `(omega - omega_bar0) T / 2` for separated
    /// pulses.
    pub fn phi(&self, omega: f64) -> f64 {
        match self.mode {
            ScanMode::Rabi => (omega - self.omega_bar0) / (2.0 * self.drive_strength),
            ScanMode::Ramsey => (omega - self.omega_bar0) * self.t_or_t / 2.0,
        }
    }

    /// Dimensionless perturbation strength: `epsilon / w1` or `epsilon T`.
    pub fn delta(&self) -> f64 {
        match self.mode {
            ScanMode::Rabi => self.epsilon / self.drive_strength,
            ScanMode::Ramsey => self.epsilon * self.t_or_t,
        }
    }
}

/// One scanned frequency: exact flip/stay probabilities, the first-order
/// fringe, and the closed-form imaginary weak value (zeroed and flagged
/// where it diverges).
#[derive(Clone, Copy, Debug)]
pub struct ScanRow {
    pub omega: f64,
    pub pr_flip: f64,
    pub pr_stay: f64,
    pub pr_first_order: f64,
    pub im_weak: f64,
    pub strength: f64,
    pub diverged: bool,
}

pub fn scan(config: &ScanConfig) -> Result<Vec<ScanRow>, ScanError> {
    config.validate()?;
    let omega0 = config.omega_bar0 + config.epsilon;
    let delta = config.delta();
    let grid = config.grid();
    let cfg = *config;
    let rows = map_indexed(grid.len(), move |k| {
        let omega = grid[k];
        let u = match cfg.mode {
            ScanMode::Rabi => {
                let spec = RabiSpec::new(omega0, cfg.drive_strength, omega, 0.0, cfg.epsilon)
                    .expect("validated");
                rabi_unitary(&spec, cfg.t_or_t)
            }
            ScanMode::Ramsey => {
                let spec = RamseySpec::new(
                    omega0,
                    cfg.drive_strength,
                    omega,
                    cfg.tau.expect("validated"),
                    cfg.t_or_t,
                    0.0,
                    cfg.epsilon,
                    EpsilonRegions::FreeOnly,
                )
                .expect("validated");
                ramsey_unitary(&spec)
            }
        };
        let pre = SpinState::plus();
        let pr_flip = transition_probability(&u, &pre, &SpinState::minus());
        let pr_stay = transition_probability(&u, &pre, &SpinState::plus());
        let phi = cfg.phi(omega);
        let (im_weak, diverged) = match rabi_weak_value_im(phi, cfg.pulse_area) {
            Ok(v) => (v, false),
            Err(_) => (0.0, true),
        };
        ScanRow {
            omega,
            pr_flip,
            pr_stay,
            pr_first_order: rabi_prob_first_order(phi, cfg.pulse_area, delta),
            im_weak,
            strength: delta,
            diverged,
        }
    });
    Ok(rows)
}

pub const SCAN_CSV_HEADER: &str = "omega,pr_flip,pr_stay,pr_first_order,im_weak,strength,diverged";

pub fn render_scan_csv(rows: &[ScanRow]) -> String {
    let mut out = String::with_capacity(32 + rows.len() * 160);
    out.push_str(SCAN_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            r.omega,
            r.pr_flip,
            r.pr_stay,
            r.pr_first_order,
            r.im_weak,
            r.strength,
            u8::from(r.diverged),
        ));
    }
    out
}

pub fn write_scan_csv<W: Write>(rows: &[ScanRow], mut w: W) -> std::io::Result<()> {
    w.write_all(render_scan_csv(rows).as_bytes())
}

/// Full width at half maximum of a sampled curve with a unique strict
/// interior maximum; the two half crossings are located by linear
/// interpolation between grid points.
pub fn fwhm(points: &[(f64, f64)]) -> Result<f64, ScanError> {
    if points.len() < 3 {
        return Err(ScanError::NoPeak);
    }
    let mut m = 0usize;
    for (i, p) in points.iter().enumerate() {
        if p.1 > points[m].1 {
            m = i;
        }
    }
    let peak = points[m].1;
    if m == 0 || m == points.len() - 1 || points.iter().filter(|p| p.1 == peak).count() != 1 {
        return Err(ScanError::NoPeak);
    }
    let half = peak / 2.0;
    let cross = |a: (f64, f64), b: (f64, f64)| a.0 + (half - a.1) * (b.0 - a.0) / (b.1 - a.1);
    let left = (0..m)
        .rev()
        .find(|&i| points[i].1 <= half && points[i + 1].1 > half)
        .map(|i| cross(points[i], points[i + 1]));
    let right = (m..points.len() - 1)
        .find(|&i| points[i].1 > half && points[i + 1].1 <= half)
        .map(|i| cross(points[i + 1], points[i]));
    match (left, right) {
        (Some(l), Some(r)) => Ok(r - l),
        _ => Err(ScanError::NoPeak),
    }
}

/// Flip-probability curve of a scan, ready for [`fwhm`].
pub fn flip_curve(rows: &[ScanRow]) -> Vec<(f64, f64)> {
    rows.iter().map(|r| (r.omega, r.pr_flip)).collect()
}

/// For each strength in `deltas`: the largest gap over the frequency grid
/// between the exactly shifted fringe `fringe(phi - delta/2)` and the
/// first-order form. Grid points where the closed-form weak value diverges
/// are skipped. The gap is quadratic in `delta`.
pub fn compare_first_order_exact(
    config: &ScanConfig,
    deltas: &[f64],
) -> Result<Vec<f64>, ScanError> {
    config.validate()?;
    let area = config.pulse_area;
    let phis: Vec<f64> = config
        .grid()
        .into_iter()
        .map(|omega| config.phi(omega))
        .collect();
    Ok(deltas
        .iter()
        .map(|&d| {
            phis.iter()
                .filter(|&&phi| rabi_weak_value_im(phi, area).is_ok())
                .map(|&phi| {
                    (fringe_probability(phi - d / 2.0, area)
                        - rabi_prob_first_order(phi, area, d))
                    .abs()
                })
                .fold(0.0, f64::max)
        })
        .collect())
}

/// Count-rate slope of a fringe with contrast `alpha` and mean rate `n_bar`:
/// `dN/domega = n_bar alpha T sin((omega - omega0) T)` with `T = t_or_t` and
/// `omega0` the fully shifted resonance.
pub fn sensitivity_curve(
    config: &ScanConfig,
    alpha: f64,
    n_bar: f64,
) -> Result<Vec<(f64, f64)>, ScanError> {
    config.validate()?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ScanError::InvalidConfig {
            field: "alpha",
            reason: format!("contrast must lie in [0, 1], got {alpha}"),
        });
    }
    if !(n_bar > 0.0) {
        return Err(ScanError::InvalidConfig {
            field: "n_bar",
            reason: format!("mean count must be positive, got {n_bar}"),
        });
    }
    let omega0 = config.omega_bar0 + config.epsilon;
    let t = config.t_or_t;
    Ok(config
        .grid()
        .into_iter()
        .map(|omega| (omega, n_bar * alpha * t * ((omega - omega0) * t).sin()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn rabi_config(t_free_matched: f64) -> ScanConfig {
        // quarter-area pulse matched to a separated-pulse scan of the same
        // duration: w1 = (pi/2) / t
        let w1 = FRAC_PI_2 / t_free_matched;
        ScanConfig {
            mode: ScanMode::Rabi,
            omega_bar0: 5.0,
            drive_strength: w1,
            t_or_t: t_free_matched,
            tau: None,
            pulse_area: w1 * t_free_matched,
            omega_min: 5.0 - 3.0 / t_free_matched,
            omega_max: 5.0 + 3.0 / t_free_matched,
            steps: 2001,
            epsilon: 0.0,
        }
    }

    fn ramsey_config(t_free: f64) -> ScanConfig {
        let tau = t_free / 50.0;
        let w2 = FRAC_PI_2 / tau;
        ScanConfig {
            mode: ScanMode::Ramsey,
            omega_bar0: 5.0,
            drive_strength: w2,
            t_or_t: t_free,
            tau: Some(tau),
            pulse_area: w2 * tau,
            omega_min: 5.0 - 3.0 / t_free,
            omega_max: 5.0 + 3.0 / t_free,
            steps: 2001,
            epsilon: 0.0,
        }
    }

    #[test]
    fn validation_catches_bad_configs() {
        let mut c = rabi_config(10.0);
        c.steps = 1;
        assert!(matches!(c.validate(), Err(ScanError::InvalidConfig { field: "steps", .. })));
        let mut c = rabi_config(10.0);
        c.omega_max = c.omega_min;
        assert!(matches!(c.validate(), Err(ScanError::InvalidConfig { field: "omega_range", .. })));
        let mut c = rabi_config(10.0);
        c.pulse_area = 1.0;
        assert!(matches!(c.validate(), Err(ScanError::InvalidConfig { field: "pulse_area", .. })));
        let mut c = ramsey_config(10.0);
        c.tau = None;
        assert!(matches!(c.validate(), Err(ScanError::InvalidConfig { field: "tau", .. })));
        let mut c = rabi_config(10.0);
        c.tau = Some(1.0);
        assert!(matches!(c.validate(), Err(ScanError::InvalidConfig { field: "tau", .. })));
        assert!(rabi_config(10.0).validate().is_ok());
        assert!(ramsey_config(10.0).validate().is_ok());
    }

    #[test]
    fn probabilities_are_complementary_across_the_grid() {
        for cfg in [rabi_config(8.0), ramsey_config(8.0)] {
            let mut cfg = cfg;
            cfg.steps = 101;
            cfg.epsilon = 0.01;
            for row in scan(&cfg).unwrap() {
                assert!((row.pr_flip + row.pr_stay - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unperturbed_scan_is_symmetric_about_resonance() {
        for cfg in [rabi_config(8.0), ramsey_config(8.0)] {
            let mut cfg = cfg;
            cfg.steps = 201;
            let rows = scan(&cfg).unwrap();
            for k in 0..rows.len() {
                let mirror = &rows[rows.len() - 1 - k];
                assert!((rows[k].pr_flip - mirror.pr_flip).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn continuous_drive_matches_independent_line_shape() {
        // sin^2(Omega t) w1^2 / Omega^2 with Omega^2 = w1^2 + ((w - w0)/2)^2,
        // derived straight from the rotating-frame generator.
        let mut cfg = rabi_config(6.0);
        cfg.steps = 101;
        cfg.epsilon = 0.004;
        let omega0 = cfg.omega_bar0 + cfg.epsilon;
        for row in scan(&cfg).unwrap() {
            let half_det = (row.omega - omega0) / 2.0;
            let big = (cfg.drive_strength * cfg.drive_strength + half_det * half_det).sqrt();
            let want = (big * cfg.t_or_t).sin().powi(2)
                * (cfg.drive_strength * cfg.drive_strength)
                / (big * big);
            assert!((row.pr_flip - want).abs() < 1e-12);
        }
    }

    #[test]
    fn separated_pulse_stay_probability_is_shifted_fringe() {
        let mut cfg = ramsey_config(12.0);
        cfg.steps = 101;
        cfg.epsilon = 0.003;
        let delta = cfg.delta();
        for row in scan(&cfg).unwrap() {
            let phi = cfg.phi(row.omega);
            let want = fringe_probability(phi - delta / 2.0, cfg.pulse_area);
            assert!((row.pr_stay - want).abs() < 1e-12);
        }
    }

    #[test]
    fn half_width_of_analytic_shapes() {
        let tri: Vec<(f64, f64)> = vec![(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)];
        assert!((fwhm(&tri).unwrap() - 1.0).abs() < 1e-15);
        let monotone: Vec<(f64, f64)> = (0..5).map(|k| (k as f64, k as f64)).collect();
        assert!(matches!(fwhm(&monotone), Err(ScanError::NoPeak)));
        let plateau = vec![(0.0, 0.0), (1.0, 1.0), (2.0, 1.0), (3.0, 0.0)];
        assert!(matches!(fwhm(&plateau), Err(ScanError::NoPeak)));
    }

    #[test]
    fn line_widths_match_their_closed_forms() {
        let t = 9.0;
        let rabi_rows = scan(&rabi_config(t)).unwrap();
        let w_rabi = fwhm(&flip_curve(&rabi_rows)).unwrap();
        // Half crossing of sin^2((pi/2) sqrt(1+u^2))/(1+u^2) sits at
        // u = 0.79899 drive units; full width 4 w1 u.
        let w1 = FRAC_PI_2 / t;
        assert!(((w_rabi - 4.0 * w1 * 0.79899) / w_rabi).abs() < 1e-3);
        let ramsey_rows = scan(&ramsey_config(t)).unwrap();
        let w_ramsey = fwhm(&flip_curve(&ramsey_rows)).unwrap();
        assert!(((w_ramsey - PI / t) / w_ramsey).abs() < 1e-4);
        let ratio = w_ramsey / w_rabi;
        assert!((0.54..=0.66).contains(&ratio), "width ratio {ratio}");
    }

    #[test]
    fn first_order_residual_is_quadratic_in_strength() {
        for cfg in [rabi_config(7.0), ramsey_config(7.0)] {
            let mut cfg = cfg;
            cfg.steps = 41;
            let resid = compare_first_order_exact(&cfg, &[1e-2, 5e-3]).unwrap();
            let ratio = resid[0] / resid[1];
            assert!((3.2..=4.8).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn matched_power_of_two_scans_give_identical_residual_tables() {
        // Powers of two make phi and delta bit-identical between the modes:
        // (w - w0)/(2*2) and (w - w0)*0.5/2 round the same way.
        let rabi = ScanConfig {
            mode: ScanMode::Rabi,
            omega_bar0: 1.0,
            drive_strength: 2.0,
            t_or_t: 0.5,
            tau: None,
            pulse_area: 1.0,
            omega_min: 0.5,
            omega_max: 1.5,
            steps: 33,
            epsilon: 0.02,
        };
        let ramsey = ScanConfig {
            mode: ScanMode::Ramsey,
            omega_bar0: 1.0,
            drive_strength: 2.0,
            t_or_t: 0.5,
            tau: Some(0.5),
            pulse_area: 1.0,
            omega_min: 0.5,
            omega_max: 1.5,
            steps: 33,
            epsilon: 0.02,
        };
        assert_eq!(rabi.delta(), ramsey.delta());
        let deltas = [1e-2, 5e-3, 2.5e-3];
        let a = compare_first_order_exact(&rabi, &deltas).unwrap();
        let b = compare_first_order_exact(&ramsey, &deltas).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_layout_is_stable_and_lossless() {
        let mut cfg = rabi_config(4.0);
        cfg.steps = 5;
        let rows = scan(&cfg).unwrap();
        let text = render_scan_csv(&rows);
        let again = render_scan_csv(&scan(&cfg).unwrap());
        assert_eq!(text, again);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), SCAN_CSV_HEADER);
        let body: Vec<&str> = lines.collect();
        assert_eq!(body.len(), rows.len());
        assert!(!text.contains('\r'));
        assert!(text.ends_with('\n'));
        for (line, row) in body.iter().zip(&rows) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 7);
            assert_eq!(fields[0].parse::<f64>().unwrap(), row.omega);
            assert_eq!(fields[1].parse::<f64>().unwrap(), row.pr_flip);
            assert_eq!(fields[6], if row.diverged { "1" } else { "0" });
        }
    }

    #[test]
    fn divergent_center_point_is_flagged_and_zeroed() {
        // Quarter-area scan with an odd grid puts phi = 0 in the middle,
        // where the closed-form weak value blows up.
        let mut cfg = rabi_config(4.0);
        cfg.steps = 5;
        let rows = scan(&cfg).unwrap();
        assert!(rows[2].diverged);
        assert_eq!(rows[2].im_weak, 0.0);
        assert!(!rows[0].diverged && !rows[4].diverged);
    }

    #[test]
    fn sensitivity_slope_matches_finite_difference() {
        let mut cfg = ramsey_config(2.0);
        cfg.steps = 21;
        cfg.epsilon = 0.05;
        let (alpha, n_bar) = (0.6, 500.0);
        let omega0 = cfg.omega_bar0 + cfg.epsilon;
        let t = cfg.t_or_t;
        let count = |omega: f64| n_bar * (1.0 - alpha * ((omega - omega0) * t).cos());
        let h = 1e-5;
        for (omega, slope) in sensitivity_curve(&cfg, alpha, n_bar).unwrap() {
            let fd = (count(omega + h) - count(omega - h)) / (2.0 * h);
            assert!((slope - fd).abs() <= 1e-8 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn sensitivity_preconditions() {
        let cfg = ramsey_config(2.0);
        assert!(matches!(
            sensitivity_curve(&cfg, 1.5, 100.0),
            Err(ScanError::InvalidConfig { field: "alpha", .. })
        ));
        assert!(matches!(
            sensitivity_curve(&cfg, 0.5, 0.0),
            Err(ScanError::InvalidConfig { field: "n_bar", .. })
        ));
    }

    proptest! {
        #[test]
        fn grid_is_uniform_and_inclusive(
            steps in 2usize..50,
            lo in -3.0f64..0.0,
            width in 0.1f64..5.0,
        ) {
            let mut cfg = rabi_config(4.0);
            cfg.steps = steps;
            cfg.omega_min = lo;
            cfg.omega_max = lo + width;
            let g = cfg.grid();
            prop_assert_eq!(g.len(), steps);
            prop_assert!((g[0] - lo).abs() < 1e-12);
            prop_assert!((g[steps - 1] - (lo + width)).abs() < 1e-12);
            for w in g.windows(2) {
                prop_assert!((w[1] - w[0] - width / (steps - 1) as f64).abs() < 1e-9);
            }
        }

        #[test]
        fn strength_ratio_between_modes_is_drive_times_time(
            t_free in 1.0f64..100.0,
            eps in 1e-6f64..1e-2,
        ) {
            let mut rabi = rabi_config(t_free);
            rabi.epsilon = eps;
            let mut ramsey = ramsey_config(t_free);
            ramsey.epsilon = eps;
            let want = rabi.drive_strength * t_free;
            let got = ramsey.delta() / rabi.delta();
            prop_assert!(((got - want) / want).abs() <= 1e-12);
        }
    }
}
