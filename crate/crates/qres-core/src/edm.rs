//! Counting experiment around a separated-pulse fringe: simulate Poisson
//! counts in two spin channels under a field-direction schedule, fit the
//! fringe per channel, extract per-cycle phase shifts, and convert the
//! field-odd part of those shifts into an electric-dipole-moment estimate
//! with counting-statistics uncertainties.
//!
//! Conventions. One cycle addresses detuning `delta_omega` relative to the
//! unperturbed resonance; the fringe phase is `2 phi = delta_omega * T`. A
//! field parallel to the polarizing direction (`field_sign = +1`) shifts the
//! resonance by `-epsilon`, antiparallel by `+epsilon`, with `epsilon` the
//! angular-frequency shift of the dipole coupling. Spin-up counts follow
//! `n_bar (1 - alpha cos(2 phi - eps_arg))`, spin-down the opposite sign,
//! `alpha` the fringe contrast left after polarization and detector errors.

use crate::constants::{edm_from_shift, shift_from_edm};
use crate::dynamics::{
    ramsey_unitary, transition_probability, EpsilonRegions, RamseySpec, SpinState,
};
use crate::pool::map_indexed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EdmError {
    #[error("invalid {field}: {reason}")]
    InvalidConfig {
        field: &'static str,
        reason: String,
    },
    #[error("need at least 4 cycles over 3 distinct detunings, got {cycles} over {distinct}")]
    InsufficientData { cycles: usize, distinct: usize },
    #[error("normalized count deviation {u} outside [-1, 1]; contrast too low or fit wrong")]
    OutOfRange { u: f64 },
    #[error("cycles for field sign {0} all missing or unusable")]
    MissingFieldSign(i8),
    #[error("fitted phase sits on the fringe zero; weak value diverges")]
    Diverged,
    #[error("cycles csv line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

/// Initial polarization `p_i` and detector flip probability `eps_f`; the
/// surviving fringe contrast is `alpha = p_i (1 - 2 eps_f)`.
#[derive(Clone, Copy, Debug)]
pub struct ImperfectionModel {
    pub p_i: f64,
    pub eps_f: f64,
}

impl ImperfectionModel {
    pub fn new(p_i: f64, eps_f: f64) -> Result<Self, EdmError> {
        if !(0.0..=1.0).contains(&p_i) {
            return Err(EdmError::InvalidConfig {
                field: "p_i",
                reason: format!("polarization must lie in [0, 1], got {p_i}"),
            });
        }
        if !(0.0..=1.0).contains(&eps_f) {
            return Err(EdmError::InvalidConfig {
                field: "eps_f",
                reason: format!("flip probability must lie in [0, 1], got {eps_f}"),
            });
        }
        Ok(ImperfectionModel { p_i, eps_f })
    }

    pub fn alpha(&self) -> f64 {
        self.p_i * (1.0 - 2.0 * self.eps_f)
    }
}

/// Detector channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    /// Sign of the cosine term in this channel's mean counts.
    fn sign(self) -> f64 {
        match self {
            Spin::Up => -1.0,
            Spin::Down => 1.0,
        }
    }
}

/// Per-particle detection probability `(1 -/+ alpha cos(2 phi - eps_t))/2`
/// for the up/down channel.
pub fn detection_probability(model: &ImperfectionModel, phi: f64, eps_t: f64, spin: Spin) -> f64 {
    0.5 * (1.0 + spin.sign() * model.alpha() * (2.0 * phi - eps_t).cos())
}

/// Same probability assembled from first principles: a partially polarized
/// mixture propagated through the exact separated-pulse sequence, read out
/// by a detector that flips the answer with probability `eps_f`. Kept as an
/// independent oracle for [`detection_probability`].
pub fn detection_probability_povm(
    model: &ImperfectionModel,
    phi: f64,
    eps_t: f64,
    spin: Spin,
) -> f64 {
    // Canonical sequence with T = 1: detuning 2 phi, perturbation eps_t,
    // quarter-area pulses.
    let spec = RamseySpec::new(
        eps_t,
        FRAC_PI_2,
        2.0 * phi,
        1.0,
        1.0,
        0.0,
        eps_t,
        EpsilonRegions::FreeOnly,
    )
    .expect("canonical sequence is valid");
    let u = ramsey_unitary(&spec);
    let q = transition_probability(&u, &SpinState::plus(), &SpinState::minus());
    let arrive_up = (1.0 + model.p_i) / 2.0;
    let arrive_down = (1.0 - model.p_i) / 2.0;
    let true_up = arrive_up * (1.0 - q) + arrive_down * q;
    let true_down = arrive_up * q + arrive_down * (1.0 - q);
    let p_up = (1.0 - model.eps_f) * true_up + model.eps_f * true_down;
    match spin {
        Spin::Up => p_up,
        Spin::Down => 1.0 - p_up,
    }
}

/// First order in `eps_t`: `(1 -/+ alpha (cos 2phi + eps_t sin 2phi))/2`.
/// At `eps_t = 0` this reproduces [`detection_probability`] bit for bit.
pub fn first_order_detection(
    model: &ImperfectionModel,
    phi: f64,
    eps_t: f64,
    spin: Spin,
) -> f64 {
    let (s2, c2) = (2.0 * phi).sin_cos();
    0.5 * (1.0 + spin.sign() * model.alpha() * (c2 + eps_t * s2))
}

/// Full counting-run description. Times are seconds, frequencies rad/s,
/// `d_n` in e cm, `e_field` in V/cm. `delta_omega_list` is walked cyclically
/// by cycle index, `field_pattern` likewise; `n_bar` is the mean counts per
/// channel per cycle at zero contrast.
#[derive(Clone, Debug)]
pub struct EdmConfig {
    pub omega_bar0: f64,
    pub d_n: f64,
    pub e_field: f64,
    pub omega2_tau: f64,
    pub t_free: f64,
    pub tau: f64,
    pub delta_omega_list: Vec<f64>,
    pub field_pattern: Vec<i8>,
    pub n_bar: f64,
    pub cycles_per_run: usize,
    pub seed: u64,
    pub imperfection: ImperfectionModel,
}

/// Working points `+/- {pi/2, pi/4, 3pi/4} / T`; every detuning visited at
/// both field signs once per twelve cycles under
/// [`EdmConfig::default_field_pattern`].
pub fn default_delta_omegas(t_free: f64) -> Vec<f64> {
    [
        FRAC_PI_2,
        -FRAC_PI_2,
        FRAC_PI_4,
        -FRAC_PI_4,
        3.0 * FRAC_PI_4,
        -3.0 * FRAC_PI_4,
    ]
    .iter()
    .map(|x| x / t_free)
    .collect()
}

impl EdmConfig {
    pub fn default_field_pattern() -> Vec<i8> {
        let mut p = vec![1i8; 6];
        p.extend(std::iter::repeat(-1i8).take(6));
        p
    }

    pub fn validate(&self) -> Result<(), EdmError> {
        let bad = |field: &'static str, reason: String| {
            Err(EdmError::InvalidConfig { field, reason })
        };
        if (self.omega2_tau - FRAC_PI_2).abs() > 1e-12 {
            return bad(
                "omega2_tau",
                format!(
                    "phase extraction assumes quarter-area pulses (pi/2), got {}",
                    self.omega2_tau
                ),
            );
        }
        if !(self.t_free > 0.0) {
            return bad("t_free", format!("must be positive, got {}", self.t_free));
        }
        if !(self.tau > 0.0) {
            return bad("tau", format!("must be positive, got {}", self.tau));
        }
        if !(self.e_field > 0.0) {
            return bad("e_field", format!("must be positive, got {}", self.e_field));
        }
        if !(self.n_bar > 0.0) {
            return bad("n_bar", format!("must be positive, got {}", self.n_bar));
        }
        if self.cycles_per_run == 0 {
            return bad("cycles_per_run", "need at least one cycle".into());
        }
        if self.delta_omega_list.is_empty() {
            return bad("delta_omega_list", "need at least one detuning".into());
        }
        if self.field_pattern.is_empty() {
            return bad("field_pattern", "need at least one field sign".into());
        }
        if let Some(s) = self.field_pattern.iter().find(|&&s| s != 1 && s != -1) {
            return bad("field_pattern", format!("entries must be +1 or -1, got {s}"));
        }
        ImperfectionModel::new(self.imperfection.p_i, self.imperfection.eps_f)?;
        Ok(())
    }

    /// Dipole-induced angular-frequency shift for this configuration.
    pub fn epsilon(&self) -> f64 {
        shift_from_edm(self.d_n, self.e_field)
    }
}

/// Counts of one cycle: detuning, field direction, and both channels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleRecord {
    pub j: u64,
    pub delta_omega: f64,
    pub field_sign: i8,
    pub n_plus: u64,
    pub n_minus: u64,
}

fn draw_poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    if lambda > 0.0 {
        Poisson::new(lambda).expect("positive finite mean").sample(rng) as u64
    } else {
        0
    }
}

/// Simulates cycle `j`. Each cycle draws from its own counter-mode RNG
/// stream of the run seed, so records are reproducible individually and
/// independent of evaluation order.
pub fn simulate_cycle(config: &EdmConfig, j: usize) -> CycleRecord {
    let delta_omega = config.delta_omega_list[j % config.delta_omega_list.len()];
    let s = config.field_pattern[j % config.field_pattern.len()];
    let phi = delta_omega * config.t_free / 2.0;
    let eps_arg = -(s as f64) * config.epsilon() * config.t_free;
    let lam = |spin| 2.0 * config.n_bar * detection_probability(&config.imperfection, phi, eps_arg, spin);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(j as u64);
    let n_plus = draw_poisson(&mut rng, lam(Spin::Up));
    let n_minus = draw_poisson(&mut rng, lam(Spin::Down));
    CycleRecord {
        j: j as u64,
        delta_omega,
        field_sign: s,
        n_plus,
        n_minus,
    }
}

pub fn simulate_run(config: &EdmConfig) -> Result<Vec<CycleRecord>, EdmError> {
    config.validate()?;
    Ok(map_indexed(config.cycles_per_run, |j| simulate_cycle(config, j)))
}

/// One channel's fringe fit `N = n_bar (1 -/+ alpha cos((delta_omega - Phi) T))`.
#[derive(Clone, Copy, Debug)]
pub struct RunFit {
    pub n_bar_fit: f64,
    pub alpha_fit: f64,
    pub phi_fit: f64,
    /// Root-mean-square count residual at the returned parameters.
    pub residual: f64,
    pub converged: bool,
}

/// Both channel fits of a run.
#[derive(Clone, Copy, Debug)]
pub struct RunFits {
    pub up: RunFit,
    pub down: RunFit,
}

const FIT_PHI_GRID: usize = 256;
const FIT_MAX_ITER: usize = 50;

fn fit_channel(deltas: &[f64], counts: &[f64], t: f64, channel_sign: f64) -> RunFit {
    let n = deltas.len() as f64;
    // Coarse phase grid; at each candidate the amplitude problem is linear.
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0); // (sse, n_bar, alpha, phi)
    for g in 0..FIT_PHI_GRID {
        let phi = -PI / t + (g as f64) * (2.0 * PI / t) / FIT_PHI_GRID as f64;
        let c: Vec<f64> = deltas.iter().map(|d| ((d - phi) * t).cos()).collect();
        let (sum_c, sum_cc) = c.iter().fold((0.0, 0.0), |(s, ss), x| (s + x, ss + x * x));
        let (sum_n, sum_cn) = counts
            .iter()
            .zip(&c)
            .fold((0.0, 0.0), |(s, sc), (x, ci)| (s + x, sc + x * ci));
        let det = n * sum_cc - sum_c * sum_c;
        let (a, b) = if det.abs() > 1e-300 {
            let a = (sum_n * sum_cc - sum_c * sum_cn) / det;
            let b = (n * sum_cn - sum_c * sum_n) / det;
            // The channel fixes the sign of the cosine coefficient.
            if b * channel_sign < 0.0 {
                (sum_n / n, 0.0)
            } else {
                (a, b)
            }
        } else {
            (sum_n / n, 0.0)
        };
        let sse: f64 = counts
            .iter()
            .zip(&c)
            .map(|(x, ci)| (x - a - b * ci).powi(2))
            .sum();
        if sse < best.0 {
            let alpha = if a.abs() > 0.0 { (b / a) * channel_sign } else { 0.0 };
            best = (sse, a, alpha.clamp(0.0, 1.05), phi);
        }
    }
    let (_, mut n_bar, mut alpha, mut phi) = best;

    let mut converged = false;
    for _ in 0..FIT_MAX_ITER {
        // Gauss-Newton on (n_bar, alpha, phi).
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for (d, x) in deltas.iter().zip(counts) {
            let (sin_t, cos_t) = ((d - phi) * t).sin_cos();
            let m = n_bar * (1.0 + channel_sign * alpha * cos_t);
            let jrow = [
                1.0 + channel_sign * alpha * cos_t,
                channel_sign * n_bar * cos_t,
                channel_sign * n_bar * alpha * t * sin_t,
            ];
            let r = x - m;
            for a_i in 0..3 {
                jtr[a_i] += jrow[a_i] * r;
                for b_i in 0..3 {
                    jtj[a_i][b_i] += jrow[a_i] * jrow[b_i];
                }
            }
        }
        let Some(step) = solve3(jtj, jtr) else {
            break;
        };
        n_bar += step[0];
        alpha = (alpha + step[1]).clamp(0.0, 1.05);
        phi += step[2];
        let p = [n_bar, alpha, phi];
        if step
            .iter()
            .zip(&p)
            .all(|(s, v)| s.abs() <= 1e-12 * (1.0 + v.abs()))
        {
            converged = true;
            break;
        }
    }

    // Wrap the phase into [-pi/T, pi/T).
    let period = 2.0 * PI / t;
    phi -= period * (phi / period + 0.5).floor();

    let sse: f64 = deltas
        .iter()
        .zip(counts)
        .map(|(d, x)| {
            let m = n_bar * (1.0 + channel_sign * alpha * ((d - phi) * t).cos());
            (x - m).powi(2)
        })
        .sum();
    RunFit {
        n_bar_fit: n_bar,
        alpha_fit: alpha,
        phi_fit: phi,
        residual: (sse / n).sqrt(),
        converged,
    }
}

/// Gaussian elimination with partial pivoting for the 3x3 normal equations.
fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0f64; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in row + 1..3 {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    Some(x)
}

/// Fits both channels of a run. Fitting three parameters needs at least
/// four cycles over at least three distinct detunings.
pub fn fit_run(cycles: &[CycleRecord], t_free: f64) -> Result<RunFits, EdmError> {
    let distinct = {
        let mut bits: Vec<u64> = cycles.iter().map(|c| c.delta_omega.to_bits()).collect();
        bits.sort_unstable();
        bits.dedup();
        bits.len()
    };
    if cycles.len() < 4 || distinct < 3 {
        return Err(EdmError::InsufficientData {
            cycles: cycles.len(),
            distinct,
        });
    }
    let deltas: Vec<f64> = cycles.iter().map(|c| c.delta_omega).collect();
    let ups: Vec<f64> = cycles.iter().map(|c| c.n_plus as f64).collect();
    let downs: Vec<f64> = cycles.iter().map(|c| c.n_minus as f64).collect();
    Ok(RunFits {
        up: fit_channel(&deltas, &ups, t_free, Spin::Up.sign()),
        down: fit_channel(&deltas, &downs, t_free, Spin::Down.sign()),
    })
}

/// Tolerance on the normalized count deviation before a cycle is declared
/// inconsistent with the fitted fringe (statistical overshoot past the
/// turning points is clamped, gross overshoot is an error).
const U_RANGE_SLACK: f64 = 1e-9;

/// Inverts one cycle's counts through the fitted fringe to the cycle's
/// apparent frequency shift relative to the fit. Of the two arccos
/// branches, the one with the smaller shift magnitude is physical at the
/// working points used here.
pub fn extract_cycle_phase(
    cycle: &CycleRecord,
    fit: &RunFit,
    spin: Spin,
    t_free: f64,
) -> Result<f64, EdmError> {
    let n = match spin {
        Spin::Up => cycle.n_plus,
        Spin::Down => cycle.n_minus,
    } as f64;
    let u_raw = (n - fit.n_bar_fit) / (fit.n_bar_fit * fit.alpha_fit);
    // In the up channel counts sit below the mean when the cosine is
    // positive, so the deviation needs the opposite sign.
    let u = spin.sign() * u_raw;
    if !(u.abs() <= 1.0 + U_RANGE_SLACK) {
        return Err(EdmError::OutOfRange { u });
    }
    let a = u.clamp(-1.0, 1.0).acos();
    let base = cycle.delta_omega - fit.phi_fit;
    let c1 = base - a / t_free;
    let c2 = base + a / t_free;
    Ok(if c1.abs() <= c2.abs() { c1 } else { c2 })
}

/// Field-odd shift and the dipole moment it implies.
#[derive(Clone, Copy, Debug)]
pub struct EdmEstimate {
    /// Half the difference of mean apparent shifts, antiparallel minus
    /// parallel; common fit offsets cancel here.
    pub shift: f64,
    pub d_ecm: f64,
    pub cycles_used: usize,
}

/// Averages per-cycle shifts over both channels and both field groups.
/// Cycles where either channel's inversion is out of range are dropped.
pub fn estimate_edm(
    records: &[CycleRecord],
    fits: &RunFits,
    config: &EdmConfig,
) -> Result<EdmEstimate, EdmError> {
    let mut sum = [0.0f64; 2]; // [parallel, antiparallel]
    let mut cnt = [0usize; 2];
    for rec in records {
        let up = extract_cycle_phase(rec, &fits.up, Spin::Up, config.t_free);
        let down = extract_cycle_phase(rec, &fits.down, Spin::Down, config.t_free);
        let (Ok(eu), Ok(ed)) = (up, down) else {
            continue;
        };
        let idx = if rec.field_sign == 1 { 0 } else { 1 };
        sum[idx] += 0.5 * (eu + ed);
        cnt[idx] += 1;
    }
    for (idx, sign) in [(0usize, 1i8), (1, -1)] {
        if cnt[idx] == 0 {
            return Err(EdmError::MissingFieldSign(sign));
        }
    }
    let mean_par = sum[0] / cnt[0] as f64;
    let mean_anti = sum[1] / cnt[1] as f64;
    let shift = (mean_anti - mean_par) / 2.0;
    Ok(EdmEstimate {
        shift,
        d_ecm: edm_from_shift(shift, config.e_field),
        cycles_used: cnt[0] + cnt[1],
    })
}

/// Imaginary weak value implied by a fitted fringe at one working point,
/// `cot((delta_omega - Phi) T / 2)`.
pub fn weak_value_from_run(fit: &RunFit, delta_omega: f64, t_free: f64) -> Result<f64, EdmError> {
    let half = (delta_omega - fit.phi_fit) * t_free / 2.0;
    let s = half.sin();
    if s.abs() < 1e-150 {
        return Err(EdmError::Diverged);
    }
    Ok(half.cos() / s)
}

/// Counting-limited uncertainties. `n_total` is the total number of counts
/// entering the phase estimate; the phase uncertainty `sigma(Phi T) =
/// 1/(alpha sqrt(N))` can be overridden by a measured spread.
#[derive(Clone, Copy, Debug)]
pub struct UncertaintyReport {
    pub sigma_phi_t: f64,
    pub sigma_d: f64,
    pub sigma_im_weak: f64,
}

pub fn uncertainties(
    alpha: f64,
    e_field: f64,
    t_free: f64,
    n_total: f64,
    phi: f64,
    sigma_phi_t_override: Option<f64>,
) -> UncertaintyReport {
    let sigma_phi_t = sigma_phi_t_override.unwrap_or_else(|| 1.0 / (alpha * n_total.sqrt()));
    let sp = phi.sin();
    UncertaintyReport {
        sigma_phi_t,
        sigma_d: edm_from_shift(sigma_phi_t / t_free, e_field),
        sigma_im_weak: sigma_phi_t / (sp * sp),
    }
}

pub const CYCLES_CSV_HEADER: &str = "j,delta_omega,field_sign,n_plus,n_minus";

pub fn render_cycles_csv(records: &[CycleRecord]) -> String {
    let mut out = String::with_capacity(32 + records.len() * 64);
    out.push_str(CYCLES_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{:.16e},{},{},{}\n",
            r.j, r.delta_omega, r.field_sign, r.n_plus, r.n_minus
        ));
    }
    out
}

pub fn write_cycles_csv<W: Write>(records: &[CycleRecord], mut w: W) -> std::io::Result<()> {
    w.write_all(render_cycles_csv(records).as_bytes())
}

pub fn parse_cycles_csv(text: &str) -> Result<Vec<CycleRecord>, EdmError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first == CYCLES_CSV_HEADER => {}
        Some((_, first)) => {
            return Err(EdmError::Csv {
                line: 1,
                reason: format!("expected header '{CYCLES_CSV_HEADER}', got '{first}'"),
            })
        }
        None => {
            return Err(EdmError::Csv {
                line: 1,
                reason: "empty file".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(EdmError::Csv {
                line: lineno,
                reason: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let err = |what: &str, v: &str| EdmError::Csv {
            line: lineno,
            reason: format!("bad {what} '{v}'"),
        };
        let j = fields[0].parse().map_err(|_| err("cycle index", fields[0]))?;
        let delta_omega = fields[1].parse().map_err(|_| err("delta_omega", fields[1]))?;
        let field_sign: i8 = fields[2].parse().map_err(|_| err("field_sign", fields[2]))?;
        if field_sign != 1 && field_sign != -1 {
            return Err(err("field_sign", fields[2]));
        }
        let n_plus = fields[3].parse().map_err(|_| err("n_plus", fields[3]))?;
        let n_minus = fields[4].parse().map_err(|_| err("n_minus", fields[4]))?;
        out.push(CycleRecord {
            j,
            delta_omega,
            field_sign,
            n_plus,
            n_minus,
        });
    }
    Ok(out)
}
