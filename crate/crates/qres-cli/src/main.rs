//! `qres`: frequency scans, weak-value records, counting-run simulation and
//! analysis, and the built-in verification suite. Diagnostics go to stderr;
//! data goes to the requested output files (or stdout for `weak`).

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

mod config;

use config::{apply_overrides, edm_config_from, parse_text, scan_config_from, CliError};
use qres_core::edm::{
    estimate_edm, fit_run, parse_cycles_csv, render_cycles_csv, simulate_run, uncertainties,
    weak_value_from_run, EdmError, RunFit,
};
use qres_core::scan::{render_scan_csv, scan, ScanError};
use qres_core::verify;
use qres_core::weak::{fringe_probability, rabi_weak_value_im, ramsey_sigma3_weak_value};

const EXIT_HELP: &str = "\
Exit codes:
  0  success
  1  I/O failure, or `verify` found failing checks
  2  invalid arguments or configuration
  3  numerical non-convergence or insufficient data

Config files are flat `key = value` lines (strings in double quotes, numbers,
booleans, arrays like [a, b]); `#` starts a comment. Repeatable --set
KEY=VALUE flags are applied after the file, so they win. The QRES_THREADS
environment variable caps internal parallelism; results do not depend on it.";

#[derive(Parser)]
#[command(name = "qres", version, about = "Two-level resonance and counting-experiment toolkit", after_help = EXIT_HELP)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Scan transition probabilities and weak-value diagnostics over a
    /// frequency grid, writing one CSV row per grid point.
    Scan {
        /// Scan configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Override a config key, e.g. --set steps=2001 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Print one weak-value record as JSON on stdout.
    Weak {
        /// Fringe phase at the working point.
        #[arg(long)]
        phi: f64,
        /// Pulse area (continuous drive) or second-pulse area (separated).
        #[arg(long)]
        area: f64,
        #[arg(long, value_enum)]
        mode: WeakMode,
    },
    /// Simulate a seeded counting run and write the cycle table as CSV.
    EdmSimulate {
        /// Run configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Override a config key (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Override the run seed (applied after --set).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a cycle table, estimate the dipole moment, and write the
    /// analysis as JSON.
    EdmAnalyze {
        /// Cycle table produced by edm-simulate (or compatible).
        #[arg(long)]
        cycles: PathBuf,
        /// Run configuration file (same shape as for edm-simulate).
        #[arg(long)]
        config: PathBuf,
        /// Output JSON path.
        #[arg(long)]
        out: PathBuf,
        /// Override a config key (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run the built-in verification suite and print a PASS/FAIL table.
    Verify {
        /// Only run checks whose name contains this substring.
        #[arg(long)]
        filter: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum WeakMode {
    Rabi,
    Ramsey,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<u8, CliError> {
    match cmd {
        Cmd::Scan { config, out, set } => cmd_scan(&config, &out, &set),
        Cmd::Weak { phi, area, mode } => cmd_weak(phi, area, mode),
        Cmd::EdmSimulate {
            config,
            out,
            set,
            seed,
        } => cmd_simulate(&config, &out, &set, seed),
        Cmd::EdmAnalyze {
            cycles,
            config,
            out,
            set,
        } => cmd_analyze(&cycles, &config, &out, &set),
        Cmd::Verify { filter } => cmd_verify(filter.as_deref()),
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, data: &str) -> Result<(), CliError> {
    fs::write(path, data).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_map(path: &Path, sets: &[String]) -> Result<std::collections::BTreeMap<String, config::Value>, CliError> {
    let mut map = parse_text(&read_file(path)?).map_err(|e| match e {
        CliError::Parse { line, reason } => CliError::Parse {
            line,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })?;
    apply_overrides(&mut map, sets)?;
    Ok(map)
}

fn scan_error_to_cli(e: ScanError) -> CliError {
    match e {
        ScanError::InvalidConfig { field, reason } => CliError::Validation {
            key: field.to_string(),
            reason,
        },
        other => CliError::Numerical(other.to_string()),
    }
}

fn cmd_scan(config_path: &Path, out: &Path, sets: &[String]) -> Result<u8, CliError> {
    let cfg = scan_config_from(load_map(config_path, sets)?)?;
    let rows = scan(&cfg).map_err(scan_error_to_cli)?;
    write_file(out, &render_scan_csv(&rows))?;
    eprintln!("wrote {} rows to {}", rows.len(), out.display());
    Ok(0)
}

fn cmd_weak(phi: f64, area: f64, mode: WeakMode) -> Result<u8, CliError> {
    let im = rabi_weak_value_im(phi, area).ok();
    let mut record = json!({
        "mode": match mode { WeakMode::Rabi => "rabi", WeakMode::Ramsey => "ramsey" },
        "phi": phi,
        "area": area,
        "fringe_probability": fringe_probability(phi, area),
        "im_weak": im,
        "diverged": im.is_none(),
    });
    if let WeakMode::Ramsey = mode {
        // The separated-pulse arrangement also carries the complex
        // level-population weak value.
        let s3 = ramsey_sigma3_weak_value(area, phi).ok();
        record["sigma3_weak_re"] = s3.map(|v| v.re).into();
        record["sigma3_weak_im"] = s3.map(|v| v.im).into();
    }
    println!("{}", serde_json::to_string_pretty(&record).expect("serializable record"));
    Ok(0)
}

fn cmd_simulate(
    config_path: &Path,
    out: &Path,
    sets: &[String],
    seed: Option<u64>,
) -> Result<u8, CliError> {
    let mut cfg = edm_config_from(load_map(config_path, sets)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let records = simulate_run(&cfg).map_err(|e| CliError::Numerical(e.to_string()))?;
    write_file(out, &render_cycles_csv(&records))?;
    eprintln!(
        "wrote {} cycles (seed {}) to {}",
        records.len(),
        cfg.seed,
        out.display()
    );
    Ok(0)
}

fn fit_json(fit: &RunFit) -> serde_json::Value {
    json!({
        "n_bar": fit.n_bar_fit,
        "alpha": fit.alpha_fit,
        "phi": fit.phi_fit,
        "residual": fit.residual,
        "converged": fit.converged,
    })
}

fn cmd_analyze(
    cycles_path: &Path,
    config_path: &Path,
    out: &Path,
    sets: &[String],
) -> Result<u8, CliError> {
    let cfg = edm_config_from(load_map(config_path, sets)?)?;
    let records = parse_cycles_csv(&read_file(cycles_path)?).map_err(|e| match e {
        EdmError::Csv { line, reason } => CliError::Parse {
            line,
            reason: format!("{}: {reason}", cycles_path.display()),
        },
        other => CliError::Numerical(other.to_string()),
    })?;
    let fits = fit_run(&records, cfg.t_free).map_err(|e| CliError::Numerical(e.to_string()))?;

    let estimate = estimate_edm(&records, &fits, &cfg);
    let n_total: f64 = records.iter().map(|r| (r.n_plus + r.n_minus) as f64).sum();
    let alpha = (fits.up.alpha_fit + fits.down.alpha_fit) / 2.0;
    let phi_bar = (fits.up.phi_fit + fits.down.phi_fit) / 2.0;
    let mut distinct: Vec<f64> = {
        let mut bits: Vec<u64> = records.iter().map(|r| r.delta_omega.to_bits()).collect();
        bits.sort_unstable();
        bits.dedup();
        bits.into_iter().map(f64::from_bits).collect()
    };
    distinct.sort_by(f64::total_cmp);
    // Mean-phase fit shared by both channels for the weak-value readout.
    let mean_fit = RunFit {
        phi_fit: phi_bar,
        ..fits.up
    };
    let im_weak_values: Vec<Option<f64>> = distinct
        .iter()
        .map(|&d| weak_value_from_run(&mean_fit, d, cfg.t_free).ok())
        .collect();
    let phi_point = (distinct[0] - phi_bar) * cfg.t_free / 2.0;
    let unc = uncertainties(alpha, cfg.e_field, cfg.t_free, n_total, phi_point, None);

    let analysis = json!({
        "spin_up": fit_json(&fits.up),
        "spin_down": fit_json(&fits.down),
        "edm_estimate_ecm": estimate.as_ref().ok().map(|e| e.d_ecm),
        "sigma_d_ecm": unc.sigma_d,
        "sigma_phi_t": unc.sigma_phi_t,
        "im_weak_values": im_weak_values,
        "sigma_im_weak": unc.sigma_im_weak,
    });
    write_file(out, &format!("{}\n", serde_json::to_string_pretty(&analysis).expect("serializable analysis")))?;
    eprintln!("wrote analysis to {}", out.display());

    if let Err(e) = estimate {
        eprintln!("error: {e}");
        return Ok(3);
    }
    if !(fits.up.converged && fits.down.converged) {
        eprintln!("error: fringe fit did not converge; analysis holds the best iterate");
        return Ok(3);
    }
    Ok(0)
}

fn cmd_verify(filter: Option<&str>) -> Result<u8, CliError> {
    let outcomes = verify::run(filter);
    if outcomes.is_empty() {
        return Err(CliError::Validation {
            key: "filter".into(),
            reason: format!("no check name contains '{}'", filter.unwrap_or_default()),
        });
    }
    let mut failed = 0usize;
    for o in &outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("{status}  {:<26} {}", o.name, o.detail);
        if !o.passed {
            failed += 1;
        }
    }
    if failed == 0 {
        eprintln!("all {} checks passed", outcomes.len());
        Ok(0)
    } else {
        eprintln!("{failed} of {} checks failed", outcomes.len());
        Ok(1)
    }
}
