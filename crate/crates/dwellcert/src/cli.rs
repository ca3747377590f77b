//! Batch front-end: certify systems, compute dwell bounds, run and sweep
//! simulations, validate signals, and emit JSON/CSV/SVG artifacts.
//!
//! Exit-code contract: 0 success/feasible, 2 well-formed but
//! infeasible/outside-the-class, 1 input or runtime error (mapped by the
//! binary from the error variant of each command).

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;
use thiserror::Error;

use crate::cert::{
    certify, check_certificate, Certificate, CertifyOutcome, SearchOptions, Variant,
};
use crate::model::{ModelError, SwitchedSystem};
use crate::plot::trace_svg;
use crate::signals::{
    periodic_signal, random_dwell_signal, validate_dwell, SignalError, SwitchingSignal,
};
use crate::sim::{
    estimate_decay, simulate_with, sine_profile, write_state_csvs, write_trace_csv, DecayFit,
    GridSpec, SimError, SimOptions, Trace,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Model(#[from] ModelError),
    #[error("{0}")]
    Cert(#[from] crate::cert::CertError),
    #[error("{0}")]
    Sim(#[from] SimError),
    #[error("{0}")]
    Signal(#[from] SignalError),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A scenario: the system plus whatever the subcommands need.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Inline system object or a path to a system JSON file.
    pub system: serde_json::Value,
    #[serde(default)]
    pub variant: Option<String>,
    #[serde(default)]
    pub search: Option<SearchOptions>,
    #[serde(default)]
    pub signal: Option<SignalSpec>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    /// Path to a certificate JSON used to trace the Lyapunov functional.
    #[serde(default)]
    pub certificate: Option<String>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub out: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalSpec {
    Periodic {
        period: f64,
        cycle: Vec<usize>,
        horizon: f64,
    },
    RandomDwell {
        tau_d: f64,
        #[serde(default = "default_n0")]
        n0: usize,
        horizon: f64,
        #[serde(default)]
        mode_count: Option<usize>,
    },
    File(String),
    Explicit(SwitchingSignal),
}

fn default_n0() -> usize {
    1
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct GridConfig {
    #[serde(default = "default_n_x")]
    pub n_x: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default)]
    pub snapshot_stride: usize,
}

fn default_n_x() -> usize {
    201
}
fn default_cfl() -> f64 {
    0.9
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n_x: default_n_x(),
            cfl: default_cfl(),
            snapshot_stride: 0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSpec {
    Sine { wavenumber: usize },
    Values(Vec<Vec<f64>>),
}

#[derive(Debug, Deserialize)]
pub struct SweepConfig {
    #[serde(default = "default_parameter")]
    pub parameter: String,
    pub range: [f64; 2],
    pub steps: usize,
}

fn default_parameter() -> String {
    "period".into()
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ScenarioConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok((cfg, base))
    }

    pub fn system(&self, base: &Path) -> Result<SwitchedSystem, CliError> {
        let text = match &self.system {
            serde_json::Value::String(rel) => std::fs::read_to_string(base.join(rel))?,
            other => other.to_string(),
        };
        Ok(SwitchedSystem::from_json(&text)?)
    }

    pub fn variant(&self, override_: Option<&str>) -> Result<Variant, CliError> {
        let name = override_
            .map(str::to_string)
            .or_else(|| self.variant.clone())
            .ok_or_else(|| CliError::Config("no variant given (flag or config)".into()))?;
        name.parse().map_err(CliError::Config)
    }

    pub fn search(&self) -> SearchOptions {
        self.search.clone().unwrap_or_default()
    }

    pub fn grid(&self) -> GridConfig {
        self.grid.unwrap_or_default()
    }

    pub fn signal(
        &self,
        base: &Path,
        seed: u64,
        num_modes: usize,
    ) -> Result<SwitchingSignal, CliError> {
        let spec = self
            .signal
            .as_ref()
            .ok_or_else(|| CliError::Config("scenario has no signal".into()))?;
        Ok(match spec {
            SignalSpec::Periodic {
                period,
                cycle,
                horizon,
            } => periodic_signal(*period, cycle, *horizon),
            SignalSpec::RandomDwell {
                tau_d,
                n0,
                horizon,
                mode_count,
            } => random_dwell_signal(seed, *tau_d, *n0, *horizon, mode_count.unwrap_or(num_modes)),
            SignalSpec::File(rel) => {
                SwitchingSignal::from_json(&std::fs::read_to_string(base.join(rel))?)?
            }
            SignalSpec::Explicit(sig) => {
                SwitchingSignal::new(sig.initial_mode, sig.switches.clone(), sig.horizon)?
            }
        })
    }

    pub fn initial_profile(
        &self,
        system: &SwitchedSystem,
        grid: &GridSpec,
    ) -> Result<DMatrix<f64>, CliError> {
        match &self.initial {
            None => Ok(sine_profile(system.n(), grid)),
            Some(InitialSpec::Sine { wavenumber }) => {
                let xs = grid.points();
                let k = *wavenumber as f64;
                Ok(DMatrix::from_fn(system.n(), grid.n_x, |_, j| {
                    (2.0 * std::f64::consts::PI * k * xs[j]).sin()
                }))
            }
            Some(InitialSpec::Values(rows)) => {
                if rows.len() != system.n() || rows.iter().any(|r| r.len() != grid.n_x) {
                    return Err(CliError::Config(format!(
                        "initial values must be {} rows of {} samples",
                        system.n(),
                        grid.n_x
                    )));
                }
                Ok(DMatrix::from_fn(system.n(), grid.n_x, |i, j| rows[i][j]))
            }
        }
    }
}

fn ensure_out_dir(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Formats with six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let dec = (5 - mag).max(0) as usize;
    format!("{x:.dec$}")
}

/// Searches for a certificate and writes `certificate.json` and `audit.json`.
/// Exit 0 when feasible, 2 when infeasible.
pub fn cmd_certify(
    config_path: &Path,
    variant_override: Option<&str>,
    out: Option<&Path>,
) -> Result<i32, CliError> {
    let (cfg, base) = ScenarioConfig::load(config_path)?;
    let system = cfg.system(&base)?;
    let variant = cfg.variant(variant_override)?;
    let options = cfg.search();
    let dir = ensure_out_dir(&cfg, out)?;
    match certify(&system, variant, &options)? {
        CertifyOutcome::Certificate(cert) => {
            let audit = check_certificate(&system, &cert, &options)?;
            std::fs::write(dir.join("certificate.json"), cert.to_json())?;
            std::fs::write(dir.join("audit.json"), audit.to_json())?;
            println!(
                "feasible: variant={} nu={} gamma={} tau_d={}",
                cert.variant.name(),
                sig6(cert.nu),
                sig6(cert.gamma),
                sig6(cert.tau_d)
            );
            if !audit.pass {
                eprintln!("warning: audit reported failing entries; see audit.json");
            }
            Ok(0)
        }
        CertifyOutcome::Infeasible { best_margin } => {
            std::fs::write(
                dir.join("infeasible.json"),
                serde_json::to_string_pretty(&serde_json::json!({
                    "variant": variant.name(),
                    "best_margin": best_margin,
                }))
                .expect("json"),
            )?;
            println!(
                "infeasible: variant={} best margin {:.3e}",
                variant.name(),
                best_margin
            );
            Ok(2)
        }
    }
}

/// Dwell-bound front-end: certifies with a dwell variant and prints the
/// average dwell-time bound to six significant digits.
pub fn cmd_dwell_bound(
    config_path: &Path,
    variant_override: Option<&str>,
    out: Option<&Path>,
) -> Result<i32, CliError> {
    let (cfg, base) = ScenarioConfig::load(config_path)?;
    let system = cfg.system(&base)?;
    let variant = match variant_override
        .map(str::to_string)
        .or_else(|| cfg.variant.clone())
    {
        Some(name) => name.parse().map_err(CliError::Config)?,
        None => Variant::DwellSignFixed,
    };
    if !variant.is_dwell() {
        return Err(CliError::Config(format!(
            "dwell-bound needs a dwell variant, got {}",
            variant.name()
        )));
    }
    let options = cfg.search();
    let dir = ensure_out_dir(&cfg, out)?;
    match certify(&system, variant, &options)? {
        CertifyOutcome::Certificate(cert) => {
            std::fs::write(dir.join("certificate.json"), cert.to_json())?;
            println!("tau_D = {}", sig6(cert.tau_d));
            println!(
                "  (variant={} nu={} gamma={} mu={:?})",
                cert.variant.name(),
                sig6(cert.nu),
                sig6(cert.gamma),
                cert.mu
            );
            Ok(0)
        }
        CertifyOutcome::Infeasible { best_margin } => {
            println!(
                "infeasible: variant={} best margin {:.3e}",
                variant.name(),
                best_margin
            );
            Ok(2)
        }
    }
}

fn run_simulation(
    cfg: &ScenarioConfig,
    base: &Path,
    system: &SwitchedSystem,
    signal: &SwitchingSignal,
    grid_cfg: GridConfig,
) -> Result<(Trace, DecayFit), CliError> {
    let grid = GridSpec {
        n_x: grid_cfg.n_x,
        cfl: grid_cfg.cfl,
    };
    let w0 = cfg.initial_profile(system, &grid)?;
    let cert: Option<Certificate> = match &cfg.certificate {
        Some(rel) => Some(Certificate::from_json(&std::fs::read_to_string(
            base.join(rel),
        )?)?),
        None => None,
    };
    let opts = SimOptions {
        snapshot_stride: grid_cfg.snapshot_stride,
        certificate: cert.as_ref(),
    };
    let mut trace = simulate_with(system, signal, &w0, &grid, &opts)?;
    let fit = estimate_decay(&trace, None)?;
    trace.fit = Some(fit);
    Ok((trace, fit))
}

/// Runs one simulation, writes `trace.csv` (and optionally per-snapshot state
/// files and an SVG plot), prints the fitted rate.
pub fn cmd_simulate(
    config_path: &Path,
    out: Option<&Path>,
    seed: u64,
    plot: bool,
) -> Result<i32, CliError> {
    let (cfg, base) = ScenarioConfig::load(config_path)?;
    let system = cfg.system(&base)?;
    let signal = cfg.signal(&base, seed, system.num_modes())?;
    let grid_cfg = cfg.grid();
    let dir = ensure_out_dir(&cfg, out)?;
    let (trace, fit) = run_simulation(&cfg, &base, &system, &signal, grid_cfg)?;
    let mut file = std::fs::File::create(dir.join("trace.csv"))?;
    write_trace_csv(&trace, &mut file)?;
    if grid_cfg.snapshot_stride > 0 {
        write_state_csvs(&trace, &dir.join("states"))?;
    }
    if plot {
        std::fs::write(
            dir.join("trace.svg"),
            trace_svg(&trace, &format!("{}", config_path.display())),
        )?;
    }
    let verdict = if fit.degenerate {
        "norm vanished in the fit window".to_string()
    } else if fit.rate > 0.0 {
        format!("decay at rate {}", sig6(fit.rate))
    } else {
        format!("growth at rate {}", sig6(-fit.rate))
    };
    println!(
        "fitted rate = {} ({verdict}), overshoot C = {}",
        sig6(fit.rate),
        sig6(fit.c_overshoot)
    );
    Ok(0)
}

/// Sweeps the switching period and writes `(parameter, fitted rate)` rows;
/// prints the bracket where the fitted rate changes sign.
pub fn cmd_sweep(
    config_path: &Path,
    out: Option<&Path>,
    seed: u64,
    jobs: usize,
) -> Result<i32, CliError> {
    let (cfg, base) = ScenarioConfig::load(config_path)?;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("scenario has no sweep section".into()))?;
    if sweep.parameter != "period" {
        return Err(CliError::Config(format!(
            "unsupported sweep parameter '{}'",
            sweep.parameter
        )));
    }
    if sweep.steps < 1 || !(sweep.range[1] > sweep.range[0]) || sweep.range[0] <= 0.0 {
        return Err(CliError::Config("invalid sweep range/steps".into()));
    }
    let (cycle, horizon) = match &cfg.signal {
        Some(SignalSpec::Periodic { cycle, horizon, .. }) => (cycle.clone(), *horizon),
        _ => {
            return Err(CliError::Config(
                "period sweeps need a periodic signal spec".into(),
            ))
        }
    };
    let system = cfg.system(&base)?;
    let grid_cfg = cfg.grid();
    let dir = ensure_out_dir(&cfg, out)?;
    let _ = seed;

    let periods: Vec<f64> = (0..sweep.steps)
        .map(|k| {
            if sweep.steps == 1 {
                sweep.range[0]
            } else {
                sweep.range[0]
                    + (sweep.range[1] - sweep.range[0]) * k as f64 / (sweep.steps - 1) as f64
            }
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let results: Vec<Result<(f64, f64), CliError>> = pool.install(|| {
        use rayon::prelude::*;
        periods
            .par_iter()
            .map(|&period| {
                let signal = periodic_signal(period, &cycle, horizon);
                let (_, fit) = run_simulation(&cfg, &base, &system, &signal, grid_cfg)?;
                Ok((period, fit.rate))
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r?);
    }
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut csv = String::from("period,fitted_rate\n");
    for (p, r) in &rows {
        csv.push_str(&format!("{p:.16e},{r:.16e}\n"));
    }
    std::fs::write(dir.join("sweep.csv"), csv)?;

    let mut bracket = None;
    for w in rows.windows(2) {
        if w[0].1 <= 0.0 && w[1].1 > 0.0 {
            bracket = Some((w[0].0, w[1].0));
            break;
        }
    }
    match bracket {
        Some((lo, hi)) => println!(
            "fitted rate changes sign between period {} and {}",
            sig6(lo),
            sig6(hi)
        ),
        None => println!("no sign change of the fitted rate in the sweep range"),
    }
    Ok(0)
}

/// Membership test in the average-dwell-time class. Exit 0 inside, 2 outside.
pub fn cmd_validate_signal(signal_path: &Path, tau_d: f64, n0: usize) -> Result<i32, CliError> {
    if !(tau_d > 0.0) {
        return Err(CliError::Config("tau_d must be positive".into()));
    }
    let signal = SwitchingSignal::from_json(&std::fs::read_to_string(signal_path)?)?;
    let (ok, worst) = validate_dwell(&signal, tau_d, n0);
    if ok {
        println!(
            "signal belongs to the class (tau_D = {}, N0 = {n0})",
            sig6(tau_d)
        );
        Ok(0)
    } else {
        let w = worst.expect("violating pair");
        println!(
            "signal violates the class: {} switches on ({}, {}] but only {} allowed",
            w.count,
            sig6(w.from),
            sig6(w.to),
            sig6(w.allowed)
        );
        Ok(2)
    }
}
