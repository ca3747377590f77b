//! Upwind simulation of the switched system in characteristic variables.
//!
//! Between switches the active mode is integrated as `y = S_i w` with
//! first-order upwind transport (backward differences for positive
//! velocities, forward for negative) and an explicit source step. Boundary
//! closure is explicit: after each step the incoming characteristics are set
//! from the just-computed outgoing traces through the coupling `G_i`. Time
//! stepping lands exactly on switch times, where the state is mapped by
//! `y -> S_next S_prev^{-1} y`, keeping the physical state continuous.
//!
//! The scheme's dissipation is one-signed, so growth observed in simulation
//! is trustworthy evidence against stability; decay near the certified rate
//! cross-validates a certificate.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::cert::Certificate;
use crate::model::{Mode, SwitchedSystem};
use crate::signals::SwitchingSignal;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("CFL violation: lambda dt/dx = {0} exceeds 1")]
    CflViolation(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("certificate does not match the system: {0}")]
    CertificateMismatch(String),
    #[error("decay-fit window holds fewer than 8 samples ({0})")]
    DegenerateWindow(usize),
}

/// Uniform spatial grid on [0, 1] and the Courant number of the explicit
/// stepper. `n_x` counts both boundary points; the per-mode time step is
/// `cfl * dx / max_k |lambda_k|`.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub n_x: usize,
    pub cfl: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n_x: 201, cfl: 0.9 }
    }
}

impl GridSpec {
    pub fn dx(&self) -> f64 {
        1.0 / (self.n_x - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_x).map(|j| j as f64 * self.dx()).collect()
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.n_x < 3 {
            return Err(SimError::DimensionMismatch(
                "the grid needs at least 3 points".into(),
            ));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(SimError::CflViolation(self.cfl));
        }
        Ok(())
    }
}

/// Extra simulation controls.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions<'a> {
    /// Store a full state snapshot every `snapshot_stride` samples
    /// (0 keeps only the initial, switch and final states).
    pub snapshot_stride: usize,
    /// Evaluate the certificate's Lyapunov functional along the run.
    pub certificate: Option<&'a Certificate>,
}

/// Lyapunov value just before and just after a switch.
#[derive(Debug, Clone, Copy)]
pub struct SwitchJump {
    pub time: f64,
    pub before: f64,
    pub after: f64,
}

/// Least-squares exponential fit of the norm trace.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    /// Positive = decay (negated slope of ln ||w|| over the window).
    pub rate: f64,
    /// Empirical overshoot constant: exp(intercept) / ||w(0)||.
    pub c_overshoot: f64,
    /// RMS residual of the linear fit.
    pub residual: f64,
    pub window: (f64, f64),
    /// Set when the norm vanished somewhere in the window (rate is -inf).
    pub degenerate: bool,
}

/// Simulation output: sample instants, norms, optional Lyapunov values and
/// state snapshots.
#[derive(Debug, Clone)]
pub struct Trace {
    pub times: Vec<f64>,
    /// L2 norm of the physical state at each sample.
    pub l2: Vec<f64>,
    /// Lyapunov functional at each sample, when a certificate was supplied.
    pub lyap: Option<Vec<f64>>,
    /// Active mode at each sample (right-continuous at switches).
    pub modes: Vec<usize>,
    /// `(sample index, physical state)` snapshots.
    pub states: Vec<(usize, DMatrix<f64>)>,
    /// Lyapunov values across each switch, when a certificate was supplied.
    pub jumps: Vec<SwitchJump>,
    pub grid: GridSpec,
    pub fit: Option<DecayFit>,
}

impl Trace {
    /// Indices of the samples at switch times.
    pub fn switch_sample_indices(&self, signal: &SwitchingSignal) -> Vec<usize> {
        let mut out = Vec::new();
        for &(t, _) in &signal.switches {
            if let Some(i) = self
                .times
                .iter()
                .position(|&s| (s - t).abs() <= 1e-12 * t.max(1.0))
            {
                out.push(i);
            }
        }
        out
    }
}

/// Componentwise `sin(2 pi x)` initial profile.
pub fn sine_profile(n: usize, grid: &GridSpec) -> DMatrix<f64> {
    let xs = grid.points();
    DMatrix::from_fn(n, grid.n_x, |_, j| {
        (2.0 * std::f64::consts::PI * xs[j]).sin()
    })
}

/// Trapezoidal L2 norm of a state sampled on the uniform grid.
fn l2_norm(w: &DMatrix<f64>, dx: f64) -> f64 {
    let n_x = w.ncols();
    let mut acc = 0.0;
    for j in 0..n_x {
        let weight = if j == 0 || j == n_x - 1 { 0.5 } else { 1.0 };
        acc += weight * w.column(j).norm_squared();
    }
    (acc * dx).sqrt()
}

/// Mode-wise Lyapunov density matrices `M_i(x)` sampled on the grid.
struct LyapWeights {
    /// Per mode, per grid point.
    per_mode: Vec<Vec<DMatrix<f64>>>,
}

impl LyapWeights {
    fn build(
        system: &SwitchedSystem,
        cert: &Certificate,
        grid: &GridSpec,
    ) -> Result<Self, SimError> {
        if cert.q.len() != system.num_modes() {
            return Err(SimError::CertificateMismatch(format!(
                "certificate covers {} modes, system has {}",
                cert.q.len(),
                system.num_modes()
            )));
        }
        let xs = grid.points();
        let mut per_mode = Vec::with_capacity(system.num_modes());
        for (i, mode) in system.modes().iter().enumerate() {
            if cert.q[i].len() != mode.n() {
                return Err(SimError::CertificateMismatch(format!(
                    "mode {i}: {} weight entries for dimension {}",
                    cert.q[i].len(),
                    mode.n()
                )));
            }
            let m = mode.m();
            let s_minus = mode.s_minus();
            let s_plus = mode.s_plus();
            let qm = DMatrix::from_diagonal(&DVector::from_fn(m, |k, _| cert.q[i][k]));
            let qp =
                DMatrix::from_diagonal(&DVector::from_fn(mode.n() - m, |k, _| cert.q[i][m + k]));
            let m_minus = s_minus.transpose() * &qm * &s_minus;
            let m_plus = s_plus.transpose() * &qp * &s_plus;
            let mu = cert.mu[i];
            per_mode.push(
                xs.iter()
                    .map(|&x| &m_minus * (2.0 * mu * x).exp() + &m_plus * (-2.0 * mu * x).exp())
                    .collect(),
            );
        }
        Ok(LyapWeights { per_mode })
    }

    fn value(&self, mode: usize, w: &DMatrix<f64>, dx: f64) -> f64 {
        let mats = &self.per_mode[mode];
        let n_x = w.ncols();
        let mut acc = 0.0;
        for j in 0..n_x {
            let weight = if j == 0 || j == n_x - 1 { 0.5 } else { 1.0 };
            let col = w.column(j);
            acc += weight * (col.transpose() * &mats[j] * col)[(0, 0)];
        }
        acc * dx
    }
}

/// Integrates the switched system from the initial physical profile `w0`
/// (an `n x n_x` matrix of grid samples).
pub fn simulate(
    system: &SwitchedSystem,
    signal: &SwitchingSignal,
    w0: &DMatrix<f64>,
    grid: &GridSpec,
) -> Result<Trace, SimError> {
    simulate_with(system, signal, w0, grid, &SimOptions::default())
}

pub fn simulate_with(
    system: &SwitchedSystem,
    signal: &SwitchingSignal,
    w0: &DMatrix<f64>,
    grid: &GridSpec,
    opts: &SimOptions,
) -> Result<Trace, SimError> {
    grid.validate()?;
    let n = system.n();
    if w0.nrows() != n || w0.ncols() != grid.n_x {
        return Err(SimError::DimensionMismatch(format!(
            "initial profile must be {n} x {}",
            grid.n_x
        )));
    }
    if signal.max_mode() >= system.num_modes() {
        return Err(SimError::DimensionMismatch(format!(
            "signal uses mode {} but the system has {} modes",
            signal.max_mode(),
            system.num_modes()
        )));
    }
    let lyap_weights = match opts.certificate {
        Some(c) => Some(LyapWeights::build(system, c, grid)?),
        None => None,
    };

    let dx = grid.dx();
    let mut mode_idx = signal.initial_mode;
    let mut y = system.mode(mode_idx).diagonalizer() * w0;

    let mut times = Vec::new();
    let mut l2 = Vec::new();
    let mut lyap = lyap_weights.as_ref().map(|_| Vec::new());
    let mut modes = Vec::new();
    let mut states = Vec::new();
    let mut jumps = Vec::new();

    let record = |times: &mut Vec<f64>,
                  l2: &mut Vec<f64>,
                  lyap: &mut Option<Vec<f64>>,
                  modes: &mut Vec<usize>,
                  t: f64,
                  mode_idx: usize,
                  w: &DMatrix<f64>,
                  weights: &Option<LyapWeights>| {
        times.push(t);
        l2.push(l2_norm(w, dx));
        if let (Some(l), Some(wt)) = (lyap.as_mut(), weights.as_ref()) {
            l.push(wt.value(mode_idx, w, dx));
        }
        modes.push(mode_idx);
    };

    let w_of = |mode: &Mode, y: &DMatrix<f64>| mode.diagonalizer_inv() * y;

    let w_init = w_of(system.mode(mode_idx), &y);
    record(
        &mut times,
        &mut l2,
        &mut lyap,
        &mut modes,
        0.0,
        mode_idx,
        &w_init,
        &lyap_weights,
    );
    states.push((0usize, w_init));

    // Event times: all switches, then the horizon.
    let mut events: Vec<(f64, Option<usize>)> =
        signal.switches.iter().map(|&(t, m)| (t, Some(m))).collect();
    events.push((signal.horizon, None));

    let mut t = 0.0;
    let mut sample_count = 1usize;
    for (t_event, new_mode) in events {
        let mode = system.mode(mode_idx);
        let span = t_event - t;
        if span > 1e-14 {
            let dt_base = grid.cfl * dx / mode.max_speed();
            let n_steps = ((span / dt_base).ceil() as usize).max(1);
            let dt = span / n_steps as f64;
            if dt * mode.max_speed() / dx > 1.0 + 1e-9 {
                return Err(SimError::CflViolation(dt * mode.max_speed() / dx));
            }
            let courant: Vec<f64> = (0..n).map(|c| mode.lambda()[c] * dt / dx).collect();
            let f_dt = mode.source() * dt;
            let g = mode.coupling();
            let m = mode.m();
            let n_x = grid.n_x;
            let mut y_next = y.clone();
            for step in 1..=n_steps {
                // Upwind transport plus explicit source from the old state.
                for c in 0..n {
                    let nu_c = courant[c];
                    if nu_c > 0.0 {
                        for j in 1..n_x {
                            y_next[(c, j)] = y[(c, j)] - nu_c * (y[(c, j)] - y[(c, j - 1)]);
                        }
                        y_next[(c, 0)] = y[(c, 0)];
                    } else {
                        for j in 0..n_x - 1 {
                            y_next[(c, j)] = y[(c, j)] - nu_c * (y[(c, j + 1)] - y[(c, j)]);
                        }
                        y_next[(c, n_x - 1)] = y[(c, n_x - 1)];
                    }
                }
                if f_dt.amax() != 0.0 {
                    for j in 0..n_x {
                        let src = &f_dt * y.column(j);
                        for c in 0..n {
                            y_next[(c, j)] += src[c];
                        }
                    }
                }
                // Boundary closure: incoming characteristics from the
                // just-computed outgoing traces, out = (y-(0), y+(1)).
                let mut out = DVector::<f64>::zeros(n);
                for c in 0..m {
                    out[c] = y_next[(c, 0)];
                }
                for c in m..n {
                    out[c] = y_next[(c, n_x - 1)];
                }
                let inc = g * &out;
                for c in 0..m {
                    y_next[(c, n_x - 1)] = inc[c];
                }
                for c in m..n {
                    y_next[(c, 0)] = inc[c];
                }
                std::mem::swap(&mut y, &mut y_next);

                let t_now = if step == n_steps {
                    t_event
                } else {
                    t + dt * step as f64
                };
                let at_switch = step == n_steps && new_mode.is_some();
                if !at_switch {
                    let w = w_of(mode, &y);
                    record(
                        &mut times,
                        &mut l2,
                        &mut lyap,
                        &mut modes,
                        t_now,
                        mode_idx,
                        &w,
                        &lyap_weights,
                    );
                    let want_state = (opts.snapshot_stride > 0
                        && sample_count % opts.snapshot_stride == 0)
                        || (step == n_steps && new_mode.is_none());
                    if want_state {
                        states.push((times.len() - 1, w));
                    }
                    sample_count += 1;
                }
            }
        }
        // Switch: map the characteristic state through the continuous
        // physical state and record the post-switch sample.
        if let Some(next) = new_mode {
            let w = w_of(system.mode(mode_idx), &y);
            let v_before = lyap_weights.as_ref().map(|wt| wt.value(mode_idx, &w, dx));
            mode_idx = next;
            y = system.mode(mode_idx).diagonalizer() * &w;
            record(
                &mut times,
                &mut l2,
                &mut lyap,
                &mut modes,
                t_event,
                mode_idx,
                &w,
                &lyap_weights,
            );
            states.push((times.len() - 1, w.clone()));
            sample_count += 1;
            if let (Some(before), Some(wt)) = (v_before, lyap_weights.as_ref()) {
                jumps.push(SwitchJump {
                    time: t_event,
                    before,
                    after: wt.value(mode_idx, &w, dx),
                });
            }
        }
        t = t_event;
    }

    Ok(Trace {
        times,
        l2,
        lyap,
        modes,
        states,
        jumps,
        grid: *grid,
        fit: None,
    })
}

/// Evaluates a certificate's Lyapunov functional on the stored snapshots of
/// an existing trace, returning `(time, V)` pairs.
pub fn lyapunov_trace(
    trace: &Trace,
    system: &SwitchedSystem,
    cert: &Certificate,
) -> Result<Vec<(f64, f64)>, SimError> {
    let weights = LyapWeights::build(system, cert, &trace.grid)?;
    let dx = trace.grid.dx();
    let mut out = Vec::with_capacity(trace.states.len());
    for (idx, w) in &trace.states {
        let mode = trace.modes[*idx];
        out.push((trace.times[*idx], weights.value(mode, w, dx)));
    }
    Ok(out)
}

/// Ordinary least squares of `ln ||w||` against `t` on the window
/// (default `[T/2, T]`). The rate is the negated slope: positive = decay.
pub fn estimate_decay(trace: &Trace, window: Option<(f64, f64)>) -> Result<DecayFit, SimError> {
    let t_end = *trace.times.last().expect("non-empty trace");
    let (w0, w1) = window.unwrap_or((0.5 * t_end, t_end));
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    let mut degenerate = false;
    for (i, &t) in trace.times.iter().enumerate() {
        if t >= w0 - 1e-12 && t <= w1 + 1e-12 {
            let v = trace.l2[i];
            if v <= 0.0 {
                degenerate = true;
            } else {
                ts.push(t);
                ys.push(v.ln());
            }
        }
    }
    if degenerate {
        return Ok(DecayFit {
            rate: f64::NEG_INFINITY,
            c_overshoot: 0.0,
            residual: 0.0,
            window: (w0, w1),
            degenerate: true,
        });
    }
    if ts.len() < 8 {
        return Err(SimError::DegenerateWindow(ts.len()));
    }
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (t, y) in ts.iter().zip(&ys) {
        sxx += (t - tm) * (t - tm);
        sxy += (t - tm) * (y - ym);
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let mut rss = 0.0;
    for (t, y) in ts.iter().zip(&ys) {
        let r = y - (intercept + slope * t);
        rss += r * r;
    }
    let l2_initial = trace.l2[0];
    Ok(DecayFit {
        rate: -slope,
        c_overshoot: if l2_initial > 0.0 {
            intercept.exp() / l2_initial
        } else {
            f64::INFINITY
        },
        residual: (rss / n).sqrt(),
        window: (w0, w1),
        degenerate: false,
    })
}

/// Writes the trace as CSV with the header `t,l2,V,mode`; values carry 17
/// significant digits, the V column is empty without a certificate.
pub fn write_trace_csv<W: std::io::Write>(trace: &Trace, mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,l2,V,mode")?;
    for i in 0..trace.times.len() {
        let v = match &trace.lyap {
            Some(l) => format!("{:.16e}", l[i]),
            None => String::new(),
        };
        writeln!(
            out,
            "{:.16e},{:.16e},{},{}",
            trace.times[i], trace.l2[i], v, trace.modes[i]
        )?;
    }
    Ok(())
}

/// Writes one CSV per stored snapshot: columns `x,w1,...,wn`.
pub fn write_state_csvs(trace: &Trace, dir: &std::path::Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let xs = trace.grid.points();
    for (k, (idx, w)) in trace.states.iter().enumerate() {
        let mut f = std::fs::File::create(dir.join(format!("state_{k:05}.csv")))?;
        use std::io::Write;
        writeln!(f, "# t = {:.16e}", trace.times[*idx])?;
        let comps: Vec<String> = (1..=w.nrows()).map(|c| format!("w{c}")).collect();
        writeln!(f, "x,{}", comps.join(","))?;
        for j in 0..w.ncols() {
            let vals: Vec<String> = (0..w.nrows())
                .map(|c| format!("{:.16e}", w[(c, j)]))
                .collect();
            writeln!(f, "{:.16e},{}", xs[j], vals.join(","))?;
        }
    }
    Ok(())
}
