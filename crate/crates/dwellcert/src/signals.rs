//! Switching signals: piecewise-constant, right-continuous mode schedules
//! with finitely many switches per bounded interval, and the average-dwell-
//! time class defined by `N(τ, t) ≤ N0 + (t - τ)/τ_D`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("invalid signal: {0}")]
    Invalid(String),
    #[error("failed to parse signal description: {0}")]
    Parse(String),
}

/// A mode schedule: `initial_mode` on `[0, t_1)`, then the listed mode from
/// each switch time on (right-continuous).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwitchingSignal {
    pub initial_mode: usize,
    /// Strictly increasing `(time, new mode)` pairs with `0 < time < horizon`
    /// and each new mode different from the previous one.
    pub switches: Vec<(f64, usize)>,
    pub horizon: f64,
}

impl SwitchingSignal {
    pub fn new(
        initial_mode: usize,
        switches: Vec<(f64, usize)>,
        horizon: f64,
    ) -> Result<Self, SignalError> {
        if !(horizon > 0.0) {
            return Err(SignalError::Invalid("horizon must be positive".into()));
        }
        let mut prev_t = 0.0;
        let mut prev_mode = initial_mode;
        for &(t, mode) in &switches {
            if !(t > prev_t) {
                return Err(SignalError::Invalid(format!(
                    "switch times must be strictly increasing and positive (got {t})"
                )));
            }
            if t >= horizon {
                return Err(SignalError::Invalid(format!(
                    "switch time {t} is not inside the horizon {horizon}"
                )));
            }
            if mode == prev_mode {
                return Err(SignalError::Invalid(format!(
                    "switch at t = {t} does not change the mode"
                )));
            }
            prev_t = t;
            prev_mode = mode;
        }
        Ok(Self {
            initial_mode,
            switches,
            horizon,
        })
    }

    /// Active mode at time `t` (right-continuous: the new mode applies at the
    /// switch instant).
    pub fn mode_at(&self, t: f64) -> usize {
        let mut mode = self.initial_mode;
        for &(s, m) in &self.switches {
            if s <= t {
                mode = m;
            } else {
                break;
            }
        }
        mode
    }

    /// Largest mode index mentioned by the signal.
    pub fn max_mode(&self) -> usize {
        self.switches
            .iter()
            .map(|&(_, m)| m)
            .fold(self.initial_mode, usize::max)
    }

    pub fn from_json(text: &str) -> Result<Self, SignalError> {
        let raw: SwitchingSignal =
            serde_json::from_str(text).map_err(|e| SignalError::Parse(e.to_string()))?;
        SwitchingSignal::new(raw.initial_mode, raw.switches, raw.horizon)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("signal serialization")
    }
}

/// Periodic signal: switches every `period`, cycling through `cycle` starting
/// from its first entry.
pub fn periodic_signal(period: f64, cycle: &[usize], horizon: f64) -> SwitchingSignal {
    assert!(period > 0.0, "period must be positive");
    assert!(!cycle.is_empty(), "cycle must be non-empty");
    let initial = cycle[0];
    let mut switches = Vec::new();
    let mut k = 1usize;
    loop {
        let t = period * k as f64;
        if t >= horizon {
            break;
        }
        let mode = cycle[k % cycle.len()];
        switches.push((t, mode));
        k += 1;
    }
    // Collapse no-op entries when the cycle repeats a mode.
    let mut cleaned: Vec<(f64, usize)> = Vec::with_capacity(switches.len());
    let mut prev = initial;
    for (t, m) in switches {
        if m != prev {
            cleaned.push((t, m));
            prev = m;
        }
    }
    SwitchingSignal::new(initial, cleaned, horizon).expect("periodic signal construction")
}

/// Number of switches in the half-open interval `(tau, t]`.
pub fn count_switches(signal: &SwitchingSignal, tau: f64, t: f64) -> usize {
    assert!(
        0.0 <= tau && tau < t && t <= signal.horizon,
        "require 0 <= tau < t <= horizon"
    );
    signal
        .switches
        .iter()
        .filter(|&&(s, _)| s > tau && s <= t)
        .count()
}

/// Worst pair found when checking membership in the average-dwell-time class.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DwellViolation {
    pub from: f64,
    pub to: f64,
    pub count: usize,
    pub allowed: f64,
}

/// Checks membership in the class `N(τ, t) ≤ N0 + (t - τ)/τ_D` for all
/// `τ < t`. Because the count is piecewise constant and the bound is affine,
/// it suffices to test every pair of switch times with `τ ↑ s_a`, `t = s_b`;
/// equality at the limit point is accepted.
pub fn validate_dwell(
    signal: &SwitchingSignal,
    tau_d: f64,
    n0: usize,
) -> (bool, Option<DwellViolation>) {
    assert!(tau_d > 0.0, "tau_d must be positive");
    let times: Vec<f64> = signal.switches.iter().map(|&(t, _)| t).collect();
    let mut worst: Option<DwellViolation> = None;
    let mut worst_excess = 0.0f64;
    for a in 0..times.len() {
        for b in a..times.len() {
            let count = b - a + 1;
            let allowed = n0 as f64 + (times[b] - times[a]) / tau_d;
            let excess = count as f64 - allowed;
            if excess > worst_excess {
                worst_excess = excess;
                worst = Some(DwellViolation {
                    from: times[a],
                    to: times[b],
                    count,
                    allowed,
                });
            }
        }
    }
    (worst.is_none(), worst)
}

/// Deterministic random member of the dwell class: inter-switch gaps drawn
/// uniformly from `[tau_d, 2 tau_d]`, which guarantees membership with
/// chatter bound `N0 = 1`; the next mode is drawn uniformly among the other
/// modes.
pub fn random_dwell_signal(
    seed: u64,
    tau_d: f64,
    _n0: usize,
    horizon: f64,
    mode_count: usize,
) -> SwitchingSignal {
    assert!(tau_d > 0.0, "tau_d must be positive");
    assert!(mode_count >= 1, "at least one mode");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut switches = Vec::new();
    let mut mode = 0usize;
    let mut t = 0.0;
    if horizon > 0.0 && mode_count > 1 {
        loop {
            t += tau_d * (1.0 + rng.random::<f64>());
            if t >= horizon {
                break;
            }
            let step = rng.random_range(1..mode_count);
            mode = (mode + step) % mode_count;
            switches.push((t, mode));
        }
    }
    SwitchingSignal::new(0, switches, horizon.max(f64::MIN_POSITIVE))
        .expect("generated signal construction")
}
