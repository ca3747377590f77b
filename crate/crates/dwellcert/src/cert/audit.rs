//! Independent re-verification of a certificate: every inequality of its
//! variant is re-evaluated with margins, the jump factor and the dwell bound
//! are recomputed, and the structural invariants on the weights are checked.

use serde::Serialize;

use crate::model::SwitchedSystem;

use super::feas::{build_constraint_set, var_offsets};
use super::search::coupling_residual;
use super::slack::interior_endpoints_exact;
use super::{dwell_time_bound, CertError, Certificate, SearchOptions, XCheck, Q_FLOOR};

#[derive(Debug, Clone, Serialize)]
pub struct AuditEntry {
    pub label: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub pass: bool,
    pub entries: Vec<AuditEntry>,
    pub recomputed_gamma: f64,
    pub recomputed_tau_d: f64,
    pub notes: Vec<String>,
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("audit serialization")
    }
}

/// Re-verifies every inequality of the certificate's variant at its
/// `(mu, nu, Q)`, with one margin entry per inequality. Passes iff all
/// margins are at least `-tol_feas` and the jump factor and dwell bound
/// recompute to within 1e-9 relative.
pub fn check_certificate(
    system: &SwitchedSystem,
    cert: &Certificate,
    options: &SearchOptions,
) -> Result<AuditReport, CertError> {
    let modes = system.modes();
    if cert.q.len() != modes.len() || cert.mu.len() != modes.len() {
        return Err(CertError::CertificateMismatch(format!(
            "certificate covers {} modes, system has {}",
            cert.q.len(),
            modes.len()
        )));
    }
    for (i, (qm, mode)) in cert.q.iter().zip(modes).enumerate() {
        if qm.len() != mode.n() {
            return Err(CertError::CertificateMismatch(format!(
                "mode {i}: {} weight entries for dimension {}",
                qm.len(),
                mode.n()
            )));
        }
    }

    let tol = options.tol_feas;
    let mut entries = Vec::new();
    let mut notes = Vec::new();

    // Structural invariants.
    let q_min = cert
        .q
        .iter()
        .flat_map(|qm| qm.iter().cloned())
        .fold(f64::INFINITY, f64::min);
    entries.push(AuditEntry {
        label: "invariant/q-floor".into(),
        value: q_min - Q_FLOOR,
        threshold: -1e-12,
        pass: q_min >= Q_FLOOR * (1.0 - 1e-9),
    });
    entries.push(AuditEntry {
        label: "invariant/nu-positive".into(),
        value: cert.nu,
        threshold: 0.0,
        pass: cert.nu > 0.0,
    });
    entries.push(AuditEntry {
        label: "invariant/gamma-at-least-one".into(),
        value: cert.gamma - 1.0,
        threshold: -1e-12,
        pass: cert.gamma >= 1.0 - 1e-12,
    });

    // Inequality margins.
    let set = build_constraint_set(modes, cert.variant, &cert.mu, cert.nu, options.x_check)?;
    let offsets = var_offsets(modes);
    let dim: usize = modes.iter().map(|m| m.n()).sum();
    let mut stacked = vec![0.0; dim];
    for (i, qm) in cert.q.iter().enumerate() {
        stacked[offsets[i]..offsets[i] + qm.len()].copy_from_slice(qm);
    }
    for c in &set.constraints {
        let m = c.margin(&stacked)?;
        entries.push(AuditEntry {
            label: c.label.clone(),
            value: m,
            threshold: -tol,
            pass: m >= -tol,
        });
    }

    if cert.variant.couples_weights() {
        let resid = coupling_residual(modes, &cert.q, cert.variant.couples_by_family());
        entries.push(AuditEntry {
            label: "coupling".into(),
            value: -resid,
            threshold: -tol,
            pass: resid <= tol,
        });
    }

    // Grid-based x-checks are fast but sample-based; flag them when the
    // interior inequality genuinely depends on x.
    if matches!(options.x_check, XCheck::Grid(_)) {
        let sampled: Vec<usize> = modes
            .iter()
            .enumerate()
            .filter(|(i, m)| !interior_endpoints_exact(m, cert.mu[*i]))
            .map(|(i, _)| i)
            .collect();
        if !sampled.is_empty() {
            notes.push(format!(
                "interior inequality of mode(s) {sampled:?} checked on a finite x-grid; \
                 use the interval mode for a sound (conservative) bound"
            ));
        }
    }

    // Jump factor and dwell bound, recomputed.
    let recomputed_gamma = if cert.variant.is_dwell() {
        let ws = super::WarmStart {
            q: cert.q.clone(),
            mu: cert.mu.clone(),
            nu: cert.nu,
        };
        // The warm-start evaluator recomputes gamma from the weights alone.
        match super::search::certify(
            system,
            cert.variant,
            &SearchOptions {
                warm_start: Some(ws),
                ..options.clone()
            },
        )? {
            super::CertifyOutcome::Certificate(c) => c.gamma,
            super::CertifyOutcome::Infeasible { .. } => f64::NAN,
        }
    } else {
        1.0
    };
    let gamma_ok = if recomputed_gamma.is_nan() {
        false
    } else {
        (recomputed_gamma - cert.gamma).abs() <= 1e-9 * cert.gamma.max(1.0)
    };
    entries.push(AuditEntry {
        label: "recompute/gamma".into(),
        value: if recomputed_gamma.is_nan() {
            f64::NEG_INFINITY
        } else {
            recomputed_gamma - cert.gamma
        },
        threshold: -1e-9,
        pass: gamma_ok,
    });

    let recomputed_tau_d = dwell_time_bound(cert);
    let tau_ok = (recomputed_tau_d - cert.tau_d).abs() <= 1e-9 * cert.tau_d.max(1.0);
    entries.push(AuditEntry {
        label: "recompute/tau-d".into(),
        value: recomputed_tau_d - cert.tau_d,
        threshold: -1e-9,
        pass: tau_ok,
    });

    let pass = entries.iter().all(|e| e.pass);
    Ok(AuditReport {
        pass,
        entries,
        recomputed_gamma,
        recomputed_tau_d,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cert::Variant;
    use crate::model::Mode;
    use nalgebra::{DMatrix, DVector};

    fn damped_wave() -> SwitchedSystem {
        let mk = |g: [[f64; 4]; 1]| {
            Mode::from_characteristic(
                DVector::from_vec(vec![-1.0, 1.0]),
                1,
                DMatrix::identity(2, 2) * -0.3,
                DMatrix::from_row_slice(2, 2, &g[0]),
            )
            .unwrap()
        };
        SwitchedSystem::new(vec![
            mk([[0.0, -1.2, 0.6, 0.0]]),
            mk([[0.0, -0.6, 1.2, 0.0]]),
        ])
        .unwrap()
    }

    fn stated(nu: f64, q: Vec<Vec<f64>>) -> Certificate {
        Certificate {
            variant: Variant::CommonSignFixed,
            q,
            mu: vec![-0.2, -0.2],
            nu,
            gamma: 1.0,
            tau_d: 0.0,
            margins: vec![],
        }
    }

    #[test]
    fn stated_certificate_passes() {
        let sys = damped_wave();
        let cert = stated(0.1, vec![vec![1.5, 1.0], vec![1.5, 1.0]]);
        let report = check_certificate(&sys, &cert, &SearchOptions::default()).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn inflated_rate_fails_on_the_interior() {
        // At nu = 0.2 the interior slack turns negative (0.4 - 0.6 + 0.4 > 0).
        let sys = damped_wave();
        let cert = stated(0.2, vec![vec![1.5, 1.0], vec![1.5, 1.0]]);
        let report = check_certificate(&sys, &cert, &SearchOptions::default()).unwrap();
        assert!(!report.pass);
        let interior_failures: Vec<_> = report
            .entries
            .iter()
            .filter(|e| e.label.contains("interior") && !e.pass)
            .collect();
        assert!(!interior_failures.is_empty(), "{report:?}");
        assert!(report
            .entries
            .iter()
            .filter(|e| e.label.contains("boundary"))
            .all(|e| e.pass));
    }

    #[test]
    fn negative_weight_entry_is_reported() {
        let sys = damped_wave();
        let cert = stated(0.05, vec![vec![1.5, -1.0], vec![1.5, -1.0]]);
        let report = check_certificate(&sys, &cert, &SearchOptions::default()).unwrap();
        assert!(!report.pass);
        let floor = report
            .entries
            .iter()
            .find(|e| e.label == "invariant/q-floor")
            .unwrap();
        assert!(!floor.pass);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let sys = damped_wave();
        let cert = stated(0.1, vec![vec![1.5, 1.0]]);
        assert!(matches!(
            check_certificate(&sys, &cert, &SearchOptions::default()),
            Err(CertError::CertificateMismatch(_))
        ));
    }
}
