//! Slack matrices of the certifier's matrix inequalities and the point
//! checks built on them. An inequality `LHS ⪯ RHS` holds (up to tolerance)
//! iff the smallest eigenvalue of its slack `RHS - LHS` is at least
//! `-tol_feas`.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{psd_margin, sym_eig, SymMatrix, TOL_FEAS};
use crate::model::Mode;

use super::{CertError, XCheck};

/// Diagonal of the x-dependent weight `Q(x) = diag(e^{2 mu x} Q^-, e^{-2 mu x} Q^+)`.
pub(crate) fn cal_q_diag(mode: &Mode, mu: f64, q: &DVector<f64>, x: f64) -> DVector<f64> {
    let m = mode.m();
    DVector::from_fn(mode.n(), |k, _| {
        if k < m {
            (2.0 * mu * x).exp() * q[k]
        } else {
            (-2.0 * mu * x).exp() * q[k]
        }
    })
}

/// Slack of the interior inequality at position `x` for diagonal weights:
///
/// ```text
/// S(x) = -( -2 mu Q(x) Lambda+ + F^T Q(x) + Q(x) F + 2 nu Q(x) )
/// ```
///
/// The inequality holds at `x` iff `psd_margin(S(x)) >= -tol_feas`.
pub fn interior_lmi_slack(mode: &Mode, mu: f64, nu: f64, q: &DVector<f64>, x: f64) -> SymMatrix {
    let qx = cal_q_diag(mode, mu, q, x);
    interior_slack_block(mode, mu, nu, &DMatrix::from_diagonal(&qx))
}

/// Interior slack for a full (block) weight matrix already evaluated at `x`.
pub(crate) fn interior_slack_block(mode: &Mode, mu: f64, nu: f64, qx: &DMatrix<f64>) -> SymMatrix {
    let lp = DMatrix::from_diagonal(&mode.lambda_plus());
    let f = mode.source();
    let a = qx * &lp * (-2.0 * mu) + f.transpose() * qx + qx * f + qx * (2.0 * nu);
    SymMatrix::symmetrize(-a)
}

/// Boundary matrices `P_in = [I 0; G+- G++]` and `P_out = [G-- G-+; 0 I]`
/// mapping outgoing traces to the two boundary evaluations.
pub(crate) fn boundary_borders(mode: &Mode) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = mode.n();
    let m = mode.m();
    let g = mode.coupling();
    let mut p_in = DMatrix::<f64>::zeros(n, n);
    let mut p_out = DMatrix::<f64>::zeros(n, n);
    for i in 0..m {
        p_in[(i, i)] = 1.0;
    }
    for i in m..n {
        for j in 0..n {
            p_in[(i, j)] = g[(i, j)];
        }
        p_out[(i, i)] = 1.0;
    }
    for i in 0..m {
        for j in 0..n {
            p_out[(i, j)] = g[(i, j)];
        }
    }
    (p_in, p_out)
}

/// Slack of the boundary inequality for diagonal weights:
///
/// ```text
/// S = P_out^T Q(1) Lambda P_out - P_in^T Q(0) Lambda P_in
/// ```
pub fn boundary_lmi_slack(mode: &Mode, mu: f64, q: &DVector<f64>) -> SymMatrix {
    let q0 = cal_q_diag(mode, mu, q, 0.0);
    let q1 = cal_q_diag(mode, mu, q, 1.0);
    boundary_slack_block(
        mode,
        &DMatrix::from_diagonal(&q0),
        &DMatrix::from_diagonal(&q1),
    )
}

pub(crate) fn boundary_slack_block(mode: &Mode, q0: &DMatrix<f64>, q1: &DMatrix<f64>) -> SymMatrix {
    let lam = DMatrix::from_diagonal(mode.lambda());
    let (p_in, p_out) = boundary_borders(mode);
    let rhs = p_out.transpose() * q1 * &lam * &p_out;
    let lhs = p_in.transpose() * q0 * &lam * &p_in;
    SymMatrix::symmetrize(rhs - lhs)
}

/// Whether endpoint evaluation of the interior inequality is exact: the
/// dependence on `x` factors out when `mu = 0`, when the source is diagonal,
/// or when all velocities share one sign.
pub(crate) fn interior_endpoints_exact(mode: &Mode, mu: f64) -> bool {
    mu == 0.0 || mode.is_source_diagonal() || mode.m() == 0 || mode.m() == mode.n()
}

/// Result of checking the interior inequality over `x ∈ [0, 1]`.
#[derive(Debug, Clone)]
pub struct InteriorCheck {
    pub ok: bool,
    /// Smallest margin found (Grid/endpoint modes) or the certified lower
    /// bound on the margin (Interval mode).
    pub worst_margin: f64,
    /// Sample attaining the worst margin, when one exists.
    pub worst_x: Option<f64>,
    /// True when the verdict is exact rather than sampled or bounded.
    pub exact: bool,
}

/// Checks the interior inequality for all `x` in `[0, 1]`.
///
/// Grid mode evaluates `N` uniform samples including both endpoints. Interval
/// mode bounds each slack entry over `x` using the monotonicity of the
/// exponentials and certifies through `lambda_min(mid) - max row sum(rad)`;
/// sound but conservative. When the x-dependence factors out entirely the
/// endpoints alone decide the check exactly, whatever mode was requested.
pub fn check_interior_over_x(
    mode: &Mode,
    mu: f64,
    nu: f64,
    q: &DVector<f64>,
    x_check: XCheck,
) -> Result<InteriorCheck, CertError> {
    let margin_at = |x: f64| -> Result<f64, CertError> {
        Ok(psd_margin(&interior_lmi_slack(mode, mu, nu, q, x))?)
    };
    if interior_endpoints_exact(mode, mu) {
        let m0 = margin_at(0.0)?;
        let m1 = margin_at(1.0)?;
        let (worst, at) = if m0 <= m1 { (m0, 0.0) } else { (m1, 1.0) };
        return Ok(InteriorCheck {
            ok: worst >= -TOL_FEAS,
            worst_margin: worst,
            worst_x: Some(at),
            exact: true,
        });
    }
    match x_check {
        XCheck::Grid(n_x) => {
            let n_x = n_x.max(2);
            let mut worst = f64::INFINITY;
            let mut at = 0.0;
            for j in 0..n_x {
                let x = j as f64 / (n_x - 1) as f64;
                let m = margin_at(x)?;
                if m < worst {
                    worst = m;
                    at = x;
                }
            }
            Ok(InteriorCheck {
                ok: worst >= -TOL_FEAS,
                worst_margin: worst,
                worst_x: Some(at),
                exact: false,
            })
        }
        XCheck::Interval => {
            let (mid, rad) = interior_interval_envelope(mode, mu, nu, q);
            let lm = psd_margin(&mid)?;
            let bound = lm - max_row_sum(rad.as_matrix());
            Ok(InteriorCheck {
                ok: bound >= -TOL_FEAS,
                worst_margin: bound,
                worst_x: None,
                exact: false,
            })
        }
    }
}

/// Entrywise midpoint/radius envelope of the interior slack over `x ∈ [0,1]`.
///
/// Every entry is a sum of terms `c * q_k * e^{±2 mu x}`; each term is
/// monotone in `x`, so its range is spanned by the endpoint values and the
/// envelope follows entrywise.
pub(crate) fn interior_interval_envelope(
    mode: &Mode,
    mu: f64,
    nu: f64,
    q: &DVector<f64>,
) -> (SymMatrix, SymMatrix) {
    let n = mode.n();
    let mut mid = DMatrix::<f64>::zeros(n, n);
    let mut rad = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let unit = DVector::from_fn(n, |j, _| if j == k { q[k] } else { 0.0 });
        let s0 = interior_lmi_slack(mode, mu, nu, &unit, 0.0);
        let s1 = interior_lmi_slack(mode, mu, nu, &unit, 1.0);
        let (s0, s1) = (s0.as_matrix(), s1.as_matrix());
        for a in 0..n {
            for b in 0..n {
                let (lo, hi) = if s0[(a, b)] <= s1[(a, b)] {
                    (s0[(a, b)], s1[(a, b)])
                } else {
                    (s1[(a, b)], s0[(a, b)])
                };
                mid[(a, b)] += 0.5 * (lo + hi);
                rad[(a, b)] += 0.5 * (hi - lo);
            }
        }
    }
    (SymMatrix::symmetrize(mid), SymMatrix::symmetrize(rad))
}

pub(crate) fn max_row_sum(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        let s: f64 = (0..m.ncols()).map(|j| m[(i, j)].abs()).sum();
        worst = worst.max(s);
    }
    worst
}

/// Outcome of the single-mode stability check.
#[derive(Debug, Clone)]
pub struct SingleModeReport {
    pub ok: bool,
    pub interior_margin: f64,
    pub boundary_margin: f64,
}

/// Single-mode check with symmetric positive definite block weights
/// `(Q^-, Q^+)` that commute with the velocity matrix; `nu` must be positive.
pub fn check_single_mode(
    mode: &Mode,
    mu: f64,
    nu: f64,
    q_minus: &DMatrix<f64>,
    q_plus: &DMatrix<f64>,
    x_check: XCheck,
) -> Result<SingleModeReport, CertError> {
    if nu <= 0.0 {
        return Err(CertError::InvalidRate(nu));
    }
    let n = mode.n();
    let m = mode.m();
    if q_minus.nrows() != m || q_minus.ncols() != m {
        return Err(CertError::CertificateMismatch(format!(
            "Q- must be {m}x{m}"
        )));
    }
    if q_plus.nrows() != n - m || q_plus.ncols() != n - m {
        return Err(CertError::CertificateMismatch(format!(
            "Q+ must be {}x{}",
            n - m,
            n - m
        )));
    }
    for (blk, name) in [(q_minus, "Q-"), (q_plus, "Q+")] {
        if blk.nrows() == 0 {
            continue;
        }
        let sym = SymMatrix::new(blk.clone())
            .map_err(|_| CertError::CertificateMismatch(format!("{name} is not symmetric")))?;
        if psd_margin(&sym)? <= 0.0 {
            return Err(CertError::CertificateMismatch(format!(
                "{name} is not positive definite"
            )));
        }
    }
    // Commutation with Lambda, blockwise.
    let q_full = block_diag(q_minus, q_plus);
    let lam = DMatrix::from_diagonal(mode.lambda());
    let comm = (&q_full * &lam - &lam * &q_full).amax();
    if comm > TOL_FEAS * q_full.norm().max(1.0) * lam.norm().max(1.0) {
        return Err(CertError::CommutationViolated);
    }

    let qx = |x: f64| -> DMatrix<f64> {
        let mut out = q_full.clone();
        for i in 0..n {
            for j in 0..n {
                let wi = if i < m {
                    (2.0 * mu * x).exp()
                } else {
                    (-2.0 * mu * x).exp()
                };
                let wj = if j < m {
                    (2.0 * mu * x).exp()
                } else {
                    (-2.0 * mu * x).exp()
                };
                // Off-diagonal entries only couple within a block, where the
                // weights agree.
                out[(i, j)] *= (wi * wj).sqrt();
            }
        }
        out
    };

    // Interior over x: endpoint evaluation is exact when the x-dependence
    // factors out; block weights rule out the diagonal-source shortcut.
    let endpoint_exact = mu == 0.0 || m == 0 || m == n;
    let interior_margin = if endpoint_exact {
        let m0 = psd_margin(&interior_slack_block(mode, mu, nu, &qx(0.0)))?;
        let m1 = psd_margin(&interior_slack_block(mode, mu, nu, &qx(1.0)))?;
        m0.min(m1)
    } else {
        match x_check {
            XCheck::Grid(n_x) => {
                let n_x = n_x.max(2);
                let mut worst = f64::INFINITY;
                for j in 0..n_x {
                    let x = j as f64 / (n_x - 1) as f64;
                    worst = worst.min(psd_margin(&interior_slack_block(mode, mu, nu, &qx(x)))?);
                }
                worst
            }
            XCheck::Interval => {
                // Entrywise envelope from the endpoint evaluations; each entry
                // carries a single exponential factor, hence is monotone.
                let s0 = interior_slack_block(mode, mu, nu, &qx(0.0));
                let s1 = interior_slack_block(mode, mu, nu, &qx(1.0));
                let (s0, s1) = (s0.as_matrix(), s1.as_matrix());
                let mut mid = DMatrix::<f64>::zeros(n, n);
                let mut rad = DMatrix::<f64>::zeros(n, n);
                for a in 0..n {
                    for b in 0..n {
                        let (lo, hi) = if s0[(a, b)] <= s1[(a, b)] {
                            (s0[(a, b)], s1[(a, b)])
                        } else {
                            (s1[(a, b)], s0[(a, b)])
                        };
                        mid[(a, b)] = 0.5 * (lo + hi);
                        rad[(a, b)] = 0.5 * (hi - lo);
                    }
                }
                psd_margin(&SymMatrix::symmetrize(mid))? - max_row_sum(&rad)
            }
        }
    };

    let boundary_margin = psd_margin(&boundary_slack_block(mode, &qx(0.0), &qx(1.0)))?;
    Ok(SingleModeReport {
        ok: interior_margin >= -TOL_FEAS && boundary_margin >= -TOL_FEAS,
        interior_margin,
        boundary_margin,
    })
}

/// Common-Lyapunov interpretation for all-positive velocities (`m = 0`):
/// `V(y) = y^T M y` must decay along `dy/dt = (Lambda^{-1} F - mu I) y` and
/// contract under `y -> e^{mu} G y`.
pub fn check_ode_pair(mode: &Mode, mu: f64, m_diag: &DVector<f64>) -> Result<bool, CertError> {
    if mode.m() != 0 {
        return Err(CertError::WrongSignStructure(format!(
            "requires m = 0, got m = {}",
            mode.m()
        )));
    }
    if m_diag.len() != mode.n() || m_diag.iter().any(|&v| v <= 0.0) {
        return Err(CertError::CertificateMismatch(
            "M must be a positive diagonal".into(),
        ));
    }
    let n = mode.n();
    let lam_inv = DMatrix::from_diagonal(&mode.lambda().map(|l| 1.0 / l));
    let mm = DMatrix::from_diagonal(m_diag);
    let a = &lam_inv * mode.source() - DMatrix::identity(n, n) * mu;
    let cont = SymMatrix::symmetrize(a.transpose() * &mm + &mm * &a);
    let (evals, _) = sym_eig(&cont)?;
    let continuous_ok = evals[evals.len() - 1] < 0.0;
    let g = mode.coupling();
    let disc = SymMatrix::symmetrize(&mm - g.transpose() * &mm * g * (2.0 * mu).exp());
    let discrete_ok = psd_margin(&disc)? >= -TOL_FEAS;
    Ok(continuous_ok && discrete_ok)
}

pub(crate) fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ma, mb) = (a.nrows(), b.nrows());
    let mut out = DMatrix::<f64>::zeros(ma + mb, ma + mb);
    out.view_mut((0, 0), (ma, ma)).copy_from(a);
    out.view_mut((ma, ma), (mb, mb)).copy_from(b);
    out
}
