//! Lyapunov stability certificates for switched linear hyperbolic systems.
//!
//! Every test reduces to a family of small matrix inequalities in diagonal
//! weights `Q_i`, evaluated through slack matrices whose smallest eigenvalue
//! is the feasibility margin:
//!
//! * a single-mode check ([`check_single_mode`]) and its positive-velocity
//!   discrete/continuous interpretation ([`check_ode_pair`]);
//! * common-weight certificates valid under arbitrary switching, either with
//!   a mode-independent sign structure and coupled `S_i`-weights
//!   ([`Variant::CommonSignFixed`]) or a mode-dependent one
//!   ([`Variant::CommonSignFree`]);
//! * per-mode certificates with a jump factor `gamma` and an average
//!   dwell-time bound `tau_D = ln(gamma)/(2 nu) + Delta_mu / nu`
//!   ([`Variant::DwellSignFixed`], [`Variant::DwellSignFree`]);
//! * fast paths that restrict to `mu = 0`, diagonal sources or one-signed
//!   velocity matrices ([`Variant::MuZero`], [`Variant::DiagonalSource`],
//!   [`Variant::OneSigned`]).
//!
//! [`certify`] runs a line search over `mu` (with local grid refinement)
//! around a bisection on the rate `nu`; each inner feasibility problem in the
//! stacked diagonal entries of the `Q_i` is solved by a cutting-plane method
//! with minimum-eigenvector cuts over a simplex master problem.

mod audit;
mod feas;
mod lp;
mod search;
mod slack;

pub use audit::{check_certificate, AuditEntry, AuditReport};
pub use feas::{feasibility_fixed, FeasOutcome, FeasibleData};
pub use search::{certify, dwell_time_bound, CertifyOutcome};
pub use slack::{
    boundary_lmi_slack, check_interior_over_x, check_ode_pair, check_single_mode,
    interior_lmi_slack, InteriorCheck, SingleModeReport,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::LinalgError;
use crate::model::ModelError;

/// Lower bound kept on every diagonal weight entry during the search.
pub const Q_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum CertError {
    #[error("variant precondition violated: {0}")]
    VariantPrecondition(String),
    #[error("weight kernels are incompatible across modes; no finite jump factor exists")]
    KernelMismatch,
    #[error("weights do not commute with the velocity matrix")]
    CommutationViolated,
    #[error("the certified rate must be positive (got {0})")]
    InvalidRate(f64),
    #[error("sign structure mismatch: {0}")]
    WrongSignStructure(String),
    #[error("certificate does not match the system: {0}")]
    CertificateMismatch(String),
    #[error("linear algebra failure: {0}")]
    Linalg(#[from] LinalgError),
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("internal solver failure: {0}")]
    Solver(String),
}

/// Which stability test a certificate instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Single unswitched mode.
    Unswitched,
    /// Common weights, equal negative-velocity count across modes.
    CommonSignFixed,
    /// Per-mode weights with a dwell-time bound, equal sign structure.
    DwellSignFixed,
    /// Common weights, mode-dependent sign structure (x-independent form).
    CommonSignFree,
    /// Per-mode weights with a dwell-time bound, mode-dependent signs.
    DwellSignFree,
    /// Common weights restricted to `mu = 0` (linear-in-`nu` form).
    MuZero,
    /// Common weights with diagonal sources: the interior inequality reduces
    /// to scalar conditions independent of the weights.
    DiagonalSource,
    /// Common weights when all velocities share one sign.
    OneSigned,
}

impl Variant {
    pub fn is_dwell(self) -> bool {
        matches!(self, Variant::DwellSignFixed | Variant::DwellSignFree)
    }

    /// Variants whose weights are coupled across modes by exact equalities.
    pub fn couples_weights(self) -> bool {
        matches!(
            self,
            Variant::CommonSignFixed
                | Variant::CommonSignFree
                | Variant::MuZero
                | Variant::DiagonalSource
                | Variant::OneSigned
        )
    }

    /// Couplings act on the minus/plus weight families separately when the
    /// sign structure is mode-independent, and on the full weight matrix when
    /// it is not.
    pub fn couples_by_family(self) -> bool {
        !matches!(self, Variant::CommonSignFree | Variant::DwellSignFree)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Unswitched => "unswitched",
            Variant::CommonSignFixed => "common-sign-fixed",
            Variant::DwellSignFixed => "dwell-sign-fixed",
            Variant::CommonSignFree => "common-sign-free",
            Variant::DwellSignFree => "dwell-sign-free",
            Variant::MuZero => "mu-zero",
            Variant::DiagonalSource => "diagonal-source",
            Variant::OneSigned => "one-signed",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unswitched" => Ok(Variant::Unswitched),
            "common-sign-fixed" => Ok(Variant::CommonSignFixed),
            "dwell-sign-fixed" => Ok(Variant::DwellSignFixed),
            "common-sign-free" => Ok(Variant::CommonSignFree),
            "dwell-sign-free" => Ok(Variant::DwellSignFree),
            "mu-zero" => Ok(Variant::MuZero),
            "diagonal-source" => Ok(Variant::DiagonalSource),
            "one-signed" => Ok(Variant::OneSigned),
            other => Err(format!("unknown variant '{other}'")),
        }
    }
}

/// How the x-dependent interior inequality is checked over `[0, 1]`.
///
/// `Grid(N)` samples `N` uniform points including both endpoints; fast but,
/// for non-diagonal sources with `mu != 0`, unsound in principle. `Interval`
/// encloses every entry of the slack over `x` by monotonicity of the
/// exponentials and certifies via a midpoint-radius eigenvalue bound; sound
/// but conservative. Exact endpoint evaluation is applied automatically
/// whenever the slack's dependence on `x` factors out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XCheck {
    Grid(usize),
    Interval,
}

impl Default for XCheck {
    fn default() -> Self {
        XCheck::Grid(65)
    }
}

/// Bisection bracket for the certified rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NuBisect {
    pub lo: f64,
    /// Upper end; `None` picks `max_i ||F_i|| + max|mu| max|lambda| + 1`.
    pub hi: Option<f64>,
    pub iters: usize,
}

impl Default for NuBisect {
    fn default() -> Self {
        NuBisect {
            lo: 0.0,
            hi: None,
            iters: 40,
        }
    }
}

/// A fully specified candidate to evaluate instead of searching.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WarmStart {
    /// Per-mode diagonal weight entries.
    pub q: Vec<Vec<f64>>,
    /// Per-mode `mu` values (a single entry is broadcast to all modes).
    pub mu: Vec<f64>,
    pub nu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchOptions {
    /// Candidate `mu` values for the line search.
    pub mu_grid: Vec<f64>,
    pub nu_bisect: NuBisect,
    pub x_check: XCheck,
    pub tol_feas: f64,
    pub max_feas_iters: usize,
    /// Local grid-refinement rounds around the incumbent after the coarse
    /// pass; each round shrinks the step by 5x.
    pub refine_rounds: usize,
    /// Forces the jump factor to 1 in dwell variants by imposing the
    /// corresponding common-variant equality couplings and a shared `mu`.
    pub force_gamma_one: bool,
    /// Evaluate this candidate directly instead of searching.
    pub warm_start: Option<WarmStart>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            mu_grid: default_mu_grid(),
            nu_bisect: NuBisect::default(),
            x_check: XCheck::default(),
            tol_feas: crate::linalg::TOL_FEAS,
            max_feas_iters: 80,
            refine_rounds: 4,
            force_gamma_one: false,
            warm_start: None,
        }
    }
}

/// 41 uniform points on [-3, 3].
pub fn default_mu_grid() -> Vec<f64> {
    (0..41).map(|k| -3.0 + 0.15 * k as f64).collect()
}

/// One audited inequality and its smallest-eigenvalue slack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginRecord {
    pub label: String,
    pub value: f64,
}

/// A proved Lyapunov certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub variant: Variant,
    /// Per-mode diagonal entries of the weights `Q_i`.
    pub q: Vec<Vec<f64>>,
    /// Per-mode `mu_i` (equal entries for single-`mu` variants, zeros for
    /// the x-independent ones).
    pub mu: Vec<f64>,
    /// Certified exponential decay rate of the Lyapunov functional.
    pub nu: f64,
    /// Jump factor at switches (1 for common-weight variants).
    pub gamma: f64,
    /// Guaranteed average dwell time; 0 means arbitrary switching.
    pub tau_d: f64,
    /// Per-inequality smallest-eigenvalue slacks recorded for audit.
    pub margins: Vec<MarginRecord>,
}

impl Certificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serialization")
    }

    pub fn from_json(text: &str) -> Result<Self, CertError> {
        serde_json::from_str(text).map_err(|e| CertError::CertificateMismatch(e.to_string()))
    }
}
