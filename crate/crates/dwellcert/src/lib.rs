//! Certification and simulation toolkit for switched one-dimensional linear
//! hyperbolic systems (conservation and balance laws).
//!
//! The crate answers two questions about a system that switches between a
//! finite set of hyperbolic modes, each of the form
//!
//! ```text
//! ∂t w + L_i ∂x w = A_i w           on x ∈ [0, 1]
//! B0_i w(t,0) + B1_i w(t,1) = 0     at the boundaries
//! ```
//!
//! 1. **Is it exponentially stable, and under which switching signals?**
//!    [`cert`] searches for weighted-L² Lyapunov certificates defined by
//!    small matrix inequalities. Common-weight certificates prove stability
//!    under arbitrary switching; per-mode certificates prove stability for
//!    all signals with a large enough average dwell time and come with an
//!    explicit bound `τ_D`.
//! 2. **Does the bound agree with what trajectories do?** [`sim`] integrates
//!    the switched PDE with a first-order upwind scheme in characteristic
//!    variables, tracks the L² norm and the certified Lyapunov functional,
//!    and fits observed decay rates for cross-validation.
//!
//! Supporting modules: [`model`] holds the system data types and the
//! physical ↔ characteristic conversions, [`signals`] builds and validates
//! switching signals (including the average-dwell-time class), [`linalg`]
//! provides the small dense symmetric kernels the certifier needs, and
//! [`cli`] wires everything into batch commands with JSON/CSV artifacts.
//!
//! Run `cargo run --example certify_common` (or any other example) for a
//! guided tour; the `dwellcert` binary exposes the same operations as
//! subcommands.

pub mod cert;
pub mod cli;
pub mod linalg;
pub mod model;
pub mod plot;
pub mod signals;
pub mod sim;

pub use cert::{certify, check_certificate, dwell_time_bound, Certificate, SearchOptions, Variant};
pub use model::{Mode, SwitchedSystem};
pub use signals::SwitchingSignal;
pub use sim::{estimate_decay, simulate, GridSpec, Trace};
