//! Dwell bounds for a scalar system whose transport direction switches.
//!
//! Mode 1 carries the state rightward, mode 2 leftward; both share the
//! source `F` and boundary gain `G`. For `F < -ln(G)` each mode is stable,
//! and the searched bound converges to the analytic optimum
//! `2 |ln G| / |ln G + F|` as the line search refines.
//!
//! Run with: `cargo run --release --example dwell_search_scalar`

use nalgebra::{DMatrix, DVector};

use dwellcert::cert::{certify, CertifyOutcome, SearchOptions, Variant};
use dwellcert::model::{Mode, SwitchedSystem};

fn scalar_pair(f: f64, g: f64) -> SwitchedSystem {
    let mk = |lambda: f64| {
        Mode::from_characteristic(
            DVector::from_vec(vec![lambda]),
            if lambda < 0.0 { 1 } else { 0 },
            DMatrix::from_element(1, 1, f),
            DMatrix::from_element(1, 1, g),
        )
        .unwrap()
    };
    SwitchedSystem::new(vec![mk(1.0), mk(-1.0)]).unwrap()
}

fn main() {
    for (f, g) in [(-1.0, 2.0), (0.1, 0.5)] {
        let system = scalar_pair(f, g);
        let analytic = 2.0 * g.ln().abs() / (g.ln() + f).abs();
        let options = SearchOptions {
            refine_rounds: 6,
            ..SearchOptions::default()
        };
        match certify(&system, Variant::DwellSignFree, &options).unwrap() {
            CertifyOutcome::Certificate(cert) => {
                println!("F = {f:+}, G = {g}:");
                println!("  searched tau_D = {:.5}", cert.tau_d);
                println!("  analytic optimum = {analytic:.5}");
                println!(
                    "  at mu = {:.5}, nu = {:.5}, gamma = {}",
                    cert.mu[0], cert.nu, cert.gamma
                );
            }
            CertifyOutcome::Infeasible { best_margin } => {
                println!("F = {f:+}, G = {g}: infeasible (margin {best_margin:.3e})");
            }
        }
    }
}
