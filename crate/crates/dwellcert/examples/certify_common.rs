//! Certify a switched wave-splitting system under arbitrary switching.
//!
//! Two modes share the transport `diag(-1, 1)` and a diagonal damping source;
//! only the boundary reflection coefficients switch. A common-weight
//! certificate proves exponential stability for every switching signal.
//!
//! Run with: `cargo run --release --example certify_common`

use nalgebra::{DMatrix, DVector};

use dwellcert::cert::{certify, check_certificate, CertifyOutcome, SearchOptions, Variant};
use dwellcert::model::{Mode, SwitchedSystem};

fn main() {
    let damping = DMatrix::from_diagonal(&DVector::from_vec(vec![-0.3, -0.3]));
    let lambda = DVector::from_vec(vec![-1.0, 1.0]);
    let g1 = DMatrix::from_row_slice(2, 2, &[0.0, -1.2, 0.6, 0.0]);
    let g2 = DMatrix::from_row_slice(2, 2, &[0.0, -0.6, 1.2, 0.0]);
    let system = SwitchedSystem::new(vec![
        Mode::from_characteristic(lambda.clone(), 1, damping.clone(), g1).unwrap(),
        Mode::from_characteristic(lambda, 1, damping, g2).unwrap(),
    ])
    .unwrap();

    let options = SearchOptions {
        refine_rounds: 6,
        ..SearchOptions::default()
    };
    match certify(&system, Variant::CommonSignFixed, &options).unwrap() {
        CertifyOutcome::Certificate(cert) => {
            println!("certificate found:");
            println!("  mu     = {:?}", cert.mu);
            println!("  nu     = {:.6}", cert.nu);
            println!("  Q      = {:?}", cert.q);
            println!("  tau_D  = {} (arbitrary switching)", cert.tau_d);
            let audit = check_certificate(&system, &cert, &options).unwrap();
            println!("audit pass = {}", audit.pass);
            for entry in audit.entries.iter().take(8) {
                println!("  {:<28} margin {:+.3e}", entry.label, entry.value);
            }
        }
        CertifyOutcome::Infeasible { best_margin } => {
            println!("no certificate; best margin {best_margin:.3e}");
        }
    }

    // A hand-picked candidate can be validated directly through a warm start.
    let warm = SearchOptions {
        warm_start: Some(dwellcert::cert::WarmStart {
            q: vec![vec![1.5, 1.0], vec![1.5, 1.0]],
            mu: vec![-0.2],
            nu: 0.1,
        }),
        ..SearchOptions::default()
    };
    let out = certify(&system, Variant::CommonSignFixed, &warm).unwrap();
    println!(
        "candidate (mu = -0.2, nu = 0.1, Q = diag(1.5, 1)) feasible: {}",
        out.certificate().is_some()
    );
}
