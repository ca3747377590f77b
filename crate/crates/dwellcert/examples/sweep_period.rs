//! Locate the empirical stability boundary of a switching period sweep and
//! compare it with the certified dwell bound (which is sufficient, hence
//! conservative).
//!
//! Run with: `cargo run --release --example sweep_period`

use nalgebra::{DMatrix, DVector};

use dwellcert::cert::{certify, CertifyOutcome, SearchOptions, Variant};
use dwellcert::model::{Mode, SwitchedSystem};
use dwellcert::signals::periodic_signal;
use dwellcert::sim::{estimate_decay, simulate, sine_profile, GridSpec};

fn main() {
    // Scalar direction-switching system, F = -1, G = 2.
    let mk = |lambda: f64| {
        Mode::from_characteristic(
            DVector::from_vec(vec![lambda]),
            if lambda < 0.0 { 1 } else { 0 },
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 2.0),
        )
        .unwrap()
    };
    let system = SwitchedSystem::new(vec![mk(1.0), mk(-1.0)]).unwrap();

    let bound = match certify(
        &system,
        Variant::DwellSignFree,
        &SearchOptions {
            refine_rounds: 6,
            ..SearchOptions::default()
        },
    )
    .unwrap()
    {
        CertifyOutcome::Certificate(c) => c.tau_d,
        CertifyOutcome::Infeasible { .. } => f64::NAN,
    };

    let grid = GridSpec { n_x: 201, cfl: 0.9 };
    let w0 = sine_profile(1, &grid);
    println!("period   fitted-rate");
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for k in 0..26 {
        let period = 1.0 + 0.2 * k as f64;
        let signal = periodic_signal(period, &[0, 1], 28.0);
        let trace = simulate(&system, &signal, &w0, &grid).unwrap();
        let fit = estimate_decay(&trace, None).unwrap();
        println!("{period:6.2}   {:+.4}", fit.rate);
        if let Some((p0, r0)) = prev {
            if r0 <= 0.0 && fit.rate > 0.0 && bracket.is_none() {
                bracket = Some((p0, period));
            }
        }
        prev = Some((period, fit.rate));
    }
    match bracket {
        Some((lo, hi)) => println!("empirical stability boundary inside ({lo}, {hi}]"),
        None => println!("no sign change in the sweep range"),
    }
    println!("certified dwell bound tau_D = {bound:.4} (sufficient only, not tight)");
}
