//! Membership in the average-dwell-time class `N(tau, t) <= N0 + (t - tau)/tau_D`.
//!
//! Run with: `cargo run --release --example validate_signal`

use dwellcert::signals::{count_switches, periodic_signal, random_dwell_signal, validate_dwell};

fn main() {
    let tau_d = 2.3105;

    for period in [1.0, 2.4] {
        let sig = periodic_signal(period, &[0, 1], 24.0);
        let (ok, worst) = validate_dwell(&sig, tau_d, 1);
        print!("period {period}: {}", if ok { "inside" } else { "outside" });
        match worst {
            Some(w) => println!(
                " (worst window ({:.2}, {:.2}]: {} switches, {:.3} allowed)",
                w.from, w.to, w.count, w.allowed
            ),
            None => println!(),
        }
    }

    // Generated members of the class stay inside by construction.
    let sig = random_dwell_signal(0, tau_d, 1, 60.0, 2);
    let (ok, _) = validate_dwell(&sig, tau_d, 1);
    println!(
        "random dwell signal: {} switches on [0, 60], inside = {ok}",
        sig.switches.len()
    );
    println!(
        "switch count on (10, 30] = {}",
        count_switches(&sig, 10.0, 30.0)
    );
    println!("signal JSON:\n{}", sig.to_json());
}
