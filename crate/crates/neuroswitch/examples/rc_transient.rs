//! Transient-simulate an RC charging circuit and compare every sample
//! against the closed-form exponential.
//!
//! Run with: `cargo run --example rc_transient`

use neuroswitch::engine::{transient, Method, SimOptions};
use neuroswitch::netlist::parse_netlist;

const DECK: &str = "\
* 1k / 1n rc charging from a 1 V step
V1 in 0 DC 1
R1 in out 1k
C1 out 0 1n ic=0
.end
";

fn main() {
    let n = parse_netlist(DECK).expect("deck parses");
    let tau = 1e3 * 1e-9; // R·C = 1 µs

    for method in [Method::BackwardEuler, Method::Trapezoidal] {
        let mut opts = SimOptions::new(tau / 100.0, 5.0 * tau);
        opts.method = method;
        let w = transient(&n, &opts).expect("transient converges");

        let vout = w.node("out").unwrap();
        let max_err = w
            .times()
            .iter()
            .zip(vout)
            .map(|(&t, &v)| (v - (1.0 - (-t / tau).exp())).abs())
            .fold(0.0f64, f64::max);
        println!(
            "{method:?}: {} samples, final v(out) = {:.6} V, max |error| = {:.3e} V",
            w.times().len(),
            vout.last().unwrap(),
            max_err
        );
    }

    // Trapezoidal integration is second-order: halving dt cuts the error
    // by about 4×.
    let err_at = |dt_div: f64| {
        let opts = SimOptions::new(tau / dt_div, 5.0 * tau);
        let w = transient(&n, &opts).expect("transient converges");
        let vout = w.node("out").unwrap();
        w.times()
            .iter()
            .zip(vout)
            .map(|(&t, &v)| (v - (1.0 - (-t / tau).exp())).abs())
            .fold(0.0f64, f64::max)
    };
    let ratio = err_at(100.0) / err_at(200.0);
    println!("error(dt) / error(dt/2) = {ratio:.2} (≈4 for a second-order method)");
}
