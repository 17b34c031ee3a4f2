//! Analytic duty-cycle power accounting: where the savings come from,
//! where the breakeven sits, and how the simulated circuit agrees.
//!
//! Run with: `cargo run --release --example power_savings`

use neuroswitch::power::{analytic_power, breakeven_duty, duty_sweep, PowerModelInputs};
use neuroswitch::scenarios::run_power_experiment;

fn main() {
    let inputs = PowerModelInputs::reference_amp(0.01);
    let report = analytic_power(&inputs).expect("reference inputs are valid");

    println!("reference six-transistor block, 10 MHz switching:");
    println!("  per-device gate capacitance {:.3e} F", report.c_device);
    println!("  static power, always on     {:.3e} W", report.p_total_unswitched);
    println!("  ON power incl. switches     {:.3e} W", report.p_total_switched_on);
    println!();

    // Savings vs duty: the OFF state consumes nothing, so average power is
    // duty-proportional and savings approach 1 as duty → 0 — until the
    // switch overhead eats the margin at high duty.
    println!("{:>8} {:>14} {:>10}", "duty", "p_avg (W)", "savings");
    let duties = [0.001, 0.01, 0.05, 0.1, 0.3, 0.6, 0.9, 1.0];
    for row in duty_sweep(&inputs, &duties).unwrap() {
        println!(
            "{:>8} {:>14.3e} {:>10.4}",
            row.duty, row.p_average_switched, row.savings_fraction
        );
    }

    // With 6 core devices and 4 switch devices, duty above 6/10 costs more
    // than never switching at all.
    let be = breakeven_duty(inputs.n_core, inputs.n_switch);
    println!("breakeven duty = {be} (savings change sign here)");
    println!();

    // Now the same sweep measured from transient simulation of the actual
    // amplifier, supply-gated by a pulse source at each duty. The switch
    // devices are behavioral (no gate charge), so compare against the
    // no-overhead model.
    let sim_inputs = PowerModelInputs {
        n_switch: 0,
        ..PowerModelInputs::reference_amp(0.01)
    };
    let duties = [0.01, 0.1, 0.5, 1.0];
    let experiment = run_power_experiment(&sim_inputs, &duties).expect("experiment runs");
    println!(
        "simulated amplifier (gain {:.0}), always-on draw {:.3e} W:",
        experiment.measured_gain, experiment.always_on_avg_w
    );
    println!("{:>8} {:>14} {:>14}", "duty", "sav (model)", "sav (sim)");
    for row in &experiment.rows {
        println!(
            "{:>8} {:>14.4} {:>14.4}",
            row.duty, row.analytic.savings_fraction, row.measured_savings
        );
    }
}
