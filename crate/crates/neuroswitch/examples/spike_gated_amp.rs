//! The end-to-end story: a fast-spiking neuron's spike train gates the
//! amplifier's supply rails, the amplifier still amplifies inside each ON
//! window, and supply power drops by ~99% at 1% duty.
//!
//! Run with: `cargo run --release --example spike_gated_amp`
//! (release recommended; the gated transient takes a while unoptimized)

use neuroswitch::neuron::PatternClass;
use neuroswitch::scenarios::{run_spike_gated_amp, AmpSpec};

fn main() {
    let run = run_spike_gated_amp(
        &AmpSpec::default(),
        PatternClass::Fs, // fast-spiking: dense train, short gate period
        None,             // pulse width defaults to 1% of the median ISI
        2.0,              // differential input amplitude, mV
        100e-6,           // simulated span, s
    )
    .expect("scenario runs");

    println!(
        "neuron: {} spikes in 100 µs, median period {:.2} µs",
        run.spike_train.spike_count(),
        run.spike_train.median_isi().unwrap() * 1e6
    );
    println!(
        "gate:   pulse width {:.1} ns → commanded duty {:.4}",
        run.pulse_width * 1e9,
        run.commanded_duty
    );
    println!("amp:    measured gain {:.0}", run.measured_gain);
    println!();

    println!("supply power (both rails):");
    println!("  always-on        {:.3e} W", run.measured_always_on_w);
    println!("  inside ON window {:.3e} W", run.measured_on_w);
    println!("  gated average    {:.3e} W", run.measured_avg_w);
    println!("  savings          {:.2}%", run.measured_savings * 100.0);
    println!();

    // The analytic model sees only card-level inputs (capacitance from the
    // gate geometry, measured tail bias, spike frequency) yet lands on the
    // same numbers.
    println!("analytic model reconciliation:");
    println!(
        "  static power     {:.3e} W (model) vs {:.3e} W (measured always-on)",
        run.analytic.p_total_unswitched, run.measured_always_on_w
    );
    println!(
        "  inferred duty    {:.4} (commanded {:.4})",
        run.reconciliation.duty_inferred, run.commanded_duty
    );
    println!(
        "  ON-window ratio  {:.4} (measured ON / model ON)",
        run.reconciliation.on_ratio
    );

    // The output actually swings while gated ON: the fraction of samples
    // with |vout| above 1 V tracks the duty cycle.
    println!();
    println!(
        "fraction of samples with |vout| > 1 V: {:.4} (duty {:.4})",
        run.on_fraction, run.commanded_duty
    );
}
