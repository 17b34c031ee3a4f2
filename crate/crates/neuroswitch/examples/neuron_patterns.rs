//! Run every Izhikevich preset under the same constant drive and show how
//! the inter-spike-interval classifier labels each firing pattern.
//!
//! Run with: `cargo run --example neuron_patterns`

use neuroswitch::netlist::Waveform;
use neuroswitch::neuron::{
    classify_pattern, preset, run_neuron, PatternClass, DEFAULT_ANALYSIS_WINDOW_SKIP,
};

fn main() {
    let drive = Waveform::Dc(10.0);
    let duration = 1000.0; // model-ms
    let dt = 0.1;

    println!("{:<8} {:>7} {:>12} {:>12}   label", "preset", "spikes", "first (ms)", "median ISI");
    for class in PatternClass::presets() {
        let params = preset(class).expect("presets() yields presets");
        let (_, train) = run_neuron(&params, &drive, duration, dt);
        let label = classify_pattern(&train, DEFAULT_ANALYSIS_WINDOW_SKIP);
        let first = train
            .spike_times_s
            .first()
            .map_or("-".to_string(), |t| format!("{:.1}", t / params.time_scale));
        let median = train
            .median_isi()
            .map_or("-".to_string(), |s| format!("{:.1}", s / params.time_scale));
        println!(
            "{:<8} {:>7} {:>12} {:>12}   {label}",
            class.to_string(),
            train.spike_count(),
            first,
            median
        );
    }

    // Spike counts rise monotonically with drive for a regular-spiking cell.
    println!();
    let rs = preset(PatternClass::Rs).unwrap();
    for i in [5.0, 10.0, 15.0, 20.0] {
        let (_, train) = run_neuron(&rs, &Waveform::Dc(i), duration, dt);
        println!("RS at I={i:>4}: {:>3} spikes", train.spike_count());
    }

    // The classifier also works on trains that never came from the model.
    let even = (0..50).map(|k| 0.02 * f64::from(k) + 0.01).collect::<Vec<_>>();
    let label = classify_pattern(
        &neuroswitch::neuron::SpikeTrain::new(even, 1.0),
        DEFAULT_ANALYSIS_WINDOW_SKIP,
    );
    println!("\n50 evenly spaced synthetic spikes → {label}");
}
