//! Cross-checks the neuron integrator against an independently written
//! fine-step reference, freezes the canonical firing-pattern labels, and
//! property-tests the reset and the spike-to-control bridge.

use proptest::prelude::*;

use neuroswitch::netlist::Waveform;
use neuroswitch::neuron::{
    classify_pattern, izh_step, preset, resting_state, run_neuron, run_neuron_from,
    spikes_to_control, IzhParams, PatternClass, SpikeTrain, DEFAULT_ANALYSIS_WINDOW_SKIP,
};

/// Reference integrator, written independently of the library: forward
/// Euler on the two-variable membrane model, recovery updated from the
/// pre-step voltage, hard reset on the peak. Returns spike times in
/// model-ms.
fn reference_spike_times(
    (a, b, c, d): (f64, f64, f64, f64),
    i: f64,
    duration_ms: f64,
    dt_ms: f64,
) -> Vec<f64> {
    let mut v = c;
    let mut u = b * c;
    let mut spikes = Vec::new();
    let steps = (duration_ms / dt_ms).round() as usize;
    for k in 1..=steps {
        let dv = 0.04 * v * v + 5.0 * v + 140.0 - u + i;
        let du = a * (b * v - u);
        let v_next = v + dt_ms * dv;
        let u_next = u + dt_ms * du;
        if v_next >= 30.0 {
            spikes.push(dt_ms * k as f64);
            v = c;
            u = u_next + d;
        } else {
            v = v_next;
            u = u_next;
        }
    }
    spikes
}

fn production_times_ms(class: PatternClass, i: f64, dt_ms: f64) -> (Vec<f64>, PatternClass) {
    let p = preset(class).unwrap();
    let (_, train) = run_neuron(&p, &Waveform::Dc(i), 1000.0, dt_ms);
    let label = classify_pattern(&train, DEFAULT_ANALYSIS_WINDOW_SKIP);
    let ms = train.spike_times_s.iter().map(|t| t / p.time_scale).collect();
    (ms, label)
}

#[test]
fn fine_step_reference_confirms_the_first_five_spikes() {
    let cases = [
        (PatternClass::Rs, (0.02, 0.2, -65.0, 8.0), PatternClass::Tonic),
        (
            PatternClass::Ib,
            (0.02, 0.2, -55.0, 4.0),
            PatternClass::InitialBurstThenTonic,
        ),
        (PatternClass::Ch, (0.02, 0.2, -50.0, 2.0), PatternClass::Chattering),
        (PatternClass::Fs, (0.1, 0.2, -65.0, 2.0), PatternClass::Tonic),
    ];
    for (class, abcd, want_label) in cases {
        let (got_ms, label) = production_times_ms(class, 10.0, 0.1);
        assert_eq!(label, want_label, "{class}");

        let ref_ms = reference_spike_times(abcd, 10.0, 1000.0, 0.01);
        assert!(ref_ms.len() >= 5, "{class}: reference found {}", ref_ms.len());
        for (k, (&got, &reference)) in got_ms.iter().zip(&ref_ms).take(5).enumerate() {
            assert!(
                (got - reference).abs() <= 2.0,
                "{class} spike {k}: {got} vs reference {reference} model-ms"
            );
        }
    }
}

#[test]
fn fast_spiking_outpaces_regular_spiking() {
    let (rs, _) = production_times_ms(PatternClass::Rs, 10.0, 0.1);
    let (fs, _) = production_times_ms(PatternClass::Fs, 10.0, 0.1);
    assert!(
        fs.len() > rs.len(),
        "FS fired {} vs RS {}",
        fs.len(),
        rs.len()
    );
    assert_eq!(rs.len(), 23);
    assert_eq!(fs.len(), 130);
}

#[test]
fn canonical_spike_times_are_frozen() {
    let (rs, _) = production_times_ms(PatternClass::Rs, 10.0, 0.1);
    let (fs, _) = production_times_ms(PatternClass::Fs, 10.0, 0.1);
    let close = |got: &[f64], want: &[f64]| {
        got.iter()
            .zip(want)
            .all(|(g, w)| (g - w).abs() < 1e-9)
    };
    assert!(
        close(&rs[..5], &[3.4, 27.1, 72.2, 117.3, 162.4]),
        "RS drifted: {:?}",
        &rs[..5]
    );
    assert!(
        close(&fs[..5], &[3.4, 8.0, 14.3, 21.8, 29.5]),
        "FS drifted: {:?}",
        &fs[..5]
    );
}

#[test]
fn spike_count_rises_monotonically_with_drive() {
    let p = preset(PatternClass::Rs).unwrap();
    let counts: Vec<usize> = [5.0, 10.0, 15.0, 20.0]
        .iter()
        .map(|&i| run_neuron(&p, &Waveform::Dc(i), 1000.0, 0.1).1.spike_count())
        .collect();
    assert_eq!(counts, vec![11, 23, 34, 45]);
    assert!(counts.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn halving_the_step_shifts_spikes_by_less_than_ten_coarse_steps() {
    for class in [PatternClass::Rs, PatternClass::Fs] {
        for dt in [0.1, 0.05] {
            let (coarse, _) = production_times_ms(class, 10.0, dt);
            let (fine, _) = production_times_ms(class, 10.0, dt / 2.0);
            let max_shift = coarse
                .iter()
                .zip(&fine)
                .take(5)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(
                max_shift < 10.0 * dt,
                "{class} at dt={dt}: first-five shift {max_shift} model-ms"
            );
        }
    }
}

#[test]
fn remaining_presets_keep_their_labels() {
    for (class, want) in [
        (PatternClass::Lts, PatternClass::InitialBurstThenTonic),
        (PatternClass::Tc, PatternClass::Tonic),
        (PatternClass::Rz, PatternClass::Tonic),
    ] {
        let (_, label) = production_times_ms(class, 10.0, 0.1);
        assert_eq!(label, want, "{class}");
    }
}

#[test]
fn classifier_handles_synthetic_trains() {
    let skip = DEFAULT_ANALYSIS_WINDOW_SKIP;
    let even: Vec<f64> = (0..50).map(|k| 0.02 * f64::from(k) + 0.01).collect();
    assert_eq!(
        classify_pattern(&SpikeTrain::new(even, 1.1), skip),
        PatternClass::Tonic
    );

    // Triplets of short intervals separated by long gaps.
    let mut bursty = Vec::new();
    for group in 0..5 {
        let base = 0.2 * f64::from(group);
        bursty.extend([base, base + 0.001, base + 0.002]);
    }
    assert_eq!(
        classify_pattern(&SpikeTrain::new(bursty, 1.0), skip),
        PatternClass::Chattering
    );

    assert_eq!(
        classify_pattern(&SpikeTrain::new(vec![], 1.0), skip),
        PatternClass::Silent
    );
    assert_eq!(
        classify_pattern(&SpikeTrain::new(vec![0.5], 1.0), skip),
        PatternClass::SilentOrInsufficient
    );
    assert_eq!(
        classify_pattern(&SpikeTrain::new(vec![0.4, 0.6], 1.0), skip),
        PatternClass::SilentOrInsufficient
    );
}

#[test]
fn presets_rest_quietly_without_drive() {
    for class in PatternClass::presets() {
        let p = preset(class).unwrap();
        let rest = resting_state(&p).expect("presets have a stable rest");
        let (_, train) = run_neuron_from(&p, rest, &Waveform::Dc(0.0), 500.0, 0.1);
        assert_eq!(train.spike_count(), 0, "{class} fired from rest");
        assert_eq!(
            classify_pattern(&train, DEFAULT_ANALYSIS_WINDOW_SKIP),
            PatternClass::Silent
        );
    }
}

#[test]
fn resonator_fires_once_from_the_default_start() {
    // The conventional (c, b·c) start is not RZ's equilibrium: it relaxes
    // with one spike on the way, a known quirk of that parameter corner.
    let p = preset(PatternClass::Rz).unwrap();
    let (_, train) = run_neuron(&p, &Waveform::Dc(0.0), 1000.0, 0.1);
    assert_eq!(train.spike_count(), 1);
    assert!((train.spike_times_s[0] / p.time_scale - 20.7).abs() < 1e-9);
}

#[test]
fn spike_train_json_round_trips() {
    let train = SpikeTrain::new(vec![1e-6, 2.5e-6, 7.75e-6], 1e-5);
    let back = SpikeTrain::from_json(&train.to_json()).unwrap();
    assert_eq!(back.spike_times_s, train.spike_times_s);
    assert_eq!(back.duration_s, train.duration_s);
}

proptest! {
    /// The post-spike state is exactly (c, u + d) — no drift through the
    /// reset, whatever the parameters or drive.
    #[test]
    fn reset_lands_exactly_on_c_and_u_plus_d(
        a in 0.01f64..0.12,
        b in 0.18f64..0.27,
        c in -70.0f64..-45.0,
        d in 0.05f64..8.5,
        i in 8.0f64..25.0,
    ) {
        let p = IzhParams::new(a, b, c, d);
        let mut state = p.initial_state();
        let mut spike_checked = false;
        for _ in 0..20_000 {
            let pre = state;
            let (next, spiked) = izh_step(state, &p, i, 0.1);
            if spiked {
                let u_next = pre.u + 0.1 * a * (b * pre.v - pre.u);
                prop_assert_eq!(next.v, c);
                prop_assert_eq!(next.u, u_next + d);
                spike_checked = true;
                break;
            }
            state = next;
        }
        prop_assert!(spike_checked, "drive {i} never fired within 2 s of model time");
    }

    /// Control pulses sit above threshold for exactly the commanded width,
    /// and merged pulses never overlap or go backwards in time.
    #[test]
    fn control_waveform_keeps_commanded_on_time(
        isis in prop::collection::vec(1e-6f64..1e-4, 1..20),
        pulse_width in 1e-8f64..5e-7,
    ) {
        let mut t = 1e-6;
        let mut spikes = Vec::with_capacity(isis.len() + 1);
        spikes.push(t);
        for isi in &isis {
            t += isi;
            spikes.push(t);
        }
        let duration = t + 1e-3;
        let n_spikes = spikes.len();
        let min_isi = isis.iter().cloned().fold(f64::INFINITY, f64::min);

        let w = spikes_to_control(&SpikeTrain::new(spikes, duration), pulse_width, 3.3, 0.0);
        let Waveform::Pwl(pts) = w else { panic!("expected a PWL control") };
        prop_assert_eq!(pts.len() % 4, 0);
        for pair in pts.windows(2) {
            prop_assert!(pair[0].0 < pair[1].0, "time must strictly increase: {:?}", pair);
        }

        let edge = 1e-9f64.min(pulse_width / 2.0);
        // Rise crosses the midpoint at s + edge/2, fall at e + edge/2, so
        // each group holds the control above threshold for exactly e − s.
        let hi_time: f64 = pts.chunks(4).map(|q| q[2].0 - q[0].0).sum();
        if min_isi > pulse_width + edge {
            // No merging: every spike contributes exactly one pulse width.
            prop_assert_eq!(pts.len(), 4 * n_spikes);
            prop_assert!(
                (hi_time - pulse_width * n_spikes as f64).abs() < 1e-15 * n_spikes as f64 + 1e-18,
                "hi time {hi_time:e} vs commanded {:e}",
                pulse_width * n_spikes as f64
            );
        } else {
            // Merging only ever lengthens coverage, never past the span.
            prop_assert!(hi_time >= pulse_width * (1.0 - 1e-12));
            let span = pts.last().unwrap().0 - pts[0].0;
            prop_assert!(hi_time <= span);
        }
    }
}

#[test]
fn empty_trains_produce_a_constant_low_control() {
    let w = spikes_to_control(&SpikeTrain::new(vec![], 1e-3), 1e-7, 3.3, 0.0);
    assert_eq!(w, Waveform::Dc(0.0));
}

#[test]
fn state_variables_stay_finite_across_presets() {
    for class in PatternClass::presets() {
        let p = preset(class).unwrap();
        let (trace, _) = run_neuron(&p, &Waveform::Dc(10.0), 1000.0, 0.1);
        for s in &trace.samples {
            assert!(s.v.is_finite() && s.u.is_finite(), "{class} diverged");
            assert!(s.v <= p.v_peak + 1e-12, "{class}: trace exceeds the peak clamp");
        }
    }
}

#[test]
fn trace_rows_align_with_the_time_grid() {
    let p = preset(PatternClass::Rs).unwrap();
    let (trace, train) = run_neuron(&p, &Waveform::Dc(10.0), 100.0, 0.1);
    assert_eq!(trace.samples.len(), 1001); // t = 0 plus 1000 steps
    let s0 = &trace.samples[0];
    assert_eq!((s0.t_model_ms, s0.v), (0.0, p.c));
    let last = trace.samples.last().unwrap();
    assert!((last.t_model_ms - 100.0).abs() < 1e-9);
    assert!((last.t_seconds - 100.0 * p.time_scale).abs() < 1e-18);

    // Spikes recorded in the train are flagged in the trace at the same row.
    let flagged: Vec<f64> = trace
        .samples
        .iter()
        .filter(|s| s.spiked)
        .map(|s| s.t_seconds)
        .collect();
    assert_eq!(flagged, train.spike_times_s);
}
