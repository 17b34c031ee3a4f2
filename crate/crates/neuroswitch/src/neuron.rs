//! Behavioral Izhikevich neuron: forward-Euler integration of the
//! two-variable dynamics, the seven classic parameter presets, a firing-
//! pattern classifier, and conversion of spike trains into switch-control
//! waveforms.
//!
//! The dynamics are `dv/dt = 0.04v² + 5v + 140 − u + I` and
//! `du/dt = a(bv − u)`, with the reset `v ← c`, `u ← u + d` applied when the
//! updated `v` reaches `v_peak`. Model time is in model-milliseconds; the
//! `time_scale` field (seconds per model-ms, default 1e-6) maps spike times
//! onto the circuit timebase, giving microsecond-class spike periods.
//!
//! Everything is deterministic: identical parameters, drive, and step size
//! reproduce identical spike times bit-for-bit.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devices::source_value;
use crate::netlist::Waveform;

/// Spike cutoff (mV) applied to the updated membrane potential.
pub const DEFAULT_V_PEAK: f64 = 30.0;
/// Seconds of circuit time per model-millisecond.
pub const DEFAULT_TIME_SCALE: f64 = 1e-6;
/// Fraction of the run discarded from the front of CV measurements, so a
/// settling transient does not mask steady-state regularity.
pub const DEFAULT_ANALYSIS_WINDOW_SKIP: f64 = 0.1;

/// Burst grouping: an inter-spike interval counts as intra-burst when it is
/// below `BURST_THETA` times the ISI midrange `(min+max)/2`.
const BURST_THETA: f64 = 0.5;
/// Coefficient-of-variation bound under which a spike train is regular.
const CV_TOL: f64 = 0.15;
/// Burst groups must be separated by more than this multiple of the median
/// intra-burst ISI to count as chattering.
const GAP_FACTOR: f64 = 2.0;
/// Rise/fall time of synthesized control edges.
const CONTROL_EDGE_S: f64 = 1e-9;

/// Izhikevich model parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IzhParams {
    /// Recovery time scale (1/model-ms).
    pub a: f64,
    /// Recovery sensitivity to v (dimensionless).
    pub b: f64,
    /// Post-spike reset voltage (mV).
    pub c: f64,
    /// Post-spike recovery increment.
    pub d: f64,
    /// Spike cutoff (mV).
    pub v_peak: f64,
    /// Seconds per model-millisecond.
    pub time_scale: f64,
}

impl IzhParams {
    /// Parameters with the default `v_peak` and `time_scale`.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> IzhParams {
        IzhParams {
            a,
            b,
            c,
            d,
            v_peak: DEFAULT_V_PEAK,
            time_scale: DEFAULT_TIME_SCALE,
        }
    }

    /// Default initial state `(v, u) = (c, b·c)`.
    pub fn initial_state(&self) -> NeuronState {
        NeuronState {
            v: self.c,
            u: self.b * self.c,
        }
    }
}

/// Neuron state: membrane potential and the slow recovery variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronState {
    /// Membrane potential (mV).
    pub v: f64,
    /// Recovery variable.
    pub u: f64,
}

/// Spike times of one run, on the circuit (seconds) timebase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeTrain {
    /// Strictly increasing spike times (s).
    pub spike_times_s: Vec<f64>,
    /// Total simulated time (s).
    pub duration_s: f64,
}

impl SpikeTrain {
    pub fn new(spike_times_s: Vec<f64>, duration_s: f64) -> SpikeTrain {
        debug_assert!(
            spike_times_s.windows(2).all(|w| w[0] < w[1]),
            "spike times must be strictly increasing"
        );
        SpikeTrain { spike_times_s, duration_s }
    }

    pub fn spike_count(&self) -> usize {
        self.spike_times_s.len()
    }

    /// Inter-spike intervals (s); empty for fewer than two spikes.
    pub fn isis(&self) -> Vec<f64> {
        self.spike_times_s.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Median inter-spike interval (s), if at least two spikes exist.
    pub fn median_isi(&self) -> Option<f64> {
        let isis = self.isis();
        if isis.is_empty() {
            None
        } else {
            Some(median(&isis))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spike train serializes")
    }

    pub fn from_json(text: &str) -> Result<SpikeTrain, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Median of a non-empty slice (mean of the two middles for even lengths).
fn median(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in medians"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Firing-pattern vocabulary: the seven named presets plus the coarse labels
/// the classifier can produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatternClass {
    // Parameter presets.
    Rs,
    Ib,
    Ch,
    Fs,
    Lts,
    Tc,
    Rz,
    // Coarse classifier labels.
    Tonic,
    Bursting,
    Chattering,
    InitialBurstThenTonic,
    Silent,
    /// Too few spikes (1 or 2) to classify, but not silent.
    SilentOrInsufficient,
}

impl PatternClass {
    /// Whether this is one of the seven parameter presets.
    pub fn is_preset(&self) -> bool {
        matches!(
            self,
            PatternClass::Rs
                | PatternClass::Ib
                | PatternClass::Ch
                | PatternClass::Fs
                | PatternClass::Lts
                | PatternClass::Tc
                | PatternClass::Rz
        )
    }

    /// All seven preset keys, in canonical order.
    pub fn presets() -> [PatternClass; 7] {
        [
            PatternClass::Rs,
            PatternClass::Ib,
            PatternClass::Ch,
            PatternClass::Fs,
            PatternClass::Lts,
            PatternClass::Tc,
            PatternClass::Rz,
        ]
    }
}

impl fmt::Display for PatternClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternClass::Rs => "RS",
            PatternClass::Ib => "IB",
            PatternClass::Ch => "CH",
            PatternClass::Fs => "FS",
            PatternClass::Lts => "LTS",
            PatternClass::Tc => "TC",
            PatternClass::Rz => "RZ",
            PatternClass::Tonic => "Tonic",
            PatternClass::Bursting => "Bursting",
            PatternClass::Chattering => "Chattering",
            PatternClass::InitialBurstThenTonic => "InitialBurstThenTonic",
            PatternClass::Silent => "Silent",
            PatternClass::SilentOrInsufficient => "Silent-or-Insufficient",
        })
    }
}

impl FromStr for PatternClass {
    type Err = NeuronError;

    /// Parses preset keys only (`rs`, `ib`, `ch`, `fs`, `lts`, `tc`, `rz`,
    /// any case); coarse labels are classifier output, not input.
    fn from_str(s: &str) -> Result<PatternClass, NeuronError> {
        match s.to_ascii_lowercase().as_str() {
            "rs" => Ok(PatternClass::Rs),
            "ib" => Ok(PatternClass::Ib),
            "ch" => Ok(PatternClass::Ch),
            "fs" => Ok(PatternClass::Fs),
            "lts" => Ok(PatternClass::Lts),
            "tc" => Ok(PatternClass::Tc),
            "rz" => Ok(PatternClass::Rz),
            _ => Err(NeuronError::UnknownPreset(s.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum NeuronError {
    #[error("unknown preset '{0}' (expected one of rs, ib, ch, fs, lts, tc, rz)")]
    UnknownPreset(String),
    #[error("'{0}' is a coarse pattern label, not a parameter preset")]
    NotAPreset(PatternClass),
}

/// Parameter table for the seven named firing classes.
pub fn preset(class: PatternClass) -> Result<IzhParams, NeuronError> {
    let (a, b, c, d) = match class {
        PatternClass::Rs => (0.02, 0.2, -65.0, 8.0),
        PatternClass::Ib => (0.02, 0.2, -55.0, 4.0),
        PatternClass::Ch => (0.02, 0.2, -50.0, 2.0),
        PatternClass::Fs => (0.1, 0.2, -65.0, 2.0),
        PatternClass::Lts => (0.02, 0.25, -65.0, 2.0),
        PatternClass::Tc => (0.02, 0.25, -65.0, 0.05),
        PatternClass::Rz => (0.1, 0.26, -65.0, 2.0),
        other => return Err(NeuronError::NotAPreset(other)),
    };
    Ok(IzhParams::new(a, b, c, d))
}

/// One forward-Euler step of `dt` model-ms under input current `i`.
///
/// When the updated membrane potential reaches `v_peak` the step reports
/// `spiked = true` and the returned state is the post-reset `(c, u + d)`;
/// the overshooting `v` itself is never part of the state.
pub fn izh_step(s: NeuronState, p: &IzhParams, i: f64, dt: f64) -> (NeuronState, bool) {
    debug_assert!(dt > 0.0 && dt <= 0.5, "dt must be in (0, 0.5] model-ms");
    let v_next = s.v + dt * (0.04 * s.v * s.v + 5.0 * s.v + 140.0 - s.u + i);
    let u_next = s.u + dt * p.a * (p.b * s.v - s.u);
    if v_next >= p.v_peak {
        (NeuronState { v: p.c, u: u_next + p.d }, true)
    } else {
        (NeuronState { v: v_next, u: u_next }, false)
    }
}

/// The stable subthreshold equilibrium at zero input, when one exists.
///
/// Setting both derivatives to zero with `u = b·v` gives
/// `0.04v² + (5−b)v + 140 = 0`; the more negative root is the stable node
/// (the other is the saddle spiking threshold). Returns `None` when the
/// parabola has no real root, i.e. the neuron cannot rest at `I = 0`.
pub fn resting_state(p: &IzhParams) -> Option<NeuronState> {
    let lin = 5.0 - p.b;
    let disc = lin * lin - 4.0 * 0.04 * 140.0;
    if disc < 0.0 {
        return None;
    }
    let v = (-lin - disc.sqrt()) / (2.0 * 0.04);
    Some(NeuronState { v, u: p.b * v })
}

/// One row of a membrane trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t_model_ms: f64,
    pub t_seconds: f64,
    /// Membrane potential (mV); clamped to `v_peak` on spike samples so
    /// plotted spikes have uniform height.
    pub v: f64,
    pub u: f64,
    pub spiked: bool,
}

/// Sampled membrane trajectory of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronTrace {
    pub samples: Vec<TraceSample>,
}

impl NeuronTrace {
    /// Write as CSV: `t_model_ms,t_seconds,v_mV,u,spiked`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "t_model_ms,t_seconds,v_mV,u,spiked")?;
        for s in &self.samples {
            writeln!(
                out,
                "{:.8e},{:.8e},{:.8e},{:.8e},{}",
                s.t_model_ms,
                s.t_seconds,
                s.v,
                s.u,
                u8::from(s.spiked)
            )?;
        }
        Ok(())
    }
}

/// Integrate a neuron from the default initial state `(c, b·c)`.
///
/// `drive` supplies the input current in model units; its time axis is the
/// circuit (seconds) timebase, evaluated at the start of each step, so the
/// same waveform literal can drive a neuron and a netlist source
/// consistently. `duration` and `dt` are in model-ms.
pub fn run_neuron(
    p: &IzhParams,
    drive: &Waveform,
    duration: f64,
    dt: f64,
) -> (NeuronTrace, SpikeTrain) {
    run_neuron_from(p, p.initial_state(), drive, duration, dt)
}

/// [`run_neuron`] with an explicit initial state.
pub fn run_neuron_from(
    p: &IzhParams,
    s0: NeuronState,
    drive: &Waveform,
    duration: f64,
    dt: f64,
) -> (NeuronTrace, SpikeTrain) {
    assert!(dt > 0.0 && dt <= 0.5, "dt must be in (0, 0.5] model-ms");
    assert!(duration > 0.0, "duration must be positive");
    let n = (duration / dt).round() as usize;
    let mut samples = Vec::with_capacity(n + 1);
    let mut spikes = Vec::new();
    let mut state = s0;
    samples.push(TraceSample {
        t_model_ms: 0.0,
        t_seconds: 0.0,
        v: state.v,
        u: state.u,
        spiked: false,
    });
    for k in 1..=n {
        let t_start_ms = (k - 1) as f64 * dt;
        let i = source_value(drive, t_start_ms * p.time_scale);
        let (next, spiked) = izh_step(state, p, i, dt);
        let t_ms = k as f64 * dt;
        let t_s = t_ms * p.time_scale;
        if spiked {
            spikes.push(t_s);
        }
        samples.push(TraceSample {
            t_model_ms: t_ms,
            t_seconds: t_s,
            v: if spiked { p.v_peak } else { next.v },
            u: next.u,
            spiked,
        });
        state = next;
    }
    (
        NeuronTrace { samples },
        SpikeTrain::new(spikes, duration * p.time_scale),
    )
}

/// Coefficient of variation (population std over mean) of ISIs whose left
/// spike falls at or after `skip`-fraction of the run; falls back to all
/// ISIs when fewer than two survive the cut.
fn is_regular(isis: &[f64], left_times: &[f64], duration: f64, skip: f64) -> bool {
    let cut = skip * duration;
    let kept: Vec<f64> = isis
        .iter()
        .zip(left_times)
        .filter(|&(_, &tl)| tl >= cut)
        .map(|(&isi, _)| isi)
        .collect();
    let kept = if kept.len() < 2 { isis.to_vec() } else { kept };
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    if mean <= 0.0 {
        return false;
    }
    let var = kept.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / kept.len() as f64;
    var.sqrt() / mean < CV_TOL
}

/// Classify a spike train into a coarse firing-pattern label.
///
/// The decision procedure, on the inter-spike intervals (ISIs):
/// 1. No spikes → `Silent`; one or two → `SilentOrInsufficient`.
/// 2. An ISI below `0.5 · (min+max)/2` (half the ISI midrange) is
///    intra-burst; maximal runs of such ISIs form bursts.
/// 3. No bursts → `Tonic` when the CV of the ISIs past the skip window is
///    below 0.15, else `Bursting`.
/// 4. Three or more bursts, every inter-burst gap exceeding 2× the median
///    intra-burst ISI → `Chattering`.
/// 5. Exactly one burst, at the very start, with a regular remainder →
///    `InitialBurstThenTonic`.
/// 6. Anything else → `Bursting`.
///
/// Every threshold is a ratio, so the result is invariant to the time unit.
pub fn classify_pattern(train: &SpikeTrain, analysis_window_skip: f64) -> PatternClass {
    let spikes = &train.spike_times_s;
    let duration = train.duration_s;
    let skip = analysis_window_skip;
    match spikes.len() {
        0 => return PatternClass::Silent,
        1 | 2 => return PatternClass::SilentOrInsufficient,
        _ => {}
    }
    let isis = train.isis();
    let (min, max) = isis
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let thr = BURST_THETA * (min + max) / 2.0;

    // Bursts as spike-index ranges [start, end] (inclusive): maximal runs of
    // consecutive ISIs below the threshold.
    let mut bursts: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < isis.len() {
        if isis[i] < thr {
            let mut j = i;
            while j < isis.len() && isis[j] < thr {
                j += 1;
            }
            bursts.push((i, j));
            i = j;
        } else {
            i += 1;
        }
    }

    if bursts.is_empty() {
        return if is_regular(&isis, &spikes[..spikes.len() - 1], duration, skip) {
            PatternClass::Tonic
        } else {
            PatternClass::Bursting
        };
    }

    if bursts.len() >= 3 {
        let intra: Vec<f64> = bursts
            .iter()
            .flat_map(|&(s, e)| isis[s..e].iter().copied())
            .collect();
        let med_intra = median(&intra);
        let gaps_clear = bursts.windows(2).all(|pair| {
            let (_, e1) = pair[0];
            let (s2, _) = pair[1];
            spikes[s2] - spikes[e1] > GAP_FACTOR * med_intra
        });
        if gaps_clear {
            return PatternClass::Chattering;
        }
    }

    if bursts.len() == 1 && bursts[0].0 == 0 {
        let e = bursts[0].1;
        let rest = &isis[e..];
        if rest.len() >= 2 && is_regular(rest, &spikes[e..spikes.len() - 1], duration, skip) {
            return PatternClass::InitialBurstThenTonic;
        }
    }

    PatternClass::Bursting
}

/// Convert spike times into a switch-control waveform: `v_low` everywhere
/// except a `v_high` pulse of `pulse_width` seconds starting at each spike,
/// with 1 ns edges. Pulses that would overlap (or leave no room for a
/// fall/rise pair between them) merge into one longer pulse. An empty train
/// yields a constant `v_low`.
pub fn spikes_to_control(
    train: &SpikeTrain,
    pulse_width: f64,
    v_high: f64,
    v_low: f64,
) -> Waveform {
    assert!(pulse_width > 0.0, "pulse width must be positive");
    if train.spike_times_s.is_empty() {
        return Waveform::Dc(v_low);
    }
    let edge = CONTROL_EDGE_S.min(pulse_width / 2.0);
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for &t in &train.spike_times_s {
        let (s, e) = (t, t + pulse_width);
        match intervals.last_mut() {
            Some(last) if s <= last.1 + edge => last.1 = last.1.max(e),
            _ => intervals.push((s, e)),
        }
    }
    let mut pts = Vec::with_capacity(4 * intervals.len());
    for (s, e) in intervals {
        pts.push((s, v_low));
        pts.push((s + edge, v_high));
        pts.push((e, v_high));
        pts.push((e + edge, v_low));
    }
    Waveform::Pwl(pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_const(p: &IzhParams, i: f64, duration: f64, dt: f64) -> SpikeTrain {
        run_neuron(p, &Waveform::Dc(i), duration, dt).1
    }

    /// Spike times in model-ms for readable comparisons.
    fn times_ms(train: &SpikeTrain, p: &IzhParams) -> Vec<f64> {
        train.spike_times_s.iter().map(|t| t / p.time_scale).collect()
    }

    #[test]
    fn equilibrium_state_is_a_fixed_point_bit_for_bit() {
        let p = preset(PatternClass::Rs).unwrap();
        let s = NeuronState { v: -70.0, u: -14.0 };
        let (next, spiked) = izh_step(s, &p, 0.0, 0.1);
        assert!(!spiked);
        // Both derivatives evaluate to exactly zero in f64 at this point.
        assert_eq!(next.v, -70.0);
        assert_eq!(next.u, -14.0);
    }

    #[test]
    fn reset_is_assignment_not_integration() {
        let p = preset(PatternClass::Rs).unwrap();
        let s = NeuronState { v: 29.0, u: 3.0 };
        let (next, spiked) = izh_step(s, &p, 100.0, 0.1);
        assert!(spiked, "v must overshoot v_peak from here");
        assert_eq!(next.v, p.c, "v resets to exactly c");
        let u_updated = s.u + 0.1 * p.a * (p.b * s.v - s.u);
        assert_eq!(next.u, u_updated + p.d, "u gains exactly d");
    }

    #[test]
    fn rs_first_five_spike_times_match_frozen_oracle() {
        let p = preset(PatternClass::Rs).unwrap();
        let train = run_const(&p, 10.0, 1000.0, 0.1);
        assert_eq!(train.spike_count(), 23);
        let got = times_ms(&train, &p);
        for (g, e) in got.iter().zip([3.4, 27.1, 72.2, 117.3, 162.4]) {
            assert!((g - e).abs() < 1e-9, "spike at {g} vs frozen {e}");
        }
    }

    #[test]
    fn preset_spike_counts_match_frozen_oracle() {
        for (class, count) in [
            (PatternClass::Ib, 33),
            (PatternClass::Ch, 86),
            (PatternClass::Fs, 130),
        ] {
            let p = preset(class).unwrap();
            assert_eq!(
                run_const(&p, 10.0, 1000.0, 0.1).spike_count(),
                count,
                "{class}"
            );
        }
    }

    #[test]
    fn fs_fires_faster_than_rs() {
        let fs = run_const(&preset(PatternClass::Fs).unwrap(), 10.0, 1000.0, 0.1);
        let rs = run_const(&preset(PatternClass::Rs).unwrap(), 10.0, 1000.0, 0.1);
        assert!(fs.spike_count() > rs.spike_count());
    }

    #[test]
    fn spike_count_is_monotone_in_constant_drive() {
        let p = preset(PatternClass::Rs).unwrap();
        let counts: Vec<usize> = [5.0, 10.0, 15.0, 20.0]
            .iter()
            .map(|&i| run_const(&p, i, 1000.0, 0.1).spike_count())
            .collect();
        assert_eq!(counts, vec![11, 23, 34, 45]);
    }

    #[test]
    fn classifier_labels_the_four_demonstration_presets() {
        for (class, label) in [
            (PatternClass::Rs, PatternClass::Tonic),
            (PatternClass::Ib, PatternClass::InitialBurstThenTonic),
            (PatternClass::Ch, PatternClass::Chattering),
            (PatternClass::Fs, PatternClass::Tonic),
        ] {
            let p = preset(class).unwrap();
            let train = run_const(&p, 10.0, 1000.0, 0.1);
            assert_eq!(
                classify_pattern(&train, DEFAULT_ANALYSIS_WINDOW_SKIP),
                label,
                "{class}"
            );
        }
    }

    #[test]
    fn classifier_synthetic_trains() {
        let even = SpikeTrain::new((1..=50).map(|k| k as f64 * 10.0).collect(), 520.0);
        assert_eq!(classify_pattern(&even, 0.1), PatternClass::Tonic);

        let mut trip = Vec::new();
        for k in 0..5 {
            let t0 = k as f64 * 50.0 + 1.0;
            trip.extend([t0, t0 + 1.0, t0 + 2.0]);
        }
        let trip = SpikeTrain::new(trip, 260.0);
        assert_eq!(classify_pattern(&trip, 0.1), PatternClass::Chattering);

        let one = SpikeTrain::new(vec![5.0], 100.0);
        assert_eq!(
            classify_pattern(&one, 0.1),
            PatternClass::SilentOrInsufficient
        );

        let none = SpikeTrain::new(vec![], 100.0);
        assert_eq!(classify_pattern(&none, 0.1), PatternClass::Silent);
    }

    #[test]
    fn resting_states_match_the_closed_form() {
        let rs = resting_state(&preset(PatternClass::Rs).unwrap()).unwrap();
        assert!((rs.v + 70.0).abs() < 1e-9);
        assert!((rs.u + 14.0).abs() < 1e-9);
        let rz = resting_state(&preset(PatternClass::Rz).unwrap()).unwrap();
        assert!((rz.v + 62.5).abs() < 1e-9);
        let lts = resting_state(&preset(PatternClass::Lts).unwrap()).unwrap();
        assert!((lts.v + 64.413911).abs() < 1e-5);
    }

    #[test]
    fn rz_fires_once_from_default_start_but_rests_from_equilibrium() {
        // The default (c, b·c) start sits outside RZ's basin boundary, so it
        // emits exactly one spike before settling; from the computed resting
        // state it stays silent.
        let p = preset(PatternClass::Rz).unwrap();
        let from_default = run_const(&p, 0.0, 1000.0, 0.1);
        assert_eq!(from_default.spike_count(), 1);
        assert!((times_ms(&from_default, &p)[0] - 20.7).abs() < 1e-9);
        let rest = resting_state(&p).unwrap();
        let (_, from_rest) = run_neuron_from(&p, rest, &Waveform::Dc(0.0), 1000.0, 0.1);
        assert_eq!(from_rest.spike_count(), 0);
    }

    #[test]
    fn all_presets_rest_silently_at_zero_drive_from_equilibrium() {
        for class in PatternClass::presets() {
            let p = preset(class).unwrap();
            let rest = resting_state(&p).expect("every preset has a resting state");
            let (_, train) = run_neuron_from(&p, rest, &Waveform::Dc(0.0), 1000.0, 0.1);
            assert_eq!(train.spike_count(), 0, "{class}");
        }
    }

    #[test]
    fn fs_median_period_is_microsecond_class() {
        let p = preset(PatternClass::Fs).unwrap();
        let train = run_const(&p, 10.0, 1000.0, 0.1);
        let med = train.median_isi().unwrap();
        assert!((med - 7.7e-6).abs() < 1e-12, "median {med}");
        assert!((1e-6..=10e-6).contains(&med));
    }

    #[test]
    fn preset_rejects_coarse_labels_and_fromstr_rejects_them_too() {
        assert!(preset(PatternClass::Tonic).is_err());
        assert!(matches!(
            preset(PatternClass::Silent),
            Err(NeuronError::NotAPreset(PatternClass::Silent))
        ));
        assert_eq!("fs".parse::<PatternClass>().unwrap(), PatternClass::Fs);
        assert_eq!("LTS".parse::<PatternClass>().unwrap(), PatternClass::Lts);
        assert!("tonic".parse::<PatternClass>().is_err());
        assert!("".parse::<PatternClass>().is_err());
    }

    #[test]
    fn trace_clamps_spikes_and_csv_has_the_documented_header() {
        let p = preset(PatternClass::Rs).unwrap();
        let (trace, train) = run_neuron(&p, &Waveform::Dc(10.0), 50.0, 0.1);
        assert!(train.spike_count() >= 1);
        let spike_rows: Vec<_> = trace.samples.iter().filter(|s| s.spiked).collect();
        assert_eq!(spike_rows.len(), train.spike_count());
        for row in spike_rows {
            assert_eq!(row.v, p.v_peak);
        }
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_model_ms,t_seconds,v_mV,u,spiked\n"));
        assert_eq!(text.lines().count(), trace.samples.len() + 1);
    }

    #[test]
    fn spike_train_json_round_trips_with_documented_keys() {
        let train = SpikeTrain::new(vec![2e-6, 4e-6, 6e-6], 1e-3);
        let json = train.to_json();
        assert!(json.contains("\"spike_times_s\""));
        assert!(json.contains("\"duration_s\""));
        assert_eq!(SpikeTrain::from_json(&json).unwrap(), train);
    }

    #[test]
    fn control_waveform_geometry() {
        let train = SpikeTrain::new(vec![2e-6, 4e-6, 6e-6], 8e-6);
        let w = spikes_to_control(&train, 20e-9, 3.3, 0.0);
        let Waveform::Pwl(pts) = &w else {
            panic!("expected PWL, got {w:?}")
        };
        assert_eq!(pts.len(), 12, "three pulses, four points each");
        assert!(pts.windows(2).all(|p| p[1].0 > p[0].0), "times increase");
        // First pulse: low at start, high after the edge, high at the end of
        // the width, low after the fall.
        assert_eq!(pts[0], (2e-6, 0.0));
        assert_eq!(pts[1].1, 3.3);
        assert!((pts[2].0 - (2e-6 + 20e-9)).abs() < 1e-18);
        assert_eq!(pts[3].1, 0.0);
    }

    #[test]
    fn control_pulses_merge_when_overlapping() {
        let train = SpikeTrain::new(vec![1e-6, 1.01e-6], 2e-6);
        let w = spikes_to_control(&train, 20e-9, 3.3, 0.0);
        let Waveform::Pwl(pts) = &w else {
            panic!("expected PWL, got {w:?}")
        };
        assert_eq!(pts.len(), 4, "one merged pulse");
        assert!((pts[2].0 - 1.03e-6).abs() < 1e-18, "merged end at {}", pts[2].0);
    }

    #[test]
    fn empty_train_gives_constant_low_control() {
        let train = SpikeTrain::new(vec![], 1e-3);
        assert_eq!(spikes_to_control(&train, 20e-9, 3.3, 0.0), Waveform::Dc(0.0));
    }

    #[test]
    fn identical_runs_are_identical() {
        let p = preset(PatternClass::Ch).unwrap();
        let a = run_const(&p, 10.0, 500.0, 0.1);
        let b = run_const(&p, 10.0, 500.0, 0.1);
        assert_eq!(a, b);
    }
}
