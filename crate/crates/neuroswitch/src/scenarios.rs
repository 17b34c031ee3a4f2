//! Prebuilt circuits and end-to-end experiments.
//!
//! The centerpiece is a six-transistor differential amplifier whose supply
//! rails pass through behavioral switches, so a spike-derived control
//! waveform can power the whole block on and off:
//!
//! ```text
//!  vdd ──S1── avdd ──┬────────────┬──────────┐
//!                    │            │          RB
//!             M6 ────┤     ├──── M5          │
//!             (diode)│nmir │      │vout      │nbias
//!                    └──┬──┘      │          ├── M1 (diode)
//!              M4 ──────┤         ├───── M3  │
//!           v1 ─┘       └── ntail ──┘ └─ v2  │
//!                             │              │
//!                        M2 ──┴── (tail)  ───┘
//!  vss ──S2── avss ──────┴───────────────────┘
//! ```
//!
//! M1 is a diode-connected reference fed by `RB`; M2 mirrors it down 5:1
//! into the tail, so the supply draw (reference + tail) equals six times the
//! per-leg tail share and the measured static power lines up with the
//! six-device analytic model. M3/M4 are the input pair (low-λ "gain"
//! devices), M5/M6 a PMOS mirror load; the single-ended output is the
//! M3/M5 drain node `vout`. The load threshold is solved at build time so
//! the mirror gate sits at the output midpoint, centering the quiescent
//! output; the pair width is solved by a grid search until the measured
//! small-signal gain `gm/(gds_pair + gds_load)` hits the target.
//!
//! [`run_spike_gated_amp`] wires a spiking neuron to the switches and
//! measures amplification and supply power in one transient;
//! [`run_power_experiment`] sweeps synthetic-pulse duty cycles and pairs
//! each measured average power with the analytic prediction.

use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{
    dc_operating_point, measure_branch_power, measure_branch_power_between, transient,
    EngineError, SimOptions, Waveforms,
};
use crate::netlist::{
    format_value, format_waveform, parse_netlist, Netlist, NetlistError, Waveform,
};
use crate::neuron::{
    preset, run_neuron, spikes_to_control, NeuronError, PatternClass, SpikeTrain,
};
use crate::power::{
    analytic_power, duty_sweep, reconcile, DutyPoint, PowerError, PowerModelInputs,
    PowerReport, Reconciliation,
};

/// Gate-control high level (V).
pub const CONTROL_HIGH: f64 = 3.3;
/// Gate-control low level (V).
pub const CONTROL_LOW: f64 = 0.0;
/// Switch threshold: the midpoint of the control swing.
pub const CONTROL_VT: f64 = 0.5 * (CONTROL_HIGH + CONTROL_LOW);
/// Constant neuron drive used by the gated-amplifier run.
pub const DEFAULT_NEURON_DRIVE: f64 = 10.0;
/// ON fraction targeted when no explicit pulse width is given.
pub const DEFAULT_DUTY_TARGET: f64 = 0.01;

const SWITCH_RON: f64 = 100.0;
const SWITCH_ROFF: f64 = 1e9;
/// Differential probe step for the two-point gain measurement.
const GAIN_PROBE_V: f64 = 1e-5;
/// Acceptable relative miss between measured and target gain.
const GAIN_TOL: f64 = 0.2;
/// Neuron integration step (model-ms).
const NEURON_DT_MS: f64 = 0.1;
/// Transient samples per control pulse width.
const SAMPLES_PER_PULSE: f64 = 50.0;

/// Design parameters of the six-transistor amplifier.
///
/// `W/L` ratios are dimensionless with a fixed 1 µm channel length. The
/// default rails are ±2.5 V: a full gain-of-1000 swing from a 2 mV input
/// needs to reach past ±2 V, which ±1.65 V rails would clip (they remain
/// valid inputs for power-only experiments).
#[derive(Debug, Clone, PartialEq)]
pub struct AmpSpec {
    /// Positive rail (V).
    pub vdd: f64,
    /// Negative rail (V, ≤ 0; 0 for single-supply).
    pub vss: f64,
    /// Small-signal differential gain the builder must hit.
    pub target_gain: f64,
    /// Reference current through the bias resistor (A).
    pub i_bias: f64,
    /// NMOS transconductance parameter (A/V²).
    pub kp_n: f64,
    /// PMOS transconductance parameter (A/V²).
    pub kp_p: f64,
    /// NMOS threshold (V). The PMOS threshold is solved at build time.
    pub vt_n: f64,
    /// Channel-length modulation of the mirror and load devices (1/V).
    pub lambda_mirror: f64,
    /// Channel-length modulation of the input pair (1/V); kept small
    /// because the single-stage gain is inversely proportional to it.
    pub lambda_pair: f64,
    /// W/L of the diode-connected reference M1.
    pub wl_bias: f64,
    /// W/L of the tail device M2 (5:1 down-mirror from M1 by default).
    pub wl_tail: f64,
    /// Starting W/L of the input pair M3/M4; the gain search scales it.
    pub wl_pair_seed: f64,
    /// W/L of the load mirror M5/M6.
    pub wl_load: f64,
    /// Gate-oxide thickness for the model cards (m).
    pub tox: f64,
    /// Gate-oxide permittivity for the model cards (F/m).
    pub eps: f64,
}

impl Default for AmpSpec {
    fn default() -> AmpSpec {
        AmpSpec {
            vdd: 2.5,
            vss: -2.5,
            target_gain: 1000.0,
            i_bias: 1e-5,
            kp_n: 100e-6,
            kp_p: 40e-6,
            vt_n: 0.5,
            lambda_mirror: 0.01,
            lambda_pair: 0.002,
            wl_bias: 2.0,
            wl_tail: 0.4,
            wl_pair_seed: 0.72,
            wl_load: 1.25,
            tox: 7.5e-9,
            eps: 3.45e-11,
        }
    }
}

impl AmpSpec {
    fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::BadSpec(msg));
        if !(self.target_gain > 0.0) {
            return bad(format!("target_gain must be positive, got {}", self.target_gain));
        }
        if !(self.vdd > 0.0) || !(self.vss <= 0.0) {
            return bad(format!(
                "rails must straddle 0 (or vss == 0), got vdd={} vss={}",
                self.vdd, self.vss
            ));
        }
        let positive = [
            ("i_bias", self.i_bias),
            ("kp_n", self.kp_n),
            ("kp_p", self.kp_p),
            ("vt_n", self.vt_n),
            ("wl_bias", self.wl_bias),
            ("wl_tail", self.wl_tail),
            ("wl_pair_seed", self.wl_pair_seed),
            ("wl_load", self.wl_load),
            ("tox", self.tox),
            ("eps", self.eps),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return bad(format!("{name} must be positive, got {value}"));
            }
        }
        if self.lambda_mirror < 0.0 || self.lambda_pair < 0.0 {
            return bad("lambda values must be non-negative".to_string());
        }
        if self.r_bias() <= 0.0 {
            return bad(format!(
                "rails leave no headroom for the bias chain: vdd−vss = {} V but the \
                 reference diode needs {} V",
                self.vdd - self.vss,
                self.vgs_bias()
            ));
        }
        Ok(())
    }

    /// Tail current: the reference scaled by the M2:M1 mirror ratio.
    pub fn i_tail(&self) -> f64 {
        self.i_bias * self.wl_tail / self.wl_bias
    }

    /// Per-leg quiescent current, half the tail.
    pub fn i_leg(&self) -> f64 {
        0.5 * self.i_tail()
    }

    /// Input common-mode: the midpoint of the rails.
    pub fn input_cm(&self) -> f64 {
        0.5 * (self.vdd + self.vss)
    }

    fn vgs_bias(&self) -> f64 {
        self.vt_n + (2.0 * self.i_bias / (self.kp_n * self.wl_bias)).sqrt()
    }

    /// Bias resistor sized to set `i_bias` through the reference diode.
    pub fn r_bias(&self) -> f64 {
        (self.vdd - self.vss - self.vgs_bias()) / self.i_bias
    }

    /// Load-mirror threshold, solved so the mirror gate (and with it the
    /// quiescent output) sits at the rail midpoint.
    pub fn vt_load(&self) -> f64 {
        let vov = (2.0 * self.i_leg() / (self.kp_p * self.wl_load)).sqrt();
        self.vdd - self.input_cm() - vov
    }
}

/// How the supply switches are driven.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSpec {
    /// Voltage on the switch control pins.
    pub control: Waveform,
    /// Closed-state resistance (Ω).
    pub ron: f64,
    /// Open-state resistance (Ω).
    pub roff: f64,
    /// Control threshold; the control levels must straddle it for the
    /// switches to ever change state.
    pub vt: f64,
}

impl GateSpec {
    /// Drive the switches from an arbitrary control waveform at the
    /// default levels and resistances.
    pub fn from_control(control: Waveform) -> GateSpec {
        GateSpec {
            control,
            ron: SWITCH_RON,
            roff: SWITCH_ROFF,
            vt: CONTROL_VT,
        }
    }

    /// Switches held closed.
    pub fn always_on() -> GateSpec {
        GateSpec::from_control(Waveform::Dc(CONTROL_HIGH))
    }

    /// Switches held open.
    pub fn always_off() -> GateSpec {
        GateSpec::from_control(Waveform::Dc(CONTROL_LOW))
    }
}

/// Output of [`build_switched_amp`]: the gated and hard-wired netlists plus
/// the solved design point.
#[derive(Debug, Clone)]
pub struct BuiltAmp {
    /// Amplifier with supply switches and control source.
    pub netlist: Netlist,
    /// Same amplifier with the rails wired directly (no switches).
    pub unswitched: Netlist,
    /// Two-point measured differential gain of the unswitched amplifier.
    pub measured_gain: f64,
    /// Solved W/L of the input pair.
    pub pair_wl: f64,
    /// Bias resistor value (Ω).
    pub r_bias: f64,
    /// Solved load-mirror threshold (V).
    pub vt_load: f64,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid amplifier spec: {0}")]
    BadSpec(String),
    #[error(
        "no device size in the search grid reaches within ±{:.0}% of target gain {target}; \
         closest measured gain {best_gain}",
        GAIN_TOL * 100.0
    )]
    GainUnachievable { target: f64, best_gain: f64 },
    #[error("neuron preset {preset} produced {spikes} spike(s); the gate needs a spiking train")]
    NeuronSilent { preset: PatternClass, spikes: usize },
    #[error("scenario simulation failed: {0}")]
    Engine(#[from] EngineError),
    #[error("scenario power accounting failed: {0}")]
    Power(#[from] PowerError),
    #[error(transparent)]
    Neuron(#[from] NeuronError),
    #[error("generated netlist failed to parse: {0}")]
    Netlist(#[from] NetlistError),
}

/// Shift and scale a waveform's voltage levels, leaving its timing alone:
/// each level `v` becomes `offset + k·v`.
fn offset_scale(w: &Waveform, k: f64, offset: f64) -> Waveform {
    match w {
        Waveform::Dc(v) => Waveform::Dc(offset + k * v),
        Waveform::Pulse { v1, v2, delay, rise, fall, width, period } => Waveform::Pulse {
            v1: offset + k * v1,
            v2: offset + k * v2,
            delay: *delay,
            rise: *rise,
            fall: *fall,
            width: *width,
            period: *period,
        },
        Waveform::Pwl(pts) => {
            Waveform::Pwl(pts.iter().map(|&(t, v)| (t, offset + k * v)).collect())
        }
        Waveform::Sine { offset: o, amplitude, frequency } => Waveform::Sine {
            offset: offset + k * o,
            amplitude: k * amplitude,
            frequency: *frequency,
        },
    }
}

/// Emit the amplifier deck as netlist source. With a gate, the rails reach
/// the circuit through S1/S2; without one they are wired directly.
fn amp_deck(
    spec: &AmpSpec,
    pair_wl: f64,
    gate: Option<&GateSpec>,
    vin_diff: &Waveform,
    analysis: Option<&str>,
) -> String {
    let v = format_value;
    let (pos, neg) = if gate.is_some() {
        ("avdd", "avss")
    } else {
        ("vdd", "vss")
    };
    let cm = spec.input_cm();
    let w_of = |wl: f64| wl * 1e-6;
    let mut deck = String::new();
    deck.push_str("* six-transistor differential amplifier");
    if gate.is_some() {
        deck.push_str(", supply-gated");
    }
    deck.push('\n');
    deck.push_str(&format!("VDD vdd 0 DC {}\n", v(spec.vdd)));
    deck.push_str(&format!("VSS vss 0 DC {}\n", v(spec.vss)));
    if let Some(g) = gate {
        deck.push_str(&format!("VC ctrl 0 {}\n", format_waveform(&g.control)));
        deck.push_str(&format!(
            "S1 vdd avdd ctrl 0 ron={} roff={} vt={}\n",
            v(g.ron),
            v(g.roff),
            v(g.vt)
        ));
        deck.push_str(&format!(
            "S2 vss avss ctrl 0 ron={} roff={} vt={}\n",
            v(g.ron),
            v(g.roff),
            v(g.vt)
        ));
    }
    deck.push_str(&format!(
        "V1 v1 0 {}\n",
        format_waveform(&offset_scale(vin_diff, 0.5, cm))
    ));
    deck.push_str(&format!(
        "V2 v2 0 {}\n",
        format_waveform(&offset_scale(vin_diff, -0.5, cm))
    ));
    deck.push_str(&format!("RB {pos} nbias {}\n", v(spec.r_bias())));
    deck.push_str(&format!(
        "M1 nbias nbias {neg} {neg} nmirror w={} l=1u\n",
        v(w_of(spec.wl_bias))
    ));
    deck.push_str(&format!(
        "M2 ntail nbias {neg} {neg} nmirror w={} l=1u\n",
        v(w_of(spec.wl_tail))
    ));
    deck.push_str(&format!(
        "M3 vout v2 ntail {neg} npair w={} l=1u\n",
        v(w_of(pair_wl))
    ));
    deck.push_str(&format!(
        "M4 nmir v1 ntail {neg} npair w={} l=1u\n",
        v(w_of(pair_wl))
    ));
    deck.push_str(&format!(
        "M5 vout nmir {pos} {pos} pload w={} l=1u\n",
        v(w_of(spec.wl_load))
    ));
    deck.push_str(&format!(
        "M6 nmir nmir {pos} {pos} pload w={} l=1u\n",
        v(w_of(spec.wl_load))
    ));
    let model = |name: &str, pol: &str, vt: f64, kp: f64, lambda: f64| {
        format!(
            ".model {name} {pol} vt={} kp={} lambda={} tox={} eps={}\n",
            v(vt),
            v(kp),
            v(lambda),
            v(spec.tox),
            v(spec.eps)
        )
    };
    deck.push_str(&model("nmirror", "NMOS", spec.vt_n, spec.kp_n, spec.lambda_mirror));
    deck.push_str(&model("npair", "NMOS", spec.vt_n, spec.kp_n, spec.lambda_pair));
    deck.push_str(&model("pload", "PMOS", spec.vt_load(), spec.kp_p, spec.lambda_mirror));
    if let Some(a) = analysis {
        deck.push_str(a);
        deck.push('\n');
    }
    deck.push_str(".end\n");
    deck
}

/// Measure the differential gain of the unswitched amplifier at one pair
/// size by perturbing the input ±5 µV around zero and differencing the
/// operating-point outputs.
fn measure_gain(spec: &AmpSpec, pair_wl: f64) -> Result<f64, ScenarioError> {
    let opts = SimOptions::new(1e-9, 1e-6);
    let mut vout = [0.0; 2];
    for (slot, sign) in vout.iter_mut().zip([0.5, -0.5]) {
        let deck = amp_deck(
            spec,
            pair_wl,
            None,
            &Waveform::Dc(sign * GAIN_PROBE_V),
            Some(".op"),
        );
        let n = parse_netlist(&deck)?;
        let op = dc_operating_point(&n, &opts)?;
        *slot = op.voltage("vout").expect("deck defines vout");
    }
    Ok((vout[0] - vout[1]) / GAIN_PROBE_V)
}

/// Build the supply-gated amplifier, solving the input-pair size so the
/// measured small-signal gain lands within ±20% of `spec.target_gain`.
///
/// The search walks a geometric grid of pair sizes from 0.25× to 4× the
/// seed; sizes whose operating point fails to converge are skipped. The
/// returned [`BuiltAmp`] carries both the gated netlist (embedding `gate`'s
/// control waveform and the differential input `vin_diff`) and the
/// unswitched netlist used for gain verification.
pub fn build_switched_amp(
    spec: &AmpSpec,
    gate: &GateSpec,
    vin_diff: &Waveform,
) -> Result<BuiltAmp, ScenarioError> {
    spec.validate()?;
    let mut best: Option<(f64, f64)> = None; // (pair_wl, gain)
    let mut last_err = None;
    for k in 0..=12 {
        let pair_wl = spec.wl_pair_seed * 0.25 * 16f64.powf(f64::from(k) / 12.0);
        match measure_gain(spec, pair_wl) {
            Ok(gain) => {
                let better = match best {
                    Some((_, g)) => {
                        (gain - spec.target_gain).abs() < (g - spec.target_gain).abs()
                    }
                    None => true,
                };
                if better {
                    best = Some((pair_wl, gain));
                }
            }
            Err(e @ (ScenarioError::Engine(_) | ScenarioError::Netlist(_))) => {
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    let Some((pair_wl, measured_gain)) = best else {
        return Err(last_err.expect("no candidates and no error is impossible"));
    };
    if (measured_gain - spec.target_gain).abs() > GAIN_TOL * spec.target_gain {
        return Err(ScenarioError::GainUnachievable {
            target: spec.target_gain,
            best_gain: measured_gain,
        });
    }
    let netlist = parse_netlist(&amp_deck(spec, pair_wl, Some(gate), vin_diff, None))?;
    let unswitched = parse_netlist(&amp_deck(spec, pair_wl, None, vin_diff, None))?;
    Ok(BuiltAmp {
        netlist,
        unswitched,
        measured_gain,
        pair_wl,
        r_bias: spec.r_bias(),
        vt_load: spec.vt_load(),
    })
}

/// Everything produced by one neuron-gated amplifier run.
#[derive(Debug, Clone)]
pub struct SpikeGatedRun {
    /// The neuron's spike train on the circuit timebase.
    pub spike_train: SpikeTrain,
    /// Switch-control waveform derived from the spikes.
    pub control: Waveform,
    /// Control pulse width actually used (s).
    pub pulse_width: f64,
    /// Pulse width over median spike period.
    pub commanded_duty: f64,
    /// The gated netlist that was simulated.
    pub netlist: Netlist,
    /// Transient of the gated run.
    pub waveforms: Waveforms,
    /// Transient of the identical circuit with the switches held closed.
    pub always_on: Waveforms,
    /// Supply power averaged over the first full ON window (W).
    pub measured_on_w: f64,
    /// Supply power averaged over the whole gated run (W).
    pub measured_avg_w: f64,
    /// Supply power averaged over the always-on run (W).
    pub measured_always_on_w: f64,
    /// `1 − measured_avg / measured_always_on`.
    pub measured_savings: f64,
    /// Tail current extracted from the unswitched operating point (A).
    pub tail_current_a: f64,
    /// Analytic model evaluated at the observed spike rate, the simulated
    /// tail current, and the commanded duty.
    pub analytic: PowerReport,
    /// Measured-vs-analytic ratios.
    pub reconciliation: Reconciliation,
    /// Fraction of samples with `|vout|` beyond 1 V; tracks the duty.
    pub on_fraction: f64,
    /// Gain of the underlying amplifier (from the build).
    pub measured_gain: f64,
}

/// First interval over which a control waveform from
/// [`spikes_to_control`] is fully high: from the end of the first rising
/// edge to the start of the first falling edge.
fn first_on_window(control: &Waveform) -> Option<(f64, f64)> {
    match control {
        Waveform::Pwl(pts) if pts.len() >= 4 => Some((pts[1].0, pts[2].0)),
        _ => None,
    }
}

/// Run the full neuron-gated amplification experiment.
///
/// A neuron from `neuron_preset` is driven with a constant current of 10
/// model units for `duration` seconds of circuit time; its spikes become
/// supply-gate pulses of `pulse_width` seconds (default: 1% of the median
/// spike period), and the switched amplifier — input held at `vin_diff_mv`
/// millivolts differential — is simulated through the same window twice,
/// gated and always-on. Supply power is measured from both runs and
/// reconciled against the analytic model evaluated with the simulated tail
/// current standing in for the per-device bias current (the analytic model
/// assumes every transistor carries the full bias; the real circuit shares
/// the tail, and the 5:1 reference mirror makes the total supply draw equal
/// six tail-currents so the two line up).
pub fn run_spike_gated_amp(
    amp: &AmpSpec,
    neuron_preset: PatternClass,
    pulse_width: Option<f64>,
    vin_diff_mv: f64,
    duration: f64,
) -> Result<SpikeGatedRun, ScenarioError> {
    if !(duration > 0.0) {
        return Err(ScenarioError::BadSpec(format!(
            "duration must be positive, got {duration}"
        )));
    }
    let p = preset(neuron_preset)?;
    let duration_ms = duration / p.time_scale;
    let (_, spike_train) = run_neuron(
        &p,
        &Waveform::Dc(DEFAULT_NEURON_DRIVE),
        duration_ms,
        NEURON_DT_MS,
    );
    if spike_train.spike_count() < 2 {
        return Err(ScenarioError::NeuronSilent {
            preset: neuron_preset,
            spikes: spike_train.spike_count(),
        });
    }
    let median_isi = spike_train.median_isi().expect("two spikes give an interval");
    let pulse_width = pulse_width.unwrap_or(DEFAULT_DUTY_TARGET * median_isi);
    if !(pulse_width > 0.0) {
        return Err(ScenarioError::BadSpec(format!(
            "pulse width must be positive, got {pulse_width}"
        )));
    }
    let commanded_duty = pulse_width / median_isi;
    let control = spikes_to_control(&spike_train, pulse_width, CONTROL_HIGH, CONTROL_LOW);
    let vin = Waveform::Dc(vin_diff_mv * 1e-3);

    let built = build_switched_amp(amp, &GateSpec::from_control(control.clone()), &vin)?;
    let opts = SimOptions::new(pulse_width / SAMPLES_PER_PULSE, duration);
    let waveforms = transient(&built.netlist, &opts)?;
    let always_on_netlist =
        parse_netlist(&amp_deck(amp, built.pair_wl, Some(&GateSpec::always_on()), &vin, None))?;
    let always_on = transient(&always_on_netlist, &opts)?;

    let supplies = ["VDD", "VSS"];
    let measured_avg_w = measure_branch_power(&waveforms, &supplies)?.total_avg_power;
    let measured_always_on_w = measure_branch_power(&always_on, &supplies)?.total_avg_power;
    let (on_start, on_end) =
        first_on_window(&control).expect("a spiking train yields a pulsed control");
    let measured_on_w =
        measure_branch_power_between(&waveforms, &supplies, on_start, on_end)?.total_avg_power;

    // Tail current from the unswitched operating point: everything VDD
    // delivers that does not flow through the bias resistor.
    let op = dc_operating_point(&built.unswitched, &opts)?;
    let i_vdd = op.source_currents["VDD"];
    let v_nbias = op.voltage("nbias").expect("deck defines nbias");
    let tail_current_a = i_vdd - (amp.vdd - v_nbias) / built.r_bias;

    let analytic = analytic_power(&PowerModelInputs {
        eps: amp.eps,
        area: built.pair_wl * 1e-12,
        tox: amp.tox,
        f: 1.0 / median_isi,
        vdd: amp.vdd,
        vss: amp.vss.abs(),
        i_bias: tail_current_a,
        n_core: 6,
        n_switch: 4,
        duty: commanded_duty,
    })?;
    let reconciliation = reconcile(&analytic, measured_on_w, measured_avg_w)?;

    let vout = waveforms.node("vout").expect("deck defines vout");
    let beyond = vout.iter().filter(|v| v.abs() > 1.0).count();
    let on_fraction = beyond as f64 / vout.len() as f64;

    Ok(SpikeGatedRun {
        spike_train,
        control,
        pulse_width,
        commanded_duty,
        netlist: built.netlist,
        waveforms,
        always_on,
        measured_on_w,
        measured_avg_w,
        measured_always_on_w,
        measured_savings: 1.0 - measured_avg_w / measured_always_on_w,
        tail_current_a,
        analytic,
        reconciliation,
        on_fraction,
        measured_gain: built.measured_gain,
    })
}

/// One duty point of the power experiment: the analytic prediction next to
/// the measured supply power of a transient at that duty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerExperimentRow {
    pub duty: f64,
    pub analytic: DutyPoint,
    /// Supply power averaged over five control periods (W).
    pub measured_avg_w: f64,
    /// `1 − measured_avg / always_on_avg`.
    pub measured_savings: f64,
}

/// Output of [`run_power_experiment`].
#[derive(Debug, Clone)]
pub struct PowerExperiment {
    pub rows: Vec<PowerExperimentRow>,
    /// Measured supply power with the switches held closed (W).
    pub always_on_avg_w: f64,
    /// Control frequency of the synthetic pulses (Hz).
    pub switching_frequency: f64,
    /// Gain of the underlying amplifier (from the build).
    pub measured_gain: f64,
}

/// Control pulse covering `duty` of each `period`, with edges kept to at
/// most 1 ns and always small against both the ON and OFF portions.
fn duty_pulse(duty: f64, period: f64) -> Waveform {
    if duty <= 0.0 {
        return Waveform::Dc(CONTROL_LOW);
    }
    if duty >= 1.0 {
        return Waveform::Dc(CONTROL_HIGH);
    }
    let on = duty * period;
    let edge = 1e-9_f64.min(0.1 * on).min((1.0 - duty) * period);
    // Midpoint-crossing to midpoint-crossing spans rise/2 + width + fall/2
    // = exactly `on` seconds above threshold per period.
    Waveform::Pulse {
        v1: CONTROL_LOW,
        v2: CONTROL_HIGH,
        delay: 0.0,
        rise: edge,
        fall: edge,
        width: on - edge,
        period,
    }
}

/// Sweep gating duty cycles on the amplifier and pair each measured supply
/// power with the analytic model.
///
/// The amplifier is built once from `inputs`' rails and bias current (zero
/// differential input); each duty then gets its own five-period transient
/// with a synthetic pulse control at `inputs.f`. Rows keep the caller's
/// duty order. The always-on baseline (switches held closed) is measured
/// separately and anchors every `measured_savings` entry.
pub fn run_power_experiment(
    inputs: &PowerModelInputs,
    duties: &[f64],
) -> Result<PowerExperiment, ScenarioError> {
    inputs.validate()?;
    let analytic_rows = duty_sweep(inputs, duties)?;
    let spec = AmpSpec {
        vdd: inputs.vdd,
        vss: -inputs.vss,
        i_bias: inputs.i_bias,
        tox: inputs.tox,
        eps: inputs.eps,
        ..AmpSpec::default()
    };
    let vin = Waveform::Dc(0.0);
    let built = build_switched_amp(&spec, &GateSpec::always_on(), &vin)?;
    let period = 1.0 / inputs.f;
    let tstop = 5.0 * period;
    let run_at = |control: Waveform, dt: f64| -> Result<f64, ScenarioError> {
        let deck = amp_deck(&spec, built.pair_wl, Some(&GateSpec::from_control(control)), &vin, None);
        let w = transient(&parse_netlist(&deck)?, &SimOptions::new(dt, tstop))?;
        Ok(measure_branch_power(&w, &["VDD", "VSS"])?.total_avg_power)
    };
    let dt_for = |duty: f64| {
        let full = period / SAMPLES_PER_PULSE;
        if duty > 0.0 {
            (duty * period / SAMPLES_PER_PULSE).max(period / 5000.0).min(full)
        } else {
            full
        }
    };
    let always_on_avg_w = run_at(Waveform::Dc(CONTROL_HIGH), period / SAMPLES_PER_PULSE)?;
    let measured: Vec<f64> = duties
        .par_iter()
        .map(|&duty| run_at(duty_pulse(duty, period), dt_for(duty)))
        .collect::<Result<_, _>>()?;
    let rows = duties
        .iter()
        .zip(analytic_rows)
        .zip(measured)
        .map(|((&duty, analytic), measured_avg_w)| PowerExperimentRow {
            duty,
            analytic,
            measured_avg_w,
            measured_savings: 1.0 - measured_avg_w / always_on_avg_w,
        })
        .collect();
    Ok(PowerExperiment {
        rows,
        always_on_avg_w,
        switching_frequency: inputs.f,
        measured_gain: built.measured_gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{serialize_netlist, validate, Severity};

    #[test]
    fn default_build_hits_the_target_gain() {
        let built =
            build_switched_amp(&AmpSpec::default(), &GateSpec::always_on(), &Waveform::Dc(0.0))
                .unwrap();
        let miss = (built.measured_gain - 1000.0).abs() / 1000.0;
        assert!(miss <= GAIN_TOL, "gain {} misses by {miss}", built.measured_gain);
    }

    #[test]
    fn quiescent_output_sits_near_the_rail_midpoint() {
        let built =
            build_switched_amp(&AmpSpec::default(), &GateSpec::always_on(), &Waveform::Dc(0.0))
                .unwrap();
        let op = dc_operating_point(&built.unswitched, &SimOptions::new(1e-9, 1e-6)).unwrap();
        assert!(op.voltage("vout").unwrap().abs() < 0.1);
    }

    #[test]
    fn two_millivolts_in_lands_near_two_volts_out() {
        let spec = AmpSpec::default();
        let built =
            build_switched_amp(&spec, &GateSpec::always_on(), &Waveform::Dc(2e-3)).unwrap();
        let opts = SimOptions::new(1e-9, 1e-6);
        let driven = dc_operating_point(&built.netlist, &opts).unwrap();
        let zero_deck = amp_deck(
            &spec,
            built.pair_wl,
            Some(&GateSpec::always_on()),
            &Waveform::Dc(0.0),
            None,
        );
        let quiet = dc_operating_point(&parse_netlist(&zero_deck).unwrap(), &opts).unwrap();
        let swing = driven.voltage("vout").unwrap() - quiet.voltage("vout").unwrap();
        assert!(
            (1.6..=2.4).contains(&swing),
            "2 mV in gave {swing} V of output swing"
        );
    }

    #[test]
    fn open_switches_collapse_the_island() {
        let built =
            build_switched_amp(&AmpSpec::default(), &GateSpec::always_off(), &Waveform::Dc(2e-3))
                .unwrap();
        let op = dc_operating_point(&built.netlist, &SimOptions::new(1e-9, 1e-6)).unwrap();
        assert!(op.voltage("vout").unwrap().abs() < 0.05);
        // The island rails collapse from ±2.5 V to roughly ±0.25 V: the
        // residual span is set by the reference diode's threshold, which the
        // nano-amp leak through roff cannot push past.
        let avdd = op.voltage("avdd").unwrap();
        let avss = op.voltage("avss").unwrap();
        assert!(avdd.abs() < 0.3, "avdd at {avdd} V");
        assert!(avss.abs() < 0.3, "avss at {avss} V");
        assert!(avdd - avss < 0.6, "island span {}", avdd - avss);
    }

    #[test]
    fn absurd_gain_target_is_reported_unachievable() {
        let spec = AmpSpec {
            target_gain: 1e9,
            ..AmpSpec::default()
        };
        let err = build_switched_amp(&spec, &GateSpec::always_on(), &Waveform::Dc(0.0))
            .unwrap_err();
        assert!(matches!(err, ScenarioError::GainUnachievable { .. }), "{err}");
    }

    #[test]
    fn generated_decks_validate_and_round_trip() {
        let built =
            build_switched_amp(&AmpSpec::default(), &GateSpec::always_on(), &Waveform::Dc(1e-3))
                .unwrap();
        for n in [&built.netlist, &built.unswitched] {
            let diags = validate(n);
            assert!(
                diags.iter().all(|d| d.severity != Severity::Error),
                "{diags:?}"
            );
            let text = serialize_netlist(n);
            let back = parse_netlist(&text).unwrap();
            assert_eq!(serialize_netlist(&back), text);
        }
    }

    #[test]
    fn bad_specs_are_rejected_before_any_simulation() {
        let cases = [
            AmpSpec { target_gain: 0.0, ..AmpSpec::default() },
            AmpSpec { vss: 0.5, ..AmpSpec::default() },
            AmpSpec { vdd: 0.4, vss: -0.4, ..AmpSpec::default() }, // no bias headroom
            AmpSpec { kp_n: 0.0, ..AmpSpec::default() },
        ];
        for spec in cases {
            let err = build_switched_amp(&spec, &GateSpec::always_on(), &Waveform::Dc(0.0))
                .unwrap_err();
            assert!(matches!(err, ScenarioError::BadSpec(_)), "{spec:?}: {err}");
        }
    }

    #[test]
    fn duty_pulse_keeps_commanded_on_time() {
        for duty in [0.01, 0.3, 0.909, 0.95, 0.999] {
            let period = 1e-7;
            let Waveform::Pulse { rise, fall, width, period: per, .. } =
                duty_pulse(duty, period)
            else {
                panic!("expected a pulse at duty {duty}")
            };
            assert!((0.5 * rise + width + 0.5 * fall - duty * period).abs() < 1e-20);
            assert!(rise + width + fall <= per * (1.0 + 1e-12), "duty {duty}");
        }
        assert_eq!(duty_pulse(0.0, 1e-7), Waveform::Dc(CONTROL_LOW));
        assert_eq!(duty_pulse(1.0, 1e-7), Waveform::Dc(CONTROL_HIGH));
    }

    #[test]
    fn offset_scale_moves_levels_not_times() {
        let pulse = Waveform::Pulse {
            v1: 0.0,
            v2: 2.0,
            delay: 1e-6,
            rise: 1e-9,
            fall: 1e-9,
            width: 1e-6,
            period: 1e-5,
        };
        let Waveform::Pulse { v1, v2, delay, width, .. } = offset_scale(&pulse, 0.5, 1.0)
        else {
            panic!()
        };
        assert_eq!((v1, v2), (1.0, 2.0));
        assert_eq!((delay, width), (1e-6, 1e-6));
        assert_eq!(
            offset_scale(&Waveform::Dc(2e-3), -0.5, 0.0),
            Waveform::Dc(-1e-3)
        );
    }
}
