//! Analytic power accounting for duty-cycled analog blocks.
//!
//! The model treats every transistor identically: a per-device dynamic term
//! `f·C·(Vdd+Vss)²` with `C` the saturation-region gate-oxide capacitance
//! `2εA/(3·tox)`, plus a per-device static term `I_bias·(Vdd+Vss)`. A circuit
//! of `n_core` transistors dissipates the sum of those; power-gating it
//! through `n_switch` extra switch transistors makes the ON-state total scale
//! with `n_core + n_switch` while the OFF-state total is identically zero, so
//! the duty-cycle average is `duty · P_on` and the fractional saving over the
//! unswitched circuit is `1 − duty·(n_core+n_switch)/n_core`.
//!
//! Two deliberate conventions, both documented here rather than silently
//! normalized: there is no ½ in the dynamic term (it is `f·C·V²`, not the
//! textbook `½·C·V²·f`), and the voltage that enters every term is the total
//! rail-to-rail span `vdd + vss` (so ±1.65 V rails contribute 3.3 V; a
//! single-supply circuit passes `vss = 0`).
//!
//! All functions are pure; [`reconcile`] ties the analytic figures to powers
//! measured from a transient simulation.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Inputs of the analytic power model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModelInputs {
    /// Gate-oxide permittivity (F/m).
    pub eps: f64,
    /// Per-transistor gate area (m²).
    pub area: f64,
    /// Oxide thickness (m).
    pub tox: f64,
    /// Switching frequency (Hz).
    pub f: f64,
    /// Positive rail (V).
    pub vdd: f64,
    /// Negative rail magnitude (V); 0 for single-supply.
    pub vss: f64,
    /// Saturation bias current per device (A).
    pub i_bias: f64,
    /// Transistor count of the protected circuit.
    pub n_core: u32,
    /// Added switch transistor count.
    pub n_switch: u32,
    /// Fraction of each period the circuit is ON, in [0, 1].
    pub duty: f64,
}

impl PowerModelInputs {
    /// Inputs for the reference six-transistor differential amplifier:
    /// 7.5 nm oxide, 1 µm² gates, ±1.65 V rails, 10 µA bias, 10 MHz
    /// switching, gated through two transmission gates (4 transistors).
    pub fn reference_amp(duty: f64) -> PowerModelInputs {
        PowerModelInputs {
            eps: 3.45e-11,
            area: 1e-12,
            tox: 7.5e-9,
            f: 1e7,
            vdd: 1.65,
            vss: 1.65,
            i_bias: 1e-5,
            n_core: 6,
            n_switch: 4,
            duty,
        }
    }

    /// Checks the physical-validity invariants.
    pub fn validate(&self) -> Result<(), PowerError> {
        let positive = [
            ("eps", self.eps),
            ("area", self.area),
            ("tox", self.tox),
            ("f", self.f),
            ("vdd", self.vdd),
            ("i_bias", self.i_bias),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(PowerError::InvalidInput(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if !(self.vss >= 0.0) {
            return Err(PowerError::InvalidInput(format!(
                "vss must be non-negative, got {}",
                self.vss
            )));
        }
        if self.n_core == 0 {
            return Err(PowerError::InvalidInput(
                "n_core must be at least 1".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.duty) {
            return Err(PowerError::InvalidInput(format!(
                "duty must be in [0, 1], got {}",
                self.duty
            )));
        }
        Ok(())
    }
}

/// Every figure the analytic model produces, in SI units.
///
/// Serializes to JSON with keys exactly matching the field names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    /// Per-device gate capacitance `2·eps·area/(3·tox)` (F).
    pub c_device: f64,
    /// Effective switched capacitance `n_core · c_device` (F).
    pub c_eff: f64,
    /// Per-device dynamic power `f·c_device·(vdd+vss)²` (W).
    pub p_dynamic_device: f64,
    /// Per-device static power `i_bias·(vdd+vss)` (W).
    pub p_static_device: f64,
    /// Static power of the protected circuit alone (W).
    pub p_static_circuit: f64,
    /// Total power without any gating (W).
    pub p_total_unswitched: f64,
    /// Total power while gated ON, switches included (W).
    pub p_total_switched_on: f64,
    /// Total power while gated OFF; identically 0 in this model (W).
    pub p_total_switched_off: f64,
    /// Duty-cycle average `duty · p_total_switched_on` (W).
    pub p_average_switched: f64,
    /// `1 − p_average_switched / p_total_unswitched`; at most 1, negative
    /// when the switch overhead outweighs the gating.
    pub savings_fraction: f64,
}

impl PowerReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("power report serializes")
    }
}

#[derive(Debug, Error)]
pub enum PowerError {
    #[error("invalid power-model input: {0}")]
    InvalidInput(String),
    #[error("no ON window captured: measured ON power must be positive, got {0}")]
    NoOnWindow(f64),
}

/// Evaluate the analytic model.
pub fn analytic_power(inputs: &PowerModelInputs) -> Result<PowerReport, PowerError> {
    inputs.validate()?;
    let rail = inputs.vdd + inputs.vss;
    let n_core = f64::from(inputs.n_core);
    let n_all = f64::from(inputs.n_core + inputs.n_switch);
    let c_device = 2.0 * inputs.eps * inputs.area / (3.0 * inputs.tox);
    let p_dynamic_device = inputs.f * c_device * rail * rail;
    let p_static_device = inputs.i_bias * rail;
    let per_device = p_dynamic_device + p_static_device;
    let p_total_unswitched = n_core * per_device;
    let p_total_switched_on = n_all * per_device;
    let p_average_switched = inputs.duty * p_total_switched_on;
    Ok(PowerReport {
        c_device,
        c_eff: n_core * c_device,
        p_dynamic_device,
        p_static_device,
        p_static_circuit: n_core * p_static_device,
        p_total_unswitched,
        p_total_switched_on,
        p_total_switched_off: 0.0,
        p_average_switched,
        savings_fraction: 1.0 - p_average_switched / p_total_unswitched,
    })
}

/// Alternative per-device dynamic power using the full oxide capacitance
/// `eps·area/tox` instead of the two-thirds saturation gate capacitance:
/// `f·(eps·area/tox)·(vdd+vss)²`, i.e. exactly 1.5× the canonical
/// `p_dynamic_device`. The two coefficients are both in circulation; the
/// report totals use the two-thirds form throughout, and this function
/// exists so the larger bound can be quoted alongside them.
pub fn dynamic_power_full_cap(inputs: &PowerModelInputs) -> f64 {
    let rail = inputs.vdd + inputs.vss;
    inputs.f * (inputs.eps * inputs.area / inputs.tox) * rail * rail
}

/// The duty below which gating saves power at all: `n_core/(n_core+n_switch)`.
///
/// At this duty the average gated power equals the unswitched power; above
/// it the switch overhead costs more than the OFF time recovers.
pub fn breakeven_duty(n_core: u32, n_switch: u32) -> f64 {
    assert!(n_core > 0, "n_core must be at least 1");
    f64::from(n_core) / f64::from(n_core + n_switch)
}

/// One row of a duty sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DutyPoint {
    pub duty: f64,
    pub p_average_switched: f64,
    pub savings_fraction: f64,
}

/// Evaluate the model at each duty, keeping every other input fixed.
/// Rows come back in input order.
pub fn duty_sweep(
    inputs: &PowerModelInputs,
    duties: &[f64],
) -> Result<Vec<DutyPoint>, PowerError> {
    duties
        .iter()
        .map(|&duty| {
            let report = analytic_power(&PowerModelInputs { duty, ..*inputs })?;
            Ok(DutyPoint {
                duty,
                p_average_switched: report.p_average_switched,
                savings_fraction: report.savings_fraction,
            })
        })
        .collect()
}

/// Write a duty sweep as CSV: `duty,p_avg_w,savings`.
pub fn write_duty_sweep_csv<W: Write>(rows: &[DutyPoint], out: &mut W) -> io::Result<()> {
    writeln!(out, "duty,p_avg_w,savings")?;
    for row in rows {
        writeln!(
            out,
            "{:.8e},{:.8e},{:.8e}",
            row.duty, row.p_average_switched, row.savings_fraction
        )?;
    }
    Ok(())
}

/// Analytic-vs-measured comparison produced by [`reconcile`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reconciliation {
    /// Measured ON-window power over the analytic ON total.
    pub on_ratio: f64,
    /// Measured full-period average over the analytic average.
    pub avg_ratio: f64,
    /// `measured_avg / measured_on` — the duty the measurement implies.
    pub duty_inferred: f64,
}

/// Compare simulation-measured powers against an analytic report.
///
/// `measured_on` is the average power over a window in which the circuit is
/// gated ON; `measured_avg` is the average over whole gating periods. The
/// OFF-state leakage the analytic model rounds to zero shows up here as
/// `duty_inferred` exceeding the commanded duty.
pub fn reconcile(
    report: &PowerReport,
    measured_on: f64,
    measured_avg: f64,
) -> Result<Reconciliation, PowerError> {
    if !(measured_on > 0.0) {
        return Err(PowerError::NoOnWindow(measured_on));
    }
    Ok(Reconciliation {
        on_ratio: measured_on / report.p_total_switched_on,
        avg_ratio: measured_avg / report.p_average_switched,
        duty_inferred: measured_avg / measured_on,
    })
}
