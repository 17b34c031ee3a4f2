//! Element constitutive relations: the Level-1 square-law MOSFET with exact
//! analytic partials, the two-state voltage-controlled switch, the
//! gate-oxide capacitance formula, and time-dependent source evaluation.
//!
//! Everything here is a pure function of its arguments; the simulation
//! engine owns all state.

use crate::netlist::{DeviceModel, Polarity, Waveform};

/// MOSFET operating region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Cutoff,
    Triode,
    Saturation,
}

/// Drain current and its partial derivatives at one bias point.
///
/// `id` flows into the drain terminal (negative for a PMOS in normal
/// operation, and for a reverse-biased NMOS whose channel conducts
/// source-to-drain). `gm` and `gds` are the exact partials ∂id/∂vgs and
/// ∂id/∂vds of the returned branch, signed accordingly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MosfetEval {
    pub id: f64,
    pub gm: f64,
    pub gds: f64,
    pub region: Region,
}

/// Square law for an NMOS-normalized device with `vds >= 0`.
///
/// The `(1 + lambda*vds)` factor multiplies the triode branch as well so the
/// current stays continuous at the region boundary.
fn square_law(vt: f64, beta: f64, lambda: f64, vgs: f64, vds: f64) -> (f64, f64, f64, Region) {
    let vov = vgs - vt;
    if vov <= 0.0 {
        return (0.0, 0.0, 0.0, Region::Cutoff);
    }
    let lam = 1.0 + lambda * vds;
    if vds < vov {
        let id0 = beta * (vov * vds - 0.5 * vds * vds);
        let id = id0 * lam;
        let gm = beta * vds * lam;
        let gds = beta * (vov - vds) * lam + id0 * lambda;
        (id, gm, gds, Region::Triode)
    } else {
        let id0 = 0.5 * beta * vov * vov;
        let id = id0 * lam;
        let gm = beta * vov * lam;
        let gds = id0 * lambda;
        (id, gm, gds, Region::Saturation)
    }
}

/// Evaluate drain current and partials for a Level-1 MOSFET.
///
/// PMOS devices are handled by sign-flipping the terminal voltages so a
/// single code path serves both polarities; a negative `vds` (after
/// normalization) swaps drain and source, with the chain rule applied to the
/// partials. `vbs` is accepted for interface completeness; body effect is
/// not modeled.
pub fn mosfet_eval(
    model: &DeviceModel,
    w: f64,
    l: f64,
    vgs: f64,
    vds: f64,
    vbs: f64,
) -> MosfetEval {
    let _ = vbs; // no body effect (gamma = 0)
    let beta = model.kp * w / l;
    let (sign, vgs_n, vds_n) = match model.polarity {
        Polarity::Nmos => (1.0, vgs, vds),
        Polarity::Pmos => (-1.0, -vgs, -vds),
    };
    // For the normalized device: id(vgs, vds) = -id(vgs - vds, -vds) when
    // vds < 0, giving ∂id/∂vgs = -gm' and ∂id/∂vds = gm' + gds'.
    let (id, gm, gds, region) = if vds_n >= 0.0 {
        square_law(model.vt, beta, model.lambda, vgs_n, vds_n)
    } else {
        let (id_r, gm_r, gds_r, region) =
            square_law(model.vt, beta, model.lambda, vgs_n - vds_n, -vds_n);
        (-id_r, -gm_r, gm_r + gds_r, region)
    };
    // Un-flip for PMOS: id_p(vgs, vds) = -id_n(-vgs, -vds), so the current
    // changes sign while both partials keep theirs.
    MosfetEval {
        id: sign * id,
        gm,
        gds,
        region,
    }
}

/// Inputs to the gate-capacitance formula.
///
/// `area` is the gate area; when derived from a model card it is `W * L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateCapInputs {
    /// Oxide permittivity (F/m).
    pub eps: f64,
    /// Gate area (m²).
    pub area: f64,
    /// Oxide thickness (m).
    pub tox: f64,
}

impl GateCapInputs {
    /// Geometry for one device drawn from its model card.
    pub fn from_model(model: &DeviceModel, w: f64, l: f64) -> GateCapInputs {
        GateCapInputs {
            eps: model.eps,
            area: w * l,
            tox: model.tox,
        }
    }
}

/// Effective gate capacitance of one MOSFET: `2·ε·A / (3·t_ox)`.
///
/// The 2/3 factor is the saturation-region gate-channel value; it is applied
/// uniformly regardless of operating region, which overstates nothing the
/// power model depends on but is an approximation worth knowing about.
pub fn gate_capacitance(g: GateCapInputs) -> f64 {
    2.0 * g.eps * g.area / (3.0 * g.tox)
}

/// Two-state switch parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchParams {
    pub ron: f64,
    pub roff: f64,
    pub vt: f64,
}

/// Switch conductance at a control voltage: `1/ron` when `vctrl >= vt`,
/// `1/roff` otherwise. Memoryless, no hysteresis; a tie at the threshold
/// closes the switch.
pub fn switch_eval(params: SwitchParams, vctrl: f64) -> f64 {
    if vctrl >= params.vt {
        1.0 / params.ron
    } else {
        1.0 / params.roff
    }
}

/// Value of a source waveform at time `t` (seconds).
///
/// `Pulse` evaluates the periodic trapezoid; `Pwl` interpolates linearly,
/// holding the first value before the first breakpoint and the last value
/// after the final one; `Sine` is `offset + amplitude·sin(2π·f·t)`.
pub fn source_value(w: &Waveform, t: f64) -> f64 {
    match *w {
        Waveform::Dc(v) => v,
        Waveform::Pulse { v1, v2, delay, rise, fall, width, period } => {
            if t < delay {
                return v1;
            }
            let tau = (t - delay) % period;
            if tau < rise {
                v1 + (v2 - v1) * tau / rise
            } else if tau < rise + width {
                v2
            } else if tau < rise + width + fall {
                v2 + (v1 - v2) * (tau - rise - width) / fall
            } else {
                v1
            }
        }
        Waveform::Pwl(ref pts) => {
            let first = pts[0];
            let last = pts[pts.len() - 1];
            if t <= first.0 {
                return first.1;
            }
            if t >= last.0 {
                return last.1;
            }
            // Find the segment containing t; breakpoint lists here are short.
            let hi = pts.partition_point(|&(pt, _)| pt < t);
            let (t0, v0) = pts[hi - 1];
            let (t1, v1) = pts[hi];
            v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        }
        Waveform::Sine { offset, amplitude, frequency } => {
            offset + amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin()
        }
    }
}
