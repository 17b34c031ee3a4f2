//! Size the six-transistor differential amplifier to a target gain, then
//! probe its DC operating point and transfer behavior.
//!
//! Run with: `cargo run --example amp_design`

use neuroswitch::engine::{dc_operating_point, SimOptions};
use neuroswitch::netlist::{parse_netlist, Waveform};
use neuroswitch::scenarios::{build_switched_amp, AmpSpec, GateSpec};

fn main() {
    let spec = AmpSpec::default();
    println!(
        "target gain {}, rails {:+.2}/{:+.2} V, bias {:.0} µA",
        spec.target_gain,
        spec.vdd,
        spec.vss,
        spec.i_bias * 1e6
    );

    // The builder searches a geometric grid of input-pair sizes until the
    // measured small-signal gain lands within ±20% of the target.
    let built = build_switched_amp(&spec, &GateSpec::always_on(), &Waveform::Dc(0.0))
        .expect("default spec is achievable");
    println!(
        "sized input pair W/L = {:.3}, measured gain = {:.1}",
        built.pair_wl, built.measured_gain
    );
    println!(
        "bias resistor = {:.1} kΩ, load threshold = {:.2} V",
        built.r_bias / 1e3,
        built.vt_load
    );

    // Quiescent operating point of the ungated amplifier.
    let op = dc_operating_point(&built.unswitched, &SimOptions::new(1e-9, 1e-9))
        .expect("operating point converges");
    for node in ["vout", "nmir", "ntail", "nbias"] {
        println!("v({node:<5}) = {:+.4} V", op.voltage(node).unwrap());
    }
    // 10 µA reference branch + 2 µA tail = 12 µA: six times the tail
    // current, which is the identity the analytic power model leans on.
    let supply = op.source_currents["VDD"];
    println!("VDD delivers {:.3} µA = 6 × the 2 µA tail current", supply * 1e6);

    // Re-parse the serialized deck and apply a small differential input to
    // see the gain directly: 1 mV in, about a volt out.
    let deck = neuroswitch::netlist::serialize_netlist(&built.unswitched);
    let n = parse_netlist(&deck).expect("generated deck parses");
    let mut stepped = n.clone();
    for e in &mut stepped.elements {
        if e.name.eq_ignore_ascii_case("V1") {
            if let neuroswitch::netlist::ElementKind::VSource { waveform } = &mut e.kind {
                if let neuroswitch::netlist::Waveform::Dc(v) = waveform {
                    *v += 0.5e-3; // +half the differential step on v1
                }
            }
        }
        if e.name.eq_ignore_ascii_case("V2") {
            if let neuroswitch::netlist::ElementKind::VSource { waveform } = &mut e.kind {
                if let neuroswitch::netlist::Waveform::Dc(v) = waveform {
                    *v -= 0.5e-3;
                }
            }
        }
    }
    let op2 = dc_operating_point(&stepped, &SimOptions::new(1e-9, 1e-9)).unwrap();
    let delta = op2.voltage("vout").unwrap() - op.voltage("vout").unwrap();
    println!("1 mV differential step moves vout by {delta:+.4} V");
}
