//! Print Level-1 MOSFET output characteristics (id vs vds for a family of
//! vgs values) for an NMOS and the matching PMOS, plus the gate
//! capacitance the power model derives from the same card.
//!
//! Run with: `cargo run --example mosfet_curves`

use neuroswitch::devices::{gate_capacitance, mosfet_eval, GateCapInputs, Region};
use neuroswitch::netlist::{DeviceModel, Polarity};

fn main() {
    let nmos = DeviceModel {
        name: "nch".to_string(),
        polarity: Polarity::Nmos,
        vt: 0.5,
        kp: 100e-6,
        lambda: 0.02,
        tox: 7.5e-9,
        eps: 34.5e-12,
    };
    let pmos = DeviceModel {
        polarity: Polarity::Pmos,
        name: "pch".to_string(),
        kp: 40e-6,
        ..nmos.clone()
    };
    let (w, l) = (2e-6, 1e-6);

    println!("NMOS id(vds) in µA, W/L = 2:");
    print!("{:>6}", "vds");
    for tenth in 0..=3 {
        print!("{:>10}", format!("vgs={:.1}", 0.6 + 0.2 * f64::from(tenth)));
    }
    println!();
    for step in 0..=10 {
        let vds = 0.25 * f64::from(step);
        print!("{vds:>6.2}");
        for tenth in 0..=3 {
            let vgs = 0.6 + 0.2 * f64::from(tenth);
            let e = mosfet_eval(&nmos, w, l, vgs, vds, 0.0);
            print!("{:>10.3}", e.id * 1e6);
        }
        println!();
    }

    // The region classification follows the same bias point.
    for (vgs, vds) in [(0.3, 1.0), (0.8, 0.1), (0.8, 1.0)] {
        let e = mosfet_eval(&nmos, w, l, vgs, vds, 0.0);
        println!(
            "vgs={vgs:.1} vds={vds:.1}: {:?}, id={:.3e} A, gm={:.3e} S, gds={:.3e} S",
            e.region, e.id, e.gm, e.gds
        );
    }
    assert_eq!(mosfet_eval(&nmos, w, l, 0.3, 1.0, 0.0).region, Region::Cutoff);

    // A PMOS card stores |vt|; bias it with negative vgs/vds and the drain
    // current comes out negative (flowing out of the drain).
    let e = mosfet_eval(&pmos, w, l, -0.8, -1.0, 0.0);
    println!(
        "PMOS vgs=-0.8 vds=-1.0: {:?}, id={:.3e} A (negative: current exits the drain)",
        e.region, e.id
    );

    // Same card, same geometry: the gate capacitance used by the
    // duty-cycling power model.
    let c = gate_capacitance(GateCapInputs {
        eps: nmos.eps,
        area: w * l,
        tox: nmos.tox,
    });
    println!("gate capacitance of that device: {c:.3e} F");
}
