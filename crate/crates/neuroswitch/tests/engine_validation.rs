//! Physics-level checks on the circuit engine: linearity, conservation,
//! integration order, determinism, and a golden waveform regression.

use neuroswitch::engine::{
    dc_operating_point, measure_branch_power, transient, verify_kcl, Method, SimOptions,
};
use neuroswitch::netlist::{parse_netlist, ElementKind, Waveform};

const TAU: f64 = 1e-6; // 1k · 1n

fn rc_deck(v: f64) -> String {
    format!(
        "* rc charging step\nV1 in 0 DC {v}\nR1 in out 1k\nC1 out 0 1n ic=0\n.end\n"
    )
}

fn rc_max_error(dt: f64, method: Method) -> f64 {
    let n = parse_netlist(&rc_deck(1.0)).unwrap();
    let mut opts = SimOptions::new(dt, 5.0 * TAU);
    opts.method = method;
    let w = transient(&n, &opts).unwrap();
    w.times()
        .iter()
        .zip(w.node("out").unwrap())
        .map(|(&t, &v)| (v - (1.0 - (-t / TAU).exp())).abs())
        .fold(0.0f64, f64::max)
}

#[test]
fn superposition_holds_on_a_linear_network() {
    // Two sources into a resistive bridge: solving with both on equals the
    // sum of solving with each alone.
    let deck = |va: f64, vb: f64| {
        format!(
            "* two-source bridge\nVA a 0 DC {va}\nVB b 0 DC {vb}\n\
             R1 a m 1k\nR2 b m 2k\nR3 m 0 3k\nR4 a b 4k\n.end\n"
        )
    };
    let solve = |va: f64, vb: f64| {
        let n = parse_netlist(&deck(va, vb)).unwrap();
        dc_operating_point(&n, &SimOptions::new(1e-9, 1e-9))
            .unwrap()
            .voltage("m")
            .unwrap()
    };
    let both = solve(2.0, -3.0);
    let sum = solve(2.0, 0.0) + solve(0.0, -3.0);
    assert!(
        (both - sum).abs() < 1e-9,
        "superposition violated: {both} vs {sum}"
    );
}

#[test]
fn source_energy_balances_dissipation_plus_storage() {
    // Over a charging transient, source energy = resistor heat + ½CV².
    // Trapezoidal quadrature on trapezoidal samples keeps this tight.
    let n = parse_netlist(&rc_deck(2.0)).unwrap();
    let opts = SimOptions::new(TAU / 1000.0, 5.0 * TAU);
    let w = transient(&n, &opts).unwrap();

    let delivered = measure_branch_power(&w, &["V1"]).unwrap().per_source_energy["V1"];

    let vin = w.node("in").unwrap();
    let vout = w.node("out").unwrap();
    let times = w.times();
    let mut heat = 0.0;
    for k in 1..times.len() {
        let p0 = (vin[k - 1] - vout[k - 1]).powi(2) / 1e3;
        let p1 = (vin[k] - vout[k]).powi(2) / 1e3;
        heat += 0.5 * (p0 + p1) * (times[k] - times[k - 1]);
    }
    let stored = 0.5 * 1e-9 * vout.last().unwrap().powi(2);

    let relative_gap = (delivered - heat - stored).abs() / delivered;
    assert!(
        relative_gap < 1e-3,
        "energy imbalance {relative_gap:.3e} (delivered {delivered:.6e} J, \
         heat {heat:.6e} J, stored {stored:.6e} J)"
    );
}

#[test]
fn trapezoidal_is_second_order_and_backward_euler_first() {
    let trap_ratio =
        rc_max_error(TAU / 100.0, Method::Trapezoidal) / rc_max_error(TAU / 200.0, Method::Trapezoidal);
    assert!(
        (3.0..=5.0).contains(&trap_ratio),
        "trapezoidal halving ratio {trap_ratio:.2} outside [3, 5]"
    );
    let be_ratio =
        rc_max_error(TAU / 100.0, Method::BackwardEuler) / rc_max_error(TAU / 200.0, Method::BackwardEuler);
    assert!(
        (1.7..=2.3).contains(&be_ratio),
        "backward-euler halving ratio {be_ratio:.2} outside [1.7, 2.3]"
    );
}

#[test]
fn every_accepted_point_satisfies_kcl() {
    // Replay a nonlinear, switch-heavy run through the residual checker.
    let deck = "\
* nmos load gated by a clocked switch
VDD vdd 0 DC 2.5
VCK ck 0 PULSE(0 3.3 100n 1n 1n 300n 1u)
S1 vdd island ck 0 ron=50 roff=1g vt=1.65
R1 island d 10k
M1 d d 0 0 nch W=5u L=1u
C1 island 0 10p ic=0
.model nch NMOS vt=0.5 kp=100u lambda=0.02 tox=7.5n eps=34.5p
.end
";
    let n = parse_netlist(deck).unwrap();
    let opts = SimOptions::new(2e-9, 3e-6);
    let w = transient(&n, &opts).unwrap();
    verify_kcl(&n, &w, &opts).expect("KCL residual bound holds at every sample");
}

#[test]
fn identical_runs_produce_identical_bytes() {
    let n = parse_netlist(&rc_deck(1.0)).unwrap();
    let opts = SimOptions::new(TAU / 50.0, 5.0 * TAU);
    let mut csv_a = Vec::new();
    let mut csv_b = Vec::new();
    transient(&n, &opts).unwrap().write_csv(&mut csv_a).unwrap();
    transient(&n, &opts).unwrap().write_csv(&mut csv_b).unwrap();
    assert_eq!(csv_a, csv_b, "repeat runs must be byte-identical");
}

#[test]
fn golden_rc_waveform_regression() {
    // First rows of the canonical RC run, frozen. Any engine change that
    // moves these bytes is a behavior change and must be deliberate.
    let n = parse_netlist(&rc_deck(1.0)).unwrap();
    let w = transient(&n, &SimOptions::new(TAU / 10.0, TAU)).unwrap();
    let mut csv = Vec::new();
    w.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let head: Vec<&str> = text.lines().take(4).collect();
    assert_eq!(head[0], "time,in,out,I(V1)");
    assert_eq!(head[1], "0.00000000e0,1.00000000e0,0.00000000e0,1.00000000e-3");
    assert_eq!(
        head[2],
        "1.00000000e-7,1.00000000e0,9.09090909e-2,9.09090910e-4"
    );
    assert_eq!(
        head[3],
        "2.00000000e-7,1.00000000e0,1.77489177e-1,8.22510824e-4"
    );
    assert_eq!(text.lines().count(), 12, "header plus 11 samples");
}

#[test]
fn equilibrium_initial_condition_stays_flat() {
    // Seed the capacitor at its DC target: nothing should move, under
    // either method, to near machine precision.
    let mut n = parse_netlist(&rc_deck(1.0)).unwrap();
    for e in &mut n.elements {
        if let ElementKind::Capacitor { ic, .. } = &mut e.kind {
            *ic = Some(1.0);
        }
    }
    for method in [Method::BackwardEuler, Method::Trapezoidal] {
        let mut opts = SimOptions::new(TAU / 20.0, 2.0 * TAU);
        opts.method = method;
        let w = transient(&n, &opts).unwrap();
        let drift = w
            .node("out")
            .unwrap()
            .iter()
            .map(|v| (v - 1.0).abs())
            .fold(0.0f64, f64::max);
        assert!(drift < 1e-9, "{method:?}: equilibrium drifted by {drift:e}");
    }
}

#[test]
fn switch_state_changes_do_not_stall_the_run() {
    // A stiff ON/OFF transition (large island swing in one step) relies on
    // the damped Newton iteration; the run must converge and the island
    // must actually follow the gate.
    let deck = "\
* hard-switched island
VDD vdd 0 DC 2.5
VG g 0 PULSE(0 3.3 1u 1n 1n 1u 2u)
S1 vdd isl g 0 ron=100 roff=1e9 vt=1.65
R1 isl 0 100k
C1 isl 0 1p ic=0
.end
";
    let n = parse_netlist(deck).unwrap();
    let w = transient(&n, &SimOptions::new(5e-9, 4e-6)).unwrap();
    let isl = w.node("isl").unwrap();
    let times = w.times();
    let at = |t: f64| isl[times.iter().position(|&x| x >= t).unwrap()];
    assert!(at(1.9e-6) > 2.4, "island should sit near the rail while ON");
    assert!(at(2.9e-6) < 0.1, "island should discharge while OFF");

    // Sine drive exercises the non-polygonal waveform path too.
    let sine = "\
* rc driven by a sine
V1 in 0 SIN(0 1 1meg)
R1 in out 1k
C1 out 0 159p
.end
";
    let n = parse_netlist(sine).unwrap();
    let w = transient(&n, &SimOptions::new(1e-9, 2e-6)).unwrap();
    let peak = w.node("out").unwrap().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(
        (0.6..1.0).contains(&peak),
        "1 MHz sine through its corner should attenuate to ~0.7, got {peak}"
    );
}

#[test]
fn waveform_accessors_are_consistent() {
    let n = parse_netlist(&rc_deck(1.0)).unwrap();
    let w = transient(&n, &SimOptions::new(TAU / 10.0, TAU)).unwrap();
    assert_eq!(w.rows(), w.times().len());
    assert_eq!(w.node_names(), &["in".to_string(), "out".to_string()]);
    assert_eq!(w.vsource_names(), &["V1".to_string()]);
    assert_eq!(w.step_methods().len(), w.rows() - 1);
    assert!(w.node("OUT").is_some(), "node lookup is case-insensitive");
    assert!(w.source_current("v1").is_some());
    assert!(w.node("nope").is_none());

    // Scaled waveforms preserve timing: used to split differential drives.
    let half = Waveform::Dc(3.0).scaled(0.5);
    assert_eq!(half, Waveform::Dc(1.5));
}
