//! Parse a netlist, inspect what the parser understood, validate it, and
//! serialize it back out.
//!
//! Run with: `cargo run --example netlist_roundtrip`

use neuroswitch::netlist::{parse_netlist, parse_value, serialize_netlist, validate};

const DECK: &str = "\
* switched rc divider with a mosfet pull-down
V1 in 0 PULSE(0 3.3 1u 10n 10n 4u 10u)
Vg gate 0 DC 1.2
R1 in mid 4.7k
R2 mid 0 10k
C1 mid 0 220p ic=0
M1 mid gate 0 0 nch W=2u L=180n
S1 in boost gate 0 ron=50 roff=100meg vt=0.6
Rb boost 0 1k
.model nch NMOS vt=0.45 kp=120u lambda=0.05 tox=4n eps=34.5p
.tran 10n 20u
.end
";

fn main() {
    // Engineering suffixes work anywhere a number does, in either case.
    for token in ["4.7k", "220p", "100meg", "180n", "0.6", "1e-3", "2.5MEG"] {
        println!("parse_value({token:>8}) = {:e}", parse_value(token).unwrap());
    }
    println!();

    let n = parse_netlist(DECK).expect("deck parses");
    println!("title:     {}", n.title);
    println!("elements:  {}", n.elements.len());
    println!(
        "nodes:     {:?}  (index 0 is always ground)",
        n.node_names
    );
    println!("models:    {:?}", n.models.keys().collect::<Vec<_>>());
    if let Some((step, stop)) = n.tran_directive() {
        println!("transient: step {step:e} s, stop {stop:e} s");
    }
    println!();

    // Validation separates hard errors from style warnings; this deck is
    // clean, so the loop prints nothing.
    for d in validate(&n) {
        println!("{d}");
    }

    // Round trip: the serialized deck parses back to the same structure.
    let out = serialize_netlist(&n);
    println!("--- serialized ---\n{out}");
    let reparsed = parse_netlist(&out).expect("serialized deck parses");
    assert_eq!(n, reparsed, "serialize→parse is a fixed point");
    println!("round trip: serialized deck re-parses to an identical netlist");
}
