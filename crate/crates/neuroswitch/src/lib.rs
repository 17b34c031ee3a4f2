//! Mixed-signal simulation toolkit for spike-gated analog power management.
//!
//! The crate connects three layers that are normally simulated in separate
//! tools:
//!
//! * [`netlist`] + [`devices`] + [`engine`] — a small SPICE-style circuit
//!   simulator: a netlist parser for R/C/V/I sources, Level-1 MOSFETs, and
//!   voltage-controlled switches, with DC operating-point and fixed-step
//!   transient analysis (backward Euler or trapezoidal) built on modified
//!   nodal analysis and damped Newton iteration.
//! * [`neuron`] — a behavioral Izhikevich spiking neuron with the classic
//!   firing-pattern presets, spike-train extraction, an inter-spike-interval
//!   pattern classifier, and a bridge that turns spike trains into netlist
//!   control waveforms.
//! * [`power`] — an analytic power model for duty-cycled analog blocks
//!   (gate-capacitance dynamic term plus bias static term), duty sweeps,
//!   breakeven accounting, and reconciliation against simulated power.
//!
//! [`scenarios`] ties the layers together: it sizes a six-transistor
//! differential amplifier to a target gain, gates its supply rails through
//! behavioral switches driven by a neuron's spike train, and checks the
//! measured supply power against the analytic model — the headline result
//! being ~99% average-power savings at 1% duty while the amplifier still
//! amplifies normally inside each ON window. [`cli`] exposes the same flows
//! as the `neuroswitch` binary.
//!
//! Runnable walkthroughs of each layer live in `examples/`; start with
//! `spike_gated_amp` for the end-to-end story.

pub mod cli;
pub mod devices;
pub mod engine;
pub mod netlist;
pub mod neuron;
pub mod power;
pub mod scenarios;
