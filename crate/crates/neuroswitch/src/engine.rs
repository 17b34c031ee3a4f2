//! DC operating-point and fixed-step transient simulation via modified nodal
//! analysis (MNA) with Newton–Raphson linearization.
//!
//! Unknowns are the non-ground node voltages plus one branch current per
//! voltage source, so source currents are directly observable for power
//! measurement. Each Newton iteration stamps linearized conductances and
//! history currents, solves the dense system by LU with partial pivoting,
//! and accepts the iterate only when both the per-unknown update and the
//! nonlinear KCL residual meet tolerance. A `gmin` conductance from every
//! node to ground is always on, so any floating node stays solvable.
//!
//! Transient analysis uses fixed steps: trapezoidal by default, with a
//! backward-Euler step forced at the first step and after any switch state
//! change to damp the discontinuity. There is no adaptive step control, so
//! identical inputs reproduce bit-identical waveforms.
//!
//! Sign conventions: stored and reported voltage-source currents are
//! positive when the source delivers power (current flowing out of the `n+`
//! terminal into the circuit), so `v·i` integrates to delivered energy.

use std::collections::BTreeMap;
use std::io::{self, Write};

use thiserror::Error;

use crate::devices::{self, SwitchParams};
use crate::netlist::{DeviceModel, ElementKind, Netlist, Waveform};

/// Transient integration method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    BackwardEuler,
    Trapezoidal,
}

/// Solver and integration controls.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub method: Method,
    /// Timestep (s).
    pub dt: f64,
    /// End time (s).
    pub tstop: f64,
    /// Relative convergence tolerance.
    pub reltol: f64,
    /// Absolute voltage tolerance (V).
    pub vabstol: f64,
    /// Absolute current tolerance (A).
    pub iabstol: f64,
    pub max_nr_iters: usize,
    /// Conductance floor from every node to ground (S).
    pub gmin: f64,
}

impl SimOptions {
    /// Options with default tolerances for a given step and stop time.
    pub fn new(dt: f64, tstop: f64) -> SimOptions {
        SimOptions {
            method: Method::Trapezoidal,
            dt,
            tstop,
            reltol: 1e-3,
            vabstol: 1e-6,
            iabstol: 1e-12,
            max_nr_iters: 100,
            gmin: 1e-12,
        }
    }

    fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::InvalidOptions(msg));
        if !(self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.tstop > self.dt) {
            return bad(format!(
                "tstop must exceed dt, got dt={} tstop={}",
                self.dt, self.tstop
            ));
        }
        if !(self.reltol > 0.0 && self.vabstol > 0.0 && self.iabstol > 0.0) {
            return bad("tolerances must be > 0".into());
        }
        if self.max_nr_iters == 0 {
            return bad("max_nr_iters must be >= 1".into());
        }
        if !(self.gmin >= 0.0) {
            return bad(format!("gmin must be >= 0, got {}", self.gmin));
        }
        Ok(())
    }
}

/// Converged DC solution.
#[derive(Debug, Clone)]
pub struct OperatingPoint {
    /// All node names, ground first (index-aligned with `node_voltages`).
    pub node_names: Vec<String>,
    /// Node voltages including ground's 0.0 at index 0.
    pub node_voltages: Vec<f64>,
    /// Delivered-positive branch current per voltage source.
    pub source_currents: BTreeMap<String, f64>,
    /// Total Newton iterations spent (including any ramping stages).
    pub nr_iterations: usize,
}

impl OperatingPoint {
    /// Voltage of a node by (case-insensitive) name.
    pub fn voltage(&self, node: &str) -> Option<f64> {
        self.node_names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(node))
            .map(|i| self.node_voltages[i])
    }
}

/// Sampled transient results: one row per accepted timestep.
#[derive(Debug, Clone)]
pub struct Waveforms {
    times: Vec<f64>,
    node_names: Vec<String>,
    node_voltages: Vec<Vec<f64>>,
    vsource_names: Vec<String>,
    vsource_currents: Vec<Vec<f64>>,
    /// Netlist node indices (n+, n-) per voltage source, for power integrals.
    vsource_terminals: Vec<(usize, usize)>,
    /// Integration method actually used at each step (one per row after the
    /// first); backward Euler appears at the first step and after switch
    /// state changes regardless of the requested method.
    step_methods: Vec<Method>,
}

impl Waveforms {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn rows(&self) -> usize {
        self.times.len()
    }

    /// Non-ground node names in node-table order (the CSV column order).
    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    pub fn vsource_names(&self) -> &[String] {
        &self.vsource_names
    }

    pub fn step_methods(&self) -> &[Method] {
        &self.step_methods
    }

    /// Voltage samples of a node by (case-insensitive) name.
    pub fn node(&self, name: &str) -> Option<&[f64]> {
        self.node_names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name))
            .map(|i| self.node_voltages[i].as_slice())
    }

    /// Delivered-positive current samples of a voltage source.
    pub fn source_current(&self, name: &str) -> Option<&[f64]> {
        self.vsource_names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name))
            .map(|i| self.vsource_currents[i].as_slice())
    }

    /// Write the waveform table as CSV: `time,<nodes...>,I(<sources>)...`,
    /// scientific notation with 9 significant digits.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        write!(out, "time")?;
        for n in &self.node_names {
            write!(out, ",{n}")?;
        }
        for s in &self.vsource_names {
            write!(out, ",I({s})")?;
        }
        writeln!(out)?;
        for row in 0..self.times.len() {
            write!(out, "{:.8e}", self.times[row])?;
            for col in &self.node_voltages {
                write!(out, ",{:.8e}", col[row])?;
            }
            for col in &self.vsource_currents {
                write!(out, ",{:.8e}", col[row])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Energy and average power drawn from named voltage sources.
#[derive(Debug, Clone)]
pub struct PowerMeasurement {
    /// Delivered energy per source (J), trapezoidal quadrature.
    pub per_source_energy: BTreeMap<String, f64>,
    /// Delivered average power per source (W).
    pub per_source_avg_power: BTreeMap<String, f64>,
    /// Sum of the per-source averages (W).
    pub total_avg_power: f64,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("newton failed to converge after {iterations} iterations{}", fmt_time(.time))]
    NonConvergence {
        time: Option<f64>,
        iterations: usize,
        /// Last iterate, for post-mortem inspection.
        last_iterate: Vec<f64>,
    },
    #[error("singular MNA matrix: no usable pivot for unknown '{unknown}'")]
    SingularMatrix { unknown: String },
    #[error("unknown source '{name}'")]
    UnknownSource { name: String },
    #[error("invalid simulation options: {0}")]
    InvalidOptions(String),
    #[error("netlist not simulatable: {0}")]
    BadNetlist(String),
    #[error(
        "KCL residual {residual:.3e} A exceeds bound {bound:.3e} A at node '{node}', t={time:.6e} s"
    )]
    KclViolation {
        time: f64,
        node: String,
        residual: f64,
        bound: f64,
    },
}

fn fmt_time(t: &Option<f64>) -> String {
    match t {
        Some(t) => format!(" at t={t:.6e} s"),
        None => " (dc operating point)".to_string(),
    }
}

/// A netlist element resolved for simulation: node-table indices plus a
/// cloned model card where needed.
enum Dev {
    Res {
        a: usize,
        b: usize,
        g: f64,
    },
    Cap {
        a: usize,
        b: usize,
        c: f64,
        ic: Option<f64>,
        /// Index into the companion-state vector.
        slot: usize,
        /// Branch-unknown position when `ic` is pinned during init.
        pin: Option<usize>,
    },
    Vsrc {
        p: usize,
        m: usize,
        wf: Waveform,
        branch: usize,
    },
    Isrc {
        p: usize,
        m: usize,
        wf: Waveform,
    },
    Mos {
        d: usize,
        g: usize,
        s: usize,
        model: DeviceModel,
        w: f64,
        l: f64,
    },
    Sw {
        a: usize,
        b: usize,
        cp: usize,
        cn: usize,
        params: SwitchParams,
    },
}

struct System {
    devs: Vec<Dev>,
    n_nodes: usize,
    n_vsrc: usize,
    n_caps: usize,
    node_names: Vec<String>,
    vsrc_names: Vec<String>,
    vsrc_terminals: Vec<(usize, usize)>,
    /// Names of `ic=` capacitors, indexed by pin position.
    ic_names: Vec<String>,
}

impl System {
    /// Unknowns in the base (transient / plain DC) system.
    fn base_size(&self) -> usize {
        self.n_nodes - 1 + self.n_vsrc
    }

    /// Unknowns during the initial solve, where `ic=` capacitors are pinned
    /// through pseudo branch currents appended after the real sources.
    fn init_size(&self) -> usize {
        self.base_size() + self.ic_names.len()
    }

    fn unknown_name(&self, i: usize) -> String {
        if i < self.n_nodes - 1 {
            self.node_names[i + 1].clone()
        } else if i < self.base_size() {
            format!("I({})", self.vsrc_names[i - (self.n_nodes - 1)])
        } else {
            format!("ic({})", self.ic_names[i - self.base_size()])
        }
    }
}

fn build_system(n: &Netlist) -> Result<System, EngineError> {
    let mut devs = Vec::with_capacity(n.elements.len());
    let mut vsrc_names = Vec::new();
    let mut vsrc_terminals = Vec::new();
    let mut ic_names = Vec::new();
    let mut n_caps = 0;
    for e in &n.elements {
        match &e.kind {
            ElementKind::Resistor { value } => {
                if *value <= 0.0 {
                    return Err(EngineError::BadNetlist(format!(
                        "resistor '{}' has non-positive value",
                        e.name
                    )));
                }
                devs.push(Dev::Res {
                    a: e.nodes[0],
                    b: e.nodes[1],
                    g: 1.0 / value,
                });
            }
            ElementKind::Capacitor { value, ic } => {
                if *value <= 0.0 {
                    return Err(EngineError::BadNetlist(format!(
                        "capacitor '{}' has non-positive value",
                        e.name
                    )));
                }
                let pin = ic.map(|_| {
                    ic_names.push(e.name.clone());
                    ic_names.len() - 1
                });
                devs.push(Dev::Cap {
                    a: e.nodes[0],
                    b: e.nodes[1],
                    c: *value,
                    ic: *ic,
                    slot: n_caps,
                    pin,
                });
                n_caps += 1;
            }
            ElementKind::VSource { waveform } => {
                let branch = vsrc_names.len();
                vsrc_names.push(e.name.clone());
                vsrc_terminals.push((e.nodes[0], e.nodes[1]));
                devs.push(Dev::Vsrc {
                    p: e.nodes[0],
                    m: e.nodes[1],
                    wf: waveform.clone(),
                    branch,
                });
            }
            ElementKind::ISource { waveform } => {
                devs.push(Dev::Isrc {
                    p: e.nodes[0],
                    m: e.nodes[1],
                    wf: waveform.clone(),
                });
            }
            ElementKind::Mosfet { model, w, l } => {
                let card = n.model(model).ok_or_else(|| {
                    EngineError::BadNetlist(format!(
                        "mosfet '{}' references undefined model '{model}'",
                        e.name
                    ))
                })?;
                devs.push(Dev::Mos {
                    d: e.nodes[0],
                    g: e.nodes[1],
                    s: e.nodes[2],
                    model: card.clone(),
                    w: *w,
                    l: *l,
                });
            }
            ElementKind::Switch { ron, roff, vt } => {
                if *ron <= 0.0 || *roff <= *ron {
                    return Err(EngineError::BadNetlist(format!(
                        "switch '{}' needs 0 < ron < roff",
                        e.name
                    )));
                }
                devs.push(Dev::Sw {
                    a: e.nodes[0],
                    b: e.nodes[1],
                    cp: e.nodes[2],
                    cn: e.nodes[3],
                    params: SwitchParams {
                        ron: *ron,
                        roff: *roff,
                        vt: *vt,
                    },
                });
            }
        }
    }
    Ok(System {
        devs,
        n_nodes: n.node_count(),
        n_vsrc: vsrc_names.len(),
        n_caps,
        node_names: n.node_names.clone(),
        vsrc_names,
        vsrc_terminals,
        ic_names,
    })
}

/// Capacitor companion history: terminal voltage difference and branch
/// current at the previous accepted step.
#[derive(Debug, Clone, Copy)]
struct CompState {
    v_prev: f64,
    i_prev: f64,
}

/// What the stamps describe at one solve.
#[derive(Clone, Copy)]
enum Phase<'a> {
    /// Pure DC: capacitors open. `pin_ics` additionally pins `ic=`
    /// capacitors through pseudo voltage sources (the transient init solve).
    Dc {
        t: f64,
        alpha: f64,
        pin_ics: bool,
    },
    /// One transient step ending at `t`, with capacitor history `comp`.
    Tran {
        t: f64,
        dt: f64,
        method: Method,
        comp: &'a [CompState],
    },
}

impl Phase<'_> {
    fn time(&self) -> f64 {
        match *self {
            Phase::Dc { t, .. } | Phase::Tran { t, .. } => t,
        }
    }

    fn alpha(&self) -> f64 {
        match *self {
            Phase::Dc { alpha, .. } => alpha,
            Phase::Tran { .. } => 1.0,
        }
    }
}

/// Companion conductance and history current for one capacitor in `phase`;
/// `None` when the capacitor is open (DC) or pinned.
fn cap_companion(c: f64, st: CompState, dt: f64, method: Method) -> (f64, f64) {
    match method {
        Method::BackwardEuler => {
            let g = c / dt;
            (g, g * st.v_prev)
        }
        Method::Trapezoidal => {
            let g = 2.0 * c / dt;
            (g, g * st.v_prev + st.i_prev)
        }
    }
}

/// The branch current a capacitor carries at the *solved* voltages of one
/// transient step.
fn cap_current(c: f64, v_now: f64, st: CompState, dt: f64, method: Method) -> f64 {
    match method {
        Method::BackwardEuler => c / dt * (v_now - st.v_prev),
        Method::Trapezoidal => 2.0 * c / dt * (v_now - st.v_prev) - st.i_prev,
    }
}

/// Largest node-voltage move Newton may take in one iteration (V). Half a
/// threshold-voltage-scale step tames square-law overshoot while costing
/// only a handful of extra iterations on multi-volt transitions.
const VSTEP_MAX: f64 = 0.5;

struct Solver {
    sys: System,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Solver {
    fn new(sys: System) -> Solver {
        let n = sys.init_size();
        Solver {
            sys,
            a: vec![0.0; n * n],
            b: vec![0.0; n],
        }
    }

    /// Stamp the linearized system at iterate `x` into `self.a`/`self.b`.
    fn assemble(&mut self, phase: Phase<'_>, x: &[f64], size: usize, gmin: f64) {
        let n = size;
        self.a[..n * n].iter_mut().for_each(|v| *v = 0.0);
        self.b[..n].iter_mut().for_each(|v| *v = 0.0);
        let nn = self.sys.n_nodes;
        let volt = |x: &[f64], node: usize| if node == 0 { 0.0 } else { x[node - 1] };

        // Borrow-friendly stamp macros over the flattened matrix.
        macro_rules! mat {
            ($r:expr, $c:expr, $v:expr) => {{
                let (r, c) = ($r, $c);
                if r > 0 && c > 0 {
                    self.a[(r - 1) * n + (c - 1)] += $v;
                }
            }};
        }
        macro_rules! mat_rb {
            ($r:expr, $c:expr, $v:expr) => {{
                // Row is a branch equation (not a node), column is a node.
                let (r, c) = ($r, $c);
                if c > 0 {
                    self.a[r * n + (c - 1)] += $v;
                }
            }};
        }
        macro_rules! mat_br {
            ($r:expr, $c:expr, $v:expr) => {{
                // Row is a node, column is a branch unknown.
                let (r, c) = ($r, $c);
                if r > 0 {
                    self.a[(r - 1) * n + c] += $v;
                }
            }};
        }
        macro_rules! rhs {
            ($r:expr, $v:expr) => {{
                let r = $r;
                if r > 0 {
                    self.b[r - 1] += $v;
                }
            }};
        }

        for i in 0..nn - 1 {
            self.a[i * n + i] += gmin;
        }

        let t = phase.time();
        let alpha = phase.alpha();
        let base = self.sys.base_size();
        for dev in &self.sys.devs {
            match *dev {
                Dev::Res { a, b, g } => {
                    mat!(a, a, g);
                    mat!(b, b, g);
                    mat!(a, b, -g);
                    mat!(b, a, -g);
                }
                Dev::Sw { a, b, cp, cn, params } => {
                    let vctrl = volt(x, cp) - volt(x, cn);
                    let g = devices::switch_eval(params, vctrl);
                    mat!(a, a, g);
                    mat!(b, b, g);
                    mat!(a, b, -g);
                    mat!(b, a, -g);
                }
                Dev::Cap { a, b, c, ic, slot, pin } => match phase {
                    Phase::Dc { pin_ics, .. } => {
                        if let (true, Some(v0), Some(pin)) = (pin_ics, ic, pin) {
                            // Pin the initial voltage through a pseudo source;
                            // its branch current is the capacitor current.
                            let row = base + pin;
                            mat_br!(a, row, 1.0);
                            mat_br!(b, row, -1.0);
                            mat_rb!(row, a, 1.0);
                            mat_rb!(row, b, -1.0);
                            self.b[row] = v0;
                        }
                        // Otherwise open: no stamp.
                    }
                    Phase::Tran { dt, method, comp, .. } => {
                        let (g, ieq) = cap_companion(c, comp[slot], dt, method);
                        mat!(a, a, g);
                        mat!(b, b, g);
                        mat!(a, b, -g);
                        mat!(b, a, -g);
                        rhs!(a, ieq);
                        rhs!(b, -ieq);
                    }
                },
                Dev::Vsrc { p, m, ref wf, branch } => {
                    let row = self.sys.n_nodes - 1 + branch;
                    // Branch current flows p -> m inside the source.
                    mat_br!(p, row, 1.0);
                    mat_br!(m, row, -1.0);
                    mat_rb!(row, p, 1.0);
                    mat_rb!(row, m, -1.0);
                    self.b[row] = alpha * devices::source_value(wf, t);
                }
                Dev::Isrc { p, m, ref wf } => {
                    let val = alpha * devices::source_value(wf, t);
                    rhs!(p, -val);
                    rhs!(m, val);
                }
                Dev::Mos { d, g, s, ref model, w, l } => {
                    let vgs = volt(x, g) - volt(x, s);
                    let vds = volt(x, d) - volt(x, s);
                    let e = devices::mosfet_eval(model, w, l, vgs, vds, 0.0);
                    let ieq = e.id - e.gm * vgs - e.gds * vds;
                    mat!(d, g, e.gm);
                    mat!(d, s, -e.gm - e.gds);
                    mat!(d, d, e.gds);
                    mat!(s, g, -e.gm);
                    mat!(s, s, e.gm + e.gds);
                    mat!(s, d, -e.gds);
                    rhs!(d, -ieq);
                    rhs!(s, ieq);
                }
            }
        }
    }

    /// Worst KCL violation at solution `x`, or `None` when every node is
    /// within `iabstol + reltol * (largest incident branch current)`.
    fn kcl_violation(
        &self,
        phase: Phase<'_>,
        x: &[f64],
        opts: &SimOptions,
    ) -> Option<(usize, f64, f64)> {
        let nn = self.sys.n_nodes;
        let volt = |node: usize| if node == 0 { 0.0 } else { x[node - 1] };
        let mut sum = vec![0.0; nn];
        let mut peak = vec![0.0f64; nn];
        let mut add = |node: usize, current: f64| {
            if node > 0 {
                sum[node] += current;
                peak[node] = peak[node].max(current.abs());
            }
        };
        for i in 1..nn {
            add(i, opts.gmin * volt(i));
        }
        let t = phase.time();
        let alpha = phase.alpha();
        let base = self.sys.base_size();
        for dev in &self.sys.devs {
            match *dev {
                Dev::Res { a, b, g } => {
                    let i = g * (volt(a) - volt(b));
                    add(a, i);
                    add(b, -i);
                }
                Dev::Sw { a, b, cp, cn, params } => {
                    let g = devices::switch_eval(params, volt(cp) - volt(cn));
                    let i = g * (volt(a) - volt(b));
                    add(a, i);
                    add(b, -i);
                }
                Dev::Cap { a, b, c, ic, slot, pin } => match phase {
                    Phase::Dc { pin_ics, .. } => {
                        if let (true, Some(_), Some(pin)) = (pin_ics, ic, pin) {
                            let i = x[base + pin];
                            add(a, i);
                            add(b, -i);
                        }
                    }
                    Phase::Tran { dt, method, comp, .. } => {
                        let i = cap_current(c, volt(a) - volt(b), comp[slot], dt, method);
                        add(a, i);
                        add(b, -i);
                    }
                },
                Dev::Vsrc { p, m, branch, .. } => {
                    let i = x[nn - 1 + branch];
                    add(p, i);
                    add(m, -i);
                }
                Dev::Isrc { p, m, ref wf } => {
                    let val = alpha * devices::source_value(wf, t);
                    add(p, val);
                    add(m, -val);
                }
                Dev::Mos { d, g, s, ref model, w, l } => {
                    let vgs = volt(g) - volt(s);
                    let vds = volt(d) - volt(s);
                    let id = devices::mosfet_eval(model, w, l, vgs, vds, 0.0).id;
                    add(d, id);
                    add(s, -id);
                }
            }
        }
        let mut worst: Option<(usize, f64, f64)> = None;
        for node in 1..nn {
            let bound = opts.iabstol + opts.reltol * peak[node];
            let resid = sum[node].abs();
            if resid > bound {
                let excess = resid - bound;
                if worst.map_or(true, |(_, r, b)| excess > r - b) {
                    worst = Some((node, resid, bound));
                }
            }
        }
        worst
    }

    /// Newton–Raphson from `x0`; returns the solution and iteration count.
    fn newton(
        &mut self,
        phase: Phase<'_>,
        x0: &[f64],
        size: usize,
        opts: &SimOptions,
    ) -> Result<(Vec<f64>, usize), EngineError> {
        let mut x = x0.to_vec();
        x.resize(size, 0.0);
        for iter in 1..=opts.max_nr_iters {
            self.assemble(phase, &x, size, opts.gmin);
            let mut rhs = self.b[..size].to_vec();
            lu_solve(&mut self.a[..size * size], &mut rhs, size).map_err(|col| {
                EngineError::SingularMatrix {
                    unknown: self.sys.unknown_name(col),
                }
            })?;
            let mut x_new = rhs;
            let n_v = self.sys.n_nodes - 1;
            // Damp node-voltage updates: the square-law devices are only
            // locally quadratic, and an unlimited Newton step across a large
            // disturbance (a supply switch closing, say) can catapult the
            // iterate far outside every device's operating region. Limiting
            // each voltage move per iteration keeps the path physical;
            // branch currents are linear in the voltages and stay free.
            for (new, old) in x_new[..n_v].iter_mut().zip(&x) {
                *new = old + (*new - old).clamp(-VSTEP_MAX, VSTEP_MAX);
            }
            let delta_ok = x_new.iter().zip(&x).enumerate().all(|(i, (new, old))| {
                let abstol = if i < n_v { opts.vabstol } else { opts.iabstol };
                (new - old).abs() <= abstol + opts.reltol * new.abs()
            });
            x = x_new;
            if delta_ok && self.kcl_violation(phase, &x, opts).is_none() {
                return Ok((x, iter));
            }
        }
        Err(EngineError::NonConvergence {
            time: None,
            iterations: opts.max_nr_iters,
            last_iterate: x,
        })
    }

    /// DC solve with the source-ramping fallback: plain Newton first, then a
    /// homotopy over source scale α ∈ {0.1, …, 1.0} with warm starts.
    fn solve_dc(
        &mut self,
        t: f64,
        pin_ics: bool,
        size: usize,
        opts: &SimOptions,
    ) -> Result<(Vec<f64>, usize), EngineError> {
        let zeros = vec![0.0; size];
        let plain = self.newton(Phase::Dc { t, alpha: 1.0, pin_ics }, &zeros, size, opts);
        match plain {
            Ok(ok) => Ok(ok),
            Err(EngineError::NonConvergence { .. }) => {
                let mut x = zeros;
                let mut total = 0;
                for step in 1..=10 {
                    let alpha = f64::from(step) / 10.0;
                    let (next, iters) =
                        self.newton(Phase::Dc { t, alpha, pin_ics }, &x, size, opts)?;
                    x = next;
                    total += iters;
                }
                Ok((x, total))
            }
            Err(other) => Err(other),
        }
    }

    /// Switch states (closed?) at solution `x`, in device order.
    fn switch_states(&self, x: &[f64]) -> Vec<bool> {
        let volt = |node: usize| if node == 0 { 0.0 } else { x[node - 1] };
        self.sys
            .devs
            .iter()
            .filter_map(|d| match *d {
                Dev::Sw { cp, cn, params, .. } => Some(volt(cp) - volt(cn) >= params.vt),
                _ => None,
            })
            .collect()
    }
}

/// Dense LU with partial pivoting, in place; `b` becomes the solution.
/// Returns the offending column (unknown) when no usable pivot exists.
fn lu_solve(a: &mut [f64], b: &mut [f64], n: usize) -> Result<(), usize> {
    const PIVOT_FLOOR: f64 = 1e-25;
    for k in 0..n {
        let mut pr = k;
        let mut pv = a[k * n + k].abs();
        for r in k + 1..n {
            let v = a[r * n + k].abs();
            if v > pv {
                pr = r;
                pv = v;
            }
        }
        if pv < PIVOT_FLOOR {
            return Err(k);
        }
        if pr != k {
            for c in 0..n {
                a.swap(pr * n + c, k * n + c);
            }
            b.swap(pr, k);
        }
        let piv = a[k * n + k];
        for r in k + 1..n {
            let f = a[r * n + k] / piv;
            if f != 0.0 {
                for c in k + 1..n {
                    a[r * n + c] -= f * a[k * n + c];
                }
                b[r] -= f * b[k];
            }
            a[r * n + k] = 0.0;
        }
    }
    for k in (0..n).rev() {
        let mut s = b[k];
        for c in k + 1..n {
            s -= a[k * n + c] * b[c];
        }
        b[k] = s / a[k * n + k];
    }
    Ok(())
}

/// Solve the DC operating point: nonlinear MNA by Newton–Raphson with the
/// source-ramping fallback. Capacitors are open; `ic=` values are ignored
/// here (they matter to [`transient`]'s initial solve).
pub fn dc_operating_point(n: &Netlist, opts: &SimOptions) -> Result<OperatingPoint, EngineError> {
    let sys = build_system(n)?;
    let mut solver = Solver::new(sys);
    let size = solver.sys.base_size();
    let (x, iters) = solver
        .solve_dc(0.0, false, size, opts)
        .map_err(|e| attach_time(e, None))?;
    Ok(make_op(&solver.sys, &x, iters))
}

fn make_op(sys: &System, x: &[f64], iters: usize) -> OperatingPoint {
    let mut node_voltages = vec![0.0];
    node_voltages.extend_from_slice(&x[..sys.n_nodes - 1]);
    let mut source_currents = BTreeMap::new();
    for (j, name) in sys.vsrc_names.iter().enumerate() {
        // Stored branch current flows n+ -> n- inside the source; delivered
        // current is its negation.
        source_currents.insert(name.clone(), -x[sys.n_nodes - 1 + j]);
    }
    OperatingPoint {
        node_names: sys.node_names.clone(),
        node_voltages,
        source_currents,
        nr_iterations: iters,
    }
}

fn attach_time(e: EngineError, t: Option<f64>) -> EngineError {
    match e {
        EngineError::NonConvergence { iterations, last_iterate, .. } => {
            EngineError::NonConvergence {
                time: t,
                iterations,
                last_iterate,
            }
        }
        other => other,
    }
}

/// Fixed-step transient analysis.
///
/// The initial state comes from a DC solve at `t = 0` in which capacitors
/// with explicit `ic=` are pinned to their initial voltage; integration then
/// proceeds with `round(tstop/dt)` uniform steps. The first step, and any
/// step across which a switch changes state, uses backward Euler; the
/// remainder use the requested method.
pub fn transient(n: &Netlist, opts: &SimOptions) -> Result<Waveforms, EngineError> {
    opts.validate()?;
    let sys = build_system(n)?;
    let mut solver = Solver::new(sys);
    let base = solver.sys.base_size();
    let init_size = solver.sys.init_size();

    let (x_init, _) = solver
        .solve_dc(0.0, true, init_size, opts)
        .map_err(|e| attach_time(e, Some(0.0)))?;

    let mut comp = vec![CompState { v_prev: 0.0, i_prev: 0.0 }; solver.sys.n_caps];
    let volt0 = |node: usize| if node == 0 { 0.0 } else { x_init[node - 1] };
    for dev in &solver.sys.devs {
        if let Dev::Cap { a, b, slot, pin, .. } = *dev {
            comp[slot] = CompState {
                v_prev: volt0(a) - volt0(b),
                // A pinned capacitor's pseudo branch carried its t=0 current;
                // unpinned capacitors start from the open (zero-current) DC.
                i_prev: pin.map_or(0.0, |p| x_init[base + p]),
            };
        }
    }
    let mut states = solver.switch_states(&x_init);
    let mut x: Vec<f64> = x_init[..base].to_vec();

    let n_steps = (opts.tstop / opts.dt).round() as usize;
    let n_nodes = solver.sys.n_nodes;
    let mut wave = Waveforms {
        times: Vec::with_capacity(n_steps + 1),
        node_names: solver.sys.node_names[1..].to_vec(),
        node_voltages: vec![Vec::with_capacity(n_steps + 1); n_nodes - 1],
        vsource_names: solver.sys.vsrc_names.clone(),
        vsource_currents: vec![Vec::with_capacity(n_steps + 1); solver.sys.n_vsrc],
        vsource_terminals: solver.sys.vsrc_terminals.clone(),
        step_methods: Vec::with_capacity(n_steps),
    };
    let record = |wave: &mut Waveforms, t: f64, x: &[f64]| {
        wave.times.push(t);
        for (i, col) in wave.node_voltages.iter_mut().enumerate() {
            col.push(x[i]);
        }
        for (j, col) in wave.vsource_currents.iter_mut().enumerate() {
            col.push(-x[n_nodes - 1 + j]);
        }
    };
    record(&mut wave, 0.0, &x);

    for k in 1..=n_steps {
        let t = k as f64 * opts.dt;
        let mut method = if k == 1 { Method::BackwardEuler } else { opts.method };
        let phase = Phase::Tran { t, dt: opts.dt, method, comp: &comp };
        let (mut x_new, _) = solver
            .newton(phase, &x, base, opts)
            .map_err(|e| attach_time(e, Some(t)))?;
        let mut new_states = solver.switch_states(&x_new);
        if method == Method::Trapezoidal && new_states != states {
            // A switch toggled inside this step: redo it with backward Euler
            // so the trapezoidal rule never differentiates across the jump.
            method = Method::BackwardEuler;
            let phase = Phase::Tran { t, dt: opts.dt, method, comp: &comp };
            let (x_be, _) = solver
                .newton(phase, &x, base, opts)
                .map_err(|e| attach_time(e, Some(t)))?;
            x_new = x_be;
            new_states = solver.switch_states(&x_new);
        }
        let voltn = |node: usize| if node == 0 { 0.0 } else { x_new[node - 1] };
        for dev in &solver.sys.devs {
            if let Dev::Cap { a, b, c, slot, .. } = *dev {
                let v_now = voltn(a) - voltn(b);
                let i_now = cap_current(c, v_now, comp[slot], opts.dt, method);
                comp[slot] = CompState { v_prev: v_now, i_prev: i_now };
            }
        }
        states = new_states;
        x = x_new;
        record(&mut wave, t, &x);
        wave.step_methods.push(method);
    }
    Ok(wave)
}

/// Integrate `v(t)·i(t)` for the named voltage sources over the stored
/// samples (trapezoidal quadrature). Power delivered by a source is
/// positive.
pub fn measure_branch_power(
    w: &Waveforms,
    source_names: &[&str],
) -> Result<PowerMeasurement, EngineError> {
    let t0 = w.times.first().copied().unwrap_or(0.0);
    let t1 = w.times.last().copied().unwrap_or(0.0);
    measure_branch_power_between(w, source_names, t0, t1)
}

/// [`measure_branch_power`] restricted to samples with
/// `t_start <= t <= t_end`, e.g. a single gating ON window. The window must
/// contain at least two samples; averages divide by the window's actual
/// sampled span.
pub fn measure_branch_power_between(
    w: &Waveforms,
    source_names: &[&str],
    t_start: f64,
    t_end: f64,
) -> Result<PowerMeasurement, EngineError> {
    let lo = w.times.partition_point(|&t| t < t_start);
    let hi = w.times.partition_point(|&t| t <= t_end);
    if hi.saturating_sub(lo) < 2 {
        return Err(EngineError::InvalidOptions(format!(
            "measurement window [{t_start:e}, {t_end:e}] s contains {} sample(s); need at least 2",
            hi.saturating_sub(lo)
        )));
    }
    let mut per_source_energy = BTreeMap::new();
    let mut per_source_avg_power = BTreeMap::new();
    let mut total = 0.0;
    let span = w.times[hi - 1] - w.times[lo];
    for name in source_names {
        let idx = w
            .vsource_names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name))
            .ok_or_else(|| EngineError::UnknownSource { name: name.to_string() })?;
        let (p_node, m_node) = w.vsource_terminals[idx];
        let volt_col = |node: usize, row: usize| {
            if node == 0 {
                0.0
            } else {
                w.node_voltages[node - 1][row]
            }
        };
        let current = &w.vsource_currents[idx];
        let power =
            |row: usize| (volt_col(p_node, row) - volt_col(m_node, row)) * current[row];
        let mut energy = 0.0;
        for row in lo + 1..hi {
            let dt = w.times[row] - w.times[row - 1];
            energy += 0.5 * (power(row) + power(row - 1)) * dt;
        }
        let avg = if span > 0.0 { energy / span } else { 0.0 };
        per_source_energy.insert(w.vsource_names[idx].clone(), energy);
        per_source_avg_power.insert(w.vsource_names[idx].clone(), avg);
        total += avg;
    }
    Ok(PowerMeasurement {
        per_source_energy,
        per_source_avg_power,
        total_avg_power: total,
    })
}

/// Re-derive every element current from the stored waveform rows and check
/// the per-node KCL residual bound at each step after the first (the t = 0
/// row was solved with `ic=` pins whose branch currents are not part of the
/// stored data). Replays the recorded per-step integration methods so the
/// companion-model currents match what the solver used.
pub fn verify_kcl(n: &Netlist, w: &Waveforms, opts: &SimOptions) -> Result<(), EngineError> {
    let sys = build_system(n)?;
    let solver = Solver {
        sys,
        a: Vec::new(),
        b: Vec::new(),
    };
    let base = solver.sys.base_size();
    let n_nodes = solver.sys.n_nodes;
    let row_x = |row: usize| -> Vec<f64> {
        let mut x = vec![0.0; base];
        for i in 0..n_nodes - 1 {
            x[i] = w.node_voltages[i][row];
        }
        for j in 0..solver.sys.n_vsrc {
            x[n_nodes - 1 + j] = -w.vsource_currents[j][row];
        }
        x
    };

    let mut comp = vec![CompState { v_prev: 0.0, i_prev: 0.0 }; solver.sys.n_caps];
    let x0 = row_x(0);
    let volt0 = |node: usize| if node == 0 { 0.0 } else { x0[node - 1] };
    for dev in &solver.sys.devs {
        if let Dev::Cap { a, b, slot, .. } = *dev {
            comp[slot].v_prev = volt0(a) - volt0(b);
        }
    }
    for row in 1..w.times.len() {
        let t = w.times[row];
        let dt = t - w.times[row - 1];
        let method = w.step_methods[row - 1];
        let x = row_x(row);
        let phase = Phase::Tran { t, dt, method, comp: &comp };
        if let Some((node, residual, bound)) = solver.kcl_violation(phase, &x, opts) {
            return Err(EngineError::KclViolation {
                time: t,
                node: solver.sys.node_names[node].clone(),
                residual,
                bound,
            });
        }
        let voltn = |node: usize| if node == 0 { 0.0 } else { x[node - 1] };
        for dev in &solver.sys.devs {
            if let Dev::Cap { a, b, c, slot, .. } = *dev {
                let v_now = voltn(a) - voltn(b);
                let i_now = cap_current(c, v_now, comp[slot], dt, method);
                comp[slot] = CompState { v_prev: v_now, i_prev: i_now };
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_netlist;

    #[test]
    fn symmetric_divider_halves_the_rail() {
        let n = parse_netlist("V1 in 0 DC 3.3\nR1 in mid 1k\nR2 mid 0 1k\n.end").unwrap();
        let op = dc_operating_point(&n, &SimOptions::new(1e-9, 1e-6)).unwrap();
        assert!((op.voltage("mid").unwrap() - 1.65).abs() < 1e-9);
        assert!((op.voltage("in").unwrap() - 3.3).abs() < 1e-12);
    }

    #[test]
    fn diode_connected_nmos_through_resistor() {
        // (3.3 - v)/1e4 = 50e-6 (v - 0.5)^2 reduces to v^2 + v - 6.35 = 0,
        // whose physical root is (-1 + sqrt(26.4))/2.
        let src = "V1 vdd 0 DC 3.3\n\
                   R1 vdd d 10k\n\
                   M1 d d 0 0 NM W=1u L=1u\n\
                   .model NM NMOS vt=0.5 kp=100u lambda=0 tox=7.5n eps=34.5p\n\
                   .end";
        let n = parse_netlist(src).unwrap();
        let op = dc_operating_point(&n, &SimOptions::new(1e-9, 1e-6)).unwrap();
        let expect = (-1.0 + 26.4f64.sqrt()) / 2.0;
        let got = op.voltage("d").unwrap();
        assert!(
            (got - expect).abs() < 1e-6,
            "expected {expect:.9}, got {got:.9}"
        );
        // And the node equation itself balances (up to the gmin shunt,
        // which draws about 2e-12 A at this voltage).
        let lhs = (3.3 - got) / 1e4;
        let rhs = 50e-6 * (got - 0.5) * (got - 0.5);
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn cap_coupled_node_is_pinned_near_zero_by_gmin() {
        let n = parse_netlist("V1 a 0 DC 1\nC1 a b 1n\nR1 a 0 1k\n.end").unwrap();
        let op = dc_operating_point(&n, &SimOptions::new(1e-9, 1e-6)).unwrap();
        assert!(op.voltage("b").unwrap().abs() < 1e-6);
    }

    #[test]
    fn delivered_current_sign_and_power() {
        let n = parse_netlist("V1 p 0 DC 1\nR1 p 0 1\n.tran 0.1 1\n.end").unwrap();
        let mut opts = SimOptions::new(0.1, 1.0);
        opts.method = Method::Trapezoidal;
        let w = transient(&n, &opts).unwrap();
        let i = w.source_current("V1").unwrap();
        assert!(i.iter().all(|&x| (x - 1.0).abs() < 1e-9));
        let p = measure_branch_power(&w, &["V1"]).unwrap();
        assert!((p.per_source_energy["V1"] - 1.0).abs() < 1e-9);
        assert!((p.per_source_avg_power["V1"] - 1.0).abs() < 1e-9);
        assert!((p.total_avg_power - 1.0).abs() < 1e-9);
        assert!(matches!(
            measure_branch_power(&w, &["V9"]),
            Err(EngineError::UnknownSource { .. })
        ));
        // A sub-window of a DC run measures the same average power; a window
        // around a single sample is rejected.
        let half = measure_branch_power_between(&w, &["V1"], 0.5, 1.0).unwrap();
        assert!((half.per_source_avg_power["V1"] - 1.0).abs() < 1e-9);
        assert!((half.per_source_energy["V1"] - 0.5).abs() < 1e-9);
        assert!(matches!(
            measure_branch_power_between(&w, &["V1"], 0.45, 0.55),
            Err(EngineError::InvalidOptions(_))
        ));
    }

    #[test]
    fn rc_step_reaches_one_minus_inv_e_at_tau() {
        // 1 kΩ · 1 nF, initial condition 0, constant 1 V drive.
        let src = "V1 in 0 DC 1\nR1 in out 1k\nC1 out 0 1n ic=0\n.end";
        let n = parse_netlist(src).unwrap();
        let rc = 1e-6;
        let opts = SimOptions::new(rc / 100.0, 2.0 * rc);
        let w = transient(&n, &opts).unwrap();
        let out = w.node("out").unwrap();
        let row = (w.times().iter().position(|&t| (t - rc).abs() < 1e-12)).unwrap();
        let expect = 1.0 - (-1.0f64).exp();
        assert!(
            (out[row] - expect).abs() / expect < 0.01,
            "v(RC) = {} vs {expect}",
            out[row]
        );
        verify_kcl(&n, &w, &opts).unwrap();
    }

    #[test]
    fn ic_discharge_is_monotone_with_decreasing_stored_energy() {
        let src = "R1 a 0 1k\nC1 a 0 1n ic=1\n.end";
        let n = parse_netlist(src).unwrap();
        let opts = SimOptions::new(1e-8, 5e-6);
        let w = transient(&n, &opts).unwrap();
        let v = w.node("a").unwrap();
        assert!((v[0] - 1.0).abs() < 1e-9, "initial condition respected");
        for k in 1..v.len() {
            assert!(v[k] <= v[k - 1] + 1e-12, "discharge must be monotone");
        }
        assert!(v[v.len() - 1] < 0.01);
    }

    #[test]
    fn transient_rows_and_times_match_the_step_grid() {
        let n = parse_netlist("V1 a 0 DC 1\nR1 a 0 1k\n.end").unwrap();
        let opts = SimOptions::new(1e-8, 1e-5);
        let w = transient(&n, &opts).unwrap();
        assert_eq!(w.rows(), 1001);
        assert_eq!(w.times()[0], 0.0);
        assert!((w.times()[1000] - 1e-5).abs() < 1e-18);
        assert_eq!(w.step_methods()[0], Method::BackwardEuler);
        assert_eq!(w.step_methods()[1], Method::Trapezoidal);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let src = "V1 in 0 SIN(0 1 100k)\nR1 in out 1k\nC1 out 0 1n ic=0\n.end";
        let n = parse_netlist(src).unwrap();
        let opts = SimOptions::new(1e-8, 2e-5);
        let w1 = transient(&n, &opts).unwrap();
        let w2 = transient(&n, &opts).unwrap();
        assert_eq!(w1.times, w2.times);
        assert_eq!(w1.node_voltages, w2.node_voltages);
        assert_eq!(w1.vsource_currents, w2.vsource_currents);
    }

    #[test]
    fn contradictory_switch_feedback_fails_to_converge() {
        // Closed -> control goes low -> opens -> control goes high: no DC
        // solution exists at full source scale and ramping cannot rescue it.
        let src = "V1 a 0 DC 1\n\
                   S1 a b 0 b ron=100 roff=1e9 vt=-0.5\n\
                   RL b 0 1k\n\
                   .op\n.end";
        let n = parse_netlist(src).unwrap();
        let err = dc_operating_point(&n, &SimOptions::new(1e-9, 1e-6)).unwrap_err();
        assert!(matches!(err, EngineError::NonConvergence { .. }), "{err}");
    }

    #[test]
    fn parallel_conflicting_sources_report_a_singular_pivot() {
        let n = parse_netlist("V1 a 0 DC 1\nV2 a 0 DC 2\n.end").unwrap();
        let err = dc_operating_point(&n, &SimOptions::new(1e-9, 1e-6)).unwrap_err();
        match err {
            EngineError::SingularMatrix { unknown } => {
                assert!(unknown.starts_with("I("), "unknown was {unknown}");
            }
            other => panic!("expected SingularMatrix, got {other}"),
        }
    }

    #[test]
    fn csv_has_header_and_nine_significant_digits() {
        let n = parse_netlist("V1 a 0 DC 1\nR1 a 0 1k\n.end").unwrap();
        let w = transient(&n, &SimOptions::new(1e-6, 1e-5)).unwrap();
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "time,a,I(V1)");
        let first = lines.next().unwrap();
        assert!(first.starts_with("0.00000000e0,"), "row was {first}");
    }
}
