//! Command-line front end: `sim`, `neuron`, `ampdemo`, and `power`
//! subcommands with reproducible file outputs.
//!
//! Every numeric flag accepts the same engineering suffixes as netlist
//! values (`10u`, `1meg`, …). A `--config <file>` of `key=value` lines can
//! pre-set any flag of the invoked subcommand; explicit flags win. Each
//! command that writes files also writes a run manifest next to them,
//! recording the resolved parameters, SHA-256 hashes of the input files,
//! the tool version, and a timestamp — re-running with the same parameters
//! reproduces the data files byte for byte (the manifest's timestamp being
//! the one exception).
//!
//! Exit codes are stable: 0 success (including `--help`/`--version`),
//! 1 usage or parse errors, 2 numeric failures (non-convergence, no
//! achievable design point), 3 I/O errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Arg, ArgAction, ArgMatches, Command};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::engine::{self, EngineError, Method, SimOptions};
use crate::netlist::{self, parse_netlist, parse_value, serialize_netlist, Severity};
use crate::neuron::{
    classify_pattern, preset, run_neuron, PatternClass, DEFAULT_ANALYSIS_WINDOW_SKIP,
};
use crate::power::{
    analytic_power, duty_sweep, write_duty_sweep_csv, PowerError, PowerModelInputs,
};
use crate::scenarios::{run_power_experiment, run_spike_gated_amp, AmpSpec, ScenarioError};

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code for usage and parse errors.
pub const EXIT_USAGE: i32 = 1;
/// Exit code for numeric failures (non-convergence, unachievable design).
pub const EXIT_NUMERIC: i32 = 2;
/// Exit code for I/O errors.
pub const EXIT_IO: i32 = 3;

/// Run the CLI on the given argument list (including the program name) and
/// return the process exit code. All diagnostics go to standard error.
pub fn run(args: impl IntoIterator<Item = OsString>) -> i32 {
    let argv: Vec<OsString> = args.into_iter().collect();
    let config = match load_config(&argv) {
        Ok(c) => c,
        Err(e) => return e.report(),
    };
    let cmd = apply_config(build_command(), &config);
    let matches = match cmd.try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    EXIT_OK
                }
                _ => {
                    eprint!("{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match matches.subcommand() {
        Some(("sim", m)) => cmd_sim(m),
        Some(("neuron", m)) => cmd_neuron(m),
        Some(("ampdemo", m)) => cmd_ampdemo(m),
        Some(("power", m)) => cmd_power(m),
        _ => unreachable!("subcommand_required"),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => e.report(),
    }
}

/// CLI-level error classes, each tied to an exit code.
enum CliError {
    Usage(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    fn report(&self) -> i32 {
        let (msg, code) = match self {
            CliError::Usage(m) => (m, EXIT_USAGE),
            CliError::Numeric(m) => (m, EXIT_NUMERIC),
            CliError::Io(m) => (m, EXIT_IO),
        };
        eprintln!("error: {msg}");
        code
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> CliError {
        match e {
            EngineError::NonConvergence { .. }
            | EngineError::SingularMatrix { .. }
            | EngineError::KclViolation { .. } => CliError::Numeric(e.to_string()),
            EngineError::InvalidOptions(_)
            | EngineError::UnknownSource { .. }
            | EngineError::BadNetlist(_) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> CliError {
        match e {
            ScenarioError::Engine(inner) => inner.into(),
            ScenarioError::GainUnachievable { .. } => CliError::Numeric(e.to_string()),
            ScenarioError::BadSpec(_)
            | ScenarioError::NeuronSilent { .. }
            | ScenarioError::Power(_)
            | ScenarioError::Neuron(_)
            | ScenarioError::Netlist(_) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<PowerError> for CliError {
    fn from(e: PowerError) -> CliError {
        CliError::Usage(e.to_string())
    }
}

fn io_err(context: &str, e: std::io::Error) -> CliError {
    CliError::Io(format!("{context}: {e}"))
}

fn build_command() -> Command {
    let config_arg = Arg::new("config")
        .long("config")
        .value_name("FILE")
        .global(true)
        .help("key=value file pre-setting this subcommand's flags (flags win)");
    Command::new("neuroswitch")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Mixed-signal toolkit: spiking neurons gating a switched amplifier")
        .subcommand_required(true)
        .arg(config_arg)
        .subcommand(
            Command::new("sim")
                .about("Run a transient simulation of a netlist and write waveform CSV")
                .arg(Arg::new("netlist").required(true).value_name("FILE"))
                .arg(Arg::new("tstop").long("tstop").value_name("SECONDS")
                    .help("stop time; defaults to the netlist's .tran directive"))
                .arg(Arg::new("dt").long("dt").value_name("SECONDS")
                    .help("fixed step size; defaults to the netlist's .tran directive"))
                .arg(Arg::new("method").long("method").value_name("be|trap")
                    .default_value("trap").help("integration method"))
                .arg(Arg::new("out").long("out").value_name("CSV")
                    .help("output file; standard output when omitted")),
        )
        .subcommand(
            Command::new("neuron")
                .about("Integrate an Izhikevich neuron, classify its firing pattern")
                .arg(Arg::new("preset").long("preset").required(true)
                    .value_name("rs|ib|ch|fs|lts|tc|rz"))
                .arg(Arg::new("current").long("current").value_name("I")
                    .default_value("10").help("constant drive current (model units)"))
                .arg(Arg::new("duration").long("duration").value_name("MODEL-MS")
                    .default_value("1000"))
                .arg(Arg::new("dt").long("dt").value_name("MODEL-MS")
                    .default_value("0.1").help("Euler step, at most 0.5"))
                .arg(Arg::new("out").long("out").value_name("CSV")
                    .help("membrane trace output"))
                .arg(Arg::new("spikes-out").long("spikes-out").value_name("JSON")
                    .help("spike train output")),
        )
        .subcommand(
            Command::new("ampdemo")
                .about("Neuron-gated amplifier run: simulate, measure power, write artifacts")
                .arg(Arg::new("preset").long("preset").default_value("fs")
                    .value_name("rs|ib|ch|fs|lts|tc|rz"))
                .arg(Arg::new("vin-mv").long("vin-mv").value_name("MV")
                    .default_value("2").help("differential input amplitude"))
                .arg(Arg::new("pulse-width").long("pulse-width").value_name("SECONDS")
                    .help("gate pulse width; defaults to 1% of the median spike period"))
                .arg(Arg::new("duration").long("duration").value_name("SECONDS")
                    .default_value("100u"))
                .arg(Arg::new("outdir").long("outdir").required(true).value_name("DIR")),
        )
        .subcommand(
            Command::new("power")
                .about("Evaluate the analytic power model; optionally simulate the sweep")
                .arg(Arg::new("eps").long("eps").value_name("F/M").default_value("34.5p"))
                .arg(Arg::new("area").long("area").value_name("M2").default_value("1p"))
                .arg(Arg::new("tox").long("tox").value_name("M").default_value("7.5n"))
                .arg(Arg::new("f").long("f").value_name("HZ").default_value("10meg"))
                .arg(Arg::new("vdd").long("vdd").value_name("V").default_value("1.65"))
                .arg(Arg::new("vss").long("vss").value_name("V").default_value("1.65")
                    .help("negative-rail magnitude; 0 for single-supply"))
                .arg(Arg::new("ibias").long("ibias").value_name("A").default_value("10u"))
                .arg(Arg::new("ncore").long("ncore").value_name("N").default_value("6"))
                .arg(Arg::new("nswitch").long("nswitch").value_name("N").default_value("4"))
                .arg(Arg::new("duty").long("duty").value_name("D[,D...]")
                    .default_value("0.01").help("one duty prints a full report; several print a sweep"))
                .arg(Arg::new("json").long("json").value_name("PATH")
                    .help("also write the report (or sweep rows) as JSON"))
                .arg(Arg::new("sweep-csv").long("sweep-csv").value_name("PATH")
                    .help("write a duty,p_avg_w,savings table"))
                .arg(Arg::new("simulate").long("simulate").action(ArgAction::SetTrue)
                    .help("run a transient per duty and report measured power too"))
                .arg(Arg::new("jobs").long("jobs").value_name("N")
                    .help("worker threads for --simulate (default: all cores)")),
        )
}

/// Extract `--config <file>` from raw argv (before clap runs, so the file's
/// values can be installed as defaults) and parse it as `key=value` lines.
fn load_config(argv: &[OsString]) -> Result<BTreeMap<String, String>, CliError> {
    let mut path: Option<PathBuf> = None;
    let mut it = argv.iter();
    while let Some(tok) = it.next() {
        let Some(s) = tok.to_str() else { continue };
        if s == "--config" {
            path = it.next().map(PathBuf::from);
        } else if let Some(rest) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(rest));
        }
    }
    let Some(path) = path else {
        return Ok(BTreeMap::new());
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| io_err(&format!("config file '{}'", path.display()), e))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "config file '{}' line {}: expected key=value, got '{line}'",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Install config values as argument defaults wherever a subcommand has a
/// flag of that name; explicit command-line flags override defaults, giving
/// the documented precedence. Keys matching no flag are reported and
/// skipped so a shared config can carry entries for several subcommands.
fn apply_config(mut cmd: Command, config: &BTreeMap<String, String>) -> Command {
    if config.is_empty() {
        return cmd;
    }
    let subs: Vec<String> = cmd
        .get_subcommands()
        .map(|s| s.get_name().to_string())
        .collect();
    for (key, value) in config {
        let mut matched = false;
        for sub in &subs {
            let has = cmd
                .find_subcommand(sub)
                .is_some_and(|s| {
                    s.get_arguments().any(|a| {
                        a.get_id().as_str() == key && a.get_action().takes_values()
                    })
                });
            if has {
                matched = true;
                let value = clap::builder::Str::from(value.clone());
                cmd = cmd.mut_subcommand(sub.clone(), |s| {
                    s.mut_arg(key.as_str(), |a| a.default_value(value).required(false))
                });
            }
        }
        if !matched {
            eprintln!("warning: config key '{key}' matches no flag; ignored");
        }
    }
    cmd
}

/// A flag's string value (always present for defaulted flags).
fn text(m: &ArgMatches, id: &str) -> Option<String> {
    m.get_one::<String>(id).cloned()
}

/// Parse a numeric flag, engineering suffixes included.
fn num(m: &ArgMatches, id: &str) -> Result<f64, CliError> {
    let raw = text(m, id).expect("defaulted or required flag");
    parse_value(&raw).map_err(|e| CliError::Usage(format!("--{id}: {e}")))
}

fn num_opt(m: &ArgMatches, id: &str) -> Result<Option<f64>, CliError> {
    match text(m, id) {
        Some(raw) => parse_value(&raw)
            .map(Some)
            .map_err(|e| CliError::Usage(format!("--{id}: {e}"))),
        None => Ok(None),
    }
}

fn positive(m: &ArgMatches, id: &str) -> Result<f64, CliError> {
    let v = num(m, id)?;
    if !(v > 0.0) {
        return Err(CliError::Usage(format!("--{id}: must be positive, got {v}")));
    }
    Ok(v)
}

fn non_negative(m: &ArgMatches, id: &str) -> Result<f64, CliError> {
    let v = num(m, id)?;
    if !(v >= 0.0) {
        return Err(CliError::Usage(format!(
            "--{id}: must be non-negative, got {v}"
        )));
    }
    Ok(v)
}

fn count(m: &ArgMatches, id: &str) -> Result<u32, CliError> {
    let raw = text(m, id).expect("defaulted flag");
    raw.parse::<u32>()
        .map_err(|_| CliError::Usage(format!("--{id}: expected a whole number, got '{raw}'")))
}

/// Reproducibility record written next to every file-producing run.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    parameters: BTreeMap<String, String>,
    input_hashes: BTreeMap<String, String>,
    tool_version: String,
    timestamp: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

fn write_manifest(
    manifest_path: &Path,
    command: &str,
    parameters: BTreeMap<String, String>,
    input_files: &[&Path],
) -> Result<(), CliError> {
    let mut input_hashes = BTreeMap::new();
    for path in input_files {
        let bytes = fs::read(path)
            .map_err(|e| io_err(&format!("hashing input '{}'", path.display()), e))?;
        input_hashes.insert(path.display().to_string(), sha256_hex(&bytes));
    }
    let manifest = RunManifest {
        command: command.to_string(),
        parameters,
        input_hashes,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Utc::now().to_rfc3339(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(manifest_path, json)
        .map_err(|e| io_err(&format!("writing '{}'", manifest_path.display()), e))
}

/// Manifest path for a single output file: `foo.csv` → `foo.manifest.json`.
fn manifest_sibling(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string());
    out.with_file_name(format!("{stem}.manifest.json"))
}

fn create_file(path: &Path) -> Result<fs::File, CliError> {
    fs::File::create(path).map_err(|e| io_err(&format!("writing '{}'", path.display()), e))
}

fn cmd_sim(m: &ArgMatches) -> Result<(), CliError> {
    let netlist_path = PathBuf::from(text(m, "netlist").expect("required"));
    let source = fs::read_to_string(&netlist_path)
        .map_err(|e| io_err(&format!("reading '{}'", netlist_path.display()), e))?;
    let n = parse_netlist(&source).map_err(|e| CliError::Usage(e.to_string()))?;
    let diags = netlist::validate(&n);
    for d in &diags {
        eprintln!("{d}");
    }
    if diags.iter().any(|d| d.severity == Severity::Error) {
        return Err(CliError::Usage(format!(
            "netlist '{}' failed validation",
            netlist_path.display()
        )));
    }
    let directive = n.tran_directive();
    let dt = match num_opt(m, "dt")? {
        Some(v) => v,
        None => directive.map(|(step, _)| step).ok_or_else(|| {
            CliError::Usage("no --dt given and the netlist has no .tran directive".into())
        })?,
    };
    let tstop = match num_opt(m, "tstop")? {
        Some(v) => v,
        None => directive.map(|(_, stop)| stop).ok_or_else(|| {
            CliError::Usage("no --tstop given and the netlist has no .tran directive".into())
        })?,
    };
    let method_raw = text(m, "method").expect("defaulted");
    let method = match method_raw.as_str() {
        "be" => Method::BackwardEuler,
        "trap" => Method::Trapezoidal,
        other => {
            return Err(CliError::Usage(format!(
                "--method: expected 'be' or 'trap', got '{other}'"
            )));
        }
    };
    let mut opts = SimOptions::new(dt, tstop);
    opts.method = method;
    let w = engine::transient(&n, &opts)?;
    match text(m, "out") {
        Some(out) => {
            let out = PathBuf::from(out);
            let mut file = std::io::BufWriter::new(create_file(&out)?);
            w.write_csv(&mut file)
                .and_then(|()| file.flush())
                .map_err(|e| io_err(&format!("writing '{}'", out.display()), e))?;
            let params = BTreeMap::from(
                [
                    ("netlist", netlist_path.display().to_string()),
                    ("tstop", format!("{tstop:e}")),
                    ("dt", format!("{dt:e}")),
                    ("method", method_raw),
                    ("out", out.display().to_string()),
                ]
                .map(|(k, v)| (k.to_string(), v)),
            );
            write_manifest(&manifest_sibling(&out), "sim", params, &[&netlist_path])?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            w.write_csv(&mut lock)
                .map_err(|e| io_err("writing standard output", e))?;
        }
    }
    Ok(())
}

fn cmd_neuron(m: &ArgMatches) -> Result<(), CliError> {
    let preset_key = text(m, "preset").expect("required");
    let class = PatternClass::from_str(&preset_key)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let params = preset(class).map_err(|e| CliError::Usage(e.to_string()))?;
    let current = num(m, "current")?;
    let duration = positive(m, "duration")?;
    let dt = positive(m, "dt")?;
    if dt > 0.5 {
        return Err(CliError::Usage(format!(
            "--dt: Euler steps above 0.5 model-ms are unstable, got {dt}"
        )));
    }
    let (trace, train) = run_neuron(&params, &netlist::Waveform::Dc(current), duration, dt);
    let label = classify_pattern(&train, DEFAULT_ANALYSIS_WINDOW_SKIP);
    println!("{label}");

    let out = text(m, "out").map(PathBuf::from);
    let spikes_out = text(m, "spikes-out").map(PathBuf::from);
    if let Some(path) = &out {
        let mut file = std::io::BufWriter::new(create_file(path)?);
        trace
            .write_csv(&mut file)
            .and_then(|()| file.flush())
            .map_err(|e| io_err(&format!("writing '{}'", path.display()), e))?;
    }
    if let Some(path) = &spikes_out {
        fs::write(path, train.to_json())
            .map_err(|e| io_err(&format!("writing '{}'", path.display()), e))?;
    }
    if let Some(anchor) = out.as_ref().or(spikes_out.as_ref()) {
        let parameters = BTreeMap::from(
            [
                ("preset", preset_key),
                ("current", format!("{current:e}")),
                ("duration", format!("{duration:e}")),
                ("dt", format!("{dt:e}")),
                ("label", label.to_string()),
                (
                    "out",
                    out.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
                ),
                (
                    "spikes-out",
                    spikes_out
                        .as_ref()
                        .map(|p| p.display().to_string())
                        .unwrap_or_default(),
                ),
            ]
            .map(|(k, v)| (k.to_string(), v)),
        );
        write_manifest(&manifest_sibling(anchor), "neuron", parameters, &[])?;
    }
    Ok(())
}

/// Everything the gated-amplifier demo persists about power, in one JSON.
#[derive(Serialize)]
struct AmpPowerArtifact {
    analytic: crate::power::PowerReport,
    reconciliation: crate::power::Reconciliation,
    measured_on_w: f64,
    measured_avg_w: f64,
    measured_always_on_w: f64,
    measured_savings: f64,
    commanded_duty: f64,
    pulse_width_s: f64,
    tail_current_a: f64,
    measured_gain: f64,
    on_fraction: f64,
    vout_peak_v: f64,
}

fn cmd_ampdemo(m: &ArgMatches) -> Result<(), CliError> {
    let preset_key = text(m, "preset").expect("defaulted");
    let class = PatternClass::from_str(&preset_key)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let vin_mv = num(m, "vin-mv")?;
    let pulse_width = num_opt(m, "pulse-width")?;
    let duration = positive(m, "duration")?;
    let outdir = PathBuf::from(text(m, "outdir").expect("required"));

    let run = run_spike_gated_amp(&AmpSpec::default(), class, pulse_width, vin_mv, duration)?;
    let vout_peak = run
        .waveforms
        .node("vout")
        .expect("amplifier defines vout")
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));

    fs::create_dir_all(&outdir)
        .map_err(|e| io_err(&format!("creating '{}'", outdir.display()), e))?;
    let write_csv = |name: &str, w: &engine::Waveforms| -> Result<PathBuf, CliError> {
        let path = outdir.join(name);
        let mut file = std::io::BufWriter::new(create_file(&path)?);
        w.write_csv(&mut file)
            .and_then(|()| file.flush())
            .map_err(|e| io_err(&format!("writing '{}'", path.display()), e))?;
        Ok(path)
    };
    write_csv("gated.csv", &run.waveforms)?;
    write_csv("always_on.csv", &run.always_on)?;
    let spikes_path = outdir.join("spikes.json");
    fs::write(&spikes_path, run.spike_train.to_json())
        .map_err(|e| io_err(&format!("writing '{}'", spikes_path.display()), e))?;
    let netlist_path = outdir.join("amplifier.cir");
    fs::write(&netlist_path, serialize_netlist(&run.netlist))
        .map_err(|e| io_err(&format!("writing '{}'", netlist_path.display()), e))?;
    let power_path = outdir.join("power.json");
    let duty_inferred = run.reconciliation.duty_inferred;
    let artifact = AmpPowerArtifact {
        analytic: run.analytic,
        reconciliation: run.reconciliation,
        measured_on_w: run.measured_on_w,
        measured_avg_w: run.measured_avg_w,
        measured_always_on_w: run.measured_always_on_w,
        measured_savings: run.measured_savings,
        commanded_duty: run.commanded_duty,
        pulse_width_s: run.pulse_width,
        tail_current_a: run.tail_current_a,
        measured_gain: run.measured_gain,
        on_fraction: run.on_fraction,
        vout_peak_v: vout_peak,
    };
    fs::write(
        &power_path,
        serde_json::to_string_pretty(&artifact).expect("artifact serializes"),
    )
    .map_err(|e| io_err(&format!("writing '{}'", power_path.display()), e))?;

    let parameters = BTreeMap::from(
        [
            ("preset", preset_key),
            ("vin-mv", format!("{vin_mv:e}")),
            ("pulse-width", format!("{:e}", run.pulse_width)),
            ("duration", format!("{duration:e}")),
            ("outdir", outdir.display().to_string()),
        ]
        .map(|(k, v)| (k.to_string(), v)),
    );
    write_manifest(&outdir.join("manifest.json"), "ampdemo", parameters, &[])?;

    println!(
        "on {:.6e} W, avg {:.6e} W, savings {:.4}, inferred duty {:.5}, peak |vout| {:.3} V",
        run.measured_on_w,
        run.measured_avg_w,
        run.measured_savings,
        duty_inferred,
        vout_peak
    );
    Ok(())
}

fn cmd_power(m: &ArgMatches) -> Result<(), CliError> {
    let eps = positive(m, "eps")?;
    let area = positive(m, "area")?;
    let tox = positive(m, "tox")?;
    let f = positive(m, "f")?;
    let vdd = positive(m, "vdd")?;
    let vss = non_negative(m, "vss")?;
    let i_bias = positive(m, "ibias")?;
    let n_core = count(m, "ncore")?;
    if n_core == 0 {
        return Err(CliError::Usage("--ncore: must be at least 1".into()));
    }
    let n_switch = count(m, "nswitch")?;
    let duty_raw = text(m, "duty").expect("defaulted");
    let mut duties = Vec::new();
    for piece in duty_raw.split(',') {
        let d = parse_value(piece.trim())
            .map_err(|e| CliError::Usage(format!("--duty: {e}")))?;
        if !(0.0..=1.0).contains(&d) {
            return Err(CliError::Usage(format!(
                "--duty: must be within [0, 1], got {d}"
            )));
        }
        duties.push(d);
    }
    let inputs = PowerModelInputs {
        eps,
        area,
        tox,
        f,
        vdd,
        vss,
        i_bias,
        n_core,
        n_switch,
        duty: duties[0],
    };

    let simulate = m.get_flag("simulate");
    let json_out = text(m, "json").map(PathBuf::from);
    let sweep_csv = text(m, "sweep-csv").map(PathBuf::from);

    let json_payload = if simulate {
        let jobs = match text(m, "jobs") {
            Some(raw) => Some(raw.parse::<usize>().map_err(|_| {
                CliError::Usage(format!("--jobs: expected a whole number, got '{raw}'"))
            })?),
            None => None,
        };
        let experiment = match jobs {
            Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?
                .install(|| run_power_experiment(&inputs, &duties)),
            _ => run_power_experiment(&inputs, &duties),
        }?;
        println!("always-on measured power: {:.6e} W", experiment.always_on_avg_w);
        println!("{:>8} {:>16} {:>16} {:>12} {:>12}", "duty", "p_avg_analytic", "p_avg_measured", "sav_analytic", "sav_measured");
        for row in &experiment.rows {
            println!(
                "{:>8} {:>16.6e} {:>16.6e} {:>12.6} {:>12.6}",
                row.duty,
                row.analytic.p_average_switched,
                row.measured_avg_w,
                row.analytic.savings_fraction,
                row.measured_savings
            );
        }
        #[derive(Serialize)]
        struct SimRow {
            duty: f64,
            p_average_switched: f64,
            savings_fraction: f64,
            measured_avg_w: f64,
            measured_savings: f64,
        }
        #[derive(Serialize)]
        struct SimPayload {
            always_on_avg_w: f64,
            switching_frequency: f64,
            rows: Vec<SimRow>,
        }
        serde_json::to_string_pretty(&SimPayload {
            always_on_avg_w: experiment.always_on_avg_w,
            switching_frequency: experiment.switching_frequency,
            rows: experiment
                .rows
                .iter()
                .map(|r| SimRow {
                    duty: r.duty,
                    p_average_switched: r.analytic.p_average_switched,
                    savings_fraction: r.analytic.savings_fraction,
                    measured_avg_w: r.measured_avg_w,
                    measured_savings: r.measured_savings,
                })
                .collect(),
        })
        .expect("payload serializes")
    } else if duties.len() == 1 {
        let report = analytic_power(&inputs)?;
        let rows = [
            ("c_device (F)", report.c_device),
            ("c_eff (F)", report.c_eff),
            ("p_dynamic_device (W)", report.p_dynamic_device),
            ("p_static_device (W)", report.p_static_device),
            ("p_static_circuit (W)", report.p_static_circuit),
            ("p_total_unswitched (W)", report.p_total_unswitched),
            ("p_total_switched_on (W)", report.p_total_switched_on),
            ("p_total_switched_off (W)", report.p_total_switched_off),
            ("p_average_switched (W)", report.p_average_switched),
            ("savings_fraction", report.savings_fraction),
        ];
        for (label, value) in rows {
            println!("{label:<24} {value:.6e}");
        }
        report.to_json()
    } else {
        let rows = duty_sweep(&inputs, &duties)?;
        println!("{:>8} {:>16} {:>12}", "duty", "p_avg_w", "savings");
        for row in &rows {
            println!(
                "{:>8} {:>16.6e} {:>12.6}",
                row.duty, row.p_average_switched, row.savings_fraction
            );
        }
        serde_json::to_string_pretty(&rows).expect("rows serialize")
    };

    if let Some(path) = &sweep_csv {
        let rows = duty_sweep(&inputs, &duties)?;
        let mut file = std::io::BufWriter::new(create_file(path)?);
        write_duty_sweep_csv(&rows, &mut file)
            .and_then(|()| file.flush())
            .map_err(|e| io_err(&format!("writing '{}'", path.display()), e))?;
    }
    if let Some(path) = &json_out {
        fs::write(path, &json_payload)
            .map_err(|e| io_err(&format!("writing '{}'", path.display()), e))?;
        let parameters = BTreeMap::from(
            [
                ("eps", format!("{eps:e}")),
                ("area", format!("{area:e}")),
                ("tox", format!("{tox:e}")),
                ("f", format!("{f:e}")),
                ("vdd", format!("{vdd:e}")),
                ("vss", format!("{vss:e}")),
                ("ibias", format!("{i_bias:e}")),
                ("ncore", n_core.to_string()),
                ("nswitch", n_switch.to_string()),
                ("duty", duty_raw.clone()),
                ("simulate", simulate.to_string()),
            ]
            .map(|(k, v)| (k.to_string(), v)),
        );
        write_manifest(&manifest_sibling(path), "power", parameters, &[])?;
    }
    Ok(())
}
