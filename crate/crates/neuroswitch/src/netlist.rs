//! SPICE-subset netlist representation: parsing, validation, and canonical
//! serialization.
//!
//! The grammar is line-oriented, one element per line, with `+` continuation,
//! `*` full-line comments, and `;` inline comments. If the first line of a
//! deck is a `*` comment it doubles as the netlist title.
//!
//! ```text
//! R<name> n1 n2 <value>
//! C<name> n1 n2 <value> [ic=<v0>]
//! V<name> n+ n- DC <v> | PULSE(v1 v2 td tr tf pw per) | PWL(t1 v1 t2 v2 ...) | SIN(off ampl freq)
//! I<name> n+ n- <same source syntax>
//! M<name> nd ng ns nb <modelname> W=<w> L=<l>
//! S<name> n1 n2 nc+ nc- ron=<r> roff=<r> vt=<v>
//! .model <name> NMOS|PMOS vt=<v> kp=<a/v2> lambda=<1/v> tox=<m> eps=<f/m>
//! .op | .tran <step> <stop> | .end
//! ```
//!
//! Values accept the engineering suffixes `f p n u m k meg g` (case-insensitive,
//! `m` = milli, `meg` = mega). Element, node, and model names are
//! case-insensitive; the spelling of first appearance is preserved for output.
//! Ground is the node named `0` and always occupies index 0 of the node table.
//!
//! Sign conventions: for `V` and `I` elements a positive value drives current
//! from `n+` to `n-` through the source, so `I1 0 out DC 1u` pushes 1 µA into
//! node `out`.

use std::collections::HashMap;
use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Ground node name; always present at index 0 of the node table.
pub const GROUND: &str = "0";

/// A parsed circuit: elements in declaration order plus model cards, analysis
/// directives, and the node table.
#[derive(Debug, Clone, PartialEq)]
pub struct Netlist {
    /// Taken from a leading `*` comment line; empty if the deck has none.
    pub title: String,
    pub elements: Vec<Element>,
    /// Model cards keyed by lower-cased name.
    pub models: BTreeMap<String, DeviceModel>,
    pub analyses: Vec<AnalysisDirective>,
    /// Display names by node index; `node_names[0]` is always ground.
    pub node_names: Vec<String>,
    /// Lower-cased name → index into `node_names`.
    pub node_index: HashMap<String, usize>,
}

/// One circuit element; the leading letter of `name` encodes the kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    /// Node-table indices: 2 entries for R/C/V/I, 4 for M (drain, gate,
    /// source, bulk) and S (terminal+, terminal−, control+, control−).
    pub nodes: Vec<usize>,
    pub kind: ElementKind,
}

/// Kind-specific element parameters, in base SI units.
#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    Resistor { value: f64 },
    Capacitor { value: f64, ic: Option<f64> },
    VSource { waveform: Waveform },
    ISource { waveform: Waveform },
    Mosfet { model: String, w: f64, l: f64 },
    Switch { ron: f64, roff: f64, vt: f64 },
}

impl ElementKind {
    /// The element-letter for this kind, as used in names and diagnostics.
    pub fn letter(&self) -> char {
        match self {
            ElementKind::Resistor { .. } => 'R',
            ElementKind::Capacitor { .. } => 'C',
            ElementKind::VSource { .. } => 'V',
            ElementKind::ISource { .. } => 'I',
            ElementKind::Mosfet { .. } => 'M',
            ElementKind::Switch { .. } => 'S',
        }
    }
}

/// MOSFET polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Nmos,
    Pmos,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Nmos => "NMOS",
            Polarity::Pmos => "PMOS",
        })
    }
}

/// A `.model` card: Level-1 square-law parameters plus the oxide geometry
/// used by the gate-capacitance formula.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceModel {
    /// Display name (case of first appearance).
    pub name: String,
    pub polarity: Polarity,
    /// Threshold voltage magnitude (V).
    pub vt: f64,
    /// Process transconductance kp (A/V²).
    pub kp: f64,
    /// Channel-length modulation λ (1/V).
    pub lambda: f64,
    /// Oxide thickness (m).
    pub tox: f64,
    /// Oxide permittivity (F/m).
    pub eps: f64,
}

/// Time-dependent source specification.
#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    Dc(f64),
    Pulse {
        v1: f64,
        v2: f64,
        delay: f64,
        rise: f64,
        fall: f64,
        width: f64,
        period: f64,
    },
    Pwl(Vec<(f64, f64)>),
    Sine {
        offset: f64,
        amplitude: f64,
        frequency: f64,
    },
}

impl Waveform {
    /// The same waveform with every level multiplied by `k` (time axis
    /// untouched). Used to split a differential drive into ± halves.
    pub fn scaled(&self, k: f64) -> Waveform {
        match *self {
            Waveform::Dc(v) => Waveform::Dc(k * v),
            Waveform::Pulse { v1, v2, delay, rise, fall, width, period } => Waveform::Pulse {
                v1: k * v1,
                v2: k * v2,
                delay,
                rise,
                fall,
                width,
                period,
            },
            Waveform::Pwl(ref pts) => {
                Waveform::Pwl(pts.iter().map(|&(t, v)| (t, k * v)).collect())
            }
            Waveform::Sine { offset, amplitude, frequency } => Waveform::Sine {
                offset: k * offset,
                amplitude: k * amplitude,
                frequency,
            },
        }
    }
}

/// Analysis request parsed from a `.op` or `.tran` directive.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisDirective {
    Op,
    Tran { step: f64, stop: f64 },
}

/// Severity of a [`validate`] finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// One validation finding.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

#[derive(Debug, Error)]
pub enum NetlistError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown element letter '{letter}'")]
    UnknownElement { line: usize, letter: char },
    #[error("line {line}: duplicate element name '{name}'")]
    DuplicateName { line: usize, name: String },
    #[error("line {line}: mosfet '{device}' references undefined model '{model}'")]
    MissingModel {
        line: usize,
        device: String,
        model: String,
    },
    #[error("netlist failed validation:\n{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("  {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parse a token with an optional engineering suffix into a base-unit value.
///
/// The longest numeric prefix is taken, and the remainder must be one of
/// `f p n u m k meg g` (case-insensitive) or empty.
pub fn parse_value(token: &str) -> Result<f64, String> {
    let mut split = None;
    for i in (1..=token.len()).rev() {
        if !token.is_char_boundary(i) {
            continue;
        }
        if let Ok(x) = token[..i].parse::<f64>() {
            split = Some((i, x));
            break;
        }
    }
    let (i, x) = split.ok_or_else(|| format!("expected a number, found '{token}'"))?;
    if !x.is_finite() {
        return Err(format!("non-finite value '{token}'"));
    }
    let mult = match token[i..].to_ascii_lowercase().as_str() {
        "" => 1.0,
        "f" => 1e-15,
        "p" => 1e-12,
        "n" => 1e-9,
        "u" => 1e-6,
        "m" => 1e-3,
        "k" => 1e3,
        "meg" => 1e6,
        "g" => 1e9,
        s => return Err(format!("unknown suffix '{s}' in '{token}'")),
    };
    Ok(x * mult)
}

impl Netlist {
    /// An empty netlist containing only the ground node.
    pub fn empty() -> Netlist {
        Netlist {
            title: String::new(),
            elements: Vec::new(),
            models: BTreeMap::new(),
            analyses: Vec::new(),
            node_names: vec![GROUND.to_string()],
            node_index: HashMap::from([(GROUND.to_string(), 0)]),
        }
    }

    /// Number of nodes including ground.
    pub fn node_count(&self) -> usize {
        self.node_names.len()
    }

    /// Index of a node by (case-insensitive) name.
    pub fn index_of(&self, node: &str) -> Option<usize> {
        self.node_index.get(&node.to_ascii_lowercase()).copied()
    }

    /// Register a node name, returning its index; first appearance fixes the
    /// display spelling.
    pub fn intern_node(&mut self, name: &str) -> usize {
        let key = name.to_ascii_lowercase();
        if let Some(&i) = self.node_index.get(&key) {
            return i;
        }
        let i = self.node_names.len();
        self.node_names.push(name.to_string());
        self.node_index.insert(key, i);
        i
    }

    /// Model card for a (case-insensitive) name.
    pub fn model(&self, name: &str) -> Option<&DeviceModel> {
        self.models.get(&name.to_ascii_lowercase())
    }

    /// Names of voltage sources in declaration order (branch currents are
    /// observable for exactly these elements).
    pub fn vsource_names(&self) -> Vec<&str> {
        self.elements
            .iter()
            .filter(|e| matches!(e.kind, ElementKind::VSource { .. }))
            .map(|e| e.name.as_str())
            .collect()
    }

    /// First `.tran` directive, if any.
    pub fn tran_directive(&self) -> Option<(f64, f64)> {
        self.analyses.iter().find_map(|a| match *a {
            AnalysisDirective::Tran { step, stop } => Some((step, stop)),
            AnalysisDirective::Op => None,
        })
    }
}

/// Parse netlist source text into a validated [`Netlist`].
///
/// Hard failures (syntax, unknown element letter, duplicate names, missing
/// model cards, invariant violations) return an error carrying the offending
/// line where one exists. Warning-level findings such as dangling nodes do
/// not fail the parse; retrieve them with [`validate`].
pub fn parse_netlist(source: &str) -> Result<Netlist, NetlistError> {
    let mut netlist = Netlist::empty();
    let mut element_lines: Vec<usize> = Vec::new();
    let mut seen_names: HashMap<String, usize> = HashMap::new();
    let mut first_content_line = true;
    let mut ended = false;

    // Fold continuation lines into (starting line number, logical line) pairs.
    let mut logical: Vec<(usize, String)> = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        let lineno = idx + 1;
        let without_comment = match raw.find(';') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let trimmed = without_comment.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('*') {
            if first_content_line {
                netlist.title = rest.trim().to_string();
            }
            first_content_line = false;
            continue;
        }
        first_content_line = false;
        if let Some(cont) = trimmed.strip_prefix('+') {
            match logical.last_mut() {
                Some((_, prev)) => {
                    prev.push(' ');
                    prev.push_str(cont.trim());
                }
                None => {
                    return Err(NetlistError::Syntax {
                        line: lineno,
                        msg: "continuation line with nothing to continue".into(),
                    })
                }
            }
        } else {
            logical.push((lineno, trimmed.to_string()));
        }
    }

    for (line, text) in logical {
        if ended {
            break;
        }
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let head = tokens[0];
        if let Some(directive) = head.strip_prefix('.') {
            match directive.to_ascii_lowercase().as_str() {
                "end" => ended = true,
                "op" => netlist.analyses.push(AnalysisDirective::Op),
                "tran" => {
                    if tokens.len() != 3 {
                        return Err(NetlistError::Syntax {
                            line,
                            msg: ".tran expects <step> <stop>".into(),
                        });
                    }
                    let step = value_at(&tokens, 1, line)?;
                    let stop = value_at(&tokens, 2, line)?;
                    netlist.analyses.push(AnalysisDirective::Tran { step, stop });
                }
                "model" => parse_model_card(&mut netlist, &tokens, line)?,
                other => {
                    return Err(NetlistError::Syntax {
                        line,
                        msg: format!("unknown directive '.{other}'"),
                    })
                }
            }
            continue;
        }

        let element = parse_element(&mut netlist, &tokens, &text, line)?;
        let key = element.name.to_ascii_lowercase();
        if seen_names.insert(key, line).is_some() {
            return Err(NetlistError::DuplicateName {
                line,
                name: element.name,
            });
        }
        netlist.elements.push(element);
        element_lines.push(line);
    }

    // Model references are resolvable only after the whole deck is read.
    for (i, e) in netlist.elements.iter().enumerate() {
        if let ElementKind::Mosfet { ref model, .. } = e.kind {
            if !netlist.models.contains_key(model) {
                return Err(NetlistError::MissingModel {
                    line: element_lines[i],
                    device: e.name.clone(),
                    model: model.clone(),
                });
            }
        }
    }

    let errors: Vec<Diagnostic> = validate(&netlist)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .collect();
    if !errors.is_empty() {
        return Err(NetlistError::Invalid(errors));
    }
    Ok(netlist)
}

fn value_at(tokens: &[&str], i: usize, line: usize) -> Result<f64, NetlistError> {
    let tok = tokens.get(i).ok_or_else(|| NetlistError::Syntax {
        line,
        msg: "missing value".into(),
    })?;
    parse_value(tok).map_err(|msg| NetlistError::Syntax { line, msg })
}

fn node_token(tok: &str, line: usize) -> Result<&str, NetlistError> {
    if tok.contains(['(', ')', '=']) {
        return Err(NetlistError::Syntax {
            line,
            msg: format!("invalid node name '{tok}'"),
        });
    }
    Ok(tok)
}

/// Parse `key=value` tokens into lower-cased key/value string pairs.
fn key_values<'a>(tokens: &[&'a str], line: usize) -> Result<Vec<(String, &'a str)>, NetlistError> {
    tokens
        .iter()
        .map(|tok| match tok.split_once('=') {
            Some((k, v)) if !k.is_empty() && !v.is_empty() => {
                Ok((k.to_ascii_lowercase(), v))
            }
            _ => Err(NetlistError::Syntax {
                line,
                msg: format!("expected key=value, found '{tok}'"),
            }),
        })
        .collect()
}

fn require_kv(
    kvs: &[(String, &str)],
    key: &str,
    what: &str,
    line: usize,
) -> Result<f64, NetlistError> {
    for (k, v) in kvs {
        if k == key {
            return parse_value(v).map_err(|msg| NetlistError::Syntax { line, msg });
        }
    }
    Err(NetlistError::Syntax {
        line,
        msg: format!("{what} requires {key}="),
    })
}

fn parse_model_card(
    netlist: &mut Netlist,
    tokens: &[&str],
    line: usize,
) -> Result<(), NetlistError> {
    if tokens.len() < 3 {
        return Err(NetlistError::Syntax {
            line,
            msg: ".model expects <name> NMOS|PMOS <params>".into(),
        });
    }
    let name = tokens[1];
    let polarity = match tokens[2].to_ascii_lowercase().as_str() {
        "nmos" => Polarity::Nmos,
        "pmos" => Polarity::Pmos,
        other => {
            return Err(NetlistError::Syntax {
                line,
                msg: format!("model polarity must be NMOS or PMOS, found '{other}'"),
            })
        }
    };
    let kvs = key_values(&tokens[3..], line)?;
    let model = DeviceModel {
        name: name.to_string(),
        polarity,
        vt: require_kv(&kvs, "vt", ".model", line)?,
        kp: require_kv(&kvs, "kp", ".model", line)?,
        lambda: require_kv(&kvs, "lambda", ".model", line)?,
        tox: require_kv(&kvs, "tox", ".model", line)?,
        eps: require_kv(&kvs, "eps", ".model", line)?,
    };
    let key = name.to_ascii_lowercase();
    if netlist.models.insert(key, model).is_some() {
        return Err(NetlistError::Syntax {
            line,
            msg: format!("duplicate model '{name}'"),
        });
    }
    Ok(())
}

fn parse_element(
    netlist: &mut Netlist,
    tokens: &[&str],
    text: &str,
    line: usize,
) -> Result<Element, NetlistError> {
    let name = tokens[0];
    let letter = name.chars().next().unwrap().to_ascii_uppercase();
    let take_nodes = |netlist: &mut Netlist, count: usize| -> Result<Vec<usize>, NetlistError> {
        if tokens.len() < 1 + count {
            return Err(NetlistError::Syntax {
                line,
                msg: format!("element '{name}' expects {count} nodes"),
            });
        }
        tokens[1..1 + count]
            .iter()
            .map(|t| Ok(netlist.intern_node(node_token(t, line)?)))
            .collect()
    };

    let (nodes, kind) = match letter {
        'R' => {
            let nodes = take_nodes(netlist, 2)?;
            if tokens.len() != 4 {
                return Err(NetlistError::Syntax {
                    line,
                    msg: "resistor line is R<name> n1 n2 <value>".into(),
                });
            }
            let value = value_at(tokens, 3, line)?;
            (nodes, ElementKind::Resistor { value })
        }
        'C' => {
            let nodes = take_nodes(netlist, 2)?;
            if tokens.len() < 4 || tokens.len() > 5 {
                return Err(NetlistError::Syntax {
                    line,
                    msg: "capacitor line is C<name> n1 n2 <value> [ic=<v0>]".into(),
                });
            }
            let value = value_at(tokens, 3, line)?;
            let ic = match tokens.get(4) {
                Some(tok) => {
                    let kvs = key_values(&tokens[4..], line)?;
                    if kvs[0].0 != "ic" {
                        return Err(NetlistError::Syntax {
                            line,
                            msg: format!("unexpected capacitor parameter '{tok}'"),
                        });
                    }
                    Some(parse_value(kvs[0].1).map_err(|msg| NetlistError::Syntax { line, msg })?)
                }
                None => None,
            };
            (nodes, ElementKind::Capacitor { value, ic })
        }
        'V' | 'I' => {
            let nodes = take_nodes(netlist, 2)?;
            // The source spec may contain spaces inside parentheses, so parse
            // it from the raw text past the third token rather than from the
            // whitespace-split list.
            let rest = after_n_tokens(text, 3);
            let waveform = parse_source_spec(rest, line)?;
            if letter == 'V' {
                (nodes, ElementKind::VSource { waveform })
            } else {
                (nodes, ElementKind::ISource { waveform })
            }
        }
        'M' => {
            let nodes = take_nodes(netlist, 4)?;
            if tokens.len() != 8 {
                return Err(NetlistError::Syntax {
                    line,
                    msg: "mosfet line is M<name> nd ng ns nb <model> W=<w> L=<l>".into(),
                });
            }
            let model = tokens[5].to_ascii_lowercase();
            if model.contains('=') {
                return Err(NetlistError::Syntax {
                    line,
                    msg: "mosfet model name must precede W=/L=".into(),
                });
            }
            let kvs = key_values(&tokens[6..], line)?;
            let w = require_kv(&kvs, "w", "mosfet", line)?;
            let l = require_kv(&kvs, "l", "mosfet", line)?;
            (nodes, ElementKind::Mosfet { model, w, l })
        }
        'S' => {
            let nodes = take_nodes(netlist, 4)?;
            if tokens.len() != 8 {
                return Err(NetlistError::Syntax {
                    line,
                    msg: "switch line is S<name> n1 n2 nc+ nc- ron=<r> roff=<r> vt=<v>".into(),
                });
            }
            let kvs = key_values(&tokens[5..], line)?;
            let ron = require_kv(&kvs, "ron", "switch", line)?;
            let roff = require_kv(&kvs, "roff", "switch", line)?;
            let vt = require_kv(&kvs, "vt", "switch", line)?;
            (nodes, ElementKind::Switch { ron, roff, vt })
        }
        other => return Err(NetlistError::UnknownElement { line, letter: other }),
    };

    Ok(Element {
        name: name.to_string(),
        nodes,
        kind,
    })
}

/// The remainder of `text` after skipping `n` whitespace-separated tokens.
fn after_n_tokens(text: &str, n: usize) -> &str {
    let mut rest = text;
    for _ in 0..n {
        rest = rest.trim_start();
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        rest = &rest[end..];
    }
    rest.trim()
}

fn parse_source_spec(rest: &str, line: usize) -> Result<Waveform, NetlistError> {
    let lower = rest.to_ascii_lowercase();
    if let Some(arg) = lower.strip_prefix("dc") {
        if arg.starts_with(char::is_whitespace) || arg.is_empty() {
            let toks: Vec<&str> = rest[2..].split_whitespace().collect();
            if toks.len() != 1 {
                return Err(NetlistError::Syntax {
                    line,
                    msg: "DC expects a single value".into(),
                });
            }
            let v = parse_value(toks[0]).map_err(|msg| NetlistError::Syntax { line, msg })?;
            return Ok(Waveform::Dc(v));
        }
    }
    for (kw, arity) in [("pulse", Some(7)), ("pwl", None), ("sin", Some(3))] {
        if lower.starts_with(kw) {
            let args = paren_args(rest, kw.len(), line)?;
            if let Some(n) = arity {
                if args.len() != n {
                    return Err(NetlistError::Syntax {
                        line,
                        msg: format!("{} expects {n} values, found {}", kw.to_uppercase(), args.len()),
                    });
                }
            }
            return Ok(match kw {
                "pulse" => Waveform::Pulse {
                    v1: args[0],
                    v2: args[1],
                    delay: args[2],
                    rise: args[3],
                    fall: args[4],
                    width: args[5],
                    period: args[6],
                },
                "sin" => Waveform::Sine {
                    offset: args[0],
                    amplitude: args[1],
                    frequency: args[2],
                },
                _ => {
                    if args.is_empty() || args.len() % 2 != 0 {
                        return Err(NetlistError::Syntax {
                            line,
                            msg: "PWL expects time/value pairs".into(),
                        });
                    }
                    Waveform::Pwl(args.chunks(2).map(|p| (p[0], p[1])).collect())
                }
            });
        }
    }
    Err(NetlistError::Syntax {
        line,
        msg: format!("expected DC, PULSE(...), PWL(...), or SIN(...), found '{rest}'"),
    })
}

fn paren_args(rest: &str, kw_len: usize, line: usize) -> Result<Vec<f64>, NetlistError> {
    let tail = rest[kw_len..].trim_start();
    let inner = tail
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| NetlistError::Syntax {
            line,
            msg: "source arguments must be parenthesized".into(),
        })?;
    inner
        .replace(',', " ")
        .split_whitespace()
        .map(|t| parse_value(t).map_err(|msg| NetlistError::Syntax { line, msg }))
        .collect()
}

/// Format a value canonically: plain decimal in a readable range, exponent
/// notation outside it. Both forms parse back to the identical `f64`.
pub fn format_value(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else if x.abs() >= 1e-3 && x.abs() < 1e6 {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Serialize to canonical text. `parse_netlist(serialize_netlist(n))` is
/// structurally equal to `n` for any valid netlist.
pub fn serialize_netlist(n: &Netlist) -> String {
    let mut out = String::new();
    if !n.title.is_empty() {
        out.push_str("* ");
        out.push_str(&n.title);
        out.push('\n');
    }
    let node = |i: usize| n.node_names[i].as_str();
    for e in &n.elements {
        match &e.kind {
            ElementKind::Resistor { value } => {
                out.push_str(&format!(
                    "{} {} {} {}\n",
                    e.name,
                    node(e.nodes[0]),
                    node(e.nodes[1]),
                    format_value(*value)
                ));
            }
            ElementKind::Capacitor { value, ic } => {
                out.push_str(&format!(
                    "{} {} {} {}",
                    e.name,
                    node(e.nodes[0]),
                    node(e.nodes[1]),
                    format_value(*value)
                ));
                if let Some(v0) = ic {
                    out.push_str(&format!(" ic={}", format_value(*v0)));
                }
                out.push('\n');
            }
            ElementKind::VSource { waveform } | ElementKind::ISource { waveform } => {
                out.push_str(&format!(
                    "{} {} {} {}\n",
                    e.name,
                    node(e.nodes[0]),
                    node(e.nodes[1]),
                    format_waveform(waveform)
                ));
            }
            ElementKind::Mosfet { model, w, l } => {
                let display = n
                    .models
                    .get(model)
                    .map(|m| m.name.as_str())
                    .unwrap_or(model.as_str());
                out.push_str(&format!(
                    "{} {} {} {} {} {} W={} L={}\n",
                    e.name,
                    node(e.nodes[0]),
                    node(e.nodes[1]),
                    node(e.nodes[2]),
                    node(e.nodes[3]),
                    display,
                    format_value(*w),
                    format_value(*l)
                ));
            }
            ElementKind::Switch { ron, roff, vt } => {
                out.push_str(&format!(
                    "{} {} {} {} {} ron={} roff={} vt={}\n",
                    e.name,
                    node(e.nodes[0]),
                    node(e.nodes[1]),
                    node(e.nodes[2]),
                    node(e.nodes[3]),
                    format_value(*ron),
                    format_value(*roff),
                    format_value(*vt)
                ));
            }
        }
    }
    for model in n.models.values() {
        out.push_str(&format!(
            ".model {} {} vt={} kp={} lambda={} tox={} eps={}\n",
            model.name,
            model.polarity,
            format_value(model.vt),
            format_value(model.kp),
            format_value(model.lambda),
            format_value(model.tox),
            format_value(model.eps)
        ));
    }
    for a in &n.analyses {
        match a {
            AnalysisDirective::Op => out.push_str(".op\n"),
            AnalysisDirective::Tran { step, stop } => {
                out.push_str(&format!(
                    ".tran {} {}\n",
                    format_value(*step),
                    format_value(*stop)
                ));
            }
        }
    }
    out.push_str(".end\n");
    out
}

pub(crate) fn format_waveform(w: &Waveform) -> String {
    match w {
        Waveform::Dc(v) => format!("DC {}", format_value(*v)),
        Waveform::Pulse { v1, v2, delay, rise, fall, width, period } => format!(
            "PULSE({} {} {} {} {} {} {})",
            format_value(*v1),
            format_value(*v2),
            format_value(*delay),
            format_value(*rise),
            format_value(*fall),
            format_value(*width),
            format_value(*period)
        ),
        Waveform::Pwl(pts) => {
            let body = pts
                .iter()
                .map(|&(t, v)| format!("{} {}", format_value(t), format_value(v)))
                .collect::<Vec<_>>()
                .join(" ");
            format!("PWL({body})")
        }
        Waveform::Sine { offset, amplitude, frequency } => format!(
            "SIN({} {} {})",
            format_value(*offset),
            format_value(*amplitude),
            format_value(*frequency)
        ),
    }
}

/// Waveform invariants shared by `V` and `I` elements.
fn waveform_diagnostics(name: &str, w: &Waveform, diags: &mut Vec<Diagnostic>) {
    let mut error = |msg: String| {
        diags.push(Diagnostic {
            severity: Severity::Error,
            message: msg,
        })
    };
    match w {
        Waveform::Dc(_) => {}
        Waveform::Pulse { delay, rise, fall, width, period, .. } => {
            if *delay < 0.0 || *rise < 0.0 || *fall < 0.0 || *width < 0.0 {
                error(format!(
                    "source '{name}': pulse times must be >= 0, \
                     got td={delay} tr={rise} tf={fall} pw={width}"
                ));
            }
            if *period <= 0.0 {
                error(format!(
                    "source '{name}': pulse period must be > 0, got {period}"
                ));
            } else if rise + width + fall > *period {
                error(format!(
                    "source '{name}': pulse edges and width exceed the period \
                     (tr+pw+tf={} > per={period})",
                    rise + width + fall
                ));
            }
        }
        Waveform::Pwl(pts) => {
            if pts.is_empty() {
                error(format!("source '{name}': PWL needs at least one point"));
            }
            for pair in pts.windows(2) {
                if pair[1].0 <= pair[0].0 {
                    error(format!(
                        "source '{name}': PWL times must be strictly increasing \
                         ({} then {})",
                        pair[0].0, pair[1].0
                    ));
                }
            }
        }
        Waveform::Sine { frequency, .. } => {
            if *frequency <= 0.0 {
                error(format!(
                    "source '{name}': sine frequency must be > 0, got {frequency}"
                ));
            }
        }
    }
}

/// Check every structural invariant, returning findings in deterministic
/// order. An empty result means the netlist is simulation-ready; warnings
/// (dangling nodes) do not block simulation.
pub fn validate(n: &Netlist) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let error = |msg: String| {
        Diagnostic {
            severity: Severity::Error,
            message: msg,
        }
    };

    if n.node_names.first().map(String::as_str) != Some(GROUND) {
        diags.push(error("ground node '0' must occupy index 0".into()));
    }

    let mut seen = HashMap::new();
    for e in &n.elements {
        if let Some(first) = seen.insert(e.name.to_ascii_lowercase(), &e.name) {
            diags.push(error(format!(
                "duplicate element name '{}' (also declared as '{first}')",
                e.name
            )));
        }
        for &ni in &e.nodes {
            if ni >= n.node_names.len() {
                diags.push(error(format!(
                    "element '{}' references node index {ni} outside the node table",
                    e.name
                )));
            }
        }
        match &e.kind {
            ElementKind::Resistor { value } => {
                if *value <= 0.0 {
                    diags.push(error(format!(
                        "resistor '{}': value must be > 0, got {}",
                        e.name, value
                    )));
                }
            }
            ElementKind::Capacitor { value, .. } => {
                if *value <= 0.0 {
                    diags.push(error(format!(
                        "capacitor '{}': value must be > 0, got {}",
                        e.name, value
                    )));
                }
            }
            ElementKind::Switch { ron, roff, .. } => {
                if *ron <= 0.0 {
                    diags.push(error(format!(
                        "switch '{}': ron must be > 0, got {}",
                        e.name, ron
                    )));
                }
                if *roff <= *ron {
                    diags.push(error(format!(
                        "switch '{}': roff must exceed ron, got roff={} ron={}",
                        e.name, roff, ron
                    )));
                }
            }
            ElementKind::Mosfet { model, w, l } => {
                if *w <= 0.0 || *l <= 0.0 {
                    diags.push(error(format!(
                        "mosfet '{}': W and L must be > 0, got W={} L={}",
                        e.name, w, l
                    )));
                }
                if n.models.get(model).is_none() {
                    diags.push(error(format!(
                        "mosfet '{}' references undefined model '{}'",
                        e.name, model
                    )));
                }
            }
            ElementKind::VSource { waveform } | ElementKind::ISource { waveform } => {
                waveform_diagnostics(&e.name, waveform, &mut diags);
            }
        }
    }

    for model in n.models.values() {
        if model.kp <= 0.0 {
            diags.push(error(format!(
                "model '{}': kp must be > 0, got {}",
                model.name, model.kp
            )));
        }
        if model.tox <= 0.0 {
            diags.push(error(format!(
                "model '{}': tox must be > 0, got {}",
                model.name, model.tox
            )));
        }
        if model.eps <= 0.0 {
            diags.push(error(format!(
                "model '{}': eps must be > 0, got {}",
                model.name, model.eps
            )));
        }
        if model.lambda < 0.0 {
            diags.push(error(format!(
                "model '{}': lambda must be >= 0, got {}",
                model.name, model.lambda
            )));
        }
    }

    for a in &n.analyses {
        if let AnalysisDirective::Tran { step, stop } = a {
            if *step <= 0.0 {
                diags.push(error(format!(".tran step must be > 0, got {step}")));
            } else if *stop <= *step {
                diags.push(error(format!(
                    ".tran stop must exceed step, got step={step} stop={stop}"
                )));
            }
        }
    }

    // Dangling-node check: a non-ground node touched by exactly one element
    // terminal usually indicates a typo; it is survivable thanks to the gmin
    // shunts, so it is only a warning.
    let mut refs = vec![0usize; n.node_names.len()];
    for e in &n.elements {
        for &ni in &e.nodes {
            if ni < refs.len() {
                refs[ni] += 1;
            }
        }
    }
    for (i, &count) in refs.iter().enumerate() {
        if i != 0 && count == 1 {
            diags.push(Diagnostic {
                severity: Severity::Warning,
                message: format!(
                    "node '{}' is referenced exactly once (dangling?)",
                    n.node_names[i]
                ),
            });
        }
    }

    diags
}
