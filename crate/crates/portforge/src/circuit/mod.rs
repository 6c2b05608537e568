//! SPICE-like transient analysis over a modified-nodal-analysis network.
//!
//! Elements: resistors, capacitors, inductors, ideal voltage sources,
//! Shockley diodes, and EM-port elements that couple the circuit to an
//! extracted [`crate::emport::PortResponse`]. Dynamic elements are stepped
//! with trapezoidal companion models, which for first-order circuit
//! equations coincide with the average-acceleration Newmark scheme used on
//! the EM side.

mod solver;

pub use solver::{solve_transient, TransientStepper, TrialStep};
pub(crate) use solver::StepRecorder;

use thiserror::Error;

use crate::signals::{SignalError, SourceSpec, TimeSignal};

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380649e-23;
/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602177e-19;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("netlist line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid netlist: {0}")]
    InvalidNetlist(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("structurally singular system: {0}")]
    StructuralSingularity(String),
    #[error("linear solve singular at step {step}")]
    SingularStep { step: usize },
    #[error("Newton iteration did not converge at step {step} after {iters} iterations")]
    NewtonDivergence { step: usize, iters: usize },
    #[error("netlist contains EM ports but no port model was supplied")]
    MissingPortModel,
    #[error("port model mismatch: {0}")]
    PortModelMismatch(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

type Result<T> = std::result::Result<T, CircuitError>;

/// Thermal voltage `k_B * T / q`.
pub fn thermal_voltage(temperature_k: f64) -> Result<f64> {
    if !(temperature_k > 0.0) {
        return Err(CircuitError::InvalidArgument(format!(
            "temperature must be > 0 K, got {temperature_k}"
        )));
    }
    Ok(BOLTZMANN * temperature_k / ELEMENTARY_CHARGE)
}

/// Shockley diode parameters. Defaults approximate a 1N6263 Schottky diode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diode {
    /// Saturation current, A.
    pub saturation_current: f64,
    /// Ideality factor.
    pub ideality: f64,
    /// Junction temperature, K.
    pub temperature: f64,
}

impl Default for Diode {
    fn default() -> Self {
        Self { saturation_current: 4.86e-9, ideality: 1.02, temperature: 293.15 }
    }
}

/// Largest exponent argument evaluated exactly; beyond it the exponential is
/// continued by its tangent line so the model stays finite and C1.
const DIODE_EXP_CLAMP: f64 = 40.0;

/// Diode current and small-signal conductance at junction voltage `v`.
pub fn diode_iv(v: f64, d: &Diode) -> (f64, f64) {
    let vt = BOLTZMANN * d.temperature / ELEMENTARY_CHARGE;
    let nvt = d.ideality * vt;
    let x = v / nvt;
    if x <= DIODE_EXP_CLAMP {
        let e = x.exp();
        (d.saturation_current * (e - 1.0), d.saturation_current / nvt * e)
    } else {
        let e = DIODE_EXP_CLAMP.exp();
        let g = d.saturation_current / nvt * e;
        let i_clamp = d.saturation_current * (e - 1.0);
        (i_clamp + g * (v - DIODE_EXP_CLAMP * nvt), g)
    }
}

/// Voltage-source waveform. The netlist grammar only produces the
/// modulated-Gaussian form; step and sine are available to programmatic
/// callers (reference transients, rectifier fixtures).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Waveform {
    ModulatedGaussian(SourceSpec),
    /// Zero at step 0, `amplitude` from step 1 on (turn-on across the first
    /// interval, matching the linear-interpolation reading of the samples).
    Step { amplitude: f64 },
    Sine { amplitude: f64, frequency: f64 },
}

impl Waveform {
    /// Sample value at step `k` of grid `dt`.
    pub fn sample(&self, step: usize, dt: f64) -> f64 {
        match self {
            Waveform::ModulatedGaussian(spec) => {
                let d = spec.delay_steps as usize;
                if step < d {
                    0.0
                } else {
                    spec.value((step - d) as f64 * dt)
                }
            }
            Waveform::Step { amplitude } => {
                if step >= 1 {
                    *amplitude
                } else {
                    0.0
                }
            }
            Waveform::Sine { amplitude, frequency } => {
                amplitude * (2.0 * std::f64::consts::PI * frequency * step as f64 * dt).sin()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    Resistor { ohms: f64 },
    Capacitor { farads: f64 },
    Inductor { henries: f64 },
    VoltageSource { waveform: Waveform },
    Diode(Diode),
    EmPort { port_id: usize },
}

/// Two-terminal element between `node_pos` and `node_neg`. Branch current is
/// measured from `node_pos` through the element to `node_neg`.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    pub node_pos: usize,
    pub node_neg: usize,
    pub kind: ElementKind,
}

impl Element {
    pub fn new(name: impl Into<String>, node_pos: usize, node_neg: usize, kind: ElementKind) -> Self {
        Self { name: name.into(), node_pos, node_neg, kind }
    }
}

/// Validated node/element description of a lumped circuit. Node 0 is ground.
#[derive(Debug, Clone, PartialEq)]
pub struct Netlist {
    node_count: usize,
    elements: Vec<Element>,
}

impl Netlist {
    pub fn new(elements: Vec<Element>) -> Result<Self> {
        if elements.is_empty() {
            return Err(CircuitError::InvalidNetlist("netlist has no elements".into()));
        }
        let mut max_node = 0;
        let mut touches_ground = false;
        let mut names = std::collections::HashSet::new();
        let mut port_ids = std::collections::HashSet::new();
        for e in &elements {
            max_node = max_node.max(e.node_pos).max(e.node_neg);
            touches_ground |= e.node_pos == 0 || e.node_neg == 0;
            if e.node_pos == e.node_neg {
                return Err(CircuitError::InvalidNetlist(format!(
                    "element {} shorts node {} to itself",
                    e.name, e.node_pos
                )));
            }
            if !names.insert(e.name.clone()) {
                return Err(CircuitError::InvalidNetlist(format!(
                    "duplicate element name {}",
                    e.name
                )));
            }
            validate_kind(&e.name, &e.kind)?;
            if let ElementKind::EmPort { port_id } = e.kind {
                if !port_ids.insert(port_id) {
                    return Err(CircuitError::InvalidNetlist(format!(
                        "port id {port_id} bound to more than one element"
                    )));
                }
            }
        }
        if !touches_ground {
            return Err(CircuitError::InvalidNetlist(
                "no element references ground (node 0)".into(),
            ));
        }
        Ok(Self { node_count: max_node + 1, elements })
    }

    /// Number of nodes including ground.
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// Port ids referenced by EM-port elements, in element order.
    pub fn port_ids(&self) -> Vec<usize> {
        self.elements
            .iter()
            .filter_map(|e| match e.kind {
                ElementKind::EmPort { port_id } => Some(port_id),
                _ => None,
            })
            .collect()
    }

    /// The EM-port element bound to `port_id`, if any.
    pub fn port_element(&self, port_id: usize) -> Option<&Element> {
        self.elements.iter().find(|e| matches!(e.kind, ElementKind::EmPort { port_id: p } if p == port_id))
    }
}

fn validate_kind(name: &str, kind: &ElementKind) -> Result<()> {
    let bad = |msg: String| Err(CircuitError::InvalidNetlist(format!("element {name}: {msg}")));
    match kind {
        ElementKind::Resistor { ohms } if !(*ohms > 0.0) => bad(format!("R must be > 0, got {ohms}")),
        ElementKind::Capacitor { farads } if !(*farads > 0.0) => {
            bad(format!("C must be > 0, got {farads}"))
        }
        ElementKind::Inductor { henries } if !(*henries > 0.0) => {
            bad(format!("L must be > 0, got {henries}"))
        }
        ElementKind::Diode(d) => {
            if !(d.saturation_current > 0.0) {
                return bad(format!("IS must be > 0, got {}", d.saturation_current));
            }
            if !(d.ideality >= 1.0) {
                return bad(format!("N must be >= 1, got {}", d.ideality));
            }
            if !(250.0..=400.0).contains(&d.temperature) {
                return bad(format!("T must be within [250, 400] K, got {}", d.temperature));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Parse the line-oriented netlist grammar.
///
/// One element per line: `NAME node+ node- params...`; the element kind is
/// the leading letter of the name (R/C/L/V/D/P). `V` takes `F0= FBW= AMP=
/// DELAY=`, `D` takes `IS= N= T=` (defaulting to the 1N6263-like values),
/// `P` takes `PORT=`. `#` starts a comment.
pub fn parse_netlist(text: &str) -> Result<Netlist> {
    let mut elements = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let err = |message: String| CircuitError::Parse { line: line_no, message };
        if tokens.len() < 3 {
            return Err(err("expected `NAME node+ node- params...`".into()));
        }
        let name = tokens[0].to_string();
        let node_pos: usize = tokens[1]
            .parse()
            .map_err(|_| err(format!("bad node index `{}`", tokens[1])))?;
        let node_neg: usize = tokens[2]
            .parse()
            .map_err(|_| err(format!("bad node index `{}`", tokens[2])))?;
        let params = &tokens[3..];

        let kind_letter = name
            .chars()
            .next()
            .map(|c| c.to_ascii_uppercase())
            .ok_or_else(|| err("empty element name".into()))?;
        let kind = match kind_letter {
            'R' => ElementKind::Resistor { ohms: parse_value(params, line_no)? },
            'C' => ElementKind::Capacitor { farads: parse_value(params, line_no)? },
            'L' => ElementKind::Inductor { henries: parse_value(params, line_no)? },
            'V' => {
                let f0 = parse_key(params, "F0", line_no)?
                    .ok_or_else(|| err("V requires F0=".into()))?;
                let fbw = parse_key(params, "FBW", line_no)?
                    .ok_or_else(|| err("V requires FBW=".into()))?;
                let amp = parse_key(params, "AMP", line_no)?.unwrap_or(1.0);
                let delay = parse_key(params, "DELAY", line_no)?.unwrap_or(0.0);
                if delay < 0.0 || delay.fract() != 0.0 {
                    return Err(err(format!("DELAY must be a non-negative integer, got {delay}")));
                }
                let spec = SourceSpec::new(f0, fbw, amp, delay as u32)
                    .map_err(|e| err(e.to_string()))?;
                ElementKind::VoltageSource { waveform: Waveform::ModulatedGaussian(spec) }
            }
            'D' => {
                let defaults = Diode::default();
                ElementKind::Diode(Diode {
                    saturation_current: parse_key(params, "IS", line_no)?
                        .unwrap_or(defaults.saturation_current),
                    ideality: parse_key(params, "N", line_no)?.unwrap_or(defaults.ideality),
                    temperature: parse_key(params, "T", line_no)?.unwrap_or(defaults.temperature),
                })
            }
            'P' => {
                let port = parse_key(params, "PORT", line_no)?
                    .ok_or_else(|| err("P requires PORT=".into()))?;
                if port < 0.0 || port.fract() != 0.0 {
                    return Err(err(format!("PORT must be a non-negative integer, got {port}")));
                }
                ElementKind::EmPort { port_id: port as usize }
            }
            other => return Err(err(format!("unknown element kind `{other}`"))),
        };
        elements.push(Element::new(name, node_pos, node_neg, kind));
    }
    Netlist::new(elements)
}

fn parse_value(params: &[&str], line: usize) -> Result<f64> {
    let tok = params
        .first()
        .ok_or(CircuitError::Parse { line, message: "missing value".into() })?;
    tok.parse()
        .map_err(|_| CircuitError::Parse { line, message: format!("bad number `{tok}`") })
}

fn parse_key(params: &[&str], key: &str, line: usize) -> Result<Option<f64>> {
    for tok in params {
        if let Some(rest) = tok
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
        {
            let v: f64 = rest.parse().map_err(|_| CircuitError::Parse {
                line,
                message: format!("bad value for {key}: `{rest}`"),
            })?;
            return Ok(Some(v));
        }
    }
    Ok(None)
}

/// Newton iteration settings for the nonlinear transient solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Convergence tolerance on node-voltage increments, V.
    pub abs_tol: f64,
    pub max_iters: usize,
    /// Per-iteration limit on junction voltage steps, V.
    pub junction_voltage_limit: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { abs_tol: 1e-12, max_iters: 100, junction_voltage_limit: 0.8 }
    }
}

/// Named branch-current waveform of a source, inductor, or port element.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchCurrent {
    pub name: String,
    pub signal: TimeSignal,
}

/// Waveforms produced by a transient solve. All signals share one `(dt, len)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientResult {
    /// Voltage of node `k + 1` at index `k` (ground is identically zero and
    /// not stored).
    pub node_voltages: Vec<TimeSignal>,
    /// Branch currents of voltage sources, inductors, and EM ports, in
    /// netlist order.
    pub branch_currents: Vec<BranchCurrent>,
    /// Newton iterations spent on each step.
    pub newton_iteration_counts: Vec<usize>,
}

impl TransientResult {
    /// Voltage waveform of a node (1-based; ground returns zeros).
    pub fn node_voltage(&self, node: usize) -> Option<&TimeSignal> {
        if node == 0 {
            None
        } else {
            self.node_voltages.get(node - 1)
        }
    }

    pub fn branch_current(&self, name: &str) -> Option<&TimeSignal> {
        self.branch_currents.iter().find(|b| b.name == name).map(|b| &b.signal)
    }

    /// Port voltage `v(node+) - v(node-)` of the element bound to `port_id`.
    pub fn port_voltage(&self, net: &Netlist, port_id: usize) -> Option<TimeSignal> {
        let elem = net.port_element(port_id)?;
        self.voltage_across(elem)
    }

    /// Branch current into the EM port bound to `port_id`.
    pub fn port_current(&self, net: &Netlist, port_id: usize) -> Option<&TimeSignal> {
        let elem = net.port_element(port_id)?;
        self.branch_current(&elem.name)
    }

    /// Voltage across an element, `v(node+) - v(node-)`.
    pub fn voltage_across(&self, elem: &Element) -> Option<TimeSignal> {
        let n = self.node_voltages.first()?.len();
        let dt = self.node_voltages.first()?.dt();
        let node = |idx: usize| -> Option<&[f64]> {
            if idx == 0 {
                None
            } else {
                Some(self.node_voltages.get(idx - 1)?.samples())
            }
        };
        let pos = node(elem.node_pos);
        let neg = node(elem.node_neg);
        let samples: Vec<f64> = (0..n)
            .map(|k| pos.map_or(0.0, |s| s[k]) - neg.map_or(0.0, |s| s[k]))
            .collect();
        TimeSignal::new(samples, dt).ok()
    }
}
