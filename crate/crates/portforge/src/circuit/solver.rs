//! MNA assembly and the transient stepping engine.
//!
//! Unknown ordering: node voltages 1..N-1, then one branch current per
//! voltage source, then one branch current per EM-port element. Capacitors
//! and inductors are folded in as trapezoidal companion conductances with
//! history sources, so they add no unknowns. EM ports enter as branch
//! equations `v(+) - v(-) - sum_q R0[p][q] * i_q = hist[p]`: the
//! instantaneous port resistance matrix `R0` couples the port branches and
//! the convolution history arrives as a known voltage per step.

use nalgebra::{DMatrix, DVector};

use super::{
    diode_iv, BranchCurrent, CircuitError, Diode, Element, ElementKind, Netlist, NewtonConfig,
    Result, TransientResult, Waveform,
};
use crate::emport::PortResponse;
use crate::signals::TimeSignal;

/// Dense LU with partial pivoting and a relative pivot threshold, so a
/// floating subcircuit turns into a diagnosable error instead of garbage.
struct DenseLu {
    lu: DMatrix<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    fn factor(mut m: DMatrix<f64>) -> Option<Self> {
        let n = m.nrows();
        let scale = m.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        if scale == 0.0 {
            return None;
        }
        let mut perm = Vec::with_capacity(n);
        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_val = m[(col, col)].abs();
            for row in col + 1..n {
                let v = m[(row, col)].abs();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = row;
                }
            }
            if pivot_val <= 1e-13 * scale {
                return None;
            }
            if pivot_row != col {
                m.swap_rows(pivot_row, col);
            }
            perm.push(pivot_row);
            let inv = 1.0 / m[(col, col)];
            for row in col + 1..n {
                let factor = m[(row, col)] * inv;
                m[(row, col)] = factor;
                if factor != 0.0 {
                    for k in col + 1..n {
                        m[(row, k)] -= factor * m[(col, k)];
                    }
                }
            }
        }
        Some(Self { lu: m, perm })
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = b.len();
        let mut x = b.clone();
        for col in 0..n {
            let p = self.perm[col];
            if p != col {
                x.swap_rows(p, col);
            }
            let xc = x[col];
            if xc != 0.0 {
                for row in col + 1..n {
                    x[row] -= self.lu[(row, col)] * xc;
                }
            }
        }
        for col in (0..n).rev() {
            let mut s = x[col];
            for k in col + 1..n {
                s -= self.lu[(col, k)] * x[k];
            }
            x[col] = s / self.lu[(col, col)];
        }
        x
    }
}

struct CapState {
    pos: usize,
    neg: usize,
    g: f64, // 2C/dt
    v_prev: f64,
    i_prev: f64,
}

struct IndState {
    elem_idx: usize,
    pos: usize,
    neg: usize,
    g: f64, // dt/(2L)
    v_prev: f64,
    i_prev: f64,
}

struct DiodeState {
    pos: usize,
    neg: usize,
    params: Diode,
}

struct SourceEntry {
    elem_idx: usize,
    pos: usize,
    neg: usize,
    branch: usize,
    waveform: Waveform,
}

struct PortEntry {
    elem_idx: usize,
    pos: usize,
    neg: usize,
    branch: usize,
    port_id: usize,
}

/// One converged (but not yet committed) timestep.
pub struct TrialStep {
    solution: DVector<f64>,
    iterations: usize,
}

impl TrialStep {
    /// Branch current into the EM port `port_id` (zero for model ports the
    /// netlist does not reference).
    pub fn port_current(&self, stepper: &TransientStepper, port_id: usize) -> f64 {
        stepper
            .ports
            .iter()
            .find(|p| p.port_id == port_id)
            .map_or(0.0, |p| self.solution[p.branch])
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

/// Assembled MNA pattern plus per-element companion state.
///
/// `trial_step` solves one timestep without touching history; `commit`
/// advances the companion state. The split lets the self-consistent solver
/// iterate a step against the EM system before accepting it.
pub struct TransientStepper {
    dt: f64,
    cfg: NewtonConfig,
    n_nodes: usize, // excluding ground
    n_unknowns: usize,
    caps: Vec<CapState>,
    inductors: Vec<IndState>,
    diodes: Vec<DiodeState>,
    sources: Vec<SourceEntry>,
    ports: Vec<PortEntry>,
    n_model_ports: usize,
    base_matrix: DMatrix<f64>,
    /// Factorization reused across steps when the netlist is linear.
    linear_lu: Option<DenseLu>,
    x_prev: DVector<f64>,
    step_index: usize,
    element_names: Vec<String>,
}

impl TransientStepper {
    /// Assemble the transient system: MNA pattern plus companion stamps.
    ///
    /// `port_r0` is the instantaneous port resistance matrix indexed by model
    /// port id; it is required iff the netlist contains EM-port elements.
    pub fn new(
        net: &Netlist,
        dt: f64,
        cfg: NewtonConfig,
        port_r0: Option<&DMatrix<f64>>,
    ) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(CircuitError::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        let n_nodes = net.node_count() - 1;

        let mut caps = Vec::new();
        let mut inductors = Vec::new();
        let mut diodes = Vec::new();
        let mut sources = Vec::new();
        let mut ports = Vec::new();
        for (idx, e) in net.elements().iter().enumerate() {
            match &e.kind {
                ElementKind::Capacitor { farads } => caps.push(CapState {
                    pos: e.node_pos,
                    neg: e.node_neg,
                    g: 2.0 * farads / dt,
                    v_prev: 0.0,
                    i_prev: 0.0,
                }),
                ElementKind::Inductor { henries } => inductors.push(IndState {
                    elem_idx: idx,
                    pos: e.node_pos,
                    neg: e.node_neg,
                    g: dt / (2.0 * henries),
                    v_prev: 0.0,
                    i_prev: 0.0,
                }),
                ElementKind::Diode(d) => {
                    diodes.push(DiodeState { pos: e.node_pos, neg: e.node_neg, params: *d })
                }
                ElementKind::VoltageSource { waveform } => sources.push(SourceEntry {
                    elem_idx: idx,
                    pos: e.node_pos,
                    neg: e.node_neg,
                    branch: 0,
                    waveform: *waveform,
                }),
                ElementKind::EmPort { port_id } => ports.push(PortEntry {
                    elem_idx: idx,
                    pos: e.node_pos,
                    neg: e.node_neg,
                    branch: 0,
                    port_id: *port_id,
                }),
                ElementKind::Resistor { .. } => {}
            }
        }

        let n_model_ports = match (&ports[..], port_r0) {
            ([], _) => port_r0.map_or(0, |m| m.nrows()),
            (_, None) => return Err(CircuitError::MissingPortModel),
            (list, Some(r0)) => {
                if r0.nrows() != r0.ncols() {
                    return Err(CircuitError::PortModelMismatch(
                        "instantaneous resistance matrix is not square".into(),
                    ));
                }
                for p in list {
                    if p.port_id >= r0.nrows() {
                        return Err(CircuitError::PortModelMismatch(format!(
                            "netlist references port {} but the model has {} ports",
                            p.port_id,
                            r0.nrows()
                        )));
                    }
                }
                r0.nrows()
            }
        };

        let n_unknowns = n_nodes + sources.len() + ports.len();
        for (k, s) in sources.iter_mut().enumerate() {
            s.branch = n_nodes + k;
        }
        let n_sources = sources.len();
        for (k, p) in ports.iter_mut().enumerate() {
            p.branch = n_nodes + n_sources + k;
        }

        let mut stepper = Self {
            dt,
            cfg,
            n_nodes,
            n_unknowns,
            caps,
            inductors,
            diodes,
            sources,
            ports,
            n_model_ports,
            base_matrix: DMatrix::zeros(n_unknowns, n_unknowns),
            linear_lu: None,
            x_prev: DVector::zeros(n_unknowns),
            step_index: 0,
            element_names: net.elements().iter().map(|e| e.name.clone()).collect(),
        };
        stepper.build_base_matrix(net, port_r0);

        // Structural check: the linear part of the step matrix (diodes at
        // zero bias) must factor.
        let mut probe = stepper.base_matrix.clone();
        stepper.stamp_diode_matrix(&mut probe, &vec![0.0; stepper.diodes.len()]);
        let lu = DenseLu::factor(probe)
            .ok_or_else(|| CircuitError::StructuralSingularity("floating subcircuit or inconsistent source loop".into()))?;
        if stepper.diodes.is_empty() {
            stepper.linear_lu = Some(lu);
        }
        Ok(stepper)
    }

    fn build_base_matrix(&mut self, net: &Netlist, port_r0: Option<&DMatrix<f64>>) {
        let mut m = DMatrix::zeros(self.n_unknowns, self.n_unknowns);
        let mut stamp_g = |m: &mut DMatrix<f64>, pos: usize, neg: usize, g: f64| {
            if pos > 0 {
                m[(pos - 1, pos - 1)] += g;
            }
            if neg > 0 {
                m[(neg - 1, neg - 1)] += g;
            }
            if pos > 0 && neg > 0 {
                m[(pos - 1, neg - 1)] -= g;
                m[(neg - 1, pos - 1)] -= g;
            }
        };
        for e in net.elements() {
            if let ElementKind::Resistor { ohms } = e.kind {
                stamp_g(&mut m, e.node_pos, e.node_neg, 1.0 / ohms);
            }
        }
        for c in &self.caps {
            stamp_g(&mut m, c.pos, c.neg, c.g);
        }
        for l in &self.inductors {
            stamp_g(&mut m, l.pos, l.neg, l.g);
        }
        for s in &self.sources {
            if s.pos > 0 {
                m[(s.pos - 1, s.branch)] += 1.0;
                m[(s.branch, s.pos - 1)] += 1.0;
            }
            if s.neg > 0 {
                m[(s.neg - 1, s.branch)] -= 1.0;
                m[(s.branch, s.neg - 1)] -= 1.0;
            }
        }
        for p in &self.ports {
            if p.pos > 0 {
                m[(p.pos - 1, p.branch)] += 1.0;
                m[(p.branch, p.pos - 1)] += 1.0;
            }
            if p.neg > 0 {
                m[(p.neg - 1, p.branch)] -= 1.0;
                m[(p.branch, p.neg - 1)] -= 1.0;
            }
            if let Some(r0) = port_r0 {
                for q in &self.ports {
                    m[(p.branch, q.branch)] -= r0[(p.port_id, q.port_id)];
                }
            }
        }
        self.base_matrix = m;
    }

    fn stamp_diode_matrix(&self, m: &mut DMatrix<f64>, vj_lin: &[f64]) {
        for (d, &vj) in self.diodes.iter().zip(vj_lin) {
            let (_, g) = diode_iv(vj, &d.params);
            if d.pos > 0 {
                m[(d.pos - 1, d.pos - 1)] += g;
            }
            if d.neg > 0 {
                m[(d.neg - 1, d.neg - 1)] += g;
            }
            if d.pos > 0 && d.neg > 0 {
                m[(d.pos - 1, d.neg - 1)] -= g;
                m[(d.neg - 1, d.pos - 1)] -= g;
            }
        }
    }

    /// Known-source vector for step `step` (everything except diode terms).
    fn base_rhs(&self, step: usize, port_hist: &[f64]) -> DVector<f64> {
        let mut rhs = DVector::zeros(self.n_unknowns);
        let mut inject = |rhs: &mut DVector<f64>, pos: usize, neg: usize, i_hist: f64| {
            // Companion current i = g*v + i_hist flows pos -> neg.
            if pos > 0 {
                rhs[pos - 1] -= i_hist;
            }
            if neg > 0 {
                rhs[neg - 1] += i_hist;
            }
        };
        for c in &self.caps {
            inject(&mut rhs, c.pos, c.neg, -c.g * c.v_prev - c.i_prev);
        }
        for l in &self.inductors {
            inject(&mut rhs, l.pos, l.neg, l.g * l.v_prev + l.i_prev);
        }
        for s in &self.sources {
            rhs[s.branch] = s.waveform.sample(step, self.dt);
        }
        for p in &self.ports {
            rhs[p.branch] = port_hist[p.port_id];
        }
        rhs
    }

    fn diode_junction(&self, d: &DiodeState, x: &DVector<f64>) -> f64 {
        let vp = if d.pos > 0 { x[d.pos - 1] } else { 0.0 };
        let vn = if d.neg > 0 { x[d.neg - 1] } else { 0.0 };
        vp - vn
    }

    /// Solve one timestep. `port_hist` is the per-model-port history voltage
    /// (empty slice when the model has no ports). History state is not
    /// modified; call [`TransientStepper::commit`] to accept the step.
    pub fn trial_step(&self, step: usize, port_hist: &[f64]) -> Result<TrialStep> {
        if port_hist.len() != self.n_model_ports {
            return Err(CircuitError::PortModelMismatch(format!(
                "history vector has {} entries, model has {} ports",
                port_hist.len(),
                self.n_model_ports
            )));
        }
        let base_rhs = self.base_rhs(step, port_hist);

        if self.diodes.is_empty() {
            let lu = self.linear_lu.as_ref().expect("linear factorization cached");
            return Ok(TrialStep { solution: lu.solve(&base_rhs), iterations: 1 });
        }

        // Newton on the node voltages, with junction-voltage step limiting.
        let mut x = self.x_prev.clone();
        let mut vj_lin: Vec<f64> =
            self.diodes.iter().map(|d| self.diode_junction(d, &x)).collect();
        for iter in 1..=self.cfg.max_iters {
            let mut m = self.base_matrix.clone();
            self.stamp_diode_matrix(&mut m, &vj_lin);
            let mut rhs = base_rhs.clone();
            for (d, &vj) in self.diodes.iter().zip(&vj_lin) {
                let (i, g) = diode_iv(vj, &d.params);
                let i_eq = i - g * vj;
                if d.pos > 0 {
                    rhs[d.pos - 1] -= i_eq;
                }
                if d.neg > 0 {
                    rhs[d.neg - 1] += i_eq;
                }
            }
            let lu =
                DenseLu::factor(m).ok_or(CircuitError::SingularStep { step })?;
            let x_new = lu.solve(&rhs);

            let dv_max = (0..self.n_nodes)
                .map(|k| (x_new[k] - x[k]).abs())
                .fold(0.0f64, f64::max);

            // Limit the junction-voltage move used for the next linearization.
            let limit = self.cfg.junction_voltage_limit;
            for (k, d) in self.diodes.iter().enumerate() {
                let vj_new = self.diode_junction(d, &x_new);
                let dv = vj_new - vj_lin[k];
                vj_lin[k] += dv.clamp(-limit, limit);
            }
            x = x_new;
            if dv_max <= self.cfg.abs_tol {
                return Ok(TrialStep { solution: x, iterations: iter });
            }
        }
        Err(CircuitError::NewtonDivergence { step, iters: self.cfg.max_iters })
    }

    /// Accept a trial step: advance companion history and the warm start.
    pub fn commit(&mut self, trial: &TrialStep) {
        let x = &trial.solution;
        let v_at = |idx: usize| if idx > 0 { x[idx - 1] } else { 0.0 };
        for c in &mut self.caps {
            let v = v_at(c.pos) - v_at(c.neg);
            let i = c.g * (v - c.v_prev) - c.i_prev;
            c.v_prev = v;
            c.i_prev = i;
        }
        for l in &mut self.inductors {
            let v = v_at(l.pos) - v_at(l.neg);
            let i = l.i_prev + l.g * (v + l.v_prev);
            l.v_prev = v;
            l.i_prev = i;
        }
        self.x_prev = x.clone();
        self.step_index += 1;
    }

    pub fn n_model_ports(&self) -> usize {
        self.n_model_ports
    }
}

enum BranchKind {
    Unknown(usize),
    Inductor(usize),
}

struct BranchTrack {
    name: String,
    kind: BranchKind,
    samples: Vec<f64>,
}

/// Collects per-step node voltages, branch currents, and Newton counts into
/// a [`TransientResult`]. Shared by the plain transient solve and the
/// self-consistent EM/circuit solve so both emit identical shapes.
pub(crate) struct StepRecorder {
    dt: f64,
    n_nodes: usize,
    node_tracks: Vec<Vec<f64>>,
    branch_tracks: Vec<BranchTrack>,
    iter_counts: Vec<usize>,
}

impl StepRecorder {
    pub(crate) fn new(stepper: &TransientStepper, n_steps: usize) -> Self {
        let mut branch_tracks: Vec<(usize, BranchTrack)> = Vec::new();
        for s in &stepper.sources {
            branch_tracks.push((s.elem_idx, BranchTrack {
                name: stepper.element_names[s.elem_idx].clone(),
                kind: BranchKind::Unknown(s.branch),
                samples: Vec::with_capacity(n_steps),
            }));
        }
        for (k, l) in stepper.inductors.iter().enumerate() {
            branch_tracks.push((l.elem_idx, BranchTrack {
                name: stepper.element_names[l.elem_idx].clone(),
                kind: BranchKind::Inductor(k),
                samples: Vec::with_capacity(n_steps),
            }));
        }
        for p in &stepper.ports {
            branch_tracks.push((p.elem_idx, BranchTrack {
                name: stepper.element_names[p.elem_idx].clone(),
                kind: BranchKind::Unknown(p.branch),
                samples: Vec::with_capacity(n_steps),
            }));
        }
        branch_tracks.sort_by_key(|(idx, _)| *idx);
        Self {
            dt: stepper.dt,
            n_nodes: stepper.n_nodes,
            node_tracks: vec![Vec::with_capacity(n_steps); stepper.n_nodes],
            branch_tracks: branch_tracks.into_iter().map(|(_, t)| t).collect(),
            iter_counts: Vec::with_capacity(n_steps),
        }
    }

    /// Record a committed step (inductor currents read post-commit).
    pub(crate) fn record(&mut self, stepper: &TransientStepper, trial: &TrialStep) {
        for node in 0..self.n_nodes {
            self.node_tracks[node].push(trial.solution[node]);
        }
        for t in &mut self.branch_tracks {
            let v = match t.kind {
                BranchKind::Unknown(idx) => trial.solution[idx],
                BranchKind::Inductor(k) => stepper.inductors[k].i_prev,
            };
            t.samples.push(v);
        }
        self.iter_counts.push(trial.iterations);
    }

    pub(crate) fn finish(self) -> TransientResult {
        let dt = self.dt;
        TransientResult {
            node_voltages: self
                .node_tracks
                .into_iter()
                .map(|s| TimeSignal::new(s, dt).expect("n_steps >= 1"))
                .collect(),
            branch_currents: self
                .branch_tracks
                .into_iter()
                .map(|t| BranchCurrent {
                    name: t.name,
                    signal: TimeSignal::new(t.samples, dt).expect("n_steps >= 1"),
                })
                .collect(),
            newton_iteration_counts: self.iter_counts,
        }
    }
}

/// Transient solve of a netlist over `n_steps` uniform steps.
///
/// When the netlist has EM ports, `port_model` supplies the extracted
/// response: its instantaneous matrix is stamped into the MNA system and the
/// convolution history of committed port currents becomes a known source for
/// each step.
pub fn solve_transient(
    net: &Netlist,
    dt: f64,
    n_steps: usize,
    cfg: NewtonConfig,
    port_model: Option<&PortResponse>,
) -> Result<TransientResult> {
    if n_steps == 0 {
        return Err(CircuitError::InvalidArgument("n_steps must be >= 1".into()));
    }
    let has_ports = !net.port_ids().is_empty();
    if has_ports {
        let model = port_model.ok_or(CircuitError::MissingPortModel)?;
        if model.n_samples() < n_steps {
            return Err(CircuitError::PortModelMismatch(format!(
                "port model covers {} samples, solve needs {}",
                model.n_samples(),
                n_steps
            )));
        }
        if model.dt() != dt {
            return Err(CircuitError::PortModelMismatch(format!(
                "port model dt {} differs from solve dt {}",
                model.dt(),
                dt
            )));
        }
    }
    let r0 = port_model.map(|m| m.instantaneous_matrix());
    let mut stepper = TransientStepper::new(net, dt, cfg, r0.as_ref())?;

    let n_ports = stepper.n_model_ports();
    let mut recorder = StepRecorder::new(&stepper, n_steps);
    // Committed port currents per model port, consumed by the convolution.
    let mut port_currents: Vec<Vec<f64>> = vec![Vec::with_capacity(n_steps); n_ports];
    let mut hist = vec![0.0; n_ports];

    for step in 0..n_steps {
        if let Some(model) = port_model {
            model.history_voltages(&port_currents, step, &mut hist);
        }
        let trial = stepper.trial_step(step, &hist)?;
        stepper.commit(&trial);
        recorder.record(&stepper, &trial);

        for p in stepper.ports.iter() {
            port_currents[p.port_id].push(trial.solution[p.branch]);
        }
        // Model ports absent from the netlist carry zero current.
        for track in port_currents.iter_mut() {
            if track.len() == step {
                track.push(0.0);
            }
        }
    }
    Ok(recorder.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_netlist;
    use crate::signals::SourceSpec;

    fn step_source(name: &str, pos: usize, neg: usize, amplitude: f64) -> Element {
        Element::new(name, pos, neg, ElementKind::VoltageSource {
            waveform: Waveform::Step { amplitude },
        })
    }

    fn sine_source(name: &str, pos: usize, neg: usize, amplitude: f64, frequency: f64) -> Element {
        Element::new(name, pos, neg, ElementKind::VoltageSource {
            waveform: Waveform::Sine { amplitude, frequency },
        })
    }

    #[test]
    fn resistor_across_source_follows_source() {
        let net = Netlist::new(vec![
            sine_source("V1", 1, 0, 2.0, 1e6),
            Element::new("R1", 1, 0, ElementKind::Resistor { ohms: 50.0 }),
        ])
        .unwrap();
        let dt = 1e-8;
        let res = solve_transient(&net, dt, 64, NewtonConfig::default(), None).unwrap();
        let v1 = res.node_voltage(1).unwrap();
        for k in 0..64 {
            let expect = 2.0 * (2.0 * std::f64::consts::PI * 1e6 * k as f64 * dt).sin();
            assert!((v1.samples()[k] - expect).abs() < 1e-12);
        }
        assert!(res.newton_iteration_counts.iter().all(|&c| c == 1));
    }

    /// Analytic RC response to the step source as reconstructed by the
    /// solver's linear-interpolation reading of its samples: the input ramps
    /// 0 -> A over the first interval, then holds.
    fn rc_ramp_step_oracle(amplitude: f64, rc: f64, dt: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t <= dt {
            // Ramp segment: u(t) = A t/dt.
            amplitude * (t - rc * (1.0 - (-t / rc).exp())) / dt
        } else {
            let v_end = amplitude * (dt - rc * (1.0 - (-dt / rc).exp())) / dt;
            amplitude - (amplitude - v_end) * (-(t - dt) / rc).exp()
        }
    }

    fn rc_max_error(dt: f64, n_steps: usize) -> f64 {
        let r = 100.0;
        let c = 1e-12;
        let net = Netlist::new(vec![
            step_source("V1", 1, 0, 1.0),
            Element::new("R1", 1, 2, ElementKind::Resistor { ohms: r }),
            Element::new("C1", 2, 0, ElementKind::Capacitor { farads: c }),
        ])
        .unwrap();
        let res = solve_transient(&net, dt, n_steps, NewtonConfig::default(), None).unwrap();
        let v = res.node_voltage(2).unwrap();
        (0..n_steps)
            .map(|k| {
                let expect = rc_ramp_step_oracle(1.0, r * c, dt, k as f64 * dt);
                (v.samples()[k] - expect).abs()
            })
            .fold(0.0f64, f64::max)
    }

    #[test]
    fn rc_step_matches_analytic_and_converges_second_order() {
        // Fixed horizon of 4 RC constants, refined 4 times.
        let rc = 100.0 * 1e-12;
        let horizon = 4.0 * rc;
        let mut errors = Vec::new();
        for level in 0..4 {
            let n: usize = 64 << level;
            let dt = horizon / n as f64;
            errors.push(rc_max_error(dt, n));
        }
        // Error must be small in absolute terms and shrink ~4x per halving.
        assert!(errors[0] < 1e-3, "coarse error {}", errors[0]);
        for w in errors.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((1.8..=2.2).contains(&slope), "slope {slope} from errors {errors:?}");
        }
    }

    /// Zero-state response of the series RLC (output = capacitor voltage) to
    /// a sine drive, via the complex particular solution plus matched
    /// homogeneous terms.
    fn rlc_sine_oracle(r: f64, l: f64, c: f64, amp: f64, freq: f64, t: f64) -> f64 {
        use num_complex::Complex64;
        let w0sq = 1.0 / (l * c);
        let alpha = r / (2.0 * l);
        let wd = (w0sq - alpha * alpha).sqrt();
        let w = 2.0 * std::f64::consts::PI * freq;
        let h = w0sq / Complex64::new(w0sq - w * w, 2.0 * alpha * w);
        let vp0 = amp * h.im;
        let dvp0 = amp * w * h.re;
        let c1 = -vp0;
        let c2 = (alpha * c1 - dvp0) / wd;
        let hom = (-alpha * t).exp() * (c1 * (wd * t).cos() + c2 * (wd * t).sin());
        let part = amp * (h * Complex64::new(0.0, w * t).exp()).im;
        part + hom
    }

    fn rlc_max_error(dt: f64, n_steps: usize) -> f64 {
        let (r, l, c) = (20.0, 50e-9, 2e-12); // underdamped: zeta ~ 0.06
        let freq = 0.4 / (2.0 * std::f64::consts::PI * (l * c).sqrt()); // below resonance
        let net = Netlist::new(vec![
            sine_source("V1", 1, 0, 1.0, freq),
            Element::new("R1", 1, 2, ElementKind::Resistor { ohms: r }),
            Element::new("L1", 2, 3, ElementKind::Inductor { henries: l }),
            Element::new("C1", 3, 0, ElementKind::Capacitor { farads: c }),
        ])
        .unwrap();
        let res = solve_transient(&net, dt, n_steps, NewtonConfig::default(), None).unwrap();
        let v = res.node_voltage(3).unwrap();
        (0..n_steps)
            .map(|k| {
                let expect = rlc_sine_oracle(r, l, c, 1.0, freq, k as f64 * dt);
                (v.samples()[k] - expect).abs()
            })
            .fold(0.0f64, f64::max)
    }

    #[test]
    fn rlc_sine_matches_analytic_and_converges_second_order() {
        let w0 = 1.0 / (50e-9f64 * 2e-12).sqrt();
        let horizon = 30.0 / w0;
        let mut errors = Vec::new();
        for level in 0..4 {
            let n: usize = 256 << level;
            let dt = horizon / n as f64;
            errors.push(rlc_max_error(dt, n));
        }
        for w in errors.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((1.8..=2.2).contains(&slope), "slope {slope} from errors {errors:?}");
        }
    }

    #[test]
    fn half_wave_rectifier_clips_and_matches_refined_reference() {
        let freq = 50e6;
        let build = || {
            Netlist::new(vec![
                sine_source("V1", 1, 0, 3.0, freq),
                Element::new("D1", 1, 2, ElementKind::Diode(Diode::default())),
                Element::new("RL", 2, 0, ElementKind::Resistor { ohms: 1e3 }),
            ])
            .unwrap()
        };
        let n = 400;
        let dt = 1.0 / (freq * 200.0); // 200 samples per cycle, two cycles
        let coarse = solve_transient(&build(), dt, n, NewtonConfig::default(), None).unwrap();
        let out = coarse.node_voltage(2).unwrap();

        // Output never swings below a small reverse-leakage level.
        let min = out.samples().iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > -1e-3, "rectified output dipped to {min}");
        // Peaks sit roughly one diode drop under the source peak.
        let max = out.samples().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(max > 2.0 && max < 3.0, "peak {max}");

        // 10x finer self-reference, compared on the shared samples.
        let fine = solve_transient(&build(), dt / 10.0, n * 10, NewtonConfig::default(), None)
            .unwrap();
        let fine_out = fine.node_voltage(2).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..n {
            let a = out.samples()[k];
            let b = fine_out.samples()[k * 10];
            num += (a - b) * (a - b);
            den += b * b;
        }
        let rel = (num / den).sqrt();
        assert!(rel < 0.01, "relative deviation from refined reference: {rel}");
    }

    #[test]
    fn rectifier_newton_converges_from_any_start_with_limiting() {
        // Large source swing: without junction limiting the exponential
        // overflows the first iteration from a cold start.
        let net = Netlist::new(vec![
            sine_source("V1", 1, 0, 20.0, 10e6),
            Element::new("D1", 1, 2, ElementKind::Diode(Diode::default())),
            Element::new("RL", 2, 0, ElementKind::Resistor { ohms: 50.0 }),
        ])
        .unwrap();
        let cfg = NewtonConfig::default();
        let res = solve_transient(&net, 1e-9, 300, cfg, None).unwrap();
        assert!(res
            .newton_iteration_counts
            .iter()
            .all(|&c| c <= cfg.max_iters));
    }

    #[test]
    fn passive_network_dissipates_no_more_than_source_delivers() {
        let spec = SourceSpec::new(10e9, 2e9, 1.0, 0).unwrap();
        let net = Netlist::new(vec![
            Element::new("V1", 1, 0, ElementKind::VoltageSource {
                waveform: Waveform::ModulatedGaussian(spec),
            }),
            Element::new("R1", 1, 2, ElementKind::Resistor { ohms: 30.0 }),
            Element::new("L1", 2, 3, ElementKind::Inductor { henries: 2e-9 }),
            Element::new("C1", 3, 0, ElementKind::Capacitor { farads: 3e-13 }),
            Element::new("R2", 3, 0, ElementKind::Resistor { ohms: 120.0 }),
        ])
        .unwrap();
        let dt = crate::signals::default_timestep(10e9, 2e9).unwrap();
        let n = 4096; // runs well past source ring-down
        let res = solve_transient(&net, dt, n, NewtonConfig::default(), None).unwrap();

        let v1 = res.node_voltage(1).unwrap();
        let i_src = res.branch_current("V1").unwrap();
        let delivered: f64 = (0..n).map(|k| -v1.samples()[k] * i_src.samples()[k] * dt).sum();

        let v2 = res.node_voltage(2).unwrap();
        let v3 = res.node_voltage(3).unwrap();
        let mut dissipated = 0.0;
        for k in 0..n {
            let vr1 = v1.samples()[k] - v2.samples()[k];
            dissipated += vr1 * vr1 / 30.0 * dt;
            let vr2 = v3.samples()[k];
            dissipated += vr2 * vr2 / 120.0 * dt;
        }
        assert!(delivered > 0.0);
        assert!(
            dissipated <= delivered * (1.0 + 1e-9),
            "dissipated {dissipated} vs delivered {delivered}"
        );
    }

    #[test]
    fn floating_subcircuit_is_a_structural_error() {
        // Nodes 2-3 connect only to each other.
        let net = Netlist::new(vec![
            sine_source("V1", 1, 0, 1.0, 1e6),
            Element::new("R1", 1, 0, ElementKind::Resistor { ohms: 10.0 }),
            Element::new("R2", 2, 3, ElementKind::Resistor { ohms: 10.0 }),
        ])
        .unwrap();
        let err = TransientStepper::new(&net, 1e-9, NewtonConfig::default(), None).unwrap_err();
        assert!(matches!(err, CircuitError::StructuralSingularity(_)));
    }

    #[test]
    fn port_without_model_is_rejected() {
        let net = parse_netlist("V1 1 0 F0=1e9 FBW=1e8\nR1 1 2 50\nP1 2 0 PORT=0").unwrap();
        let err = solve_transient(&net, 1e-12, 8, NewtonConfig::default(), None).unwrap_err();
        assert!(matches!(err, CircuitError::MissingPortModel));
    }
}
