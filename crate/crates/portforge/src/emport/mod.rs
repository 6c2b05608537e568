//! Port extraction and re-coupling for linear second-order EM surrogates.
//!
//! A [`SecondOrderLTI`] stands in for the semi-discrete EM system
//! `M x'' + D x' + K x = B i(t)`, with port voltages observed as `B^T x`.
//! Driving one port with a unit single-step basis pulse and recording the
//! port voltages yields the [`PortResponse`]; convolving that response with
//! arbitrary port currents reproduces the coupled solution exactly (at the
//! shared discretization), which is what makes the circuit-side
//! optimization loop cheap. The expensive monolithic reference path lives in
//! [`solve_self_consistent`].

mod reflection;
mod selfconsistent;

pub use reflection::{reflection_coefficient, Reflection};
pub use selfconsistent::solve_self_consistent;

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::circuit::CircuitError;
use crate::signals::{SignalError, TimeSignal};

/// Newmark average-acceleration parameters (unconditionally stable).
const GAMMA: f64 = 0.5;
const BETA: f64 = 0.25;

#[derive(Debug, Error)]
pub enum EmError {
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("effective Newmark matrix is singular")]
    SingularEffectiveMatrix,
    #[error("joint circuit/EM iteration did not converge at step {step} after {iters} sweeps")]
    JointDivergence { step: usize, iters: usize },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("port response file: {0}")]
    BadResponseFile(String),
}

type Result<T> = std::result::Result<T, EmError>;

/// Mass/damping/stiffness storage. Diagonal form is what the modal factory
/// produces and is the only practical layout for large surrogates.
#[derive(Debug, Clone)]
enum Matrices {
    Dense { m: DMatrix<f64>, d: DMatrix<f64>, k: DMatrix<f64> },
    Diagonal { m: DVector<f64>, d: DVector<f64>, k: DVector<f64> },
}

/// Second-order surrogate `M x'' + D x' + K x = B i(t)` with port voltages
/// `B^T x`. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SecondOrderLTI {
    matrices: Matrices,
    coupling: DMatrix<f64>, // dof x n_ports
}

/// One resonance contributing to a port: natural frequency, damping ratio,
/// and the coupling strength that scales its contribution to the port
/// impedance.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Mode {
    pub frequency_hz: f64,
    pub damping_ratio: f64,
    pub coupling: f64,
}

impl SecondOrderLTI {
    /// Dense construction. `m` must be symmetric positive-definite, `d` and
    /// `k` symmetric positive-semidefinite, `b` of shape `dof x n_ports`.
    pub fn new_dense(
        m: DMatrix<f64>,
        d: DMatrix<f64>,
        k: DMatrix<f64>,
        b: DMatrix<f64>,
    ) -> Result<Self> {
        let dof = m.nrows();
        for (name, mat) in [("M", &m), ("D", &d), ("K", &k)] {
            if mat.nrows() != dof || mat.ncols() != dof {
                return Err(EmError::InvalidSystem(format!("{name} is not {dof}x{dof}")));
            }
            let scale = mat.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(1e-300);
            for i in 0..dof {
                for j in i + 1..dof {
                    if (mat[(i, j)] - mat[(j, i)]).abs() > 1e-9 * scale {
                        return Err(EmError::InvalidSystem(format!("{name} is not symmetric")));
                    }
                }
            }
        }
        if b.nrows() != dof {
            return Err(EmError::InvalidSystem(format!(
                "B has {} rows, system has {dof} dofs",
                b.nrows()
            )));
        }
        if nalgebra::Cholesky::new(m.clone()).is_none() {
            return Err(EmError::InvalidSystem("M is not positive-definite".into()));
        }
        for (name, mat) in [("D", &d), ("K", &k)] {
            let eig = mat.clone().symmetric_eigenvalues();
            let trace = mat.trace().abs().max(1e-300);
            if eig.iter().any(|&l| l < -1e-10 * trace) {
                return Err(EmError::InvalidSystem(format!("{name} is not positive-semidefinite")));
            }
        }
        Ok(Self { matrices: Matrices::Dense { m, d, k }, coupling: b })
    }

    /// Diagonal construction (modal coordinates).
    pub fn new_diagonal(
        m: DVector<f64>,
        d: DVector<f64>,
        k: DVector<f64>,
        b: DMatrix<f64>,
    ) -> Result<Self> {
        let dof = m.len();
        if d.len() != dof || k.len() != dof || b.nrows() != dof {
            return Err(EmError::InvalidSystem("diagonal system dimensions disagree".into()));
        }
        if m.iter().any(|&x| !(x > 0.0)) {
            return Err(EmError::InvalidSystem("M diagonal must be positive".into()));
        }
        if d.iter().chain(k.iter()).any(|&x| !(x >= 0.0)) {
            return Err(EmError::InvalidSystem("D and K diagonals must be non-negative".into()));
        }
        Ok(Self { matrices: Matrices::Diagonal { m, d, k }, coupling: b })
    }

    /// Build a diagonal-modal surrogate from per-port mode lists.
    ///
    /// Each mode becomes one dof with unit mass, stiffness `w^2`, and damping
    /// `2*zeta*w`. Port `j` couples to its own modes with the mode's
    /// `coupling`; an optional symmetric `cross_coupling` matrix (unit
    /// diagonal) spreads each port's drive onto the other ports' modes,
    /// which is what makes the off-diagonal response entries nonzero.
    pub fn from_modes(
        port_modes: &[Vec<Mode>],
        cross_coupling: Option<&DMatrix<f64>>,
    ) -> Result<Self> {
        let n_ports = port_modes.len();
        if n_ports == 0 {
            return Err(EmError::InvalidSystem("at least one port is required".into()));
        }
        if let Some(c) = cross_coupling {
            if c.nrows() != n_ports || c.ncols() != n_ports {
                return Err(EmError::InvalidSystem("cross-coupling matrix has wrong shape".into()));
            }
            for i in 0..n_ports {
                for j in 0..n_ports {
                    if (c[(i, j)] - c[(j, i)]).abs() > 1e-12 {
                        return Err(EmError::InvalidSystem(
                            "cross-coupling matrix must be symmetric".into(),
                        ));
                    }
                }
            }
        }
        let dof: usize = port_modes.iter().map(|m| m.len()).sum();
        if dof == 0 {
            return Err(EmError::InvalidSystem("no modes given".into()));
        }
        let mut mass = DVector::zeros(dof);
        let mut damp = DVector::zeros(dof);
        let mut stiff = DVector::zeros(dof);
        let mut b = DMatrix::zeros(dof, n_ports);
        let mut row = 0;
        for (port, modes) in port_modes.iter().enumerate() {
            for mode in modes {
                if !(mode.frequency_hz > 0.0) {
                    return Err(EmError::InvalidSystem(format!(
                        "mode frequency must be > 0, got {}",
                        mode.frequency_hz
                    )));
                }
                if !(mode.damping_ratio >= 0.0) {
                    return Err(EmError::InvalidSystem(format!(
                        "damping ratio must be >= 0, got {}",
                        mode.damping_ratio
                    )));
                }
                let w = 2.0 * std::f64::consts::PI * mode.frequency_hz;
                mass[row] = 1.0;
                damp[row] = 2.0 * mode.damping_ratio * w;
                stiff[row] = w * w;
                for j in 0..n_ports {
                    let kappa = match cross_coupling {
                        Some(c) => c[(port, j)],
                        None => (port == j) as u8 as f64,
                    };
                    b[(row, j)] = kappa * mode.coupling;
                }
                row += 1;
            }
        }
        Self::new_diagonal(mass, damp, stiff, b)
    }

    pub fn dof(&self) -> usize {
        self.coupling.nrows()
    }

    pub fn n_ports(&self) -> usize {
        self.coupling.ncols()
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    fn apply_d(&self, v: &DVector<f64>, out: &mut DVector<f64>) {
        match &self.matrices {
            Matrices::Dense { d, .. } => out.gemv(1.0, d, v, 0.0),
            Matrices::Diagonal { d, .. } => {
                out.copy_from(v);
                out.component_mul_assign(d);
            }
        }
    }

    fn apply_k(&self, v: &DVector<f64>, out: &mut DVector<f64>) {
        match &self.matrices {
            Matrices::Dense { k, .. } => out.gemv(1.0, k, v, 0.0),
            Matrices::Diagonal { k, .. } => {
                out.copy_from(v);
                out.component_mul_assign(k);
            }
        }
    }

    /// Solve `M a = rhs` (consistent initial accelerations).
    pub fn mass_solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.matrices {
            Matrices::Dense { m, .. } => nalgebra::Cholesky::new(m.clone())
                .map(|c| c.solve(rhs))
                .ok_or(EmError::SingularEffectiveMatrix),
            Matrices::Diagonal { m, .. } => Ok(rhs.component_div(m)),
        }
    }
}

/// Newmark integration state.
#[derive(Debug, Clone, PartialEq)]
pub struct NewmarkState {
    pub x: DVector<f64>,
    pub xdot: DVector<f64>,
    pub xddot: DVector<f64>,
    pub step_index: usize,
}

impl NewmarkState {
    pub fn rest(dof: usize) -> Self {
        Self {
            x: DVector::zeros(dof),
            xdot: DVector::zeros(dof),
            xddot: DVector::zeros(dof),
            step_index: 0,
        }
    }

    /// State with acceleration consistent with the equation of motion at the
    /// initial instant: `a = M^-1 (f0 - D v - K x)`.
    pub fn with_consistent_acceleration(
        sys: &SecondOrderLTI,
        x: DVector<f64>,
        xdot: DVector<f64>,
        f0: &DVector<f64>,
    ) -> Result<Self> {
        let mut rhs = f0.clone();
        let mut tmp = DVector::zeros(sys.dof());
        sys.apply_d(&xdot, &mut tmp);
        rhs -= &tmp;
        sys.apply_k(&x, &mut tmp);
        rhs -= &tmp;
        let xddot = sys.mass_solve(&rhs)?;
        Ok(Self { x, xdot, xddot, step_index: 0 })
    }
}

enum EffectiveFactor {
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Diagonal(DVector<f64>), // reciprocal of the effective diagonal
}

/// Marching engine for one `(system, dt)` pair: the effective matrix
/// `M + gamma*dt*D + beta*dt^2*K` is factorized once and reused.
pub(crate) struct NewmarkMarcher<'a> {
    sys: &'a SecondOrderLTI,
    dt: f64,
    factor: EffectiveFactor,
    x: DVector<f64>,
    v: DVector<f64>,
    a: DVector<f64>,
}

pub(crate) struct NewmarkTrial {
    a_next: DVector<f64>,
}

impl<'a> NewmarkMarcher<'a> {
    pub(crate) fn new(sys: &'a SecondOrderLTI, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(EmError::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        let factor = match &sys.matrices {
            Matrices::Dense { m, d, k } => {
                let e = m + d * (GAMMA * dt) + k * (BETA * dt * dt);
                EffectiveFactor::Dense(
                    nalgebra::Cholesky::new(e).ok_or(EmError::SingularEffectiveMatrix)?,
                )
            }
            Matrices::Diagonal { m, d, k } => {
                let mut e = m.clone();
                e.axpy(GAMMA * dt, d, 1.0);
                e.axpy(BETA * dt * dt, k, 1.0);
                if e.iter().any(|&x| !(x > 0.0)) {
                    return Err(EmError::SingularEffectiveMatrix);
                }
                EffectiveFactor::Diagonal(e.map(|x| 1.0 / x))
            }
        };
        let dof = sys.dof();
        Ok(Self {
            sys,
            dt,
            factor,
            x: DVector::zeros(dof),
            v: DVector::zeros(dof),
            a: DVector::zeros(dof),
        })
    }

    pub(crate) fn set_state(&mut self, state: &NewmarkState) {
        self.x.copy_from(&state.x);
        self.v.copy_from(&state.xdot);
        self.a.copy_from(&state.xddot);
    }

    fn predictors(&self) -> (DVector<f64>, DVector<f64>) {
        let dt = self.dt;
        let x_star = &self.x + &self.v * dt + &self.a * ((0.5 - BETA) * dt * dt);
        let v_star = &self.v + &self.a * ((1.0 - GAMMA) * dt);
        (x_star, v_star)
    }

    fn solve_effective(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match &self.factor {
            EffectiveFactor::Dense(chol) => chol.solve(rhs),
            EffectiveFactor::Diagonal(inv) => rhs.component_mul(inv),
        }
    }

    /// Solve for the next acceleration under forcing `f_next`, leaving the
    /// state untouched.
    pub(crate) fn trial(&self, f_next: &DVector<f64>) -> NewmarkTrial {
        let (x_star, v_star) = self.predictors();
        let mut rhs = f_next.clone();
        let mut tmp = DVector::zeros(self.sys.dof());
        self.sys.apply_d(&v_star, &mut tmp);
        rhs -= &tmp;
        self.sys.apply_k(&x_star, &mut tmp);
        rhs -= &tmp;
        NewmarkTrial { a_next: self.solve_effective(&rhs) }
    }

    /// Port voltages `B^T x_next` implied by a trial.
    pub(crate) fn trial_port_voltage(&self, trial: &NewmarkTrial) -> DVector<f64> {
        let (x_star, _) = self.predictors();
        let x_next = x_star + &trial.a_next * (BETA * self.dt * self.dt);
        self.sys.coupling.tr_mul(&x_next)
    }

    pub(crate) fn commit(&mut self, trial: &NewmarkTrial) {
        let (x_star, v_star) = self.predictors();
        self.v = v_star + &trial.a_next * (GAMMA * self.dt);
        self.x = x_star + &trial.a_next * (BETA * self.dt * self.dt);
        self.a.copy_from(&trial.a_next);
    }

    pub(crate) fn port_voltage(&self) -> DVector<f64> {
        self.sys.coupling.tr_mul(&self.x)
    }

    pub(crate) fn state(&self) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        (self.x.clone(), self.v.clone(), self.a.clone())
    }

    /// Instantaneous port resistance `beta*dt^2 * B^T E^-1 B`: the same-step
    /// voltage produced by a unit current sample, i.e. the k = 0 tap of the
    /// extracted response.
    pub(crate) fn instantaneous_resistance(&self) -> DMatrix<f64> {
        let n_ports = self.sys.n_ports();
        let mut r0 = DMatrix::zeros(n_ports, n_ports);
        for j in 0..n_ports {
            let col = DVector::from_column_slice(self.sys.coupling.column(j).as_slice());
            let y = self.solve_effective(&col);
            let v = self.sys.coupling.tr_mul(&y) * (BETA * self.dt * self.dt);
            r0.column_mut(j).copy_from(&v);
        }
        r0
    }
}

/// One average-acceleration Newmark step: solve
/// `(M + gamma*dt*D + beta*dt^2*K) a' = f - D v* - K x*` with the usual
/// predictors, then update velocity and displacement.
///
/// Factorizes the effective matrix on every call; marching loops inside this
/// module reuse one factorization instead.
pub fn newmark_step(
    sys: &SecondOrderLTI,
    state: &NewmarkState,
    f_next: &DVector<f64>,
    dt: f64,
) -> Result<NewmarkState> {
    if f_next.len() != sys.dof() {
        return Err(EmError::InvalidArgument(format!(
            "forcing has {} entries, system has {} dofs",
            f_next.len(),
            sys.dof()
        )));
    }
    if f_next.iter().any(|x| !x.is_finite()) {
        return Err(EmError::InvalidArgument("forcing must be finite".into()));
    }
    let mut marcher = NewmarkMarcher::new(sys, dt)?;
    marcher.set_state(state);
    let trial = marcher.trial(f_next);
    marcher.commit(&trial);
    let (x, v, a) = marcher.state();
    Ok(NewmarkState { x, xdot: v, xddot: a, step_index: state.step_index + 1 })
}

static EXTRACTION_RUNS: AtomicU64 = AtomicU64::new(0);

/// Number of single-port extraction marches performed by this process.
/// Scenario runs assert that the delta over a run equals the port count,
/// i.e. extraction is never repeated per GA evaluation.
pub fn extraction_run_count() -> u64 {
    EXTRACTION_RUNS.load(Ordering::Relaxed)
}

/// Extract the transient port response of `sys` on grid `dt`.
///
/// For each port, the system is driven by a unit current occupying a single
/// one-step basis function (sample 1 at step 0, zero after) and marched
/// `n_samples` steps; the recorded port voltages form `g[i][j][k]`, the
/// voltage on port `i` at step `k` due to the pulse on port `j`. Because the
/// sampled forcing of any current signal is the superposition of such
/// pulses, convolving `g` with port currents reproduces the marched
/// solution exactly.
pub fn extract_port_response(sys: &SecondOrderLTI, dt: f64, n_samples: usize) -> Result<PortResponse> {
    if n_samples == 0 {
        return Err(EmError::InvalidArgument("n_samples must be >= 1".into()));
    }
    let n_ports = sys.n_ports();
    let mut g = vec![0.0; n_ports * n_ports * n_samples];
    for j in 0..n_ports {
        EXTRACTION_RUNS.fetch_add(1, Ordering::Relaxed);
        let mut marcher = NewmarkMarcher::new(sys, dt)?;
        let pulse = DVector::from_column_slice(sys.coupling.column(j).as_slice());
        let zero = DVector::zeros(sys.dof());
        for k in 0..n_samples {
            let f = if k == 0 { &pulse } else { &zero };
            let trial = marcher.trial(f);
            marcher.commit(&trial);
            let v = marcher.port_voltage();
            for i in 0..n_ports {
                g[(i * n_ports + j) * n_samples + k] = v[i];
            }
        }
    }
    PortResponse::new(g, n_ports, n_samples, dt)
}

/// Basis tag carried by a response; only the Newmark-consistent single-step
/// pulse is defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseBasis {
    NewmarkConsistent,
}

impl ResponseBasis {
    fn tag(&self) -> &'static str {
        "newmark-consistent"
    }
}

/// Per-port-pair impulse-response samples `g[i][j][k]` (ohms), the
/// reduced-order stand-in for the EM system.
#[derive(Debug, Clone, PartialEq)]
pub struct PortResponse {
    g: Vec<f64>, // [(i * n_ports + j) * n_samples + k]
    n_ports: usize,
    n_samples: usize,
    dt: f64,
    basis: ResponseBasis,
}

impl PortResponse {
    pub fn new(g: Vec<f64>, n_ports: usize, n_samples: usize, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(EmError::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        if n_ports == 0 || n_samples == 0 {
            return Err(EmError::InvalidArgument("empty port response".into()));
        }
        if g.len() != n_ports * n_ports * n_samples {
            return Err(EmError::InvalidArgument(format!(
                "response data has {} values, expected {}",
                g.len(),
                n_ports * n_ports * n_samples
            )));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(EmError::InvalidArgument("response samples must be finite".into()));
        }
        Ok(Self { g, n_ports, n_samples, dt, basis: ResponseBasis::NewmarkConsistent })
    }

    /// Response with a purely instantaneous tap: `g[i][j][0] = r0[i][j]`,
    /// zero after. A one-port delta of value `R` behaves exactly like an
    /// `R`-ohm resistor.
    pub fn delta(r0: &DMatrix<f64>, dt: f64, n_samples: usize) -> Result<Self> {
        let n_ports = r0.nrows();
        if r0.ncols() != n_ports {
            return Err(EmError::InvalidArgument("delta matrix must be square".into()));
        }
        let mut g = vec![0.0; n_ports * n_ports * n_samples];
        for i in 0..n_ports {
            for j in 0..n_ports {
                g[(i * n_ports + j) * n_samples] = r0[(i, j)];
            }
        }
        Self::new(g, n_ports, n_samples, dt)
    }

    pub fn n_ports(&self) -> usize {
        self.n_ports
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn basis(&self) -> ResponseBasis {
        self.basis
    }

    /// Time series `g[i][j][..]`.
    pub fn series(&self, i: usize, j: usize) -> &[f64] {
        let base = (i * self.n_ports + j) * self.n_samples;
        &self.g[base..base + self.n_samples]
    }

    /// The k = 0 taps as a matrix: the instantaneous resistance stamped into
    /// the MNA system.
    pub fn instantaneous_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_ports, self.n_ports, |i, j| self.series(i, j)[0])
    }

    /// History part of the split convolution: for each port `i`,
    /// `out[i] = sum_j sum_{k<step} g[i][j][step-k] * currents[j][k]`.
    /// `currents[j]` holds the committed samples `0..step`.
    pub fn history_voltages(&self, currents: &[Vec<f64>], step: usize, out: &mut [f64]) {
        debug_assert_eq!(currents.len(), self.n_ports);
        debug_assert_eq!(out.len(), self.n_ports);
        for i in 0..self.n_ports {
            let mut acc = 0.0;
            for (j, track) in currents.iter().enumerate() {
                let g = self.series(i, j);
                for k in 0..step.min(track.len()) {
                    acc += g[step - k] * track[k];
                }
            }
            out[i] = acc;
        }
    }
}

/// Full discrete convolution of a response with port-current signals:
/// returns the port voltages at step `upto_step`,
/// `v_i = sum_j sum_{k<=n} g[i][j][n-k] * j_j[k]`.
pub fn port_convolution(
    resp: &PortResponse,
    currents: &[TimeSignal],
    upto_step: usize,
) -> Result<Vec<f64>> {
    if currents.len() != resp.n_ports() {
        return Err(EmError::InvalidArgument(format!(
            "{} current signals for a {}-port response",
            currents.len(),
            resp.n_ports()
        )));
    }
    if upto_step >= resp.n_samples() {
        return Err(EmError::InvalidArgument(format!(
            "step {} outside the {}-sample response",
            upto_step,
            resp.n_samples()
        )));
    }
    for c in currents {
        if c.dt() != resp.dt() {
            return Err(EmError::InvalidArgument(format!(
                "current dt {} differs from response dt {}",
                c.dt(),
                resp.dt()
            )));
        }
        if c.len() <= upto_step {
            return Err(EmError::InvalidArgument(format!(
                "current signal has {} samples, step {} requested",
                c.len(),
                upto_step
            )));
        }
    }
    let n = upto_step;
    let mut out = vec![0.0; resp.n_ports()];
    for (i, v) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, c) in currents.iter().enumerate() {
            let g = resp.series(i, j);
            let x = c.samples();
            for k in 0..=n {
                acc += g[n - k] * x[k];
            }
        }
        *v = acc;
    }
    Ok(out)
}

impl PortResponse {
    /// CSV serialization: a metadata header plus one `(i, j, k, g)` row per
    /// sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# n_ports={} dt_s={} n_samples={} basis={}",
            self.n_ports,
            self.dt,
            self.n_samples,
            self.basis.tag()
        );
        out.push_str("i,j,k,g_ohms\n");
        for i in 0..self.n_ports {
            for j in 0..self.n_ports {
                let series = self.series(i, j);
                for (k, v) in series.iter().enumerate() {
                    let _ = writeln!(out, "{i},{j},{k},{v}");
                }
            }
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let header = text
            .lines()
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .ok_or_else(|| EmError::BadResponseFile("missing metadata line".into()))?;
        let field = |key: &str| -> Result<String> {
            header
                .split_whitespace()
                .find_map(|tok| tok.strip_prefix(&format!("{key}=")).map(str::to_string))
                .ok_or_else(|| EmError::BadResponseFile(format!("missing {key}")))
        };
        let n_ports: usize = field("n_ports")?
            .parse()
            .map_err(|_| EmError::BadResponseFile("bad n_ports".into()))?;
        let n_samples: usize = field("n_samples")?
            .parse()
            .map_err(|_| EmError::BadResponseFile("bad n_samples".into()))?;
        let dt: f64 = field("dt_s")?
            .parse()
            .map_err(|_| EmError::BadResponseFile("bad dt_s".into()))?;
        let basis = field("basis")?;
        if basis != ResponseBasis::NewmarkConsistent.tag() {
            return Err(EmError::BadResponseFile(format!("unknown basis `{basis}`")));
        }
        let mut g = vec![f64::NAN; n_ports * n_ports * n_samples];
        let mut count = 0usize;
        for line in text.lines().skip(2) {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut next = || {
                parts
                    .next()
                    .ok_or_else(|| EmError::BadResponseFile(format!("short row `{line}`")))
            };
            let i: usize = next()?
                .trim()
                .parse()
                .map_err(|_| EmError::BadResponseFile(format!("bad row `{line}`")))?;
            let j: usize = next()?
                .trim()
                .parse()
                .map_err(|_| EmError::BadResponseFile(format!("bad row `{line}`")))?;
            let k: usize = next()?
                .trim()
                .parse()
                .map_err(|_| EmError::BadResponseFile(format!("bad row `{line}`")))?;
            let v: f64 = next()?
                .trim()
                .parse()
                .map_err(|_| EmError::BadResponseFile(format!("bad row `{line}`")))?;
            if i >= n_ports || j >= n_ports || k >= n_samples {
                return Err(EmError::BadResponseFile(format!("index out of range in `{line}`")));
            }
            g[(i * n_ports + j) * n_samples + k] = v;
            count += 1;
        }
        if count != n_ports * n_ports * n_samples {
            return Err(EmError::BadResponseFile(format!(
                "{count} rows for {} expected samples",
                n_ports * n_ports * n_samples
            )));
        }
        Self::new(g, n_ports, n_samples, dt)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}
