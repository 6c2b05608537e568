//! Monolithic circuit/EM reference solve.
//!
//! Per timestep, the circuit (MNA + Newton) and the EM surrogate (Newmark)
//! are swept Gauss-Seidel style against each other on the port variables:
//! the EM side provides the port voltage for the circuit's trial currents,
//! the circuit re-solves against the updated interface, and the step commits
//! only once the interface voltage is stationary to the solver tolerance.
//! This marches the full surrogate state every step, which is exactly the
//! cost the extracted-response path avoids.

use nalgebra::DVector;

use super::{EmError, NewmarkMarcher, Result, SecondOrderLTI};
use crate::circuit::{Netlist, NewtonConfig, StepRecorder, TransientResult, TransientStepper};

const MAX_JOINT_SWEEPS: usize = 50;

/// Solve the coupled circuit/EM system step by step to joint convergence.
pub fn solve_self_consistent(
    sys: &SecondOrderLTI,
    net: &Netlist,
    dt: f64,
    n_steps: usize,
    cfg: NewtonConfig,
) -> Result<TransientResult> {
    if n_steps == 0 {
        return Err(EmError::InvalidArgument("n_steps must be >= 1".into()));
    }
    for port_id in net.port_ids() {
        if port_id >= sys.n_ports() {
            return Err(EmError::InvalidArgument(format!(
                "netlist references port {port_id} but the surrogate has {} ports",
                sys.n_ports()
            )));
        }
    }
    let mut marcher = NewmarkMarcher::new(sys, dt)?;
    let r0 = marcher.instantaneous_resistance();
    let mut stepper = TransientStepper::new(net, dt, cfg, Some(&r0))?;
    let mut recorder = StepRecorder::new(&stepper, n_steps);

    let n_ports = sys.n_ports();
    let zero_forcing = DVector::zeros(sys.dof());

    for step in 0..n_steps {
        // The zero-forcing trial yields the port voltage the EM system would
        // show with no current this step: the interface history.
        let free = marcher.trial(&zero_forcing);
        let mut hist: Vec<f64> = marcher.trial_port_voltage(&free).iter().copied().collect();

        let mut accepted = None;
        for _sweep in 1..=MAX_JOINT_SWEEPS {
            let trial = stepper.trial_step(step, &hist)?;
            let currents =
                DVector::from_fn(n_ports, |p, _| trial.port_current(&stepper, p));
            let forced = marcher.trial(&(sys.coupling() * &currents));
            let v_port = marcher.trial_port_voltage(&forced);
            let consistent = &v_port - &r0 * &currents;

            let delta = hist
                .iter()
                .zip(consistent.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            for (h, &c) in hist.iter_mut().zip(consistent.iter()) {
                *h = c;
            }
            if delta <= cfg.abs_tol {
                accepted = Some((trial, forced));
                break;
            }
        }
        let (trial, forced) = accepted
            .ok_or(EmError::JointDivergence { step, iters: MAX_JOINT_SWEEPS })?;
        stepper.commit(&trial);
        marcher.commit(&forced);
        recorder.record(&stepper, &trial);
    }
    Ok(recorder.finish())
}
