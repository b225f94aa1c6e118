//! Channel estimation by convex demixing: compile, solve, recombine.

use faer::Mat;

use crate::error::{dim_check, Error, Result};
use crate::linalg::{norm2_sqr, C64};
use crate::measurement::{lift_apply_unchecked, MeasurementEnsemble};
use crate::solver::{compile, solve, SdpSolution, SolveStatus, SolverOptions};
use crate::subspace::SubspaceBasis;

/// Default near-field weight.
pub const DEFAULT_TAU: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct DemixEstimate {
    /// `x̂ + lift(X̂)`.
    pub h_hat: Vec<C64>,
    pub x_hat: Vec<C64>,
    pub lifted_hat: Mat<C64>,
    pub solution: SdpSolution,
    pub tau: f64,
    pub delta: f64,
}

impl DemixEstimate {
    pub fn status(&self) -> SolveStatus {
        self.solution.status
    }

    pub fn u_far(&self) -> &[C64] {
        &self.solution.blocks.u_far
    }

    pub fn u_near(&self) -> &[C64] {
        &self.solution.blocks.u_near
    }
}

/// Solve the demixing program for one ensemble. `delta` overrides the ensemble's
/// noise budget.
pub fn estimate_channel(
    ensemble: &MeasurementEnsemble,
    basis: &SubspaceBasis,
    tau: f64,
    delta: Option<f64>,
    opts: &SolverOptions,
) -> Result<DemixEstimate> {
    let delta = delta.unwrap_or(ensemble.noise_bound);
    let program = compile(ensemble.combiner.as_ref(), &ensemble.y, basis, tau, delta)?;
    let solution = solve(&program, opts)?;
    if solution.status != SolveStatus::Converged {
        log::warn!(
            "demixing stopped with status {} after {} iterations",
            solution.status,
            solution.iterations
        );
    }
    let x_hat = solution.blocks.x.clone();
    let lifted_hat = solution.blocks.lifted.clone();
    let near = lift_apply_unchecked(basis.basis(), lifted_hat.as_ref());
    let h_hat = x_hat.iter().zip(near).map(|(a, b)| a + b).collect();
    Ok(DemixEstimate {
        h_hat,
        x_hat,
        lifted_hat,
        solution,
        tau,
        delta,
    })
}

/// `‖ĥ − h‖² / ‖h‖²`.
pub fn nmse(h_hat: &[C64], h_true: &[C64]) -> Result<f64> {
    dim_check("nmse", h_true.len(), h_hat.len())?;
    let den = norm2_sqr(h_true);
    if den == 0.0 {
        return Err(Error::Domain("NMSE against a zero channel".into()));
    }
    let num: f64 = h_hat.iter().zip(h_true).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(num / den)
}
