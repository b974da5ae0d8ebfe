//! Solvers: interval-stepping initial value problems (forward and backward,
//! with the per-interval anchor self-consistency) and the unique bounded
//! solution by contraction iteration.

mod bounded;
mod ivp;
mod sampled;

pub use bounded::{bounded_solution, bounded_solution_from, BoundedProblem, BoundedSolution};
pub use ivp::solve_ivp;
pub use sampled::{SampledFunction, Trajectory};

use crate::model::{BlockSystem, ModelError, NumericsConfig};
use crate::odeint::vec_norm;
use crate::transition::TransitionError;
use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error("state dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("anchor fixed point did not converge on interval {interval} after {iterations} iterations")]
    AnchorFixedPoint { interval: usize, iterations: usize },
    #[error("singular anchor equation on interval {interval} (|det|={det:.3e})")]
    SingularAnchor { interval: usize, det: f64 },
    #[error("non-finite state during integration near t = {t}")]
    NonFinite { t: f64 },
    #[error("hypothesis check `{check}` failed")]
    HypothesisFailed { check: String },
    #[error("window too small: need {needed} time units inside ({}, {})", window.0, window.1)]
    WindowTooSmall { needed: f64, window: (f64, f64) },
    #[error("contraction iteration did not converge after {iterations} iterations (last step {residual:.3e})")]
    PicardDiverged { iterations: usize, residual: f64 },
}

/// Outcome of the trajectory-continuity bound check
/// `|z(t,tau,xi') - z(t,tau,xi)| <= |xi - xi'| e^{p(l) |t - tau|}`.
#[derive(Debug, Clone, Serialize)]
pub struct ContinuityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub p_l: f64,
    pub pass: bool,
}

/// Integrates both solutions of the full block system and compares their
/// separation at `t` against the exponential envelope with rate `p_l`.
pub fn continuity_bound_check(
    sys: &BlockSystem,
    p_l: f64,
    tau: f64,
    xi: &DVector<f64>,
    xi2: &DVector<f64>,
    t: f64,
    numerics: &NumericsConfig,
) -> Result<ContinuityReport, SolveError> {
    let lin = sys.full_linear();
    let rhs = sys.full_rhs(true);
    let a = solve_ivp(&lin, Some(&rhs), tau, xi, t, numerics)?;
    let b = solve_ivp(&lin, Some(&rhs), tau, xi2, t, numerics)?;
    let lhs = vec_norm(&(a.eval(t) - b.eval(t)));
    let rhs_bound = vec_norm(&(xi - xi2)) * (p_l * (t - tau).abs()).exp();
    Ok(ContinuityReport {
        lhs,
        rhs: rhs_bound,
        p_l,
        pass: lhs <= rhs_bound * (1.0 + crate::verify::SAMPLING_SLACK) + 1e-12,
    })
}
