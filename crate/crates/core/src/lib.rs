//! Numerical toolkit for differential equations with piecewise constant
//! argument of generalized type: transition matrices built from interval-wise
//! factors, exponential-dichotomy verification, unique bounded solutions via
//! contraction iteration, and topological conjugacy maps between a nonlinear
//! block system and its linear part, with residual-based verification of the
//! identities the construction promises.

pub mod expr;
pub mod model;
pub mod odeint;
pub mod transition;
pub mod verify;
pub mod solve;
pub mod conjugacy;
pub mod cli;

pub use model::{
    load_config, BlockSystem, DepcagSystem, DichotomySpec, LinearDepcag, ModelError,
    NumericsConfig, SystemModel, TimeGrid,
};
