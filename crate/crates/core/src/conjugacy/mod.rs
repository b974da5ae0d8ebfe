//! Topological conjugacy between a nonlinear block system and its linear
//! part: crossing times onto the unit sphere, the radial maps between the
//! intermediate system and the linear one, the shifted-system maps between
//! the full and intermediate systems, their composition, and residual-based
//! verification of the identities the construction promises.

mod crossing;
mod maps;
mod report;
mod shifted;

pub use crossing::CrossingTime;
pub use report::{ConjugacyReport, ReportOptions};
pub use shifted::TildeDirection;

use crate::model::{BlockSystem, DichotomySpec, ModelError, NumericsConfig};
use crate::solve::SolveError;
use crate::transition::{TransitionError, TransitionOperator};
use crate::verify::{
    check_theorem2, growth_constants, GrowthConstants, HypothesisReport, VerifyError,
};
use nalgebra::DVector;
use std::collections::HashMap;
use std::sync::RwLock;
use thiserror::Error;

/// Default tolerance ladder: stage round trips and the composed one.
pub const STAGE_ROUNDTRIP_TOL: f64 = 1e-4;
pub const COMPOSED_ROUNDTRIP_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Error)]
pub enum ConjugacyError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("linearization hypotheses fail: {keys:?}")]
    HypothesesFailed { keys: Vec<String> },
    #[error("crossing time undefined for the zero state")]
    ZeroState,
    #[error("crossing-time bracket left the working window at t = {t}")]
    BracketExceedsWindow { t: f64 },
    #[error("crossing residual {residual:.3e} above tolerance after {iterations} bisections")]
    CrossingFailed { residual: f64, iterations: usize },
    #[error("improper-integral horizon t + {horizon} exceeds the working window")]
    HorizonExceedsWindow { horizon: f64 },
}

impl From<VerifyError> for ConjugacyError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Transition(t) => ConjugacyError::Transition(t),
            VerifyError::NonFiniteIntegrand(t) => {
                ConjugacyError::Transition(TransitionError::NonFinite { from: t, to: t })
            }
        }
    }
}

type ChiCacheKey = (u8, Vec<i64>);

/// Evaluation context: transition operators for both blocks and the full
/// diagonal system, growth constants, and the hypothesis report.
pub struct Conjugacy<'a> {
    pub(crate) sys: &'a BlockSystem,
    pub(crate) dich: DichotomySpec,
    pub(crate) numerics: NumericsConfig,
    pub(crate) x_op: TransitionOperator,
    pub(crate) y_op: TransitionOperator,
    pub(crate) w_op: TransitionOperator,
    pub(crate) growth_w: GrowthConstants,
    theorem2: HypothesisReport,
    pub(crate) alpha0: f64,
    pub(crate) theta_bar: f64,
    /// optional cache of shifted-system displacements keyed by quantized
    /// base points; concurrent equal-key insertion is harmless
    pub(crate) chi_cache: RwLock<HashMap<ChiCacheKey, DVector<f64>>>,
}

impl<'a> Conjugacy<'a> {
    /// Builds the context. The dichotomy projection is structural for block
    /// systems (`diag(I, 0)`), so only `K` and `alpha` are read from `d`.
    pub fn new(
        sys: &'a BlockSystem,
        d: &DichotomySpec,
        numerics: &NumericsConfig,
    ) -> Result<Self, ConjugacyError> {
        let dich = DichotomySpec::new(sys.default_projection(), d.big_k, d.alpha)?;
        let x_op = TransitionOperator::new(sys.x_linear(), numerics.clone());
        let y_op = TransitionOperator::new(sys.y_linear(), numerics.clone());
        let w_op = TransitionOperator::new(sys.full_linear(), numerics.clone());
        let growth_a = growth_constants(&sys.x_linear(), d.alpha, numerics)?;
        let growth_b = growth_constants(&sys.y_linear(), d.alpha, numerics)?;
        let growth_w = growth_constants(&sys.full_linear(), d.alpha, numerics)?;
        let theorem2 = check_theorem2(sys, &dich, &growth_a, &growth_b);
        let alpha0 = theorem2.derived_value("alpha0").unwrap_or(f64::NAN);
        let theta_bar = theorem2.derived_value("theta_bar").unwrap_or(f64::NAN);
        Ok(Conjugacy {
            sys,
            dich,
            numerics: numerics.clone(),
            x_op,
            y_op,
            w_op,
            growth_w,
            theorem2,
            alpha0,
            theta_bar,
            chi_cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn hypotheses(&self) -> &HypothesisReport {
        &self.theorem2
    }

    pub fn system(&self) -> &BlockSystem {
        self.sys
    }

    pub(crate) fn require_hypotheses(&self) -> Result<(), ConjugacyError> {
        if self.theorem2.pass {
            Ok(())
        } else {
            Err(ConjugacyError::HypothesesFailed {
                keys: self
                    .theorem2
                    .entries
                    .iter()
                    .filter(|e| !e.pass)
                    .map(|e| e.key.clone())
                    .collect(),
            })
        }
    }

    /// Splits a full state into its `x` / `y` parts.
    pub(crate) fn split(&self, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (
            z.rows(0, self.sys.n1).into_owned(),
            z.rows(self.sys.n1, self.sys.n2).into_owned(),
        )
    }

    pub(crate) fn join(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(self.sys.dim());
        z.rows_mut(0, self.sys.n1).copy_from(x);
        z.rows_mut(self.sys.n1, self.sys.n2).copy_from(y);
        z
    }

    /// Composed map toward the linear system: the shifted-system map into
    /// the intermediate system followed by the radial map.
    pub fn toward_linear(&self, t: f64, z: &DVector<f64>) -> Result<DVector<f64>, ConjugacyError> {
        let mid = self.map_htilde(t, z)?;
        self.map_h(t, &mid)
    }

    /// Composed map toward the nonlinear system.
    pub fn toward_nonlinear(
        &self,
        t: f64,
        z: &DVector<f64>,
    ) -> Result<DVector<f64>, ConjugacyError> {
        let mid = self.map_l(t, z)?;
        self.map_ltilde(t, &mid)
    }
}
