//! Maps between the full system and the intermediate system via bounded
//! solutions of a shifted system.
//!
//! For a base point `(tau, xi, eta)` the source system's solution through it
//! becomes a reference; the shifted right-hand side measures the defect
//! between source and target dynamics along that reference. Its unique
//! bounded solution, evaluated at the base time, is the displacement the map
//! adds to the identity.

use super::{Conjugacy, ConjugacyError};
use crate::model::RhsFn;
use crate::solve::{bounded_solution, solve_ivp, BoundedProblem, Trajectory};
use nalgebra::DVector;
use std::sync::Arc;

/// Which way the shifted construction maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TildeDirection {
    /// Full system to intermediate system (drops the bounded `y`-terms).
    TowardIntermediate,
    /// Intermediate system back to the full system.
    TowardFull,
}

/// Reference solution through the base point, solved both ways across the
/// window.
struct RefSolution {
    tau: f64,
    back: Option<Trajectory>,
    fwd: Option<Trajectory>,
}

impl RefSolution {
    fn eval(&self, s: f64) -> DVector<f64> {
        if s < self.tau {
            if let Some(b) = &self.back {
                return b.eval(s);
            }
        }
        match &self.fwd {
            Some(f) => f.eval(s),
            None => self.back.as_ref().unwrap().eval(s),
        }
    }
}

impl Conjugacy<'_> {
    /// Map from full-system states to intermediate-system states.
    pub fn map_htilde(&self, t: f64, z: &DVector<f64>) -> Result<DVector<f64>, ConjugacyError> {
        Ok(z + self.tilde_displacement(TildeDirection::TowardIntermediate, t, z)?)
    }

    /// Map from intermediate-system states to full-system states.
    pub fn map_ltilde(&self, t: f64, z: &DVector<f64>) -> Result<DVector<f64>, ConjugacyError> {
        Ok(z + self.tilde_displacement(TildeDirection::TowardFull, t, z)?)
    }

    /// The displacement bound both tilde maps satisfy: the boundedness
    /// theorem's constant for the shifted system (growth `2 lambda`,
    /// Lipschitz `2 omega`, offset `4 delta`).
    pub fn tilde_sigma_bar(&self) -> f64 {
        let denom = self.dich.alpha
            - 4.0 * (2.0 * self.sys.lambda) * self.dich.big_k * self.growth_w.rho_tilde;
        if denom > 0.0 {
            2.0 * self.dich.big_k * (4.0 * self.sys.delta) * self.growth_w.rho_tilde / denom
        } else {
            f64::INFINITY
        }
    }

    /// Displacement `chi(t)` of the shifted system based at `(t, z)`; cached
    /// on quantized base points.
    pub(crate) fn tilde_displacement(
        &self,
        direction: TildeDirection,
        t: f64,
        z: &DVector<f64>,
    ) -> Result<DVector<f64>, ConjugacyError> {
        self.require_hypotheses()?;
        let key = cache_key(direction, t, z);
        if let Some(hit) = self.chi_cache.read().unwrap().get(&key) {
            return Ok(hit.clone());
        }

        let grid = &self.sys.grid;
        let lin = self.sys.full_linear();
        // source dynamics: the full system carries phi/psi, the intermediate does not
        let source_has_phi_psi = direction == TildeDirection::TowardIntermediate;
        let source_rhs = self.sys.full_rhs(source_has_phi_psi);
        let back = if t > grid.t_min() {
            Some(solve_ivp(&lin, Some(&source_rhs), t, z, grid.t_min(), &self.numerics)?)
        } else {
            None
        };
        let fwd = if t < grid.t_max() {
            Some(solve_ivp(&lin, Some(&source_rhs), t, z, grid.t_max(), &self.numerics)?)
        } else {
            None
        };
        let reference = Arc::new(RefSolution { tau: t, back, fwd });

        let rhs = self.shifted_rhs(direction, reference);
        let problem = BoundedProblem {
            op: &self.w_op,
            dich: &self.dich,
            rhs,
            growth_r: 2.0 * self.sys.lambda,
            offset_mu: 4.0 * self.sys.delta,
            lipschitz_l: 2.0 * self.sys.omega,
        };
        let sol = bounded_solution(&problem, &self.growth_w, &self.numerics)?;
        if t < sol.core.0 || t > sol.core.1 {
            return Err(ConjugacyError::HorizonExceedsWindow {
                horizon: sol.horizon,
            });
        }
        let chi_t = sol.phi0.eval(t);
        self.chi_cache.write().unwrap().insert(key, chi_t.clone());
        Ok(chi_t)
    }

    /// Builds the shifted right-hand side along the reference solution:
    /// the source nonlinearity differenced at displaced and reference states,
    /// plus the target's bounded terms at the displaced `y`, minus the
    /// source's bounded terms at the reference `y`.
    fn shifted_rhs(&self, direction: TildeDirection, reference: Arc<RefSolution>) -> RhsFn {
        let f = self.sys.f.clone();
        let g = self.sys.g.clone();
        let phi = self.sys.phi.clone();
        let psi = self.sys.psi.clone();
        let (n1, n2) = (self.sys.n1, self.sys.n2);
        let grid = self.sys.grid.clone();
        Arc::new(move |s: f64, z: &DVector<f64>, w: &DVector<f64>| {
            let gamma_s = grid.gamma(s).unwrap_or(s);
            let ref_now = reference.eval(s);
            let ref_gamma = reference.eval(gamma_s);
            let xr = ref_now.rows(0, n1).into_owned();
            let xr_g = ref_gamma.rows(0, n1).into_owned();
            let yr = ref_now.rows(n1, n2).into_owned();
            let yr_g = ref_gamma.rows(n1, n2).into_owned();
            let z1 = z.rows(0, n1).into_owned();
            let w1 = w.rows(0, n1).into_owned();
            let z2 = z.rows(n1, n2).into_owned();
            let w2 = w.rows(n1, n2).into_owned();

            let mut top = f.eval(s, &(&xr + &z1), &(&xr_g + &w1)) - f.eval(s, &xr, &xr_g);
            let mut bottom = g.eval(s, &(&xr + &z1), &(&xr_g + &w1)) - g.eval(s, &xr, &xr_g);
            match direction {
                TildeDirection::TowardIntermediate => {
                    // target has no bounded terms; subtract the source's
                    top -= phi.eval(s, &yr, &yr_g);
                    bottom -= psi.eval(s, &yr, &yr_g);
                }
                TildeDirection::TowardFull => {
                    // target carries the bounded terms at the displaced state
                    top += phi.eval(s, &(&yr + &z2), &(&yr_g + &w2));
                    bottom += psi.eval(s, &(&yr + &z2), &(&yr_g + &w2));
                }
            }
            let mut out = DVector::zeros(n1 + n2);
            out.rows_mut(0, n1).copy_from(&top);
            out.rows_mut(n1, n2).copy_from(&bottom);
            out
        })
    }
}

fn cache_key(direction: TildeDirection, t: f64, z: &DVector<f64>) -> super::ChiCacheKey {
    let tag = match direction {
        TildeDirection::TowardIntermediate => 0u8,
        TildeDirection::TowardFull => 1u8,
    };
    let quantize = |x: f64| (x / 1e-12).round() as i64;
    let mut coords = Vec::with_capacity(z.len() + 1);
    coords.push(quantize(t));
    coords.extend(z.iter().map(|&x| quantize(x)));
    (tag, coords)
}
