//! Crossing times: the unique time at which a trajectory with strictly
//! decreasing norm reaches the unit sphere. Brackets are found by geometric
//! expansion from the base time, then narrowed by bisection (monotonicity of
//! the norm justifies it; no derivatives needed).

use super::{Conjugacy, ConjugacyError};
use crate::odeint::vec_norm;
use crate::solve::solve_ivp;
use nalgebra::DVector;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CrossingTime {
    pub value: f64,
    pub bracket: (f64, f64),
    /// `| |X(value)| - 1 |`
    pub residual: f64,
}

const MAX_BISECTIONS: usize = 200;

impl Conjugacy<'_> {
    /// Crossing time of the nonlinear `x`-subsystem flow through `(t0, x0)`.
    pub fn crossing_time_t(
        &self,
        t0: f64,
        x0: &DVector<f64>,
    ) -> Result<CrossingTime, ConjugacyError> {
        self.require_hypotheses()?;
        let lin = self.sys.x_linear();
        let rhs = self.sys.x_rhs();
        let numerics = self.numerics.clone();
        let norm_at = move |q: f64| -> Result<f64, ConjugacyError> {
            if q == t0 {
                return Ok(vec_norm(x0));
            }
            let traj = solve_ivp(&lin, Some(&rhs), t0, x0, q, &numerics)?;
            Ok(vec_norm(&traj.eval(q)))
        };
        self.crossing_time(t0, vec_norm(x0), &norm_at)
    }

    /// Crossing time of the linear `x`-block flow through `(t0, xi)`.
    pub fn crossing_time_s(
        &self,
        t0: f64,
        xi: &DVector<f64>,
    ) -> Result<CrossingTime, ConjugacyError> {
        self.require_hypotheses()?;
        let norm_at = |q: f64| -> Result<f64, ConjugacyError> {
            Ok(vec_norm(&(self.x_op.transition_z(q, t0)? * xi)))
        };
        self.crossing_time(t0, vec_norm(xi), &norm_at)
    }

    fn crossing_time(
        &self,
        t0: f64,
        norm0: f64,
        norm_at: &dyn Fn(f64) -> Result<f64, ConjugacyError>,
    ) -> Result<CrossingTime, ConjugacyError> {
        if norm0 == 0.0 {
            return Err(ConjugacyError::ZeroState);
        }
        let tol = self.numerics.crossing_tol;
        if (norm0 - 1.0).abs() <= tol {
            return Ok(CrossingTime {
                value: t0,
                bracket: (t0, t0),
                residual: (norm0 - 1.0).abs(),
            });
        }
        let grid = self.sys.grid.clone();
        // the norm decreases in time: expand forward while it stays above 1,
        // backward while it stays below
        let going_forward = norm0 > 1.0;
        let mut step = grid.theta();
        let (mut lo, mut hi) = (t0, t0);
        loop {
            // clamp probes to the window; only fail once the window edge
            // itself does not bracket the crossing
            let probe = if going_forward {
                (hi + step).min(grid.t_max())
            } else {
                (lo - step).max(grid.t_min())
            };
            let at_edge = probe == grid.t_max() || probe == grid.t_min();
            let norm_far = norm_at(probe)?;
            if going_forward {
                if norm_far <= 1.0 {
                    lo = hi;
                    hi = probe;
                    break;
                }
                hi = probe;
            } else {
                if norm_far >= 1.0 {
                    hi = lo;
                    lo = probe;
                    break;
                }
                lo = probe;
            }
            if at_edge {
                return Err(ConjugacyError::BracketExceedsWindow { t: probe });
            }
            step *= 2.0;
        }
        // bracket: norm(lo) >= 1 >= norm(hi)
        let bracket = (lo, hi);
        let mut best = (lo, (norm_at(lo)? - 1.0).abs());
        for iteration in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            let nm = norm_at(mid)?;
            let residual = (nm - 1.0).abs();
            if residual < best.1 {
                best = (mid, residual);
            }
            if residual <= tol {
                return Ok(CrossingTime {
                    value: mid,
                    bracket,
                    residual,
                });
            }
            if nm > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo).abs() < f64::EPSILON * mid.abs().max(1.0) {
                if best.1 <= tol {
                    return Ok(CrossingTime {
                        value: best.0,
                        bracket,
                        residual: best.1,
                    });
                }
                return Err(ConjugacyError::CrossingFailed {
                    residual: best.1,
                    iterations: iteration + 1,
                });
            }
        }
        Err(ConjugacyError::CrossingFailed {
            residual: best.1,
            iterations: MAX_BISECTIONS,
        })
    }
}
