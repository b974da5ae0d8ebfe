//! The radial maps between the intermediate system and the linear one.
//!
//! The first component rides the flow to the unit sphere and transports back
//! with the other system's flow; the second adds or subtracts the improper
//! integral of the expanding-block kernel against the coupling term, with one
//! shared forward solve of the `x`-subsystem feeding every quadrature node.

use super::{Conjugacy, ConjugacyError};
use crate::odeint::{simpson_nodes, vec_norm};
use crate::solve::{solve_ivp, Trajectory};
use crate::transition::SegBase;
use nalgebra::DVector;

impl Conjugacy<'_> {
    /// Map from intermediate-system states to linear-system states.
    pub fn map_h(&self, t: f64, z: &DVector<f64>) -> Result<DVector<f64>, ConjugacyError> {
        let (x, y) = self.split(z);
        let h1 = self.map_h1(t, &x)?;
        let h2 = y + self.coupling_tail(t, &x)?;
        Ok(self.join(&h1, &h2))
    }

    /// First component: `u(t, T(t,x), X(T(t,x), t, x))`, zero at zero.
    pub fn map_h1(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>, ConjugacyError> {
        self.require_hypotheses()?;
        if vec_norm(x) == 0.0 {
            return Ok(DVector::zeros(self.sys.n1));
        }
        let crossing = match self.crossing_time_t(t, x) {
            Ok(c) => c,
            // a backward bracket that exhausts the window means the crossing
            // lies before t_min, so |Z_1(t, T*)| <= e^{-alpha (t - t_min)}
            // bounds the image below numerical resolution: extend by zero
            Err(ConjugacyError::BracketExceedsWindow { t: edge })
                if edge <= self.sys.grid.t_min() =>
            {
                return Ok(DVector::zeros(self.sys.n1));
            }
            Err(e) => return Err(e),
        };
        let t_star = crossing.value;
        let x_star = if t_star == t {
            x.clone()
        } else {
            let lin = self.sys.x_linear();
            let rhs = self.sys.x_rhs();
            solve_ivp(&lin, Some(&rhs), t, x, t_star, &self.numerics)?.eval(t_star)
        };
        Ok(self.x_op.transition_z(t, t_star)? * x_star)
    }

    /// Map from linear-system states to intermediate-system states.
    pub fn map_l(&self, t: f64, z: &DVector<f64>) -> Result<DVector<f64>, ConjugacyError> {
        let (xi, eta) = self.split(z);
        let l1 = self.map_l1(t, &xi)?;
        let l2 = eta - self.coupling_tail(t, &l1)?;
        Ok(self.join(&l1, &l2))
    }

    /// First component: `X(t, S(t,xi), u(S(t,xi), t, xi))`, zero at zero.
    pub fn map_l1(&self, t: f64, xi: &DVector<f64>) -> Result<DVector<f64>, ConjugacyError> {
        self.require_hypotheses()?;
        if vec_norm(xi) == 0.0 {
            return Ok(DVector::zeros(self.sys.n1));
        }
        let crossing = match self.crossing_time_s(t, xi) {
            Ok(c) => c,
            // as in the forward map: |X(t, S*, .)| <= e^{-alpha0 (t - t_min)}
            // once the crossing lies before the window, so extend by zero
            Err(ConjugacyError::BracketExceedsWindow { t: edge })
                if edge <= self.sys.grid.t_min() =>
            {
                return Ok(DVector::zeros(self.sys.n1));
            }
            Err(e) => return Err(e),
        };
        let s_star = crossing.value;
        let u_star = self.x_op.transition_z(s_star, t)? * xi;
        if s_star == t {
            return Ok(u_star);
        }
        let lin = self.sys.x_linear();
        let rhs = self.sys.x_rhs();
        Ok(solve_ivp(&lin, Some(&rhs), s_star, &u_star, t, &self.numerics)?.eval(t))
    }

    /// The improper integral `int_t^inf G_2(t,s) g(s, X(s,t,x), X(gamma(s),t,x)) ds`
    /// truncated at the horizon where the integrand's exponential-decay
    /// envelope drops below `tail_tol`.
    pub(crate) fn coupling_tail(
        &self,
        t: f64,
        x: &DVector<f64>,
    ) -> Result<DVector<f64>, ConjugacyError> {
        self.require_hypotheses()?;
        let n2 = self.sys.n2;
        let x_norm = vec_norm(x);
        if x_norm == 0.0 {
            // X(s, t, 0) = 0 and the coupling vanishes at zero
            return Ok(DVector::zeros(n2));
        }
        let grid = &self.sys.grid;
        let d = &self.dich;
        let alpha = d.alpha;
        let alpha0 = self.alpha0;
        // |G_2(t,s) g(s)| <= K rho~(B) lambda (1 + (1-theta_bar) e^{alpha0 theta}) |x| e^{-(alpha+alpha0)(s-t)}
        let rho_tilde_b = self.hypotheses().derived_value("rho_tilde_B").unwrap();
        let amp = d.big_k
            * self.sys.lambda
            * rho_tilde_b
            * (1.0 + (1.0 - self.theta_bar) * (alpha0 * grid.theta()).exp())
            * x_norm;
        let rate = alpha + alpha0;
        let horizon = if amp <= 0.0 {
            0.0
        } else {
            (amp / (rate * self.numerics.tail_tol)).ln().max(0.0) / rate
        };
        let s_end = t + horizon;
        if s_end > grid.t_max() {
            return Err(ConjugacyError::HorizonExceedsWindow { horizon });
        }
        if horizon == 0.0 {
            return Ok(DVector::zeros(n2));
        }

        // one shared x-subsystem solve covering all quadrature nodes and
        // their frozen arguments: forward beyond s_end to the next knot,
        // backward to the current anchor when it lies behind t
        let lin = self.sys.x_linear();
        let rhs = self.sys.x_rhs();
        let j = grid.interval_of(t)?;
        let fwd_end = grid.t_max().min(grid.knot(grid.interval_of(s_end)? + 1));
        let fwd = solve_ivp(&lin, Some(&rhs), t, x, fwd_end, &self.numerics)?;
        let bwd = if grid.anchor(j) < t {
            Some(solve_ivp(&lin, Some(&rhs), t, x, grid.anchor(j), &self.numerics)?)
        } else {
            None
        };
        let x_at = |s: f64| -> DVector<f64> {
            match (&bwd, s < t) {
                (Some(b), true) => b.eval(s),
                _ => fwd.eval(s),
            }
        };

        let hq = (4.0 * self.numerics.ode_step).min(grid.theta() / 8.0);
        let segs = self.y_op.tail_path(t, s_end)?;
        let mut acc = DVector::zeros(n2);
        let mut z2: Option<(usize, nalgebra::DMatrix<f64>)> = None;
        for seg in &segs {
            // Z_2(t, base), extended knot by knot as the path walks right
            let z2_factor = match seg.base {
                SegBase::Eval => None,
                SegBase::Knot(k) => {
                    let mat = match z2.take() {
                        None => self.y_op.transition_z(t, grid.knot(k))?,
                        Some((prev_k, mut m)) => {
                            for r in prev_k..k {
                                m *= &self.y_op_step_bwd(r)?;
                            }
                            m
                        }
                    };
                    z2 = Some((k, mat.clone()));
                    Some(mat)
                }
                SegBase::Tau(_) => unreachable!("tail paths carry no tau segments"),
            };
            let nodes = simpson_nodes(seg.from, seg.to, hq);
            if nodes.is_empty() {
                continue;
            }
            let base_time = self.y_op.seg_base_time(t, &seg.base);
            // phi ordered from the base endpoint outward
            let times: Vec<f64> = nodes.iter().map(|(s, _)| *s).collect();
            let base_at_start = (base_time - seg.from).abs() <= (base_time - seg.to).abs();
            let phis = if base_at_start {
                self.y_op.phi_second_arg(base_time, &times)?
            } else {
                let rev: Vec<f64> = times.iter().rev().copied().collect();
                let mut phis = self.y_op.phi_second_arg(base_time, &rev)?;
                phis.reverse();
                phis
            };
            let mut seg_sum = DVector::zeros(n2);
            for ((s, w), phi) in nodes.into_iter().zip(phis) {
                let xs = x_at(s);
                let x_gamma = x_at(grid.gamma(s)?);
                let g_val = self.sys.g.eval(s, &xs, &x_gamma);
                seg_sum += phi * g_val * w;
            }
            acc += match &z2_factor {
                Some(m) => m * seg_sum,
                None => seg_sum,
            };
        }
        Ok(acc)
    }

    fn y_op_step_bwd(&self, r: usize) -> Result<nalgebra::DMatrix<f64>, ConjugacyError> {
        Ok(self.y_op.factors(r)?.step_bwd.clone())
    }

    /// The nonlinear `x`-subsystem trajectory through `(t0, x0)`, exposed for
    /// verification runs.
    pub fn x_flow(
        &self,
        t0: f64,
        x0: &DVector<f64>,
        t_end: f64,
    ) -> Result<Trajectory, ConjugacyError> {
        let lin = self.sys.x_linear();
        let rhs = self.sys.x_rhs();
        Ok(solve_ivp(&lin, Some(&rhs), t0, x0, t_end, &self.numerics)?)
    }
}
