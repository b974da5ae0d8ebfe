//! Residual-based verification of the conjugacy construction: round trips,
//! solution mapping along flows, crossing-time identities, continuity
//! probes near zero, and the displacement bounds.

use super::{Conjugacy, ConjugacyError, COMPOSED_ROUNDTRIP_TOL, STAGE_ROUNDTRIP_TOL};
use crate::odeint::vec_norm;
use crate::solve::solve_ivp;
use nalgebra::DVector;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct ReportOptions {
    /// states per axis of the evaluation grid
    pub grid_n: usize,
    /// half-width of the state grid
    pub radius: f64,
    /// dynamics checks run from 0 to this horizon
    pub dynamics_span: f64,
    /// number of check times inside the span
    pub dynamics_samples: usize,
    /// flow times for the crossing-time invariance checks
    pub flow_times: Vec<f64>,
    /// initial states for the composed dynamics check
    pub dynamics_states: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            grid_n: 5,
            radius: 3.0,
            dynamics_span: 5.0,
            dynamics_samples: 5,
            flow_times: vec![0.3, 1.7, 2.4, 3.6, 5.0],
            dynamics_states: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConjugacyReport {
    pub hypotheses_pass: bool,
    pub grid_points: usize,
    pub stage_roundtrip_tol: f64,
    pub composed_roundtrip_tol: f64,
    /// `max |L(t, H(t,z)) - z|` over the state grid
    pub roundtrip_l_of_h: f64,
    /// `max |H(t, L(t,z)) - z|`
    pub roundtrip_h_of_l: f64,
    /// `max |Ltilde(t, Htilde(t,z)) - z|`
    pub roundtrip_ltilde_of_htilde: f64,
    /// `max |Htilde(t, Ltilde(t,z)) - z|`
    pub roundtrip_htilde_of_ltilde: f64,
    pub roundtrip_composed_toward_linear: f64,
    pub roundtrip_composed_toward_nonlinear: f64,
    pub roundtrips_pass: bool,
    /// solution-mapping defects along flows
    pub dynamics_h: f64,
    pub dynamics_l: f64,
    pub dynamics_htilde: f64,
    pub dynamics_ltilde: f64,
    pub dynamics_composed: f64,
    pub dynamics_pass: bool,
    /// crossing-time identities
    pub crossing_invariance_t: f64,
    pub crossing_invariance_s: f64,
    pub crossing_duality: f64,
    /// trajectory-norm decay envelope violations (negative = margin)
    pub decay_margin: f64,
    pub decay_pass: bool,
    /// `|H1(0, 1e-k e1)|` for k = 1..6, must decrease
    pub continuity_h1: Vec<f64>,
    pub continuity_l1: Vec<f64>,
    pub continuity_monotone: bool,
    /// displacement bounds
    pub sigma_bar: f64,
    pub displacement_htilde_max: f64,
    pub displacement_ltilde_max: f64,
    pub h2_bound_coeff: f64,
    /// `max |H2 - y| - coeff |x|` over the grid (negative = bound holds)
    pub h2_displacement_margin: f64,
    pub displacement_pass: bool,
    pub pass: bool,
}

impl Conjugacy<'_> {
    /// Runs the full verification suite on a state grid at `t = 0`.
    pub fn report(&self, opts: &ReportOptions) -> Result<ConjugacyReport, ConjugacyError> {
        self.require_hypotheses()?;
        let grid_states = self.state_grid(opts.grid_n, opts.radius);
        let t0 = 0.0;

        let mut rt_lh = 0.0_f64;
        let mut rt_hl = 0.0_f64;
        let mut rt_tilde_lh = 0.0_f64;
        let mut rt_tilde_hl = 0.0_f64;
        let mut rt_comp_lin = 0.0_f64;
        let mut rt_comp_nonlin = 0.0_f64;
        let mut disp_h = 0.0_f64;
        let mut disp_l = 0.0_f64;
        let mut h2_margin = f64::NEG_INFINITY;
        let sigma_bar = self.tilde_sigma_bar();
        let h2_coeff = self.hypotheses().derived_value("h2_bound_coeff").unwrap();

        for z in &grid_states {
            let h = self.map_h(t0, z)?;
            rt_lh = rt_lh.max(vec_norm(&(self.map_l(t0, &h)? - z)));
            let l = self.map_l(t0, z)?;
            rt_hl = rt_hl.max(vec_norm(&(self.map_h(t0, &l)? - z)));

            let ht = self.map_htilde(t0, z)?;
            rt_tilde_lh = rt_tilde_lh.max(vec_norm(&(self.map_ltilde(t0, &ht)? - z)));
            let lt = self.map_ltilde(t0, z)?;
            rt_tilde_hl = rt_tilde_hl.max(vec_norm(&(self.map_htilde(t0, &lt)? - z)));

            let fwd = self.toward_linear(t0, z)?;
            rt_comp_lin = rt_comp_lin.max(vec_norm(&(self.toward_nonlinear(t0, &fwd)? - z)));
            let bwd = self.toward_nonlinear(t0, z)?;
            rt_comp_nonlin = rt_comp_nonlin.max(vec_norm(&(self.toward_linear(t0, &bwd)? - z)));

            disp_h = disp_h.max(vec_norm(&(&ht - z)));
            disp_l = disp_l.max(vec_norm(&(&lt - z)));
            let (x, y) = self.split(z);
            let h2 = h.rows(self.sys.n1, self.sys.n2).into_owned();
            h2_margin = h2_margin.max(vec_norm(&(h2 - y)) - h2_coeff * vec_norm(&x));
        }

        let (dyn_h, dyn_l, dyn_ht, dyn_lt, dyn_comp) = self.dynamics_defects(opts)?;

        let (inv_t, inv_s, duality) = self.crossing_identities(opts)?;
        let (decay_margin, decay_pass) = self.decay_check(opts)?;

        let mut continuity_h1 = Vec::new();
        let mut continuity_l1 = Vec::new();
        for k in 1..=6 {
            let mut x = DVector::zeros(self.sys.n1);
            x[0] = 10f64.powi(-k);
            continuity_h1.push(vec_norm(&self.map_h1(t0, &x)?));
            continuity_l1.push(vec_norm(&self.map_l1(t0, &x)?));
        }
        let continuity_monotone = continuity_h1.windows(2).all(|w| w[1] < w[0])
            && continuity_l1.windows(2).all(|w| w[1] < w[0]);

        let roundtrips_pass = rt_lh <= STAGE_ROUNDTRIP_TOL
            && rt_hl <= STAGE_ROUNDTRIP_TOL
            && rt_tilde_lh <= STAGE_ROUNDTRIP_TOL
            && rt_tilde_hl <= STAGE_ROUNDTRIP_TOL
            && rt_comp_lin <= COMPOSED_ROUNDTRIP_TOL
            && rt_comp_nonlin <= COMPOSED_ROUNDTRIP_TOL;
        let dynamics_pass = dyn_h.max(dyn_l).max(dyn_comp) <= COMPOSED_ROUNDTRIP_TOL
            && dyn_ht.max(dyn_lt) <= COMPOSED_ROUNDTRIP_TOL;
        let displacement_pass =
            disp_h <= sigma_bar && disp_l <= sigma_bar && h2_margin <= 0.0;
        let pass = roundtrips_pass
            && dynamics_pass
            && displacement_pass
            && continuity_monotone
            && decay_pass;

        Ok(ConjugacyReport {
            hypotheses_pass: true,
            grid_points: grid_states.len(),
            stage_roundtrip_tol: STAGE_ROUNDTRIP_TOL,
            composed_roundtrip_tol: COMPOSED_ROUNDTRIP_TOL,
            roundtrip_l_of_h: rt_lh,
            roundtrip_h_of_l: rt_hl,
            roundtrip_ltilde_of_htilde: rt_tilde_lh,
            roundtrip_htilde_of_ltilde: rt_tilde_hl,
            roundtrip_composed_toward_linear: rt_comp_lin,
            roundtrip_composed_toward_nonlinear: rt_comp_nonlin,
            roundtrips_pass,
            dynamics_h: dyn_h,
            dynamics_l: dyn_l,
            dynamics_htilde: dyn_ht,
            dynamics_ltilde: dyn_lt,
            dynamics_composed: dyn_comp,
            dynamics_pass,
            crossing_invariance_t: inv_t,
            crossing_invariance_s: inv_s,
            crossing_duality: duality,
            decay_margin,
            decay_pass,
            continuity_h1,
            continuity_l1,
            continuity_monotone,
            sigma_bar,
            displacement_htilde_max: disp_h,
            displacement_ltilde_max: disp_l,
            h2_bound_coeff: h2_coeff,
            h2_displacement_margin: h2_margin,
            displacement_pass,
            pass,
        })
    }

    /// Uniform grid of full states in `[-radius, radius]^2` (x- and y-norms).
    pub fn state_grid(&self, n: usize, radius: f64) -> Vec<DVector<f64>> {
        let axis: Vec<f64> = (0..n)
            .map(|k| -radius + 2.0 * radius * k as f64 / (n - 1).max(1) as f64)
            .collect();
        let mut out = Vec::with_capacity(n * n);
        for &xv in &axis {
            for &yv in &axis {
                let mut z = DVector::zeros(self.sys.dim());
                z[0] = xv;
                z[self.sys.n1] = yv;
                out.push(z);
            }
        }
        out
    }

    fn dynamics_times(&self, opts: &ReportOptions) -> Vec<f64> {
        (1..=opts.dynamics_samples)
            .map(|k| opts.dynamics_span * k as f64 / opts.dynamics_samples as f64)
            .collect()
    }

    #[allow(clippy::type_complexity)]
    fn dynamics_defects(
        &self,
        opts: &ReportOptions,
    ) -> Result<(f64, f64, f64, f64, f64), ConjugacyError> {
        let times = self.dynamics_times(opts);
        let lin = self.sys.full_linear();
        let rhs_full = self.sys.full_rhs(true);
        let rhs_mid = self.sys.full_rhs(false);
        let starts: Vec<DVector<f64>> = self
            .state_grid(opts.dynamics_states, 2.0)
            .into_iter()
            .filter(|z| vec_norm(z) > 0.1)
            .take(opts.dynamics_states)
            .collect();
        let t_end = opts.dynamics_span;

        let mut dyn_h = 0.0_f64;
        let mut dyn_l = 0.0_f64;
        let mut dyn_ht = 0.0_f64;
        let mut dyn_lt = 0.0_f64;
        let mut dyn_comp = 0.0_f64;
        for z0 in &starts {
            // intermediate-system flow mapped by the radial map vs linear flow
            let mid_flow = solve_ivp(&lin, Some(&rhs_mid), 0.0, z0, t_end, &self.numerics)?;
            let h0 = self.map_h(0.0, z0)?;
            for &t in &times {
                let lhs = self.map_h(t, &mid_flow.eval(t))?;
                let rhs = self.w_op.transition_z(t, 0.0)? * &h0;
                dyn_h = dyn_h.max(vec_norm(&(lhs - rhs)));
            }

            // linear flow mapped back vs intermediate-system flow
            let l0 = self.map_l(0.0, z0)?;
            let mid_from_l0 = solve_ivp(&lin, Some(&rhs_mid), 0.0, &l0, t_end, &self.numerics)?;
            for &t in &times {
                let zeta_t = self.w_op.transition_z(t, 0.0)? * z0;
                let lhs = self.map_l(t, &zeta_t)?;
                dyn_l = dyn_l.max(vec_norm(&(lhs - mid_from_l0.eval(t))));
            }

            // full-system flow mapped into the intermediate system
            let full_flow = solve_ivp(&lin, Some(&rhs_full), 0.0, z0, t_end, &self.numerics)?;
            let ht0 = self.map_htilde(0.0, z0)?;
            let mid_from_ht0 = solve_ivp(&lin, Some(&rhs_mid), 0.0, &ht0, t_end, &self.numerics)?;
            for &t in &times {
                let lhs = self.map_htilde(t, &full_flow.eval(t))?;
                dyn_ht = dyn_ht.max(vec_norm(&(lhs - mid_from_ht0.eval(t))));
            }

            // intermediate-system flow mapped into the full system
            let lt0 = self.map_ltilde(0.0, z0)?;
            let full_from_lt0 = solve_ivp(&lin, Some(&rhs_full), 0.0, &lt0, t_end, &self.numerics)?;
            for &t in &times {
                let lhs = self.map_ltilde(t, &mid_flow.eval(t))?;
                dyn_lt = dyn_lt.max(vec_norm(&(lhs - full_from_lt0.eval(t))));
            }

            // composed conjugacy along full-system solutions vs the linear flow
            let comp0 = self.toward_linear(0.0, z0)?;
            for &t in &times {
                let lhs = self.toward_linear(t, &full_flow.eval(t))?;
                let rhs = self.w_op.transition_z(t, 0.0)? * &comp0;
                dyn_comp = dyn_comp.max(vec_norm(&(lhs - rhs)));
            }
        }
        Ok((dyn_h, dyn_l, dyn_ht, dyn_lt, dyn_comp))
    }

    fn crossing_identities(
        &self,
        opts: &ReportOptions,
    ) -> Result<(f64, f64, f64), ConjugacyError> {
        let mut x0 = DVector::zeros(self.sys.n1);
        x0[0] = 2.2;
        let mut inv_t = 0.0_f64;
        let mut inv_s = 0.0_f64;
        let t_base = self.crossing_time_t(0.0, &x0)?.value;
        let s_base = self.crossing_time_s(0.0, &x0)?.value;
        let far = opts
            .flow_times
            .iter()
            .fold(0.0_f64, |acc, &t| acc.max(t.abs()));
        let flow = self.x_flow(0.0, &x0, far.max(1.0))?;
        for &t in &opts.flow_times {
            let xt = flow.eval(t);
            inv_t = inv_t.max((self.crossing_time_t(t, &xt)?.value - t_base).abs());
            let ut = self.x_op.transition_z(t, 0.0)? * &x0;
            inv_s = inv_s.max((self.crossing_time_s(t, &ut)?.value - s_base).abs());
        }

        // duality: the linear crossing time of the mapped state equals the
        // nonlinear crossing time of the original
        let mut duality = 0.0_f64;
        for xv in [-2.5, -0.6, 0.4, 1.8, 3.0] {
            let mut x = DVector::zeros(self.sys.n1);
            x[0] = xv;
            let t_cross = self.crossing_time_t(0.0, &x)?.value;
            let h1 = self.map_h1(0.0, &x)?;
            let s_cross = self.crossing_time_s(0.0, &h1)?.value;
            duality = duality.max((s_cross - t_cross).abs());
        }
        Ok((inv_t, inv_s, duality))
    }

    fn decay_check(&self, opts: &ReportOptions) -> Result<(f64, bool), ConjugacyError> {
        // |X(t, t0, x0)| <= |x0| e^{-alpha0 (t - t0)} on sampled trajectories
        let mut margin = f64::NEG_INFINITY;
        for xv in [0.5, -1.5, 3.0] {
            let mut x0 = DVector::zeros(self.sys.n1);
            x0[0] = xv;
            let flow = self.x_flow(0.0, &x0, opts.dynamics_span)?;
            for k in 0..=40 {
                let t = opts.dynamics_span * k as f64 / 40.0;
                let envelope = xv.abs() * (-self.alpha0 * t).exp();
                margin = margin.max(vec_norm(&flow.eval(t)) - envelope);
            }
        }
        Ok((margin, margin <= 1e-9))
    }
}
