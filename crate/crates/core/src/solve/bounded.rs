//! The unique bounded solution by contraction iteration.
//!
//! The integral operator is evaluated through per-piece moments: each grid
//! interval contributes the pieces `[t_r, zeta_r]` (kernel base `t_r`) and
//! `[zeta_r, t_{r+1}]` (kernel base `t_{r+1}`). Pieces at or below the
//! evaluation interval enter through the stable projection, pieces above it
//! through the complement with a minus sign, and the stretch between the
//! current anchor and the evaluation time enters as an oriented local
//! integral. Prefix sums over the piece moments make one sweep of the
//! operator linear in the number of quadrature nodes.

use super::{SampledFunction, SolveError};
use crate::model::{DichotomySpec, NumericsConfig, RhsFn};
use crate::odeint::{rk4_step_vec, simpson_nodes, substeps, vec_norm};
use crate::transition::TransitionOperator;
use crate::verify::{check_theorem1, GrowthConstants};
use nalgebra::{DMatrix, DVector};

/// A bounded-solution problem: linear part (through its transition
/// operator), dichotomy data, nonlinearity and its declared constants.
pub struct BoundedProblem<'a> {
    pub op: &'a TransitionOperator,
    pub dich: &'a DichotomySpec,
    pub rhs: RhsFn,
    pub growth_r: f64,
    pub offset_mu: f64,
    pub lipschitz_l: f64,
}

/// The computed fixed point. Values are reliable (within `tail_tol` of the
/// untruncated operator) on the `core` sub-window; the `residual` is the
/// re-evaluated operator defect over that region at half the quadrature step.
#[derive(Debug, Clone)]
pub struct BoundedSolution {
    pub phi0: SampledFunction,
    pub sigma: f64,
    pub residual: f64,
    pub iterations: usize,
    pub core: (f64, f64),
    pub horizon: f64,
}

pub fn bounded_solution(
    p: &BoundedProblem,
    growth: &GrowthConstants,
    numerics: &NumericsConfig,
) -> Result<BoundedSolution, SolveError> {
    bounded_solution_from(p, growth, numerics, None)
}

/// As [`bounded_solution`] but with an explicit starting function (used by
/// the uniqueness probe).
pub fn bounded_solution_from(
    p: &BoundedProblem,
    growth: &GrowthConstants,
    numerics: &NumericsConfig,
    init: Option<&DVector<f64>>,
) -> Result<BoundedSolution, SolveError> {
    let report = check_theorem1(
        growth,
        p.dich.big_k,
        p.dich.alpha,
        p.growth_r,
        p.offset_mu,
        p.lipschitz_l,
    );
    if !report.pass {
        let key = report
            .entries
            .iter()
            .find(|e| !e.pass)
            .map(|e| e.key.clone())
            .unwrap_or_default();
        return Err(SolveError::HypothesisFailed { check: key });
    }
    let sigma = report
        .derived_value("sigma")
        .expect("sigma defined when the denominator check passes");

    let grid = p.op.grid();
    let alpha = p.dich.alpha;
    let amp = p.dich.big_k * growth.rho_tilde * (2.0 * p.growth_r * sigma + p.offset_mu);
    let horizon = if amp <= 0.0 {
        0.0
    } else {
        (amp / (alpha * numerics.tail_tol)).ln().max(0.0) / alpha
    };
    let core = (grid.t_min() + horizon, grid.t_max() - horizon);
    if core.0 > core.1 {
        return Err(SolveError::WindowTooSmall {
            needed: 2.0 * horizon,
            window: (grid.t_min(), grid.t_max()),
        });
    }

    let evaluator = PicardOperator::build(p, numerics, 1.0)?;
    let dim = p.op.dim();
    let mut phi = match init {
        Some(v) => SampledFunction::constant(evaluator.t0, evaluator.dt, evaluator.count, v),
        None => SampledFunction::zeros(evaluator.t0, evaluator.dt, evaluator.count, dim),
    };
    let mut iterations = 0usize;
    let mut converged = false;
    let mut last_diff = f64::INFINITY;
    while iterations < numerics.max_iters {
        iterations += 1;
        let next = evaluator.apply(&phi)?;
        let mut arg = 0usize;
        last_diff = 0.0;
        for (i, (a, b)) in next.iter().zip(phi.values()).enumerate() {
            let d = vec_norm(&(a - b));
            if d > last_diff {
                last_diff = d;
                arg = i;
            }
        }
        if std::env::var_os("DEPCAG_PICARD_TRACE").is_some() {
            eprintln!(
                "picard iter {iterations}: diff {last_diff:.3e} at t={:.4} value {:?} -> {:?}",
                evaluator.t0 + arg as f64 * evaluator.dt,
                phi.values()[arg].as_slice(),
                next[arg].as_slice()
            );
        }
        phi = SampledFunction::new(evaluator.t0, evaluator.dt, next);
        if last_diff <= numerics.picard_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SolveError::PicardDiverged {
            iterations,
            residual: last_diff,
        });
    }

    // post-hoc residual at half the quadrature step, over the core region
    let fine = PicardOperator::build(p, numerics, 0.5)?;
    let t_phi = fine.apply(&phi)?;
    let mut residual = 0.0_f64;
    for (k, value) in t_phi.iter().enumerate() {
        let t = fine.t0 + k as f64 * fine.dt;
        if t >= core.0 && t <= core.1 {
            residual = residual.max(vec_norm(&(value - &phi.values()[k])));
        }
    }

    Ok(BoundedSolution {
        phi0: phi,
        sigma,
        residual,
        iterations,
        core,
        horizon,
    })
}

struct QuadNode {
    s: f64,
    w: f64,
    /// `Z(0, base) Phi(base, s)`
    pre: DMatrix<f64>,
}

struct Piece {
    /// anchor of the owning interval (the frozen-argument value on the piece)
    gamma: f64,
    nodes: Vec<QuadNode>,
}

struct PicardOperator<'a> {
    p: &'a BoundedProblem<'a>,
    t0: f64,
    dt: f64,
    count: usize,
    pieces: Vec<Piece>,
    /// per interval: number of pieces up to and including `[t_r, zeta_r]`
    pos_after_a: Vec<usize>,
    /// per sample: `Z(t_k, 0) P` and `Z(t_k, 0)(I - P)`
    zp: Vec<DMatrix<f64>>,
    zq: Vec<DMatrix<f64>>,
    sample_interval: Vec<usize>,
    h_local: f64,
}

impl<'a> PicardOperator<'a> {
    fn build(
        p: &'a BoundedProblem<'a>,
        numerics: &NumericsConfig,
        refine: f64,
    ) -> Result<Self, SolveError> {
        let op = p.op;
        let grid = op.grid();
        let span = grid.t_max() - grid.t_min();
        let step = numerics.sample_step(grid.theta());
        let count = (span / step).ceil().max(1.0) as usize + 1;
        let dt = span / (count - 1) as f64;
        let t0 = grid.t_min();
        let hq = dt * refine;
        let n = op.dim();

        // Z(0, t_r) by the backward recurrence across interval factors
        let intervals = grid.num_intervals();
        let mut z_from_knot = Vec::with_capacity(intervals + 1);
        z_from_knot.push(op.transition_z(0.0, grid.t_min())?);
        for r in 0..intervals {
            let f = op.factors(r)?;
            let prev: &DMatrix<f64> = &z_from_knot[r];
            z_from_knot.push(prev * &f.step_bwd);
        }
        // Z(t_r, 0) by the forward recurrence
        let mut z_to_knot = Vec::with_capacity(intervals + 1);
        z_to_knot.push(op.transition_z(grid.t_min(), 0.0)?);
        for r in 0..intervals {
            let f = op.factors(r)?;
            let prev: &DMatrix<f64> = &z_to_knot[r];
            z_to_knot.push(&f.step_fwd * prev);
        }

        let mut pieces = Vec::with_capacity(2 * intervals);
        let mut pos_after_a = Vec::with_capacity(intervals);
        for r in 0..intervals {
            let (a, b) = grid.interval(r);
            let zeta = grid.anchor(r);
            if zeta > a {
                pieces.push(build_piece(op, a, zeta, &z_from_knot[r], zeta, hq, false)?);
            }
            pos_after_a.push(pieces.len());
            if b > zeta {
                pieces.push(build_piece(op, zeta, b, &z_from_knot[r + 1], zeta, hq, true)?);
            }
        }

        let identity = DMatrix::<f64>::identity(n, n);
        let complement = p.dich.complement();
        let mut zp = Vec::with_capacity(count);
        let mut zq = Vec::with_capacity(count);
        let mut sample_interval = Vec::with_capacity(count);
        for k in 0..count {
            let t = t0 + k as f64 * dt;
            let j = grid.interval_of(t)?;
            let (_, e_anchor) = op.e_from_anchor(t)?;
            let f = op.factors(j)?;
            let z_t0 = if t == grid.knot(j) {
                z_to_knot[j].clone()
            } else {
                &e_anchor * &f.e_left_inv * &z_to_knot[j]
            };
            let _ = &identity;
            zp.push(&z_t0 * &p.dich.projection);
            zq.push(&z_t0 * &complement);
            sample_interval.push(j);
        }

        Ok(PicardOperator {
            p,
            t0,
            dt,
            count,
            pieces,
            pos_after_a,
            zp,
            zq,
            sample_interval,
            h_local: (dt * refine) / 2.0,
        })
    }

    fn apply(&self, phi: &SampledFunction) -> Result<Vec<DVector<f64>>, SolveError> {
        let op = self.p.op;
        let grid = op.grid();
        let n = op.dim();
        let rhs = &self.p.rhs;

        // piece moments, accumulated from both ends: stable-direction
        // moments grow to the right and expanding-direction ones to the
        // left, so prefix sums feed the projected past and suffix sums the
        // complemented future without catastrophic cancellation
        let mut moments = Vec::with_capacity(self.pieces.len());
        for piece in &self.pieces {
            let w_gamma = phi.eval(piece.gamma);
            let mut m = DVector::zeros(n);
            for node in &piece.nodes {
                let h_val = rhs(node.s, &phi.eval(node.s), &w_gamma);
                m += &node.pre * h_val * node.w;
            }
            moments.push(m);
        }
        let mut prefix = Vec::with_capacity(moments.len() + 1);
        prefix.push(DVector::zeros(n));
        for m in &moments {
            let last: &DVector<f64> = prefix.last().unwrap();
            prefix.push(last + m);
        }
        let mut suffix = vec![DVector::zeros(n); moments.len() + 1];
        for (k, m) in moments.iter().enumerate().rev() {
            suffix[k] = m + &suffix[k + 1];
        }

        // oriented local integrals, swept once per interval in each direction
        let mut local: Vec<DVector<f64>> = vec![DVector::zeros(n); self.count];
        let mut k = 0usize;
        while k < self.count {
            let j = self.sample_interval[k];
            let mut upper = k;
            while upper + 1 < self.count && self.sample_interval[upper + 1] == j {
                upper += 1;
            }
            let zeta = grid.anchor(j);
            let w_gamma = phi.eval(zeta);
            let f = |u: f64, w: &DVector<f64>| {
                op.linear().m_at(u) * w + rhs(u, &phi.eval(u), &w_gamma)
            };
            // indices in [k, upper]: those at/above zeta ascending, below descending
            let first_above = (k..=upper)
                .find(|&i| self.t0 + i as f64 * self.dt >= zeta)
                .unwrap_or(upper + 1);
            // ascending sweep from the anchor
            let mut w = DVector::zeros(n);
            let mut u = zeta;
            for i in first_above..=upper {
                let target = self.t0 + i as f64 * self.dt;
                w = integrate_piecewise(&f, u, &w, target, self.h_local)?;
                u = target;
                local[i] = w.clone();
            }
            // descending sweep from the anchor
            let mut w = DVector::zeros(n);
            let mut u = zeta;
            for i in (k..first_above).rev() {
                let target = self.t0 + i as f64 * self.dt;
                w = integrate_piecewise(&f, u, &w, target, self.h_local)?;
                u = target;
                local[i] = w.clone();
            }
            k = upper + 1;
        }

        let mut out = Vec::with_capacity(self.count);
        for k in 0..self.count {
            let j = self.sample_interval[k];
            // pieces split at the A_j / B_j boundary: [t_j, zeta_j] and
            // everything below is past, [zeta_j, t_{j+1}] and beyond is future
            let past = &prefix[self.pos_after_a[j]];
            let future = &suffix[self.pos_after_a[j]];
            out.push(&self.zp[k] * past - &self.zq[k] * future + &local[k]);
        }
        Ok(out)
    }
}

fn integrate_piecewise<F>(
    f: &F,
    from: f64,
    w0: &DVector<f64>,
    to: f64,
    h_target: f64,
) -> Result<DVector<f64>, SolveError>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    if to == from {
        return Ok(w0.clone());
    }
    let steps = substeps(to - from, h_target, 1);
    let mut w = w0.clone();
    for k in 0..steps {
        let t_a = from + k as f64 * (to - from) / steps as f64;
        let t_b = from + (k + 1) as f64 * (to - from) / steps as f64;
        w = rk4_step_vec(f, t_a, &w, t_b - t_a);
    }
    if !w.iter().all(|v| v.is_finite()) {
        return Err(SolveError::NonFinite { t: to });
    }
    Ok(w)
}

fn build_piece(
    op: &TransitionOperator,
    a: f64,
    b: f64,
    z_from_base: &DMatrix<f64>,
    gamma: f64,
    hq: f64,
    base_at_right: bool,
) -> Result<Piece, SolveError> {
    let nodes = simpson_nodes(a, b, hq);
    let times: Vec<f64> = nodes.iter().map(|(s, _)| *s).collect();
    let phis = if base_at_right {
        let rev: Vec<f64> = times.iter().rev().copied().collect();
        let mut phis = op.phi_second_arg(b, &rev)?;
        phis.reverse();
        phis
    } else {
        op.phi_second_arg(a, &times)?
    };
    let nodes = nodes
        .into_iter()
        .zip(phis)
        .map(|((s, w), phi)| QuadNode {
            s,
            w,
            pre: z_from_base * phi,
        })
        .collect();
    Ok(Piece { gamma, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DepcagSystem, MatrixExpr, NonlinearTerm, TimeGrid, VarPrefix};
    use crate::verify::growth_constants;
    use nalgebra::DVector;

    fn nums() -> NumericsConfig {
        NumericsConfig {
            tail_tol: 1e-7,
            picard_tol: 1e-8,
            ..NumericsConfig::default()
        }
    }

    fn setup(
        m: &str,
        m0: &str,
        h: Option<NonlinearTerm>,
        window: [f64; 2],
        step: f64,
    ) -> (DepcagSystem, DichotomySpec) {
        let grid = TimeGrid::uniform(window, step, 0.0).unwrap();
        let sys = DepcagSystem::new(
            grid,
            MatrixExpr::parse(&[vec![m.into()]], "M").unwrap(),
            MatrixExpr::parse(&[vec![m0.into()]], "M0").unwrap(),
            h,
        )
        .unwrap();
        let d = DichotomySpec::new(DMatrix::identity(1, 1), 1.0, 1.0).unwrap();
        (sys, d)
    }

    #[test]
    fn constant_forcing_gives_constant_solution() {
        // z' = -z + 0.3: the unique bounded solution is 0.3
        let h = NonlinearTerm::parse(&["0.3".into()], VarPrefix::Z, 1, 0.0, 0.3, 0.0, "h").unwrap();
        let (sys, d) = setup("-1", "0", Some(h), [-20.0, 20.0], 0.5);
        let numerics = nums();
        let op = TransitionOperator::new(sys.linear_part(), numerics.clone());
        let growth = growth_constants(&sys.linear_part(), d.alpha, &numerics).unwrap();
        let problem = BoundedProblem {
            op: &op,
            dich: &d,
            rhs: sys.rhs_fn().unwrap(),
            growth_r: 0.0,
            offset_mu: 0.3,
            lipschitz_l: 0.0,
        };
        let sol = bounded_solution(&problem, &growth, &numerics).unwrap();
        assert!(sol.core.0 < sol.core.1);
        for k in 0..sol.phi0.len() {
            let t = sol.phi0.time(k);
            if t >= sol.core.0 && t <= sol.core.1 {
                assert!(
                    (sol.phi0.values()[k][0] - 0.3).abs() < 1e-6,
                    "t={t}: {}",
                    sol.phi0.values()[k][0]
                );
            }
        }
        assert!(sol.residual < 1e-6, "residual {}", sol.residual);
        assert!(sol.phi0.sup_norm() <= sol.sigma + numerics.picard_tol);
    }

    #[test]
    fn zero_forcing_gives_null_solution() {
        let h = NonlinearTerm::parse(&["0".into()], VarPrefix::Z, 1, 0.0, 0.0, 0.0, "h").unwrap();
        let (sys, d) = setup("-1", "0", Some(h), [-8.0, 8.0], 0.5);
        let numerics = nums();
        let op = TransitionOperator::new(sys.linear_part(), numerics.clone());
        let growth = growth_constants(&sys.linear_part(), d.alpha, &numerics).unwrap();
        let problem = BoundedProblem {
            op: &op,
            dich: &d,
            rhs: sys.rhs_fn().unwrap(),
            growth_r: 0.0,
            offset_mu: 0.0,
            lipschitz_l: 0.0,
        };
        let sol = bounded_solution(&problem, &growth, &numerics).unwrap();
        assert_eq!(sol.sigma, 0.0);
        assert_eq!(sol.phi0.sup_norm(), 0.0);
        assert_eq!(sol.horizon, 0.0);
    }

    #[test]
    fn split_projection_matches_hand_quadrature() {
        // diag(-1, 1) pure ODE with P = diag(1, 0): the bounded solution of
        // z' = W z + (0.3, 0.1 sin t) is (0.3, -0.05 (sin t + cos t))
        let grid = TimeGrid::uniform([-20.0, 20.0], 0.5, 0.0).unwrap();
        let sys = DepcagSystem::new(
            grid,
            MatrixExpr::parse(
                &[vec!["-1".into(), "0".into()], vec!["0".into(), "1".into()]],
                "M",
            )
            .unwrap(),
            MatrixExpr::parse(
                &[vec!["0".into(), "0".into()], vec!["0".into(), "0".into()]],
                "M0",
            )
            .unwrap(),
            None,
        )
        .unwrap();
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let d = DichotomySpec::new(p, 1.0, 1.0).unwrap();
        let numerics = NumericsConfig {
            tail_tol: 1e-7,
            picard_tol: 1e-9,
            ..NumericsConfig::default()
        };
        let op = TransitionOperator::new(sys.linear_part(), numerics.clone());
        let growth = growth_constants(&sys.linear_part(), 1.0, &numerics).unwrap();
        let rhs: crate::model::RhsFn = std::sync::Arc::new(|t: f64, _: &DVector<f64>, _: &DVector<f64>| {
            DVector::from_vec(vec![0.3, 0.1 * t.sin()])
        });
        let problem = BoundedProblem {
            op: &op,
            dich: &d,
            rhs,
            growth_r: 0.0,
            offset_mu: 0.3,
            lipschitz_l: 0.0,
        };
        let sol = bounded_solution(&problem, &growth, &numerics).unwrap();
        let mut worst = 0.0_f64;
        for k in 0..sol.phi0.len() {
            let t = sol.phi0.time(k);
            if t < sol.core.0 || t > sol.core.1 {
                continue;
            }
            worst = worst.max((sol.phi0.values()[k][0] - 0.3).abs());
            worst = worst.max((sol.phi0.values()[k][1] + 0.05 * (t.sin() + t.cos())).abs());
        }
        assert!(worst < 1e-6, "worst pointwise defect {worst}");
    }

    #[test]
    fn hypothesis_failure_is_named() {
        let h = NonlinearTerm::parse(
            &["2*sin(z1)".into()],
            VarPrefix::Z,
            1,
            2.0,
            0.1,
            2.0,
            "h",
        )
        .unwrap();
        let (sys, d) = setup("-1", "0", Some(h), [-8.0, 8.0], 0.5);
        let numerics = nums();
        let op = TransitionOperator::new(sys.linear_part(), numerics.clone());
        let growth = growth_constants(&sys.linear_part(), d.alpha, &numerics).unwrap();
        let problem = BoundedProblem {
            op: &op,
            dich: &d,
            rhs: sys.rhs_fn().unwrap(),
            growth_r: 2.0,
            offset_mu: 0.1,
            lipschitz_l: 2.0,
        };
        match bounded_solution(&problem, &growth, &numerics) {
            Err(SolveError::HypothesisFailed { check }) => {
                assert_eq!(check, "eq10a");
            }
            other => panic!("expected hypothesis failure, got {other:?}"),
        }
    }

    #[test]
    fn window_too_small_reported() {
        let h = NonlinearTerm::parse(&["0.3".into()], VarPrefix::Z, 1, 0.0, 0.3, 0.0, "h").unwrap();
        let (sys, d) = setup("-1", "0", Some(h), [-4.0, 4.0], 0.5);
        let numerics = NumericsConfig {
            tail_tol: 1e-12,
            ..nums()
        };
        let op = TransitionOperator::new(sys.linear_part(), numerics.clone());
        let growth = growth_constants(&sys.linear_part(), d.alpha, &numerics).unwrap();
        let problem = BoundedProblem {
            op: &op,
            dich: &d,
            rhs: sys.rhs_fn().unwrap(),
            growth_r: 0.0,
            offset_mu: 0.3,
            lipschitz_l: 0.0,
        };
        assert!(matches!(
            bounded_solution(&problem, &growth, &numerics),
            Err(SolveError::WindowTooSmall { .. })
        ));
    }
}
