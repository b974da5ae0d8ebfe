//! Initial-value problems for systems with a frozen argument, forward and
//! backward, resolving the per-interval anchor self-consistency.
//!
//! On each interval the state at the anchor enters the right-hand side as a
//! constant. Integrating from the interval entry point to the anchor defines
//! a map on candidate anchor values; for linear systems that map is solved
//! directly through an LU factorization (guarded by the same determinant
//! threshold as the transition factors), for nonlinear systems by plain
//! fixed-point iteration at tolerance `fp_tol`.

use super::{SolveError, Trajectory};
use crate::model::{LinearDepcag, NumericsConfig, RhsFn};
use crate::odeint::{rk4_step_vec, substeps, vec_norm};
use crate::transition::SINGULAR_DET;
use nalgebra::{DMatrix, DVector};

/// Integrates from `(tau, xi)` to `t_end` (either direction), producing a
/// dense trajectory that contains every crossed knot and anchor.
pub fn solve_ivp(
    lin: &LinearDepcag,
    rhs: Option<&RhsFn>,
    tau: f64,
    xi: &DVector<f64>,
    t_end: f64,
    numerics: &NumericsConfig,
) -> Result<Trajectory, SolveError> {
    let grid = &lin.grid;
    grid.interval_of(tau)?;
    grid.interval_of(t_end)?;
    if xi.len() != lin.dim {
        return Err(SolveError::DimensionMismatch {
            expected: lin.dim,
            got: xi.len(),
        });
    }

    let mut rec = Recorder::new(tau, xi.clone());
    let mut fp_meta = Vec::new();
    if t_end == tau {
        let mut traj = rec.finish(tau < t_end);
        traj.fp_iterations = fp_meta;
        return Ok(traj);
    }
    let forward = t_end > tau;
    let mut a = tau;
    let mut z_a = xi.clone();
    loop {
        let j = grid.interval_of(a)?;
        // entering a knot while moving backward means we continue in the
        // interval to the left of it
        let j = if !forward && a == grid.knot(j) && j > 0 {
            j - 1
        } else {
            j
        };
        let (t_j, t_j1) = grid.interval(j);
        let zeta = grid.anchor(j);
        let b = if forward {
            t_end.min(t_j1)
        } else {
            t_end.max(t_j)
        };
        let h_int = numerics.interval_substep(t_j1 - t_j);

        // the anchor value c = z(zeta_j), self-consistent on this interval
        let (c, iters) = anchor_value(lin, rhs, a, &z_a, zeta, j, h_int, numerics)?;
        fp_meta.push((j, iters));

        // final recorded pass a -> b with the anchor frozen, splitting at the
        // anchor so it lands exactly on a recorded sample
        let mut z = z_a.clone();
        let mut legs = vec![b];
        if (zeta > a.min(b) && zeta < a.max(b)) || zeta == b {
            legs.insert(0, zeta);
        }
        let mut from = a;
        for leg in legs {
            z = integrate_leg(lin, rhs, from, &z, leg, &c, h_int, &mut rec)?;
            from = leg;
        }

        if b == t_end {
            break;
        }
        a = b;
        z_a = z;
    }
    let mut traj = rec.finish(forward);
    traj.fp_iterations = fp_meta;
    Ok(traj)
}

#[allow(clippy::too_many_arguments)]
fn anchor_value(
    lin: &LinearDepcag,
    rhs: Option<&RhsFn>,
    a: f64,
    z_a: &DVector<f64>,
    zeta: f64,
    interval: usize,
    h_int: f64,
    numerics: &NumericsConfig,
) -> Result<(DVector<f64>, usize), SolveError> {
    let n = lin.dim;
    if zeta == a {
        return Ok((z_a.clone(), 0));
    }
    match rhs {
        None => {
            // z(zeta) = Phi(zeta,a) z_a + [int_a^zeta Phi(zeta,s) M0 ds] c, so
            // (I - Q) c = Phi(zeta,a) z_a; co-integrate Phi and Q in one pass
            let f = |u: f64, state: &DMatrix<f64>| {
                let m = lin.m_at(u);
                let m0 = lin.m0_at(u);
                let mut out = &m * state;
                let mut right = out.columns_mut(n, n);
                right += m0;
                out
            };
            let mut state = DMatrix::zeros(n, 2 * n);
            state.columns_mut(0, n).copy_from(&DMatrix::identity(n, n));
            let state =
                crate::odeint::rk4_span_mat(&f, a, &state, zeta, h_int, None);
            if !state.iter().all(|v| v.is_finite()) {
                return Err(SolveError::NonFinite { t: zeta });
            }
            let phi = state.columns(0, n).into_owned();
            let q = state.columns(n, n).into_owned();
            let lhs = DMatrix::identity(n, n) - q;
            let lu = lhs.lu();
            let det = lu.determinant();
            if det.abs() < SINGULAR_DET {
                return Err(SolveError::SingularAnchor {
                    interval,
                    det: det.abs(),
                });
            }
            let c = lu
                .solve(&(phi * z_a))
                .ok_or(SolveError::SingularAnchor { interval, det: 0.0 })?;
            Ok((c, 0))
        }
        Some(h) => {
            let mut c = z_a.clone();
            for iter in 1..=numerics.max_iters {
                let f = |u: f64, w: &DVector<f64>| {
                    lin.m_at(u) * w + lin.m0_at(u) * &c + h(u, w, &c)
                };
                let next = crate::odeint::rk4_span_vec(&f, a, z_a, zeta, h_int);
                if !next.iter().all(|v| v.is_finite()) {
                    return Err(SolveError::NonFinite { t: zeta });
                }
                let delta = vec_norm(&(&next - &c));
                let scale = vec_norm(&next).max(1.0);
                c = next;
                if delta <= numerics.fp_tol * scale {
                    return Ok((c, iter));
                }
            }
            Err(SolveError::AnchorFixedPoint {
                interval,
                iterations: numerics.max_iters,
            })
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn integrate_leg(
    lin: &LinearDepcag,
    rhs: Option<&RhsFn>,
    from: f64,
    z_from: &DVector<f64>,
    to: f64,
    c: &DVector<f64>,
    h_int: f64,
    rec: &mut Recorder,
) -> Result<DVector<f64>, SolveError> {
    if to == from {
        return Ok(z_from.clone());
    }
    let f = |u: f64, w: &DVector<f64>| {
        let mut dw = lin.m_at(u) * w + lin.m0_at(u) * c;
        if let Some(h) = rhs {
            dw += h(u, w, c);
        }
        dw
    };
    let steps = substeps(to - from, h_int, 1);
    let mut z = z_from.clone();
    for k in 0..steps {
        let t0 = from + k as f64 * (to - from) / steps as f64;
        let t1 = from + (k + 1) as f64 * (to - from) / steps as f64;
        z = rk4_step_vec(&f, t0, &z, t1 - t0);
        if !z.iter().all(|v| v.is_finite()) {
            return Err(SolveError::NonFinite { t: t1 });
        }
        rec.push(t1, z.clone());
    }
    Ok(z)
}

/// Collects integration samples; backward runs are reversed at the end so the
/// trajectory is always ascending in time.
struct Recorder {
    times: Vec<f64>,
    values: Vec<DVector<f64>>,
}

impl Recorder {
    fn new(t0: f64, z0: DVector<f64>) -> Self {
        Recorder {
            times: vec![t0],
            values: vec![z0],
        }
    }

    fn push(&mut self, t: f64, z: DVector<f64>) {
        if (t - *self.times.last().unwrap()).abs() < 1e-15 {
            *self.values.last_mut().unwrap() = z;
        } else {
            self.times.push(t);
            self.values.push(z);
        }
    }

    fn finish(self, forward: bool) -> Trajectory {
        let (mut times, mut values) = (self.times, self.values);
        if !forward && times.len() > 1 {
            times.reverse();
            values.reverse();
        }
        Trajectory::new(times, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DepcagSystem, MatrixExpr, NonlinearTerm, TimeGrid, VarPrefix};

    fn nums() -> NumericsConfig {
        NumericsConfig::default()
    }

    fn scalar(m: &str, m0: &str, grid: TimeGrid, h: Option<NonlinearTerm>) -> DepcagSystem {
        DepcagSystem::new(
            grid,
            MatrixExpr::parse(&[vec![m.into()]], "M").unwrap(),
            MatrixExpr::parse(&[vec![m0.into()]], "M0").unwrap(),
            h,
        )
        .unwrap()
    }

    #[test]
    fn advanced_anchor_hand_case() {
        // z' = z(gamma(t)), anchors at the interval midpoints: z(0.5) = 2, z(1) = 3
        let grid = TimeGrid::uniform([0.0, 4.0], 1.0, 0.5).unwrap();
        let sys = scalar("0", "1", grid, None);
        let lin = sys.linear_part();
        let one = DVector::from_element(1, 1.0);
        let traj = solve_ivp(&lin, None, 0.0, &one, 1.0, &nums()).unwrap();
        assert!((traj.eval(0.5)[0] - 2.0).abs() < 1e-12);
        assert!((traj.eval(1.0)[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn linear_ode_matches_exponential() {
        let grid = TimeGrid::uniform([0.0, 4.0], 1.0, 0.0).unwrap();
        let sys = scalar("-1", "0", grid, None);
        let lin = sys.linear_part();
        let xi = DVector::from_element(1, 2.0);
        let traj = solve_ivp(&lin, None, 0.5, &xi, 3.5, &nums()).unwrap();
        assert!((traj.eval(3.5)[0] - 2.0 * (-3.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn zero_initial_state_stays_zero() {
        let grid = TimeGrid::uniform([0.0, 4.0], 1.0, 0.5).unwrap();
        let sys = scalar("sin(t)", "0.3", grid, None);
        let lin = sys.linear_part();
        let zero = DVector::zeros(1);
        let traj = solve_ivp(&lin, None, 0.0, &zero, 4.0, &nums()).unwrap();
        assert_eq!(traj.eval(2.7)[0], 0.0);
    }

    #[test]
    fn forward_then_backward_returns_initial_state() {
        let grid = TimeGrid::uniform([0.0, 6.0], 1.0, 0.5).unwrap();
        let h = NonlinearTerm::parse(
            &["0.05*sin(z1) + 0.05*cos(w1)".into()],
            VarPrefix::Z,
            1,
            0.1,
            0.1,
            0.1,
            "h",
        )
        .unwrap();
        let sys = scalar("-0.5", "0.2", grid, Some(h));
        let lin = sys.linear_part();
        let rhs = sys.rhs_fn().unwrap();
        let xi = DVector::from_element(1, 1.3);
        let fwd = solve_ivp(&lin, Some(&rhs), 0.3, &xi, 5.2, &nums()).unwrap();
        let end = fwd.eval(5.2);
        let bwd = solve_ivp(&lin, Some(&rhs), 5.2, &end, 0.3, &nums()).unwrap();
        assert!(
            (bwd.eval(0.3)[0] - 1.3).abs() < 1e-6,
            "roundtrip gave {}",
            bwd.eval(0.3)[0]
        );
    }

    #[test]
    fn linear_matches_transition_matrix() {
        use crate::transition::TransitionOperator;
        let grid = TimeGrid::uniform([0.0, 6.0], 1.0, 0.5).unwrap();
        let sys = scalar("-0.3", "0.4", grid, None);
        let lin = sys.linear_part();
        let op = TransitionOperator::new(sys.linear_part(), nums());
        let xi = DVector::from_element(1, 0.7);
        for (tau, t) in [(0.2, 4.9), (4.9, 0.2), (1.5, 2.5)] {
            let traj = solve_ivp(&lin, None, tau, &xi, t, &nums()).unwrap();
            let z = op.transition_z(t, tau).unwrap();
            let expected = (&z * &xi)[0];
            assert!(
                (traj.eval(t)[0] - expected).abs() < 1e-7,
                "tau={tau} t={t}: {} vs {expected}",
                traj.eval(t)[0]
            );
        }
    }

    #[test]
    fn singular_backward_step_reported() {
        // E(t_{r+1}, zeta_r) = 1 - (t - zeta) crosses zero: backward through
        // that interval has no unique anchor value
        let grid = TimeGrid::uniform([0.0, 4.0], 1.0, 0.0).unwrap();
        let sys = scalar("0", "-1", grid, None);
        let lin = sys.linear_part();
        let xi = DVector::from_element(1, 1.0);
        match solve_ivp(&lin, None, 3.0, &xi, 1.0, &nums()) {
            Err(SolveError::SingularAnchor { .. }) => {}
            other => panic!("expected singular anchor, got {other:?}"),
        }
    }

    #[test]
    fn trajectory_contains_knots_and_anchors() {
        let grid = TimeGrid::uniform([0.0, 4.0], 1.0, 0.75).unwrap();
        let sys = scalar("-1", "0.1", grid, None);
        let lin = sys.linear_part();
        let xi = DVector::from_element(1, 1.0);
        let traj = solve_ivp(&lin, None, 0.0, &xi, 4.0, &nums()).unwrap();
        for point in [1.0, 2.0, 3.0, 0.75, 1.75, 2.75] {
            assert!(
                traj.times().iter().any(|t| (t - point).abs() < 1e-12),
                "missing {point}"
            );
        }
    }
}
