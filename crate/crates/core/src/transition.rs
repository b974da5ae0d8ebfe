//! Fundamental matrices, interval factors, the transition matrix of the
//! linear system with frozen argument, the dichotomy-split kernel and the
//! Green kernels.
//!
//! The transition matrix is assembled from per-interval factors
//! `E(t_{r+1}, zeta_r) E(t_r, zeta_r)^{-1}` (cached, LU-inverted with a
//! determinant guard) plus two partial-interval corrections, which makes the
//! product representation exact up to integrator error.

use crate::model::{DichotomySpec, LinearDepcag, ModelError, NumericsConfig, TimeGrid};
use crate::odeint::{rk4_span_mat, substeps};
use nalgebra::DMatrix;
use std::sync::OnceLock;
use thiserror::Error;

/// Determinant threshold below which an interval factor counts as singular.
pub const SINGULAR_DET: f64 = 1e-12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransitionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite matrix entry during integration over [{from}, {to}]")]
    NonFinite { from: f64, to: f64 },
    #[error("J(t,s) singular for t={t}, s={s} (|det|={det:.3e} < 1e-12)")]
    SingularJ { t: f64, s: f64, det: f64 },
    #[error("singular interval factor at interval {interval} (|det|={det:.3e})")]
    SingularFactor { interval: usize, det: f64 },
    #[error("times {0} and {1} do not lie in the closure of one grid interval")]
    NotSameInterval(f64, f64),
}

type Result<T> = std::result::Result<T, TransitionError>;

/// Cached per-interval endpoint factors.
#[derive(Debug, Clone)]
pub(crate) struct IntervalFactors {
    /// `E(t_r, zeta_r)`
    pub e_left: DMatrix<f64>,
    pub e_left_inv: DMatrix<f64>,
    /// `E(t_{r+1}, zeta_r)`
    pub e_right: DMatrix<f64>,
    pub e_right_inv: DMatrix<f64>,
    /// State map across the interval, `t_r -> t_{r+1}`.
    pub step_fwd: DMatrix<f64>,
    /// Inverse map, `t_{r+1} -> t_r`.
    pub step_bwd: DMatrix<f64>,
}

/// One oriented segment of a variation-of-constants path; the kernel on the
/// segment is `Z(t, base) Phi(base, s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSeg {
    pub from: f64,
    pub to: f64,
    pub base: SegBase,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegBase {
    /// Kernel `Z(t, tau) Phi(tau, s)` anchored at the initial time.
    Tau(f64),
    /// Kernel `Z(t, t_k) Phi(t_k, s)` anchored at knot `k`.
    Knot(usize),
    /// Kernel `Phi(t, s)` (no transition factor).
    Eval,
}

pub struct TransitionOperator {
    lin: LinearDepcag,
    numerics: NumericsConfig,
    factors: Vec<OnceLock<Result<IntervalFactors>>>,
}

impl TransitionOperator {
    pub fn new(lin: LinearDepcag, numerics: NumericsConfig) -> Self {
        let n = lin.grid.num_intervals();
        TransitionOperator {
            lin,
            numerics,
            factors: (0..n).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lin.dim
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.lin.grid
    }

    pub fn linear(&self) -> &LinearDepcag {
        &self.lin
    }

    fn h_target(&self, span: f64) -> f64 {
        self.numerics
            .ode_step
            .min(span.abs() / 8.0)
            .max(f64::MIN_POSITIVE)
    }

    fn check_finite(&self, m: &DMatrix<f64>, from: f64, to: f64) -> Result<()> {
        if m.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(TransitionError::NonFinite { from, to })
        }
    }

    /// Fundamental matrix `Phi(t, s)` of `x' = M(t) x`, integrated directly
    /// from `s` to `t` (no global inversion).
    pub fn fundamental(&self, t: f64, s: f64) -> Result<DMatrix<f64>> {
        self.grid().interval_of(t)?;
        self.grid().interval_of(s)?;
        let n = self.dim();
        if t == s {
            return Ok(DMatrix::identity(n, n));
        }
        let f = |u: f64, x: &DMatrix<f64>| self.lin.m_at(u) * x;
        let phi = rk4_span_mat(&f, s, &DMatrix::identity(n, n), t, self.h_target(t - s), None);
        self.check_finite(&phi, s, t)?;
        Ok(phi)
    }

    fn require_same_interval(&self, t: f64, tau: f64) -> Result<()> {
        let lo = t.min(tau);
        let hi = t.max(tau);
        let r = self.grid().interval_of(lo)?;
        if hi <= self.grid().knot(r + 1) + 1e-12 {
            Ok(())
        } else {
            Err(TransitionError::NotSameInterval(t, tau))
        }
    }

    /// `J(t, tau) = I + int_tau^t Phi(tau, s) M0(s) ds`, for `t, tau` in the
    /// closure of one interval. Reports a singularity when `|det J| < 1e-12`.
    pub fn j_matrix(&self, t: f64, tau: f64) -> Result<DMatrix<f64>> {
        self.require_same_interval(t, tau)?;
        let j = self.j_matrix_unchecked(t, tau)?;
        let det = j.clone().lu().determinant();
        if det.abs() < SINGULAR_DET {
            return Err(TransitionError::SingularJ {
                t,
                s: tau,
                det: det.abs(),
            });
        }
        Ok(j)
    }

    fn j_matrix_unchecked(&self, t: f64, tau: f64) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if t == tau {
            return Ok(DMatrix::identity(n, n));
        }
        // co-integrate V(u) = Phi(tau, u) and Y(u) = int_tau^u Phi(tau,s) M0(s) ds:
        //   V' = -V M(u),  Y' = V M0(u)
        let f = |u: f64, state: &DMatrix<f64>| {
            let v = state.columns(0, n);
            let m = self.lin.m_at(u);
            let m0 = self.lin.m0_at(u);
            let dv = -(&v * m);
            let dy = &v * m0;
            let mut out = DMatrix::zeros(n, 2 * n);
            out.columns_mut(0, n).copy_from(&dv);
            out.columns_mut(n, n).copy_from(&dy);
            out
        };
        let mut init = DMatrix::zeros(n, 2 * n);
        init.columns_mut(0, n)
            .copy_from(&DMatrix::identity(n, n));
        let state = rk4_span_mat(&f, tau, &init, t, self.h_target(t - tau), None);
        self.check_finite(&state, tau, t)?;
        Ok(DMatrix::identity(n, n) + state.columns(n, n).into_owned())
    }

    /// `E(t, tau) = Phi(t, tau) + int_tau^t Phi(t, s) M0(s) ds = Phi J`.
    pub fn e_matrix(&self, t: f64, tau: f64) -> Result<DMatrix<f64>> {
        self.require_same_interval(t, tau)?;
        self.e_matrix_unchecked(t, tau)
    }

    fn e_matrix_unchecked(&self, t: f64, tau: f64) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if t == tau {
            return Ok(DMatrix::identity(n, n));
        }
        // co-integrate Phi(u, tau) and Y(u) = int_tau^u Phi(u,s) M0(s) ds:
        //   Phi' = M(u) Phi,  Y' = M(u) Y + M0(u)
        let f = |u: f64, state: &DMatrix<f64>| {
            let m = self.lin.m_at(u);
            let m0 = self.lin.m0_at(u);
            let mut out = &m * state;
            let mut right = out.columns_mut(n, n);
            right += m0;
            out
        };
        let mut init = DMatrix::zeros(n, 2 * n);
        init.columns_mut(0, n)
            .copy_from(&DMatrix::identity(n, n));
        let state = rk4_span_mat(&f, tau, &init, t, self.h_target(t - tau), None);
        self.check_finite(&state, tau, t)?;
        Ok(state.columns(0, n).into_owned() + state.columns(n, n).into_owned())
    }

    fn guarded_inverse(&self, m: &DMatrix<f64>, interval: usize) -> Result<DMatrix<f64>> {
        let lu = m.clone().lu();
        let det = lu.determinant();
        if det.abs() < SINGULAR_DET {
            return Err(TransitionError::SingularFactor {
                interval,
                det: det.abs(),
            });
        }
        lu.try_inverse().ok_or(TransitionError::SingularFactor {
            interval,
            det: det.abs(),
        })
    }

    pub(crate) fn factors(&self, r: usize) -> Result<&IntervalFactors> {
        let cell = &self.factors[r];
        cell.get_or_init(|| {
            let zeta = self.grid().anchor(r);
            let (a, b) = self.grid().interval(r);
            let e_left = self.e_matrix_unchecked(a, zeta)?;
            let e_right = self.e_matrix_unchecked(b, zeta)?;
            let e_left_inv = self.guarded_inverse(&e_left, r)?;
            let e_right_inv = self.guarded_inverse(&e_right, r)?;
            let step_fwd = &e_right * &e_left_inv;
            let step_bwd = &e_left * &e_right_inv;
            Ok(IntervalFactors {
                e_left,
                e_left_inv,
                e_right,
                e_right_inv,
                step_fwd,
                step_bwd,
            })
        })
        .as_ref()
        .map_err(Clone::clone)
    }

    /// `E(t, zeta_j)` for the interval `j` containing `t`.
    pub(crate) fn e_from_anchor(&self, t: f64) -> Result<(usize, DMatrix<f64>)> {
        let j = self.grid().interval_of(t)?;
        Ok((j, self.e_matrix_unchecked(t, self.grid().anchor(j))?))
    }

    /// Transition matrix `Z(t, s)` of the linear system, via the backward
    /// product for `t > s` and the forward product for `t < s`.
    pub fn transition_z(&self, t: f64, s: f64) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if t == s {
            self.grid().interval_of(t)?;
            return Ok(DMatrix::identity(n, n));
        }
        let (j, e_t) = self.e_from_anchor(t)?;
        let (i, e_s) = self.e_from_anchor(s)?;
        let e_s_inv = self.guarded_inverse(&e_s, i)?;
        if i == j {
            return Ok(e_t * e_s_inv);
        }
        if t > s {
            // Z = E(t,z_j) E(t_j,z_j)^-1 [step(j-1)...step(i+1)] E(t_{i+1},z_i) E(s,z_i)^-1
            let mut acc = e_t * &self.factors(j)?.e_left_inv;
            for r in (i + 1..j).rev() {
                acc *= &self.factors(r)?.step_fwd;
            }
            acc *= &self.factors(i)?.e_right;
            Ok(acc * e_s_inv)
        } else {
            // Z = E(t,z_j) E(t_{j+1},z_j)^-1 [bwd(j+1)...bwd(i-1)] E(t_i,z_i) E(s,z_i)^-1
            let mut acc = e_t * &self.factors(j)?.e_right_inv;
            for r in j + 1..i {
                acc *= &self.factors(r)?.step_bwd;
            }
            acc *= &self.factors(i)?.e_left;
            Ok(acc * e_s_inv)
        }
    }

    /// The dichotomy-split kernel: `Z(t,0) P Z(0,s)` for `t >= s`,
    /// `-Z(t,0) (I-P) Z(0,s)` for `s > t`.
    pub fn z_split(&self, t: f64, s: f64, d: &DichotomySpec) -> Result<DMatrix<f64>> {
        let zt = self.transition_z(t, 0.0)?;
        let zs = self.transition_z(0.0, s)?;
        if t >= s {
            Ok(zt * &d.projection * zs)
        } else {
            Ok(-(zt * d.complement() * zs))
        }
    }

    /// Green kernel of the dichotomy, with every branch of both case tables.
    pub fn green(&self, t: f64, s: f64, d: &DichotomySpec) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let j = self.grid().interval_of(t)?;
        let r = self.grid().interval_of(s)?;
        let zeta_j = self.grid().anchor(j);
        if t > zeta_j {
            // t in (zeta_j, t_{j+1})
            if r == j {
                if s < zeta_j {
                    Ok(self.z_split(t, self.grid().knot(r), d)? * self.fundamental(self.grid().knot(r), s)?)
                } else if s < t {
                    self.fundamental(t, s)
                } else {
                    Ok(DMatrix::zeros(n, n))
                }
            } else if s < self.grid().anchor(r) {
                Ok(self.z_split(t, self.grid().knot(r), d)? * self.fundamental(self.grid().knot(r), s)?)
            } else {
                Ok(self.z_split(t, self.grid().knot(r + 1), d)?
                    * self.fundamental(self.grid().knot(r + 1), s)?)
            }
        } else {
            // t in [t_j, zeta_j]
            if r == j {
                if s < t {
                    Ok(DMatrix::zeros(n, n))
                } else if s < zeta_j {
                    Ok(-self.fundamental(t, s)?)
                } else {
                    Ok(self.z_split(t, self.grid().knot(r + 1), d)?
                        * self.fundamental(self.grid().knot(r + 1), s)?)
                }
            } else if s < self.grid().anchor(r) {
                Ok(self.z_split(t, self.grid().knot(r), d)? * self.fundamental(self.grid().knot(r), s)?)
            } else {
                Ok(self.z_split(t, self.grid().knot(r + 1), d)?
                    * self.fundamental(self.grid().knot(r + 1), s)?)
            }
        }
    }

    /// Green kernel including the split-kernel terms of the evaluation
    /// interval itself. The case-table kernel [`Self::green`] drops the
    /// `Z_P(t, t_j)` / `Z_P(t, t_{j+1})` contributions for `s` inside the
    /// interval containing `t`; with a nontrivial projection those terms are
    /// needed for `int G(t,s) h(s) ds` to reproduce the bounded solution.
    /// This variant adds them back and satisfies that identity for every
    /// projection.
    pub fn green_vc(&self, t: f64, s: f64, d: &DichotomySpec) -> Result<DMatrix<f64>> {
        let base = self.green(t, s, d)?;
        let j = self.grid().interval_of(t)?;
        if self.grid().interval_of(s)? != j {
            return Ok(base);
        }
        let zeta_j = self.grid().anchor(j);
        if t > zeta_j {
            if s >= zeta_j {
                let knot = self.grid().knot(j + 1);
                return Ok(base + self.z_split(t, knot, d)? * self.fundamental(knot, s)?);
            }
        } else if s < zeta_j {
            let knot = self.grid().knot(j);
            return Ok(base + self.z_split(t, knot, d)? * self.fundamental(knot, s)?);
        }
        Ok(base)
    }

    /// `G_1(t,s) = G(t,s)` for `t >= s`.
    pub fn green_g1(&self, t: f64, s: f64, d: &DichotomySpec) -> Result<DMatrix<f64>> {
        debug_assert!(t >= s);
        self.green(t, s, d)
    }

    /// `G_2(t,s) = -G(t,s)` for `t < s`.
    pub fn green_g2(&self, t: f64, s: f64, d: &DichotomySpec) -> Result<DMatrix<f64>> {
        debug_assert!(t < s);
        Ok(-self.green(t, s, d)?)
    }

    /// Variation-of-constants kernel with explicit base point `tau` (the
    /// three-argument form; the in-text two-argument uses suppress `tau`).
    /// Branch precedence: the `tau`-interval branch, then the `t`-interval
    /// branch, then the knot-anchored branches.
    pub fn green_block(&self, t: f64, s: f64, tau: f64) -> Result<DMatrix<f64>> {
        let i = self.grid().interval_of(tau)?;
        let j = self.grid().interval_of(t)?;
        let zeta_i = self.grid().anchor(i);
        let zeta_j = self.grid().anchor(j);
        let between = |x: f64, a: f64, b: f64| x >= a.min(b) && x <= a.max(b);
        if between(s, tau, zeta_i) {
            return Ok(self.transition_z(t, tau)? * self.fundamental(tau, s)?);
        }
        if between(s, zeta_j, t) {
            return self.fundamental(t, s);
        }
        let r = self.grid().interval_of(s)?;
        if s < self.grid().anchor(r) {
            Ok(self.transition_z(t, self.grid().knot(r))? * self.fundamental(self.grid().knot(r), s)?)
        } else {
            Ok(self.transition_z(t, self.grid().knot(r + 1))?
                * self.fundamental(self.grid().knot(r + 1), s)?)
        }
    }

    /// Oriented path from `tau` to `t` for the variation-of-constants
    /// formula: contiguous segments `tau -> zeta_i -> t_{i+1} -> ... -> zeta_j -> t`
    /// (or the mirrored downward chain), each carrying its kernel base.
    pub fn voc_path(&self, tau: f64, t: f64) -> Result<Vec<PathSeg>> {
        let i = self.grid().interval_of(tau)?;
        let j = self.grid().interval_of(t)?;
        let mut segs = Vec::new();
        let mut push = |from: f64, to: f64, base: SegBase| {
            if from != to {
                segs.push(PathSeg { from, to, base });
            }
        };
        let zeta_i = self.grid().anchor(i);
        let zeta_j = self.grid().anchor(j);
        if i == j {
            push(tau, zeta_i, SegBase::Tau(tau));
            push(zeta_i, t, SegBase::Eval);
        } else if t > tau {
            push(tau, zeta_i, SegBase::Tau(tau));
            push(zeta_i, self.grid().knot(i + 1), SegBase::Knot(i + 1));
            for r in i + 1..j {
                push(self.grid().knot(r), self.grid().anchor(r), SegBase::Knot(r));
                push(self.grid().anchor(r), self.grid().knot(r + 1), SegBase::Knot(r + 1));
            }
            push(self.grid().knot(j), zeta_j, SegBase::Knot(j));
            push(zeta_j, t, SegBase::Eval);
        } else {
            push(tau, zeta_i, SegBase::Tau(tau));
            push(zeta_i, self.grid().knot(i), SegBase::Knot(i));
            for r in (j + 1..i).rev() {
                push(self.grid().knot(r + 1), self.grid().anchor(r), SegBase::Knot(r + 1));
                push(self.grid().anchor(r), self.grid().knot(r), SegBase::Knot(r));
            }
            push(self.grid().knot(j + 1), zeta_j, SegBase::Knot(j + 1));
            push(zeta_j, t, SegBase::Eval);
        }
        Ok(segs)
    }

    /// Forward tail path from `t` to `s_end > t`, the decomposition used by
    /// the improper integrals `int_t^inf G_2(t,s) ... ds`. The first segment
    /// `t -> zeta_j` is oriented and may run backward.
    pub fn tail_path(&self, t: f64, s_end: f64) -> Result<Vec<PathSeg>> {
        let j = self.grid().interval_of(t)?;
        let s_end = s_end.min(self.grid().t_max());
        let mut segs = Vec::new();
        let mut push = |from: f64, to: f64, base: SegBase| {
            if from != to {
                segs.push(PathSeg { from, to, base });
            }
        };
        let zeta_j = self.grid().anchor(j);
        push(t, zeta_j.min(s_end).max(self.grid().knot(j)), SegBase::Eval);
        if zeta_j > s_end {
            return Ok(segs);
        }
        push(zeta_j, self.grid().knot(j + 1).min(s_end), SegBase::Knot(j + 1));
        for r in j + 1..self.grid().num_intervals() {
            if self.grid().knot(r) >= s_end {
                break;
            }
            push(self.grid().knot(r), self.grid().anchor(r).min(s_end), SegBase::Knot(r));
            if self.grid().anchor(r) >= s_end {
                break;
            }
            push(self.grid().anchor(r), self.grid().knot(r + 1).min(s_end), SegBase::Knot(r + 1));
        }
        Ok(segs)
    }

    /// `Phi(base, s)` at a monotone sequence of second arguments, by one pass
    /// of the adjoint equation `dV/ds = -V M(s)` starting from `V(base) = I`.
    pub fn phi_second_arg(&self, base: f64, nodes: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let n = self.dim();
        let mut out = Vec::with_capacity(nodes.len());
        let mut v = DMatrix::identity(n, n);
        let mut u = base;
        let f = |s: f64, v: &DMatrix<f64>| -(v * self.lin.m_at(s));
        for &s in nodes {
            let h = self.h_target(self.grid().theta());
            let steps = substeps(s - u, h, 1);
            if steps > 0 {
                v = rk4_span_mat(&f, u, &v, s, h, None);
            }
            self.check_finite(&v, base, s)?;
            out.push(v.clone());
            u = s;
        }
        Ok(out)
    }

    /// The transition factor `Z(t, base)` of a path segment.
    pub fn seg_transition(&self, t: f64, base: &SegBase) -> Result<DMatrix<f64>> {
        match base {
            SegBase::Tau(tau) => self.transition_z(t, *tau),
            SegBase::Knot(k) => self.transition_z(t, self.grid().knot(*k)),
            SegBase::Eval => Ok(DMatrix::identity(self.dim(), self.dim())),
        }
    }

    /// Base time of a path segment (`t` itself for `Eval` segments).
    pub fn seg_base_time(&self, t: f64, base: &SegBase) -> f64 {
        match base {
            SegBase::Tau(tau) => *tau,
            SegBase::Knot(k) => self.grid().knot(*k),
            SegBase::Eval => t,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DepcagSystem, MatrixExpr, TimeGrid};
    use crate::odeint::mat_norm;
    use approx::assert_relative_eq;

    fn scalar_sys(m: &str, m0: &str, grid: TimeGrid) -> TransitionOperator {
        let sys = DepcagSystem::new(
            grid,
            MatrixExpr::parse(&[vec![m.into()]], "M").unwrap(),
            MatrixExpr::parse(&[vec![m0.into()]], "M0").unwrap(),
            None,
        )
        .unwrap();
        TransitionOperator::new(sys.linear_part(), NumericsConfig::default())
    }

    fn grid01(window: [f64; 2]) -> TimeGrid {
        TimeGrid::uniform(window, 1.0, 0.0).unwrap()
    }

    #[test]
    fn fundamental_matches_exponential() {
        let op = scalar_sys("-1", "0", grid01([0.0, 4.0]));
        let phi = op.fundamental(1.0, 0.0).unwrap();
        assert!((phi[(0, 0)] - (-1.0f64).exp()).abs() < 1e-8);
        assert!((phi[(0, 0)] - 0.3678794).abs() < 1e-7);
    }

    #[test]
    fn fundamental_identity_at_equal_times() {
        let op = scalar_sys("-1", "0", grid01([0.0, 4.0]));
        let phi = op.fundamental(1.5, 1.5).unwrap();
        assert_eq!(phi, DMatrix::identity(1, 1));
    }

    #[test]
    fn fundamental_rotation() {
        let sys = DepcagSystem::new(
            grid01([0.0, 4.0]),
            MatrixExpr::parse(&[vec!["0".into(), "1".into()], vec!["-1".into(), "0".into()]], "M")
                .unwrap(),
            MatrixExpr::parse(&[vec!["0".into(), "0".into()], vec!["0".into(), "0".into()]], "M0")
                .unwrap(),
            None,
        )
        .unwrap();
        let op = TransitionOperator::new(sys.linear_part(), NumericsConfig::default());
        let phi = op.fundamental(std::f64::consts::FRAC_PI_2, 0.0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(mat_norm(&(phi.clone() - expected)) < 1e-8);
        assert!((phi.determinant() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn j_matrix_constant_integrand() {
        let op = scalar_sys("0", "0.3", grid01([0.0, 4.0]));
        let j = op.j_matrix(0.5, 0.0).unwrap();
        assert_relative_eq!(j[(0, 0)], 1.0 + 0.3 * 0.5, max_relative = 1e-12);
        let j = op.j_matrix(0.0, 0.5).unwrap();
        assert_relative_eq!(j[(0, 0)], 1.0 - 0.3 * 0.5, max_relative = 1e-12);
    }

    #[test]
    fn j_matrix_identity_and_singularity() {
        let op = scalar_sys("0", "-2", grid01([0.0, 4.0]));
        assert_eq!(op.j_matrix(0.5, 0.5).unwrap(), DMatrix::identity(1, 1));
        match op.j_matrix(0.5, 0.0) {
            Err(TransitionError::SingularJ { .. }) => {}
            other => panic!("expected singular J, got {other:?}"),
        }
    }

    #[test]
    fn j_matrix_rejects_cross_interval_times() {
        let op = scalar_sys("0", "0.3", grid01([0.0, 4.0]));
        assert!(matches!(
            op.j_matrix(1.5, 0.25),
            Err(TransitionError::NotSameInterval(..))
        ));
        // interval closure is allowed
        op.j_matrix(1.0, 0.25).unwrap();
    }

    #[test]
    fn e_matrix_hand_values() {
        let op = scalar_sys("0", "1", grid01([0.0, 4.0]));
        let e = op.e_matrix(0.5, 0.0).unwrap();
        assert_relative_eq!(e[(0, 0)], 1.5, max_relative = 1e-12);
        assert_eq!(op.e_matrix(0.7, 0.7).unwrap(), DMatrix::identity(1, 1));

        let op = scalar_sys("-1", "0", grid01([0.0, 4.0]));
        let e = op.e_matrix(0.9, 0.2).unwrap();
        assert_relative_eq!(e[(0, 0)], (-0.7f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn transition_hand_products() {
        // z' = z(gamma(t)) on the integer grid with left anchors:
        // per interval z(t) = z(i)(1 + (t - i)), so Z(1,0)=2, Z(2,0)=4.
        let op = scalar_sys("0", "1", grid01([0.0, 4.0]));
        assert_relative_eq!(op.transition_z(1.0, 0.0).unwrap()[(0, 0)], 2.0, max_relative = 1e-12);
        assert_relative_eq!(op.transition_z(2.0, 0.0).unwrap()[(0, 0)], 4.0, max_relative = 1e-12);
        assert_eq!(
            op.transition_z(1.7, 1.7).unwrap(),
            DMatrix::identity(1, 1)
        );
        // and the inverse direction
        assert_relative_eq!(op.transition_z(0.0, 2.0).unwrap()[(0, 0)], 0.25, max_relative = 1e-11);
    }

    #[test]
    fn transition_matches_diagonal_exponentials() {
        let sys = DepcagSystem::new(
            grid01([0.0, 4.0]),
            MatrixExpr::parse(&[vec!["-1".into(), "0".into()], vec!["0".into(), "1".into()]], "M")
                .unwrap(),
            MatrixExpr::parse(&[vec!["0".into(), "0".into()], vec!["0".into(), "0".into()]], "M0")
                .unwrap(),
            None,
        )
        .unwrap();
        let op = TransitionOperator::new(sys.linear_part(), NumericsConfig::default());
        let z = op.transition_z(3.0, 1.0).unwrap();
        assert!((z[(0, 0)] - (-2.0f64).exp()).abs() < 1e-7);
        assert!((z[(1, 1)] - (2.0f64).exp()).abs() < 1e-6);
        assert!(z[(0, 1)].abs() < 1e-12 && z[(1, 0)].abs() < 1e-12);
    }

    #[test]
    fn cocycle_within_tolerance() {
        let op = scalar_sys("0", "-0.5", grid01([0.0, 6.0]));
        for (t, tau, s) in [(5.3, 2.1, 0.4), (0.7, 3.3, 5.9), (4.0, 4.5, 1.1)] {
            let lhs = op.transition_z(t, tau).unwrap() * op.transition_z(tau, s).unwrap();
            let rhs = op.transition_z(t, s).unwrap();
            let denom = mat_norm(&rhs).max(1.0);
            assert!(mat_norm(&(lhs - rhs.clone())) / denom < 1e-9);
        }
    }

    #[test]
    fn derivative_identity_at_non_knot_times() {
        // dZ(t,tau)/dt = M(t) Z(t,tau) + M0(t) Z(gamma(t),tau)
        let op = scalar_sys("-0.3", "0.2", grid01([0.0, 6.0]));
        let tau = 0.0;
        for t in [0.4, 1.6, 2.5, 3.3] {
            let eps = 1e-5;
            let zp = op.transition_z(t + eps, tau).unwrap();
            let zm = op.transition_z(t - eps, tau).unwrap();
            let fd = (zp - zm) / (2.0 * eps);
            let gamma = op.grid().gamma(t).unwrap();
            let rhs = op.lin.m_at(t) * op.transition_z(t, tau).unwrap()
                + op.lin.m0_at(t) * op.transition_z(gamma, tau).unwrap();
            assert!(mat_norm(&(fd - rhs)) < 1e-6);
        }
    }

    #[test]
    fn singular_factor_names_interval() {
        // J(t_{r+1}, zeta_r) = 1 - 2*1 < 0 crosses zero inside interval 2 when
        // anchors sit at the left: E(t_3, zeta_2) = 1 + (-1)*1 = 0.
        let op = scalar_sys("0", "-1", grid01([0.0, 4.0]));
        match op.transition_z(3.5, 0.0) {
            Err(TransitionError::SingularFactor { interval, .. }) => {
                assert!(interval < 4);
            }
            other => panic!("expected singular factor, got {other:?}"),
        }
    }

    #[test]
    fn z_split_projection_branches() {
        let op = scalar_sys("-1", "0", grid01([0.0, 4.0]));
        let full = DichotomySpec::new(DMatrix::identity(1, 1), 1.0, 1.0).unwrap();
        let zero = DichotomySpec::new(DMatrix::zeros(1, 1), 1.0, 1.0).unwrap();
        let z = op.transition_z(2.0, 0.5).unwrap();
        let zp = op.z_split(2.0, 0.5, &full).unwrap();
        assert!(mat_norm(&(z - zp)) < 1e-12);
        assert_eq!(op.z_split(2.0, 0.5, &zero).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn z_split_diagonal_oracle() {
        let sys = DepcagSystem::new(
            grid01([0.0, 4.0]),
            MatrixExpr::parse(&[vec!["-1".into(), "0".into()], vec!["0".into(), "1".into()]], "M")
                .unwrap(),
            MatrixExpr::parse(&[vec!["0".into(), "0".into()], vec!["0".into(), "0".into()]], "M0")
                .unwrap(),
            None,
        )
        .unwrap();
        let op = TransitionOperator::new(sys.linear_part(), NumericsConfig::default());
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let d = DichotomySpec::new(p, 1.0, 1.0).unwrap();
        let zp = op.z_split(2.0, 0.0, &d).unwrap();
        assert!((zp[(0, 0)] - (-2.0f64).exp()).abs() < 1e-7);
        assert!(zp[(1, 1)].abs() < 1e-9);
    }

    #[test]
    fn green_local_branch_and_zero_branch() {
        let op = scalar_sys("-1", "0", grid01([0.0, 4.0]));
        let d = DichotomySpec::new(DMatrix::identity(1, 1), 1.0, 1.0).unwrap();
        // t=0.7, s=0.6, both in [zeta_0, t_1): direct Phi branch
        let g = op.green(0.7, 0.6, &d).unwrap();
        assert!((g[(0, 0)] - (-0.1f64).exp()).abs() < 1e-10);
        // s in [t, t_{j+1}]: zero branch, exactly
        let g = op.green(0.5, 0.9, &d).unwrap();
        assert_eq!(g[(0, 0)], 0.0);
    }

    fn integrate_kernel<F>(t: f64, window: i32, kernel: F) -> DMatrix<f64>
    where
        F: Fn(f64, f64) -> DMatrix<f64>,
    {
        // panels split at knots, anchors and t; nodes inset by eps so that the
        // one-sided kernel values at jump points do not contaminate Simpson
        let eps = 1e-9;
        let mut cuts: Vec<f64> = (-window..=window)
            .flat_map(|k| [f64::from(k), f64::from(k) + 0.5])
            .collect();
        cuts.pop();
        cuts.push(t);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut acc: Option<DMatrix<f64>> = None;
        for w in cuts.windows(2) {
            for (s, wgt) in crate::odeint::simpson_nodes(w[0], w[1], 0.02) {
                let s = s.clamp(w[0] + eps, w[1] - eps);
                let v = kernel(t, s) * wgt;
                acc = Some(match acc {
                    Some(a) => a + v,
                    None => v,
                });
            }
        }
        acc.unwrap()
    }

    /// Brute-force Green identity: for constant forcing c the unique bounded
    /// solution is constant, so the kernel must integrate to diag(1, -1) for
    /// the split diag(e^{-t}, e^{t}) system. The case-table kernel only
    /// achieves this with the local split terms restored (`green_vc`); the
    /// plain table matches it at knots and for full projections.
    #[test]
    fn green_kernel_integrates_to_bounded_solution() {
        // anchors at the right endpoint exercise the -Phi and (I-P) branches
        let grid = TimeGrid::uniform([-16.0, 16.0], 1.0, 1.0).unwrap();
        let sys = DepcagSystem::new(
            grid,
            MatrixExpr::parse(&[vec!["-1".into(), "0".into()], vec!["0".into(), "1".into()]], "M")
                .unwrap(),
            MatrixExpr::parse(&[vec!["0".into(), "0".into()], vec!["0".into(), "0".into()]], "M0")
                .unwrap(),
            None,
        )
        .unwrap();
        let op = TransitionOperator::new(sys.linear_part(), NumericsConfig::default());
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let d = DichotomySpec::new(p, 1.0, 1.0).unwrap();
        // expected values carry the window-truncation tails explicitly
        let expected = |t: f64| {
            DMatrix::from_row_slice(
                2,
                2,
                &[1.0 - (-(t + 16.0)).exp(), 0.0, 0.0, -1.0 + (-(16.0 - t)).exp()],
            )
        };
        for t in [0.5, 0.25, -1.75, 0.0] {
            let acc = integrate_kernel(t, 16, |t, s| op.green_vc(t, s, &d).unwrap());
            assert!(
                mat_norm(&(acc.clone() - expected(t))) < 5e-7,
                "green_vc at t={t}: integral {acc}"
            );
        }
        // with left anchors the interval-local correction regions are empty at
        // knots, so the plain table agrees there
        let grid_left = TimeGrid::uniform([-16.0, 16.0], 1.0, 0.0).unwrap();
        let sys_left = DepcagSystem::new(
            grid_left,
            MatrixExpr::parse(&[vec!["-1".into(), "0".into()], vec!["0".into(), "1".into()]], "M")
                .unwrap(),
            MatrixExpr::parse(&[vec!["0".into(), "0".into()], vec!["0".into(), "0".into()]], "M0")
                .unwrap(),
            None,
        )
        .unwrap();
        let op_left = TransitionOperator::new(sys_left.linear_part(), NumericsConfig::default());
        let acc = integrate_kernel(-2.0, 16, |t, s| op_left.green(t, s, &d).unwrap());
        assert!(mat_norm(&(acc.clone() - expected(-2.0))) < 5e-7, "table at knot: {acc}");
        let acc = integrate_kernel(-1.25, 16, |t, s| op_left.green_vc(t, s, &d).unwrap());
        assert!(mat_norm(&(acc.clone() - expected(-1.25))) < 5e-7, "green_vc left anchors: {acc}");
    }

    /// With a full projection and `t` past the interval anchor the case table
    /// needs no correction; `green_vc` closes the identity everywhere else.
    #[test]
    fn green_table_exact_for_full_projection() {
        let grid = TimeGrid::uniform([-16.0, 16.0], 1.0, 0.5).unwrap();
        let sys = DepcagSystem::new(
            grid,
            MatrixExpr::parse(&[vec!["-1".into()]], "M").unwrap(),
            MatrixExpr::parse(&[vec!["0".into()]], "M0").unwrap(),
            None,
        )
        .unwrap();
        let op = TransitionOperator::new(sys.linear_part(), NumericsConfig::default());
        let d = DichotomySpec::new(DMatrix::identity(1, 1), 1.0, 1.0).unwrap();
        let expected = |t: f64| 1.0 - (-(t + 16.0)).exp();
        // t in the advanced part (zeta_j, t_{j+1}): plain table closes
        for t in [0.75, -1.4] {
            let acc = integrate_kernel(t, 16, |t, s| op.green(t, s, &d).unwrap());
            assert!((acc[(0, 0)] - expected(t)).abs() < 5e-7, "t={t}: {acc}");
        }
        // any position: corrected kernel closes
        for t in [0.3, 0.75, -1.6] {
            let acc_vc = integrate_kernel(t, 16, |t, s| op.green_vc(t, s, &d).unwrap());
            assert!((acc_vc[(0, 0)] - expected(t)).abs() < 5e-7, "t={t}: {acc_vc}");
        }
    }

    #[test]
    fn green_block_scalar_branches() {
        let op = scalar_sys("-1", "0", grid01([0.0, 6.0]));
        // branch 4: s in [zeta_j, t]
        let g = op.green_block(2.7, 2.4, 0.3).unwrap();
        assert!((g[(0, 0)] - (-0.3f64).exp()).abs() < 1e-9);
        // s = t gives the identity
        let g = op.green_block(2.7, 2.7, 0.3).unwrap();
        assert!((g[(0, 0)] - 1.0).abs() < 1e-12);
        // generic knot-anchored branch equals e^{-(t-s)} for this system
        let g = op.green_block(4.2, 1.3, 0.3).unwrap();
        assert!((g[(0, 0)] - (-2.9f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn green_block_decay_bound() {
        // |G_1(t,s)| <= K rho_tilde(A) e^{-alpha (t-s)}; here rho = e,
        // rho0 = e^2, so rho_tilde = e^3 with alpha = 1, K = 1.
        let op = scalar_sys("-1", "0", grid01([0.0, 6.0]));
        let rho_tilde = (3.0f64).exp();
        let mut rng_t = 0.37_f64;
        for k in 0..1000 {
            rng_t = (rng_t * 97.31 + k as f64 * 0.173).rem_euclid(6.0);
            let s = (rng_t * 0.77).rem_euclid(6.0);
            let (t, s) = if rng_t >= s { (rng_t, s) } else { (s, rng_t) };
            let g = op.green_block(t, s, s).unwrap();
            let bound = rho_tilde * (-(t - s)).exp();
            assert!(
                mat_norm(&g) <= bound * (1.0 + 1e-9),
                "t={t} s={s}: |G|={} bound={bound}",
                mat_norm(&g)
            );
        }
    }

    #[test]
    fn voc_path_is_contiguous_and_oriented() {
        let grid = TimeGrid::uniform([0.0, 6.0], 1.0, 0.5).unwrap();
        let sys = DepcagSystem::new(
            grid,
            MatrixExpr::parse(&[vec!["0".into()]], "M").unwrap(),
            MatrixExpr::parse(&[vec!["0".into()]], "M0").unwrap(),
            None,
        )
        .unwrap();
        let op = TransitionOperator::new(sys.linear_part(), NumericsConfig::default());
        for (tau, t) in [(0.2, 4.7), (4.7, 0.2), (1.2, 1.8), (2.6, 2.1)] {
            let path = op.voc_path(tau, t).unwrap();
            assert!((path.first().unwrap().from - tau).abs() < 1e-12);
            assert!((path.last().unwrap().to - t).abs() < 1e-12);
            for w in path.windows(2) {
                assert!((w[0].to - w[1].from).abs() < 1e-12, "gap in {path:?}");
            }
            // signed lengths telescope to t - tau
            let total: f64 = path.iter().map(|s| s.to - s.from).sum();
            assert!((total - (t - tau)).abs() < 1e-12);
        }
    }

    #[test]
    fn lemma_bounds_within_one_interval() {
        // scalar M=-1: rho = e (theta = 1), nu = 0 so rho0 = e^2
        let op = scalar_sys("-1", "0", grid01([0.0, 4.0]));
        let rho = 1.0f64.exp();
        let rho0 = 2.0f64.exp();
        for (t, s) in [(0.2, 0.9), (0.9, 0.2), (1.0, 0.0), (2.0, 3.0)] {
            let phi = op.fundamental(t, s).unwrap();
            assert!(mat_norm(&phi) <= rho * (1.0 + 1e-9));
            let z = op.transition_z(t, s).unwrap();
            assert!(mat_norm(&z) <= rho0 * (1.0 + 1e-9));
        }
    }

    #[test]
    fn green_bound_lemma() {
        // |G(t,s)| <= K rho* e^{-alpha |t-s|}, rho* = rho e^{alpha theta} = e^2
        let op = scalar_sys("-1", "0", grid01([0.0, 6.0]));
        let d = DichotomySpec::new(DMatrix::identity(1, 1), 1.0, 1.0).unwrap();
        let rho_star = 2.0f64.exp();
        for (t, s) in [(0.3, 0.1), (2.7, 0.4), (1.1, 4.9), (5.0, 5.0), (4.5, 1.5)] {
            let g = op.green(t, s, &d).unwrap();
            let bound = rho_star * (-(t - s).abs()).exp();
            assert!(mat_norm(&g) <= bound * (1.0 + 1e-9), "t={t} s={s}");
        }
    }


}
