//! System definitions: matrix expressions, nonlinear terms with declared
//! bounds, the scalar- and block-structured systems, dichotomy data and
//! numerics knobs.

use super::{ModelError, TimeGrid};
use crate::expr::{self, Expr};
use crate::odeint::{mat_norm, vec_norm};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Fixed seed for load-time spot checks, so validation is deterministic.
const SPOT_CHECK_SEED: u64 = 0xdec_a6;
const SPOT_CHECK_SAMPLES: usize = 200;
/// Relative slack when checking declared bounds against sampled values.
const BOUND_SLACK: f64 = 1e-9;

pub type MatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;
pub type RhsFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A square matrix whose entries are expressions in `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixExpr {
    rows: Vec<Vec<Expr>>,
    dim: usize,
}

impl MatrixExpr {
    pub fn parse(rows: &[Vec<String>], what: &str) -> Result<Self, ModelError> {
        let dim = rows.len();
        if dim == 0 {
            return Err(ModelError::Schema(format!("{what}: empty matrix")));
        }
        let mut out = Vec::with_capacity(dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(ModelError::Schema(format!(
                    "{what}: row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            let mut parsed = Vec::with_capacity(dim);
            for (j, src) in row.iter().enumerate() {
                let e = expr::parse(src).map_err(|err| {
                    ModelError::Schema(format!("{what}[{i}][{j}]: {err}"))
                })?;
                for v in e.variables() {
                    if v != "t" {
                        return Err(ModelError::Schema(format!(
                            "{what}[{i}][{j}]: unknown identifier `{v}` (matrix entries may only use t)"
                        )));
                    }
                }
                parsed.push(e);
            }
            out.push(parsed);
        }
        Ok(MatrixExpr { rows: out, dim })
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        let dim = m.nrows();
        let rows = (0..dim)
            .map(|i| (0..dim).map(|j| Expr::Num(m[(i, j)])).collect())
            .collect();
        MatrixExpr { rows, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Evaluates at `t`; non-finite entries become NaN and are caught by the
    /// integration layer.
    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        let resolve = |name: &str| if name == "t" { Some(t) } else { None };
        DMatrix::from_fn(self.dim, self.dim, |i, j| {
            self.rows[i][j].eval(&resolve).unwrap_or(f64::NAN)
        })
    }

    pub fn to_strings(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|e| e.to_string()).collect())
            .collect()
    }

    /// Largest sampled operator norm over knots, anchors, midpoints and a few
    /// random times. Also the condition (B1) finiteness surrogate.
    pub fn sampled_sup_norm(&self, grid: &TimeGrid, cond: &'static str) -> Result<f64, ModelError> {
        let mut sup = 0.0_f64;
        let mut rng = ChaCha8Rng::seed_from_u64(SPOT_CHECK_SEED);
        let mut probe = |t: f64| -> Result<(), ModelError> {
            let m = self.eval(t);
            if !m.iter().all(|v| v.is_finite()) {
                return Err(ModelError::condition(
                    cond,
                    format!("matrix entry not finite at t = {t}"),
                ));
            }
            sup = sup.max(mat_norm(&m));
            Ok(())
        };
        for i in 0..grid.num_intervals() {
            let (a, b) = grid.interval(i);
            probe(a)?;
            probe(grid.anchor(i))?;
            probe(0.5 * (a + b))?;
        }
        probe(grid.t_max())?;
        for _ in 0..SPOT_CHECK_SAMPLES {
            let t = rng.random_range(grid.t_min()..=grid.t_max());
            probe(t)?;
        }
        Ok(sup)
    }
}

/// Which state variables a nonlinear term reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarPrefix {
    Z,
    X,
    Y,
}

impl VarPrefix {
    pub fn as_char(self) -> char {
        match self {
            VarPrefix::Z => 'z',
            VarPrefix::X => 'x',
            VarPrefix::Y => 'y',
        }
    }
}

/// A vector-valued nonlinearity `h(t, v, v_gamma)` with declared growth,
/// offset and Lipschitz constants. The frozen-argument components are always
/// spelled `w1..wn` in expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearTerm {
    exprs: Vec<Expr>,
    pub prefix: VarPrefix,
    pub dim_in: usize,
    pub dim_out: usize,
    pub growth_r: f64,
    pub offset_mu: f64,
    pub lipschitz_l: f64,
}

struct TermBindings<'a> {
    t: f64,
    prefix: char,
    state: &'a DVector<f64>,
    frozen: &'a DVector<f64>,
}

impl expr::VarResolver for TermBindings<'_> {
    fn resolve(&self, name: &str) -> Option<f64> {
        if name == "t" {
            return Some(self.t);
        }
        let mut chars = name.chars();
        let head = chars.next()?;
        let idx: usize = chars.as_str().parse().ok()?;
        if idx == 0 {
            return None;
        }
        let slot = idx - 1;
        if head == self.prefix {
            self.state.get(slot).copied()
        } else if head == 'w' {
            self.frozen.get(slot).copied()
        } else {
            None
        }
    }
}

impl NonlinearTerm {
    pub fn parse(
        exprs: &[String],
        prefix: VarPrefix,
        dim_in: usize,
        growth_r: f64,
        offset_mu: f64,
        lipschitz_l: f64,
        what: &str,
    ) -> Result<Self, ModelError> {
        if exprs.is_empty() {
            return Err(ModelError::Schema(format!("{what}: empty expression list")));
        }
        if growth_r < 0.0 || offset_mu < 0.0 || lipschitz_l < 0.0 {
            return Err(ModelError::condition(
                "B2",
                format!("{what}: declared constants must be nonnegative"),
            ));
        }
        let mut parsed = Vec::with_capacity(exprs.len());
        for (k, src) in exprs.iter().enumerate() {
            let e = expr::parse(src)
                .map_err(|err| ModelError::Schema(format!("{what}[{k}]: {err}")))?;
            for v in e.variables() {
                let ok = v == "t"
                    || Self::var_index(&v, prefix.as_char(), dim_in).is_some()
                    || Self::var_index(&v, 'w', dim_in).is_some();
                if !ok {
                    return Err(ModelError::Schema(format!(
                        "{what}[{k}]: unknown identifier `{v}` for arity {dim_in}"
                    )));
                }
            }
            parsed.push(e);
        }
        Ok(NonlinearTerm {
            dim_out: parsed.len(),
            exprs: parsed,
            prefix,
            dim_in,
            growth_r,
            offset_mu,
            lipschitz_l,
        })
    }

    fn var_index(name: &str, prefix: char, dim: usize) -> Option<usize> {
        let mut chars = name.chars();
        if chars.next()? != prefix {
            return None;
        }
        let idx: usize = chars.as_str().parse().ok()?;
        (1..=dim).contains(&idx).then(|| idx - 1)
    }

    pub fn eval(&self, t: f64, state: &DVector<f64>, frozen: &DVector<f64>) -> DVector<f64> {
        let bindings = TermBindings {
            t,
            prefix: self.prefix.as_char(),
            state,
            frozen,
        };
        DVector::from_iterator(
            self.dim_out,
            self.exprs
                .iter()
                .map(|e| e.eval(&bindings).unwrap_or(f64::NAN)),
        )
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.exprs.iter().map(|e| e.to_string()).collect()
    }

    /// Samples `(t, v, w)` triples and rejects the term if a sampled value
    /// violates `|h| <= r(|v|+|w|) + mu` or the declared Lipschitz estimate.
    pub fn spot_check(&self, grid: &TimeGrid, cond: &'static str, what: &str) -> Result<(), ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(SPOT_CHECK_SEED ^ 0x5150);
        let radius = 5.0;
        for _ in 0..SPOT_CHECK_SAMPLES {
            let t = rng.random_range(grid.t_min()..=grid.t_max());
            let draw = |rng: &mut ChaCha8Rng| {
                DVector::from_iterator(
                    self.dim_in,
                    (0..self.dim_in).map(|_| rng.random_range(-radius..=radius)),
                )
            };
            let v = draw(&mut rng);
            let w = draw(&mut rng);
            let hv = self.eval(t, &v, &w);
            if !hv.iter().all(|x| x.is_finite()) {
                return Err(ModelError::condition(
                    cond,
                    format!("{what}: non-finite value at sampled point t = {t}"),
                ));
            }
            let bound = self.growth_r * (vec_norm(&v) + vec_norm(&w)) + self.offset_mu;
            if vec_norm(&hv) > bound * (1.0 + BOUND_SLACK) + 1e-12 {
                return Err(ModelError::condition(
                    cond,
                    format!(
                        "{what}: sampled |value| {} exceeds declared bound {} at t = {t}",
                        vec_norm(&hv),
                        bound
                    ),
                ));
            }
            let v2 = draw(&mut rng);
            let w2 = draw(&mut rng);
            let hv2 = self.eval(t, &v2, &w2);
            let lhs = vec_norm(&(&hv - &hv2));
            let rhs = self.lipschitz_l * (vec_norm(&(&v - &v2)) + vec_norm(&(&w - &w2)));
            if lhs > rhs * (1.0 + BOUND_SLACK) + 1e-12 {
                return Err(ModelError::condition(
                    cond,
                    format!(
                        "{what}: sampled Lipschitz ratio exceeds declared constant {} at t = {t}",
                        self.lipschitz_l
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// The scalar-form system `z' = M(t) z + M0(t) z(gamma(t)) + h(t, z, z_gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepcagSystem {
    pub grid: TimeGrid,
    pub m: MatrixExpr,
    pub m0: MatrixExpr,
    pub h: Option<NonlinearTerm>,
    pub dim: usize,
    /// Sampled sup norms of `M` and `M0` over the window (used for the
    /// per-interval contraction constant of the anchor solve).
    pub m_sup: f64,
    pub m0_sup: f64,
}

impl DepcagSystem {
    pub fn new(
        grid: TimeGrid,
        m: MatrixExpr,
        m0: MatrixExpr,
        h: Option<NonlinearTerm>,
    ) -> Result<Self, ModelError> {
        let dim = m.dim();
        if m0.dim() != dim {
            return Err(ModelError::Schema(format!(
                "M is {dim}x{dim} but M0 is {}x{}",
                m0.dim(),
                m0.dim()
            )));
        }
        let m_sup = m.sampled_sup_norm(&grid, "B1")?;
        let m0_sup = m0.sampled_sup_norm(&grid, "B1")?;
        if let Some(term) = &h {
            if term.dim_in != dim || term.dim_out != dim {
                return Err(ModelError::Schema(format!(
                    "h has dimension {}, system has dimension {dim}",
                    term.dim_out
                )));
            }
            term.spot_check(&grid, "B2", "h")?;
        }
        Ok(DepcagSystem {
            grid,
            m,
            m0,
            h,
            dim,
            m_sup,
            m0_sup,
        })
    }

    pub fn is_linear(&self) -> bool {
        self.h.is_none()
    }

    pub fn linear_part(&self) -> LinearDepcag {
        let m = self.m.clone();
        let m0 = self.m0.clone();
        LinearDepcag {
            dim: self.dim,
            grid: self.grid.clone(),
            m: Arc::new(move |t| m.eval(t)),
            m0: Arc::new(move |t| m0.eval(t)),
        }
    }

    pub fn rhs_fn(&self) -> Option<RhsFn> {
        self.h.clone().map(|term| -> RhsFn {
            Arc::new(move |t, z, w| term.eval(t, z, w))
        })
    }
}

/// The block-structured system: an `x` block driven by `A, A0, f, phi` and a
/// `y` block driven by `B, B0, g, psi`, with shared bound constants.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSystem {
    pub grid: TimeGrid,
    pub a: MatrixExpr,
    pub a0: MatrixExpr,
    pub b: MatrixExpr,
    pub b0: MatrixExpr,
    pub f: NonlinearTerm,
    pub g: NonlinearTerm,
    pub phi: NonlinearTerm,
    pub psi: NonlinearTerm,
    pub lambda: f64,
    pub delta: f64,
    pub omega: f64,
    pub beta: f64,
    pub beta0: f64,
    pub n1: usize,
    pub n2: usize,
}

impl BlockSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: TimeGrid,
        a: MatrixExpr,
        a0: MatrixExpr,
        b: MatrixExpr,
        b0: MatrixExpr,
        f: NonlinearTerm,
        g: NonlinearTerm,
        phi: NonlinearTerm,
        psi: NonlinearTerm,
        lambda: f64,
        delta: f64,
        omega: f64,
        beta: f64,
        beta0: f64,
    ) -> Result<Self, ModelError> {
        let n1 = a.dim();
        let n2 = b.dim();
        if a0.dim() != n1 || b0.dim() != n2 {
            return Err(ModelError::Schema(
                "A0/B0 dimensions must match A/B".into(),
            ));
        }
        for (term, dim_in, dim_out, what) in [
            (&f, n1, n1, "f"),
            (&g, n1, n2, "g"),
            (&phi, n2, n1, "phi"),
            (&psi, n2, n2, "psi"),
        ] {
            if term.dim_in != dim_in || term.dim_out != dim_out {
                return Err(ModelError::Schema(format!(
                    "{what} must map {dim_in} state components to {dim_out} outputs"
                )));
            }
        }
        // frakB1: sampled sup norms within the declared beta / beta0
        for (mat, bound, name) in [
            (&a, beta, "A"),
            (&b, beta, "B"),
            (&a0, beta0, "A0"),
            (&b0, beta0, "B0"),
        ] {
            let sup = mat.sampled_sup_norm(&grid, "frakB1")?;
            if sup > bound * (1.0 + BOUND_SLACK) + 1e-12 {
                return Err(ModelError::condition(
                    "frakB1",
                    format!("sampled |{name}| = {sup} exceeds declared bound {bound}"),
                ));
            }
        }
        // frakB2 growth/offset and frakB3 Lipschitz spot checks
        f.spot_check(&grid, "frakB2", "f")?;
        g.spot_check(&grid, "frakB2", "g")?;
        phi.spot_check(&grid, "frakB2", "phi")?;
        psi.spot_check(&grid, "frakB2", "psi")?;
        Ok(BlockSystem {
            grid,
            a,
            a0,
            b,
            b0,
            f,
            g,
            phi,
            psi,
            lambda,
            delta,
            omega,
            beta,
            beta0,
            n1,
            n2,
        })
    }

    pub fn dim(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn x_linear(&self) -> LinearDepcag {
        let a = self.a.clone();
        let a0 = self.a0.clone();
        LinearDepcag {
            dim: self.n1,
            grid: self.grid.clone(),
            m: Arc::new(move |t| a.eval(t)),
            m0: Arc::new(move |t| a0.eval(t)),
        }
    }

    pub fn y_linear(&self) -> LinearDepcag {
        let b = self.b.clone();
        let b0 = self.b0.clone();
        LinearDepcag {
            dim: self.n2,
            grid: self.grid.clone(),
            m: Arc::new(move |t| b.eval(t)),
            m0: Arc::new(move |t| b0.eval(t)),
        }
    }

    /// Block-diagonal linear part `diag(A, B)`, `diag(A0, B0)` of the full system.
    pub fn full_linear(&self) -> LinearDepcag {
        let (a, b) = (self.a.clone(), self.b.clone());
        let (a0, b0) = (self.a0.clone(), self.b0.clone());
        let (n1, n2) = (self.n1, self.n2);
        let blockdiag = move |ma: &MatrixExpr, mb: &MatrixExpr, t: f64| {
            let ma = ma.eval(t);
            let mb = mb.eval(t);
            let mut out = DMatrix::zeros(n1 + n2, n1 + n2);
            out.view_mut((0, 0), (n1, n1)).copy_from(&ma);
            out.view_mut((n1, n1), (n2, n2)).copy_from(&mb);
            out
        };
        LinearDepcag {
            dim: n1 + n2,
            grid: self.grid.clone(),
            m: Arc::new({
                let blockdiag = blockdiag.clone();
                move |t| blockdiag(&a, &b, t)
            }),
            m0: Arc::new(move |t| blockdiag(&a0, &b0, t)),
        }
    }

    /// Full nonlinearity of the system: `(f + phi, g + psi)`; set
    /// `with_phi_psi = false` for the intermediate system that drops the
    /// bounded `y`-terms.
    pub fn full_rhs(&self, with_phi_psi: bool) -> RhsFn {
        let (f, g) = (self.f.clone(), self.g.clone());
        let (phi, psi) = (self.phi.clone(), self.psi.clone());
        let (n1, n2) = (self.n1, self.n2);
        Arc::new(move |t, z, w| {
            let x = z.rows(0, n1).into_owned();
            let y = z.rows(n1, n2).into_owned();
            let xw = w.rows(0, n1).into_owned();
            let yw = w.rows(n1, n2).into_owned();
            let mut top = f.eval(t, &x, &xw);
            let mut bottom = g.eval(t, &x, &xw);
            if with_phi_psi {
                top += phi.eval(t, &y, &yw);
                bottom += psi.eval(t, &y, &yw);
            }
            let mut out = DVector::zeros(n1 + n2);
            out.rows_mut(0, n1).copy_from(&top);
            out.rows_mut(n1, n2).copy_from(&bottom);
            out
        })
    }

    /// Nonlinearity of the `x` subsystem alone (`f`, no `phi`).
    pub fn x_rhs(&self) -> RhsFn {
        let f = self.f.clone();
        Arc::new(move |t, x, w| f.eval(t, x, w))
    }

    /// Default projection `diag(I_{n1}, 0)`.
    pub fn default_projection(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.dim(), self.dim());
        for i in 0..self.n1 {
            p[(i, i)] = 1.0;
        }
        p
    }
}

/// Runtime view of a linear system with frozen argument: the data the
/// transition and solution machinery actually consumes.
#[derive(Clone)]
pub struct LinearDepcag {
    pub dim: usize,
    pub grid: TimeGrid,
    pub m: MatrixFn,
    pub m0: MatrixFn,
}

impl LinearDepcag {
    pub fn m_at(&self, t: f64) -> DMatrix<f64> {
        (self.m)(t)
    }

    pub fn m0_at(&self, t: f64) -> DMatrix<f64> {
        (self.m0)(t)
    }
}

impl std::fmt::Debug for LinearDepcag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearDepcag")
            .field("dim", &self.dim)
            .field("window", &(self.grid.t_min(), self.grid.t_max()))
            .finish()
    }
}

/// Projection / constants of an exponential dichotomy.
#[derive(Debug, Clone, PartialEq)]
pub struct DichotomySpec {
    pub projection: DMatrix<f64>,
    pub big_k: f64,
    pub alpha: f64,
}

impl DichotomySpec {
    pub fn new(projection: DMatrix<f64>, big_k: f64, alpha: f64) -> Result<Self, ModelError> {
        if projection.nrows() != projection.ncols() {
            return Err(ModelError::Schema("projection must be square".into()));
        }
        let diff = &projection * &projection - &projection;
        if mat_norm(&diff) > 1e-10 {
            return Err(ModelError::condition(
                "Def3",
                "projection is not idempotent (P*P != P)".into(),
            ));
        }
        if !(big_k >= 1.0) {
            return Err(ModelError::condition("Def3", "K must be >= 1".into()));
        }
        if !(alpha > 0.0) {
            return Err(ModelError::condition("Def3", "alpha must be > 0".into()));
        }
        Ok(DichotomySpec {
            projection,
            big_k,
            alpha,
        })
    }

    pub fn complement(&self) -> DMatrix<f64> {
        DMatrix::identity(self.projection.nrows(), self.projection.ncols()) - &self.projection
    }
}

/// Numeric tolerances and iteration limits.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    pub ode_step: f64,
    pub fp_tol: f64,
    pub picard_tol: f64,
    pub tail_tol: f64,
    pub crossing_tol: f64,
    pub max_iters: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            ode_step: 0.01,
            fp_tol: 1e-12,
            picard_tol: 1e-7,
            tail_tol: 1e-7,
            crossing_tol: 1e-9,
            max_iters: 400,
        }
    }
}

impl NumericsConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let all_pos = self.ode_step > 0.0
            && self.fp_tol > 0.0
            && self.picard_tol > 0.0
            && self.tail_tol > 0.0
            && self.crossing_tol > 0.0;
        if !all_pos {
            return Err(ModelError::Schema(
                "numerics: all tolerances must be positive".into(),
            ));
        }
        if self.max_iters < 1 {
            return Err(ModelError::Schema("numerics: max_iters must be >= 1".into()));
        }
        Ok(())
    }

    /// Substep used inside one grid interval of length `len`.
    pub fn interval_substep(&self, len: f64) -> f64 {
        self.ode_step.min(len.abs() / 8.0).max(1e-12)
    }

    /// Sample spacing for bounded-solution representations.
    pub fn sample_step(&self, theta: f64) -> f64 {
        (4.0 * self.ode_step).min(theta / 16.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::uniform([0.0, 4.0], 1.0, 0.0).unwrap()
    }

    #[test]
    fn matrix_expr_rejects_state_variables() {
        let err = MatrixExpr::parse(&[vec!["z1".into()]], "M").unwrap_err();
        assert!(err.to_string().contains("unknown identifier"));
    }

    #[test]
    fn nonlinear_term_arity_enforced() {
        let err = NonlinearTerm::parse(
            &["z3".into()],
            VarPrefix::Z,
            2,
            1.0,
            0.0,
            1.0,
            "h",
        )
        .unwrap_err();
        assert!(err.to_string().contains("unknown identifier"));
    }

    #[test]
    fn growth_bound_spot_check_rejects_lies() {
        // |10 z1| is not <= 0.1(|z|+|w|) + 0
        let term = NonlinearTerm::parse(
            &["10*z1".into()],
            VarPrefix::Z,
            1,
            0.1,
            0.0,
            20.0,
            "h",
        )
        .unwrap();
        let err = term.spot_check(&grid(), "B2", "h").unwrap_err();
        assert!(err.to_string().contains("B2"), "{err}");
    }

    #[test]
    fn lipschitz_spot_check_rejects_lies() {
        let term = NonlinearTerm::parse(
            &["2*z1".into()],
            VarPrefix::Z,
            1,
            3.0,
            0.0,
            0.5,
            "h",
        )
        .unwrap();
        let err = term.spot_check(&grid(), "B2", "h").unwrap_err();
        assert!(err.to_string().contains("Lipschitz"), "{err}");
    }

    #[test]
    fn honest_bounds_pass() {
        let term = NonlinearTerm::parse(
            &["0.1*sin(z1) + 0.05*w1".into()],
            VarPrefix::Z,
            1,
            0.15,
            0.0,
            0.15,
            "h",
        )
        .unwrap();
        term.spot_check(&grid(), "B2", "h").unwrap();
    }

    #[test]
    fn projection_must_be_idempotent() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 0.0]);
        // that one happens to be idempotent: P^2 = [[1, .5],[0,0]] = P
        assert!(DichotomySpec::new(p, 1.0, 1.0).is_ok());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        let err = DichotomySpec::new(bad, 1.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("idempotent"));
    }

    #[test]
    fn depcag_scalar_construction() {
        let sys = DepcagSystem::new(
            grid(),
            MatrixExpr::parse(&[vec!["-1".into()]], "M").unwrap(),
            MatrixExpr::parse(&[vec!["0".into()]], "M0").unwrap(),
            None,
        )
        .unwrap();
        assert_eq!(sys.dim, 1);
        assert!(sys.is_linear());
        assert!((sys.m_sup - 1.0).abs() < 1e-12);
        assert_eq!(sys.m0_sup, 0.0);
    }
}
