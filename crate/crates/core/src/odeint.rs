//! Fixed-step classical 4th-order integration and composite Simpson quadrature.
//!
//! Everything here is deterministic: substep counts are derived from the span
//! and a target step, never from error estimates.

use nalgebra::{DMatrix, DVector};

/// Number of substeps for a span, at least `min_steps`, honoring `h_target`.
pub fn substeps(span: f64, h_target: f64, min_steps: usize) -> usize {
    let span = span.abs();
    if span == 0.0 {
        return 0;
    }
    let by_target = (span / h_target).ceil() as usize;
    by_target.max(min_steps).max(1)
}

/// One RK4 step for a vector state.
pub fn rk4_step_vec<F>(f: &F, t: f64, y: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction).
pub fn rk4_span_vec<F>(f: &F, t0: f64, y0: &DVector<f64>, t1: f64, h_target: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let n = substeps(t1 - t0, h_target, 1);
    if n == 0 {
        return y0.clone();
    }
    let h = (t1 - t0) / n as f64;
    let mut y = y0.clone();
    let mut t = t0;
    for k in 0..n {
        y = rk4_step_vec(f, t, &y, h);
        t = t0 + (k + 1) as f64 * (t1 - t0) / n as f64;
    }
    y
}

/// One RK4 step for a matrix state.
pub fn rk4_step_mat<F>(f: &F, t: f64, y: &DMatrix<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(f64, &DMatrix<f64>) -> DMatrix<f64>,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Integrates a matrix ODE from `t0` to `t1`, optionally visiting intermediate states.
pub fn rk4_span_mat<F>(
    f: &F,
    t0: f64,
    y0: &DMatrix<f64>,
    t1: f64,
    h_target: f64,
    mut visit: Option<&mut dyn FnMut(f64, &DMatrix<f64>)>,
) -> DMatrix<f64>
where
    F: Fn(f64, &DMatrix<f64>) -> DMatrix<f64>,
{
    if let Some(v) = visit.as_deref_mut() {
        v(t0, y0);
    }
    let n = substeps(t1 - t0, h_target, 1);
    if n == 0 {
        return y0.clone();
    }
    let mut y = y0.clone();
    let mut t = t0;
    for k in 0..n {
        let h = t0 + (k + 1) as f64 * (t1 - t0) / n as f64 - t;
        y = rk4_step_mat(f, t, &y, h);
        t = t0 + (k + 1) as f64 * (t1 - t0) / n as f64;
        if let Some(v) = visit.as_deref_mut() {
            v(t, &y);
        }
    }
    y
}

/// Composite Simpson nodes and weights on `[a, b]` with subinterval length at
/// most `h_target`. Orientation is signed: if `b < a`, weights are negative.
pub fn simpson_nodes(a: f64, b: f64, h_target: f64) -> Vec<(f64, f64)> {
    let span = b - a;
    if span == 0.0 {
        return Vec::new();
    }
    let m = substeps(span, h_target, 1);
    let h = span / (2 * m) as f64;
    let mut out = Vec::with_capacity(2 * m + 1);
    for k in 0..=(2 * m) {
        let s = a + k as f64 * h;
        let w = if k == 0 || k == 2 * m {
            h / 3.0
        } else if k % 2 == 1 {
            4.0 * h / 3.0
        } else {
            2.0 * h / 3.0
        };
        out.push((s, w));
    }
    out
}

/// Integrates a vector-valued function with composite Simpson.
pub fn simpson_integrate<F>(a: f64, b: f64, h_target: f64, f: F) -> DVector<f64>
where
    F: Fn(f64) -> DVector<f64>,
{
    let nodes = simpson_nodes(a, b, h_target);
    let mut acc: Option<DVector<f64>> = None;
    for (s, w) in nodes {
        let v = f(s) * w;
        acc = Some(match acc {
            Some(a) => a + v,
            None => v,
        });
    }
    acc.expect("empty quadrature span")
}

/// Scalar composite Simpson.
pub fn simpson_scalar<F>(a: f64, b: f64, h_target: f64, f: F) -> f64
where
    F: Fn(f64) -> f64,
{
    simpson_nodes(a, b, h_target)
        .into_iter()
        .map(|(s, w)| f(s) * w)
        .sum()
}

/// Max row-sum (infinity) operator norm; for vectors, the max absolute entry.
pub fn mat_norm(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        let mut row = 0.0;
        for j in 0..m.ncols() {
            row += m[(i, j)].abs();
        }
        worst = worst.max(row);
    }
    worst
}

/// Infinity norm of a vector.
pub fn vec_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}
