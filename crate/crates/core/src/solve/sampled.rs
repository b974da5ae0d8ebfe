//! Grid-sampled functions: solver output trajectories and the uniformly
//! sampled elements the contraction iteration works on. Both interpolate
//! linearly between samples and clamp outside their domain.

use nalgebra::DVector;

/// Solver output: states at strictly increasing times (all integration
/// substeps, knots and anchors that were crossed), plus the per-interval
/// fixed-point iteration counts.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    values: Vec<DVector<f64>>,
    /// `(interval index, anchor iterations)`; 0 iterations marks the direct
    /// linear solve.
    pub fp_iterations: Vec<(usize, usize)>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, values: Vec<DVector<f64>>) -> Self {
        assert_eq!(times.len(), values.len());
        assert!(!times.is_empty());
        debug_assert!(times.windows(2).all(|w| w[0] < w[1]));
        Trajectory {
            times,
            values,
            fp_iterations: Vec::new(),
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    pub fn first(&self) -> &DVector<f64> {
        &self.values[0]
    }

    pub fn last(&self) -> &DVector<f64> {
        self.values.last().unwrap()
    }

    /// Linear interpolation, clamped to the stored range.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        if t <= self.times[0] {
            return self.values[0].clone();
        }
        if t >= *self.times.last().unwrap() {
            return self.values.last().unwrap().clone();
        }
        let idx = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).expect("finite times"))
        {
            Ok(i) => return self.values[i].clone(),
            Err(i) => i,
        };
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let w = (t - t0) / (t1 - t0);
        &self.values[idx - 1] * (1.0 - w) + &self.values[idx] * w
    }
}

/// A vector function sampled on a uniform grid.
#[derive(Debug, Clone)]
pub struct SampledFunction {
    t0: f64,
    dt: f64,
    values: Vec<DVector<f64>>,
}

impl SampledFunction {
    pub fn new(t0: f64, dt: f64, values: Vec<DVector<f64>>) -> Self {
        assert!(dt > 0.0 && values.len() >= 2);
        SampledFunction { t0, dt, values }
    }

    pub fn zeros(t0: f64, dt: f64, count: usize, dim: usize) -> Self {
        SampledFunction::new(t0, dt, vec![DVector::zeros(dim); count])
    }

    pub fn constant(t0: f64, dt: f64, count: usize, value: &DVector<f64>) -> Self {
        SampledFunction::new(t0, dt, vec![value.clone(); count])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn time(&self, idx: usize) -> f64 {
        self.t0 + idx as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn step(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.values
    }

    /// Linear interpolation, clamped to the sample range.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let x = (t - self.t0) / self.dt;
        if x <= 0.0 {
            return self.values[0].clone();
        }
        let last = (self.len() - 1) as f64;
        if x >= last {
            return self.values.last().unwrap().clone();
        }
        let idx = x.floor() as usize;
        let w = x - idx as f64;
        if w == 0.0 {
            self.values[idx].clone()
        } else {
            &self.values[idx] * (1.0 - w) + &self.values[idx + 1] * w
        }
    }

    /// Largest infinity norm over the samples.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .map(crate::odeint::vec_norm)
            .fold(0.0, f64::max)
    }
}
