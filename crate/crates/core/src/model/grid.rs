//! The knot/anchor time grid and the frozen-argument map.

use super::ModelError;
use serde::{Deserialize, Serialize};

/// Finite working window of knots `t_0 < t_1 < ... < t_N` with one anchor
/// `zeta_i` in each interval `[t_i, t_{i+1}]` and interval-length bound `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    knots: Vec<f64>,
    anchors: Vec<f64>,
    theta: f64,
}

impl TimeGrid {
    /// Builds a grid, validating the ordering conditions. `theta` defaults to
    /// the largest interval length when not supplied.
    pub fn new(knots: Vec<f64>, anchors: Vec<f64>, theta: Option<f64>) -> Result<Self, ModelError> {
        if knots.len() < 2 {
            return Err(ModelError::condition(
                "A1",
                "grid needs at least two knots".to_string(),
            ));
        }
        if anchors.len() != knots.len() - 1 {
            return Err(ModelError::condition(
                "A1",
                format!(
                    "expected {} anchors for {} knots, got {}",
                    knots.len() - 1,
                    knots.len(),
                    anchors.len()
                ),
            ));
        }
        for v in knots.iter().chain(anchors.iter()) {
            if !v.is_finite() {
                return Err(ModelError::condition("A1", "non-finite grid time".into()));
            }
        }
        for i in 0..knots.len() - 1 {
            if !(knots[i] < knots[i + 1]) {
                return Err(ModelError::condition(
                    "A1",
                    format!("A1 violated at interval {i}: t_{i} >= t_{}", i + 1),
                ));
            }
            if !(knots[i] <= anchors[i] && anchors[i] <= knots[i + 1]) {
                return Err(ModelError::condition(
                    "A1",
                    format!("A1 violated at interval {i}: anchor outside [t_{i}, t_{}]", i + 1),
                ));
            }
        }
        let max_len = knots
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0_f64, f64::max);
        let theta = theta.unwrap_or(max_len);
        if !(theta > 0.0) {
            return Err(ModelError::condition("A4", "theta must be positive".into()));
        }
        for i in 0..knots.len() - 1 {
            if knots[i + 1] - knots[i] > theta * (1.0 + 1e-12) {
                return Err(ModelError::condition(
                    "A4",
                    format!("A4 violated at interval {i}: length exceeds theta"),
                ));
            }
        }
        Ok(TimeGrid {
            knots,
            anchors,
            theta,
        })
    }

    /// Uniform grid over `window` with step `step`; each anchor sits at
    /// `t_i + anchor_fraction * (t_{i+1} - t_i)`.
    pub fn uniform(window: [f64; 2], step: f64, anchor_fraction: f64) -> Result<Self, ModelError> {
        if !(step > 0.0) {
            return Err(ModelError::condition("A1", "uniform step must be positive".into()));
        }
        if !(0.0..=1.0).contains(&anchor_fraction) {
            return Err(ModelError::condition(
                "A1",
                "anchor fraction must lie in [0, 1]".into(),
            ));
        }
        let [a, b] = window;
        if !(b > a) {
            return Err(ModelError::condition("A1", "empty window".into()));
        }
        let n = ((b - a) / step).round().max(1.0) as usize;
        // require the window to be an integral number of steps
        if ((b - a) - n as f64 * step).abs() > 1e-9 * step.max(1.0) {
            return Err(ModelError::condition(
                "A1",
                "window length is not a multiple of the uniform step".into(),
            ));
        }
        let knots: Vec<f64> = (0..=n).map(|k| a + k as f64 * step).collect();
        let anchors: Vec<f64> = (0..n)
            .map(|k| knots[k] + anchor_fraction * (knots[k + 1] - knots[k]))
            .collect();
        TimeGrid::new(knots, anchors, Some(step))
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn anchors(&self) -> &[f64] {
        &self.anchors
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn t_min(&self) -> f64 {
        self.knots[0]
    }

    pub fn t_max(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn num_intervals(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn knot(&self, i: usize) -> f64 {
        self.knots[i]
    }

    pub fn anchor(&self, i: usize) -> f64 {
        self.anchors[i]
    }

    pub fn interval(&self, i: usize) -> (f64, f64) {
        (self.knots[i], self.knots[i + 1])
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_min() - 1e-12 && t <= self.t_max() + 1e-12
    }

    /// Index `i` with `t in [t_i, t_{i+1})`; the right window edge maps to the
    /// last interval (closure convention).
    pub fn interval_of(&self, t: f64) -> Result<usize, ModelError> {
        if !self.contains(t) {
            return Err(ModelError::OutsideWindow {
                t,
                window: (self.t_min(), self.t_max()),
            });
        }
        let n = self.num_intervals();
        match self
            .knots
            .binary_search_by(|k| k.partial_cmp(&t).expect("finite knots"))
        {
            Ok(idx) => Ok(idx.min(n - 1)),
            Err(idx) => Ok(idx.saturating_sub(1).min(n - 1)),
        }
    }

    /// The frozen argument: `gamma(t) = zeta_i` for `t in [t_i, t_{i+1})`.
    pub fn gamma(&self, t: f64) -> Result<f64, ModelError> {
        Ok(self.anchors[self.interval_of(t)?])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_expansion() {
        let g = TimeGrid::uniform([0.0, 10.0], 1.0, 0.0).unwrap();
        assert_eq!(g.knots().len(), 11);
        assert_eq!(g.anchors().len(), 10);
        assert_eq!(g.theta(), 1.0);
        for i in 0..10 {
            assert_eq!(g.anchor(i), g.knot(i));
        }
    }

    #[test]
    fn anchor_outside_interval_names_a1() {
        // anchor of interval 3 placed beyond t_4
        let knots: Vec<f64> = (0..=5).map(|k| k as f64).collect();
        let mut anchors: Vec<f64> = (0..5).map(|k| k as f64).collect();
        anchors[3] = 4.1;
        let err = TimeGrid::new(knots, anchors, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("A1"), "{msg}");
        assert!(msg.contains("interval 3"), "{msg}");
    }

    #[test]
    fn non_monotone_knots_rejected() {
        let err = TimeGrid::new(vec![0.0, 1.0, 0.5], vec![0.0, 1.0], None).unwrap_err();
        assert!(err.to_string().contains("A1"));
    }

    #[test]
    fn theta_bound_enforced() {
        let err = TimeGrid::new(vec![0.0, 1.0, 5.0], vec![0.0, 1.0], Some(2.0)).unwrap_err();
        assert!(err.to_string().contains("A4"));
    }

    #[test]
    fn gamma_is_interval_anchor() {
        let g = TimeGrid::uniform([0.0, 4.0], 1.0, 0.5).unwrap();
        assert_eq!(g.gamma(0.0).unwrap(), 0.5);
        assert_eq!(g.gamma(0.99).unwrap(), 0.5);
        assert_eq!(g.gamma(1.0).unwrap(), 1.5);
        // right edge belongs to the last interval
        assert_eq!(g.gamma(4.0).unwrap(), 3.5);
        assert!(g.gamma(4.5).is_err());
    }
}
