//! Inductive conformal prediction and conformal loss-controlling prediction.
//!
//! Both serve as standalone baselines and as reference routes for the
//! calibration engine: under nested set predictors, a monotone loss and the
//! `min` search, the engine must pick exactly the point CLCP picks.

use serde::{Deserialize, Serialize};

use crate::engine::ControlSpec;
use crate::error::{Error, Result};
use crate::matrix::LossMatrix;
use crate::quantiles::{augmented_quantile, conservative_quantile, Augmented, QuantileLevel};

/// Finite nonconformity scores `A_i = A(X_i, Y_i)` on calibration data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonconformityScores(Vec<f64>);

impl NonconformityScores {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteLoss { row: i, col: 0, value: scores[i] });
        }
        Ok(Self(scores))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpThreshold {
    pub q: Augmented<f64>,
    pub delta: f64,
}

impl IcpThreshold {
    /// Whether a candidate with this score belongs to the prediction set.
    pub fn admits(&self, score: f64) -> bool {
        Augmented::Finite(score) <= self.q
    }
}

/// `1 − δ` quantile of the scores augmented with a point at infinity.
pub fn icp_calibrate(scores: &NonconformityScores, delta: f64) -> Result<IcpThreshold> {
    if scores.0.is_empty() {
        return Err(Error::EmptySample);
    }
    let level = QuantileLevel::confidence(delta)?;
    let augmented: Vec<Augmented<f64>> = scores
        .0
        .iter()
        .map(|&s| Augmented::Finite(s))
        .chain(std::iter::once(Augmented::Infinite))
        .collect();
    Ok(IcpThreshold { q: conservative_quantile(&augmented, level)?, delta })
}

/// `{y ∈ labels : A(x, y) ≤ q}`.
pub fn icp_predict_set<X, L, F>(score: F, x: &X, labels: &[L], threshold: &IcpThreshold) -> Vec<L>
where
    L: Clone,
    F: Fn(&X, &L) -> f64,
{
    labels
        .iter()
        .filter(|y| threshold.admits(score(x, y)))
        .cloned()
        .collect()
}

/// Smallest grid point whose augmented loss quantile is at most `α`, for
/// nested set predictors with a monotone loss.
///
/// Rows must be nonincreasing along the grid; this is checked. The quantile is
/// then nonincreasing too, so the answer is found by bisection rather than by
/// scanning the whole grid.
pub fn clcp_calibrate(matrix: &LossMatrix, spec: &ControlSpec) -> Result<f64> {
    let values = matrix
        .grid()
        .scalar_values()
        .ok_or_else(|| Error::InvalidGrid("CLCP needs a scalar grid".into()))?;
    for i in 0..matrix.n_samples() {
        let row = matrix.row(i);
        if let Some(j) = row.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::NestingViolated { row: i, col: j, next: j + 1 });
        }
    }
    let quantile = |j: usize| augmented_quantile(&matrix.column(j), spec.bound, spec.delta);
    let last = values.len() - 1;
    if quantile(last)? > spec.alpha {
        return Err(Error::Infeasible { alpha: spec.alpha, confidence: 1.0 - spec.delta });
    }
    let (mut lo, mut hi) = (0, last);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if quantile(mid)? <= spec.alpha {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(values[lo])
}
