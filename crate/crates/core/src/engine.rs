//! Loss-controlling calibration over a discrete grid.
//!
//! Given a loss matrix on `n` calibration samples, every grid point gets the
//! conservative `1 − δ` quantile of its loss column augmented with the bound
//! `B`. Points whose quantile is at most `α` form the feasible set, and a
//! search function fixed in advance picks `λ*` from it.
//!
//! [`calibrate_ideal`] is the variant where the test sample's losses are part
//! of the matrix and no augmentation happens. It only exists for validating the
//! guarantee by simulation.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ParamGrid;
use crate::matrix::LossMatrix;
use crate::quantiles::{augmented_in_place, check_delta, full_in_place, LossBound, QuantileLevel};

/// Loss level `α`, significance level `δ` and loss bound `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    pub alpha: f64,
    pub delta: f64,
    pub bound: LossBound,
}

impl ControlSpec {
    pub fn new(alpha: f64, delta: f64, bound: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidConfig(format!("alpha must be finite, got {alpha}")));
        }
        check_delta(delta)?;
        Ok(Self { alpha, delta, bound: LossBound::new(bound)? })
    }

    pub fn level(&self) -> QuantileLevel {
        QuantileLevel::confidence(self.delta).expect("delta validated at construction")
    }
}

type ExternalFn = dyn Fn(&ParamGrid, &[usize]) -> usize + Send + Sync;

/// Predefined map from a set of grid points to one of its elements.
///
/// `Min` and `Max` are lexicographic. `First` takes the first feasible point
/// in grid order, which coincides with `Min` because grids are stored in
/// lexicographic order; it is kept as a separate name for configs that state
/// intent rather than ordering.
///
/// `External` wraps any callable fixed before calibration (for instance an
/// optimizer tuned on a separate hold-out set). The engine checks that its
/// output belongs to the input set but cannot check that it was built without
/// looking at calibration or test data.
#[derive(Clone)]
pub enum SearchFunction {
    Min,
    Max,
    First,
    External { name: String, select: Arc<ExternalFn> },
}

impl SearchFunction {
    pub fn external<F>(name: impl Into<String>, select: F) -> Self
    where
        F: Fn(&ParamGrid, &[usize]) -> usize + Send + Sync + 'static,
    {
        Self::External { name: name.into(), select: Arc::new(select) }
    }

    pub fn name(&self) -> &str {
        match self {
            Self::Min => "min",
            Self::Max => "max",
            Self::First => "first",
            Self::External { name, .. } => name,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "min" => Ok(Self::Min),
            "max" => Ok(Self::Max),
            "first" => Ok(Self::First),
            other => Err(Error::InvalidConfig(format!(
                "unknown search function `{other}` (expected min, max or first)"
            ))),
        }
    }

    /// Picks one index from `candidates` (ascending canonical indices, nonempty).
    pub fn select(&self, grid: &ParamGrid, candidates: &[usize]) -> Result<usize> {
        let (&first, &last) = match (candidates.first(), candidates.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::EmptySample),
        };
        match self {
            Self::Min | Self::First => Ok(first),
            Self::Max => Ok(last),
            Self::External { name, select } => {
                let chosen = select(grid, candidates);
                if candidates.binary_search(&chosen).is_ok() {
                    Ok(chosen)
                } else {
                    Err(Error::SearchOutsideSet(name.clone()))
                }
            }
        }
    }
}

impl fmt::Debug for SearchFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SearchFunction({})", self.name())
    }
}

impl PartialEq for SearchFunction {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::External { select: a, .. }, Self::External { select: b, .. }) => Arc::ptr_eq(a, b),
            _ => self.name() == other.name(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// `n` calibration rows, quantiles augmented with `B`.
    Practical,
    /// `n+1` rows including the test sample, no augmentation.
    Ideal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub lambda_star: Vec<f64>,
    pub lambda_index: usize,
    /// Canonical indices of feasible grid points, ascending.
    pub feasible: Vec<usize>,
    /// Loss quantile at every grid point.
    pub quantiles: Vec<f64>,
    pub spec: ControlSpec,
    pub mode: CalibrationMode,
    pub search: String,
    pub n_samples: usize,
    pub grid: ParamGrid,
}

impl CalibrationResult {
    pub fn feasible_points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.feasible.iter().map(|&j| self.grid.point(j))
    }

    /// Writes `lambda,quantile,feasible` rows in grid order.
    pub fn write_quantile_table(&self, writer: impl std::io::Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["lambda", "quantile", "feasible"])?;
        for (j, q) in self.quantiles.iter().enumerate() {
            let feasible = self.feasible.binary_search(&j).is_ok();
            csv.write_record([self.grid.format_point(j), q.to_string(), feasible.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Per-grid-point loss quantiles in the given mode.
pub fn column_quantiles(matrix: &LossMatrix, spec: &ControlSpec, mode: CalibrationMode) -> Result<Vec<f64>> {
    column_quantiles_at(matrix, spec.bound, spec.level(), mode)
}

pub(crate) fn column_quantiles_at(
    matrix: &LossMatrix,
    bound: LossBound,
    level: QuantileLevel,
    mode: CalibrationMode,
) -> Result<Vec<f64>> {
    if matrix.n_samples() == 0 {
        return Err(Error::EmptySample);
    }
    if let Some(max) = matrix.max_value() {
        bound.check(&[max])?;
    }
    Ok((0..matrix.n_points())
        .into_par_iter()
        .map(|j| {
            let mut column = matrix.column(j);
            match mode {
                CalibrationMode::Practical => augmented_in_place(&mut column, bound, level),
                CalibrationMode::Ideal => full_in_place(&mut column, level),
            }
        })
        .collect())
}

fn feasible_from_quantiles(quantiles: &[f64], alpha: f64) -> Vec<usize> {
    quantiles
        .iter()
        .enumerate()
        .filter(|(_, &q)| q <= alpha)
        .map(|(j, _)| j)
        .collect()
}

/// Grid points whose augmented `1 − δ` loss quantile is at most `α`.
pub fn feasible_set(matrix: &LossMatrix, spec: &ControlSpec) -> Result<Vec<usize>> {
    let quantiles = column_quantiles(matrix, spec, CalibrationMode::Practical)?;
    Ok(feasible_from_quantiles(&quantiles, spec.alpha))
}

fn calibrate_in_mode(
    matrix: &LossMatrix,
    spec: &ControlSpec,
    search: &SearchFunction,
    mode: CalibrationMode,
) -> Result<CalibrationResult> {
    let quantiles = column_quantiles(matrix, spec, mode)?;
    let feasible = feasible_from_quantiles(&quantiles, spec.alpha);
    if feasible.is_empty() {
        return Err(Error::Infeasible { alpha: spec.alpha, confidence: 1.0 - spec.delta });
    }
    let grid = matrix.grid();
    let lambda_index = search.select(grid, &feasible)?;
    Ok(CalibrationResult {
        lambda_star: grid.point(lambda_index).to_vec(),
        lambda_index,
        feasible,
        quantiles,
        spec: *spec,
        mode,
        search: search.name().to_string(),
        n_samples: matrix.n_samples(),
        grid: grid.clone(),
    })
}

/// Chooses `λ* = s({λ : Q(λ) ≤ α})` from `n` calibration rows.
pub fn calibrate(matrix: &LossMatrix, spec: &ControlSpec, search: &SearchFunction) -> Result<CalibrationResult> {
    calibrate_in_mode(matrix, spec, search, CalibrationMode::Practical)
}

/// Like [`calibrate`], but the last row is the test sample and quantiles are
/// taken over all `n+1` rows without the bound.
pub fn calibrate_ideal(
    matrix_with_test: &LossMatrix,
    spec: &ControlSpec,
    search: &SearchFunction,
) -> Result<CalibrationResult> {
    calibrate_in_mode(matrix_with_test, spec, search, CalibrationMode::Ideal)
}
