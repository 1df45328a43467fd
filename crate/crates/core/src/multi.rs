//! Joint control of several losses with a Bonferroni split of `δ`.
//!
//! Loss `j` is controlled at level `α_j` with its own quantile at
//! `1 − δ_j`, where the `δ_j` sum to `δ` (uniform `δ/m` unless weights are
//! given). A grid point is jointly feasible when every loss is.
//!
//! When loss `j` depends on `λ` only through its `j`-th coordinate, the
//! feasible region is a product of per-axis sets and the coordinatewise
//! search picks each coordinate independently.

use serde::Serialize;

use crate::engine::{column_quantiles_at, CalibrationMode, SearchFunction};
use crate::error::{Error, Result};
use crate::grid::ParamGrid;
use crate::matrix::LossMatrix;
use crate::quantiles::{ceil_rank, check_delta, LossBound, QuantileLevel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiControlSpec {
    pub alphas: Vec<f64>,
    pub delta: f64,
    pub bounds: Vec<LossBound>,
    /// Share of `δ` given to each loss; uniform when `None`.
    pub weights: Option<Vec<f64>>,
}

impl MultiControlSpec {
    pub fn new(alphas: Vec<f64>, delta: f64, bounds: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::InvalidConfig("at least one loss is required".into()));
        }
        if alphas.len() != bounds.len() {
            return Err(Error::DimensionMismatch { expected: alphas.len(), got: bounds.len() });
        }
        if let Some(a) = alphas.iter().find(|a| !a.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be finite, got {a}")));
        }
        check_delta(delta)?;
        let bounds = bounds.into_iter().map(LossBound::new).collect::<Result<_>>()?;
        Ok(Self { alphas, delta, bounds, weights: None })
    }

    /// Same `α` and bound for all `m` losses.
    pub fn uniform(m: usize, alpha: f64, delta: f64, bound: f64) -> Result<Self> {
        Self::new(vec![alpha; m], delta, vec![bound; m])
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.m() {
            return Err(Error::DimensionMismatch { expected: self.m(), got: weights.len() });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "delta weights must be positive and sum to 1, got {weights:?}"
            )));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.alphas.len()
    }

    /// Significance level assigned to loss `j`.
    pub fn delta_for(&self, j: usize) -> f64 {
        match &self.weights {
            Some(w) => self.delta * w[j],
            None => self.delta / self.m() as f64,
        }
    }

    fn level_for(&self, j: usize) -> QuantileLevel {
        QuantileLevel::confidence(self.delta_for(j)).expect("split of a valid delta is valid")
    }
}

/// Losses `values[j][i][k]` for `m` losses, `n` samples and grid points `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LossTensor {
    /// Every loss evaluated on the same joint grid.
    Joint {
        losses: Vec<LossMatrix>,
        /// Checked at construction: loss `j` depends on the grid point only
        /// through coordinate `j`.
        decomposable: bool,
    },
    /// Compressed decomposable form: loss `j` tabulated over the values of
    /// coordinate `j` alone. The joint grid is the product of the axes.
    PerAxis { axes: Vec<LossMatrix> },
}

fn check_same_samples(matrices: &[LossMatrix]) -> Result<usize> {
    let n = matrices.first().ok_or(Error::EmptySample)?.n_samples();
    for m in matrices {
        if m.n_samples() != n {
            return Err(Error::DimensionMismatch { expected: n, got: m.n_samples() });
        }
    }
    Ok(n)
}

impl LossTensor {
    pub fn joint(losses: Vec<LossMatrix>) -> Result<Self> {
        check_same_samples(&losses)?;
        let grid = losses[0].grid();
        if losses.iter().any(|m| m.grid() != grid) {
            return Err(Error::InvalidGrid("all losses must share one grid".into()));
        }
        Ok(Self::Joint { losses, decomposable: false })
    }

    /// Joint tensor asserted to be decomposable; the assertion is verified by
    /// comparing every pair of columns that share coordinate `j`.
    pub fn joint_decomposable(losses: Vec<LossMatrix>) -> Result<Self> {
        let Self::Joint { losses, .. } = Self::joint(losses)? else { unreachable!() };
        let grid = losses[0].grid();
        if grid.dim() != losses.len() {
            return Err(Error::DimensionMismatch { expected: losses.len(), got: grid.dim() });
        }
        for (j, matrix) in losses.iter().enumerate() {
            for (_, columns) in columns_by_coordinate(grid, j) {
                let reference = matrix.column(columns[0]);
                if columns[1..].iter().any(|&c| matrix.column(c) != reference) {
                    return Err(Error::NotDecomposable { loss: j });
                }
            }
        }
        Ok(Self::Joint { losses, decomposable: true })
    }

    pub fn per_axis(axes: Vec<LossMatrix>) -> Result<Self> {
        check_same_samples(&axes)?;
        if axes.iter().any(|m| m.grid().dim() != 1) {
            return Err(Error::InvalidGrid("per-axis losses need scalar grids".into()));
        }
        Ok(Self::PerAxis { axes })
    }

    pub fn m(&self) -> usize {
        match self {
            Self::Joint { losses, .. } => losses.len(),
            Self::PerAxis { axes } => axes.len(),
        }
    }

    pub fn n_samples(&self) -> usize {
        match self {
            Self::Joint { losses, .. } => losses[0].n_samples(),
            Self::PerAxis { axes } => axes[0].n_samples(),
        }
    }

    pub fn is_decomposable(&self) -> bool {
        match self {
            Self::Joint { decomposable, .. } => *decomposable,
            Self::PerAxis { .. } => true,
        }
    }

    /// The joint grid. Materializes the product for per-axis tensors.
    pub fn grid(&self) -> ParamGrid {
        match self {
            Self::Joint { losses, .. } => losses[0].grid().clone(),
            Self::PerAxis { axes } => {
                let values: Vec<Vec<f64>> = axes
                    .iter()
                    .map(|m| m.grid().scalar_values().expect("scalar").to_vec())
                    .collect();
                ParamGrid::product(&values).expect("axes are valid grids")
            }
        }
    }

    /// Joint form of a per-axis tensor; only sensible for small grids.
    pub fn expand(&self) -> Result<Self> {
        match self {
            Self::Joint { .. } => Ok(self.clone()),
            Self::PerAxis { axes } => {
                let grid = self.grid();
                let losses = axes
                    .iter()
                    .enumerate()
                    .map(|(j, axis)| {
                        let axis_grid = axis.grid();
                        LossMatrix::from_row_fn(grid.clone(), axis.n_samples(), |i| {
                            grid.points()
                                .map(|p| axis.get(i, axis_grid.position(&p[j..=j]).expect("axis value")))
                                .collect()
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::joint_decomposable(losses)
            }
        }
    }

    /// Sub-tensor on the given sample rows.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        match self {
            Self::Joint { losses, decomposable } => Self::Joint {
                losses: losses.iter().map(|m| m.select_rows(rows)).collect(),
                decomposable: *decomposable,
            },
            Self::PerAxis { axes } => Self::PerAxis { axes: axes.iter().map(|m| m.select_rows(rows)).collect() },
        }
    }
}

/// Groups canonical column indices by the value of coordinate `axis`.
fn columns_by_coordinate(grid: &ParamGrid, axis: usize) -> Vec<(f64, Vec<usize>)> {
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid.point(a)[axis].total_cmp(&grid.point(b)[axis]).then(a.cmp(&b)));
    for c in order {
        let v = grid.point(c)[axis];
        match groups.last_mut() {
            Some((last, cols)) if *last == v => cols.push(c),
            _ => groups.push((v, vec![c])),
        }
    }
    groups
}

/// Quantiles and feasibility of one loss.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossDiagnostics {
    pub loss: usize,
    pub alpha: f64,
    pub delta: f64,
    pub bound: f64,
    /// Values the quantiles are indexed by: joint grid points, or the values
    /// of coordinate `loss` for coordinatewise control.
    pub points: Vec<Vec<f64>>,
    pub quantiles: Vec<f64>,
    pub feasible: Vec<usize>,
}

#[derive(Debug, Clone)]
pub enum MultiSearch {
    /// Apply the search to the joint feasible set.
    Joint(SearchFunction),
    /// Apply the search to each coordinate's feasible values separately and
    /// combine. Requires a decomposable tensor.
    Coordinatewise(SearchFunction),
}

impl MultiSearch {
    pub fn name(&self) -> String {
        match self {
            Self::Joint(s) => format!("joint-{}", s.name()),
            Self::Coordinatewise(s) => format!("coordinatewise-{}", s.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiCalibrationResult {
    pub lambda_star: Vec<f64>,
    pub per_loss: Vec<LossDiagnostics>,
    pub mode: CalibrationMode,
    pub search: String,
    pub n_samples: usize,
}

fn joint_diagnostics(
    losses: &[LossMatrix],
    spec: &MultiControlSpec,
    mode: CalibrationMode,
) -> Result<Vec<LossDiagnostics>> {
    losses
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let quantiles = column_quantiles_at(m, spec.bounds[j], spec.level_for(j), mode)?;
            let feasible = (0..quantiles.len()).filter(|&k| quantiles[k] <= spec.alphas[j]).collect();
            Ok(LossDiagnostics {
                loss: j,
                alpha: spec.alphas[j],
                delta: spec.delta_for(j),
                bound: spec.bounds[j].value(),
                points: m.grid().points().map(<[f64]>::to_vec).collect(),
                quantiles,
                feasible,
            })
        })
        .collect()
}

/// Per-coordinate diagnostics: loss `j` as a function of coordinate `j`.
fn axis_diagnostics(
    tensor: &LossTensor,
    spec: &MultiControlSpec,
    mode: CalibrationMode,
) -> Result<Vec<LossDiagnostics>> {
    let axis_matrices: Vec<LossMatrix> = match tensor {
        LossTensor::PerAxis { axes } => axes.clone(),
        LossTensor::Joint { losses, decomposable: true } => {
            let grid = losses[0].grid();
            losses
                .iter()
                .enumerate()
                .map(|(j, m)| {
                    let groups = columns_by_coordinate(grid, j);
                    let axis = ParamGrid::scalar(groups.iter().map(|(v, _)| *v))?;
                    let representatives: Vec<usize> = groups.iter().map(|(_, cols)| cols[0]).collect();
                    LossMatrix::from_row_fn(axis, m.n_samples(), |i| {
                        representatives.iter().map(|&c| m.get(i, c)).collect()
                    })
                })
                .collect::<Result<_>>()?
        }
        LossTensor::Joint { .. } => {
            return Err(Error::InvalidConfig(
                "coordinatewise search needs a decomposable tensor".into(),
            ))
        }
    };
    joint_diagnostics(&axis_matrices, spec, mode)
}

fn check_m(tensor: &LossTensor, spec: &MultiControlSpec) -> Result<()> {
    if tensor.m() != spec.m() {
        return Err(Error::DimensionMismatch { expected: spec.m(), got: tensor.m() });
    }
    Ok(())
}

fn mixed_radix_product(per_axis: &[Vec<usize>], sizes: &[usize]) -> Vec<usize> {
    let mut indices = vec![0usize];
    for (feasible, &size) in per_axis.iter().zip(sizes) {
        indices = indices
            .into_iter()
            .flat_map(|base| feasible.iter().map(move |&k| base * size + k))
            .collect();
    }
    indices
}

/// Canonical indices (into [`LossTensor::grid`]) of jointly feasible points.
pub fn feasible_set_multi(tensor: &LossTensor, spec: &MultiControlSpec) -> Result<Vec<usize>> {
    feasible_multi_in_mode(tensor, spec, CalibrationMode::Practical).map(|(f, _)| f)
}

fn feasible_multi_in_mode(
    tensor: &LossTensor,
    spec: &MultiControlSpec,
    mode: CalibrationMode,
) -> Result<(Vec<usize>, Vec<LossDiagnostics>)> {
    check_m(tensor, spec)?;
    match tensor {
        LossTensor::Joint { losses, .. } => {
            let diagnostics = joint_diagnostics(losses, spec, mode)?;
            let feasible = (0..losses[0].n_points())
                .filter(|k| diagnostics.iter().all(|d| d.feasible.binary_search(k).is_ok()))
                .collect();
            Ok((feasible, diagnostics))
        }
        LossTensor::PerAxis { axes } => {
            let diagnostics = axis_diagnostics(tensor, spec, mode)?;
            let per_axis: Vec<Vec<usize>> = diagnostics.iter().map(|d| d.feasible.clone()).collect();
            let sizes: Vec<usize> = axes.iter().map(LossMatrix::n_points).collect();
            Ok((mixed_radix_product(&per_axis, &sizes), diagnostics))
        }
    }
}

fn infeasible(diagnostics: &[LossDiagnostics]) -> Error {
    Error::InfeasibleMulti {
        m: diagnostics.len(),
        culprits: diagnostics.iter().filter(|d| d.feasible.is_empty()).map(|d| d.loss).collect(),
    }
}

fn calibrate_multi_in_mode(
    tensor: &LossTensor,
    spec: &MultiControlSpec,
    search: &MultiSearch,
    mode: CalibrationMode,
) -> Result<MultiCalibrationResult> {
    check_m(tensor, spec)?;
    let (lambda_star, per_loss) = match search {
        MultiSearch::Coordinatewise(s) => {
            let diagnostics = axis_diagnostics(tensor, spec, mode)?;
            if diagnostics.iter().any(|d| d.feasible.is_empty()) {
                return Err(infeasible(&diagnostics));
            }
            let mut point = Vec::with_capacity(diagnostics.len());
            for d in &diagnostics {
                let axis = ParamGrid::from_points(d.points.clone())?;
                point.push(d.points[s.select(&axis, &d.feasible)?][0]);
            }
            if let LossTensor::Joint { losses, .. } = tensor {
                if losses[0].grid().position(&point).is_none() {
                    return Err(Error::InvalidGrid(format!(
                        "coordinatewise choice {point:?} is not a point of the joint grid"
                    )));
                }
            }
            (point, diagnostics)
        }
        MultiSearch::Joint(s) => {
            let (feasible, diagnostics) = feasible_multi_in_mode(tensor, spec, mode)?;
            if feasible.is_empty() {
                return Err(infeasible(&diagnostics));
            }
            let grid = tensor.grid();
            let chosen = s.select(&grid, &feasible)?;
            (grid.point(chosen).to_vec(), diagnostics)
        }
    };
    Ok(MultiCalibrationResult {
        lambda_star,
        per_loss,
        mode,
        search: search.name(),
        n_samples: tensor.n_samples(),
    })
}

pub fn calibrate_multi(
    tensor: &LossTensor,
    spec: &MultiControlSpec,
    search: &MultiSearch,
) -> Result<MultiCalibrationResult> {
    calibrate_multi_in_mode(tensor, spec, search, CalibrationMode::Practical)
}

/// Ideal-mode counterpart: the tensor's last row is the test sample.
pub fn calibrate_multi_ideal(
    tensor_with_test: &LossTensor,
    spec: &MultiControlSpec,
    search: &MultiSearch,
) -> Result<MultiCalibrationResult> {
    calibrate_multi_in_mode(tensor_with_test, spec, search, CalibrationMode::Ideal)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", content = "message", rename_all = "snake_case")]
pub enum SampleSizeAdvisory {
    Ok,
    Warn(String),
}

/// Warns when fewer than six calibration losses are expected above the
/// `1 − δ/m` quantile, i.e. when `n·δ/m < 6`. Below that the quantile is
/// mostly determined by the bound.
pub fn sample_size_advisory(n: usize, m: usize, delta: f64) -> SampleSizeAdvisory {
    let m = m.max(1);
    let expected_tail = n as f64 * delta / m as f64;
    // Snap so that e.g. 60 · 0.1 counts as exactly 6.
    let tail = if (expected_tail - expected_tail.round()).abs() <= 1e-9 * expected_tail.max(1.0) {
        expected_tail.round()
    } else {
        expected_tail
    };
    if tail >= 6.0 {
        SampleSizeAdvisory::Ok
    } else {
        let needed = ceil_rank(6.0 * m as f64 / delta);
        SampleSizeAdvisory::Warn(format!(
            "n·δ/m = {expected_tail:.3} < 6: with {n} calibration samples, {m} losses and δ = {delta} \
             the 1−δ/m quantile degenerates toward the loss bound; at least {needed} samples are advised"
        ))
    }
}
