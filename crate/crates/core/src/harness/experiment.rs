//! Repeated train/calibrate/test split experiments.

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{calibrate, ControlSpec, SearchFunction};
use crate::ensemble::{train, TrainConfig, TreeEnsemble};
use crate::error::{Error, Result};
use crate::families::{false_discovery_profile, selective_loss_row, size_profile};
use crate::grid::ParamGrid;
use crate::harness::data::{FieldDataset, FieldSample, RegressionDataset};
use crate::harness::split::SplitPlan;
use crate::matrix::LossMatrix;
use crate::multi::{calibrate_multi, LossTensor, MultiControlSpec, MultiSearch};
use crate::seeding;

/// Loss and efficiency matrices of one batch of samples, one pair per loss.
///
/// Efficiency entries are per-sample abstention indicators for selective
/// regression and normalized set sizes for segmentation.
#[derive(Debug, Clone)]
pub struct FamilyMatrices {
    pub losses: Vec<LossMatrix>,
    pub efficiency: Vec<LossMatrix>,
}

impl FamilyMatrices {
    pub fn m(&self) -> usize {
        self.losses.len()
    }

    pub fn n_samples(&self) -> usize {
        self.losses[0].n_samples()
    }
}

fn scalar_thresholds(grid: &ParamGrid) -> Result<&[f64]> {
    grid.scalar_values()
        .ok_or_else(|| Error::InvalidGrid(format!("expected a scalar grid, got dimension {}", grid.dim())))
}

/// Selective-regression losses `(y − f)²·1[ḡ ≤ λ]` for each target's ensemble.
pub fn selective_matrices(
    ensembles: &[TreeEnsemble],
    features: &[Vec<f64>],
    targets: &[Vec<f64>],
    grid: &ParamGrid,
) -> Result<FamilyMatrices> {
    let thresholds = scalar_thresholds(grid)?;
    if features.len() != targets.len() {
        return Err(Error::DimensionMismatch { expected: features.len(), got: targets.len() });
    }
    let mut losses = Vec::with_capacity(ensembles.len());
    let mut efficiency = Vec::with_capacity(ensembles.len());
    for (j, ens) in ensembles.iter().enumerate() {
        let stats: Vec<(f64, f64)> = features
            .par_iter()
            .map(|x| ens.predict_mean_std(x))
            .collect::<Result<_>>()?;
        let loss_rows = stats
            .iter()
            .zip(targets)
            .map(|(&(mean, spread), y)| selective_loss_row(y[j], mean, spread, thresholds))
            .collect();
        let abstain_rows = stats
            .iter()
            .map(|&(_, spread)| thresholds.iter().map(|&t| f64::from(u8::from(spread > t))).collect())
            .collect();
        losses.push(LossMatrix::from_rows(grid.clone(), loss_rows)?);
        efficiency.push(LossMatrix::from_rows(grid.clone(), abstain_rows)?);
    }
    Ok(FamilyMatrices { losses, efficiency })
}

/// False-discovery losses and normalized sizes of thresholded fields.
pub fn field_matrices<'a>(samples: impl IntoIterator<Item = &'a FieldSample>, grid: &ParamGrid) -> Result<FamilyMatrices> {
    let thresholds = scalar_thresholds(grid)?;
    let (loss_rows, size_rows): (Vec<Vec<f64>>, Vec<Vec<f64>>) = samples
        .into_iter()
        .map(|s| Ok((false_discovery_profile(&s.field, &s.label, thresholds)?, size_profile(&s.field, thresholds))))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(FamilyMatrices {
        losses: vec![LossMatrix::from_rows(grid.clone(), loss_rows)?],
        efficiency: vec![LossMatrix::from_rows(grid.clone(), size_rows)?],
    })
}

/// One ensemble per target column, each with its own derived seed.
pub fn train_per_target(
    features: &[Vec<f64>],
    targets: &[Vec<f64>],
    model: &TrainConfig,
    path: &[u64],
) -> Result<Vec<TreeEnsemble>> {
    let m = targets.first().map_or(0, Vec::len);
    (0..m)
        .map(|j| {
            let column: Vec<f64> = targets.iter().map(|t| t[j]).collect();
            let mut p = path.to_vec();
            p.push(j as u64);
            let cfg = TrainConfig { seed: seeding::derive(model.seed, &p), ..model.clone() };
            train(features, &column, &cfg)
        })
        .collect()
}

/// Calibrated grid index per loss, or the infeasibility message.
pub(crate) fn calibrate_indices(
    calib: &[LossMatrix],
    alpha: f64,
    delta: f64,
    bound: f64,
    search: &SearchFunction,
) -> Result<(Vec<usize>, usize)> {
    if calib.len() == 1 {
        let r = calibrate(&calib[0], &ControlSpec::new(alpha, delta, bound)?, search)?;
        return Ok((vec![r.lambda_index], r.feasible.len()));
    }
    let spec = MultiControlSpec::uniform(calib.len(), alpha, delta, bound)?;
    let tensor = LossTensor::per_axis(calib.to_vec())?;
    let r = calibrate_multi(&tensor, &spec, &MultiSearch::Coordinatewise(search.clone()))?;
    let feasible = r.per_loss.iter().map(|d| d.feasible.len()).product();
    let indices = r
        .lambda_star
        .iter()
        .zip(calib)
        .map(|(&v, m)| m.grid().position(&[v]).expect("λ* is a grid point"))
        .collect();
    Ok((indices, feasible))
}

/// Whether `max_j L_j(λ*_j) > α` for sample `i`.
pub(crate) fn violates(losses: &[LossMatrix], indices: &[usize], i: usize, alpha: f64) -> bool {
    losses.iter().zip(indices).map(|(m, &k)| m.get(i, k)).fold(0.0, f64::max) > alpha
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        Some(Self { mean: sorted.iter().sum::<f64>() / n as f64, min: sorted[0], median, max: sorted[n - 1] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatOutcome {
    pub alpha: f64,
    pub delta: f64,
    pub repeat: usize,
    pub lambda_star: Option<Vec<f64>>,
    pub feasible_size: usize,
    /// Fraction of test samples with loss above `α`.
    pub violation: Option<f64>,
    /// Per-sample efficiency at `λ*` over the test split.
    pub efficiency: Option<Summary>,
    pub infeasible: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub alpha: f64,
    pub delta: f64,
    pub feasible_repeats: usize,
    pub infeasible_repeats: usize,
    pub mean_violation: Option<f64>,
    pub mean_efficiency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub family: String,
    pub efficiency_metric: String,
    pub m: usize,
    pub search: String,
    pub bound: f64,
    pub n_total: usize,
    pub n_train: usize,
    pub n_calib: usize,
    pub n_test: usize,
    pub plan: SplitPlan,
    pub outcomes: Vec<RepeatOutcome>,
    pub cells: Vec<CellSummary>,
}

impl TrialReport {
    pub fn cell(&self, alpha: f64, delta: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.alpha == alpha && c.delta == delta)
    }
}

#[derive(Debug, Clone)]
pub enum ExperimentData<'a> {
    /// Selective regression with one ensemble per target column.
    Selective { data: &'a RegressionDataset, model: TrainConfig },
    Segmentation { data: &'a FieldDataset },
}

impl ExperimentData<'_> {
    fn len(&self) -> usize {
        match self {
            Self::Selective { data, .. } => data.len(),
            Self::Segmentation { data } => data.len(),
        }
    }

    fn family(&self) -> (&'static str, &'static str) {
        match self {
            Self::Selective { data, .. } if data.n_targets() > 1 => ("multi_selective", "miscoverage"),
            Self::Selective { .. } => ("selective", "miscoverage"),
            Self::Segmentation { .. } => ("segmentation", "normalized_size"),
        }
    }

    /// Calibration and test matrices for one repeat.
    fn prepare(&self, plan: &SplitPlan, repeat: usize, grid: &ParamGrid) -> Result<(FamilyMatrices, FamilyMatrices)> {
        let split = plan.split(self.len(), repeat)?;
        match self {
            Self::Selective { data, model } => {
                let train_x = data.feature_rows(&split.train);
                let train_y: Vec<Vec<f64>> = split.train.iter().map(|&i| data.targets[i].clone()).collect();
                let ensembles = train_per_target(&train_x, &train_y, model, &[repeat as u64])?;
                let part = |rows: &[usize]| {
                    let xs = data.feature_rows(rows);
                    let ys: Vec<Vec<f64>> = rows.iter().map(|&i| data.targets[i].clone()).collect();
                    selective_matrices(&ensembles, &xs, &ys, grid)
                };
                Ok((part(&split.calib)?, part(&split.test)?))
            }
            // Fields come from a fixed predictor, so the training split is unused.
            Self::Segmentation { data } => {
                let part = |rows: &[usize]| field_matrices(rows.iter().map(|&i| &data.samples[i]), grid);
                Ok((part(&split.calib)?, part(&split.test)?))
            }
        }
    }
}

/// Settings of a split experiment over an `(α, δ)` sweep.
#[derive(Debug, Clone)]
pub struct SplitExperiment {
    pub grid: ParamGrid,
    pub alphas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub bound: f64,
    pub search: SearchFunction,
    pub plan: SplitPlan,
}

fn evaluate(
    calib: &FamilyMatrices,
    test: &FamilyMatrices,
    alpha: f64,
    delta: f64,
    repeat: usize,
    exp: &SplitExperiment,
) -> Result<RepeatOutcome> {
    let mut outcome = RepeatOutcome {
        alpha,
        delta,
        repeat,
        lambda_star: None,
        feasible_size: 0,
        violation: None,
        efficiency: None,
        infeasible: None,
    };
    let (indices, feasible) = match calibrate_indices(&calib.losses, alpha, delta, exp.bound, &exp.search) {
        Ok(found) => found,
        Err(e @ (Error::Infeasible { .. } | Error::InfeasibleMulti { .. })) => {
            outcome.infeasible = Some(e.to_string());
            return Ok(outcome);
        }
        Err(e) => return Err(e),
    };
    let n = test.n_samples();
    let violations = (0..n).filter(|&i| violates(&test.losses, &indices, i, alpha)).count();
    let per_sample: Vec<f64> = (0..n)
        .map(|i| test.efficiency.iter().zip(&indices).map(|(e, &k)| e.get(i, k)).sum::<f64>() / test.m() as f64)
        .collect();
    outcome.lambda_star = Some(indices.iter().map(|&k| exp.grid.point(k)[0]).collect());
    outcome.feasible_size = feasible;
    outcome.violation = Some(violations as f64 / n as f64);
    outcome.efficiency = Summary::of(&per_sample);
    Ok(outcome)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Runs `plan.repeats` splits: fit on train, calibrate, then score the test
/// split at every `(α, δ)` cell. Infeasible calibrations are recorded per
/// repeat rather than aborting the run.
pub fn run_split_experiment(data: ExperimentData<'_>, exp: &SplitExperiment) -> Result<TrialReport> {
    exp.plan.validate()?;
    scalar_thresholds(&exp.grid)?;
    if exp.alphas.is_empty() || exp.deltas.is_empty() {
        return Err(Error::InvalidConfig("at least one α and one δ are required".into()));
    }
    let probe = exp.plan.split(data.len(), 0)?;
    let outcomes: Vec<Vec<RepeatOutcome>> = (0..exp.plan.repeats)
        .into_par_iter()
        .map(|repeat| {
            let (calib, test) = data.prepare(&exp.plan, repeat, &exp.grid)?;
            let mut out = Vec::with_capacity(exp.alphas.len() * exp.deltas.len());
            for &delta in &exp.deltas {
                for &alpha in &exp.alphas {
                    out.push(evaluate(&calib, &test, alpha, delta, repeat, exp)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let m = match &data {
        ExperimentData::Selective { data, .. } => data.n_targets(),
        ExperimentData::Segmentation { .. } => 1,
    };
    let mut outcomes: Vec<RepeatOutcome> = outcomes.into_iter().flatten().collect();
    outcomes.sort_by(|a, b| {
        (a.delta, a.alpha, a.repeat).partial_cmp(&(b.delta, b.alpha, b.repeat)).expect("finite sweep values")
    });
    let mut cells = Vec::new();
    for &delta in &exp.deltas {
        for &alpha in &exp.alphas {
            let runs: Vec<&RepeatOutcome> =
                outcomes.iter().filter(|o| o.alpha == alpha && o.delta == delta).collect();
            let feasible: Vec<&&RepeatOutcome> = runs.iter().filter(|o| o.infeasible.is_none()).collect();
            cells.push(CellSummary {
                alpha,
                delta,
                feasible_repeats: feasible.len(),
                infeasible_repeats: runs.len() - feasible.len(),
                mean_violation: mean(feasible.iter().filter_map(|o| o.violation)),
                mean_efficiency: mean(feasible.iter().filter_map(|o| o.efficiency.map(|s| s.mean))),
            });
        }
    }
    let (family, metric) = data.family();
    Ok(TrialReport {
        family: family.into(),
        efficiency_metric: metric.into(),
        m,
        search: exp.search.name().into(),
        bound: exp.bound,
        n_total: data.len(),
        n_train: probe.train.len(),
        n_calib: probe.calib.len(),
        n_test: probe.test.len(),
        plan: exp.plan.clone(),
        outcomes,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::generators::{generate_fields, generate_regression, SyntheticFieldConfig, SyntheticRegressionConfig};

    fn small_model() -> TrainConfig {
        TrainConfig { n_trees: 10, max_nodes: 100, ..TrainConfig::random_forest(3) }
    }

    #[test]
    fn alpha_at_bound_never_violates() {
        let data = generate_regression(&SyntheticRegressionConfig { n: 200, ..Default::default() }).unwrap();
        let exp = SplitExperiment {
            grid: ParamGrid::range(0.0, 1.0, 0.05).unwrap(),
            alphas: vec![1.0],
            deltas: vec![0.1],
            bound: 1.0,
            search: SearchFunction::Max,
            plan: SplitPlan { repeats: 3, ..Default::default() },
        };
        let report = run_split_experiment(ExperimentData::Selective { data: &data, model: small_model() }, &exp).unwrap();
        assert_eq!(report.outcomes.len(), 3);
        for o in &report.outcomes {
            assert_eq!(o.violation, Some(0.0));
            // every threshold is feasible, so max search predicts everywhere
            assert_eq!(o.lambda_star, Some(vec![1.0]));
            assert_eq!(o.efficiency.unwrap().max, 0.0);
        }
        assert_eq!((report.n_test, report.n_calib, report.n_train), (40, 32, 128));
    }

    #[test]
    fn infeasible_repeats_are_recorded() {
        let data = generate_fields(&SyntheticFieldConfig { n: 60, rows: 6, cols: 6, ..Default::default() }).unwrap();
        // λ = 0 selects every cell, so a grid of {0} cannot reach α = 0.
        let exp = SplitExperiment {
            grid: ParamGrid::scalar([0.0]).unwrap(),
            alphas: vec![0.0, 1.0],
            deltas: vec![0.2],
            bound: 1.0,
            search: SearchFunction::Min,
            plan: SplitPlan { repeats: 2, ..Default::default() },
        };
        let report = run_split_experiment(ExperimentData::Segmentation { data: &data }, &exp).unwrap();
        let hard = report.cell(0.0, 0.2).unwrap();
        assert_eq!((hard.feasible_repeats, hard.infeasible_repeats), (0, 2));
        assert_eq!(hard.mean_violation, None);
        assert!(report.outcomes.iter().filter(|o| o.alpha == 0.0).all(|o| o.infeasible.is_some()));
        let easy = report.cell(1.0, 0.2).unwrap();
        assert_eq!(easy.feasible_repeats, 2);
        assert_eq!(easy.mean_efficiency, Some(1.0));
    }

    #[test]
    fn multi_target_reports_per_coordinate_lambda() {
        let data =
            generate_regression(&SyntheticRegressionConfig { n: 300, targets: 2, ..Default::default() }).unwrap();
        let exp = SplitExperiment {
            grid: ParamGrid::range(0.0, 0.5, 0.05).unwrap(),
            alphas: vec![0.05],
            deltas: vec![0.2],
            bound: 1.0,
            search: SearchFunction::Max,
            plan: SplitPlan { repeats: 2, ..Default::default() },
        };
        let report = run_split_experiment(ExperimentData::Selective { data: &data, model: small_model() }, &exp).unwrap();
        assert_eq!(report.family, "multi_selective");
        for o in &report.outcomes {
            assert_eq!(o.lambda_star.as_ref().map(Vec::len), Some(2));
        }
        assert_eq!(report, run_split_experiment(ExperimentData::Selective { data: &data, model: small_model() }, &exp).unwrap());
    }
}
