//! Monte Carlo estimates of the guarantee violation rate.
//!
//! Each trial draws `n + 1` exchangeable samples. The first `n` rows
//! calibrate in practical mode; all `n + 1` rows calibrate in ideal mode.
//! The last row is the test sample for both.

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{column_quantiles, CalibrationMode, ControlSpec, SearchFunction};
use crate::ensemble::{TrainConfig, TreeEnsemble};
use crate::error::{Error, Result};
use crate::grid::ParamGrid;
use crate::harness::experiment::{calibrate_indices, field_matrices, selective_matrices, train_per_target, violates};
use crate::harness::generators::{
    FieldGenerator, RegressionGenerator, SyntheticFieldConfig, SyntheticRegressionConfig,
};
use crate::matrix::LossMatrix;

/// Produces loss matrices of fresh exchangeable draws.
pub trait TrialSource: Sync {
    fn name(&self) -> &str;
    /// Number of jointly controlled losses.
    fn m(&self) -> usize;
    fn grid(&self) -> &ParamGrid;
    /// `m` matrices of `count` rows each, drawn from the stream `(seed, trial)`.
    fn draw(&self, seed: u64, trial: usize, count: usize) -> Result<Vec<LossMatrix>>;
}

/// Selective regression with ensembles fitted once on a separate draw.
///
/// Trials use raw generator output (labels already in `[0, 1]`), so losses
/// stay bounded by 1 without renormalization.
pub struct SelectiveSource {
    generator: RegressionGenerator,
    ensembles: Vec<TreeEnsemble>,
    grid: ParamGrid,
}

/// Stream index reserved for the training draw.
const TRAIN_STREAM: u64 = u64::MAX;

impl SelectiveSource {
    pub fn new(data: &SyntheticRegressionConfig, n_train: usize, model: &TrainConfig, grid: ParamGrid) -> Result<Self> {
        let generator = RegressionGenerator::new(data)?;
        let (xs, ys) = generator.draw_many(data.seed, &[TRAIN_STREAM], n_train);
        let ensembles = train_per_target(&xs, &ys, model, &[])?;
        Ok(Self { generator, ensembles, grid })
    }
}

impl TrialSource for SelectiveSource {
    fn name(&self) -> &str {
        if self.ensembles.len() > 1 {
            "multi_selective"
        } else {
            "selective"
        }
    }

    fn m(&self) -> usize {
        self.generator.targets()
    }

    fn grid(&self) -> &ParamGrid {
        &self.grid
    }

    fn draw(&self, seed: u64, trial: usize, count: usize) -> Result<Vec<LossMatrix>> {
        let (xs, ys) = self.generator.draw_many(seed, &[trial as u64], count);
        Ok(selective_matrices(&self.ensembles, &xs, &ys, &self.grid)?.losses)
    }
}

pub struct FieldSource {
    generator: FieldGenerator,
    grid: ParamGrid,
}

impl FieldSource {
    pub fn new(config: &SyntheticFieldConfig, grid: ParamGrid) -> Result<Self> {
        Ok(Self { generator: FieldGenerator::new(config)?, grid })
    }
}

impl TrialSource for FieldSource {
    fn name(&self) -> &str {
        "segmentation"
    }

    fn m(&self) -> usize {
        1
    }

    fn grid(&self) -> &ParamGrid {
        &self.grid
    }

    fn draw(&self, seed: u64, trial: usize, count: usize) -> Result<Vec<LossMatrix>> {
        let samples = self.generator.draw_many(seed, &[trial as u64], count);
        Ok(field_matrices(&samples, &self.grid)?.losses)
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloConfig {
    pub n: usize,
    pub trials: usize,
    pub alphas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub bound: f64,
    pub search: SearchFunction,
    pub seed: u64,
}

/// Violation counts of one calibration mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeEstimate {
    pub mode: CalibrationMode,
    pub feasible_trials: usize,
    pub infeasible_trials: usize,
    pub violations: usize,
    /// `violations / feasible_trials`; `None` when no trial was feasible.
    pub violation_rate: Option<f64>,
    /// `3·sqrt(δ(1−δ)/T)` with `T` the number of feasible trials.
    pub tolerance: Option<f64>,
}

impl ModeEstimate {
    /// Rate within `δ + tolerance`. Vacuously true without feasible trials.
    pub fn within(&self, delta: f64) -> bool {
        match (self.violation_rate, self.tolerance) {
            (Some(rate), Some(tol)) => rate <= delta + tol,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellEstimate {
    pub alpha: f64,
    pub delta: f64,
    pub practical: ModeEstimate,
    pub ideal: ModeEstimate,
    /// Fraction of trials feasible in both modes where the modes pick the same `λ*`.
    pub agreement_rate: Option<f64>,
    /// Trials whose practical feasible set is not inside the ideal one.
    pub inclusion_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub source: String,
    pub m: usize,
    pub n: usize,
    pub trials: usize,
    pub bound: f64,
    pub search: String,
    pub seed: u64,
    pub cells: Vec<CellEstimate>,
}

impl MonteCarloReport {
    pub fn cell(&self, alpha: f64, delta: f64) -> Option<&CellEstimate> {
        self.cells.iter().find(|c| c.alpha == alpha && c.delta == delta)
    }
}

pub fn binomial_tolerance(delta: f64, trials: usize) -> f64 {
    3.0 * (delta * (1.0 - delta) / trials as f64).sqrt()
}

#[derive(Debug, Clone, Copy, Default)]
struct TrialCell {
    practical: Option<bool>,
    ideal: Option<bool>,
    agree: Option<bool>,
    included: bool,
}

/// Practical feasible set inside the ideal one, axis by axis. Joint feasible
/// sets are products of the per-axis sets, so this is equivalent.
fn included(calib: &[LossMatrix], full: &[LossMatrix], alpha: f64, delta: f64, bound: f64) -> Result<bool> {
    let spec = ControlSpec::new(alpha, delta / calib.len() as f64, bound)?;
    for (c, f) in calib.iter().zip(full) {
        let practical = column_quantiles(c, &spec, CalibrationMode::Practical)?;
        let ideal = column_quantiles(f, &spec, CalibrationMode::Ideal)?;
        if practical.iter().zip(&ideal).any(|(&p, &i)| p <= alpha && i > alpha) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn run_mode(
    rows: &[LossMatrix],
    test: &[LossMatrix],
    test_row: usize,
    alpha: f64,
    delta: f64,
    config: &MonteCarloConfig,
) -> Result<Option<(bool, Vec<usize>)>> {
    match calibrate_indices(rows, alpha, delta, config.bound, &config.search) {
        Ok((indices, _)) => Ok(Some((violates(test, &indices, test_row, alpha), indices))),
        Err(Error::Infeasible { .. } | Error::InfeasibleMulti { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn run_trial(source: &dyn TrialSource, config: &MonteCarloConfig, trial: usize) -> Result<Vec<TrialCell>> {
    let full = source.draw(config.seed, trial, config.n + 1)?;
    let calib: Vec<LossMatrix> = full.iter().map(|m| m.head(config.n)).collect();
    let mut cells = Vec::with_capacity(config.alphas.len() * config.deltas.len());
    for &delta in &config.deltas {
        for &alpha in &config.alphas {
            let practical = run_mode(&calib, &full, config.n, alpha, delta, config)?;
            let ideal = run_ideal(&full, alpha, delta, config)?;
            let agree = match (&practical, &ideal) {
                (Some((_, a)), Some((_, b))) => Some(a == b),
                _ => None,
            };
            cells.push(TrialCell {
                practical: practical.map(|(v, _)| v),
                ideal: ideal.map(|(v, _)| v),
                agree,
                included: included(&calib, &full, alpha, delta, config.bound)?,
            });
        }
    }
    Ok(cells)
}

fn run_ideal(full: &[LossMatrix], alpha: f64, delta: f64, config: &MonteCarloConfig) -> Result<Option<(bool, Vec<usize>)>> {
    use crate::engine::calibrate_ideal;
    use crate::multi::{calibrate_multi_ideal, LossTensor, MultiControlSpec, MultiSearch};
    let test_row = config.n;
    let result = if full.len() == 1 {
        calibrate_ideal(&full[0], &ControlSpec::new(alpha, delta, config.bound)?, &config.search)
            .map(|r| vec![r.lambda_index])
    } else {
        let spec = MultiControlSpec::uniform(full.len(), alpha, delta, config.bound)?;
        calibrate_multi_ideal(
            &LossTensor::per_axis(full.to_vec())?,
            &spec,
            &MultiSearch::Coordinatewise(config.search.clone()),
        )
        .map(|r| {
            r.lambda_star
                .iter()
                .zip(full)
                .map(|(&v, m)| m.grid().position(&[v]).expect("λ* is a grid point"))
                .collect()
        })
    };
    match result {
        Ok(indices) => Ok(Some((violates(full, &indices, test_row, alpha), indices))),
        Err(Error::Infeasible { .. } | Error::InfeasibleMulti { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn estimate(mode: CalibrationMode, outcomes: impl Iterator<Item = Option<bool>>, trials: usize, delta: f64) -> ModeEstimate {
    let (feasible, violations) = outcomes.fold((0, 0), |(f, v), o| match o {
        Some(hit) => (f + 1, v + usize::from(hit)),
        None => (f, v),
    });
    ModeEstimate {
        mode,
        feasible_trials: feasible,
        infeasible_trials: trials - feasible,
        violations,
        violation_rate: (feasible > 0).then(|| violations as f64 / feasible as f64),
        tolerance: (feasible > 0).then(|| binomial_tolerance(delta, feasible)),
    }
}

/// Runs `trials` independent calibrate-then-test instances in both modes for
/// every `(α, δ)` cell. Trials run in parallel; results are reduced in trial
/// order so the report does not depend on scheduling.
pub fn monte_carlo_guarantee(source: &dyn TrialSource, config: &MonteCarloConfig) -> Result<MonteCarloReport> {
    if config.trials < 100 {
        return Err(Error::InvalidConfig(format!("need at least 100 trials, got {}", config.trials)));
    }
    if config.n == 0 {
        return Err(Error::EmptySample);
    }
    if config.alphas.is_empty() || config.deltas.is_empty() {
        return Err(Error::InvalidConfig("at least one α and one δ are required".into()));
    }
    let per_trial: Vec<Vec<TrialCell>> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(source, config, t).map_err(|e| Error::Trial { index: t, source: Box::new(e) }))
        .collect::<Result<_>>()?;
    let mut cells = Vec::new();
    let mut k = 0;
    for &delta in &config.deltas {
        for &alpha in &config.alphas {
            let column = || per_trial.iter().map(move |t| t[k]);
            let agreed: Vec<bool> = column().filter_map(|c| c.agree).collect();
            cells.push(CellEstimate {
                alpha,
                delta,
                practical: estimate(CalibrationMode::Practical, column().map(|c| c.practical), config.trials, delta),
                ideal: estimate(CalibrationMode::Ideal, column().map(|c| c.ideal), config.trials, delta),
                agreement_rate: (!agreed.is_empty())
                    .then(|| agreed.iter().filter(|&&a| a).count() as f64 / agreed.len() as f64),
                inclusion_failures: column().filter(|c| !c.included).count(),
            });
            k += 1;
        }
    }
    Ok(MonteCarloReport {
        source: source.name().into(),
        m: source.m(),
        n: config.n,
        trials: config.trials,
        bound: config.bound,
        search: config.search.name().into(),
        seed: config.seed,
        cells,
    })
}
