//! Synthetic data standing in for external regression and weather datasets.
//!
//! Both generators draw i.i.d. samples from a fixed distribution, so any
//! collection of draws is exchangeable. Raw regression labels already lie in
//! `[0, 1]` (noise is clipped), which lets Monte Carlo trials use the loss
//! bound `B = 1` without renormalizing per trial.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{GridPredictionSet, ProbabilityField};
use crate::harness::data::{FieldDataset, FieldSample, RegressionDataset};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    /// Gaussian noise with constant standard deviation `sigma`.
    Homoscedastic { sigma: f64 },
    /// Standard deviation grows linearly from `0.2·sigma` to `1.8·sigma`
    /// along the last feature.
    Heteroscedastic { sigma: f64 },
}

impl NoiseModel {
    fn sigma_at(&self, x: &[f64]) -> f64 {
        match *self {
            Self::Homoscedastic { sigma } => sigma,
            Self::Heteroscedastic { sigma } => sigma * (0.2 + 1.6 * x[x.len() - 1]),
        }
    }

    fn base_sigma(&self) -> f64 {
        match *self {
            Self::Homoscedastic { sigma } | Self::Heteroscedastic { sigma } => sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticRegressionConfig {
    pub n: usize,
    pub dim: usize,
    pub noise: NoiseModel,
    pub targets: usize,
    pub seed: u64,
}

impl Default for SyntheticRegressionConfig {
    fn default() -> Self {
        Self { n: 2000, dim: 8, noise: NoiseModel::Heteroscedastic { sigma: 0.05 }, targets: 1, seed: 0 }
    }
}

/// Draws `(x, y)` with `x ~ U[0,1]^d` and
/// `y_j = clip(0.5 + 0.25·sin(2π(x₀ + 0.3j)) + 0.15·(x_{(j+1) mod d} − 0.5) + ε_j, 0, 1)`.
#[derive(Debug, Clone)]
pub struct RegressionGenerator {
    dim: usize,
    targets: usize,
    noise: NoiseModel,
}

impl RegressionGenerator {
    pub fn new(config: &SyntheticRegressionConfig) -> Result<Self> {
        if config.dim == 0 || config.targets == 0 {
            return Err(Error::InvalidConfig("regression generator needs dim ≥ 1 and targets ≥ 1".into()));
        }
        let sigma = config.noise.base_sigma();
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!("noise sigma must be ≥ 0, got {sigma}")));
        }
        Ok(Self { dim: config.dim, targets: config.targets, noise: config.noise })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn targets(&self) -> usize {
        self.targets
    }

    /// Noise-free regression function for target `j`.
    pub fn clean(&self, x: &[f64], j: usize) -> f64 {
        let wave = (std::f64::consts::TAU * (x[0] + 0.3 * j as f64)).sin();
        0.5 + 0.25 * wave + 0.15 * (x[(j + 1) % self.dim] - 0.5)
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = (0..self.dim).map(|_| rng.gen::<f64>()).collect();
        let sigma = self.noise.sigma_at(&x);
        let y = (0..self.targets)
            .map(|j| {
                let eps = if sigma > 0.0 { Normal::new(0.0, sigma).expect("sigma > 0").sample(rng) } else { 0.0 };
                (self.clean(&x, j) + eps).clamp(0.0, 1.0)
            })
            .collect();
        (x, y)
    }

    /// `count` raw draws from the stream at `path` below `seed`.
    pub fn draw_many(&self, seed: u64, path: &[u64], count: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = seeding::rng(seed, path);
        (0..count).map(|_| self.draw(&mut rng)).unzip()
    }
}

/// `n` samples, with features and labels min-max normalized to `[0, 1]`.
pub fn generate_regression(config: &SyntheticRegressionConfig) -> Result<RegressionDataset> {
    if config.n < 10 {
        return Err(Error::InvalidConfig(format!("need n ≥ 10 samples, got {}", config.n)));
    }
    let generator = RegressionGenerator::new(config)?;
    let (features, targets) = generator.draw_many(config.seed, &[], config.n);
    Ok(RegressionDataset {
        feature_names: (0..config.dim).map(|c| format!("x{c}")).collect(),
        target_names: (0..config.targets).map(|j| format!("y{j}")).collect(),
        features,
        targets,
    }
    .min_max_normalized())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticFieldConfig {
    pub rows: usize,
    pub cols: usize,
    /// Approximate fraction of event cells; `0` gives empty label fields.
    pub event_rate: f64,
    /// Slope applied to the true log-odds by the predictor; `1` is calibrated,
    /// larger values are overconfident.
    pub sharpness: f64,
    /// Standard deviation of per-cell noise added to the predictor's log-odds.
    pub noise: f64,
    pub n: usize,
    pub seed: u64,
}

impl Default for SyntheticFieldConfig {
    fn default() -> Self {
        Self { rows: 27, cols: 27, event_rate: 0.1, sharpness: 1.5, noise: 0.5, n: 1200, seed: 0 }
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Probability fields drawn from a few random Gaussian blobs.
///
/// Each sample places two blobs (centers uniform on the grid, radius 2–6
/// cells, amplitude 0.5–1.5). The true event probability is
/// `σ(logit(rate) + 4·(z − 0.5))` where `z` is the blob intensity, and labels
/// are Bernoulli draws from it. The predictor reports
/// `σ(sharpness·logit(p) + N(0, noise²))`, capped below 1 so that `λ = 1`
/// always yields an empty set.
#[derive(Debug, Clone)]
pub struct FieldGenerator {
    config: SyntheticFieldConfig,
}

const PROB_CAP: f64 = 1.0 - 1e-6;

impl FieldGenerator {
    pub fn new(config: &SyntheticFieldConfig) -> Result<Self> {
        if config.rows < 2 || config.cols < 2 {
            return Err(Error::InvalidConfig("field grids need at least 2×2 cells".into()));
        }
        if !(0.0..1.0).contains(&config.event_rate) {
            return Err(Error::InvalidConfig(format!("event rate must be in [0, 1), got {}", config.event_rate)));
        }
        if !(config.sharpness.is_finite() && config.sharpness > 0.0 && config.noise.is_finite() && config.noise >= 0.0) {
            return Err(Error::InvalidConfig("sharpness must be > 0 and noise ≥ 0".into()));
        }
        Ok(Self { config: config.clone() })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.config.rows, self.config.cols)
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> FieldSample {
        let SyntheticFieldConfig { rows, cols, event_rate, sharpness, noise, .. } = self.config;
        let blobs: Vec<(f64, f64, f64, f64)> = (0..2)
            .map(|_| {
                (
                    rng.gen_range(0.0..rows as f64),
                    rng.gen_range(0.0..cols as f64),
                    rng.gen_range(2.0..6.0),
                    rng.gen_range(0.5..1.5),
                )
            })
            .collect();
        let base = if event_rate > 0.0 { (event_rate / (1.0 - event_rate)).ln() } else { f64::NEG_INFINITY };
        let jitter = (noise > 0.0).then(|| Normal::new(0.0, noise).expect("noise > 0"));
        let mut probs = Vec::with_capacity(rows * cols);
        let mut members = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let z: f64 = blobs
                    .iter()
                    .map(|&(br, bc, radius, amp)| {
                        let d2 = (r as f64 - br).powi(2) + (c as f64 - bc).powi(2);
                        amp * (-d2 / (2.0 * radius * radius)).exp()
                    })
                    .sum();
                let logit = base + 4.0 * (z - 0.5);
                let truth = logistic(logit);
                members.push(rng.gen::<f64>() < truth);
                let eps = jitter.map_or(0.0, |n| n.sample(rng));
                let predicted = if logit.is_finite() { logistic(sharpness * logit + eps) } else { logistic(-8.0 + eps) };
                probs.push(predicted.min(PROB_CAP));
            }
        }
        FieldSample {
            field: ProbabilityField::new(rows, cols, probs).expect("logistic output lies in [0, 1]"),
            label: GridPredictionSet::from_mask(rows, cols, members).expect("mask sized to grid"),
        }
    }

    pub fn draw_many(&self, seed: u64, path: &[u64], count: usize) -> Vec<FieldSample> {
        let mut rng = seeding::rng(seed, path);
        (0..count).map(|_| self.draw(&mut rng)).collect()
    }
}

pub fn generate_fields(config: &SyntheticFieldConfig) -> Result<FieldDataset> {
    if config.n < 10 {
        return Err(Error::InvalidConfig(format!("need n ≥ 10 samples, got {}", config.n)));
    }
    let generator = FieldGenerator::new(config)?;
    Ok(FieldDataset { samples: generator.draw_many(config.seed, &[], config.n) })
}
