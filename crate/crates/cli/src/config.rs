//! Experiment configuration files for `lcc validate`.

use std::path::{Path, PathBuf};

use lcc_core::harness::{NoiseModel, SplitPlan, SyntheticFieldConfig, SyntheticRegressionConfig};
use lcc_core::{seeding, ParamGrid, SearchFunction, TrainConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Seed streams derived from the root seed.
pub mod stream {
    pub const DATA: u64 = 1;
    pub const MODEL: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const TRIALS: u64 = 4;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    MonteCarlo,
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Selective,
    MultiSelective,
    Segmentation,
}

impl Family {
    pub fn default_search(self) -> &'static str {
        match self {
            Self::Selective | Self::MultiSelective => "max",
            Self::Segmentation => "min",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionSettings {
    pub n: usize,
    pub dim: usize,
    pub noise_sigma: f64,
    pub heteroscedastic: bool,
    /// Defaults to 1 for `selective` and 2 for `multi_selective`.
    pub targets: Option<usize>,
}

impl Default for RegressionSettings {
    fn default() -> Self {
        Self { n: 2000, dim: 8, noise_sigma: 0.05, heteroscedastic: true, targets: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSettings {
    pub n: usize,
    pub rows: usize,
    pub cols: usize,
    pub event_rate: f64,
    pub sharpness: f64,
    pub noise: f64,
}

impl Default for FieldSettings {
    fn default() -> Self {
        let d = SyntheticFieldConfig::default();
        Self { n: 2000, rows: d.rows, cols: d.cols, event_rate: d.event_rate, sharpness: d.sharpness, noise: d.noise }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub variant: String,
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub max_nodes: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self { variant: "rf".into(), n_trees: 50, max_depth: None, min_leaf: 1, max_nodes: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub test_frac: f64,
    pub calib_frac: f64,
    pub repeats: usize,
}

impl Default for SplitSettings {
    fn default() -> Self {
        let d = SplitPlan::default();
        Self { test_frac: d.test_frac, calib_frac: d.calib_frac, repeats: d.repeats }
    }
}

/// External data for split experiments: a regression CSV or a directory of
/// field/label grids. Relative paths resolve against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSettings {
    pub path: PathBuf,
    #[serde(default)]
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: Kind,
    pub family: Family,
    pub alphas: Vec<f64>,
    pub deltas: Vec<f64>,
    #[serde(default = "default_grid")]
    pub grid: String,
    #[serde(default)]
    pub search: Option<String>,
    #[serde(default = "default_bound")]
    pub bound: f64,
    #[serde(default)]
    pub seed: u64,
    /// Monte Carlo only: number of trials (default 2000).
    #[serde(default)]
    pub trials: Option<usize>,
    /// Monte Carlo only: calibration rows per trial (default 200).
    #[serde(default)]
    pub n: Option<usize>,
    /// Monte Carlo selective only: samples used to fit the ensembles (default 1000).
    #[serde(default)]
    pub n_train: Option<usize>,
    #[serde(default)]
    pub split: Option<SplitSettings>,
    #[serde(default)]
    pub regression: RegressionSettings,
    #[serde(default)]
    pub fields: FieldSettings,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub input: Option<InputSettings>,
}

fn default_grid() -> String {
    "0:1:0.01".into()
}

fn default_bound() -> f64 {
    1.0
}

/// `start:stop:step`, or a file of grid values separated by commas or whitespace.
pub fn parse_grid(text: &str) -> Result<ParamGrid, String> {
    if text.contains(':') && !Path::new(text).exists() {
        return ParamGrid::parse_range(text).map_err(|e| e.to_string());
    }
    let content = std::fs::read_to_string(text).map_err(|e| format!("grid `{text}` is neither a range nor a readable file: {e}"))?;
    let values = content
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("grid file `{text}`: `{t}` is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    ParamGrid::scalar(values).map_err(|e| e.to_string())
}

/// Everything needed to run, checked up front.
#[derive(Debug, Clone)]
pub struct Validated {
    pub config: RunConfig,
    pub grid: ParamGrid,
    pub search: SearchFunction,
    pub input: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(vec![e.to_string()]))
    }

    pub fn targets(&self) -> usize {
        match self.family {
            Family::Selective => self.regression.targets.unwrap_or(1),
            Family::MultiSelective => self.regression.targets.unwrap_or(2),
            Family::Segmentation => 1,
        }
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or(2000)
    }

    pub fn n(&self) -> usize {
        self.n.unwrap_or(200)
    }

    pub fn n_train(&self) -> usize {
        self.n_train.unwrap_or(1000)
    }

    pub fn plan(&self) -> SplitPlan {
        let s = self.split.clone().unwrap_or_default();
        SplitPlan {
            test_frac: s.test_frac,
            calib_frac: s.calib_frac,
            repeats: s.repeats,
            seed: seeding::derive(self.seed, &[stream::SPLIT]),
        }
    }

    pub fn regression_config(&self) -> SyntheticRegressionConfig {
        let r = &self.regression;
        let noise = if r.heteroscedastic {
            NoiseModel::Heteroscedastic { sigma: r.noise_sigma }
        } else {
            NoiseModel::Homoscedastic { sigma: r.noise_sigma }
        };
        SyntheticRegressionConfig {
            n: r.n,
            dim: r.dim,
            noise,
            targets: self.targets(),
            seed: seeding::derive(self.seed, &[stream::DATA]),
        }
    }

    pub fn field_config(&self) -> SyntheticFieldConfig {
        let f = &self.fields;
        SyntheticFieldConfig {
            rows: f.rows,
            cols: f.cols,
            event_rate: f.event_rate,
            sharpness: f.sharpness,
            noise: f.noise,
            n: f.n,
            seed: seeding::derive(self.seed, &[stream::DATA]),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, String> {
        let variant = Variant::parse(&self.model.variant).map_err(|e| e.to_string())?;
        Ok(TrainConfig {
            n_trees: self.model.n_trees,
            max_depth: self.model.max_depth,
            min_leaf: self.model.min_leaf,
            max_nodes: self.model.max_nodes,
            ..TrainConfig::for_variant(variant, seeding::derive(self.seed, &[stream::MODEL]))
        })
    }

    /// Collects every problem instead of stopping at the first.
    pub fn validate(self, base_dir: &Path) -> Result<Validated, CliError> {
        let mut problems = Vec::new();
        if self.alphas.is_empty() {
            problems.push("alphas: at least one value is required".to_string());
        }
        if let Some(a) = self.alphas.iter().find(|a| !a.is_finite() || **a < 0.0) {
            problems.push(format!("alphas: {a} is not a nonnegative number"));
        }
        if self.deltas.is_empty() {
            problems.push("deltas: at least one value is required".to_string());
        }
        if let Some(d) = self.deltas.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
            problems.push(format!("deltas: {d} is outside (0, 1)"));
        }
        if !(self.bound.is_finite() && self.bound > 0.0) {
            problems.push(format!("bound: {} must be positive and finite", self.bound));
        }
        let grid = parse_grid(&self.grid).map_err(|e| problems.push(format!("grid: {e}"))).ok();
        let search_name = self.search.clone().unwrap_or_else(|| self.family.default_search().into());
        let search = SearchFunction::parse(&search_name).map_err(|e| problems.push(format!("search: {e}"))).ok();
        if let Err(e) = self.train_config() {
            problems.push(format!("model.variant: {e}"));
        }
        if self.model.n_trees < 2 {
            problems.push("model.n_trees: at least 2 trees are required".into());
        }
        match self.family {
            Family::MultiSelective if self.targets() < 2 => {
                problems.push("regression.targets: multi_selective needs at least 2 targets".into())
            }
            Family::Selective if self.targets() != 1 => {
                problems.push("regression.targets: selective uses exactly 1 target; use multi_selective".into())
            }
            _ => {}
        }
        match self.kind {
            Kind::MonteCarlo => {
                if self.trials() < 100 {
                    problems.push(format!("trials: {} is below the minimum of 100", self.trials()));
                }
                if self.n() == 0 {
                    problems.push("n: at least one calibration row is required".into());
                }
                if self.split.is_some() {
                    problems.push("split: only applies to kind \"split\"".into());
                }
                if self.input.is_some() {
                    problems.push("input: Monte Carlo runs draw from the synthetic generators".into());
                }
            }
            Kind::Split => {
                for (key, set) in [("trials", self.trials.is_some()), ("n", self.n.is_some()), ("n_train", self.n_train.is_some())] {
                    if set {
                        problems.push(format!("{key}: only applies to kind \"monte_carlo\""));
                    }
                }
                if let Err(e) = self.plan().validate() {
                    problems.push(format!("split: {e}"));
                }
            }
        }
        let input = self.input.as_ref().map(|i| base_dir.join(&i.path));
        if let Some(path) = &input {
            if !path.exists() {
                return Err(CliError::MissingInput(path.clone()));
            }
            if self.family == Family::Segmentation && !path.is_dir() {
                problems.push("input.path: segmentation input must be a directory of field/label grids".into());
            }
        }
        if !problems.is_empty() {
            return Err(CliError::Config(problems));
        }
        Ok(Validated { config: self, grid: grid.expect("checked"), search: search.expect("checked"), input })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_json(r#"{"kind":"split","family":"selective","alphas":[0.1],"deltas":[0.1],"colour":1}"#)
            .unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn all_problems_listed() {
        let cfg = RunConfig::from_json(
            r#"{"kind":"monte_carlo","family":"multi_selective","alphas":[],"deltas":[1.5],"trials":5,
                "regression":{"targets":1},"grid":"1:0:0.1"}"#,
        )
        .unwrap();
        let CliError::Config(problems) = cfg.validate(Path::new(".")).unwrap_err() else { panic!() };
        let keys: Vec<&str> = problems.iter().map(|p| p.split(':').next().unwrap()).collect();
        assert_eq!(keys, ["alphas", "deltas", "grid", "regression.targets", "trials"]);
    }

    #[test]
    fn defaults_follow_family() {
        let cfg = RunConfig::from_json(r#"{"kind":"split","family":"segmentation","alphas":[0.4],"deltas":[0.1]}"#)
            .unwrap()
            .validate(Path::new("."))
            .unwrap();
        assert_eq!(cfg.search.name(), "min");
        assert_eq!(cfg.grid.len(), 101);
        assert_eq!(cfg.config.plan().repeats, 10);
    }
}
