//! Validation harness: synthetic data, split experiments, Monte Carlo checks
//! and report writing.

pub mod data;
pub mod generators;
pub mod experiment;
pub mod montecarlo;
pub mod report;
pub mod split;

pub use data::{FieldDataset, FieldSample, RegressionDataset};
pub use generators::{
    generate_fields, generate_regression, FieldGenerator, NoiseModel, RegressionGenerator, SyntheticFieldConfig,
    SyntheticRegressionConfig,
};
pub use split::{Split, SplitPlan};
pub use experiment::{
    field_matrices, run_split_experiment, selective_matrices, train_per_target, CellSummary, ExperimentData,
    FamilyMatrices, RepeatOutcome, SplitExperiment, Summary, TrialReport,
};
pub use montecarlo::{
    binomial_tolerance, monte_carlo_guarantee, CellEstimate, FieldSource, ModeEstimate, MonteCarloConfig,
    MonteCarloReport, SelectiveSource, TrialSource,
};
pub use report::{write_json, write_monte_carlo_report, write_split_report};
