//! Loss-controlling calibration.
//!
//! Picks a predictor parameter `λ*` from a discrete grid so that the loss on a
//! new sample stays at or below `α` with probability at least `1 − δ`, for any
//! bounded loss and any exchangeable data. The crate also carries the
//! conformal baselines it generalizes, two concrete predictor families
//! (selective regression and thresholded probability fields), a small tree
//! ensemble to drive them, and a Monte Carlo harness that checks the guarantee
//! empirically.

pub mod conformal;
pub mod engine;
pub mod ensemble;
pub mod error;
pub mod families;
pub mod grid;
pub mod harness;
pub mod matrix;
pub mod multi;
pub mod quantiles;
pub mod seeding;

pub use conformal::{clcp_calibrate, icp_calibrate, icp_predict_set, IcpThreshold, NonconformityScores};
pub use engine::{
    calibrate, calibrate_ideal, column_quantiles, feasible_set, CalibrationMode, CalibrationResult, ControlSpec,
    SearchFunction,
};
pub use ensemble::{train, TrainConfig, TreeEnsemble, Variant};
pub use error::{Error, Result};
pub use grid::ParamGrid;
pub use matrix::{compute_loss_matrix, LossMatrix};
pub use multi::{
    calibrate_multi, calibrate_multi_ideal, feasible_set_multi, sample_size_advisory, LossTensor,
    MultiCalibrationResult, MultiControlSpec, MultiSearch, SampleSizeAdvisory,
};
pub use quantiles::{augmented_quantile, conservative_quantile, full_quantile, Augmented, LossBound, QuantileLevel};
