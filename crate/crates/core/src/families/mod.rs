//! Concrete parameterized predictors and their losses.

pub mod segmentation;
pub mod selective;

pub use segmentation::{
    false_discovery_loss, false_discovery_profile, normalized_size, segmentation_threshold, size_profile,
    GridPredictionSet, ProbabilityField,
};
pub use selective::{
    max_loss, miscoverage, multi_selective_loss, multi_selective_predict, selective_loss, selective_loss_row,
    selective_predict, MeanSpread, SelectiveOutput, SelectivePredictor,
};
