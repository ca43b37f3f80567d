//! Gender-routed two-stage training and inference, the pooled baseline, and
//! validation-based checkpoint selection.

mod config;
mod features;
pub mod store;
mod train;
mod two_stage;

pub use config::{sha256_hex, ScheduleConfig, SelectionMetric, TrainConfig};
pub use features::{Example, FeatureSet};
pub use train::{select_best, train_classifier, EpochRecord, History, Stage, StepRecord, Trained};
pub use two_stage::{
    disease_names, evaluate, evaluate_features, predict_two_stage, train_baseline, train_baseline_features,
    train_two_stage, train_two_stage_features, BaselineModel, BaselineTraining, Evaluated, Prediction,
    TwoStageModel, TwoStageTraining, HARD_ROUTING_NOTE, ORACLE_ROUTING_NOTE, WEIGHTED_BASELINE_NOTE,
};
