//! Initialization, optimization, early stopping, the linear baseline, and
//! experiment sweeps.

mod adam;
mod baseline;
mod experiment;
pub mod init;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use baseline::{design_matrix, fit_linear, linear_baseline, linear_baseline_scored, RIDGE_JITTER};
pub use experiment::{
    run_experiment, ExperimentConfig, ExperimentKind, ExperimentReport, ExperimentRow, DROPOUT_RATES,
    NOISE_LEVELS,
};
pub use init::{xavier_init, xavier_uniform};
pub use trainer::{
    evaluate, prepare, report_from_predictions, train, EarlyStopping, EpochRecord, Prepared, TrainConfig,
    TrainLog, DIVERGENCE_LOSS,
};
