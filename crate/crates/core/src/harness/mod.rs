//! Synthetic data, metrics, run configuration, and experiment orchestration.

mod config;
mod experiment;
mod metrics;
mod synthetic;

pub use config::{PredictorKind, RunConfig};
pub use experiment::{
    evaluate, evaluation_set, fit_tokenizer, run_experiment, train_predictor, training_set,
    write_report, Dataset, EvalReport, Evaluated, TaskReport, CODEBOOK_FILE, CONFIG_FILE,
    LOSS_CURVE_FILE, PARAMS_FILE, REPORT_FILE, TIMING_FILE,
};
pub use metrics::{psnr, token_accuracy, PSNR_CAP_DB};
pub use synthetic::{gen_synthetic, render, SyntheticDatasetSpec, DIRECTIONS};
