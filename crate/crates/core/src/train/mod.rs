//! Seeded training, evaluation and forward-pass benchmarking over projected
//! scans.

mod bench;
mod config;
mod data;
mod optim;
mod report;
mod run;

pub use bench::{bench, BenchRow};
pub use config::{
    load_train_config, parse_train_config, DataConfig, LossKind, OptimizerConfig, ProjectionMode, TrainConfig,
};
pub use data::{input_tensor, split_by_parity, synthetic_dataset, Sample};
pub use optim::Optimizer;
pub use report::{EvalMetrics, RunReport};
pub use run::{evaluate, evaluate_labels, train, Predictor};
