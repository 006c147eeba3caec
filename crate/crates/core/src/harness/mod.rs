//! Experiment orchestration: configuration, source pretraining, the four
//! transfer methods, evaluation, aggregation, and CSV artifacts.

pub mod aggregate;
pub mod config;
pub mod source;
pub mod transfer;

pub use aggregate::{aggregate_dir, AggregateRow, EvalRow};
pub use config::{ExperimentConfig, Method};
pub use source::{train_source, SourceConfig, SourceOutcome};
pub use transfer::{evaluate, run_transfer, run_transfer_seed, EvalRecord, EventRecord, QueryRecord};
