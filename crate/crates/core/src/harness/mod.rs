//! Scenario loading, closed-loop runs, CSV logs and steady-state metrics.

pub mod batch;
pub mod config;
pub mod log;
pub mod metrics;
pub mod run;

pub use batch::{evaluate, evaluate_batch, evaluate_batch_sequential, run_batch, run_batch_sequential};
pub use config::{FeedbackSource, PlantInput, ScenarioConfig};
pub use log::{write_log_csv, write_sense_csv, LOG_COLUMNS};
pub use metrics::{compare, percent_change, steady_state_rmse, Comparison, ErrorReport, METRIC_NAMES};
pub use run::{run, LogRow, RunLog};
