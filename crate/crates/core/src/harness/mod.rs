//! Experiment runner: configuration, the seeded round loop and reporting.

pub mod config;
pub mod report;
pub mod run;

pub use config::{expand_sweep, DatasetSource, DefenseKind, ExperimentConfig, Seeds, SweepAxis, TaskProfile};
pub use report::{rounds_csv, run_cells, summarize, SummaryRow, ROUND_HEADER};
pub use run::{detection_metrics, run_experiment, ExperimentRun, RoundOutcome};
