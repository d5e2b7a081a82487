//! Experiment configuration, seeded campaigns and CSV/SVG output for `sural-core`.

pub mod campaign;
pub mod config;
pub mod output;
pub mod plot;

pub use campaign::{run_experiment, summarize, sweep, Learner, Summary, SweepRow, TrialRow};
pub use config::{ConfigError, ExperimentConfig, Method};
