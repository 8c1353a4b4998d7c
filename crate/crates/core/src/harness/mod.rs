//! Experiment orchestration behind the command-line tool: configuration,
//! data preparation, training, evaluation, reward sweeps and path mining.

pub mod commands;
pub mod config;
pub mod data;
pub mod train;

pub use commands::{cmd_eval, cmd_gen_synthetic, cmd_mine, cmd_sweep, cmd_train, SweepPoint, TrainRun};
pub use config::{ExperimentConfig, Mode, SweepAxis, SweepSpec};
pub use data::{prepare, Prepared};
pub use train::{evaluate_split, train, TrainOutcome};
