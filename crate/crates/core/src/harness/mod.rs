//! Experiment runner: configuration, seeded training runs, evaluation,
//! checkpoints and run comparison.

pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod eval;
pub mod run;
pub mod seeds;

pub use checkpoint::Checkpoint;
pub use compare::{compare_dirs, compare_runs, load_run, Comparison};
pub use config::{ConvDef, Mode, RunConfig};
pub use eval::{evaluate, CatchOracle, EvalResult, Policy, RandomPolicy};
pub use run::{
    predicted_total_macs, read_metrics_csv, run, train_seed, write_metrics_csv, MetricsRow, Phase, RunSummary,
    SeedSummary, Trainer,
};
