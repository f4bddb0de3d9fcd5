//! Experiment harness: configuration, stage runners, evaluation and comparison.

pub mod compare;
pub mod config;
pub mod eval;
pub mod selftest;
pub mod stages;

pub use compare::{compare_runs, Comparison, ComparisonRow, SeedSummary, COMPARISON_HEADER};
pub use config::ExperimentConfig;
pub use eval::{eval_initial_states, evaluate, EvalRow, EVAL_HEADER};
pub use selftest::{run_selftest, CheckResult};
pub use stages::{
    checkpoint_name, evaluate_checkpoint, run_dir, run_stage1, run_stage2, seed_dir, stage1_dir, Mode, Stage1Report,
    METRICS_HEADER,
};
