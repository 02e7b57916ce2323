//! Experiment driver: dataset generation, staged training, sweeps and
//! result emission for the contrastive multi-user estimator.

pub mod commands;
pub mod error;
pub mod manifest;
pub mod output;

pub use commands::{
    cmd_evaluate, cmd_generate, cmd_similarity_study, cmd_train, resolve_config, Axis, EvaluationSummary,
    GlobalOptions, ResultRow, Stage, Workspace,
};
pub use error::{CliError, CliResult};
