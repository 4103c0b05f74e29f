//! Library side of the `mimo-placement` tool: job files, the four commands
//! and their file outputs. The binary is a thin argument parser over this.

pub mod commands;
pub mod job;
pub mod output;

use std::path::PathBuf;

pub use commands::{design, evaluate, solve, sweep, verify, Prepared, SelectionFile, Solved};
pub use job::{Job, JobConfig, SolverKind};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error(transparent)]
    Core(#[from] mimo_placement::Error),
    #[error("illegal combination: {0}")]
    Illegal(String),
    #[error("selection file: {0}")]
    Schema(String),
    #[error("budgets: {0}")]
    Budgets(String),
    #[error("sweep stopped at K_P = {k_p}, K_R = {k_r} after {done} rows: {source}")]
    SweepAborted {
        k_p: usize,
        k_r: usize,
        done: usize,
        source: Box<CliError>,
    },
}

/// Parses `K_P[:K_R]`; a missing `K_R` is taken from `default_rx`.
pub fn parse_budget(text: &str, default_rx: Option<usize>) -> Result<(usize, Option<usize>), CliError> {
    let bad = || CliError::Budgets(format!("cannot parse {text:?}; expected K_P or K_P:K_R"));
    let mut parts = text.trim().split(':');
    let kp = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
    let kr = match parts.next() {
        Some(s) => Some(s.trim().parse().map_err(|_| bad())?),
        None => default_rx,
    };
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok((kp, kr))
}

/// Comma-separated budget list.
pub fn parse_budget_list(text: &str) -> Result<Vec<(usize, Option<usize>)>, CliError> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_budget(s, None))
        .collect()
}
