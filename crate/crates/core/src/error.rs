use thiserror::Error;

use crate::convex::RelaxedSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid radar configuration: {0}")]
    InvalidConfig(String),

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("expected {expected} targets, found {found}")]
    TargetCount { expected: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("compensation weights must be positive")]
    NonPositiveWeight,

    #[error("difference grid is empty")]
    EmptyGrid,

    #[error("infeasible budgets: {0}")]
    InfeasibleBudget(String),

    #[error("element {0} is outside the ground set")]
    OutsideGroundSet(usize),

    #[error("enumeration of {count} candidates exceeds the cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("ground set of {size} elements is too large for enumeration (max {max})")]
    GroundSetTooLarge { size: usize, max: usize },

    #[error(
        "relaxation did not converge in {iterations} iterations \
         (primal {primal_residual:.3e}, dual {dual_residual:.3e}, gap {gap:.3e})"
    )]
    NotConverged {
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
        gap: f64,
        best: Box<RelaxedSolution>,
    },

    #[error("selection is empty")]
    EmptySelection,

    #[error("search grid does not contain the true parameters")]
    SearchGridExcludesTruth,

    #[error("illegal combination: {0}")]
    IllegalCombination(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}
