use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    #[error("goal {goal} is unreachable from {start}")]
    UnreachableGoal { start: u64, goal: u64 },
    #[error("pose is {distance:.3} m from the reference path (corridor {corridor} m)")]
    OffPath { distance: f64, corridor: f64 },
    #[error("frenet point folds over the reference path (d * kappa = {0:.4})")]
    SingularProjection(f64),
    #[error("no collision-free path through the lattice")]
    NoFeasiblePath,
    #[error("speed profile infeasible: {0}")]
    InfeasibleProfile(String),
    #[error("quadratic program infeasible: {0}")]
    InfeasibleQp(String),
    #[error("speed {speed:.3} m/s below dynamic-model threshold {threshold} m/s")]
    LowSpeed { speed: f64, threshold: f64 },
    #[error("no state samples available")]
    NoState,
}
