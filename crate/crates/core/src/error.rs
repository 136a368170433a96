use thiserror::Error;

/// Errors raised by the block-chain solvers and builders.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("level index {index} out of range for {levels} levels")]
    LevelOutOfRange { index: usize, levels: usize },

    #[error("phase index {phase} out of range for level {level} with {count} phases")]
    PhaseOutOfRange { level: usize, phase: usize, count: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("negative entry {value} in block ({row_level}, {col_level})")]
    NegativeEntry {
        row_level: usize,
        col_level: usize,
        value: f64,
    },

    #[error("row ({level}, {phase}) sums to {sum}, which exceeds 1")]
    NotSubstochastic { level: usize, phase: usize, sum: f64 },

    #[error("row ({level}, {phase}) sums to {sum}, expected 1")]
    NotStochastic { level: usize, phase: usize, sum: f64 },

    #[error("I - Phi is singular at level {level}: the chain is reducible or the elimination broke down")]
    SingularPivot { level: usize },

    #[error("zero elimination denominator at phase {phase}: the level-0 block is reducible")]
    ZeroDenominator { phase: usize },

    #[error("cannot normalize a vector with zero total mass")]
    ZeroMass,

    #[error("matrix is reducible: scalar state {state} is not mutually reachable with state 0")]
    Reducible { state: usize },

    #[error("path enumeration depth {depth} exceeds the limit {limit}")]
    DepthTooLarge { depth: usize, limit: usize },

    #[error("truncation depth ceiling {ceiling} reached; best bound {best_bound:e} at depth {depth}")]
    DepthCeiling {
        ceiling: usize,
        depth: usize,
        best_bound: f64,
    },

    #[error("tolerance {eps:e} is below the uncapturable tail floor {floor:e}")]
    UnreachableTolerance { eps: f64, floor: f64 },

    #[error("power iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("power iteration cancelled after {iterations} sweeps")]
    Cancelled { iterations: usize },

    #[error("problem of {states} scalar states exceeds the dense limit {limit}")]
    TooLarge { states: usize, limit: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
