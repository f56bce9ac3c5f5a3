use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "power iteration did not converge after {iterations} iterations (last estimate {last})"
    )]
    PowerIterationNotConverged { iterations: usize, last: f64 },

    #[error("{reason} at line {line}")]
    Parse { line: usize, reason: String },

    #[error("probability {0} is outside (0, 1]")]
    InvalidProbability(f64),

    #[error("cohort size s={s} is invalid for n={n} clients (need 2 <= s <= n)")]
    InvalidCohort { n: usize, s: usize },

    #[error("geometric draw exceeded the cap of {cap} (p={p} is implausibly small)")]
    GeometricCapExceeded { cap: u64, p: f64 },

    #[error("{samples} samples cannot be split across {clients} clients")]
    TooFewSamples { samples: usize, clients: usize },

    /// A parameter violates one of the conditions under which the algorithms
    /// are guaranteed to converge, or is otherwise out of range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("solver hit the iteration cap of {iterations} (gradient norm {grad_norm})")]
    IterationCap { iterations: usize, grad_norm: f64 },

    #[error("iterates diverged: squared distance {sq_dist} exceeds {limit}")]
    Diverged { sq_dist: f64, limit: f64 },
}
