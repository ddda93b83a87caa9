use thiserror::Error;

use crate::atom::Basis;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("basis mismatch: expected {expected:?} basis, found {found:?}")]
    BasisMismatch { expected: Basis, found: Basis },

    #[error("not a density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("time step too large: dt * max rate = {product:.4} exceeds {cap} (override with allow_large_dt)")]
    TimeStepTooLarge { product: f64, cap: f64 },

    #[error("trajectory {traj_index} aborted at step {step}: state norm underflow ({norm:e})")]
    NormUnderflow { traj_index: u64, step: u64, norm: f64 },

    #[error("{failed} of {total} trajectories aborted (limit is 0.1%); first failure: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: Box<Error>,
    },

    #[error("density-operator basis is singular (condition number {condition:e})")]
    SingularBasis { condition: f64 },

    #[error("time grids differ between basis evolutions")]
    GridMismatch,

    #[error("operation requires zero detuning, got {0}")]
    RequiresResonance(f64),

    #[error("degenerate pole structure: Gamma' equals Omega within 1e-9")]
    DegenerateRegime,

    #[error("steady state not reached after t = {time} (slowest decay rate {rate:e})")]
    NoSteadyState { time: f64, rate: f64 },

    #[error("phase undefined on {masked} of {total} samples")]
    PhaseUndefined { masked: usize, total: usize },

    #[error("correlation undefined: series has zero variance")]
    ZeroVariance,

    #[error("correlation never crosses one half within max lag {max_lag}; increase max_lag")]
    NoHalfCrossing { max_lag: usize },

    #[error("series too short: {samples} samples for max lag {max_lag} (need at least 10x)")]
    SeriesTooShort { samples: usize, max_lag: usize },

    #[error("sample grid is not uniform")]
    NonUniformGrid,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
