use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },

    /// Every active amplitude is zero, so the fused statistic is undefined.
    #[error("degenerate control: sum of gain-weighted amplitudes is zero")]
    DegenerateControl,

    #[error("non-finite observation")]
    NonFiniteObservation,

    #[error("coupling value {a} outside [0, {a_max}]")]
    CouplingOutOfRange { a: f64, a_max: f64 },

    #[error("sensor {sensor} has no power budget; a power-constrained control needs one")]
    MissingPowerBudget { sensor: usize },

    #[error("value iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("stopping condition has no sign change: stopping is optimal everywhere")]
    NoSignChange,

    #[error("trial exceeded the maximum horizon of {max_horizon} stages")]
    RunawayTrial { max_horizon: u64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}
