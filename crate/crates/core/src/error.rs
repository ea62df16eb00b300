use thiserror::Error;

/// Errors raised by the simulation, observable and oracle layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("particle index must be at least 1, got {0}")]
    ParticleIndex(usize),

    #[error("invalid jump profile: {0}")]
    InvalidProfile(String),

    #[error("particle {0} is blocked and cannot jump")]
    Blocked(usize),

    #[error("target time {target} is before the current time {current}")]
    TimeReversal { target: f64, current: f64 },

    #[error("invalid time {0}: must be finite and nonnegative")]
    InvalidTime(f64),

    #[error("window [{lo}, {hi}] does not cover the disturbed region [{need_lo}, {need_hi}]")]
    WindowTooSmall {
        lo: i64,
        hi: i64,
        need_lo: i64,
        need_hi: i64,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("replica {replica}: {detail}")]
    Replica { replica: usize, detail: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
