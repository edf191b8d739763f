use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in `{0}`")]
    NonFinite(&'static str),

    #[error("source position {0:?} lies outside the room")]
    SourceOutsideRoom([f64; 3]),

    #[error("trajectory does not match the waveform: {0}")]
    TrajectoryMismatch(String),

    #[error("frame too short: {len} samples, need at least {needed}")]
    FrameTooShort { len: usize, needed: usize },

    #[error("frame length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("no signal energy in analysis frame")]
    SignalAbsent,

    #[error("filter diverged at step {step}: {what}")]
    Diverged { step: usize, what: String },

    #[error(
        "least-squares fit is rank deficient ({samples} distinct samples for degree {degree})"
    )]
    RankDeficient { samples: usize, degree: usize },

    #[error("calibration curve is not monotone near {0:.3}")]
    Ambiguous(f64),

    #[error("state {0} is outside the model's domain of definition")]
    UndefinedState(String),

    #[error("series too short: {0}")]
    SeriesTooShort(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("orientation estimate did not converge: {0}")]
    NotConverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

pub(crate) fn ensure_positive(name: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::NonFinite(name));
    }
    if v <= 0.0 {
        return Err(Error::InvalidParameter {
            name,
            reason: format!("must be > 0, got {v}"),
        });
    }
    Ok(())
}

pub(crate) fn ensure_non_negative(name: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::NonFinite(name));
    }
    if v < 0.0 {
        return Err(Error::InvalidParameter {
            name,
            reason: format!("must be >= 0, got {v}"),
        });
    }
    Ok(())
}
