use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("requested {requested} decomposition levels but at most {max} are possible")]
    TooManyLevels { requested: usize, max: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("level {level} out of range 1..={max}")]
    LevelOutOfRange { level: usize, max: usize },

    #[error("window start {start} out of range 0..={max}")]
    WindowOutOfRange { start: usize, max: usize },

    #[error("SALSA iterate became non-finite at iteration {iteration}; reduce or increase salsa_mu (currently {salsa_mu})")]
    Divergence { iteration: usize, salsa_mu: f64 },

    #[error("no energy to apportion")]
    NoEnergy,

    #[error("empty spectrogram")]
    EmptySpectrogram,
}
