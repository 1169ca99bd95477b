use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("Fock truncation too small: need n_max >= {needed}, have {have}")]
    TruncationTooSmall { needed: usize, have: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid atom state: {0}")]
    InvalidAtomState(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid cavity state: {0}")]
    InvalidState(String),

    #[error("integrator step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("degenerate null space: {count} eigenvalues within tolerance of zero")]
    DegenerateNullSpace { count: usize },

    #[error("moment system unstable: gamma1 - gamma2 = {delta} is not negative")]
    UnstableSystem { delta: f64 },

    #[error("unphysical moments: {0}")]
    UnphysicalMoments(String),

    #[error("photon number is insensitive to the coupling strength")]
    ZeroSensitivity,

    #[error("atomic coherence is zero")]
    ZeroCoherence,

    #[error("fit window contains {points} grid points, need at least 2")]
    EmptyWindow { points: usize },
}

impl Error {
    /// Stable machine-readable name, used by the CLI error report.
    pub fn category(&self) -> &'static str {
        match self {
            Error::TruncationTooSmall { .. } => "TruncationTooSmall",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidAtomState(_) => "InvalidAtomState",
            Error::InvalidParams(_) => "InvalidParams",
            Error::InvalidState(_) => "InvalidState",
            Error::StepSizeUnderflow { .. } => "StepSizeUnderflow",
            Error::NoConvergence(_) => "NoConvergence",
            Error::DegenerateNullSpace { .. } => "DegenerateNullSpace",
            Error::UnstableSystem { .. } => "UnstableSystem",
            Error::UnphysicalMoments(_) => "UnphysicalMoments",
            Error::ZeroSensitivity => "ZeroSensitivity",
            Error::ZeroCoherence => "ZeroCoherence",
            Error::EmptyWindow { .. } => "EmptyWindow",
        }
    }
}
