use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("state left the finite range at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("adaptive step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("unknown system `{0}`")]
    UnknownSystem(String),

    #[error("point {point:?} is a singularity of the field (|X| = {speed:e})")]
    SingularPoint { point: Vec<f64>, speed: f64 },

    #[error("no well-defined splitting: singular values coincide on every sample")]
    DegenerateSplitting,

    #[error("all {0} samples were rejected")]
    AllSamplesRejected(usize),

    #[error("ceiling lower bound must be positive, got {0}")]
    NonPositiveCeiling(f64),

    #[error("ceiling value {value} at {point:?} is below the declared bound {alpha}")]
    CeilingBoundViolated {
        point: Vec<f64>,
        value: f64,
        alpha: f64,
    },

    #[error("negative-time evolution requires an invertible base map")]
    NotInvertible,

    #[error(
        "insufficient samples: {samples} transitions for {occupied} occupied cells (need 10x)"
    )]
    InsufficientSamples { samples: usize, occupied: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("energy level {0} could not be reached from any seed")]
    EmptyLevel(f64),

    #[error("energy levels contain critical points: {0:?}")]
    CriticalLevel(Vec<f64>),

    #[error("field is not divergence-free: residual coefficient {0:e}")]
    NotDivergenceFree(f64),

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    /// True for errors caused by bad user input rather than by numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::UnknownSystem(_)
                | Error::NonPositiveCeiling(_)
                | Error::CeilingBoundViolated { .. }
                | Error::NotInvertible
                | Error::DimensionMismatch { .. }
                | Error::NotDivergenceFree(_)
                | Error::Invalid(_)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFiniteState { .. } => "NonFiniteState",
            Error::StepUnderflow { .. } => "StepUnderflow",
            Error::UnknownSystem(_) => "UnknownSystem",
            Error::SingularPoint { .. } => "SingularPoint",
            Error::DegenerateSplitting => "DegenerateSplitting",
            Error::AllSamplesRejected(_) => "AllSamplesRejected",
            Error::NonPositiveCeiling(_) => "NonPositiveCeiling",
            Error::CeilingBoundViolated { .. } => "CeilingBoundViolated",
            Error::NotInvertible => "NotInvertible",
            Error::InsufficientSamples { .. } => "InsufficientSamples",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::EmptyLevel(_) => "EmptyLevel",
            Error::CriticalLevel(_) => "CriticalLevel",
            Error::NotDivergenceFree(_) => "NotDivergenceFree",
            Error::Invalid(_) => "Invalid",
        }
    }
}
