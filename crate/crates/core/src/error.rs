use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate candidate: posterior variance plus noise is {0:e}")]
    DegenerateCandidate(f64),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("degenerate distribution: samples have zero variance")]
    DegenerateDistribution,

    #[error("integration diverged at t = {time:.4}: |state| = {magnitude:e} for input {input:?}")]
    Divergence { time: f64, magnitude: f64, input: Vec<f64> },

    #[error("no valid candidate: every acquisition value is infinite")]
    NoValidCandidate,

    #[error("unknown criterion `{0}` (valid kinds: US, IVR-IW, IVR-LW, B, QUANTILE)")]
    UnknownCriterion(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    #[error("trial {trial}, iteration {iteration}: {source}")]
    Trial {
        trial: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by floating-point breakdown or unstable dynamics
    /// rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_)
            | Error::DegenerateCandidate(_)
            | Error::DegenerateDistribution
            | Error::Divergence { .. }
            | Error::NoValidCandidate => true,
            Error::Trial { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::InvalidArgument(_)
                | Error::UnknownCriterion(_)
                | Error::Config { .. }
                | Error::Format { .. }
                | Error::InsufficientSamples { .. }
        )
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
