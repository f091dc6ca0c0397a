use thiserror::Error;

/// Errors produced across planning, simulation and reconstruction.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible shot: SNR floor {floor:.4} exceeds saturation ceiling {ceiling:.4}")]
    InfeasibleShot { floor: f64, ceiling: f64 },

    #[error("infeasible plan: {0}")]
    Infeasible(String),

    #[error("shot budget exceeded: more than {max} shots needed on one camera")]
    ShotBudgetExceeded { max: usize },

    #[error("grid too large: {combinations} combinations exceeds cap {cap}")]
    GridTooLarge { combinations: u64, cap: u64 },

    #[error("no pixel yields a valid radiance estimate")]
    EmptyEstimate,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("least-squares system is rank deficient")]
    RankDeficient,

    #[error("camera radiance ranges have no common interval ({low:.4} >= {high:.4})")]
    NoCommonRange { low: f64, high: f64 },

    #[error("mask selects no pixels")]
    EmptyMask,

    #[error("scene spec infeasible: {0}")]
    SpecInfeasible(String),

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Wraps a pipeline-stage error with the iteration it happened in.
    pub fn at_iteration(self, iteration: usize) -> Self {
        Error::Iteration {
            iteration,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping iteration context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Iteration { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
