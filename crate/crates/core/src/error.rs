use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("mask has no foreground voxels")]
    EmptyMask,

    #[error("masked intensities have zero variance")]
    ConstantRegion,

    #[error("no co-occurring voxel pair inside the mask in any direction")]
    InsufficientPairs,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("forward cache does not belong to this network/batch: {0}")]
    StaleCache(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance is not positive definite after jitter escalation")]
    SingularCovariance,

    #[error("every mixture component was annihilated")]
    DegenerateModel,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("mixture fit failed: {0}")]
    FitFailure(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("monotone likelihood: coefficient {index} diverged to {value:.3}")]
    Separation { index: usize, value: f64 },

    #[error("information matrix is singular (collinear covariates)")]
    Collinearity,

    #[error("no comparable pairs")]
    NoComparablePairs,

    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },

    #[error("duplicate patient id `{0}`")]
    DuplicateId(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for failures of an optimizer or a numerical routine, as opposed
    /// to malformed input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::SingularCovariance
            | Error::DegenerateModel
            | Error::FitFailure(_)
            | Error::Numeric(_)
            | Error::Separation { .. }
            | Error::Collinearity => true,
            Error::Stage { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub(crate) fn parse_err(path: impl AsRef<std::path::Path>, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.as_ref().display().to_string(),
        msg: msg.into(),
    }
}
