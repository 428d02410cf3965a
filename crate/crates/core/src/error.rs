use thiserror::Error;

/// Errors raised anywhere in the design pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "matrix is singular or ill-conditioned (condition estimate {condition:.3e}) in {context}"
    )]
    Singular { condition: f64, context: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("inconsistent linear system (relative residual {residual:.3e}): {context}")]
    Inconsistent { residual: f64, context: String },

    #[error("modelling assumption violated: {0}")]
    Assumption(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("grid alignment error: {0}")]
    Alignment(String),

    #[error("identification impossible: regressor rank {achieved} < {required}")]
    Identification { achieved: usize, required: usize },

    #[error("solver inconsistency: backend reported success but {0}")]
    SolverInconsistency(String),

    #[error("solver backend failure: {0}")]
    Backend(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// Tag an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
