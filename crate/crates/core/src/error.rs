use thiserror::Error;

pub type Result<T> = std::result::Result<T, GpError>;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Cholesky failed even after the whole jitter ladder was tried.
    #[error("{context} is not positive definite (last jitter tried: {jitter:e})")]
    NotPositiveDefinite { context: String, jitter: f64 },

    #[error("block {block}: {source}")]
    Block {
        block: usize,
        #[source]
        source: Box<GpError>,
    },

    #[error("protocol error in phase {phase}: {detail}")]
    Protocol { phase: String, detail: String },

    #[error("worker {worker} failed in phase {phase}: {detail}")]
    WorkerFailed {
        phase: String,
        worker: usize,
        detail: String,
    },

    #[error("phase {phase} timed out waiting for workers {workers:?}")]
    Timeout { phase: String, workers: Vec<usize> },
}

impl GpError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        GpError::InvalidArgument(msg.into())
    }

    /// Tags an error with the (zero-based) block it came from.
    pub fn in_block(self, block: usize) -> Self {
        GpError::Block {
            block,
            source: Box::new(self),
        }
    }

    pub fn is_numerical(&self) -> bool {
        match self {
            GpError::NotPositiveDefinite { .. } => true,
            GpError::Block { source, .. } => source.is_numerical(),
            GpError::WorkerFailed { detail, .. } => detail.contains("positive definite"),
            _ => false,
        }
    }

    pub fn is_protocol(&self) -> bool {
        match self {
            GpError::Protocol { .. } | GpError::Timeout { .. } => true,
            GpError::WorkerFailed { .. } => !self.is_numerical(),
            GpError::Block { source, .. } => source.is_protocol(),
            _ => false,
        }
    }
}
