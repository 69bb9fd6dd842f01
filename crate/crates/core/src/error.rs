use thiserror::Error;

use crate::store::ObjectKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("element access on a phantom tensor ({param_count} params)")]
    PhantomAccess { param_count: u64 },

    #[error("protocol violation: key {0} written twice")]
    DuplicateKey(ObjectKey),

    #[error("object {0} not found")]
    NotFound(ObjectKey),

    #[error("infeasible: {required_mb:.0} MB required, limit {limit_mb:.0} MB")]
    Infeasible { required_mb: f64, limit_mb: f64 },

    #[error(
        "{function}: out of memory ({required_mb:.0} MB required, {allocated_mb} MB allocated)"
    )]
    OutOfMemory {
        function: String,
        required_mb: f64,
        allocated_mb: u32,
    },

    #[error("{function}: timed out after {elapsed_s:.1} s (limit {timeout_s:.0} s)")]
    Timeout {
        function: String,
        elapsed_s: f64,
        timeout_s: f64,
    },

    #[error("phase {phase}: {source}")]
    Phase {
        phase: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Strips phase context, returning the underlying failure.
    pub fn root(&self) -> &Error {
        match self {
            Error::Phase { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(
            self.root(),
            Error::Infeasible { .. } | Error::OutOfMemory { .. }
        )
    }
}
