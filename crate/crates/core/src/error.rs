//! Error taxonomy shared by all modules.
//!
//! Two classes matter operationally: configuration errors (caught before any
//! computation; the CLI maps them to exit code 2) and numerical failures such
//! as singular regression designs (exit code 3). Everything else is a plain
//! invariant violation with context.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration. Carries every violation found, not just the
    /// first, so a config file can be fixed in one pass.
    #[error("configuration error:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    /// A regression design matrix is rank-deficient. Names the offending
    /// columns so the candidate pool can be fixed.
    #[error("singular design matrix; collinear columns: {columns:?}")]
    SingularDesign { columns: Vec<String> },

    /// Shape or coverage mismatch between arrays that must align.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A path does not extend far enough for the requested projection.
    #[error("path too short: need periods 0..={needed}, path ends at {available}")]
    PathTooShort { needed: usize, available: usize },

    /// A shock referenced by name is absent from the run's shock set.
    #[error("unknown or missing shock: {0}")]
    MissingShock(String),

    /// Anything else that violates a documented precondition.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// An error wrapped with where-it-happened context, e.g. the (scenario,
    /// date) node a nested run was valuing when a lower layer failed.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Helper for the common single-message configuration error.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    /// True for errors the CLI should report as exit code 2 (bad inputs)
    /// rather than 3 (numerical failure).
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Context { source, .. } => source.is_config(),
            _ => false,
        }
    }

    /// Wraps the error with location context, preserving its class.
    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }
}
