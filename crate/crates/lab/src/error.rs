use chernoff_core::LabError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Module {
        context: &'static str,
        #[source]
        source: LabError,
    },

    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub fn module(context: &'static str) -> impl Fn(LabError) -> RunError {
        move |source| RunError::Module { context, source }
    }

    /// 2 for bad input, 4 for numerical breakdown.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) | RunError::Output { .. } => 2,
            RunError::Module { source, .. } => match source {
                LabError::Numerical(_) | LabError::EigenNonConvergence { .. } | LabError::InvariantViolation(_) => 4,
                _ => 2,
            },
        }
    }
}
