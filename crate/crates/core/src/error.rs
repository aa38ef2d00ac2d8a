use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violated one of its type invariants (hermiticity, trace, positivity, ...).
    #[error("validation failed: {0}")]
    Validation(String),

    /// A jump was requested on a state that cannot emit it.
    #[error("impossible jump: {0}")]
    ImpossibleJump(String),

    #[error("degenerate effect: {0}")]
    DegenerateEffect(String),

    /// The combined forward/backward information has zero probability.
    #[error("inconsistent record: {0}")]
    InconsistentRecord(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("integrator step failed: {0}")]
    StepSize(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("config parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("solver did not converge after {iterations} iterations (best residual norm {best_residual:.3e})")]
    Solver {
        iterations: usize,
        best_residual: f64,
    },

    #[error("eigenstate extraction failed: {0}")]
    Extraction(String),

    #[error("degenerate cycle: {0}")]
    DegenerateCycle(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 2 for configuration problems, 3 for
    /// numerical failures, 1 for anything else (I/O).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } => 2,
            Error::Io { .. } => 1,
            _ => 3,
        }
    }
}
