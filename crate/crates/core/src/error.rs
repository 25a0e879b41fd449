use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulate → transform → fit pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Too few points to perform a fit or a peak analysis.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The adaptive integrator could not make progress.
    #[error("step size underflow at t = {t:.9e} (h = {h:.3e}); the system is too stiff for the selected integrator")]
    Stiffness { t: f64, h: f64 },

    /// A quadrature or integration failed to reach its target.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),

    /// Error annotated with the pipeline stage that produced it.
    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, with stage tags stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 1 validation, 2 numerical, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Domain(_) => 1,
            Error::InsufficientData(_) | Error::Stiffness { .. } | Error::Numerical(_) => 2,
            Error::Io { .. } | Error::Serde(_) => 3,
            Error::Stage { .. } => unreachable!("root() strips stage tags"),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
