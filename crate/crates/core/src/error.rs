use std::path::PathBuf;

use thiserror::Error;

use crate::solver::ForceDisplacementCurve;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("stretch {0} is outside the supported domain (stretch >= 1)")]
    Domain(f64),

    #[error("operation not supported for {0}")]
    Unsupported(&'static str),

    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("mesh resolution: {0}")]
    Resolution(String),

    #[error("no friction pairing for materials {0} / {1}")]
    Classification(String, String),

    #[error("invalid configuration: {0}")]
    Configuration(String),

    #[error("Newton iteration failed to converge at load step {step} (displacement {displacement} mm)")]
    NonConvergence {
        step: usize,
        displacement: f64,
        partial: Box<ForceDisplacementCurve>,
    },

    #[error("invalid solve state: {0}")]
    State(&'static str),

    #[error("residual evaluation returned non-finite values at parameters {params:?}")]
    Evaluation { params: Vec<f64> },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("integrator accuracy: relative energy drift {drift:.3e} exceeds {limit}")]
    Integrator { drift: f64, limit: f64 },

    #[error("at pressure {pressure_kpa} kPa: {source}")]
    AtPressure {
        pressure_kpa: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {what}: {message}")]
    Parse { what: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Strips pressure annotations to get at the underlying failure.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtPressure { source, .. } => source.root(),
            other => other,
        }
    }
}
