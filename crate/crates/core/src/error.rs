//! Error type shared by all modules.

use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SpharError>;

/// Failures surfaced by the simulation and estimation pipeline.
#[derive(Debug, Error)]
pub enum SpharError {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Shapes or lengths of inputs do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A model violates its construction invariants.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A coefficient row has a characteristic root on or inside the unit circle.
    #[error(
        "non-stationary coefficient row ({context}): root modulus {modulus} must exceed {required}"
    )]
    NonStationary {
        context: String,
        modulus: f64,
        required: f64,
    },

    /// The squared modulus of the characteristic polynomial on the unit
    /// circle is numerically zero, so spectral quantities are undefined.
    #[error("near-unit-root input: |phi(e^-iv)|^2 = {modulus_sq} is below 1e-14")]
    NearUnitRoot { modulus_sq: f64 },

    /// A linear system could not be solved reliably.
    #[error("singular linear system: {0}")]
    Singular(String),

    /// Coordinate descent did not reach the requested tolerance.
    #[error("solver did not converge for multipole {ell}: last sweep changed a coordinate by {last_change} after {sweeps} sweeps")]
    NonConvergence {
        ell: usize,
        sweeps: usize,
        last_change: f64,
    },

    /// A built-in model name was not recognised.
    #[error("unknown builtin model `{0}`")]
    UnknownModel(String),

    /// File-system failure, annotated with the offending path.
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// A text record (CSV line, header) could not be parsed.
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl SpharError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| SpharError::Io { path, source }
    }
}
