use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("tensor is not Hermitian: max deviation {deviation:.3e} exceeds {tolerance:.1e}")]
    NotHermitian { deviation: f64, tolerance: f64 },
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("degree {requested} exceeds the available moment degree {available}")]
    DegreeTooHigh { requested: usize, available: usize },
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("atom extraction failed: {0}")]
    Extraction(String),
    #[error("psd decomposition failed at stage {stage}: {detail}")]
    PsdDecomposition { stage: PsdStage, detail: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Stage at which a psd decomposition attempt was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdStage {
    Fit,
    Structure,
    Positivity,
    Psd,
    Residual,
}

impl std::fmt::Display for PsdStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PsdStage::Fit => "fit",
            PsdStage::Structure => "structure",
            PsdStage::Positivity => "positivity",
            PsdStage::Psd => "psd",
            PsdStage::Residual => "residual",
        };
        f.write_str(s)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
