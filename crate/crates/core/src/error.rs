use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("blow-up passed at t = {t}: {detail}")]
    BlowUpPassed { t: f64, detail: String },
    #[error("numerical instability at t = {t}: {detail}")]
    Instability { t: f64, detail: String },
    #[error("not a neckpinch: {0}")]
    NotANeckpinch(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("window exceeded: {0}")]
    WindowExceeded(String),
    #[error("quadrature truncation: {0}")]
    Truncation(String),
    #[error("mode {m} out of range (max {max})")]
    ModeRange { m: usize, max: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parameter constraint: {0}")]
    Parameter(String),
    #[error("extraction error: {0}")]
    Extraction(String),
    #[error("unknown series `{0}`")]
    UnknownSeries(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
