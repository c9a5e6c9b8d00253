use thiserror::Error;

/// Errors raised by the numerical pipelines.
///
/// `Config` and `Domain` are caller mistakes (bad inputs); the rest signal a
/// numerical failure. The CLI maps the two groups onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("spectrum error: {0}")]
    Spectrum(String),
    #[error("solve error: {0}")]
    Solve(String),
    #[error("branch error: {0}")]
    Branch(String),
    #[error("spectral error: {0}")]
    Spectral(String),
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("convergence error: {message}")]
    Convergence {
        message: String,
        diagnostics: Vec<(f64, f64)>,
    },
    #[error("integration error at t = {t}: {message}")]
    Integration { t: f64, message: String },
    #[error("frame error: {0}")]
    Frame(String),
    #[error("renormalization did not contract: {message}")]
    Renorm { message: String, iterates: Vec<f64> },
    #[error("fit error: {0}")]
    Fit(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by invalid input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Domain(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
