use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation (negative energy, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller violated an interface contract (mismatched lengths and the like).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A model or parameter set failed validation.
    #[error("invalid parameters: {0}")]
    Validation(String),

    /// The integrator produced a non-finite field.
    #[error("integration failure at zeta = {zeta}: {message}")]
    Integration { zeta: f64, message: String },

    /// Ensemble statistics could not be formed.
    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Validation(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 2,
            Error::Domain(_) | Error::Contract(_) | Error::Integration { .. } | Error::Analysis(_) => 3,
            Error::Fit(_) => 4,
        }
    }
}
