use thiserror::Error;

/// Errors produced by the library.
///
/// Input/configuration/ingestion problems map to CLI exit code 2,
/// numerical and degenerate failures to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("ingestion error: {0}")]
    Ingest(String),

    /// The ridge parameter is too small relative to the kernel matrix,
    /// so the leave-one-out denominator vanishes.
    #[error("degenerate regularization: {0}")]
    DegenerateRegularization(String),

    /// Zero variance, non-positive moments, and similar numerical dead ends.
    #[error("degenerate statistic: {0}")]
    Degenerate(String),

    /// Every (kernel, lambda) candidate failed during model selection.
    #[error("fit error: no usable candidate\n{0}")]
    Fit(String),

    #[error("experiment error: {0}")]
    Experiment(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::Config(_) | Error::Ingest(_) | Error::Io(_) => 2,
            Error::DegenerateRegularization(_)
            | Error::Degenerate(_)
            | Error::Fit(_)
            | Error::Experiment(_)
            | Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
