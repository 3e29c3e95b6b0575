use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Input contained NaN/Inf or otherwise violated a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Input was structurally valid but degenerate (e.g. an all-zero matrix).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A scalar argument was outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The frequency grid does not contain the requested structure.
    #[error("grid coverage error: {0}")]
    Coverage(String),

    /// Scan/bin geometry is inconsistent.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// A coincidence query referenced an unknown channel or was malformed.
    #[error("query error: {0}")]
    Query(String),

    /// A configuration file or parameter block failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// Too little data to run the requested analysis.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A nonlinear fit failed to converge.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// The transform lattice cannot resolve the spectral feature.
    #[error("frequency resolution error: {0}")]
    FrequencyResolution(String),

    /// Calibration fit diverged.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// Operating regime violates the low-gain assumption.
    #[error("multi-pair regime error: {0}")]
    MultiPairRegime(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
