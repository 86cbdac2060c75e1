use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the analysis and simulation routines.
///
/// Variants split into two families: problems with the input data or
/// parameters (exit code 1 in the CLI) and numerical failures (exit code 2).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("covariate dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("single-source dataset: P(R=1) = {0}")]
    SingleSource(f64),

    #[error("strategy 1 requires outcomes (subject {0} has none)")]
    MissingOutcome(String),

    #[error("masked treatment arm for subject {0}")]
    MaskedArm(String),

    #[error("historical pool exhausted: requested {requested}, available {available} (shortfall {shortfall})")]
    PoolExhausted {
        requested: usize,
        available: usize,
        shortfall: usize,
    },

    #[error("singular design")]
    SingularDesign,

    #[error("insufficient effective weight: sum of weights {0} <= 1")]
    InsufficientWeight(f64),

    #[error("degenerate variance")]
    DegenerateVariance,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// Returns true for failures of the numerical routines rather than of
    /// the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularDesign | Error::InsufficientWeight(_) | Error::DegenerateVariance | Error::Numerical(_)
        )
    }

    /// Short machine-readable code used in CLI diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::InvalidData(_) => "invalid_data",
            Error::Parse { .. } => "parse",
            Error::DimensionMismatch { .. } => "dimension",
            Error::SingleSource(_) => "single_source",
            Error::MissingOutcome(_) => "missing_outcome",
            Error::MaskedArm(_) => "masked_arm",
            Error::PoolExhausted { .. } => "pool_exhausted",
            Error::SingularDesign => "singular_design",
            Error::InsufficientWeight(_) => "insufficient_weight",
            Error::DegenerateVariance => "degenerate_variance",
            Error::Numerical(_) => "numerical",
            Error::Io(_) => "io",
            Error::Config(_) => "config",
        }
    }
}
