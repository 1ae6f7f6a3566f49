use thiserror::Error;

/// Result type used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the forecasting, weighting and allocation routines.
///
/// Positions in messages are 1-based (period `k`, matrix row/column) even
/// though storage is 0-based.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("series too short: need at least {required} points, got {actual}")]
    SeriesTooShort { required: usize, actual: usize },

    #[error("non-positive value {value} at period k={k}")]
    NonPositiveData { k: usize, value: f64 },

    #[error("least-squares system is singular (det(BᵀB) = {det:e})")]
    SingularSystem { det: f64 },

    #[error("whitening equation denominator vanished at k={k}")]
    NumericOverflow { k: usize },

    #[error("model does not saturate (a = {a}, b = {b})")]
    NoSaturation { a: f64, b: f64 },

    #[error("logistic fit diverged after {iterations} iterations")]
    DivergedFit { iterations: usize },

    #[error("missing judgment for pair ({i}, {j})")]
    MissingJudgment { i: usize, j: usize },

    #[error("judgment {value} at ({i}, {j}) is outside the [1/9, 9] scale")]
    OutOfScale { i: usize, j: usize, value: f64 },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("power iteration did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("criterion '{criterion}' has no spread (max == min)")]
    DegenerateCriterion { criterion: String },

    #[error("label mismatch: {0}")]
    LabelMismatch(String),

    #[error("no entity has a positive score")]
    AllNonPositive,

    #[error("shares sum to {sum}, expected 1")]
    SharesDontSum { sum: f64 },

    #[error("period {period}: {source}")]
    Simulation {
        period: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),

    #[error("{spec}: {source}")]
    Perturbation {
        spec: String,
        #[source]
        source: Box<Error>,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: non-positive value {value}")]
    NonPositiveValue { line: u64, value: f64 },

    #[error("matrix is not square: {rows} rows, {cols} columns")]
    NotSquare { rows: usize, cols: usize },

    #[error("entries ({i}, {j}) = {upper} and ({j}, {i}) = {lower} are not reciprocal")]
    ReciprocityViolation {
        i: usize,
        j: usize,
        upper: f64,
        lower: f64,
    },

    #[error("missing cell for entity '{entity}', criterion '{criterion}'")]
    MissingCell { entity: String, criterion: String },

    #[error("unknown criterion '{0}'")]
    UnknownCriterion(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    /// Stable machine-readable error code, used in CLI and HTTP payloads.
    pub fn code(&self) -> &'static str {
        match self {
            Error::SeriesTooShort { .. } => "SeriesTooShort",
            Error::NonPositiveData { .. } => "NonPositiveData",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::NumericOverflow { .. } => "NumericOverflow",
            Error::NoSaturation { .. } => "NoSaturation",
            Error::DivergedFit { .. } => "DivergedFit",
            Error::MissingJudgment { .. } => "MissingJudgment",
            Error::OutOfScale { .. } => "OutOfScale",
            Error::InvalidMatrix(_) => "InvalidMatrix",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::DegenerateCriterion { .. } => "DegenerateCriterion",
            Error::LabelMismatch(_) => "LabelMismatch",
            Error::AllNonPositive => "AllNonPositive",
            Error::SharesDontSum { .. } => "SharesDontSum",
            Error::Simulation { source, .. } => source.code(),
            Error::InvalidPerturbation(_) => "InvalidPerturbation",
            Error::Perturbation { source, .. } => source.code(),
            Error::Parse { .. } => "ParseError",
            Error::NonPositiveValue { .. } => "NonPositiveValue",
            Error::NotSquare { .. } => "NotSquare",
            Error::ReciprocityViolation { .. } => "ReciprocityViolation",
            Error::MissingCell { .. } => "MissingCell",
            Error::UnknownCriterion(_) => "UnknownCriterion",
            Error::Config(_) => "ConfigError",
            Error::Io { .. } => "IoError",
        }
    }

    /// Innermost error, unwrapping simulation/perturbation context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Simulation { source, .. } | Error::Perturbation { source, .. } => source.root(),
            other => other,
        }
    }
}
