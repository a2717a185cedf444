use thiserror::Error;

/// Every failure the library can report.
///
/// Variants map onto a small set of categories (see [`ErrorCategory`]) that
/// the command-line driver turns into exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid sampling grid: {0}")]
    InvalidGrid(String),

    #[error("invalid time basis: {0}")]
    InvalidTimeBasis(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("outcome row for subject {subject} at t={t} has no matching curve row")]
    MissingCurve { subject: String, t: f64 },

    #[error("curve row for subject {subject} at t={t} has no matching outcome row")]
    MissingOutcome { subject: String, t: f64 },

    #[error("duplicate record for subject {subject} at t={t}")]
    DuplicateRecord { subject: String, t: f64 },

    #[error("curve has {found} samples but the grid has p={expected}{}", context_suffix(.context))]
    GridMismatch {
        expected: usize,
        found: usize,
        context: String,
    },

    #[error("non-finite value in {0}")]
    NonFiniteValue(String),

    #[error("time basis evaluation matrix has rank {rank} < {required} on the observed times")]
    RankDeficientTimeBasis { rank: usize, required: usize },

    #[error("basis matrix Q has no numerically nonzero column")]
    ZeroBasis,

    #[error("decomposition weights must be positive (phi_a={phi_a}, phi_b={phi_b})")]
    NonPositivePhi { phi_a: f64, phi_b: f64 },

    #[error("second-difference penalty needs p >= 3, got {0}")]
    GridTooSmall(usize),

    #[error("penalty block {0} is rank deficient; the mixed-model route needs invertible blocks")]
    SingularBlockForMixedModel(usize),

    #[error("stacked pair has rank {rank} < {cols}")]
    StackedRankDeficient { rank: usize, cols: usize },

    #[error("shape assumption violated: {0}")]
    ShapeAssumptionViolated(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("every selection candidate failed")]
    AllCandidatesFailed,

    #[error("Q basis file not found: {0}")]
    QBasisNotFound(String),
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

/// Coarse error classes used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Input,
    Numerical,
    Shape,
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "Io",
            Error::Parse(_) => "Parse",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::InvalidTimeBasis(_) => "InvalidTimeBasis",
            Error::InvalidInput(_) => "InvalidInput",
            Error::MissingCurve { .. } => "MissingCurve",
            Error::MissingOutcome { .. } => "MissingOutcome",
            Error::DuplicateRecord { .. } => "DuplicateRecord",
            Error::GridMismatch { .. } => "GridMismatch",
            Error::NonFiniteValue(_) => "NonFiniteValue",
            Error::RankDeficientTimeBasis { .. } => "RankDeficientTimeBasis",
            Error::ZeroBasis => "ZeroBasis",
            Error::NonPositivePhi { .. } => "NonPositivePhi",
            Error::GridTooSmall(_) => "GridTooSmall",
            Error::SingularBlockForMixedModel(_) => "SingularBlockForMixedModel",
            Error::StackedRankDeficient { .. } => "StackedRankDeficient",
            Error::ShapeAssumptionViolated(_) => "ShapeAssumptionViolated",
            Error::NotPositiveDefinite => "NotPositiveDefinite",
            Error::SingularSystem(_) => "SingularSystem",
            Error::AllCandidatesFailed => "AllCandidatesFailed",
            Error::QBasisNotFound(_) => "QBasisNotFound",
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::ShapeAssumptionViolated(_) => ErrorCategory::Shape,
            Error::RankDeficientTimeBasis { .. }
            | Error::StackedRankDeficient { .. }
            | Error::NotPositiveDefinite
            | Error::SingularSystem(_)
            | Error::SingularBlockForMixedModel(_)
            | Error::AllCandidatesFailed => ErrorCategory::Numerical,
            _ => ErrorCategory::Input,
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
