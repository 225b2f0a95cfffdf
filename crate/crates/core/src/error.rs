use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// No sample meets both the quality target and the compute budget.
    #[error("no sample reaches quality {quality_target} within a compute budget of {compute_budget} FLOPs")]
    Infeasible {
        quality_target: f64,
        compute_budget: f64,
    },

    #[error("capacity must be nonnegative, got {0}")]
    NegativeCapacity(f64),

    #[error("empirical hit-rate models have no analytic derivative")]
    NonDifferentiableModel,

    #[error("cannot fit hit-rate curve: {0}")]
    DegeneratePoints(String),

    #[error("embedding dimension mismatch{}: expected {expected}, found {found}", fmt_line(*line))]
    DimensionMismatch {
        expected: usize,
        found: usize,
        line: Option<usize>,
    },

    #[error("entry of {size} bytes exceeds cache capacity of {capacity} bytes")]
    EntryTooLarge { size: u64, capacity: u64 },

    #[error("zero-norm embedding{}", fmt_line(*line))]
    ZeroNormEmbedding { line: Option<usize> },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_line(line: Option<usize>) -> String {
    match line {
        Some(l) => format!(" at line {l}"),
        None => String::new(),
    }
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Infeasible { .. } => "Infeasible",
            Error::NegativeCapacity(_) => "NegativeCapacity",
            Error::NonDifferentiableModel => "NonDifferentiableModel",
            Error::DegeneratePoints(_) => "DegeneratePoints",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::EntryTooLarge { .. } => "EntryTooLarge",
            Error::ZeroNormEmbedding { .. } => "ZeroNormEmbedding",
            Error::Parse { .. } => "ParseError",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Io(_) => "IoError",
        }
    }
}
