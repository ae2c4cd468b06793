use thiserror::Error;

/// Errors raised by model construction, kernels, solvers and pipelines.
#[derive(Debug, Error)]
pub enum Error {
    /// A likelihood row (or mixture density) is identically zero.
    #[error("observation {row} has zero mixture density under every supported atom")]
    DegenerateRow { row: usize },

    #[error("atom outside the {kernel} parameter domain: {reason}")]
    Domain { kernel: &'static str, reason: String },

    #[error("kernel {kernel} cannot evaluate a {found} observation")]
    KernelMismatch { kernel: &'static str, found: &'static str },

    #[error("series has {len} usable points, need at least {min}")]
    InsufficientSeries { len: usize, min: usize },

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("observation {index}: {source}")]
    AtObservation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("replication {rep}: {source}")]
    Replication {
        rep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid atom: {0}")]
    InvalidAtom(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid mixing weights: {0}")]
    InvalidWeights(String),

    #[error("no default grid size for d = {dim}; pass explicit counts")]
    UnsupportedDefault { dim: usize },

    #[error("size mismatch: expected {expected}, found {found}")]
    Incompatible { expected: usize, found: usize },

    #[error("non-finite value at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("objective increased at EM iteration {iteration}: {previous} -> {current}")]
    MonotonicityViolated {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("{0}")]
    Unsupported(String),

    #[error("cohort {0} is empty after filtering")]
    EmptyCohort(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at(index: usize, source: Error) -> Self {
        Error::AtObservation {
            index,
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
