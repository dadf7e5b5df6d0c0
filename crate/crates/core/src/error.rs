use thiserror::Error;

/// Errors raised by estimators, decompositions and simulation drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid penalty specification: {0}")]
    InvalidSpec(String),
    #[error("negative input {0}: singular values must be nonnegative")]
    NegativeInput(f64),
    #[error("iteration did not converge ({0})")]
    Nonconvergence(String),
    #[error("{sigma} lies at a kink of the thresholding function (kink at {kink})")]
    AtKink { sigma: f64, kink: f64 },
    #[error("input contains non-finite entries")]
    NonFinite,
    #[error("spectral function is undefined at {0}")]
    UndefinedAt(f64),
    #[error("rank {k} out of range 0..={max}")]
    RankOutOfRange { k: usize, max: usize },
    #[error("could not complete an orthonormal basis")]
    ComplementFailure,
    #[error("function is not directionally differentiable at {0}")]
    NotDirectionallyDifferentiable(f64),
    #[error("matrix is not symmetric")]
    Asymmetric,
    #[error("function must be differentiable at repeated singular value {0}")]
    RequiresFullDifferentiability(f64),
    #[error("spectral function must vanish at zero (f(0) = {0})")]
    NonzeroAtZero(f64),
    #[error("Stein's lemma does not apply: {0}")]
    NotApplicable(String),
    #[error("singular values must be distinct and positive: {0}")]
    RepeatedOrZero(String),
    #[error("a density provider is required for discontinuous thresholding")]
    MissingDensity,
    #[error("singular values tie at the truncation cut (rank {0})")]
    TiedAtCut(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("eigenvalues must be sorted in nonincreasing order")]
    UnorderedInput,
    #[error("eigenvalues must be positive")]
    NonpositiveEntry,
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("empty sample")]
    EmptySample,
    #[error("at least {min} replicates required, got {got}")]
    TooFewReps { min: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("at theta = {theta}: {source}")]
    AtTheta {
        theta: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by malformed input data or arguments, as opposed to
    /// failed estimator preconditions.
    pub fn is_input_error(&self) -> bool {
        if let Error::AtTheta { source, .. } = self {
            return source.is_input_error();
        }
        matches!(
            self,
            Error::InvalidSpec(_)
                | Error::NonFinite
                | Error::ShapeMismatch(_)
                | Error::InvalidArgument(_)
                | Error::Parse(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::EmptySample
                | Error::RankOutOfRange { .. }
                | Error::TooFewReps { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
