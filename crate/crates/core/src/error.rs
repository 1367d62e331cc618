use thiserror::Error;

/// Errors raised by the numerical library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("duplicate points {0} and {1} (zero distance)")]
    DuplicatePoint(usize, usize),

    #[error("grid of side {n} in dimension {d} overflows the node index type")]
    GridTooLarge { n: usize, d: u32 },

    #[error("graph is not a wrap-around grid: {0}")]
    NotAGrid(String),

    #[error("node {0} has zero degree")]
    IsolatedNode(usize),

    #[error("node index {index} out of range for {len} nodes")]
    NodeOutOfRange { index: usize, len: usize },

    #[error("deconvolution undefined: alpha_0 = {0} must be positive")]
    DeconvolutionUndefined(f64),

    #[error("modulation function has a negative value f({index}) = {value}")]
    NegativeModulation { index: usize, value: f64 },

    #[error("walker stuck at node {0} with no neighbours")]
    WalkerStuck(usize),

    #[error("power series did not converge after {terms} terms (last term norm {last_term_norm:e})")]
    SeriesDivergence { terms: usize, last_term_norm: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("eigendecomposition failed to converge")]
    EigenNoConvergence,

    #[error("input vector is not unit length (norm {0})")]
    NotUnitVector(f64),

    #[error("parameter grid yields only {0} unique points")]
    Resolution(usize),

    #[error("mesh parse error at line {line}: {message}")]
    MeshParse { line: usize, message: String },

    #[error("face {face} has {arity} vertices; triangulation disabled")]
    NonTriangularFace { face: usize, arity: usize },

    #[error("training dataset is empty after filtering")]
    DatasetEmpty,

    #[error("non-finite value in network evaluation")]
    NonFinite,

    #[error("training diverged (non-finite loss) at epoch {0}")]
    Divergence(usize),

    #[error("missing geodesic distance for pair ({0}, {1})")]
    MissingGeodesic(usize, usize),

    #[error("sampling density is zero at drawn anchor {0}")]
    ZeroDensity(usize),

    #[error("alignment undefined: estimate has zero Frobenius norm")]
    AlignmentUndefined,

    #[error("reference vector has zero norm")]
    ZeroTruthNorm,

    #[error("R^2 undefined: ground truth has zero variance")]
    ZeroVariance,

    #[error("mask leaves no observed nodes")]
    EmptyObservation,

    #[error("node {0} has zero kernel mass on observed nodes")]
    UnreachableNode(usize),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
