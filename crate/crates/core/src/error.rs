use crate::expr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("evaluation failed at {point:?}: {source}")]
    Eval { point: Vec<f64>, source: EvalError },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid chart domain: {0}")]
    Domain(String),
    #[error("metric is not regular at {point:?}: {reason}")]
    SingularMetric { point: Vec<f64>, reason: String },
    #[error("metric is not positive definite at {point:?} (smallest eigenvalue {min_eigenvalue})")]
    NotPositiveDefinite { point: Vec<f64>, min_eigenvalue: f64 },
    #[error("metric rank {found} at {point:?} differs from declared rank {declared}")]
    RankMismatch {
        point: Vec<f64>,
        found: usize,
        declared: usize,
    },
    #[error("gauge transformation is not invertible at {point:?} (|det| = {det})")]
    NonInvertible { point: Vec<f64>, det: f64 },
    #[error("path vertex {index} lies outside the chart domain")]
    PathOutsideDomain { index: usize },
    #[error("path needs at least 8 steps per segment, got {0}")]
    TooFewSteps(usize),
    #[error("path needs at least two distinct consecutive vertices")]
    DegeneratePath,
    #[error("loop is not closed")]
    OpenLoop,
    #[error("grid too coarse: {0} nodes per axis, need at least 3")]
    GridTooCoarse(usize),
    #[error("base point {0:?} is not a grid node")]
    NotAGridNode(Vec<f64>),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn eval(point: &[f64], source: EvalError) -> Self {
        Error::Eval {
            point: point.to_vec(),
            source,
        }
    }
}
