use thiserror::Error;

use crate::expr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{context}: variable `{name}` is not allowed here")]
    ForeignVariable { context: &'static str, name: String },

    #[error("matrix is not skew-symmetric at ({i},{j}): b[{i}][{j}] = {bij}, b[{j}][{i}] = {bji}")]
    NotSkew {
        i: usize,
        j: usize,
        bij: f64,
        bji: f64,
    },

    #[error("integration failed after t = {last_good_t}: {reason}")]
    IntegrationFailure { last_good_t: f64, reason: String },

    #[error("no delta above {floor:e} satisfies epsilon = {epsilon:e}")]
    NoWitness { epsilon: f64, floor: f64 },

    #[error("ball-filter deviations stopped shrinking at radius {radius:e} ({previous:e} -> {current:e})")]
    NonConvergence {
        radius: f64,
        previous: f64,
        current: f64,
    },

    #[error("point {point:?} lies outside the element's region")]
    OutOfRegion { point: Vec<f64> },

    #[error(
        "general function is not differentiable: element {element} fails at {point:?} ({source})"
    )]
    Nondifferentiable {
        element: usize,
        point: Vec<f64>,
        source: EvalError,
    },

    #[error("filters live on different carriers")]
    CarrierMismatch,

    #[error("map for block {block} is not total: no image for `{label}`")]
    MapNotTotal { block: usize, label: String },

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
