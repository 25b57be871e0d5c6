use thiserror::Error;

use crate::ambient::AmbientError;
use crate::exprlang::{EvalError, ParseError};

/// A fiber sample that left the regular set, with its margins.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaViolation {
    pub fiber_param: Vec<f64>,
    pub fiber_value: Vec<f64>,
    pub margin: f64,
    pub min_singular_value: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ambient(#[from] AmbientError),
    #[error("not an immersion at {point:?}: {reason}")]
    NotImmersion { point: Vec<f64>, reason: String },
    #[error("first fundamental form is not positive definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },
    #[error("vector is not normal: tangential residual {residual:.3e}")]
    NotNormal { residual: f64 },
    #[error("shape operators do not commute (defect {defect:.3e}); normal bundle is not flat")]
    NonFlatNormalBundle { defect: f64 },
    #[error("principal normals separated by only {separation:.3e}; clustering is ambiguous")]
    ClusteringAmbiguous { separation: f64 },
    #[error("{what}: defect {defect:.3e} exceeds tolerance {tol:.1e}")]
    Hypothesis { what: String, defect: f64, tol: f64 },
    #[error("parallel transport is path dependent: defect {defect:.3e} in cell {cell:?} exceeds {tol:.1e}")]
    Flatness { cell: Vec<usize>, defect: f64, tol: f64 },
    #[error("fiber leaves the regular set at {} sample(s)", samples.len())]
    OutsideOmega { samples: Vec<OmegaViolation> },
    #[error("rank of the normal span is unstable; singular values {singular_values:?}")]
    RankInstability { singular_values: Vec<f64> },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
