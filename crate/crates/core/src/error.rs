use thiserror::Error;

use crate::flow::FlowTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown model `{0}` (expected product-flat-torus, warped-torus or conformal-torus)")]
    UnknownModel(String),

    #[error("unknown target `{0}` (expected flat-torus, sphere-stereo or hyperbolic-disk)")]
    UnknownTarget(String),

    #[error("resolution {got} is below the minimum of {min} nodes per axis")]
    ResolutionTooSmall { got: usize, min: usize },

    #[error("parameter `{name}` = {value} is out of range: {reason}")]
    ParameterOutOfRange {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("unsupported stencil order {0} (expected 2, 4 or 6)")]
    StencilOrder(usize),

    #[error("map value at node {node} leaves the target chart domain (|u| = {norm:.6})")]
    ChartDomain { node: usize, norm: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("bandlimit {bandlimit} must be below resolution/2 = {limit}")]
    BandlimitTooHigh { bandlimit: usize, limit: usize },

    #[error("step schedule needs at least 2 steps, got {0}")]
    StepSchedule(usize),

    #[error("operator dimension {n} exceeds the dense eigensolver cap {cap}; enable the iterative solver")]
    TooLarge { n: usize, cap: usize },

    #[error("iterative eigensolver did not converge: {0}")]
    NonConvergence(String),

    #[error("bundle-valued forms of degree {0} are not supported")]
    Degree(usize),

    #[error("model failed validation: {0}")]
    InvalidModel(String),

    #[error("flow aborted at step {step}: {reason}")]
    FlowAborted {
        step: usize,
        reason: String,
        trace: Box<FlowTrace>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the error is a numerical abort (chart exit, blow-up, solver failure)
    /// rather than a usage problem.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ChartDomain { .. } | Error::FlowAborted { .. } | Error::NonConvergence(_)
        )
    }
}
