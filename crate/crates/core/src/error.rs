use thiserror::Error;

use crate::arcs::ArcKind;
use crate::gauss_newton::ConvergenceReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("first-order condition violated at x = {x:?}: |dg(x)·f1(x)| = {denominator:e}")]
    FirstOrderViolation { x: Vec<f64>, denominator: f64 },

    #[error("singular control undefined at x = {x:?}: p·[[f1,f0],f1](x) = {denominator:e}")]
    SingularDenominator { x: Vec<f64>, denominator: f64 },

    #[error("state became non-finite at step {step}")]
    NonFiniteState { step: usize },

    #[error("propagation failed on arc {arc}")]
    Propagation {
        arc: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("shooting residual is not finite")]
    NonFiniteResidual,

    #[error("jacobian column {column} could not be evaluated")]
    JacobianColumn {
        column: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid arc structure: {0}")]
    InvalidStructure(String),

    #[error("structure detection failed: {reason} (raw classification {raw:?})")]
    StructureDetection { reason: String, raw: Vec<ArcKind> },

    #[error("Gauss-Newton did not converge in {} iterations (best |S|inf = {:e})", report.iterations.len().saturating_sub(1), report.final_residual)]
    MaxIterExceeded {
        best: Vec<f64>,
        report: Box<ConvergenceReport>,
    },

    #[error("jacobian is rank deficient at the final iterate: rank {} < {} unknowns", report.jacobian_rank, best.len())]
    RankDeficientJacobian {
        best: Vec<f64>,
        report: Box<ConvergenceReport>,
    },

    #[error("quadratic form assembly failed: {0}")]
    Assembly(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
