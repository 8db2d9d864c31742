use thiserror::Error;

/// Errors raised by the boundary solvers and their building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("argument outside the domain of {what}: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("singular volatility: 1 - rho*lambda*p/xi = {denominator:e} at p = {p}, xi = {xi}")]
    SingularVolatility { p: f64, xi: f64, denominator: f64 },

    #[error("volatility evaluation failed at node {node}: {source}")]
    AtNode {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("Psi ODE integration failed at x = {x}: {reason}")]
    Integration { x: f64, reason: String },

    #[error("zero pivot in tridiagonal elimination at row {row}")]
    SingularSystem { row: usize },

    #[error(
        "micro-iterations did not converge after {iterations} steps (last residual {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("time level {level} (tau = {tau}) failed: {source}")]
    Level {
        level: usize,
        tau: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value while evaluating {what} at tau = {tau}")]
    NonFinite { what: &'static str, tau: f64 },

    #[error("curves do not share a tau range: [{a_start}, {a_end}] vs [{b_start}, {b_end}]")]
    DisjointCurves {
        a_start: f64,
        a_end: f64,
        b_start: f64,
        b_end: f64,
    },

    #[error("price query S = {s} lies above the exercise boundary rho = {rho}")]
    OutOfRegion { s: f64, rho: f64 },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_node(self, node: usize) -> Self {
        Error::AtNode {
            node,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
