use thiserror::Error;

use crate::algebra::AlgebraError;
use crate::variates::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),

    #[error("parameter vector has dimension {found}, expected {expected}")]
    ThetaDimension { expected: usize, found: usize },

    #[error("parameter {index} = {value} lies outside [{lower}, {upper}]")]
    ThetaOutOfBox {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("model is not certified for unbiased IPA: {}", describe(.0))]
    Uncertified(Vec<Violation>),

    #[error("measure '{measure}' is not defined for {kind} networks")]
    UnsupportedMeasure { measure: String, kind: &'static str },

    #[error("node {node} cannot complete {completion} services under the routing table")]
    NoRepresentation { node: usize, completion: usize },

    #[error("target completion did not occur: {0}")]
    Starved(String),

    #[error("{starved} of {total} replications starved, above the allowed rate {threshold}")]
    StarvationRate {
        starved: usize,
        total: usize,
        threshold: f64,
    },

    #[error("non-finite gradient at iteration {0}")]
    NonFiniteGradient(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn describe(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// True for errors caused by invalid input rather than by a run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ThetaDimension { .. }
                | Error::ThetaOutOfBox { .. }
                | Error::InvalidNetwork(_)
                | Error::Config { .. }
                | Error::Uncertified(_)
                | Error::UnsupportedMeasure { .. }
                | Error::InvalidArgument(_)
        )
    }
}
