//! Error type shared by every module.

use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("matrix is not primitive (irreducible: {irreducible}, period: {period})")]
    NotPrimitive { irreducible: bool, period: usize },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("eigendata inconsistent with matrix: row sum deviation {0:e}")]
    InconsistentEigendata(f64),

    #[error("input distribution is not stationary (residual {0:e})")]
    NotStationaryInput(f64),

    #[error("bridge law has zero normalization")]
    DegenerateLaw,

    #[error("constraint set is empty: {0}")]
    Infeasible(String),

    #[error("parameters outside the representation region: {0}")]
    RegionViolation(String),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("step law support violation: {0}")]
    SupportViolation(String),

    #[error("truncation failed: {0}")]
    TruncationFailure(String),

    #[error("sandwich bound violated at outcome {witness}: ratio {ratio:e} outside [{lower:e}, {upper:e}]")]
    BoundViolation {
        witness: usize,
        ratio: f64,
        lower: f64,
        upper: f64,
    },

    #[error("no outcome of size {n} falls inside the event")]
    EmptyEvent { n: usize },
}

impl Error {
    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_)
                | Error::NotPrimitive { .. }
                | Error::RegionViolation(_)
                | Error::SizeLimit(_)
                | Error::SupportViolation(_)
                | Error::NotStationaryInput(_)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Invalid(_) => "Invalid",
            Error::NotPrimitive { .. } => "NotPrimitive",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::InconsistentEigendata(_) => "InconsistentEigendata",
            Error::NotStationaryInput(_) => "NotStationaryInput",
            Error::DegenerateLaw => "DegenerateLaw",
            Error::Infeasible(_) => "Infeasible",
            Error::RegionViolation(_) => "RegionViolation",
            Error::SizeLimit(_) => "SizeLimit",
            Error::SupportViolation(_) => "SupportViolation",
            Error::TruncationFailure(_) => "TruncationFailure",
            Error::BoundViolation { .. } => "BoundViolation",
            Error::EmptyEvent { .. } => "EmptyEvent",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
