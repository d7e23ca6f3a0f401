//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by model construction, evaluation and fitting.
#[derive(Debug, Error)]
pub enum Error {
    /// Parameter values violate the domain of a model component.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// A v-transform generator is not a strictly increasing cdf on [0,1].
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    /// A volatility proxy profile is not strictly increasing from zero.
    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    /// The fulcrum has no dual point.
    #[error("no dual point exists at the fulcrum")]
    NoDual,

    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data is malformed or non-finite.
    #[error("data error: {0}")]
    Data(String),

    /// A numerical routine failed to converge or produced non-finite output.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Input is degenerate (e.g. constant residuals).
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
