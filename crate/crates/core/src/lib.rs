//! Channel-side machinery for NN-based FDD downlink extrapolation.
//!
//! The crate covers the physical half of the pipeline:
//!
//! - [`channel`]: clustered multipath channels, array responses, delay bases
//!   and the time-domain to OFDM transform, plus DL reconstruction from
//!   extracted geometry and predicted gains.
//! - [`scenario`]: a seeded parametric generator of paired UL/DL sample sets
//!   with shared geometry, mobility and cluster churn.
//! - [`link`]: pilot transmission over AWGN and least-squares estimation for
//!   both link directions.
//! - [`extraction`]: greedy AoD/gain and delay/coefficient extraction with
//!   nullspace projection, and UL-anchored DL label fitting.
//! - [`metrics`]: correlation factor, spectral efficiency and effective rate.
//! - [`record`]: the JSON channel-record format.

pub mod channel;
pub mod extraction;
pub mod link;
mod linalg;
pub mod metrics;
pub mod record;
pub mod scenario;

pub use num_complex::Complex64;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("record format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
