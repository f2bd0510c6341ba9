use thiserror::Error;

use crate::sync::ClockEstimate;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("clock not found: {0}")]
    ClockNotFound(String),

    #[error("clock refinement did not converge after {iterations} iterations")]
    Refinement {
        iterations: usize,
        last: Box<ClockEstimate>,
    },

    #[error("slot demarcation failed: {0}")]
    Demarcation(String),

    #[error("identification failed: best SNR {best_snr:.2} below threshold {threshold:.2}")]
    IdentificationFailed { best_snr: f64, threshold: f64 },

    #[error(
        "ambiguous identification: top peaks {first} and {second} are within the ambiguity margin"
    )]
    AmbiguousIdentification { first: i64, second: i64 },

    #[error("measurement error: {0}")]
    Measurement(String),

    #[error("slot {0} has no identified transmitter; refusing to sift")]
    UnidentifiedSlot(usize),

    #[error("malformed record: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

pub(crate) fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(param(format!("{name} = {p} is not a probability")))
    }
}
