//! Hard-label oracles: every query returns only a class label and bumps a
//! shared query ledger by exactly one.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::ImageTensor;

mod freq_energy;
mod halfspace;
pub mod http;
pub mod mock;

pub use freq_energy::FreqEnergyOracle;
pub use halfspace::HalfspaceOracle;
pub use http::HttpOracle;
pub use mock::{MockBehavior, MockServer};

/// Binary detector output. `0 = real`, `1 = fake` on every wire format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn opposite(self) -> Self {
        match self {
            Label::Real => Label::Fake,
            Label::Fake => Label::Real,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Label::Real),
            1 => Ok(Label::Fake),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.as_u8()
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Real => "real",
            Label::Fake => "fake",
        })
    }
}

/// Failure to obtain a verdict. Never conflated with a label.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error("transport failure: {0}")]
    Transport(String),

    #[error("oracle returned HTTP status {0}")]
    Status(u16),

    #[error("malformed oracle response: {0}")]
    Malformed(String),

    #[error("could not encode query: {0}")]
    Encode(String),
}

/// Count of verdicts delivered by one oracle instance, shared by every caller.
#[derive(Debug, Default)]
pub struct QueryLedger {
    total: AtomicU64,
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self) {
        self.total.fetch_add(1, Ordering::SeqCst);
    }

    pub fn total(&self) -> u64 {
        self.total.load(Ordering::SeqCst)
    }
}

/// A decision-only detector. Implementations must record exactly one ledger
/// entry per delivered verdict and none on error.
pub trait Oracle: Send + Sync {
    fn query(&self, img: &ImageTensor) -> Result<Label, OracleError>;

    fn ledger(&self) -> &QueryLedger;

    fn total_queries(&self) -> u64 {
        self.ledger().total()
    }
}

impl<O: Oracle + ?Sized> Oracle for &O {
    fn query(&self, img: &ImageTensor) -> Result<Label, OracleError> {
        (**self).query(img)
    }

    fn ledger(&self) -> &QueryLedger {
        (**self).ledger()
    }
}

impl<O: Oracle + ?Sized> Oracle for std::sync::Arc<O> {
    fn query(&self, img: &ImageTensor) -> Result<Label, OracleError> {
        (**self).query(img)
    }

    fn ledger(&self) -> &QueryLedger {
        (**self).ledger()
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn query(&self, img: &ImageTensor) -> Result<Label, OracleError> {
        (**self).query(img)
    }

    fn ledger(&self) -> &QueryLedger {
        (**self).ledger()
    }
}

/// Clamp and 8-bit quantize before querying, so that a local oracle and a
/// remote one fed the PNG of the same image see identical pixels.
pub fn query_quantized<O: Oracle + ?Sized>(
    oracle: &O,
    img: &ImageTensor,
) -> Result<Label, OracleError> {
    oracle.query(&img.quantized())
}
