//! Decision-based black-box attack engine for binary real-vs-generated image
//! detectors.
//!
//! The attack works in the DCT domain: it starts from an adversarial image
//! (an averaged surrogate-attack "soup" or a genuine opposite-class sample),
//! then repeatedly shrinks the distance to the benign image with
//! law-of-sines triangle steps inside random 2-D planes drawn from a chosen
//! frequency band, spending one oracle query per probe.

pub mod error;
pub mod image;
pub mod metrics;
pub mod oracles;
pub mod soup;
pub mod spectral;
pub mod surrogate;
pub mod triangle;

pub use error::{Error, Result};
pub use image::{decode_png, encode_png, ImageTensor, Shape, Spectrum};
pub use oracles::{Label, Oracle, OracleError};
pub use spectral::{build_mask, dct2, idct2, FrequencyMask};
pub use triangle::{run_attack, AttackConfig, AttackResult, AttackTrace};
