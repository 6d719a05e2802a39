use super::{Label, Oracle, OracleError, QueryLedger};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::spectral::{dct2, FrequencyMask};

const ZERO_ENERGY_PER_COEFF: f64 = 1e-20;

/// Detector keyed on spectral energy: an image whose AC energy is sufficiently
/// concentrated in the high band is called real, otherwise fake.
///
/// The DC coefficient is excluded from both the band energy and the total, so
/// the rule depends on texture rather than mean brightness. Images with no AC
/// energy at all (constant or all-zero) are labeled fake.
#[derive(Debug)]
pub struct FreqEnergyOracle {
    high_mask: FrequencyMask,
    threshold: f64,
    ledger: QueryLedger,
}

impl FreqEnergyOracle {
    pub fn new(high_mask: FrequencyMask, threshold: f64) -> Result<Self> {
        if high_mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold {threshold} outside (0, 1)"
            )));
        }
        Ok(Self {
            high_mask,
            threshold,
            ledger: QueryLedger::new(),
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn high_mask(&self) -> &FrequencyMask {
        &self.high_mask
    }

    /// High-band share of the AC energy, or `None` when there is no AC energy.
    pub fn high_energy_fraction(&self, img: &ImageTensor) -> Result<Option<f64>> {
        self.high_mask.ensure_shape(img.shape())?;
        let spec = dct2(img);
        let shape = spec.shape();
        let mut total = 0.0;
        let mut high = 0.0;
        for c in 0..shape.channels {
            for (k, v) in spec.plane(c).iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let e = v * v;
                total += e;
                if self.high_mask.selected()[k] {
                    high += e;
                }
            }
        }
        // DCT roundoff leaves ~1e-32 energy per coefficient on constant images.
        let floor = ZERO_ENERGY_PER_COEFF * shape.len() as f64;
        Ok(if total > floor { Some(high / total) } else { None })
    }

    /// Uncounted decision rule.
    pub fn classify(&self, img: &ImageTensor) -> Result<Label> {
        Ok(match self.high_energy_fraction(img)? {
            Some(f) if f >= self.threshold => Label::Real,
            _ => Label::Fake,
        })
    }
}

impl Oracle for FreqEnergyOracle {
    fn query(&self, img: &ImageTensor) -> Result<Label, OracleError> {
        let label = self
            .classify(img)
            .map_err(|e| OracleError::Encode(e.to_string()))?;
        self.ledger.record();
        Ok(label)
    }

    fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }
}
