use super::{Label, Oracle, OracleError, QueryLedger};
use crate::error::{Error, Result};
use crate::image::{ImageTensor, Spectrum};
use crate::spectral::dct2;

/// Linear detector in the DCT domain: fake iff `<weight, dct2(img)> + bias >= 0`.
///
/// Because the DCT is orthonormal, the closest boundary point to any image is
/// known in closed form, which makes this oracle an exact optimum reference.
#[derive(Debug)]
pub struct HalfspaceOracle {
    weight: Spectrum,
    weight_norm: f64,
    bias: f64,
    ledger: QueryLedger,
}

impl HalfspaceOracle {
    pub fn new(weight: Spectrum, bias: f64) -> Result<Self> {
        let weight_norm = weight.norm();
        if !(weight_norm > 0.0) || !weight_norm.is_finite() || !bias.is_finite() {
            return Err(Error::InvalidArgument(
                "halfspace weight must be finite and non-zero".into(),
            ));
        }
        Ok(Self {
            weight,
            weight_norm,
            bias,
            ledger: QueryLedger::new(),
        })
    }

    pub fn weight(&self) -> &Spectrum {
        &self.weight
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn score(&self, img: &ImageTensor) -> f64 {
        self.weight.dot(&dct2(img)) + self.bias
    }

    /// Uncounted decision rule.
    pub fn classify(&self, img: &ImageTensor) -> Label {
        if self.score(img) >= 0.0 {
            Label::Fake
        } else {
            Label::Real
        }
    }

    /// Minimal L2 perturbation that moves `img` onto the decision boundary.
    pub fn boundary_distance(&self, img: &ImageTensor) -> f64 {
        self.score(img).abs() / self.weight_norm
    }
}

impl Oracle for HalfspaceOracle {
    fn query(&self, img: &ImageTensor) -> Result<Label, OracleError> {
        let label = self.classify(img);
        self.ledger.record();
        Ok(label)
    }

    fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }
}
