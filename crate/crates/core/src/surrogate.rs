//! Differentiable stand-in detector: a logistic unit over masked DCT
//! coefficients, with closed-form input gradients and a flat binary format.
//!
//! File layout (all integers and floats little-endian):
//!
//! ```text
//! b"FBAS" | version: u16 | height: u32 | width: u32 | channels: u32
//!        | bias: f64 | weights: f64 * (mask.count() * channels)
//! ```
//!
//! Weights are in mask scan order: channel-major, then row-major over the
//! selected positions. The mask itself is not stored; the reader supplies it.

use log::debug;

use crate::error::{Error, Result};
use crate::image::{ImageTensor, Shape, Spectrum};
use crate::oracles::Label;
use crate::spectral::{dct2, idct2, FrequencyMask};

pub const MAGIC: &[u8; 4] = b"FBAS";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 * 3;
/// Largest side length accepted when parsing.
const MAX_SIDE: u32 = 1 << 14;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn target(y: Label) -> f64 {
    match y {
        Label::Real => 0.0,
        Label::Fake => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    shape: Shape,
    feature_mask: FrequencyMask,
    weights: Vec<f64>,
    bias: f64,
}

impl SurrogateModel {
    pub fn new(shape: Shape, feature_mask: FrequencyMask, weights: Vec<f64>, bias: f64) -> Result<Self> {
        feature_mask.ensure_shape(shape)?;
        let expect = feature_mask.count() * shape.channels;
        if weights.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} masked features",
                weights.len(),
                expect
            )));
        }
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("surrogate parameters must be finite".into()));
        }
        Ok(Self {
            shape,
            feature_mask,
            weights,
            bias,
        })
    }

    pub fn zeros(shape: Shape, feature_mask: FrequencyMask) -> Result<Self> {
        let n = feature_mask.count() * shape.channels;
        Self::new(shape, feature_mask, vec![0.0; n], 0.0)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn feature_mask(&self) -> &FrequencyMask {
        &self.feature_mask
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    fn check(&self, img: &ImageTensor) -> Result<()> {
        if img.shape() != self.shape {
            return Err(Error::ShapeMismatch(format!(
                "surrogate expects {}, got {}",
                self.shape,
                img.shape()
            )));
        }
        Ok(())
    }

    pub fn features(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        self.check(img)?;
        let spec = dct2(img);
        let mut out = Vec::with_capacity(self.weights.len());
        for c in 0..self.shape.channels {
            for (i, j) in self.feature_mask.positions() {
                out.push(spec.get(c, i, j));
            }
        }
        Ok(out)
    }

    fn logit_of(&self, features: &[f64]) -> f64 {
        self.weights.iter().zip(features).map(|(w, f)| w * f).sum::<f64>() + self.bias
    }

    pub fn logit(&self, img: &ImageTensor) -> Result<f64> {
        Ok(self.logit_of(&self.features(img)?))
    }

    pub fn predict(&self, img: &ImageTensor) -> Result<Label> {
        Ok(if self.logit(img)? >= 0.0 { Label::Fake } else { Label::Real })
    }

    /// Binary cross-entropy against `y` and its exact gradient with respect to
    /// the pixels.
    pub fn loss_grad(&self, x: &ImageTensor, y: Label) -> Result<(f64, ImageTensor)> {
        let z = self.logit(x)?;
        let t = target(y);
        let loss = softplus(z) - t * z;
        let residual = sigmoid(z) - t;
        // d loss / d x = DCT^T (residual * w embedded on the mask) = IDCT(...).
        let mut g = Spectrum::zeros(self.shape);
        let mut k = 0;
        for c in 0..self.shape.channels {
            for (i, j) in self.feature_mask.positions() {
                g.set(c, i, j, residual * self.weights[k]);
                k += 1;
            }
        }
        Ok((loss, idct2(&g)))
    }

    /// Full-batch gradient descent on the mean cross-entropy, from zero weights.
    pub fn train(
        samples: &[(ImageTensor, Label)],
        feature_mask: FrequencyMask,
        epochs: usize,
        learning_rate: f64,
    ) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("no training samples".into()))?;
        let mut model = Self::zeros(first.0.shape(), feature_mask)?;
        let data: Vec<(Vec<f64>, f64)> = samples
            .iter()
            .map(|(img, y)| Ok((model.features(img)?, target(*y))))
            .collect::<Result<_>>()?;
        let n = data.len() as f64;
        let mut grad_w = vec![0.0; model.weights.len()];
        for epoch in 0..epochs {
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            let mut loss = 0.0;
            for (f, t) in &data {
                let z = model.logit_of(f);
                loss += softplus(z) - t * z;
                let r = sigmoid(z) - t;
                grad_b += r;
                for (g, v) in grad_w.iter_mut().zip(f) {
                    *g += r * v;
                }
            }
            for (w, g) in model.weights.iter_mut().zip(&grad_w) {
                *w -= learning_rate * g / n;
            }
            model.bias -= learning_rate * grad_b / n;
            if epoch % 100 == 0 {
                debug!("surrogate epoch {epoch}: mean loss {:.5}", loss / n);
            }
        }
        Ok(model)
    }

    pub fn accuracy(&self, samples: &[(ImageTensor, Label)]) -> Result<f64> {
        if samples.is_empty() {
            return Ok(0.0);
        }
        let mut hits = 0usize;
        for (img, y) in samples {
            if self.predict(img)? == *y {
                hits += 1;
            }
        }
        Ok(hits as f64 / samples.len() as f64)
    }

    pub fn to_file(&self) -> SurrogateFile {
        SurrogateFile {
            height: self.shape.height as u32,
            width: self.shape.width as u32,
            channels: self.shape.channels as u32,
            bias: self.bias,
            weights: self.weights.clone(),
        }
    }

    pub fn from_file(file: SurrogateFile, feature_mask: FrequencyMask) -> Result<Self> {
        let shape = file.shape()?;
        Self::new(shape, feature_mask, file.weights, file.bias)
    }
}

/// Raw contents of a surrogate weights file.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateFile {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub bias: f64,
    pub weights: Vec<f64>,
}

impl SurrogateFile {
    pub fn shape(&self) -> Result<Shape> {
        Shape::new(self.height as usize, self.width as usize, self.channels as usize)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * (1 + self.weights.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.channels.to_le_bytes());
        out.extend_from_slice(&self.bias.to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Err(Error::SurrogateFormat(m));
        if bytes.len() < HEADER_LEN + 8 {
            return bad(format!("{} bytes is shorter than the header", bytes.len()));
        }
        if &bytes[..4] != MAGIC {
            return bad("bad magic".into());
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return bad(format!("unsupported version {version}"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let (height, width, channels) = (u32_at(6), u32_at(10), u32_at(14));
        if height > MAX_SIDE || width > MAX_SIDE {
            return bad(format!("dimensions {height}x{width} too large"));
        }
        Shape::new(height as usize, width as usize, channels as usize)
            .map_err(|e| Error::SurrogateFormat(e.to_string()))?;
        let body = &bytes[HEADER_LEN..];
        if body.len() % 8 != 0 {
            return bad(format!("trailing {} bytes", body.len() % 8));
        }
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let bias = values.next().expect("length checked above");
        let weights: Vec<f64> = values.collect();
        if weights.len() > height as usize * width as usize * channels as usize {
            return bad(format!("{} weights exceed coefficient count", weights.len()));
        }
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return bad("non-finite parameter".into());
        }
        Ok(Self {
            height,
            width,
            channels,
            bias,
            weights,
        })
    }
}
