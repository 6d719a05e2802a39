//! Orthonormal 2-D DCT-II / DCT-III per channel, frequency-band masks and
//! random direction sampling restricted to a mask.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, Shape, Spectrum};

thread_local! {
    static BASES: RefCell<HashMap<usize, Rc<Vec<f64>>>> = RefCell::new(HashMap::new());
}

/// Row-major `n x n` orthonormal DCT-II matrix: `C[k][m] = s_k cos(pi (2m+1) k / 2n)`.
fn basis(n: usize) -> Rc<Vec<f64>> {
    BASES.with(|cache| {
        cache
            .borrow_mut()
            .entry(n)
            .or_insert_with(|| {
                let nf = n as f64;
                let mut c = vec![0.0; n * n];
                for k in 0..n {
                    let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
                    for m in 0..n {
                        c[k * n + m] = s
                            * (std::f64::consts::PI * (2 * m + 1) as f64 * k as f64 / (2.0 * nf))
                                .cos();
                    }
                }
                Rc::new(c)
            })
            .clone()
    })
}

fn forward_plane(src: &[f64], dst: &mut [f64], h: usize, w: usize, ch: &[f64], cw: &[f64]) {
    let mut tmp = vec![0.0; h * w];
    for i in 0..h {
        let row = &src[i * w..(i + 1) * w];
        for l in 0..w {
            let basis_row = &cw[l * w..(l + 1) * w];
            tmp[i * w + l] = row.iter().zip(basis_row).map(|(a, b)| a * b).sum();
        }
    }
    dst.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..h {
        let out = &mut dst[k * w..(k + 1) * w];
        for i in 0..h {
            let c = ch[k * h + i];
            let t = &tmp[i * w..(i + 1) * w];
            for (o, v) in out.iter_mut().zip(t) {
                *o += c * v;
            }
        }
    }
}

fn inverse_plane(src: &[f64], dst: &mut [f64], h: usize, w: usize, ch: &[f64], cw: &[f64]) {
    let mut tmp = vec![0.0; h * w];
    for k in 0..h {
        let row = &src[k * w..(k + 1) * w];
        for i in 0..h {
            let c = ch[k * h + i];
            let t = &mut tmp[i * w..(i + 1) * w];
            for (o, v) in t.iter_mut().zip(row) {
                *o += c * v;
            }
        }
    }
    dst.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..h {
        let t = &tmp[i * w..(i + 1) * w];
        let out = &mut dst[i * w..(i + 1) * w];
        for (l, &tv) in t.iter().enumerate() {
            let basis_row = &cw[l * w..(l + 1) * w];
            for (o, b) in out.iter_mut().zip(basis_row) {
                *o += tv * b;
            }
        }
    }
}

/// Orthonormal 2-D DCT-II applied to each channel independently.
pub fn dct2(img: &ImageTensor) -> Spectrum {
    let shape = img.shape();
    let (h, w) = (shape.height, shape.width);
    let (ch, cw) = (basis(h), basis(w));
    let mut out = Spectrum::zeros(shape);
    let n = shape.plane_len();
    for c in 0..shape.channels {
        forward_plane(
            img.plane(c),
            &mut out.data_mut()[c * n..(c + 1) * n],
            h,
            w,
            &ch,
            &cw,
        );
    }
    out
}

/// Exact inverse of [`dct2`]. The result is not clamped.
pub fn idct2(spec: &Spectrum) -> ImageTensor {
    let shape = spec.shape();
    let (h, w) = (shape.height, shape.width);
    let (ch, cw) = (basis(h), basis(w));
    let mut out = ImageTensor::zeros(shape);
    let n = shape.plane_len();
    for c in 0..shape.channels {
        inverse_plane(
            spec.plane(c),
            &mut out.data_mut()[c * n..(c + 1) * n],
            h,
            w,
            &ch,
            &cw,
        );
    }
    out
}

/// Coefficient positions of an `h x w` grid ordered by anti-diagonal
/// `i + j`, ties broken by smaller `i` first.
pub fn antidiagonal_order(h: usize, w: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(h * w);
    for s in 0..(h + w - 1) {
        let lo = s.saturating_sub(w - 1);
        let hi = s.min(h - 1);
        for i in lo..=hi {
            out.push((i, s - i));
        }
    }
    out
}

/// `ceil(fraction * total)`, forgiving representation error in the product
/// (0.3 * 10 must give 3, not 4).
fn band_count(fraction: f64, total: usize) -> usize {
    let raw = fraction * total as f64;
    let c = (raw - 1e-9).ceil();
    if c <= 0.0 {
        0
    } else {
        (c as usize).min(total)
    }
}

/// Per-coefficient selector shared across channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMask {
    height: usize,
    width: usize,
    selected: Vec<bool>,
    low_fraction: f64,
    high_fraction: f64,
    low_count: usize,
    high_count: usize,
}

impl FrequencyMask {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn low_fraction(&self) -> f64 {
        self.low_fraction
    }

    pub fn high_fraction(&self) -> f64 {
        self.high_fraction
    }

    pub fn low_count(&self) -> usize {
        self.low_count
    }

    pub fn high_count(&self) -> usize {
        self.high_count
    }

    pub fn count(&self) -> usize {
        self.low_count + self.high_count
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn is_selected(&self, i: usize, j: usize) -> bool {
        self.selected[i * self.width + j]
    }

    pub fn selected(&self) -> &[bool] {
        &self.selected
    }

    /// Selected `(i, j)` positions in row-major scan order.
    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.selected
            .iter()
            .enumerate()
            .filter(|(_, s)| **s)
            .map(move |(k, _)| (k / w, k % w))
    }

    pub fn matches_shape(&self, shape: Shape) -> bool {
        self.height == shape.height && self.width == shape.width
    }

    pub(crate) fn ensure_shape(&self, shape: Shape) -> Result<()> {
        if !self.matches_shape(shape) {
            return Err(Error::ShapeMismatch(format!(
                "mask is {}x{}, tensor is {}",
                self.height, self.width, shape
            )));
        }
        Ok(())
    }
}

/// Build a low/high band mask over an `h x w` coefficient grid.
///
/// The low band takes the `ceil(low_fraction * h * w)` positions closest to
/// the DC corner under anti-diagonal ordering; the high band takes
/// `ceil(high_fraction * h * w)` positions from the far corner. If both
/// ceilings together exceed the grid, the high band is trimmed so the bands
/// never overlap.
pub fn build_mask(
    shape: (usize, usize),
    low_fraction: f64,
    high_fraction: f64,
) -> Result<FrequencyMask> {
    let (h, w) = shape;
    if h == 0 || w == 0 {
        return Err(Error::InvalidArgument("mask shape must be non-empty".into()));
    }
    for (name, f) in [("low_fraction", low_fraction), ("high_fraction", high_fraction)] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::InvalidArgument(format!("{name}={f} outside [0, 1]")));
        }
    }
    if low_fraction + high_fraction > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "low_fraction + high_fraction = {} exceeds 1",
            low_fraction + high_fraction
        )));
    }
    let total = h * w;
    let low_count = band_count(low_fraction, total);
    let high_count = band_count(high_fraction, total).min(total - low_count);

    let order = antidiagonal_order(h, w);
    let mut selected = vec![false; total];
    for &(i, j) in order.iter().take(low_count) {
        selected[i * w + j] = true;
    }
    // Reverse anti-diagonal order: larger i + j first, then larger i first.
    for &(i, j) in order.iter().rev().take(high_count) {
        selected[i * w + j] = true;
    }
    Ok(FrequencyMask {
        height: h,
        width: w,
        selected,
        low_fraction,
        high_fraction,
        low_count,
        high_count,
    })
}

/// Draw i.i.d. standard normal coefficients on the masked positions of every
/// channel, zero elsewhere, and normalize to unit L2 norm.
pub fn sample_masked_direction<R: Rng + ?Sized>(
    mask: &FrequencyMask,
    channels: usize,
    rng: &mut R,
) -> Result<Spectrum> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let shape = Shape::new(mask.height, mask.width, channels)?;
    let mut out = Spectrum::zeros(shape);
    loop {
        let mut norm_sq = 0.0;
        for c in 0..channels {
            for (i, j) in mask.positions() {
                let v: f64 = rng.sample(StandardNormal);
                norm_sq += v * v;
                out.set(c, i, j, v);
            }
        }
        // An all-zero Gaussian draw has probability zero; redraw if it happens.
        if norm_sq > 0.0 {
            let inv = 1.0 / norm_sq.sqrt();
            out.data_mut().iter_mut().for_each(|v| *v *= inv);
            return Ok(out);
        }
    }
}
