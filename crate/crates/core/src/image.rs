//! Spatial and frequency-domain tensors plus the 8-bit PNG interchange codec.
//!
//! Both [`ImageTensor`] and [`Spectrum`] store their values channel-planar:
//! each channel is a row-major `height x width` plane, and planes follow one
//! another. Index `(c, i, j)` lives at `(c * height + i) * width + j`.

use std::io::Cursor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted side length (one SSIM window).
pub const MIN_SIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize, channels: usize) -> Result<Self> {
        if height < MIN_SIDE || width < MIN_SIDE {
            return Err(Error::InvalidArgument(format!(
                "image sides must be at least {MIN_SIDE}, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
        })
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.plane_len() * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, c: usize, i: usize, j: usize) -> usize {
        (c * self.height + i) * self.width + j
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

macro_rules! planar_tensor {
    ($name:ident) => {
        impl $name {
            pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
                if data.len() != shape.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "{} values for shape {}",
                        data.len(),
                        shape
                    )));
                }
                Ok(Self { shape, data })
            }

            pub fn zeros(shape: Shape) -> Self {
                Self {
                    shape,
                    data: vec![0.0; shape.len()],
                }
            }

            pub fn filled(shape: Shape, value: f64) -> Self {
                Self {
                    shape,
                    data: vec![value; shape.len()],
                }
            }

            pub fn shape(&self) -> Shape {
                self.shape
            }

            pub fn data(&self) -> &[f64] {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut [f64] {
                &mut self.data
            }

            pub fn into_data(self) -> Vec<f64> {
                self.data
            }

            pub fn plane(&self, c: usize) -> &[f64] {
                let n = self.shape.plane_len();
                &self.data[c * n..(c + 1) * n]
            }

            pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
                self.data[self.shape.index(c, i, j)]
            }

            pub fn set(&mut self, c: usize, i: usize, j: usize, v: f64) {
                let k = self.shape.index(c, i, j);
                self.data[k] = v;
            }

            pub fn norm(&self) -> f64 {
                self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
            }

            pub fn dot(&self, other: &Self) -> f64 {
                debug_assert_eq!(self.shape, other.shape);
                self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
            }

            /// L2 distance; shapes must agree.
            pub fn distance(&self, other: &Self) -> f64 {
                debug_assert_eq!(self.shape, other.shape);
                self.data
                    .iter()
                    .zip(&other.data)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            }

            pub fn sub(&self, other: &Self) -> Self {
                debug_assert_eq!(self.shape, other.shape);
                let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
                Self {
                    shape: self.shape,
                    data,
                }
            }

            pub fn scaled(&self, k: f64) -> Self {
                Self {
                    shape: self.shape,
                    data: self.data.iter().map(|v| v * k).collect(),
                }
            }

            /// `self + k * other`
            pub fn add_scaled(&self, k: f64, other: &Self) -> Self {
                debug_assert_eq!(self.shape, other.shape);
                let data = self
                    .data
                    .iter()
                    .zip(&other.data)
                    .map(|(a, b)| a + k * b)
                    .collect();
                Self {
                    shape: self.shape,
                    data,
                }
            }

            pub(crate) fn ensure_same_shape(&self, other: &Self) -> Result<()> {
                if self.shape != other.shape {
                    return Err(Error::ShapeMismatch(format!(
                        "{} vs {}",
                        self.shape, other.shape
                    )));
                }
                Ok(())
            }
        }
    };
}

/// Pixel values of an image, nominally in `[0, 1]`.
///
/// Values outside the unit range are representable (an inverse transform may
/// overshoot); [`ImageTensor::clamped`] restores the range.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    shape: Shape,
    data: Vec<f64>,
}

/// DCT-II coefficients with the same layout as the image they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    shape: Shape,
    data: Vec<f64>,
}

planar_tensor!(ImageTensor);
planar_tensor!(Spectrum);

impl ImageTensor {
    pub fn clamped(&self) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Clamp to `[0, 1]` and snap every value to the nearest multiple of
    /// 1/255, rounding halves away from zero.
    pub fn quantized(&self) -> Self {
        Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|&v| quantize_u8(v) as f64 / 255.0)
                .collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `round(clamp(v) * 255)` with halves rounded away from zero.
pub fn quantize_u8(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0).round() as u8
}

/// Encode as an 8-bit grayscale (1 channel) or RGB (3 channels) PNG.
pub fn encode_png(img: &ImageTensor) -> Result<Vec<u8>> {
    let shape = img.shape();
    let color = match shape.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => return Err(Error::Codec(format!("cannot encode {c} channels"))),
    };
    let mut raw = Vec::with_capacity(shape.len());
    for i in 0..shape.height {
        for j in 0..shape.width {
            for c in 0..shape.channels {
                raw.push(quantize_u8(img.get(c, i, j)));
            }
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, shape.width as u32, shape.height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Codec(e.to_string()))?;
        writer
            .write_image_data(&raw)
            .map_err(|e| Error::Codec(e.to_string()))?;
    }
    Ok(out)
}

/// Upper bound on decoded pixels; anything larger is rejected before allocation.
const MAX_DECODE_PIXELS: u64 = 1 << 24;

/// Decode a PNG into an image tensor. Palette and low-bit-depth images are
/// expanded, 16-bit samples are stripped to 8 bits and alpha is discarded.
pub fn decode_png(bytes: &[u8]) -> Result<ImageTensor> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(|e| Error::Codec(e.to_string()))?;
    let (w, h) = {
        let info = reader.info();
        (info.width as usize, info.height as usize)
    };
    if (w as u64) * (h as u64) > MAX_DECODE_PIXELS {
        return Err(Error::Codec(format!("image too large: {w}x{h}")));
    }
    let buf_len = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Codec("image too large".into()))?;
    let mut buf = vec![0u8; buf_len];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Codec(e.to_string()))?;
    if frame.bit_depth != png::BitDepth::Eight {
        return Err(Error::Codec(format!(
            "unsupported bit depth {:?}",
            frame.bit_depth
        )));
    }
    let (stride, channels) = match frame.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        other => return Err(Error::Codec(format!("unsupported color type {other:?}"))),
    };
    let shape = Shape::new(h, w, channels)?;
    let mut img = ImageTensor::zeros(shape);
    for i in 0..h {
        let row = &buf[i * frame.line_size..];
        for j in 0..w {
            for c in 0..channels {
                img.set(c, i, j, row[j * stride + c] as f64 / 255.0);
            }
        }
    }
    Ok(img)
}
