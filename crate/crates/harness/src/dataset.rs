//! Synthetic real-vs-generated image corpus.
//!
//! Both classes share a smooth base: Gaussian coefficients on the lowest
//! frequencies around a mid-gray DC term. Real-like images add a fixed
//! high-frequency pattern (think sensor noise) at a random positive
//! amplitude, plus a little independent high-band noise. Fake-like images are
//! the smooth base alone, so their high band is empty up to 8-bit rounding.

use std::fs;
use std::path::{Path, PathBuf};

use fba2d_core::{build_mask, decode_png, encode_png, idct2, ImageTensor, Label, Shape, Spectrum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Seed of the shared real-class pattern. Independent of the run seed so
/// datasets generated with different seeds describe the same "camera".
const PATTERN_SEED: u64 = 0x5eed_0f_ca3e7a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Share of the spectrum carrying the smooth base.
    pub base_band: f64,
    /// Pixel-domain standard deviation of the base around 0.5.
    pub base_std: f64,
    /// Share of the spectrum (from the top) carrying the real-class pattern.
    pub pattern_band: f64,
    /// Pattern amplitude range, as pixel-domain RMS.
    pub pattern_rms: (f64, f64),
    /// Pixel-domain RMS of the independent high-band noise on real images.
    pub noise_rms: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            base_band: 0.05,
            base_std: 0.08,
            pattern_band: 0.5,
            pattern_rms: (0.03, 0.06),
            noise_rms: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub label: Label,
}

/// A loaded sample.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub path: PathBuf,
    pub label: Label,
    pub image: ImageTensor,
}

pub const MANIFEST_FILE: &str = "manifest.json";
/// Refuse manifests larger than this.
pub const MAX_MANIFEST_BYTES: usize = 64 << 20;

/// Unit-norm spectrum supported on `band` of the highest frequencies.
fn band_direction(shape: Shape, low: f64, high: f64, rng: &mut impl Rng) -> Result<Spectrum> {
    let mask = build_mask((shape.height, shape.width), low, high)?;
    Ok(fba2d_core::spectral::sample_masked_direction(&mask, shape.channels, rng)?)
}

pub struct Generator {
    shape: Shape,
    cfg: GeneratorConfig,
    pattern: Spectrum,
}

impl Generator {
    pub fn new(shape: Shape, cfg: GeneratorConfig) -> Result<Self> {
        if !(cfg.base_std >= 0.0 && cfg.noise_rms >= 0.0)
            || !(0.0 <= cfg.pattern_rms.0 && cfg.pattern_rms.0 <= cfg.pattern_rms.1)
        {
            return Err(HarnessError::Config("generator amplitudes must be ordered and non-negative".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(PATTERN_SEED);
        let pattern = band_direction(shape, 0.0, cfg.pattern_band, &mut rng)?;
        Ok(Self { shape, cfg, pattern })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// The shared real-class pattern (unit L2 norm in the DCT domain).
    pub fn pattern(&self) -> &Spectrum {
        &self.pattern
    }

    /// One quantized image of class `label`.
    pub fn sample(&self, label: Label, rng: &mut impl Rng) -> Result<ImageTensor> {
        let s = self.shape;
        let n = (s.len() as f64).sqrt();
        let base_dir = band_direction(s, self.cfg.base_band, 0.0, rng)?;
        // A unit spectrum spread over the plane has pixel RMS 1 / sqrt(len).
        let mut spec = base_dir.scaled(self.cfg.base_std * n);
        let dc = 0.5 * ((s.height * s.width) as f64).sqrt();
        for c in 0..s.channels {
            spec.set(c, 0, 0, dc);
        }
        if label == Label::Real {
            let (lo, hi) = self.cfg.pattern_rms;
            let amp = if hi > lo { rng.gen_range(lo..hi) } else { lo };
            spec = spec.add_scaled(amp * n, &self.pattern);
            let noise = band_direction(s, 0.0, self.cfg.pattern_band, rng)?;
            spec = spec.add_scaled(self.cfg.noise_rms * n, &noise);
        }
        Ok(idct2(&spec).quantized())
    }

    /// `n_per_class` images of each class, interleaved real/fake.
    pub fn generate(&self, n_per_class: usize, seed: u64) -> Result<Vec<(ImageTensor, Label)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(2 * n_per_class);
        for _ in 0..n_per_class {
            for label in [Label::Real, Label::Fake] {
                out.push((self.sample(label, &mut rng)?, label));
            }
        }
        Ok(out)
    }
}

/// Sample id for the `k`-th generated image.
pub fn sample_id(k: usize, label: Label) -> String {
    let class = match label {
        Label::Real => "real",
        Label::Fake => "fake",
    };
    format!("{k:05}_{class}")
}

/// Write PNGs and `manifest.json` into `out_dir`; returns the manifest.
pub fn write_dataset(out_dir: &Path, samples: &[(ImageTensor, Label)]) -> Result<Vec<ManifestEntry>> {
    fs::create_dir_all(out_dir.join("images"))?;
    let mut manifest = Vec::with_capacity(samples.len());
    for (k, (img, label)) in samples.iter().enumerate() {
        let rel = format!("images/{}.png", sample_id(k, *label));
        fs::write(out_dir.join(&rel), encode_png(img)?)?;
        manifest.push(ManifestEntry { path: rel, label: *label });
    }
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(out_dir.join(MANIFEST_FILE), text + "\n")?;
    Ok(manifest)
}

pub fn parse_manifest(bytes: &[u8]) -> Result<Vec<ManifestEntry>> {
    if bytes.len() > MAX_MANIFEST_BYTES {
        return Err(HarnessError::Dataset("manifest too large".into()));
    }
    let entries: Vec<ManifestEntry> = serde_json::from_slice(bytes)?;
    for e in &entries {
        let p = Path::new(&e.path);
        if e.path.is_empty() || p.is_absolute() || p.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
            return Err(HarnessError::Dataset(format!("manifest path {:?} escapes the dataset", e.path)));
        }
    }
    Ok(entries)
}

/// Load a dataset directory (or a manifest file path directly).
pub fn load_dataset(path: &Path) -> Result<Vec<Sample>> {
    let (dir, manifest_path) = if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST_FILE))
    } else {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (dir, path.to_path_buf())
    };
    let bytes = fs::read(&manifest_path)
        .map_err(|e| HarnessError::Dataset(format!("{}: {e}", manifest_path.display())))?;
    let entries = parse_manifest(&bytes)?;
    let mut samples = Vec::with_capacity(entries.len());
    let mut shape = None;
    for e in entries {
        let full = dir.join(&e.path);
        let bytes = fs::read(&full).map_err(|err| HarnessError::Dataset(format!("{}: {err}", full.display())))?;
        let image = decode_png(&bytes)?;
        match shape {
            None => shape = Some(image.shape()),
            Some(s) if s != image.shape() => {
                return Err(HarnessError::Dataset(format!(
                    "{} has shape {}, expected {s}",
                    e.path,
                    image.shape()
                )))
            }
            _ => {}
        }
        let id = Path::new(&e.path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| e.path.clone());
        samples.push(Sample { id, path: full, label: e.label, image });
    }
    Ok(samples)
}
