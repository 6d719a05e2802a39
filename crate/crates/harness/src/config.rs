//! Run configuration, read from TOML. Every field has a default, so an empty
//! file is a valid config.

use std::path::{Path, PathBuf};
use std::time::Duration;

use fba2d_core::oracles::http::HttpOracleConfig;
use fba2d_core::oracles::{FreqEnergyOracle, HttpOracle};
use fba2d_core::soup::SoupConfig;
use fba2d_core::{build_mask, AttackConfig, FrequencyMask, Label, Oracle, Shape};
use serde::{Deserialize, Serialize};

use crate::dataset::GeneratorConfig;
use crate::error::{HarnessError, Result};

/// Refuse config files larger than this.
pub const MAX_CONFIG_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OracleSpec {
    /// Built-in spectral energy detector.
    FreqEnergy {
        #[serde(default = "default_oracle_band")]
        high_fraction: f64,
        #[serde(default = "default_oracle_threshold")]
        threshold: f64,
    },
    Http {
        endpoint: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default)]
        bearer_token: Option<String>,
    },
}

fn default_oracle_band() -> f64 {
    0.5
}
fn default_oracle_threshold() -> f64 {
    0.05
}
fn default_timeout_ms() -> u64 {
    10_000
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec::FreqEnergy {
            high_fraction: default_oracle_band(),
            threshold: default_oracle_threshold(),
        }
    }
}

impl OracleSpec {
    /// `freq-energy` or an `http://` / `https://` endpoint, as given on the
    /// command line.
    pub fn parse_flag(s: &str) -> Result<Self> {
        if s == "freq-energy" {
            Ok(Self::default())
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(OracleSpec::Http {
                endpoint: s.to_string(),
                timeout_ms: default_timeout_ms(),
                bearer_token: None,
            })
        } else {
            Err(HarnessError::Config(format!(
                "unknown oracle {s:?} (expected freq-energy or an http(s) URL)"
            )))
        }
    }

    pub fn build(&self, shape: Shape) -> Result<Box<dyn Oracle>> {
        Ok(match self {
            OracleSpec::FreqEnergy { high_fraction, threshold } => {
                let mask = build_mask((shape.height, shape.width), 0.0, *high_fraction)?;
                Box::new(FreqEnergyOracle::new(mask, *threshold)?)
            }
            OracleSpec::Http { endpoint, timeout_ms, bearer_token } => {
                let mut cfg = HttpOracleConfig::new(endpoint.clone(), Duration::from_millis(*timeout_ms));
                cfg.bearer_token = bearer_token.clone();
                Box::new(HttpOracle::new(cfg))
            }
        })
    }
}

/// Attack hyperparameters other than the mask, which comes from the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSettings {
    pub max_queries: u64,
    pub per_subspace_iterations: usize,
    pub alpha_step: f64,
    pub alpha_shrink_ratio: f64,
    pub alpha_bound_offset: f64,
    pub beta_floor: f64,
}

impl Default for AttackSettings {
    fn default() -> Self {
        let d = AttackConfig::new(build_mask((8, 8), 0.5, 0.0).expect("valid fractions"));
        Self {
            max_queries: d.max_queries,
            per_subspace_iterations: d.per_subspace_iterations,
            alpha_step: d.alpha_step,
            alpha_shrink_ratio: d.alpha_shrink_ratio,
            alpha_bound_offset: d.alpha_bound_offset,
            beta_floor: d.beta_floor,
        }
    }
}

impl AttackSettings {
    pub fn to_config(&self, mask: FrequencyMask, seed: u64) -> AttackConfig {
        AttackConfig {
            max_queries: self.max_queries,
            per_subspace_iterations: self.per_subspace_iterations,
            alpha_step: self.alpha_step,
            alpha_shrink_ratio: self.alpha_shrink_ratio,
            alpha_bound_offset: self.alpha_bound_offset,
            beta_floor: self.beta_floor,
            mask,
            rng_seed: seed,
        }
    }
}

/// (low, high) band fractions per benign class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskPolicy {
    pub real: (f64, f64),
    pub fake: (f64, f64),
}

impl Default for MaskPolicy {
    fn default() -> Self {
        Self {
            real: (0.10, 0.10),
            fake: (0.20, 0.0),
        }
    }
}

impl MaskPolicy {
    pub fn bands(&self, label: Label) -> (f64, f64) {
        match label {
            Label::Real => self.real,
            Label::Fake => self.fake,
        }
    }

    pub fn mask(&self, label: Label, shape: Shape) -> Result<FrequencyMask> {
        let (lo, hi) = self.bands(label);
        Ok(build_mask((shape.height, shape.width), lo, hi)?)
    }

    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in [self.real, self.fake] {
            build_mask((8, 8), lo, hi)?;
            if lo + hi <= 0.0 {
                return Err(HarnessError::Config("mask policy selects no frequencies".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoupSettings {
    pub enabled: bool,
    #[serde(flatten)]
    pub params: SoupConfig,
}

impl Default for SoupSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            params: SoupConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateSettings {
    /// Weights file; trained from the dataset when absent.
    pub path: Option<PathBuf>,
    /// Features are the DCT coefficients in this top share of the spectrum.
    pub feature_high_fraction: f64,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for SurrogateSettings {
    fn default() -> Self {
        Self {
            path: None,
            feature_high_fraction: 0.5,
            epochs: 500,
            learning_rate: 0.1,
        }
    }
}

impl SurrogateSettings {
    pub fn feature_mask(&self, shape: Shape) -> Result<FrequencyMask> {
        Ok(build_mask((shape.height, shape.width), 0.0, self.feature_high_fraction)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSettings {
    pub path: PathBuf,
    pub n_per_class: usize,
    /// (height, width, channels)
    pub size: (usize, usize, usize),
    pub generator: GeneratorConfig,
}

impl Default for DatasetSettings {
    fn default() -> Self {
        Self {
            path: PathBuf::from("data"),
            n_per_class: 50,
            size: (32, 32, 1),
            generator: GeneratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output: PathBuf,
    /// Worker threads; 0 uses one per core.
    pub workers: usize,
    pub pool_size: usize,
    pub thresholds: Vec<f64>,
    pub oracle: OracleSpec,
    pub attack: AttackSettings,
    pub mask_policy: MaskPolicy,
    pub soup: SoupSettings,
    pub surrogate: SurrogateSettings,
    pub dataset: DatasetSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output: PathBuf::from("out"),
            workers: 0,
            pool_size: 10,
            thresholds: fba2d_core::metrics::DEFAULT_THRESHOLDS.to_vec(),
            oracle: OracleSpec::default(),
            attack: AttackSettings::default(),
            mask_policy: MaskPolicy::default(),
            soup: SoupSettings::default(),
            surrogate: SurrogateSettings::default(),
            dataset: DatasetSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        if text.len() > MAX_CONFIG_BYTES {
            return Err(HarnessError::Config("config file too large".into()));
        }
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.mask_policy.validate()?;
        if self.pool_size == 0 {
            return Err(HarnessError::Config("pool_size must be at least 1".into()));
        }
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(HarnessError::Config("thresholds must be positive and non-empty".into()));
        }
        self.attack.to_config(build_mask((8, 8), 0.5, 0.0)?, 0).validate()?;
        if self.soup.enabled {
            self.soup.params.validate()?;
        }
        if !(self.surrogate.feature_high_fraction > 0.0 && self.surrogate.feature_high_fraction <= 1.0) {
            return Err(HarnessError::Config("feature_high_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Parse `0.1,0.05,0.01`.
pub fn parse_thresholds(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v > 0.0)
                .ok_or_else(|| HarnessError::Config(format!("bad RMSE threshold {t:?}")))
        })
        .collect()
}

/// Parse `HxWxC` or `HxW` (one channel).
pub fn parse_size(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split('x').collect();
    let nums: Option<Vec<usize>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
    match nums.as_deref() {
        Some([h, w]) => Ok((*h, *w, 1)),
        Some([h, w, c]) => Ok((*h, *w, *c)),
        _ => Err(HarnessError::Config(format!("bad size {s:?} (expected HxW or HxWxC)"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn nested_sections() {
        let cfg = RunConfig::parse(
            r#"
seed = 7
[oracle]
kind = "http"
endpoint = "http://127.0.0.1:9/query"
[attack]
max_queries = 100
[mask_policy]
fake = [0.3, 0.0]
[soup]
enabled = false
momentum_decay = 0.9
"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.attack.max_queries, 100);
        assert_eq!(cfg.attack.per_subspace_iterations, 2);
        assert_eq!(cfg.mask_policy.fake, (0.3, 0.0));
        assert_eq!(cfg.mask_policy.real, (0.1, 0.1));
        assert!(!cfg.soup.enabled);
        assert_eq!(cfg.soup.params.momentum_decay, 0.9);
        assert!(matches!(cfg.oracle, OracleSpec::Http { timeout_ms: 10_000, .. }));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::parse("[mask_policy]\nreal = [0.8, 0.5]").is_err());
        assert!(RunConfig::parse("[mask_policy]\nreal = [0.0, 0.0]").is_err());
        assert!(RunConfig::parse("pool_size = 0").is_err());
        assert!(RunConfig::parse("thresholds = []").is_err());
        assert!(RunConfig::parse("[attack]\nmax_queries = 0").is_err());
        assert!(RunConfig::parse("unknown_key = 1").is_err());
        assert!(RunConfig::parse("[oracle]\nkind = \"magic\"").is_err());
    }

    #[test]
    fn flag_parsers() {
        assert_eq!(parse_thresholds("0.1, 0.05,0.01").unwrap(), vec![0.1, 0.05, 0.01]);
        assert!(parse_thresholds("0.1,-1").is_err());
        assert!(parse_thresholds("").is_err());
        assert_eq!(parse_size("32x32").unwrap(), (32, 32, 1));
        assert_eq!(parse_size("16x24x3").unwrap(), (16, 24, 3));
        assert!(parse_size("32").is_err());
        assert!(OracleSpec::parse_flag("freq-energy").is_ok());
        assert!(OracleSpec::parse_flag("http://localhost:1/q").is_ok());
        assert!(OracleSpec::parse_flag("ftp://x").is_err());
    }
}
