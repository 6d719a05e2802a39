//! Batch attack runner.

use std::fs;
use std::path::Path;

use fba2d_core::metrics::SampleMetrics;
use fba2d_core::soup::{build_soup, select_init, InitMode};
use fba2d_core::surrogate::{SurrogateFile, SurrogateModel};
use fba2d_core::{encode_png, run_attack, AttackTrace, Error as CoreError, ImageTensor, Label, Oracle, Shape};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SurrogateSettings};
use crate::dataset::Sample;
use crate::error::{HarnessError, Result};

/// Below this training accuracy the surrogate is rejected outright.
pub const MIN_SURROGATE_ACCURACY: f64 = 0.6;
/// Below this a warning is logged.
pub const TARGET_SURROGATE_ACCURACY: f64 = 0.9;

pub const REPORTS_FILE: &str = "reports.json";
pub const ADVERSARIAL_DIR: &str = "adversarial";
pub const TRACES_DIR: &str = "traces";

/// Independent per-sample stream seed (splitmix64 finalizer over seed and index).
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Train the logistic surrogate and check it against the accuracy floor.
pub fn train_surrogate(
    samples: &[(ImageTensor, Label)],
    settings: &SurrogateSettings,
) -> Result<(SurrogateModel, f64)> {
    let shape = samples
        .first()
        .map(|s| s.0.shape())
        .ok_or_else(|| HarnessError::Dataset("cannot train a surrogate on an empty dataset".into()))?;
    let mask = settings.feature_mask(shape)?;
    let model = SurrogateModel::train(samples, mask, settings.epochs, settings.learning_rate)?;
    let accuracy = model.accuracy(samples)?;
    if accuracy < MIN_SURROGATE_ACCURACY {
        return Err(HarnessError::NotConverged {
            accuracy,
            required: MIN_SURROGATE_ACCURACY,
        });
    }
    if accuracy < TARGET_SURROGATE_ACCURACY {
        warn!("surrogate training accuracy {accuracy:.3} is below {TARGET_SURROGATE_ACCURACY}");
    }
    Ok((model, accuracy))
}

pub fn load_surrogate(path: &Path, settings: &SurrogateSettings, shape: Shape) -> Result<SurrogateModel> {
    let bytes = fs::read(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    let file = SurrogateFile::parse(&bytes)?;
    let model = SurrogateModel::from_file(file, settings.feature_mask(shape)?)?;
    if model.shape() != shape {
        return Err(HarnessError::Config(format!(
            "surrogate is for {} images, dataset has {shape}",
            model.shape()
        )));
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueriesToThreshold {
    pub threshold: f64,
    /// Total queries (initialization included) when the RMSE first reached the
    /// threshold; `None` if it never did.
    pub queries: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub id: String,
    pub label: Label,
    pub init_mode: Option<InitMode>,
    pub init_queries: u64,
    pub attack_queries: u64,
    pub queries_to_threshold: Vec<QueriesToThreshold>,
    pub metrics: SampleMetrics,
    pub error: Option<String>,
}

impl SampleReport {
    pub fn queries_to(&self, threshold: f64) -> Option<u64> {
        self.queries_to_threshold
            .iter()
            .find(|q| q.threshold == threshold)
            .and_then(|q| q.queries)
    }
}

/// Everything one sample's attack produced.
#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub report: SampleReport,
    pub adversarial: Option<ImageTensor>,
    pub trace: Option<AttackTrace>,
}

/// Inputs shared by every sample of a batch.
pub struct AttackContext<'a> {
    pub config: &'a RunConfig,
    pub oracle: &'a dyn Oracle,
    /// `None` disables soup initialization.
    pub surrogate: Option<&'a SurrogateModel>,
    pub samples: &'a [Sample],
}

impl AttackContext<'_> {
    /// Up to `pool_size` opposite-class images, nearest to `x` first.
    pub fn target_pool(&self, x: &ImageTensor, label: Label) -> Vec<ImageTensor> {
        let mut pool: Vec<(f64, usize)> = self
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label != label)
            .map(|(k, s)| (s.image.distance(x), k))
            .collect();
        pool.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        pool.into_iter()
            .take(self.config.pool_size)
            .map(|(_, k)| self.samples[k].image.clone())
            .collect()
    }

    pub fn attack_sample(&self, index: usize) -> Result<SampleOutcome> {
        let cfg = self.config;
        let sample = &self.samples[index];
        let (x, y) = (&sample.image, sample.label);
        let thresholds = &cfg.thresholds;
        let failed = |queries: u64, mode: Option<InitMode>, attack_queries: u64, err: String| SampleOutcome {
            report: SampleReport {
                id: sample.id.clone(),
                label: y,
                init_mode: mode,
                init_queries: queries,
                attack_queries,
                queries_to_threshold: thresholds
                    .iter()
                    .map(|&t| QueriesToThreshold { threshold: t, queries: None })
                    .collect(),
                metrics: SampleMetrics::failed(queries + attack_queries, thresholds),
                error: Some(err),
            },
            adversarial: None,
            trace: None,
        };

        let soup = match self.surrogate {
            Some(model) => Some(build_soup(model, x, y, &cfg.soup.params)?),
            None => None,
        };
        let pool = self.target_pool(x, y);
        let init = match select_init(y, soup.as_ref(), &pool, self.oracle) {
            Ok(init) => init,
            Err(CoreError::InitializationFailed { queries }) => {
                return Ok(failed(queries, None, 0, "no adversarial initialization found".into()))
            }
            Err(e) => return Ok(failed(0, None, 0, e.to_string())),
        };

        let mask = cfg.mask_policy.mask(y, x.shape())?;
        let attack_cfg = cfg.attack.to_config(mask, sample_seed(cfg.seed, index as u64));
        let result = match run_attack(x, y, &init.init, self.oracle, &attack_cfg) {
            Ok(r) => r,
            Err(e) => return Ok(failed(init.queries, Some(init.mode), 0, e.to_string())),
        };
        let total = init.queries + result.queries;
        let metrics = SampleMetrics::measure(x, &result.adversarial, true, total, thresholds)?;
        let queries_to_threshold = thresholds
            .iter()
            .map(|&t| QueriesToThreshold {
                threshold: t,
                queries: result.trace.queries_to_rmse(t).map(|q| q + init.queries),
            })
            .collect();
        Ok(SampleOutcome {
            report: SampleReport {
                id: sample.id.clone(),
                label: y,
                init_mode: Some(init.mode),
                init_queries: init.queries,
                attack_queries: result.queries,
                queries_to_threshold,
                metrics,
                error: None,
            },
            adversarial: Some(result.adversarial),
            trace: Some(result.trace),
        })
    }

    /// Attack every sample on the configured worker pool; results come back
    /// sorted by sample id.
    pub fn run(&self) -> Result<Vec<SampleOutcome>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
        let mut outcomes: Vec<SampleOutcome> = pool.install(|| {
            (0..self.samples.len())
                .into_par_iter()
                .map(|k| self.attack_sample(k))
                .collect::<Result<_>>()
        })?;
        outcomes.sort_by(|a, b| a.report.id.cmp(&b.report.id));
        let ok = outcomes.iter().filter(|o| o.report.error.is_none()).count();
        info!("attacked {} samples, {ok} produced an adversarial image", outcomes.len());
        Ok(outcomes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub samples: Vec<SampleReport>,
}

/// Write adversarial PNGs, traces and `reports.json` under `out`.
pub fn write_outcomes(out: &Path, outcomes: &[SampleOutcome]) -> Result<()> {
    fs::create_dir_all(out.join(ADVERSARIAL_DIR))?;
    fs::create_dir_all(out.join(TRACES_DIR))?;
    for o in outcomes {
        if let Some(img) = &o.adversarial {
            fs::write(out.join(ADVERSARIAL_DIR).join(format!("{}.png", o.report.id)), encode_png(img)?)?;
        }
        if let Some(trace) = &o.trace {
            fs::write(out.join(TRACES_DIR).join(format!("{}.jsonl", o.report.id)), trace.to_jsonl())?;
        }
    }
    let file = ReportFile {
        samples: outcomes.iter().map(|o| o.report.clone()).collect(),
    };
    fs::write(out.join(REPORTS_FILE), serde_json::to_string_pretty(&file)? + "\n")?;
    Ok(())
}

pub fn read_reports(dir: &Path) -> Result<ReportFile> {
    let path = dir.join(REPORTS_FILE);
    let bytes = fs::read(&path).map_err(|e| HarnessError::Dataset(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_slice(&bytes)?)
}
