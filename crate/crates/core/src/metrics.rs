//! Distortion metrics and attack-success aggregation.
//!
//! All metrics work on the `[0, 1]` pixel scale. SSIM uses non-overlapping
//! 8x8 windows (trailing rows/columns that do not fill a window are ignored),
//! so its values are not comparable with Gaussian-window implementations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.1, 0.05, 0.01];

const SSIM_WINDOW: usize = 8;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn check(a: &ImageTensor, b: &ImageTensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{} vs {}", a.shape(), b.shape())));
    }
    Ok(())
}

fn mse(a: &ImageTensor, b: &ImageTensor) -> f64 {
    let n = a.data().len() as f64;
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n
}

pub fn l2(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    check(a, b)?;
    Ok(a.distance(b))
}

pub fn rmse(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    check(a, b)?;
    Ok(mse(a, b).sqrt())
}

/// PSNR in dB with peak 1.0; identical images give `f64::INFINITY`.
pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    check(a, b)?;
    let m = mse(a, b);
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / m).log10()
    })
}

pub fn ssim(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    check(a, b)?;
    let s = a.shape();
    let (rows, cols) = (s.height / SSIM_WINDOW, s.width / SSIM_WINDOW);
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(format!(
            "SSIM needs at least one {SSIM_WINDOW}x{SSIM_WINDOW} window, image is {s}"
        )));
    }
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut per_channel = 0.0;
    for c in 0..s.channels {
        let mut acc = 0.0;
        for wr in 0..rows {
            for wc in 0..cols {
                let px = |img: &ImageTensor, k: usize| {
                    img.get(c, wr * SSIM_WINDOW + k / SSIM_WINDOW, wc * SSIM_WINDOW + k % SSIM_WINDOW)
                };
                let (mut mx, mut my) = (0.0, 0.0);
                for k in 0..SSIM_WINDOW * SSIM_WINDOW {
                    mx += px(a, k);
                    my += px(b, k);
                }
                mx /= n;
                my /= n;
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for k in 0..SSIM_WINDOW * SSIM_WINDOW {
                    let dx = px(a, k) - mx;
                    let dy = px(b, k) - my;
                    vx += dx * dx;
                    vy += dy * dy;
                    cxy += dx * dy;
                }
                vx /= n;
                vy /= n;
                cxy /= n;
                acc += ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                    / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
            }
        }
        per_channel += acc / (rows * cols) as f64;
    }
    Ok(per_channel / s.channels as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOutcome {
    pub threshold: f64,
    pub success: bool,
}

/// Per-sample attack outcome. Failed samples carry NaN distortion values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    #[serde(with = "float_repr")]
    pub rmse: f64,
    #[serde(with = "float_repr")]
    pub l2: f64,
    /// +infinity for identical images.
    #[serde(with = "float_repr")]
    pub psnr: f64,
    #[serde(with = "float_repr")]
    pub ssim: f64,
    pub queries: u64,
    pub success_at: Vec<ThresholdOutcome>,
}

/// JSON has no NaN or infinity: finite values are numbers, +inf is `"inf"`,
/// NaN is `null`.
pub(crate) mod float_repr {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_none()
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(f64::NAN),
            Some(Repr::Num(v)) => Ok(v),
            Some(Repr::Text(t)) if t == "inf" => Ok(f64::INFINITY),
            Some(Repr::Text(t)) => Err(D::Error::custom(format!("unexpected float {t:?}"))),
        }
    }
}

impl SampleMetrics {
    /// Metrics of a final image against the benign one. Success at a threshold
    /// requires the image to be adversarial and its RMSE not above it.
    pub fn measure(
        benign: &ImageTensor,
        adversarial_img: &ImageTensor,
        is_adversarial: bool,
        queries: u64,
        thresholds: &[f64],
    ) -> Result<Self> {
        let l2 = l2(benign, adversarial_img)?;
        let rmse = l2 / (benign.data().len() as f64).sqrt();
        Ok(Self {
            rmse,
            l2,
            psnr: psnr(benign, adversarial_img)?,
            ssim: ssim(benign, adversarial_img)?,
            queries,
            success_at: thresholds
                .iter()
                .map(|&t| ThresholdOutcome {
                    threshold: t,
                    success: is_adversarial && rmse <= t,
                })
                .collect(),
        })
    }

    /// A sample whose attack never produced an adversarial image.
    pub fn failed(queries: u64, thresholds: &[f64]) -> Self {
        Self {
            rmse: f64::NAN,
            l2: f64::NAN,
            psnr: f64::NAN,
            ssim: f64::NAN,
            queries,
            success_at: thresholds
                .iter()
                .map(|&t| ThresholdOutcome {
                    threshold: t,
                    success: false,
                })
                .collect(),
        }
    }

    pub fn success(&self, threshold: f64) -> bool {
        self.success_at
            .iter()
            .any(|o| o.threshold == threshold && o.success)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub threshold: f64,
    pub asr: f64,
    pub mean_queries: f64,
    pub median_queries: f64,
    /// Mean L2 over the samples that succeeded at this threshold; NaN if none.
    #[serde(with = "float_repr")]
    pub mean_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub samples: usize,
    pub rows: Vec<SummaryRow>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

pub fn aggregate(reports: &[SampleMetrics], thresholds: &[f64]) -> Result<BenchmarkSummary> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no sample reports to aggregate".into()));
    }
    let n = reports.len() as f64;
    let mut queries: Vec<f64> = reports.iter().map(|r| r.queries as f64).collect();
    let mean_queries = queries.iter().sum::<f64>() / n;
    let median_queries = median(&mut queries).unwrap_or(f64::NAN);
    let rows = thresholds
        .iter()
        .map(|&t| {
            let wins: Vec<&SampleMetrics> = reports.iter().filter(|r| r.success(t)).collect();
            let mean_l2 = if wins.is_empty() {
                f64::NAN
            } else {
                wins.iter().map(|r| r.l2).sum::<f64>() / wins.len() as f64
            };
            SummaryRow {
                threshold: t,
                asr: wins.len() as f64 / n,
                mean_queries,
                median_queries,
                mean_l2,
            }
        })
        .collect();
    Ok(BenchmarkSummary {
        samples: reports.len(),
        rows,
    })
}

impl BenchmarkSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,asr,mean_queries,median_queries,mean_l2\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.threshold, r.asr, r.mean_queries, r.median_queries, r.mean_l2
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::image::Shape;

    fn img(s: Shape, v: f64) -> ImageTensor {
        ImageTensor::filled(s, v)
    }

    fn random(s: Shape, rng: &mut impl Rng) -> ImageTensor {
        ImageTensor::new(s, (0..s.len()).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn rmse_examples() {
        let s = Shape::new(8, 8, 3).unwrap();
        assert_eq!(rmse(&img(s, 0.3), &img(s, 0.3)).unwrap(), 0.0);
        assert_eq!(rmse(&img(s, 0.0), &img(s, 1.0)).unwrap(), 1.0);
        assert!((rmse(&img(s, 0.2), &img(s, 0.3)).unwrap() - 0.1).abs() < 1e-12);
        assert!(rmse(&img(s, 0.0), &img(Shape::new(8, 8, 1).unwrap(), 0.0)).is_err());
    }

    #[test]
    fn psnr_examples() {
        let s = Shape::new(8, 8, 1).unwrap();
        assert_eq!(psnr(&img(s, 0.4), &img(s, 0.4)).unwrap(), f64::INFINITY);
        // MSE = 0.01
        assert!((psnr(&img(s, 0.4), &img(s, 0.5)).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&img(s, 0.0), &img(s, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn ssim_examples() {
        let s = Shape::new(16, 16, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = random(s, &mut rng);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let inv = ImageTensor::new(s, a.data().iter().map(|v| 1.0 - v).collect()).unwrap();
        assert!(ssim(&a, &inv).unwrap() < 1.0);
    }

    #[test]
    fn aggregate_counting() {
        let s = Shape::new(8, 8, 1).unwrap();
        let a = img(s, 0.5);
        let ok = SampleMetrics::measure(&a, &img(s, 0.505), true, 10, &DEFAULT_THRESHOLDS).unwrap();
        let summary = aggregate(&[ok.clone()], &DEFAULT_THRESHOLDS).unwrap();
        assert!(summary.rows.iter().all(|r| r.asr == 1.0));

        let partial = SampleMetrics::measure(&a, &img(s, 0.58), true, 30, &DEFAULT_THRESHOLDS).unwrap();
        let fail = SampleMetrics::failed(40, &DEFAULT_THRESHOLDS);
        let summary = aggregate(&[partial, fail], &DEFAULT_THRESHOLDS).unwrap();
        assert_eq!(summary.rows[0].asr, 0.5);
        assert_eq!(summary.rows[1].asr, 0.0);
        assert_eq!(summary.rows[0].mean_queries, 35.0);
        assert_eq!(summary.rows[0].median_queries, 35.0);
        assert!(summary.rows[1].mean_l2.is_nan());
        assert!(aggregate(&[], &DEFAULT_THRESHOLDS).is_err());
    }

    #[test]
    fn non_adversarial_never_succeeds() {
        let s = Shape::new(8, 8, 1).unwrap();
        let m = SampleMetrics::measure(&img(s, 0.5), &img(s, 0.5), false, 1, &DEFAULT_THRESHOLDS).unwrap();
        assert!(m.success_at.iter().all(|o| !o.success));
    }

    #[test]
    fn non_finite_values_roundtrip_through_json() {
        let s = Shape::new(8, 8, 1).unwrap();
        let m = SampleMetrics::measure(&img(s, 0.5), &img(s, 0.5), true, 1, &DEFAULT_THRESHOLDS).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"psnr\":\"inf\""));
        let back: SampleMetrics = serde_json::from_str(&text).unwrap();
        assert_eq!(back.psnr, f64::INFINITY);

        let failed = SampleMetrics::failed(3, &DEFAULT_THRESHOLDS);
        let back: SampleMetrics = serde_json::from_str(&serde_json::to_string(&failed).unwrap()).unwrap();
        assert!(back.rmse.is_nan() && back.psnr.is_nan());
        assert_eq!(back.queries, 3);
    }

    #[test]
    fn csv_layout() {
        let s = Shape::new(8, 8, 1).unwrap();
        let m = SampleMetrics::measure(&img(s, 0.5), &img(s, 0.52), true, 7, &DEFAULT_THRESHOLDS).unwrap();
        let csv = aggregate(&[m], &DEFAULT_THRESHOLDS).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "threshold,asr,mean_queries,median_queries,mean_l2");
        assert!(lines[1].starts_with("0.1,1,7,7,"));
        assert!(lines[3].starts_with("0.01,0,7,7,NaN"));
    }
}
