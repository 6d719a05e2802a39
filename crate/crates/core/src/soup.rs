//! Attack initialization: momentum-sign iterations on the surrogate, a
//! weighted average ("soup") of selected iterates, and the fallback to a
//! genuine opposite-class image when the soup does not fool the oracle.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::oracles::{query_quantized, Label, Oracle};
use crate::surrogate::SurrogateModel;

/// Weight-sum tolerance for [`make_soup`].
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoupConfig {
    pub momentum_decay: f64,
    pub step_size: f64,
    /// L-infinity radius around the benign image.
    pub epsilon: f64,
    pub total_iterations: usize,
    /// 1-based iteration indices whose iterates enter the soup.
    pub soup_iterations: Vec<usize>,
    /// Per-iterate weights; empty means uniform `1/n`.
    pub weights: Vec<f64>,
    /// Accepted for config compatibility with integrated-gradient variants;
    /// the plain momentum update does not use it.
    pub scaling_factor: f64,
}

impl Default for SoupConfig {
    fn default() -> Self {
        let epsilon = 8.0 / 255.0;
        Self {
            momentum_decay: 0.95,
            step_size: epsilon / 10.0,
            epsilon,
            total_iterations: 10,
            soup_iterations: vec![6, 7, 8, 9, 10],
            weights: Vec::new(),
            scaling_factor: 20.0,
        }
    }
}

impl SoupConfig {
    pub fn resolved_weights(&self) -> Vec<f64> {
        if self.weights.is_empty() {
            let n = self.soup_iterations.len();
            vec![1.0 / n as f64; n]
        } else {
            self.weights.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(0.0..1.0).contains(&self.momentum_decay) {
            return bad("momentum_decay must lie in [0, 1)");
        }
        if !(self.step_size > 0.0) || !(self.epsilon > 0.0) {
            return bad("step_size and epsilon must be positive");
        }
        if self.soup_iterations.is_empty()
            || self
                .soup_iterations
                .iter()
                .any(|&i| i < 1 || i > self.total_iterations)
        {
            return bad("soup_iterations must be a non-empty subset of 1..=total_iterations");
        }
        let w = self.resolved_weights();
        if w.len() != self.soup_iterations.len() {
            return bad("one weight per soup iteration");
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > WEIGHT_SUM_TOL {
            return bad("soup weights must sum to 1");
        }
        Ok(())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One momentum iteration: `g' = mu g + grad / ||grad||_1`, then a signed
/// step of size `eta` projected onto the epsilon box around `x` and `[0, 1]`.
pub fn mig_step(
    model: &SurrogateModel,
    x_adv: &ImageTensor,
    x: &ImageTensor,
    y: Label,
    momentum: &ImageTensor,
    cfg: &SoupConfig,
) -> Result<(ImageTensor, ImageTensor)> {
    x_adv.ensure_same_shape(x)?;
    x_adv.ensure_same_shape(momentum)?;
    let (_, grad) = model.loss_grad(x_adv, y)?;
    let l1: f64 = grad.data().iter().map(|v| v.abs()).sum();
    let inv = if l1 < 1e-12 { 0.0 } else { 1.0 / l1 };
    let g_next = momentum.scaled(cfg.momentum_decay).add_scaled(inv, &grad);

    let mut next = x_adv.clone();
    for ((v, g), x0) in next.data_mut().iter_mut().zip(g_next.data()).zip(x.data()) {
        let stepped = *v + cfg.step_size * sign(*g);
        let lo = (x0 - cfg.epsilon).max(0.0);
        let hi = (x0 + cfg.epsilon).min(1.0);
        *v = stepped.clamp(lo, hi);
    }
    Ok((next, g_next))
}

/// Iterates `x_1 ..= x_T` of the momentum attack started from `x_0 = x`.
pub fn momentum_iterates(
    model: &SurrogateModel,
    x: &ImageTensor,
    y: Label,
    cfg: &SoupConfig,
) -> Result<Vec<ImageTensor>> {
    cfg.validate()?;
    let mut momentum = ImageTensor::zeros(x.shape());
    let mut current = x.clone();
    let mut out = Vec::with_capacity(cfg.total_iterations);
    for _ in 0..cfg.total_iterations {
        let (next, g) = mig_step(model, &current, x, y, &momentum, cfg)?;
        momentum = g;
        current = next;
        out.push(current.clone());
    }
    Ok(out)
}

/// Element-wise weighted average, clamped to `[0, 1]`.
pub fn make_soup(snapshots: &[ImageTensor], weights: &[f64]) -> Result<ImageTensor> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::InvalidArgument("soup needs at least one snapshot".into()))?;
    if weights.len() != snapshots.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} snapshots",
            weights.len(),
            snapshots.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidArgument(format!("soup weights sum to {total}")));
    }
    let mut acc = ImageTensor::zeros(first.shape());
    for (s, &w) in snapshots.iter().zip(weights) {
        s.ensure_same_shape(first)?;
        acc = acc.add_scaled(w, s);
    }
    Ok(acc.clamped())
}

/// Momentum iterates on the surrogate, averaged over the configured iterations.
pub fn build_soup(
    model: &SurrogateModel,
    x: &ImageTensor,
    y: Label,
    cfg: &SoupConfig,
) -> Result<ImageTensor> {
    let iterates = momentum_iterates(model, x, y, cfg)?;
    let picked: Vec<ImageTensor> = cfg
        .soup_iterations
        .iter()
        .map(|&i| iterates[i - 1].clone())
        .collect();
    make_soup(&picked, &cfg.resolved_weights())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Soup,
    Targeted,
}

#[derive(Debug, Clone)]
pub struct Initialization {
    pub init: ImageTensor,
    pub mode: InitMode,
    /// Oracle queries spent choosing the initialization.
    pub queries: u64,
}

/// Probe the soup first (if any), then the target pool in order, and return
/// the first image the oracle labels differently from `y`.
pub fn select_init<O: Oracle + ?Sized>(
    y: Label,
    soup: Option<&ImageTensor>,
    target_pool: &[ImageTensor],
    oracle: &O,
) -> Result<Initialization> {
    let mut queries = 0;
    if let Some(soup) = soup {
        queries += 1;
        if query_quantized(oracle, soup)? != y {
            return Ok(Initialization {
                init: soup.clone(),
                mode: InitMode::Soup,
                queries,
            });
        }
        debug!("soup is not adversarial; falling back to the target pool");
    }
    for candidate in target_pool {
        queries += 1;
        if query_quantized(oracle, candidate)? != y {
            return Ok(Initialization {
                init: candidate.clone(),
                mode: InitMode::Targeted,
                queries,
            });
        }
    }
    Err(Error::InitializationFailed { queries })
}
