//! Frequency-domain triangle boundary search.
//!
//! The attack keeps three points in DCT space: the benign spectrum `X`, the
//! current adversarial spectrum `X~_t`, and a candidate. The candidate is
//! placed so that the triangle `(X, X~_t, candidate)` has angle `beta` at `X`
//! and angle `alpha` at the candidate; by the law of sines the candidate sits
//! at distance
//!
//! ```text
//! delta_{t+1} = delta_t * sin(pi - (alpha + |beta|)) / sin(alpha)
//! ```
//!
//! from `X`, which is shorter than `delta_t` exactly when `|beta| + 2 alpha > pi`.
//! Each outer iteration draws a random 2-D plane through `X` containing
//! `X~_t - X` and one direction from the frequency mask, probes both sides
//! of that plane, and binary-searches `beta` for the largest reduction the
//! oracle still accepts. The learned angle `alpha` grows on every accepted
//! probe and shrinks (more slowly) on every rejected one.

use std::f64::consts::{FRAC_PI_2, PI};

use log::{debug, trace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, Spectrum};
use crate::oracles::{query_quantized, Label, Oracle};
use crate::spectral::{dct2, idct2, sample_masked_direction, FrequencyMask};

/// Resampling attempts before a subspace draw is declared degenerate.
pub const SUBSPACE_ATTEMPTS: usize = 16;
/// Minimum residual norm of the orthogonalized random direction.
pub const MIN_RESIDUAL: f64 = 1e-8;
/// Below this starting distance the attack returns immediately.
pub const DEGENERATE_START: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct AttackConfig {
    /// Query budget `Q`, including the initialization check.
    pub max_queries: u64,
    /// Binary-search iterations per sampled subspace.
    pub per_subspace_iterations: usize,
    /// Increment of `alpha` after an accepted probe.
    pub alpha_step: f64,
    /// Decrements are `alpha_shrink_ratio * alpha_step`.
    pub alpha_shrink_ratio: f64,
    /// `alpha` stays within `pi/2 +- alpha_bound_offset`.
    pub alpha_bound_offset: f64,
    /// Lower bound on the search angle.
    pub beta_floor: f64,
    pub mask: FrequencyMask,
    pub rng_seed: u64,
}

impl AttackConfig {
    pub fn new(mask: FrequencyMask) -> Self {
        Self {
            max_queries: 500,
            per_subspace_iterations: 2,
            alpha_step: 0.01,
            alpha_shrink_ratio: 0.05,
            alpha_bound_offset: 0.1,
            beta_floor: PI / 16.0,
            mask,
            rng_seed: 0,
        }
    }

    pub fn with_queries(mut self, q: u64) -> Self {
        self.max_queries = q;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if self.max_queries < 1 {
            return bad("max_queries must be at least 1");
        }
        if self.per_subspace_iterations < 1 {
            return bad("per_subspace_iterations must be at least 1");
        }
        if !(self.alpha_step > 0.0) {
            return bad("alpha_step must be positive");
        }
        if !(self.alpha_shrink_ratio > 0.0 && self.alpha_shrink_ratio < 1.0) {
            return bad("alpha_shrink_ratio must lie in (0, 1)");
        }
        if !(self.alpha_bound_offset > 0.0 && self.alpha_bound_offset < FRAC_PI_2) {
            return bad("alpha_bound_offset must lie in (0, pi/2)");
        }
        if !(self.beta_floor > 0.0 && self.beta_floor < FRAC_PI_2) {
            return bad("beta_floor must lie in (0, pi/2)");
        }
        if self.mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        Ok(())
    }

    pub fn alpha_min(&self) -> f64 {
        FRAC_PI_2 - self.alpha_bound_offset
    }

    pub fn alpha_max(&self) -> f64 {
        FRAC_PI_2 + self.alpha_bound_offset
    }
}

#[derive(Debug, Clone)]
pub struct AttackState {
    pub benign: Spectrum,
    pub adversarial: Spectrum,
    /// Label of the benign sample; a point is adversarial iff its verdict differs.
    pub benign_label: Label,
    /// `||adversarial - benign||_2`, tracked exactly as constructed.
    pub delta: f64,
    pub alpha: f64,
    pub queries_used: u64,
    pub step: u64,
}

impl AttackState {
    pub fn new(benign: Spectrum, adversarial: Spectrum, benign_label: Label) -> Self {
        let delta = adversarial.distance(&benign);
        Self {
            benign,
            adversarial,
            benign_label,
            delta,
            alpha: FRAC_PI_2,
            queries_used: 0,
            step: 0,
        }
    }
}

/// Orthonormal pair spanning the search plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace2D {
    /// Unit vector along `X~_t - X`.
    pub u: Spectrum,
    /// Unit vector orthogonal to `u`, drawn from the mask.
    pub w: Spectrum,
}

/// Side length opposite the angle at `X~_t`, by the law of sines.
pub fn delta_next(delta: f64, alpha: f64, beta: f64) -> Result<f64> {
    let b = beta.abs();
    if !(alpha > 0.0 && alpha < PI) || !(alpha + b > 0.0 && alpha + b < PI) {
        return Err(Error::DegenerateTriangle { alpha, beta });
    }
    Ok(delta * (PI - (alpha + b)).sin() / alpha.sin())
}

pub fn make_subspace<R: rand::Rng + ?Sized>(
    benign: &Spectrum,
    adversarial: &Spectrum,
    mask: &FrequencyMask,
    rng: &mut R,
) -> Result<Subspace2D> {
    benign.ensure_same_shape(adversarial)?;
    mask.ensure_shape(benign.shape())?;
    let diff = adversarial.sub(benign);
    let norm = diff.norm();
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument(
            "adversarial and benign spectra coincide".into(),
        ));
    }
    let u = diff.scaled(1.0 / norm);
    for _ in 0..SUBSPACE_ATTEMPTS {
        let v = sample_masked_direction(mask, benign.shape().channels, rng)?;
        let w = v.add_scaled(-v.dot(&u), &u);
        let residual = w.norm();
        if residual >= MIN_RESIDUAL {
            return Ok(Subspace2D {
                u,
                w: w.scaled(1.0 / residual),
            });
        }
    }
    Err(Error::DegenerateSubspace {
        attempts: SUBSPACE_ATTEMPTS,
    })
}

/// `X + delta_next * (cos(beta) u + sin(beta) w)`; the sign of `beta` picks
/// the side of the `w` axis.
pub fn candidate(
    benign: &Spectrum,
    adversarial: &Spectrum,
    alpha: f64,
    beta: f64,
    subspace: &Subspace2D,
) -> Result<Spectrum> {
    let delta = adversarial.distance(benign);
    let next = delta_next(delta, alpha, beta)?;
    Ok(place(benign, next, beta, subspace))
}

fn place(benign: &Spectrum, radius: f64, beta: f64, s: &Subspace2D) -> Spectrum {
    benign
        .add_scaled(radius * beta.cos(), &s.u)
        .add_scaled(radius * beta.sin(), &s.w)
}

/// Adaptive angle rule: step up on success, step down by a smaller amount on
/// failure, clamped to `[pi/2 - tau, pi/2 + tau]`.
pub fn update_alpha(alpha: f64, success: bool, cfg: &AttackConfig) -> f64 {
    if success {
        (alpha + cfg.alpha_step).min(cfg.alpha_max())
    } else {
        (alpha - cfg.alpha_shrink_ratio * cfg.alpha_step).max(cfg.alpha_min())
    }
}

/// Budget-gated, quantizing query path shared by the search and the driver.
struct Prober<'a, O: Oracle + ?Sized> {
    oracle: &'a O,
    benign_label: Label,
    budget: u64,
}

impl<O: Oracle + ?Sized> Prober<'_, O> {
    /// `None` when the budget is spent; otherwise whether `spec` is adversarial.
    fn probe(&self, state: &mut AttackState, spec: &Spectrum) -> Result<Option<bool>> {
        if state.queries_used >= self.budget {
            return Ok(None);
        }
        let label = query_quantized(self.oracle, &idct2(spec))?;
        state.queries_used += 1;
        Ok(Some(label != self.benign_label))
    }
}

/// One sampled plane of the search: probe both signs of the initial angle,
/// give up if neither is adversarial, otherwise binary-search the angle.
///
/// Returns the updated state and whether an adversarial candidate was
/// accepted. The accepted point is the smallest-distance candidate the oracle
/// labeled adversarial during this call.
pub fn search_subspace<O: Oracle + ?Sized>(
    mut state: AttackState,
    subspace: &Subspace2D,
    oracle: &O,
    cfg: &AttackConfig,
) -> Result<(AttackState, bool)> {
    let prober = Prober {
        oracle,
        benign_label: state.benign_label,
        budget: cfg.max_queries,
    };
    if state.queries_used >= cfg.max_queries {
        return Ok((state, false));
    }
    let delta = state.delta;
    let mut best: Option<(f64, Spectrum)> = None;

    // Probe at (alpha, beta) with the current state; record the candidate if accepted.
    let mut try_angle = |state: &mut AttackState, beta: f64| -> Result<Option<bool>> {
        let alpha = state.alpha;
        let radius = delta_next(delta, alpha, beta)?.min(delta);
        let cand = place(&state.benign, radius, beta, subspace);
        let verdict = prober.probe(state, &cand)?;
        if let Some(ok) = verdict {
            state.alpha = update_alpha(alpha, ok, cfg);
            trace!("probe alpha={alpha:.4} beta={beta:+.4} radius={radius:.5} adversarial={ok}");
            if ok && best.as_ref().map_or(true, |(r, _)| radius < *r) {
                best = Some((radius, cand));
            }
        }
        Ok(verdict)
    };

    let beta0 = (PI - 2.0 * state.alpha).max(cfg.beta_floor);
    let accepted = match try_angle(&mut state, beta0)? {
        None => false,
        Some(true) => true,
        Some(false) => try_angle(&mut state, -beta0)?.unwrap_or(false),
    };

    if accepted {
        let mut lo = beta0;
        let mut hi = FRAC_PI_2.min(PI - state.alpha);
        for _ in 0..cfg.per_subspace_iterations {
            // alpha may have grown since the interval was set; keep alpha + beta < pi.
            hi = hi.min(PI - state.alpha);
            if hi <= lo {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let ok = match try_angle(&mut state, mid)? {
                None => break,
                Some(true) => true,
                Some(false) => match try_angle(&mut state, -mid)? {
                    None => break,
                    Some(ok) => ok,
                },
            };
            if ok {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }

    match best {
        Some((radius, spec)) => {
            state.adversarial = spec;
            state.delta = radius;
            state.step += 1;
            Ok((state, true))
        }
        None => Ok((state, false)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub queries: u64,
    pub delta_l2: f64,
    pub rmse: f64,
    pub alpha: f64,
}

/// Accepted steps of one run. Record 0 is the verified initialization.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttackTrace {
    pub records: Vec<TraceRecord>,
}

impl AttackTrace {
    /// Upper bound on the length of one trace line accepted by [`AttackTrace::from_jsonl`].
    pub const MAX_LINE: usize = 4096;

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace records always serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line.len() > Self::MAX_LINE {
                return Err(Error::Trace(format!("line {} too long", n + 1)));
            }
            let rec: TraceRecord = serde_json::from_str(line)
                .map_err(|e| Error::Trace(format!("line {}: {e}", n + 1)))?;
            records.push(rec);
        }
        Ok(Self { records })
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Queries spent when the tracked RMSE first dropped to `threshold` or below.
    pub fn queries_to_rmse(&self, threshold: f64) -> Option<u64> {
        self.records
            .iter()
            .find(|r| r.rmse <= threshold)
            .map(|r| r.queries)
    }

    pub fn is_monotone(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].delta_l2 <= w[0].delta_l2)
    }
}

#[derive(Debug, Clone)]
pub struct AttackResult {
    /// The last accepted point, decoded, clamped and 8-bit quantized: exactly
    /// the image the oracle labeled adversarial.
    pub adversarial: ImageTensor,
    pub trace: AttackTrace,
    pub queries: u64,
    pub final_state: AttackState,
}

/// Full attack from an adversarial starting image.
///
/// The first query verifies `init` and counts against the budget.
pub fn run_attack<O: Oracle + ?Sized>(
    x: &ImageTensor,
    y: Label,
    init: &ImageTensor,
    oracle: &O,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    cfg.validate()?;
    if x.shape() != init.shape() {
        return Err(Error::ShapeMismatch(format!(
            "benign {} vs init {}",
            x.shape(),
            init.shape()
        )));
    }
    cfg.mask.ensure_shape(x.shape())?;

    let benign = dct2(x);
    let mut state = AttackState::new(benign, dct2(init), y);
    let n = (x.shape().len() as f64).sqrt();
    let record = |s: &AttackState| TraceRecord {
        step: s.step,
        queries: s.queries_used,
        delta_l2: s.delta,
        rmse: s.delta / n,
        alpha: s.alpha,
    };

    let prober = Prober {
        oracle,
        benign_label: y,
        budget: cfg.max_queries,
    };
    let init_spec = state.adversarial.clone();
    if prober.probe(&mut state, &init_spec)? != Some(true) {
        return Err(Error::NotAdversarial);
    }
    let mut trace = AttackTrace {
        records: vec![record(&state)],
    };

    if state.delta >= DEGENERATE_START {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        while state.queries_used < cfg.max_queries {
            let subspace = make_subspace(&state.benign, &state.adversarial, &cfg.mask, &mut rng)?;
            let (next, improved) = search_subspace(state, &subspace, oracle, cfg)?;
            state = next;
            if improved {
                trace.records.push(record(&state));
            }
        }
    }
    debug!(
        "attack finished: {} accepted steps, delta {:.5}, {} queries",
        state.step, state.delta, state.queries_used
    );

    Ok(AttackResult {
        adversarial: idct2(&state.adversarial).quantized(),
        trace,
        queries: state.queries_used,
        final_state: state,
    })
}
