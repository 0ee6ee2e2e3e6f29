//! Word-level local surrogates.
//!
//! Each perturbation keeps a subset of token positions. The model is scored
//! on the kept tokens, each sample is weighted by
//! `exp(-D^2 / sigma^2)` with `D = 1 - kept / total`, and a ridge-regularised
//! weighted linear model on the keep-masks is fitted (intercept unpenalised).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Defaults to `0.75 * sqrt(token count)`.
    pub kernel_width: Option<f64>,
    pub ridge: f64,
    pub top_k: usize,
    pub seed: u64,
    /// Enumerate every keep-mask when `n_samples` covers them all.
    pub exhaustive: bool,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig { n_samples: 1000, kernel_width: None, ridge: 1e-3, top_k: 6, seed: 0, exhaustive: true }
    }
}

impl LimeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 10 {
            return Err(Error::invalid("LIME needs at least 10 samples"));
        }
        if let Some(w) = self.kernel_width {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::invalid("kernel_width must be positive"));
            }
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::invalid("ridge must be non-negative"));
        }
        Ok(())
    }

    pub fn width_for(&self, tokens: usize) -> f64 {
        self.kernel_width.unwrap_or(0.75 * (tokens as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct WordExplanation<T> {
    pub tokens: Vec<String>,
    pub weights: Vec<T>,
    pub intercept: T,
    pub fidelity_r2: T,
    /// Token positions with the largest `|weight|`, earliest first on ties.
    pub top_k: Vec<usize>,
    /// Set when every perturbation scored the same; weights are then zero.
    pub constant_output: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate<T> {
    pub weights: Vec<T>,
    pub intercept: T,
    pub r2: T,
}

/// Keep-masks: the all-kept mask first, then either every mask (when
/// `exhaustive`, `n_samples >= 2^d` and `d <= 20`) or `n_samples - 1`
/// independent fair-coin masks.
pub fn lime_masks(d: usize, n_samples: usize, seed: u64, exhaustive: bool) -> Vec<Vec<bool>> {
    let mut masks = vec![vec![true; d]];
    if exhaustive && d <= 20 && n_samples >= 1usize << d {
        let full = (1u32 << d) - 1;
        for m in (0..full).rev() {
            masks.push((0..d).map(|j| m >> j & 1 == 1).collect());
        }
        return masks;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 1..n_samples {
        masks.push((0..d).map(|_| rng.random_bool(0.5)).collect());
    }
    masks
}

/// Weighted ridge regression of `targets` on the masks.
pub fn fit_surrogate<T: Scalar>(masks: &[Vec<bool>], targets: &[T], weights: &[T], ridge: T) -> Result<Surrogate<T>> {
    let d = masks.first().map_or(0, Vec::len);
    let total_w: T = weights.iter().copied().sum();
    if !(total_w > T::zero()) {
        return Err(Error::invalid("surrogate weights sum to zero"));
    }
    let as_t = |b: bool| if b { T::one() } else { T::zero() };
    let mut x_mean = vec![T::zero(); d];
    let mut y_mean = T::zero();
    for ((m, &y), &w) in masks.iter().zip(targets).zip(weights) {
        for (xm, &b) in x_mean.iter_mut().zip(m) {
            *xm += w * as_t(b);
        }
        y_mean += w * y;
    }
    x_mean.iter_mut().for_each(|v| *v /= total_w);
    y_mean /= total_w;

    let mut gram = Matrix::zeros(d, d);
    let mut rhs = vec![T::zero(); d];
    let mut centered = vec![T::zero(); d];
    for ((m, &y), &w) in masks.iter().zip(targets).zip(weights) {
        for (c, (&b, &mu)) in centered.iter_mut().zip(m.iter().zip(&x_mean)) {
            *c = as_t(b) - mu;
        }
        gram.add_outer(w, &centered, &centered);
        let yc = y - y_mean;
        for (r, &c) in rhs.iter_mut().zip(&centered) {
            *r += w * c * yc;
        }
    }
    for j in 0..d {
        let v = gram.get(j, j) + ridge;
        gram.set(j, j, v);
    }
    let coef = solve(&gram, &rhs)?;
    let intercept = y_mean - coef.iter().zip(&x_mean).fold(T::zero(), |acc, (&c, &m)| acc + c * m);

    let (mut ss_res, mut ss_tot) = (T::zero(), T::zero());
    for ((m, &y), &w) in masks.iter().zip(targets).zip(weights) {
        let g = m.iter().zip(&coef).fold(intercept, |acc, (&b, &c)| acc + as_t(b) * c);
        ss_res += w * (y - g) * (y - g);
        ss_tot += w * (y - y_mean) * (y - y_mean);
    }
    let r2 = if ss_tot > T::zero() { T::one() - ss_res / ss_tot } else { T::one() };
    Ok(Surrogate { weights: coef, intercept, r2 })
}

fn top_positions<T: Scalar>(weights: &[T], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| {
        weights[b].abs().partial_cmp(&weights[a].abs()).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Explains `score` around `tokens`. The scorer receives the kept tokens in
/// their original order.
pub fn lime_explain<T: Scalar, S: AsRef<str>>(
    tokens: &[S],
    mut score: impl FnMut(&[&str]) -> T,
    config: &LimeConfig,
) -> Result<WordExplanation<T>> {
    config.validate()?;
    let d = tokens.len();
    if d == 0 {
        return Err(Error::invalid("LIME needs at least one token"));
    }
    let tokens: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
    let masks = lime_masks(d, config.n_samples, config.seed, config.exhaustive);
    let width = T::lit(config.width_for(d));
    let mut targets = Vec::with_capacity(masks.len());
    let mut proximity = Vec::with_capacity(masks.len());
    let mut kept: Vec<&str> = Vec::with_capacity(d);
    for m in &masks {
        kept.clear();
        kept.extend(tokens.iter().zip(m).filter(|(_, &b)| b).map(|(t, _)| *t));
        targets.push(score(&kept));
        let dist = T::one() - T::from_usize_lossy(kept.len()) / T::from_usize_lossy(d);
        proximity.push((-(dist * dist) / (width * width)).exp());
    }

    let owned: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
    let lo = targets.iter().copied().fold(T::infinity(), T::min);
    let hi = targets.iter().copied().fold(T::neg_infinity(), T::max);
    if hi - lo <= T::epsilon() * hi.abs().max(T::one()) {
        return Ok(WordExplanation {
            tokens: owned,
            weights: vec![T::zero(); d],
            intercept: targets[0],
            fidelity_r2: T::one(),
            top_k: Vec::new(),
            constant_output: true,
        });
    }
    let fit = fit_surrogate(&masks, &targets, &proximity, T::lit(config.ridge))?;
    let top_k = top_positions(&fit.weights, config.top_k);
    Ok(WordExplanation {
        tokens: owned,
        weights: fit.weights,
        intercept: fit.intercept,
        fidelity_r2: fit.r2,
        top_k,
        constant_output: false,
    })
}
