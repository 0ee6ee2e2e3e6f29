//! Shapley values of a coalition game over `d` players.
//!
//! A game is any `FnMut(mask) -> payoff` where bit `j` of `mask` says player
//! `j` is present. Results carry the empty-coalition payoff (base) and the
//! grand-coalition payoff (output).

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{weighted_least_squares, Matrix};
use crate::scalar::Scalar;

pub const MAX_EXACT_PLAYERS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyValues<T> {
    pub base: T,
    pub phi: Vec<T>,
    pub output: T,
}

fn full_mask(d: usize) -> u32 {
    if d == 32 {
        u32::MAX
    } else {
        (1u32 << d) - 1
    }
}

/// `s! (d - s - 1)! / d!` for `s = 0..d`, built as `1 / (d C(d-1, s))`.
fn coalition_weights(d: usize) -> Vec<f64> {
    let mut binom = 1.0f64;
    let mut out = Vec::with_capacity(d);
    for s in 0..d {
        out.push(1.0 / (d as f64 * binom));
        binom = binom * (d - 1 - s) as f64 / (s + 1) as f64;
    }
    out
}

/// Exact Shapley values by full `2^d` enumeration with every payoff
/// evaluated once.
pub fn shapley_exact<T: Scalar>(d: usize, mut value: impl FnMut(u32) -> T) -> Result<ShapleyValues<T>> {
    if d > MAX_EXACT_PLAYERS {
        return Err(Error::TooManyFeatures { features: d, max: MAX_EXACT_PLAYERS });
    }
    let n = 1usize << d;
    let payoffs: Vec<T> = (0..n as u32).map(&mut value).collect();
    let weights: Vec<T> = coalition_weights(d).into_iter().map(T::lit).collect();
    let mut phi = vec![T::zero(); d];
    for mask in 0..n as u32 {
        let size = mask.count_ones() as usize;
        if size == d {
            continue;
        }
        let w = weights[size];
        let v = payoffs[mask as usize];
        for (i, p) in phi.iter_mut().enumerate() {
            let bit = 1u32 << i;
            if mask & bit == 0 {
                *p += w * (payoffs[(mask | bit) as usize] - v);
            }
        }
    }
    Ok(ShapleyValues { base: payoffs[0], phi, output: payoffs[n - 1] })
}

/// Shapley kernel weight `(d - 1) / (C(d, s) s (d - s))` for `0 < s < d`.
pub fn kernel_weight(d: usize, s: usize) -> f64 {
    assert!(s > 0 && s < d, "kernel weight is infinite for empty or full coalitions");
    let mut binom = 1.0f64;
    for k in 0..s.min(d - s) {
        binom = binom * (d - k) as f64 / (k + 1) as f64;
    }
    (d - 1) as f64 / (binom * s as f64 * (d - s) as f64)
}

/// Kernel-regression Shapley estimate.
///
/// Empty and full coalitions enter as the efficiency constraint. With
/// `n_samples >= 2^d - 2` every proper coalition is enumerated once and the
/// result is exact; otherwise coalitions are drawn uniformly (seeded) and
/// weighted by the Shapley kernel.
pub fn shapley_kernel<T: Scalar>(
    d: usize,
    n_samples: usize,
    seed: u64,
    mut value: impl FnMut(u32) -> T,
) -> Result<ShapleyValues<T>> {
    if d == 0 {
        return Err(Error::invalid("kernel Shapley needs at least one feature"));
    }
    if d > 31 {
        return Err(Error::invalid(format!("kernel Shapley supports at most 31 features, got {d}")));
    }
    let full = full_mask(d);
    let base = value(0);
    let output = value(full);
    let delta = output - base;
    if d == 1 {
        return Ok(ShapleyValues { base, phi: vec![delta], output });
    }

    let proper = (1u64 << d) - 2;
    let masks: Vec<u32> = if n_samples as u64 >= proper {
        (1..full).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_samples)
            .map(|_| loop {
                let m = rng.random::<u32>() & full;
                if m != 0 && m != full {
                    break m;
                }
            })
            .collect()
    };

    let mut memo: HashMap<u32, T> = HashMap::new();
    let last = d - 1;
    let mut design = Matrix::zeros(masks.len(), last);
    let mut targets = Vec::with_capacity(masks.len());
    let mut weights = Vec::with_capacity(masks.len());
    for (r, &m) in masks.iter().enumerate() {
        let v = *memo.entry(m).or_insert_with(|| value(m));
        let z_last = if m >> last & 1 == 1 { T::one() } else { T::zero() };
        for j in 0..last {
            let z = if m >> j & 1 == 1 { T::one() } else { T::zero() };
            design.set(r, j, z - z_last);
        }
        targets.push(v - base - z_last * delta);
        weights.push(T::lit(kernel_weight(d, m.count_ones() as usize)));
    }
    let head = weighted_least_squares(&design, &targets, &weights, T::zero()).map_err(|e| match e {
        Error::Singular(msg) => Error::Singular(format!(
            "{msg}; {} sampled coalitions do not identify {d} features, increase n_samples",
            masks.len()
        )),
        other => other,
    })?;
    let rest: T = head.iter().copied().sum();
    let mut phi = head;
    phi.push(delta - rest);
    Ok(ShapleyValues { base, phi, output })
}
