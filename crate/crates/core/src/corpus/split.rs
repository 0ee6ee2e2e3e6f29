use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledReview;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.8, validation: 0.1, test: 0.1 }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, validation, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::invalid(format!("split ratios must be positive, got {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split ratios must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<LabeledReview>,
    pub validation: Vec<LabeledReview>,
    pub test: Vec<LabeledReview>,
    pub seed: u64,
}

/// Largest-remainder allocation of `n` items over the ratios; remainder ties
/// go to the earlier part.
fn allocate(n: usize, ratios: &SplitRatios) -> [usize; 3] {
    let quotas = [ratios.train, ratios.validation, ratios.test].map(|r| r * n as f64);
    let mut counts = quotas.map(|q| (q + 1e-9).floor() as usize);
    let mut left = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - counts[a] as f64;
        let fb = quotas[b] - counts[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Stratified split by label. Each class is shuffled with a seeded ChaCha8
/// stream and allocated by largest remainder; every part keeps the input
/// order of its members.
pub fn split_corpus(corpus: &[LabeledReview], ratios: SplitRatios, seed: u64) -> Result<CorpusSplit> {
    ratios.validate()?;
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..corpus.len()).partition(|&i| corpus[i].influential);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass { positives: pos.len(), negatives: neg.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0u8; corpus.len()];
    for mut class in [pos, neg] {
        class.shuffle(&mut rng);
        let [a, b, _] = allocate(class.len(), &ratios);
        for (k, &idx) in class.iter().enumerate() {
            assignment[idx] = if k < a {
                0
            } else if k < a + b {
                1
            } else {
                2
            };
        }
    }
    let mut parts: [Vec<LabeledReview>; 3] = Default::default();
    for (item, &part) in corpus.iter().zip(&assignment) {
        parts[part as usize].push(item.clone());
    }
    let [train, validation, test] = parts;
    Ok(CorpusSplit { train, validation, test, seed })
}
