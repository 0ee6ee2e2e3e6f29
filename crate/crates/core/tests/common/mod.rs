#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triage_core::corpus::{SyntheticSpec, TriggerKeyword};
use triage_core::explain::FeatureModel;
use triage_core::fusion::{batch_gradient, AttentionConfig, Example, FusionParams, TextInput};
use triage_core::scalar::sigmoid;
use triage_core::{FeatureKind, Variant, FEATURE_COUNT};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_features(rng: &mut ChaCha8Rng) -> [f64; FEATURE_COUNT] {
    std::array::from_fn(|_| rng.random_range(-2.0..2.0))
}

/// Initialised parameters with a nonzero head, so every group carries
/// gradient.
pub fn random_params(variant: Variant, text_dim: usize, hashed: bool, seed: u64) -> FusionParams<f64> {
    let attention = AttentionConfig { feature_dim: 3, key_dim: 4, value_dim: 5 };
    let mut p = FusionParams::init(variant, text_dim, attention, hashed.then_some(1024), seed);
    let mut r = rng(seed ^ 0x5eed);
    p.head = uniform_vec(&mut r, p.head.len(), 1.0);
    p.bias = r.random_range(-0.5..0.5);
    if let Some(e) = p.embedding.as_mut() {
        for v in e.as_mut_slice() {
            *v *= 5.0;
        }
    }
    p
}

/// Largest relative error per parameter group between the analytic
/// gradient and central differences of the same loss.
pub fn gradient_check(params: &FusionParams<f64>, example: &Example<f64>, weight: f64, step: f64) -> Vec<(String, f64)> {
    let loss_at = |p: &FusionParams<f64>| batch_gradient(p, &[example], weight).0;
    let (_, grads) = batch_gradient(params, &[example], weight);
    let rel = |a: f64, n: f64| (a - n).abs() / (a.abs() + n.abs()).max(1e-8);
    let mut report = Vec::new();

    fn perturb(
        params: &FusionParams<f64>,
        edit: &dyn Fn(&mut FusionParams<f64>, f64),
        step: f64,
        loss_at: &dyn Fn(&FusionParams<f64>) -> f64,
    ) -> f64 {
        let mut plus = params.clone();
        edit(&mut plus, step);
        let mut minus = params.clone();
        edit(&mut minus, -step);
        (loss_at(&plus) - loss_at(&minus)) / (2.0 * step)
    }

    type Access = fn(&mut FusionParams<f64>) -> &mut [f64];
    let groups: [(&str, Access, &[f64]); 5] = [
        ("feature_tokens", |p| p.feature_tokens.as_mut_slice(), grads.feature_tokens.as_slice()),
        ("w_query", |p| p.w_query.as_mut_slice(), grads.w_query.as_slice()),
        ("w_key", |p| p.w_key.as_mut_slice(), grads.w_key.as_slice()),
        ("w_value", |p| p.w_value.as_mut_slice(), grads.w_value.as_slice()),
        ("head", |p| p.head.as_mut_slice(), &grads.head),
    ];
    for (name, access, analytic) in groups {
        let mut worst = 0.0f64;
        for (i, &a) in analytic.iter().enumerate() {
            let n = perturb(params, &|p, h| access(p)[i] += h, step, &loss_at);
            worst = worst.max(rel(a, n));
        }
        report.push((name.to_string(), worst));
    }
    let n = perturb(params, &|p, h| p.bias += h, step, &loss_at);
    report.push(("bias".to_string(), rel(grads.bias, n)));

    if let (TextInput::Hashed(idx), Some(_)) = (&example.text, &params.embedding) {
        let mut worst = 0.0f64;
        let mut rows: Vec<usize> = idx.clone();
        rows.sort_unstable();
        rows.dedup();
        for &row in &rows {
            let analytic = &grads.embedding_rows[&row];
            for (j, &a) in analytic.iter().enumerate() {
                let n = perturb(
                    params,
                    &|p, h| {
                        let e = p.embedding.as_mut().unwrap();
                        let v = e.get(row, j) + h;
                        e.set(row, j, v);
                    },
                    step,
                    &loss_at,
                );
                worst = worst.max(rel(a, n));
            }
        }
        report.push(("embedding".to_string(), worst));
    }
    report
}

/// Shapley values by averaging marginal contributions over all `d!`
/// player orders.
pub fn permutation_shapley(d: usize, value: &dyn Fn(&[bool]) -> f64) -> Vec<f64> {
    fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == items.len() {
            out.push(items.clone());
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permutations(items, k + 1, out);
            items.swap(k, i);
        }
    }
    let mut orders = Vec::new();
    permutations(&mut (0..d).collect(), 0, &mut orders);
    let mut phi = vec![0.0; d];
    for order in &orders {
        let mut present = vec![false; d];
        let mut prev = value(&present);
        for &j in order {
            present[j] = true;
            let now = value(&present);
            phi[j] += now - prev;
            prev = now;
        }
    }
    phi.iter().map(|p| p / orders.len() as f64).collect()
}

/// `sigmoid(w.x + sum_{i<j} u_ij x_i x_j + c)` over the first `d` features.
pub struct InteractionModel {
    pub d: usize,
    pub w: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub c: f64,
}

impl InteractionModel {
    pub fn random(d: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = uniform_vec(rng, d, 1.5);
        let u = (0..d).map(|_| uniform_vec(rng, d, 0.5)).collect();
        InteractionModel { d, w, u, c: rng.random_range(-0.5..0.5) }
    }
}

impl FeatureModel<f64> for InteractionModel {
    fn included(&self) -> Vec<FeatureKind> {
        FeatureKind::ALL[..self.d].to_vec()
    }

    fn predict_features(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        let mut z = self.c;
        for i in 0..self.d {
            z += self.w[i] * x[i];
            for j in i + 1..self.d {
                z += self.u[i][j] * x[i] * x[j];
            }
        }
        sigmoid(z)
    }
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub const TRIGGER: &str = "waiter";

/// Both feature groups carry signal, review-side weights larger; strong
/// enough that the Bayes-optimal F1 is well above 0.9.
pub fn recovery_spec() -> SyntheticSpec {
    use FeatureKind::*;
    SyntheticSpec {
        n_reviews: 10_000,
        feature_weights: [
            (Length, 9.0),
            (NegValence, 7.5),
            (Image, 6.0),
            (Engagement, 4.5),
            (Emoji, 3.0),
            (Rating, -3.0),
            (Competitor, 1.5),
            (Identity, 3.5),
            (Membership, 2.5),
        ]
        .into_iter()
        .collect(),
        trigger_keywords: vec![TriggerKeyword { word: TRIGGER.into(), weight: 3.0 }],
        intercept: -6.0,
        label_noise_rate: 0.0,
        seed: 42,
    }
}

/// Distinct feature-weight magnitudes for the ranking check and a trigger
/// word whose effect does not compete with a recomputed length signal.
pub fn faithfulness_spec() -> SyntheticSpec {
    use FeatureKind::*;
    SyntheticSpec {
        n_reviews: 10_000,
        feature_weights: [
            (NegValence, 2.5),
            (Image, 2.0),
            (Engagement, 1.5),
            (Identity, 1.2),
            (Emoji, 1.0),
            (Rating, -0.8),
            (Membership, 0.6),
            (Competitor, 0.4),
        ]
        .into_iter()
        .collect(),
        trigger_keywords: vec![TriggerKeyword { word: TRIGGER.into(), weight: 3.0 }],
        intercept: -2.0,
        label_noise_rate: 0.0,
        seed: 42,
    }
}
