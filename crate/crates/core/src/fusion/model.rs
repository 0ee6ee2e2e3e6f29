//! Attention-fusion classifier: a text-derived query attends over feature
//! tokens, the context is concatenated with the text embedding and fed to a
//! logistic head.
//!
//! For an included feature `i` with standardized value `x_i`:
//!
//! ```text
//! q   = e W_Q                     (1 x d_k)
//! k_i = F_i W_K                   (1 x d_k)
//! v_i = x_i (F_i W_V)             (1 x d_v)
//! a   = softmax(q k_i^T / sqrt(d_k))
//! c   = sum_i a_i v_i
//! p   = sigmoid(w_h . [e ; c] + b)
//! ```

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::attention::attention;
use crate::encoder::embed;
use crate::error::{Error, Result};
use crate::features::{FeatureGroup, FeatureKind, FEATURE_COUNT};
use crate::linalg::Matrix;
use crate::scalar::{dot, sigmoid, Scalar};

/// Which interpretable features take part in fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Reviewer,
    Review,
    All,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Reviewer, Variant::Review, Variant::All];

    pub fn includes(self, kind: FeatureKind) -> bool {
        match self {
            Variant::Reviewer => kind.group() == FeatureGroup::Reviewer,
            Variant::Review => kind.group() == FeatureGroup::Review,
            Variant::All => true,
        }
    }

    pub fn included(self) -> Vec<FeatureKind> {
        FeatureKind::ALL.into_iter().filter(|&k| self.includes(k)).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Reviewer => "reviewer",
            Variant::Review => "review",
            Variant::All => "all",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown variant {s:?} (expected reviewer, review or all)")))
    }
}

/// Widths of the feature tokens and attention projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttentionConfig {
    pub feature_dim: usize,
    pub key_dim: usize,
    pub value_dim: usize,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig { feature_dim: 8, key_dim: 16, value_dim: 16 }
    }
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.key_dim == 0 || self.value_dim == 0 {
            return Err(Error::invalid("attention widths must be at least 1"));
        }
        Ok(())
    }
}

/// Text side of one example: hashed n-gram buckets looked up in the
/// trainable table, or a fixed externally supplied embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextInput<T> {
    Hashed(Vec<usize>),
    Embedded(Vec<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FusionParams<T> {
    pub variant: Variant,
    pub text_dim: usize,
    pub attention: AttentionConfig,
    /// `11 x feature_dim`.
    pub feature_tokens: Matrix<T>,
    /// `text_dim x key_dim`.
    pub w_query: Matrix<T>,
    /// `feature_dim x key_dim`.
    pub w_key: Matrix<T>,
    /// `feature_dim x value_dim`.
    pub w_value: Matrix<T>,
    /// `text_dim + value_dim`.
    pub head: Vec<T>,
    pub bias: T,
    /// `hash_buckets x text_dim`; absent when text comes from an external table.
    pub embedding: Option<Matrix<T>>,
}

impl<T: Scalar> FusionParams<T> {
    pub fn zeros(variant: Variant, text_dim: usize, attention: AttentionConfig, hash_buckets: Option<usize>) -> Self {
        let AttentionConfig { feature_dim, key_dim, value_dim } = attention;
        FusionParams {
            variant,
            text_dim,
            attention,
            feature_tokens: Matrix::zeros(FEATURE_COUNT, feature_dim),
            w_query: Matrix::zeros(text_dim, key_dim),
            w_key: Matrix::zeros(feature_dim, key_dim),
            w_value: Matrix::zeros(feature_dim, value_dim),
            head: vec![T::zero(); text_dim + value_dim],
            bias: T::zero(),
            embedding: hash_buckets.map(|b| Matrix::zeros(b, text_dim)),
        }
    }

    /// Gaussian initialisation: projections with std `1/sqrt(fan_in)`,
    /// feature tokens with std 1, the embedding table with std 0.1, and a
    /// zero head.
    pub fn init(
        variant: Variant,
        text_dim: usize,
        attention: AttentionConfig,
        hash_buckets: Option<usize>,
        seed: u64,
    ) -> Self {
        let mut p = Self::zeros(variant, text_dim, attention, hash_buckets);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |m: &mut Matrix<T>, std: f64| {
            let normal = Normal::new(0.0, std).expect("positive std");
            for v in m.as_mut_slice() {
                *v = T::lit(normal.sample(&mut rng));
            }
        };
        fill(&mut p.feature_tokens, 1.0);
        fill(&mut p.w_query, 1.0 / (text_dim as f64).sqrt());
        fill(&mut p.w_key, 1.0 / (attention.feature_dim as f64).sqrt());
        fill(&mut p.w_value, 1.0 / (attention.feature_dim as f64).sqrt());
        if let Some(e) = p.embedding.as_mut() {
            fill(e, 0.1);
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.attention;
        a.validate()?;
        let shapes = [
            (&self.feature_tokens, FEATURE_COUNT, a.feature_dim, "feature_tokens"),
            (&self.w_query, self.text_dim, a.key_dim, "w_query"),
            (&self.w_key, a.feature_dim, a.key_dim, "w_key"),
            (&self.w_value, a.feature_dim, a.value_dim, "w_value"),
        ];
        for (m, r, c, name) in shapes {
            if m.rows() != r || m.cols() != c {
                return Err(Error::invalid(format!("{name} is {}x{}, expected {r}x{c}", m.rows(), m.cols())));
            }
            if !m.is_finite() {
                return Err(Error::invalid(format!("{name} has non-finite entries")));
            }
        }
        if self.head.len() != self.text_dim + a.value_dim {
            return Err(Error::invalid("head width does not match text_dim + value_dim"));
        }
        if !self.bias.is_finite() || self.head.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("head has non-finite entries"));
        }
        if let Some(e) = &self.embedding {
            if e.cols() != self.text_dim || !e.is_finite() {
                return Err(Error::invalid("embedding table shape or values invalid"));
            }
        }
        Ok(())
    }

    /// Resolves the text side to a `text_dim` vector. Hashed input without a
    /// table resolves to zeros.
    pub fn text_embedding(&self, text: &TextInput<T>) -> Vec<T> {
        match (text, &self.embedding) {
            (TextInput::Hashed(idx), Some(table)) => embed(idx, table),
            (TextInput::Hashed(_), None) => vec![T::zero(); self.text_dim],
            (TextInput::Embedded(v), _) => v.clone(),
        }
    }

    /// Query vector for a text embedding; independent of feature values.
    pub fn query(&self, embedding: &[T]) -> Vec<T> {
        self.w_query.vec_mul(embedding)
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U + Copy) -> FusionParams<U> {
        FusionParams {
            variant: self.variant,
            text_dim: self.text_dim,
            attention: self.attention,
            feature_tokens: self.feature_tokens.map(f),
            w_query: self.w_query.map(f),
            w_key: self.w_key.map(f),
            w_value: self.w_value.map(f),
            head: self.head.iter().map(|&v| f(v)).collect(),
            bias: f(self.bias),
            embedding: self.embedding.as_ref().map(|m| m.map(f)),
        }
    }
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub embedding: Vec<T>,
    pub query: Vec<T>,
    pub included: Vec<FeatureKind>,
    pub features: [T; FEATURE_COUNT],
    pub keys: Matrix<T>,
    /// `F_i W_V` before scaling by the feature value.
    pub raw_values: Matrix<T>,
    pub values: Matrix<T>,
    pub weights: Vec<T>,
    pub context: Vec<T>,
    pub logit: T,
    pub probability: T,
}

impl<T: Scalar> Forward<T> {
    /// Attention weights in canonical order; excluded features are zero.
    pub fn attention_weights(&self) -> [T; FEATURE_COUNT] {
        let mut out = [T::zero(); FEATURE_COUNT];
        for (k, &w) in self.included.iter().zip(&self.weights) {
            out[k.index()] = w;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Prediction<T> {
    pub probability: T,
    pub label: bool,
    pub attention_weights: [T; FEATURE_COUNT],
}

impl<T: Scalar> From<&Forward<T>> for Prediction<T> {
    fn from(f: &Forward<T>) -> Self {
        Prediction {
            probability: f.probability,
            label: f.probability >= T::lit(0.5),
            attention_weights: f.attention_weights(),
        }
    }
}

/// Forward pass with an already resolved text embedding.
pub fn forward<T: Scalar>(embedding: &[T], features: &[T; FEATURE_COUNT], params: &FusionParams<T>) -> Forward<T> {
    let query = params.query(embedding);
    forward_with_query(embedding, query, features, params)
}

pub(crate) fn forward_with_query<T: Scalar>(
    embedding: &[T],
    query: Vec<T>,
    features: &[T; FEATURE_COUNT],
    params: &FusionParams<T>,
) -> Forward<T> {
    let included = params.variant.included();
    let m = included.len();
    let a = params.attention;
    let keys = Matrix::from_fn(m, a.key_dim, |r, c| {
        let tok = params.feature_tokens.row(included[r].index());
        (0..a.feature_dim).fold(T::zero(), |acc, j| acc + tok[j] * params.w_key.get(j, c))
    });
    let raw_values = Matrix::from_fn(m, a.value_dim, |r, c| {
        let tok = params.feature_tokens.row(included[r].index());
        (0..a.feature_dim).fold(T::zero(), |acc, j| acc + tok[j] * params.w_value.get(j, c))
    });
    let values = Matrix::from_fn(m, a.value_dim, |r, c| features[included[r].index()] * raw_values.get(r, c));
    let att = attention(&query, &keys, &values).expect("every variant includes at least one feature");
    let d = params.text_dim;
    let logit = dot(&params.head[..d], embedding) + dot(&params.head[d..], &att.context) + params.bias;
    Forward {
        embedding: embedding.to_vec(),
        query,
        included,
        features: *features,
        keys,
        raw_values,
        values,
        weights: att.weights,
        context: att.context,
        logit,
        probability: sigmoid(logit),
    }
}

pub fn predict<T: Scalar>(text: &TextInput<T>, features: &[T; FEATURE_COUNT], params: &FusionParams<T>) -> Prediction<T> {
    let e = params.text_embedding(text);
    Prediction::from(&forward(&e, features, params))
}

pub const PROBABILITY_CLAMP: f64 = 1e-7;

/// Weighted binary cross-entropy `-[w y ln p + (1 - y) ln(1 - p)]` with `p`
/// clamped to `[1e-7, 1 - 1e-7]`. Returns the loss and `dL/dlogit`.
pub fn loss<T: Scalar>(probability: T, label: bool, positive_weight: T) -> (T, T) {
    if probability.is_nan() {
        return (T::nan(), T::nan());
    }
    let eps = T::lit(PROBABILITY_CLAMP);
    let p = probability.max(eps).min(T::one() - eps);
    if label {
        (-positive_weight * p.ln(), positive_weight * (probability - T::one()))
    } else {
        (-(T::one() - p).ln(), probability)
    }
}

/// Gradients with the same layout as [`FusionParams`]; embedding rows are
/// sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionGrads<T> {
    pub feature_tokens: Matrix<T>,
    pub w_query: Matrix<T>,
    pub w_key: Matrix<T>,
    pub w_value: Matrix<T>,
    pub head: Vec<T>,
    pub bias: T,
    pub embedding_rows: HashMap<usize, Vec<T>>,
}

impl<T: Scalar> FusionGrads<T> {
    pub fn zeros_like(params: &FusionParams<T>) -> Self {
        FusionGrads {
            feature_tokens: Matrix::zeros(params.feature_tokens.rows(), params.feature_tokens.cols()),
            w_query: Matrix::zeros(params.w_query.rows(), params.w_query.cols()),
            w_key: Matrix::zeros(params.w_key.rows(), params.w_key.cols()),
            w_value: Matrix::zeros(params.w_value.rows(), params.w_value.cols()),
            head: vec![T::zero(); params.head.len()],
            bias: T::zero(),
            embedding_rows: HashMap::new(),
        }
    }
}

/// Accumulates `scale * d(logit)/d(params)` into `grads`, given `dlogit`
/// already folded into `scale`.
pub fn backward<T: Scalar>(
    fwd: &Forward<T>,
    text: &TextInput<T>,
    params: &FusionParams<T>,
    dlogit: T,
    grads: &mut FusionGrads<T>,
) {
    let d = params.text_dim;
    let a = params.attention;
    let m = fwd.included.len();

    // head
    for (g, &x) in grads.head[..d].iter_mut().zip(&fwd.embedding) {
        *g += dlogit * x;
    }
    for (g, &x) in grads.head[d..].iter_mut().zip(&fwd.context) {
        *g += dlogit * x;
    }
    grads.bias += dlogit;
    let mut d_embedding: Vec<T> = params.head[..d].iter().map(|&w| dlogit * w).collect();
    let d_context: Vec<T> = params.head[d..].iter().map(|&w| dlogit * w).collect();

    // attention: c = sum a_i v_i
    let d_weights: Vec<T> = (0..m).map(|i| dot(&d_context, fwd.values.row(i))).collect();
    let weighted: T = fwd.weights.iter().zip(&d_weights).fold(T::zero(), |acc, (&w, &g)| acc + w * g);
    let scale = T::from_usize_lossy(a.key_dim).sqrt();
    let mut d_query = vec![T::zero(); a.key_dim];
    for i in 0..m {
        let kind = fwd.included[i];
        let row = kind.index();
        let x = fwd.features[row];
        let d_score = fwd.weights[i] * (d_weights[i] - weighted) / scale;
        // scores: s_i = q . k_i / sqrt(d_k)
        let d_key: Vec<T> = fwd.query.iter().map(|&q| d_score * q).collect();
        for (dq, &k) in d_query.iter_mut().zip(fwd.keys.row(i)) {
            *dq += d_score * k;
        }
        // values: v_i = x_i F_i W_V, weighted by a_i in the context
        let d_value: Vec<T> = d_context.iter().map(|&g| fwd.weights[i] * g).collect();
        let token = params.feature_tokens.row(row).to_vec();
        grads.w_value.add_outer(x, &token, &d_value);
        grads.w_key.add_outer(T::one(), &token, &d_key);
        let from_value = params.w_value.mul_vec(&d_value);
        let from_key = params.w_key.mul_vec(&d_key);
        for (j, g) in grads.feature_tokens.row_mut(row).iter_mut().enumerate() {
            *g += x * from_value[j] + from_key[j];
        }
    }

    // query: q = e W_Q
    grads.w_query.add_outer(T::one(), &fwd.embedding, &d_query);
    for (de, w) in d_embedding.iter_mut().zip(0..d) {
        *de += dot(params.w_query.row(w), &d_query);
    }

    // mean pooling over hashed rows
    if let (TextInput::Hashed(idx), Some(_)) = (text, &params.embedding) {
        if !idx.is_empty() {
            let share = T::one() / T::from_usize_lossy(idx.len());
            for &i in idx {
                let row = grads.embedding_rows.entry(i).or_insert_with(|| vec![T::zero(); d]);
                for (g, &de) in row.iter_mut().zip(&d_embedding) {
                    *g += share * de;
                }
            }
        }
    }
}
