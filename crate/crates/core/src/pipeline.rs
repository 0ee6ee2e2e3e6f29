//! End-to-end model: feature extraction, text encoding, fusion, and the
//! explainers wired to a trained parameter set.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusSplit, LabeledReview, Review};
use crate::encoder::{hash_ngrams, ngram_hash, EmbeddingTable, EncoderConfig};
use crate::error::{Error, Result};
use crate::explain::{
    global_importance, lime_explain, shap, Attribution, FeatureModel, GlobalImportance, LimeConfig, ShapConfig,
    WordExplanation,
};
use crate::features::text::{detokenize, normalize, tokenize};
use crate::features::{extract_features, fit_reference, FeatureKind, FeatureVector, Lexicons, Standardizer, FEATURE_COUNT};
use crate::fusion::{
    self, forward, forward_with_query, AttentionConfig, ConfusionCounts, Example, FusionParams, Metrics, MetricsRow,
    Prediction, TextInput, TrainConfig, TrainingHistory, Variant,
};
use crate::scalar::Scalar;

/// Everything needed to train one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub encoder: EncoderConfig,
    pub attention: AttentionConfig,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            variant: Variant::All,
            encoder: EncoderConfig::default(),
            attention: AttentionConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// A trained model together with the preprocessing it was trained with.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TriageModel<T> {
    pub lexicons: Lexicons,
    pub standardizer: Standardizer,
    /// Raw-scale baseline for feature attributions.
    pub reference: FeatureVector,
    pub encoder: EncoderConfig,
    pub params: FusionParams<T>,
    pub history: TrainingHistory,
}

/// Per-request seed derived from a base seed and an instance id.
pub fn instance_seed(seed: u64, id: &str) -> u64 {
    ngram_hash(&[id], seed)
}

fn standardized<T: Scalar>(std: &Standardizer, v: &FeatureVector) -> [T; FEATURE_COUNT] {
    std.apply(v).map(T::lit)
}

impl<T: Scalar> TriageModel<T> {
    pub fn variant(&self) -> Variant {
        self.params.variant
    }

    /// True when text goes through the trainable hashed encoder rather than
    /// an external embedding table.
    pub fn uses_hashed_text(&self) -> bool {
        self.params.embedding.is_some()
    }

    pub fn features(&self, review: &Review) -> FeatureVector {
        extract_features(review, &self.lexicons)
    }

    pub fn standardize(&self, v: &FeatureVector) -> [T; FEATURE_COUNT] {
        standardized(&self.standardizer, v)
    }

    /// Standardized baseline vector used by the feature explainer.
    pub fn baseline(&self) -> [T; FEATURE_COUNT] {
        self.standardize(&self.reference)
    }

    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        let folded = normalize(text);
        hash_ngrams(&tokenize(&folded), &self.encoder)
    }

    /// Text side of a review. External-embedding models look the id up in
    /// `table`.
    pub fn text_input(&self, review: &Review, table: Option<&EmbeddingTable>) -> Result<TextInput<T>> {
        if self.uses_hashed_text() {
            return Ok(TextInput::Hashed(self.encode_text(&review.text)));
        }
        let table = table.ok_or_else(|| Error::invalid("model expects external embeddings but no table was given"))?;
        let v = table
            .get(&review.id)
            .ok_or_else(|| Error::invalid(format!("no embedding for review {:?}", review.id)))?;
        if v.len() != self.params.text_dim {
            return Err(Error::invalid(format!(
                "embedding for {:?} has dimension {}, model expects {}",
                review.id,
                v.len(),
                self.params.text_dim
            )));
        }
        Ok(TextInput::Embedded(v.iter().map(|&x| T::lit(x)).collect()))
    }

    pub fn example(&self, item: &LabeledReview, table: Option<&EmbeddingTable>) -> Result<Example<T>> {
        Ok(Example {
            text: self.text_input(&item.review, table)?,
            features: self.standardize(&self.features(&item.review)),
            label: item.influential,
        })
    }

    pub fn examples(&self, items: &[LabeledReview], table: Option<&EmbeddingTable>) -> Result<Vec<Example<T>>> {
        items.iter().map(|r| self.example(r, table)).collect()
    }

    pub fn predict_with(&self, review: &Review, table: Option<&EmbeddingTable>) -> Result<Prediction<T>> {
        review.validate()?;
        let text = self.text_input(review, table)?;
        Ok(fusion::predict(&text, &self.standardize(&self.features(review)), &self.params))
    }

    pub fn predict(&self, review: &Review) -> Result<Prediction<T>> {
        self.predict_with(review, None)
    }

    /// The model as a function of the standardized features with this
    /// review's text held fixed.
    pub fn feature_model(&self, review: &Review, table: Option<&EmbeddingTable>) -> Result<FixedTextModel<'_, T>> {
        let text = self.text_input(review, table)?;
        let embedding = self.params.text_embedding(&text);
        let query = self.params.query(&embedding);
        Ok(FixedTextModel { params: &self.params, embedding, query })
    }

    /// Shapley attribution of the predicted probability. The kernel sampler
    /// seed is derived from `config.seed` and the review id.
    pub fn explain_features_with(
        &self,
        review: &Review,
        config: &ShapConfig,
        table: Option<&EmbeddingTable>,
    ) -> Result<Attribution<T>> {
        review.validate()?;
        let model = self.feature_model(review, table)?;
        let instance = self.standardize(&self.features(review));
        let cfg = ShapConfig { seed: instance_seed(config.seed, &review.id), ..config.clone() };
        shap(&model, &instance, &self.baseline(), &cfg)
    }

    pub fn explain_features(&self, review: &Review, config: &ShapConfig) -> Result<Attribution<T>> {
        self.explain_features_with(review, config, None)
    }

    /// Word weights for the review text. Perturbed texts are re-encoded with
    /// the length feature recomputed; every other feature stays at the
    /// instance value.
    pub fn explain_words(&self, review: &Review, config: &LimeConfig) -> Result<WordExplanation<T>> {
        review.validate()?;
        if !self.uses_hashed_text() {
            return Err(Error::invalid("word explanations need the hashed text encoder"));
        }
        let tokens = tokenize(&review.text);
        let raw = self.features(review);
        let length = FeatureKind::Length.index();
        let mut features = self.standardize(&raw);
        let cfg = LimeConfig { seed: instance_seed(config.seed, &review.id), ..config.clone() };
        let score = |kept: &[&str]| {
            let text = detokenize(kept);
            let embedding = self.params.text_embedding(&TextInput::Hashed(self.encode_text(&text)));
            features[length] = T::lit(self.standardizer.apply_one(FeatureKind::Length, kept.len() as f64));
            forward(&embedding, &features, &self.params).probability
        };
        lime_explain(&tokens, score, &cfg)
    }

    /// Mean |phi| and the (value, phi) scatter over `reviews`.
    pub fn global_importance(&self, reviews: &[Review], config: &ShapConfig) -> Result<GlobalImportance> {
        let items = reviews
            .iter()
            .map(|r| Ok((self.features(r), self.explain_features(r, config)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(global_importance(&items))
    }

    pub fn evaluate_with(&self, items: &[LabeledReview], table: Option<&EmbeddingTable>) -> Result<Metrics> {
        if items.is_empty() {
            return Err(Error::invalid("cannot evaluate on an empty dataset"));
        }
        Ok(fusion::evaluate(&self.params, &self.examples(items, table)?))
    }

    pub fn evaluate(&self, items: &[LabeledReview]) -> Result<Metrics> {
        self.evaluate_with(items, None)
    }

    /// Converts every weight to another scalar type.
    pub fn cast<U: Scalar>(&self) -> TriageModel<U> {
        TriageModel {
            lexicons: self.lexicons.clone(),
            standardizer: self.standardizer.clone(),
            reference: self.reference,
            encoder: self.encoder.clone(),
            params: self.params.map(|v| U::lit(v.as_f64())),
            history: self.history.clone(),
        }
    }
}

/// Fusion model restricted to the feature pathway for one fixed text.
pub struct FixedTextModel<'a, T> {
    params: &'a FusionParams<T>,
    embedding: Vec<T>,
    query: Vec<T>,
}

impl<T: Scalar> FeatureModel<T> for FixedTextModel<'_, T> {
    fn included(&self) -> Vec<FeatureKind> {
        self.params.variant.included()
    }

    fn predict_features(&self, features: &[T; FEATURE_COUNT]) -> T {
        forward_with_query(&self.embedding, self.query.clone(), features, self.params).probability
    }
}

/// Fits preprocessing on the training split, then trains the fusion model.
/// With `table`, text comes from the external embeddings and the hashed
/// encoder is unused.
pub fn train_model<T: Scalar>(
    split: &CorpusSplit,
    lexicons: Lexicons,
    config: &PipelineConfig,
    table: Option<&EmbeddingTable>,
) -> Result<TriageModel<T>> {
    config.encoder.validate()?;
    config.attention.validate()?;
    config.train.validate()?;
    let raw: Vec<FeatureVector> = split.train.iter().map(|r| extract_features(&r.review, &lexicons)).collect();
    let standardizer = Standardizer::fit(&raw, "train")?;
    let reference = fit_reference(&raw)?;
    let (text_dim, buckets) = match table {
        Some(t) => (t.dim().ok_or_else(|| Error::invalid("embedding table is empty"))?, None),
        None => (config.encoder.embedding_dim, Some(config.encoder.hash_buckets)),
    };
    let params = FusionParams::init(config.variant, text_dim, config.attention, buckets, config.train.seed);
    let mut model = TriageModel {
        lexicons,
        standardizer,
        reference,
        encoder: config.encoder.clone(),
        params,
        history: TrainingHistory::default(),
    };
    let train_set = model.examples(&split.train, table)?;
    let validation = model.examples(&split.validation, table)?;
    let (params, history) = fusion::train(model.params.clone(), &train_set, &validation, &config.train)?;
    model.params = params;
    model.history = history;
    Ok(model)
}

/// Trains all three variants with the same seed and scores each on the test
/// split (validation when the test split is empty).
pub fn compare_variants<T: Scalar>(
    split: &CorpusSplit,
    lexicons: &Lexicons,
    config: &PipelineConfig,
    table: Option<&EmbeddingTable>,
) -> Result<Vec<MetricsRow>> {
    let scored = if split.test.is_empty() { &split.validation } else { &split.test };
    Variant::ALL
        .iter()
        .map(|&variant| {
            let cfg = PipelineConfig { variant, ..config.clone() };
            let model = train_model::<T>(split, lexicons.clone(), &cfg, table)?;
            Ok(MetricsRow { method: variant.name().to_string(), metrics: model.evaluate_with(scored, table)? })
        })
        .collect()
}

/// Scores externally produced predictions, one `id<TAB>0|1` per line,
/// against the labels in `items`. Every item needs a prediction.
pub fn score_predictions(reader: impl BufRead, items: &[LabeledReview]) -> Result<Metrics> {
    let mut predicted = std::collections::HashMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: &str| Error::Parse { line: n + 1, message: message.to_string() };
        let (id, label) = line.split_once('\t').ok_or_else(|| parse_err("expected id<TAB>label"))?;
        let label = match label.trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(parse_err("label must be 0 or 1")),
        };
        predicted.insert(id.to_string(), label);
    }
    let mut counts = ConfusionCounts::default();
    for item in items {
        let p = predicted
            .get(&item.review.id)
            .ok_or_else(|| Error::invalid(format!("no prediction for review {:?}", item.review.id)))?;
        counts.record(*p, item.influential);
    }
    Ok(Metrics::from_counts(counts))
}
