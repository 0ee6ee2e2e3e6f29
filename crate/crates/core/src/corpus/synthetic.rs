//! Synthetic review corpora with planted ground truth.
//!
//! Sampling distributions, per review:
//!
//! | field                        | distribution                              |
//! |------------------------------|-------------------------------------------|
//! | identity / member / verified | Bernoulli(0.5)                            |
//! | rating                       | uniform on 1..=5                          |
//! | image_count                  | truncated geometric, p = 0.40, max 12     |
//! | reply_count                  | truncated geometric, p = 0.45, max 10     |
//! | competitor mentions          | truncated geometric, p = 0.75, max 3      |
//! | emoji                        | truncated geometric, p = 0.55, max 6      |
//! | negative lexicon terms       | truncated geometric, p = 0.35, max 8      |
//! | positive lexicon terms       | truncated geometric, p = 0.60, max 5      |
//! | filler tokens                | 3 + truncated geometric, p = 0.08, max 60 |
//!
//! Trigger keyword `w` is inserted with probability
//! `0.25 + 0.25 * |w| / (1 + |w|)`. Feature values are then re-extracted
//! from the assembled text with [`synthetic_lexicons`], standardized over the
//! generated corpus, and combined into the planted logit
//! `intercept + sum_f weight_f * z_f + sum_{triggers present} weight_t`.
//! Labels are Bernoulli(sigmoid(logit)), flipped with `label_noise_rate`;
//! helpful votes are uniform in 4..=20 for positives and 0..=3 otherwise.

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledReview, Review};
use crate::error::{Error, Result};
use crate::features::{
    extract_features, tokenize, CompetitorLexicon, FeatureKind, FeatureVector, Lexicons, SentimentLexicon,
    FEATURE_COUNT,
};
use crate::scalar::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerKeyword {
    pub word: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_reviews: usize,
    /// Logit coefficient per corpus standard deviation of each feature.
    #[serde(default)]
    pub feature_weights: BTreeMap<FeatureKind, f64>,
    #[serde(default)]
    pub trigger_keywords: Vec<TriggerKeyword>,
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub label_noise_rate: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn weight(&self, kind: FeatureKind) -> f64 {
        self.feature_weights.get(&kind).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.label_noise_rate) {
            return Err(Error::invalid(format!(
                "label_noise_rate must be in [0, 0.5), got {}",
                self.label_noise_rate
            )));
        }
        let any_nonzero = self.intercept != 0.0
            || self.feature_weights.values().any(|&w| w != 0.0)
            || self.trigger_keywords.iter().any(|t| t.weight != 0.0);
        if !any_nonzero {
            return Err(Error::invalid("synthetic spec needs at least one nonzero weight"));
        }
        let all_weights = self.feature_weights.values().chain(self.trigger_keywords.iter().map(|t| &t.weight));
        if !self.intercept.is_finite() || all_weights.clone().any(|w| !w.is_finite()) {
            return Err(Error::invalid("synthetic weights must be finite"));
        }
        let reserved = reserved_words();
        for t in &self.trigger_keywords {
            let toks = tokenize(&t.word);
            if toks.len() != 1 || toks[0] != t.word {
                return Err(Error::invalid(format!("trigger {:?} must be exactly one token", t.word)));
            }
            if reserved.iter().any(|r| r.eq_ignore_ascii_case(&t.word)) {
                return Err(Error::invalid(format!(
                    "trigger {:?} collides with the generator vocabulary",
                    t.word
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedLogit {
    pub id: String,
    pub logit: f64,
    /// Label drawn before noise; differs from the stored label when flipped.
    pub clean_label: bool,
}

/// The sidecar written next to a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SyntheticSpec,
    pub feature_center: [f64; FEATURE_COUNT],
    pub feature_scale: [f64; FEATURE_COUNT],
    pub planted_logits: Vec<PlantedLogit>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub reviews: Vec<LabeledReview>,
    pub ground_truth: GroundTruth,
    pub lexicons: Lexicons,
}

const FILLER: &[&str] = &[
    "the", "we", "ordered", "table", "dinner", "restaurant", "dish", "menu", "came", "after", "minutes",
    "price", "place", "friends", "evening", "lunch", "noodles", "rice", "soup", "tea", "chicken", "beef",
    "pork", "fish", "portion", "plate", "sauce", "spicy", "sweet", "salty", "water", "bill", "seat",
    "door", "window", "hall", "floor", "second", "time", "visit", "family", "weekend", "night", "noon",
    "street", "parking", "booked", "waited", "asked", "said", "got", "tried", "also", "again", "then",
    "really", "quite", "very", "just", "only", "our", "they", "it", "was", "were", "had", "this", "that",
    "菜", "店", "点", "桌", "汤", "饭", "面", "茶", "肉", "鱼",
];

const NEGATIVE_TERMS: &[(&str, f64)] = &[
    ("terrible", -3.0),
    ("awful", -2.5),
    ("rude", -2.0),
    ("dirty", -2.0),
    ("slow", -1.5),
    ("overpriced", -1.5),
    ("bland", -1.0),
    ("cold", -1.0),
    ("差", -2.0),
    ("难吃", -2.5),
];

const POSITIVE_TERMS: &[(&str, f64)] = &[
    ("nice", 1.0),
    ("friendly", 1.5),
    ("fresh", 1.0),
    ("tasty", 1.5),
    ("clean", 0.5),
    ("好吃", 2.0),
];

const COMPETITORS: &[&str] = &["KFC", "McDonalds", "PizzaHut", "Starbucks", "海底捞"];

const EMOJI: &[&str] = &["😡", "👎", "😞", "💔", "😤", "🙄", "😠", "🤮"];

fn reserved_words() -> Vec<&'static str> {
    FILLER
        .iter()
        .copied()
        .chain(NEGATIVE_TERMS.iter().map(|t| t.0))
        .chain(POSITIVE_TERMS.iter().map(|t| t.0))
        .chain(COMPETITORS.iter().copied())
        .collect()
}

/// Lexicons matching the generator's vocabulary.
pub fn synthetic_lexicons() -> Lexicons {
    let sentiment = SentimentLexicon::new(
        NEGATIVE_TERMS.iter().chain(POSITIVE_TERMS).map(|&(t, p)| (t.to_string(), p)),
    )
    .expect("built-in sentiment lexicon is valid");
    let competitor = CompetitorLexicon::new(COMPETITORS.iter().copied()).expect("built-in competitor lexicon is valid");
    Lexicons { sentiment, competitor }
}

fn truncated_geometric(rng: &mut ChaCha8Rng, p: f64, max: u32) -> u32 {
    loop {
        let mut k = 0;
        while !rng.random_bool(p) {
            k += 1;
            if k > max {
                break;
            }
        }
        if k <= max {
            return k;
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &'a [&'a str]) -> &'a str {
    items[rng.random_range(0..items.len())]
}

pub fn trigger_insert_probability(weight: f64) -> f64 {
    let a = weight.abs();
    0.25 + 0.25 * a / (1.0 + a)
}

/// Builds a labelled corpus and its ground truth; a pure function of `spec`.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let lexicons = synthetic_lexicons();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let epoch = NaiveDate::from_ymd_opt(2023, 1, 1).expect("valid date");

    let mut reviews = Vec::with_capacity(spec.n_reviews);
    let mut trigger_hits: Vec<f64> = Vec::with_capacity(spec.n_reviews);
    for i in 0..spec.n_reviews {
        let identity_disclosed = rng.random_bool(0.5);
        let member = rng.random_bool(0.5);
        let consumption_verified = rng.random_bool(0.5);
        let rating: u8 = rng.random_range(1..=5);
        let image_count = truncated_geometric(&mut rng, 0.40, 12);
        let reply_count = truncated_geometric(&mut rng, 0.45, 10);
        let n_competitor = truncated_geometric(&mut rng, 0.75, 3);
        let n_emoji = truncated_geometric(&mut rng, 0.55, 6);
        let n_negative = truncated_geometric(&mut rng, 0.35, 8);
        let n_positive = truncated_geometric(&mut rng, 0.60, 5);
        let n_filler = 3 + truncated_geometric(&mut rng, 0.08, 60);

        let mut pieces: Vec<&str> = Vec::new();
        for _ in 0..n_filler {
            pieces.push(pick(&mut rng, FILLER));
        }
        for _ in 0..n_competitor {
            pieces.push(pick(&mut rng, COMPETITORS));
        }
        for _ in 0..n_negative {
            pieces.push(NEGATIVE_TERMS[rng.random_range(0..NEGATIVE_TERMS.len())].0);
        }
        for _ in 0..n_positive {
            pieces.push(POSITIVE_TERMS[rng.random_range(0..POSITIVE_TERMS.len())].0);
        }
        for _ in 0..n_emoji {
            pieces.push(pick(&mut rng, EMOJI));
        }
        let mut trigger_sum = 0.0;
        for t in &spec.trigger_keywords {
            if rng.random_bool(trigger_insert_probability(t.weight)) {
                pieces.push(&t.word);
                trigger_sum += t.weight;
            }
        }
        pieces.shuffle(&mut rng);

        let review = Review {
            id: format!("syn-{i:06}"),
            restaurant_id: format!("rest-{:02}", rng.random_range(0..43)),
            rating,
            text: pieces.join(" "),
            image_count,
            helpful_votes: 0,
            reply_count,
            review_date: epoch + Days::new(rng.random_range(0..365)),
            identity_disclosed,
            member,
            consumption_verified,
        };
        reviews.push(review);
        trigger_hits.push(trigger_sum);
    }

    let features: Vec<FeatureVector> = reviews.iter().map(|r| extract_features(r, &lexicons)).collect();
    let (center, scale) = corpus_moments(&features);

    let mut labeled = Vec::with_capacity(reviews.len());
    let mut planted = Vec::with_capacity(reviews.len());
    for ((mut review, x), trig) in reviews.into_iter().zip(&features).zip(trigger_hits) {
        let mut logit = spec.intercept + trig;
        for kind in FeatureKind::ALL {
            let w = spec.weight(kind);
            if w != 0.0 && scale[kind.index()] > 0.0 {
                logit += w * (x[kind] - center[kind.index()]) / scale[kind.index()];
            }
        }
        let clean_label = rng.random_bool(sigmoid(logit));
        let influential = if spec.label_noise_rate > 0.0 && rng.random_bool(spec.label_noise_rate) {
            !clean_label
        } else {
            clean_label
        };
        review.helpful_votes = if influential { rng.random_range(4..=20) } else { rng.random_range(0..=3) };
        planted.push(PlantedLogit { id: review.id.clone(), logit, clean_label });
        labeled.push(LabeledReview { review, influential });
    }

    Ok(SyntheticCorpus {
        reviews: labeled,
        ground_truth: GroundTruth {
            spec: spec.clone(),
            feature_center: center,
            feature_scale: scale,
            planted_logits: planted,
        },
        lexicons,
    })
}

fn corpus_moments(features: &[FeatureVector]) -> ([f64; FEATURE_COUNT], [f64; FEATURE_COUNT]) {
    let n = features.len().max(1) as f64;
    let mut mean = [0.0; FEATURE_COUNT];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f.0) {
            *m += v / n;
        }
    }
    let mut sd = [0.0; FEATURE_COUNT];
    for f in features {
        for ((s, v), m) in sd.iter_mut().zip(f.0).zip(mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    (mean, sd.map(f64::sqrt))
}
