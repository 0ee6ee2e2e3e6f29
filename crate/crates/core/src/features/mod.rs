//! The eleven interpretable reviewer/review features and their extraction.

mod lexicon;
mod standardize;
pub mod text;

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

pub use lexicon::{CompetitorLexicon, Lexicons, SentimentLexicon};
pub use standardize::{fit_reference, Standardizer};
pub use text::{count_emoji, count_tokens, tokenize};

use crate::corpus::Review;

pub const FEATURE_COUNT: usize = 11;

/// Feature identity, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Identity,
    Membership,
    Consumption,
    Rating,
    Length,
    Competitor,
    NegValence,
    PosValence,
    Image,
    Emoji,
    Engagement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Reviewer,
    Review,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; FEATURE_COUNT] = [
        FeatureKind::Identity,
        FeatureKind::Membership,
        FeatureKind::Consumption,
        FeatureKind::Rating,
        FeatureKind::Length,
        FeatureKind::Competitor,
        FeatureKind::NegValence,
        FeatureKind::PosValence,
        FeatureKind::Image,
        FeatureKind::Emoji,
        FeatureKind::Engagement,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Identity => "identity",
            FeatureKind::Membership => "membership",
            FeatureKind::Consumption => "consumption",
            FeatureKind::Rating => "rating",
            FeatureKind::Length => "length",
            FeatureKind::Competitor => "competitor",
            FeatureKind::NegValence => "neg_valence",
            FeatureKind::PosValence => "pos_valence",
            FeatureKind::Image => "image",
            FeatureKind::Emoji => "emoji",
            FeatureKind::Engagement => "engagement",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn is_binary(self) -> bool {
        matches!(self, FeatureKind::Identity | FeatureKind::Membership | FeatureKind::Consumption)
    }

    pub fn group(self) -> FeatureGroup {
        if self.is_binary() {
            FeatureGroup::Reviewer
        } else {
            FeatureGroup::Review
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw feature values in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn as_array(&self) -> &[f64; FEATURE_COUNT] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = (FeatureKind, f64)> + '_ {
        FeatureKind::ALL.into_iter().zip(self.0.iter().copied())
    }
}

impl Index<FeatureKind> for FeatureVector {
    type Output = f64;
    fn index(&self, k: FeatureKind) -> &f64 {
        &self.0[k.index()]
    }
}

impl IndexMut<FeatureKind> for FeatureVector {
    fn index_mut(&mut self, k: FeatureKind) -> &mut f64 {
        &mut self.0[k.index()]
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Maps one review to its raw feature vector.
pub fn extract_features(review: &Review, lexicons: &Lexicons) -> FeatureVector {
    let (pos, neg) = lexicons.sentiment.intensity(&review.text);
    let mut v = FeatureVector::default();
    v[FeatureKind::Identity] = flag(review.identity_disclosed);
    v[FeatureKind::Membership] = flag(review.member);
    v[FeatureKind::Consumption] = flag(review.consumption_verified);
    v[FeatureKind::Rating] = f64::from(review.rating);
    v[FeatureKind::Length] = count_tokens(&review.text) as f64;
    v[FeatureKind::Competitor] = lexicons.competitor.count_mentions(&review.text) as f64;
    v[FeatureKind::NegValence] = neg;
    v[FeatureKind::PosValence] = pos;
    v[FeatureKind::Image] = f64::from(review.image_count);
    v[FeatureKind::Emoji] = count_emoji(&review.text) as f64;
    v[FeatureKind::Engagement] = f64::from(review.reply_count);
    v
}
