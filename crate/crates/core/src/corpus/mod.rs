//! Review records, ingestion from JSON-lines files, labelling and splits.

mod split;
pub mod synthetic;

use std::collections::HashSet;
use std::io::{BufRead, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use split::{split_corpus, CorpusSplit, SplitRatios};
pub use synthetic::{generate_synthetic_corpus, GroundTruth, SyntheticCorpus, SyntheticSpec, TriggerKeyword};

use crate::error::{Error, Result};

/// Reviews with more helpful votes than this are influential.
pub const DEFAULT_INFLUENTIAL_THRESHOLD: u32 = 3;

/// One consumer review. Field names are the on-disk record keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub id: String,
    pub restaurant_id: String,
    pub rating: u8,
    pub text: String,
    pub image_count: u32,
    pub helpful_votes: u32,
    pub reply_count: u32,
    pub review_date: NaiveDate,
    pub identity_disclosed: bool,
    pub member: bool,
    pub consumption_verified: bool,
}

impl Review {
    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.rating) {
            return Err(Error::invalid(format!("rating {} outside 1..=5", self.rating)));
        }
        if self.id.is_empty() {
            return Err(Error::invalid("empty id"));
        }
        Ok(())
    }

    pub fn emoji_in_text(&self) -> usize {
        crate::features::count_emoji(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledReview {
    pub review: Review,
    pub influential: bool,
}

/// A rejected input line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedCorpus {
    pub reviews: Vec<Review>,
    pub errors: Vec<LineError>,
}

/// Reads one JSON record per line. Bad lines are collected, not fatal;
/// only I/O failures abort. Blank lines are ignored.
pub fn parse_corpus(reader: impl BufRead) -> Result<ParsedCorpus> {
    let mut out = ParsedCorpus::default();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let review: Review = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                out.errors.push(LineError { line: n, message: e.to_string() });
                continue;
            }
        };
        if let Err(e) = review.validate() {
            out.errors.push(LineError { line: n, message: e.to_string() });
            continue;
        }
        if !seen.insert(review.id.clone()) {
            out.errors.push(LineError { line: n, message: format!("duplicate id {:?}", review.id) });
            continue;
        }
        out.reviews.push(review);
    }
    Ok(out)
}

pub fn write_corpus<'a>(mut writer: impl Write, reviews: impl IntoIterator<Item = &'a Review>) -> Result<()> {
    for r in reviews {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Strictly more than `threshold` helpful votes.
pub fn label_influential(review: &Review, threshold: u32) -> bool {
    review.helpful_votes > threshold
}

pub fn label_corpus(reviews: Vec<Review>, threshold: u32) -> Vec<LabeledReview> {
    reviews
        .into_iter()
        .map(|review| {
            let influential = label_influential(&review, threshold);
            LabeledReview { review, influential }
        })
        .collect()
}

#[cfg(test)]
pub(crate) fn sample_review(id: &str, votes: u32) -> Review {
    Review {
        id: id.into(),
        restaurant_id: "r-1".into(),
        rating: 2,
        text: "slow service".into(),
        image_count: 0,
        helpful_votes: votes,
        reply_count: 0,
        review_date: NaiveDate::from_ymd_opt(2023, 1, 1).unwrap(),
        identity_disclosed: false,
        member: false,
        consumption_verified: false,
    }
}
