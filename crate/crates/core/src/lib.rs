//! Explainable triage of influential negative reviews.
//!
//! The pipeline extracts eleven interpretable features from each review,
//! encodes its text with a hashed n-gram embedding, fuses both with a
//! text-conditioned attention layer, and explains every prediction with
//! Shapley feature attributions and word-level local surrogates. Explanations
//! feed three tiers of response prompts.
//!
//! Numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` instantiation.

pub mod artifact;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod explain;
pub mod features;
pub mod fusion;
pub mod linalg;
pub mod pipeline;
pub mod respond;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use corpus::{LabeledReview, Review};
pub use features::{FeatureKind, FeatureVector, FEATURE_COUNT};
pub use fusion::{Metrics, TrainConfig, Variant};

pub type ModelParams = fusion::FusionParams<f64>;
pub type ModelParamsF32 = fusion::FusionParams<f32>;
pub type Prediction = fusion::Prediction<f64>;
pub type Attribution = explain::Attribution<f64>;
pub type WordExplanation = explain::WordExplanation<f64>;
pub type TriageModel = pipeline::TriageModel<f64>;
pub type TriageModelF32 = pipeline::TriageModel<f32>;
