//! Attention-based fusion of interpretable features with a text embedding.

mod attention;
mod metrics;
mod model;
mod train;

pub use attention::{attention, softmax, AttentionOutput};
pub use metrics::{ConfusionCounts, Metrics, MetricsRow, MetricsTable, PUBLISHED_REFERENCE};
pub use model::{
    backward, forward, loss, predict, AttentionConfig, Forward, FusionGrads, FusionParams, Prediction, TextInput,
    Variant, PROBABILITY_CLAMP,
};
pub(crate) use model::forward_with_query;
pub use train::{apply_gradient, batch_gradient, evaluate, train, EpochRecord, Example, TrainConfig, TrainingHistory};
