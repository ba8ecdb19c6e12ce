//! Highlight scoring: handcrafted per-sample features, non-local
//! aggregation, a linear readout, sentiment tagging and span selection.

mod features;
mod nonlocal;
mod plugin;
mod scoring;

use thiserror::Error;

pub use features::{frame_features, FeatureMatrix, FEATURE_DIM, FEATURE_NAMES};
pub use nonlocal::{aggregate_logits, attention_weights, nonlocal_aggregate, NonLocalParams};
pub use plugin::{score_via_plugin, PluginScore, ScorerEndpoint, ScorerPlugin, DEFAULT_PLUGIN_TIMEOUT};
pub use scoring::{
    classify_sentiment, median, score_segment, score_trends, select_highlights, HighlightSpan,
    Readout, ScoredShot, SelectionMode, Sentiment,
};

#[derive(Debug, Error)]
pub enum HighlightError {
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no input to score")]
    EmptyInput,
    #[error("scorer plugin timed out after {0:?}")]
    PluginTimeout(std::time::Duration),
    #[error("scorer plugin protocol error: {0}")]
    PluginProtocolError(String),
}
