use ndarray::Axis;
use serde::{Deserialize, Serialize};

use super::{nonlocal_aggregate, FeatureMatrix, HighlightError, NonLocalParams};
use crate::shots::Shot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sentiment {
    Excitement,
    Tension,
    Disappointment,
    Anger,
}

impl Sentiment {
    pub const ALL: [Sentiment; 4] = [
        Sentiment::Excitement,
        Sentiment::Tension,
        Sentiment::Disappointment,
        Sentiment::Anger,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Excitement => "excitement",
            Sentiment::Tension => "tension",
            Sentiment::Disappointment => "disappointment",
            Sentiment::Anger => "anger",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

/// Linear readout `w . mean_i(y_i) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub w: Vec<f64>,
    pub b: f64,
}

impl Default for Readout {
    /// Motion energy, a quarter of luma variance, and histogram change.
    fn default() -> Self {
        Self {
            w: vec![1.0, 0.0, 0.25, 1.0],
            b: 0.0,
        }
    }
}

pub fn score_segment(
    features: &FeatureMatrix,
    readout: &Readout,
    params: &NonLocalParams,
) -> Result<f64, HighlightError> {
    if readout.w.len() != features.dim() {
        return Err(HighlightError::ShapeMismatch(format!(
            "readout has {} weights for d = {}",
            readout.w.len(),
            features.dim()
        )));
    }
    if readout.w.iter().any(|v| !v.is_finite()) || !readout.b.is_finite() {
        return Err(HighlightError::NonFiniteInput("readout"));
    }
    let y = nonlocal_aggregate(features, params)?;
    let pooled = y
        .view()
        .mean_axis(Axis(0))
        .expect("feature matrices have at least one row");
    let score = pooled.iter().zip(&readout.w).map(|(a, w)| a * w).sum::<f64>() + readout.b;
    if !score.is_finite() {
        return Err(HighlightError::NonFiniteInput("score"));
    }
    Ok(score)
}

/// Median of `values` (mean of the middle pair for even counts).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Score change from the previous shot; the first shot has trend 0.
pub fn score_trends(scores: &[f64]) -> Vec<f64> {
    scores
        .iter()
        .enumerate()
        .map(|(i, s)| if i == 0 { 0.0 } else { s - scores[i - 1] })
        .collect()
}

/// Fallback sentiment table. Motion is "high" only when strictly above the
/// video-wide median of per-shot mean motion energy.
///
/// | motion | trend >= 0 | trend < 0 |
/// |--------|------------|-----------|
/// | high   | excitement | anger |
/// | low    | tension    | disappointment |
pub fn classify_sentiment(features: &FeatureMatrix, motion_median: f64, score_trend: f64) -> Sentiment {
    let motion = features.column(0);
    let mean = motion.iter().sum::<f64>() / motion.len() as f64;
    match (mean > motion_median, score_trend >= 0.0) {
        (true, true) => Sentiment::Excitement,
        (true, false) => Sentiment::Anger,
        (false, true) => Sentiment::Tension,
        (false, false) => Sentiment::Disappointment,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredShot {
    pub shot: Shot,
    pub score: f64,
    pub sentiment: Sentiment,
    /// Set when an external scorer was configured but failed.
    #[serde(default)]
    pub fallback_scored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightSpan {
    pub shot: Shot,
    pub score: f64,
    pub sentiment: Sentiment,
    /// 1 for the highest score.
    pub rank: usize,
    #[serde(default)]
    pub fallback_scored: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SelectionMode {
    TopK { k: usize },
    Threshold { tau: f64 },
}

impl Default for SelectionMode {
    fn default() -> Self {
        SelectionMode::TopK { k: 3 }
    }
}

/// Picks highlight shots. Returned spans are in timeline order; ranks
/// follow descending score with earlier shots winning ties.
pub fn select_highlights(scored: &[ScoredShot], mode: SelectionMode) -> Result<Vec<HighlightSpan>, HighlightError> {
    if scored.is_empty() {
        return Err(HighlightError::EmptyInput);
    }
    let mut by_score: Vec<&ScoredShot> = scored.iter().collect();
    by_score.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.shot.start.cmp(&b.shot.start)));
    let chosen: Vec<&ScoredShot> = match mode {
        SelectionMode::TopK { k } => by_score.into_iter().take(k).collect(),
        SelectionMode::Threshold { tau } => by_score.into_iter().filter(|s| s.score >= tau).collect(),
    };
    let mut spans: Vec<HighlightSpan> = chosen
        .into_iter()
        .enumerate()
        .map(|(i, s)| HighlightSpan {
            shot: s.shot,
            score: s.score,
            sentiment: s.sentiment,
            rank: i + 1,
            fallback_scored: s.fallback_scored,
        })
        .collect();
    spans.sort_by_key(|s| s.shot.start);
    Ok(spans)
}
