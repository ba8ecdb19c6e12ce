use serde::{Deserialize, Serialize};

use crate::genai::StyleSpec;
use crate::highlight::{ScorerEndpoint, SelectionMode};
use crate::media::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionLevel {
    Off,
    #[default]
    OnDemand,
    Proactive,
}

impl SuggestionLevel {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "off" => Some(Self::Off),
            "on_demand" => Some(Self::OnDemand),
            "proactive" => Some(Self::Proactive),
            _ => None,
        }
    }
}

/// Keypoint check used to confirm cuts.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KeypointMode {
    /// Histogram distance alone decides.
    #[default]
    None,
    /// Built-in corner detector with binary descriptors.
    Corner,
    /// External detector process.
    Subprocess { command: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub hist_threshold: f64,
    pub kp_threshold: f64,
    pub min_shot_len: u64,
    pub keypoints: KeypointMode,
    pub selection: SelectionMode,
    pub captions_per_shot: usize,
    /// External highlight scorer; the built-in scorer is the fallback.
    pub scorer: Option<ScorerEndpoint>,
    /// Seconds on the source timeline. When set, these replace automatic
    /// highlight selection.
    pub manual_highlights: Option<Vec<[f64; 2]>>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            hist_threshold: 0.4,
            kp_threshold: 0.3,
            min_shot_len: 12,
            keypoints: KeypointMode::None,
            selection: SelectionMode::default(),
            captions_per_shot: 3,
            scorer: None,
            manual_highlights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub playback_speed: Rational,
    pub style: StyleSpec,
    pub athlete_name: Option<String>,
    pub stage_count: usize,
    /// Multiplier on stills per highlight (T1) and per gap (T3).
    pub density: usize,
    pub gap_budget_s: f64,
    /// Transition length placed around inserted stills.
    pub transition_s: f64,
    pub suggestion_level: SuggestionLevel,
    pub seed: u64,
    pub analysis: AnalysisConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            playback_speed: Rational::integer(1),
            style: StyleSpec::default(),
            athlete_name: None,
            stage_count: 3,
            density: 1,
            gap_budget_s: 6.0,
            transition_s: 0.4,
            suggestion_level: SuggestionLevel::OnDemand,
            seed: 0,
            analysis: AnalysisConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.playback_speed.num == 0 || self.playback_speed.den == 0 {
            return Err("playback_speed must be positive".into());
        }
        if !(self.gap_budget_s > 0.0 && self.gap_budget_s.is_finite()) {
            return Err("gap_budget_s must be positive".into());
        }
        if !(self.transition_s >= 0.0 && self.transition_s.is_finite()) {
            return Err("transition_s must be non-negative".into());
        }
        if self.density < 1 {
            return Err("density must be at least 1".into());
        }
        if self.stage_count < 1 {
            return Err("stage_count must be at least 1".into());
        }
        if self.athlete_name.as_deref().is_some_and(|n| n.trim().is_empty()) {
            return Err("athlete_name is empty".into());
        }
        self.style.validate().map_err(|e| e.to_string())?;
        let a = &self.analysis;
        if !(0.0..=1.0).contains(&a.hist_threshold) || !(0.0..=1.0).contains(&a.kp_threshold) {
            return Err("thresholds must lie in [0, 1]".into());
        }
        if a.captions_per_shot == 0 {
            return Err("captions_per_shot must be at least 1".into());
        }
        if let Some(spans) = &a.manual_highlights {
            if spans.iter().any(|[s, e]| !(s.is_finite() && e.is_finite() && 0.0 <= *s && s < e)) {
                return Err("manual highlight spans must satisfy 0 <= start < end".into());
            }
        }
        Ok(())
    }

    /// Frames in one gap's time budget.
    pub fn gap_budget_frames(&self, fps: f64) -> u64 {
        crate::round_half_up(self.gap_budget_s * fps).max(1) as u64
    }

    pub fn transition_frames(&self, fps: f64) -> u64 {
        crate::round_half_up(self.transition_s * fps).max(0) as u64
    }
}
