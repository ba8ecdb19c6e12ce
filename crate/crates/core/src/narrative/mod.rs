//! Video understanding from frame captions, narrative outline extraction,
//! gap marking and fill suggestions.

mod captions;
mod fills;
mod outline;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genai::GenAiError;

pub use captions::{caption_sample_indices, describe_video, CaptionSampler};
pub use fills::{
    athlete_for, career_prompt, contextual_subject_text, contextual_subjects, freeze_subject,
    gap_context_text, identify_gaps, propose_fills, FillContext,
    FillSuggestion, GENERIC_REACTION_SUBJECT,
};
pub use outline::{build_understanding, extract_narrative, parse_outline, parse_understanding};

#[derive(Debug, Error)]
pub enum NarrativeError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("{} of {} captions failed: {}", failures.len(), failures.len() + partial.len(), failures.first().map(|f| f.1.as_str()).unwrap_or(""))]
    CaptionServiceError {
        partial: Vec<Caption>,
        failures: Vec<(u64, String)>,
    },
    #[error(transparent)]
    LlmServiceError(GenAiError),
    #[error("unparseable {what} response: {detail}")]
    UnparseableResponse { what: &'static str, detail: String },
    #[error("frame {index} unavailable: {detail}")]
    FrameUnavailable { index: u64, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionSource {
    CaptionService,
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub frame_index: u64,
    pub text: String,
    pub source: CaptionSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityRole {
    Athlete,
    Teammate,
    Coach,
    Spectator,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entity {
    pub name: String,
    pub role: EntityRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoUnderstanding {
    pub summary: String,
    pub sport: String,
    pub entities: Vec<Entity>,
}

impl VideoUnderstanding {
    pub fn athlete(&self) -> Option<&str> {
        self.entities
            .iter()
            .find(|e| e.role == EntityRole::Athlete)
            .map(|e| e.name.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NarrativeRole {
    Opening,
    Conflict,
    Climax,
    Conclusion,
}

impl NarrativeRole {
    pub const ALL: [NarrativeRole; 4] = [
        NarrativeRole::Opening,
        NarrativeRole::Conflict,
        NarrativeRole::Climax,
        NarrativeRole::Conclusion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NarrativeRole::Opening => "opening",
            NarrativeRole::Conflict => "conflict",
            NarrativeRole::Climax => "climax",
            NarrativeRole::Conclusion => "conclusion",
        }
    }

    /// B-roll kind that fills a missing element of this role.
    pub fn fill_kind(self) -> BRollKind {
        match self {
            NarrativeRole::Opening => BRollKind::T2,
            NarrativeRole::Climax => BRollKind::T1,
            NarrativeRole::Conflict | NarrativeRole::Conclusion => BRollKind::T3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementStatus {
    Covered,
    Missing,
}

/// Freeze-frame moment, athletic career showcase, contextual information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BRollKind {
    T1,
    T2,
    T3,
}

impl BRollKind {
    pub const ALL: [BRollKind; 3] = [BRollKind::T1, BRollKind::T2, BRollKind::T3];

    pub fn as_str(self) -> &'static str {
        match self {
            BRollKind::T1 => "T1",
            BRollKind::T2 => "T2",
            BRollKind::T3 => "T3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NarrativeElement {
    pub role: NarrativeRole,
    pub status: ElementStatus,
    /// Seconds on the source timeline.
    pub anchor: [f64; 2],
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativeOutline {
    /// One element per role, in role order.
    pub elements: Vec<NarrativeElement>,
}

impl NarrativeOutline {
    pub fn element(&self, role: NarrativeRole) -> Option<&NarrativeElement> {
        self.elements.iter().find(|e| e.role == role)
    }

    pub fn validate(&self, duration: f64) -> Result<(), String> {
        if self.elements.len() != 4 {
            return Err(format!("expected 4 elements, got {}", self.elements.len()));
        }
        for (el, role) in self.elements.iter().zip(NarrativeRole::ALL) {
            if el.role != role {
                return Err(format!("element {} out of order or duplicated", el.role.as_str()));
            }
            let [s, e] = el.anchor;
            if !(0.0 <= s && s <= e && e <= duration) {
                return Err(format!("{} anchor [{s}, {e}] outside [0, {duration}]", role.as_str()));
            }
        }
        Ok(())
    }

    pub fn missing_count(&self) -> usize {
        self.elements
            .iter()
            .filter(|e| e.status == ElementStatus::Missing)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativeGap {
    pub role: NarrativeRole,
    pub anchor: [f64; 2],
    pub suggested_kind: BRollKind,
    /// The outline's note for the missing element.
    #[serde(default)]
    pub note: String,
}

impl NarrativeGap {
    pub fn duration(&self) -> f64 {
        (self.anchor[1] - self.anchor[0]).max(0.0)
    }
}
