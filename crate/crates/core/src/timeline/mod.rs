//! Four-track timeline model: A-roll source clips plus one track per
//! B-roll kind, gap scheduling, validated edits and project files.

mod config;
mod edit;
mod persist;
mod schedule;
mod validate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::broll::AssetMeta;
use crate::highlight::HighlightSpan;
use crate::media::{MediaInfo, Rational};
use crate::narrative::{
    BRollKind, Caption, FillSuggestion, NarrativeGap, NarrativeOutline, VideoUnderstanding,
};
use crate::shots::Shot;

pub use config::{AnalysisConfig, KeypointMode, PipelineConfig, SuggestionLevel};
pub use edit::{apply_edit, EditOp, TransitionSide};
pub use persist::{
    canonical_bytes, canonical_value, load_project, project_from_bytes, save_project,
    PROJECT_EXTENSION,
};
pub use schedule::{
    allocate_durations, assign_assets_to_gaps, gap_insert_frame, insert_broll, GapAssignment,
};
pub use validate::{transition_windows, validate_project, TransitionWindow, Violation, WindowSide};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TimelineError {
    #[error("no clip with id {0}")]
    UnknownClip(String),
    #[error("invariant violated ({which}): {detail}")]
    InvariantViolation { which: Violation, detail: String },
    #[error("gap anchor {0:?} does not map into the A-roll")]
    AnchorOutsideCoverage([f64; 2]),
    #[error("budget of {budget} frames cannot hold {k} stills")]
    BudgetTooSmall { budget: u64, k: usize },
    #[error("project schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    SchemaVersionMismatch { found: u64 },
    #[error("project file is invalid ({which}): {detail}")]
    ValidationFailed { which: Violation, detail: String },
    #[error("project file cannot be parsed: {0}")]
    Parse(String),
    #[error("project file I/O: {0}")]
    Io(#[from] std::io::Error),
}

impl TimelineError {
    /// Machine-readable violation name, when the error is one.
    pub fn violation(&self) -> Option<Violation> {
        match self {
            TimelineError::InvariantViolation { which, .. }
            | TimelineError::ValidationFailed { which, .. } => Some(*which),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Track {
    ARoll,
    T1Track,
    T2Track,
    T3Track,
}

impl Track {
    pub const ALL: [Track; 4] = [Track::ARoll, Track::T1Track, Track::T2Track, Track::T3Track];

    pub fn for_kind(kind: BRollKind) -> Track {
        match kind {
            BRollKind::T1 => Track::T1Track,
            BRollKind::T2 => Track::T2Track,
            BRollKind::T3 => Track::T3Track,
        }
    }

    pub fn kind(self) -> Option<BRollKind> {
        match self {
            Track::ARoll => None,
            Track::T1Track => Some(BRollKind::T1),
            Track::T2Track => Some(BRollKind::T2),
            Track::T3Track => Some(BRollKind::T3),
        }
    }

    pub fn is_broll(self) -> bool {
        self != Track::ARoll
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    Cut,
    CrossFade,
    Wipe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub kind: TransitionKind,
    /// Frames.
    pub duration: u64,
}

impl Transition {
    pub const CUT: Transition = Transition {
        kind: TransitionKind::Cut,
        duration: 0,
    };

    pub fn cross_fade(duration: u64) -> Self {
        if duration == 0 {
            Self::CUT
        } else {
            Self {
                kind: TransitionKind::CrossFade,
                duration,
            }
        }
    }

    /// Frames of blending this transition produces.
    pub fn effective(self) -> u64 {
        if self.kind == TransitionKind::Cut {
            0
        } else {
            self.duration
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRef {
    pub src_start: u64,
    pub src_len: u64,
    pub speed: Rational,
}

impl SourceRef {
    pub fn src_end(&self) -> u64 {
        self.src_start + self.src_len
    }

    /// Output frames needed to play `src_len` frames at `speed`.
    pub fn natural_out_len(&self) -> u64 {
        crate::round_half_up(self.src_len as f64 * self.speed.den as f64 / self.speed.num as f64).max(1) as u64
    }

    /// Source frame shown at output offset `o`: nearest index, clamped
    /// into the clip's range.
    pub fn source_at(&self, o: u64) -> u64 {
        let off = crate::round_half_up(o as f64 * self.speed.as_f64()).max(0) as u64;
        self.src_start + off.min(self.src_len.saturating_sub(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetRef {
    pub asset_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipPayload {
    SourceRef(SourceRef),
    AssetRef(AssetRef),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clip {
    pub id: String,
    pub track: Track,
    pub out_start: u64,
    pub out_len: u64,
    pub payload: ClipPayload,
    #[serde(default)]
    pub transition_in: Option<Transition>,
    #[serde(default)]
    pub transition_out: Option<Transition>,
}

impl Clip {
    pub fn out_end(&self) -> u64 {
        self.out_start + self.out_len
    }

    pub fn source(&self) -> Option<&SourceRef> {
        match &self.payload {
            ClipPayload::SourceRef(s) => Some(s),
            ClipPayload::AssetRef(_) => None,
        }
    }

    pub fn asset_id(&self) -> Option<&str> {
        match &self.payload {
            ClipPayload::AssetRef(a) => Some(&a.asset_id),
            ClipPayload::SourceRef(_) => None,
        }
    }

    pub fn covers(&self, frame: u64) -> bool {
        self.out_start <= frame && frame < self.out_end()
    }
}

/// A highlight with the sampled frames and motion energies used to pick
/// freeze-frame references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightRecord {
    pub span: HighlightSpan,
    pub samples: Vec<(u64, f64)>,
}

/// Analysis results kept with the project so suggestions can be made
/// without re-running the pipeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NarrativeState {
    pub shots: Vec<Shot>,
    pub highlights: Vec<HighlightRecord>,
    pub captions: Vec<Caption>,
    pub understanding: Option<VideoUnderstanding>,
    pub outline: Option<NarrativeOutline>,
    pub suggestions: Vec<FillSuggestion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineProject {
    pub version: u32,
    pub media: MediaInfo,
    /// Source video path as given at project creation.
    pub source: String,
    /// Asset directory relative to the project file.
    pub asset_dir: String,
    pub clips: Vec<Clip>,
    pub gaps: Vec<NarrativeGap>,
    /// Every generated still, placed or not.
    pub assets: BTreeMap<String, AssetMeta>,
    pub config: PipelineConfig,
    pub seed: u64,
    #[serde(default)]
    pub narrative: NarrativeState,
    pub next_clip_id: u64,
}

impl TimelineProject {
    /// A project holding the whole source as one A-roll clip at the
    /// configured playback speed.
    pub fn new(media: MediaInfo, source: impl Into<String>, config: PipelineConfig) -> Self {
        let speed = config.playback_speed;
        let src = SourceRef {
            src_start: 0,
            src_len: media.frame_count,
            speed,
        };
        let clip = Clip {
            id: "c0".into(),
            track: Track::ARoll,
            out_start: 0,
            out_len: src.natural_out_len(),
            payload: ClipPayload::SourceRef(src),
            transition_in: None,
            transition_out: None,
        };
        Self {
            version: SCHEMA_VERSION,
            media,
            source: source.into(),
            asset_dir: "assets".into(),
            clips: vec![clip],
            gaps: Vec::new(),
            assets: BTreeMap::new(),
            seed: config.seed,
            config,
            narrative: NarrativeState::default(),
            next_clip_id: 1,
        }
    }

    pub fn clip(&self, id: &str) -> Option<&Clip> {
        self.clips.iter().find(|c| c.id == id)
    }

    pub fn clips_on(&self, track: Track) -> impl Iterator<Item = &Clip> {
        self.clips.iter().filter(move |c| c.track == track)
    }

    /// Output length: the end of the last clip on any track.
    pub fn output_len(&self) -> u64 {
        self.clips.iter().map(Clip::out_end).max().unwrap_or(0)
    }

    /// Frames shown by A-roll clips.
    pub fn a_roll_len(&self) -> u64 {
        self.clips_on(Track::ARoll).map(|c| c.out_len).sum()
    }

    /// Sorted list of source frames referenced by A-roll clips, with
    /// multiplicity.
    pub fn a_roll_source_frames(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self
            .clips_on(Track::ARoll)
            .filter_map(Clip::source)
            .flat_map(|s| s.src_start..s.src_end())
            .collect();
        v.sort_unstable();
        v
    }

    pub(crate) fn fresh_clip_id(&mut self) -> String {
        let id = format!("c{}", self.next_clip_id);
        self.next_clip_id += 1;
        id
    }

    /// Sorts clips by track then start, the stored order.
    pub(crate) fn normalize(&mut self) {
        self.clips.sort_by(|a, b| (a.track, a.out_start, &a.id).cmp(&(b.track, b.out_start, &b.id)));
    }

    pub fn register_asset(&mut self, meta: AssetMeta) {
        self.assets.insert(meta.id.clone(), meta);
    }

    pub fn validate(&self) -> Result<(), TimelineError> {
        validate_project(self).map_err(|(which, detail)| TimelineError::InvariantViolation { which, detail })
    }

    pub fn count_placed(&self, kind: BRollKind) -> usize {
        self.clips_on(Track::for_kind(kind)).count()
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn media(frames: u64) -> MediaInfo {
        MediaInfo::new(32, 24, Rational::integer(25), frames).unwrap()
    }

    pub fn project(frames: u64) -> TimelineProject {
        TimelineProject::new(media(frames), "in.mrv", PipelineConfig::default())
    }

    pub fn asset(kind: BRollKind, n: u32) -> AssetMeta {
        let prompt = format!("prompt {n}");
        AssetMeta {
            id: crate::broll::asset_id(kind, &prompt, None),
            kind,
            caption: String::new(),
            prompt_text: prompt,
            source_frame: None,
            gap_hint: None,
            needs_review: false,
            width: 8,
            height: 8,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    #[test]
    fn new_project_is_single_clip() {
        let p = project(250);
        assert_eq!(p.output_len(), 250);
        assert_eq!(p.a_roll_source_frames(), (0..250).collect::<Vec<_>>());
        p.validate().unwrap();
        let half = TimelineProject::new(
            media(100),
            "x",
            PipelineConfig {
                playback_speed: Rational::integer(2),
                ..Default::default()
            },
        );
        assert_eq!(half.output_len(), 50);
    }

    #[test]
    fn source_mapping_at_double_speed() {
        let s = SourceRef { src_start: 0, src_len: 100, speed: Rational::integer(2) };
        let picked: Vec<u64> = (0..s.natural_out_len()).map(|o| s.source_at(o)).collect();
        assert_eq!(picked, (0..50).map(|i| i * 2).collect::<Vec<_>>());
        let slow = SourceRef { src_start: 10, src_len: 3, speed: Rational::new(1, 2).unwrap() };
        assert_eq!(slow.natural_out_len(), 6);
        // 0, 0.5->1, 1, 1.5->2, 2, 2.5->3 clamped to 2
        assert_eq!((0..6).map(|o| slow.source_at(o)).collect::<Vec<_>>(), vec![10, 11, 11, 12, 12, 12]);
    }
}
