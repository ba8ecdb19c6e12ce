//! End-to-end analysis of a source video into an editable project, plus
//! the suggestion and render entry points used by the CLI and service.

mod output;
mod run;
mod suggest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::broll::{AssetStore, BRollError};
use crate::genai::{Gateway, GatewayStats};
use crate::highlight::HighlightError;
use crate::media::{Decoder, IngestError};
use crate::narrative::{BRollKind, NarrativeError};
use crate::render::RenderError;
use crate::shots::ShotError;
use crate::timeline::{TimelineError, PROJECT_EXTENSION};

pub use output::{render_project, thumbnail};
pub use run::{moment_text, run};
pub use suggest::{suggest, Suggestion};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Segment,
    Score,
    Narrate,
    Compose,
    Schedule,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::Segment,
        Stage::Score,
        Stage::Narrate,
        Stage::Compose,
        Stage::Schedule,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Segment => "segment",
            Stage::Score => "score",
            Stage::Narrate => "narrate",
            Stage::Compose => "compose",
            Stage::Schedule => "schedule",
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Segment(#[from] ShotError),
    #[error(transparent)]
    Score(#[from] HighlightError),
    #[error(transparent)]
    Narrative(#[from] NarrativeError),
    #[error(transparent)]
    Compose(#[from] BRollError),
    #[error(transparent)]
    Timeline(#[from] TimelineError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("cancelled before {}", .0.as_str())]
    Cancelled(Stage),
    #[error("i/o: {0}")]
    Io(String),
}

/// Coarse grouping used for exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input, configuration, or project state.
    Validation,
    /// An external service, decoder or encoder failed.
    Service,
}

impl PipelineError {
    pub fn class(&self) -> ErrorClass {
        use PipelineError as P;
        match self {
            P::InvalidConfig(_) | P::Precondition(_) | P::Timeline(_) | P::Cancelled(_) => ErrorClass::Validation,
            P::Render(
                RenderError::MissingAsset(_)
                | RenderError::Validation(_)
                | RenderError::EmptyTimeline
                | RenderError::FrameOutOfRange { .. },
            ) => {
                ErrorClass::Validation
            }
            P::Compose(BRollError::MissingAsset(_) | BRollError::Precondition(_)) => ErrorClass::Validation,
            P::Narrative(NarrativeError::Precondition(_)) => ErrorClass::Validation,
            P::Ingest(IngestError::UnreadableSource { .. } | IngestError::RangeOutOfBounds { .. }) => {
                ErrorClass::Validation
            }
            _ => ErrorClass::Service,
        }
    }
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Io(e.to_string())
    }
}

/// External collaborators for a run.
#[derive(Clone)]
pub struct PipelineEnv {
    pub decoder: Arc<dyn Decoder>,
    pub gateway: Arc<Gateway>,
    /// Checked between stages.
    pub cancel: Option<Arc<AtomicBool>>,
    /// Called with the stage about to start and the completed fraction.
    pub progress: Option<Arc<dyn Fn(Stage, f64) + Send + Sync>>,
}

impl PipelineEnv {
    pub fn new(decoder: Arc<dyn Decoder>, gateway: Arc<Gateway>) -> Self {
        Self { decoder, gateway, cancel: None, progress: None }
    }

    fn cancelled(&self) -> bool {
        self.cancel.as_ref().is_some_and(|c| c.load(Ordering::SeqCst))
    }
}

/// On-disk layout of one project: the project file, its report, and the
/// asset directory beside it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    project_path: PathBuf,
}

pub const ASSET_DIR: &str = "assets";

impl Workspace {
    pub fn new(project_path: impl Into<PathBuf>) -> Self {
        Self { project_path: project_path.into() }
    }

    /// `dir/project.mangaroll.json`.
    pub fn in_dir(dir: &Path) -> Self {
        Self::new(dir.join(format!("project{PROJECT_EXTENSION}")))
    }

    pub fn dir(&self) -> &Path {
        self.project_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))
    }

    pub fn project_path(&self) -> &Path {
        &self.project_path
    }

    pub fn report_path(&self) -> PathBuf {
        let name = self.project_path.file_name().and_then(|n| n.to_str()).unwrap_or("project");
        let stem = name.strip_suffix(PROJECT_EXTENSION).unwrap_or(name);
        self.dir().join(format!("{stem}.report.json"))
    }

    pub fn assets(&self) -> AssetStore {
        AssetStore::new(self.dir().join(ASSET_DIR))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub seconds: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub stages: Vec<StageRecord>,
    pub shots_found: usize,
    pub highlights_selected: usize,
    pub manual_highlights: bool,
    pub gaps_found: usize,
    pub assets_generated: BTreeMap<BRollKind, usize>,
    pub assets_inserted: BTreeMap<BRollKind, usize>,
    pub insertions: usize,
    pub warnings: Vec<String>,
    pub seed: u64,
    pub service_calls: GatewayStats,
    pub error: Option<String>,
}

impl PipelineReport {
    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut bytes = serde_json::to_vec_pretty(self).expect("report serializes");
        bytes.push(b'\n');
        Ok(crate::broll::write_atomic(path, &bytes)?)
    }

    fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        tracing::warn!("{msg}");
        self.warnings.push(msg);
    }
}

/// A failed run with everything recorded up to the failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: PipelineError,
    pub report: PipelineReport,
}
