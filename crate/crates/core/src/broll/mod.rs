//! Manga B-roll stills: freeze-frame moments (T1), career showcases (T2)
//! and contextual reaction shots (T3), with provenance and on-disk storage.

mod compose;
mod store;

pub(crate) use store::write_atomic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genai::GenAiError;
use crate::narrative::NarrativeGap;
use crate::Frame;

pub use crate::narrative::BRollKind;
pub use compose::{
    key_frame_order, make_career_showcase, make_contextual, make_freeze_frame, make_freeze_frames,
    select_key_frame, ContextualBatch, FreezeRequest, DEFAULT_CONTEXTUAL_COUNT,
};
pub use store::AssetStore;

#[derive(Debug, Error)]
pub enum BRollError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Service(#[from] GenAiError),
    #[error("reference frame {index} unavailable: {detail}")]
    FrameUnavailable { index: u64, detail: String },
    #[error("asset {0} not found")]
    MissingAsset(String),
    #[error("asset store: {0}")]
    Store(String),
}

/// Provenance and placement data kept in the sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetMeta {
    pub id: String,
    pub kind: BRollKind,
    pub caption: String,
    /// Exact outgoing prompt.
    pub prompt_text: String,
    pub source_frame: Option<u64>,
    pub gap_hint: Option<NarrativeGap>,
    /// Generated without a reference image, so character likeness is not
    /// guaranteed.
    pub needs_review: bool,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BRollAsset {
    pub meta: AssetMeta,
    pub image: Frame,
    /// Encoded image as returned by the service.
    pub png: Vec<u8>,
}

/// Digest over kind, prompt and source frame.
pub fn asset_id(kind: BRollKind, prompt_text: &str, source_frame: Option<u64>) -> String {
    let frame = source_frame.map_or_else(|| "-".to_owned(), |f| f.to_string());
    crate::sha256_hex(format!("{}\n{}\n{}", kind.as_str(), frame, prompt_text).as_bytes())
}

impl BRollAsset {
    pub(crate) fn from_generated(
        kind: BRollKind,
        generated: crate::genai::GeneratedImage,
        caption: String,
        source_frame: Option<u64>,
        gap_hint: Option<NarrativeGap>,
    ) -> Self {
        let meta = AssetMeta {
            id: asset_id(kind, &generated.prompt, source_frame),
            kind,
            caption,
            prompt_text: generated.prompt,
            source_frame,
            gap_hint,
            needs_review: kind != BRollKind::T1,
            width: generated.image.width(),
            height: generated.image.height(),
        };
        Self {
            meta,
            image: generated.image,
            png: generated.png,
        }
    }

    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn kind(&self) -> BRollKind {
        self.meta.kind
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_depends_on_every_input() {
        let a = asset_id(BRollKind::T1, "p", Some(3));
        assert_eq!(a, asset_id(BRollKind::T1, "p", Some(3)));
        assert_ne!(a, asset_id(BRollKind::T2, "p", Some(3)));
        assert_ne!(a, asset_id(BRollKind::T1, "p ", Some(3)));
        assert_ne!(a, asset_id(BRollKind::T1, "p", Some(4)));
        assert_ne!(a, asset_id(BRollKind::T1, "p", None));
    }
}
