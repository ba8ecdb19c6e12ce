//! Shot segmentation from HSV histogram differences with a keypoint veto.

mod detect;
mod histogram;
mod keypoints;

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use detect::{detect_boundaries, BoundaryConfig, Segmentation, ShotBoundary};
pub use histogram::{hist_distance, hsv_histogram, rgb_to_hsv, BinLayout, HsvHistogram};
pub use keypoints::{
    keypoint_similarity, CornerDetector, KeypointDetector, NullDetector, SubprocessDetector,
};

#[derive(Debug, Error)]
pub enum ShotError {
    #[error("histogram layouts differ: {0:?} vs {1:?}")]
    BinLayoutMismatch(BinLayout, BinLayout),
    #[error("frame stream is empty")]
    EmptyStream,
    #[error(transparent)]
    Ingest(#[from] crate::media::IngestError),
}

/// Half-open frame interval `[start, end)` without a camera cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Shot {
    pub start: u64,
    pub end: u64,
}

impl Shot {
    pub fn new(start: u64, end: u64) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn range(&self) -> Range<u64> {
        self.start..self.end
    }

    pub fn contains(&self, frame: u64) -> bool {
        self.range().contains(&frame)
    }
}
