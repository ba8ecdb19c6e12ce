use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{hist_distance, hsv_histogram, BinLayout, KeypointDetector, Shot, ShotError};
use crate::frame::Frame;
use crate::media::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundaryConfig {
    pub hist_threshold: f64,
    pub kp_threshold: f64,
    pub min_shot_len: u64,
    pub bins: BinLayout,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            hist_threshold: 0.4,
            kp_threshold: 0.3,
            min_shot_len: 12,
            bins: BinLayout::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotBoundary {
    /// First frame of the new shot.
    pub at_frame: u64,
    /// Mean of histogram distance and keypoint dissimilarity.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub shots: Vec<Shot>,
    pub boundaries: Vec<ShotBoundary>,
    pub frame_count: u64,
}

const BATCH: usize = 32;

/// Splits a frame stream into shots. Frame `i` opens a new shot when the
/// histogram distance to frame `i-1` exceeds `hist_threshold`, keypoint
/// similarity is below `kp_threshold`, and the running shot already has
/// `min_shot_len` frames.
pub fn detect_boundaries<I>(
    frames: I,
    config: &BoundaryConfig,
    detector: &dyn KeypointDetector,
) -> Result<Segmentation, ShotError>
where
    I: IntoIterator<Item = Result<Frame, IngestError>>,
{
    let mut iter = frames.into_iter();
    let mut prev: Option<(Frame, super::HsvHistogram)> = None;
    let mut boundaries = Vec::new();
    let mut shot_start = 0u64;
    let mut count = 0u64;
    loop {
        let batch: Vec<Frame> = iter.by_ref().take(BATCH).collect::<Result<_, _>>()?;
        if batch.is_empty() {
            break;
        }
        let hists: Vec<_> = batch
            .par_iter()
            .map(|f| hsv_histogram(f, config.bins))
            .collect();
        for (frame, hist) in batch.into_iter().zip(hists) {
            let i = count;
            if let Some((pf, ph)) = &prev {
                let d = hist_distance(ph, &hist)?;
                if d > config.hist_threshold && i - shot_start >= config.min_shot_len {
                    let sim = super::keypoint_similarity(detector, pf, &frame);
                    if sim < config.kp_threshold {
                        boundaries.push(ShotBoundary {
                            at_frame: i,
                            confidence: (0.5 * (d + 1.0 - sim)).clamp(0.0, 1.0),
                        });
                        shot_start = i;
                    }
                }
            }
            prev = Some((frame, hist));
            count += 1;
        }
    }
    if count == 0 {
        return Err(ShotError::EmptyStream);
    }
    let mut shots = Vec::with_capacity(boundaries.len() + 1);
    let mut start = 0;
    for b in &boundaries {
        shots.push(Shot::new(start, b.at_frame));
        start = b.at_frame;
    }
    shots.push(Shot::new(start, count));
    Ok(Segmentation {
        shots,
        boundaries,
        frame_count: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shots::{CornerDetector, NullDetector};

    fn solid(colors: &[([u8; 3], u64)]) -> Vec<Result<Frame, IngestError>> {
        let mut out = Vec::new();
        let mut i = 0;
        for &(c, n) in colors {
            for _ in 0..n {
                out.push(Ok(Frame::filled(i, i as f64 / 25.0, 16, 9, c)));
                i += 1;
            }
        }
        out
    }

    #[test]
    fn three_solid_scenes() {
        let frames = solid(&[([255, 0, 0], 50), ([0, 255, 0], 50), ([0, 0, 255], 50)]);
        let seg = detect_boundaries(frames, &BoundaryConfig::default(), &NullDetector).unwrap();
        assert_eq!(
            seg.shots,
            vec![Shot::new(0, 50), Shot::new(50, 100), Shot::new(100, 150)]
        );
        assert_eq!(seg.boundaries.len(), 2);
        assert!(seg.boundaries.iter().all(|b| b.confidence == 1.0));
    }

    #[test]
    fn constant_video_one_shot() {
        let seg = detect_boundaries(
            solid(&[([10, 20, 30], 80)]),
            &BoundaryConfig::default(),
            &NullDetector,
        )
        .unwrap();
        assert_eq!(seg.shots, vec![Shot::new(0, 80)]);
    }

    #[test]
    fn single_frame() {
        let seg = detect_boundaries(
            solid(&[([10, 20, 30], 1)]),
            &BoundaryConfig::default(),
            &NullDetector,
        )
        .unwrap();
        assert_eq!(seg.shots, vec![Shot::new(0, 1)]);
    }

    #[test]
    fn empty_stream() {
        assert!(matches!(
            detect_boundaries(Vec::new(), &BoundaryConfig::default(), &NullDetector),
            Err(ShotError::EmptyStream)
        ));
    }

    #[test]
    fn min_shot_len_suppresses_flash() {
        // 3-frame white flash inside a red scene: both edges are too close
        // to the previous boundary except the first.
        let frames = solid(&[
            ([255, 0, 0], 30),
            ([255, 255, 255], 3),
            ([255, 0, 0], 30),
        ]);
        let seg = detect_boundaries(frames, &BoundaryConfig::default(), &NullDetector).unwrap();
        assert_eq!(seg.shots, vec![Shot::new(0, 30), Shot::new(30, 63)]);
    }

    #[test]
    fn keypoint_veto_keeps_flat_cut() {
        // Flat frames have no keypoints on either side, so similarity is 1
        // and the built-in detector vetoes the colour change.
        let frames = solid(&[([255, 0, 0], 20), ([0, 0, 255], 20)]);
        let seg = detect_boundaries(frames, &BoundaryConfig::default(), &CornerDetector::default())
            .unwrap();
        assert_eq!(seg.shots.len(), 1);
    }
}
