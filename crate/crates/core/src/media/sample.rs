use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::frame::Frame;

/// Fixed per-shot sampling scheme: `count` frames every `stride` frames,
/// each resized to a `target_size` square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub count: usize,
    pub stride: u64,
    pub target_size: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            count: 64,
            stride: 10,
            target_size: 224,
        }
    }
}

/// Sampled frames of one shot.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledClip {
    pub source_range: Range<u64>,
    /// Effective stride after short-shot reduction.
    pub stride: u64,
    /// Absolute source index of each sample.
    pub source_indices: Vec<u64>,
    pub frames: Vec<Frame>,
}

impl SampledClip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn side(&self) -> u32 {
        self.frames.first().map_or(0, Frame::width)
    }
}

/// Offsets (relative to shot start) and the effective stride for a shot of
/// `len` frames. Shots shorter than `count * stride` use
/// `max(1, len / count)` so every shot produces samples.
pub fn sampling_offsets(len: u64, params: &SamplingParams) -> (Vec<u64>, u64) {
    if len == 0 || params.count == 0 {
        return (Vec::new(), params.stride.max(1));
    }
    let count = params.count as u64;
    let stride = if len >= count * params.stride {
        params.stride.max(1)
    } else {
        (len / count).max(1)
    };
    let available = len.div_ceil(stride);
    let n = count.min(available);
    ((0..n).map(|k| k * stride).collect(), stride)
}

/// Samples a shot given all of its frames in order (`frames[0]` is the
/// first frame of the shot).
pub fn sample_segment(frames: &[Frame], params: &SamplingParams) -> Result<SampledClip, IngestError> {
    let first = frames.first().ok_or(IngestError::EmptyShot)?;
    let start = first.index();
    let (offsets, stride) = sampling_offsets(frames.len() as u64, params);
    let picked = offsets
        .iter()
        .map(|&o| &frames[o as usize])
        .collect::<Vec<_>>();
    Ok(SampledClip::from_picked(
        start..start + frames.len() as u64,
        stride,
        picked,
        params.target_size,
    ))
}

impl SampledClip {
    /// Builds a clip from frames already chosen by [`sampling_offsets`].
    pub fn from_picked<'a>(
        source_range: Range<u64>,
        stride: u64,
        picked: impl IntoIterator<Item = &'a Frame>,
        target_size: u32,
    ) -> Self {
        let frames: Vec<Frame> = picked
            .into_iter()
            .map(|f| f.resize_bilinear(target_size, target_size))
            .collect();
        Self {
            source_range,
            stride,
            source_indices: frames.iter().map(Frame::index).collect(),
            frames,
        }
    }
}
