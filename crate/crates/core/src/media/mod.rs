//! Source ingest: probing, frame extraction through a decoder process, and
//! the fixed shot-sampling scheme used to feed the highlight scorer.

mod decoder;
pub mod rawvideo;
mod sample;

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decoder::{AutoDecoder, Decoder, DecoderStyle, FrameStream, ProcessDecoder, DECODER_ENV};
pub use sample::{sample_segment, sampling_offsets, SampledClip, SamplingParams};

use crate::frame::Frame;

/// Smallest frame side that does not raise the low-quality flag.
pub const MIN_CLEAR_SIDE: u32 = 1080;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read source {path}: {reason}")]
    UnreadableSource { path: String, reason: String },
    #[error("source {path} is not decodable: {reason}")]
    UndecodableStream { path: String, reason: String },
    #[error("frame range {start}..{end} outside 0..{frame_count}")]
    RangeOutOfBounds { start: u64, end: u64, frame_count: u64 },
    #[error("decoder exited with {status}: {stderr}")]
    DecoderCrash { status: String, stderr: String },
    #[error("cannot start decoder `{program}`: {reason}")]
    DecoderUnavailable { program: String, reason: String },
    #[error("shot has no frames")]
    EmptyShot,
    #[error(transparent)]
    Frame(#[from] crate::frame::FrameError),
}

/// Exact frame rate as a reduced fraction, serialized as `{num, den}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rational {
    pub num: u64,
    pub den: u64,
}

impl Rational {
    pub fn new(num: u64, den: u64) -> Option<Self> {
        if den == 0 {
            return None;
        }
        let g = gcd(num, den).max(1);
        Some(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn integer(n: u64) -> Self {
        Self { num: n, den: 1 }
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Parses `"30000/1001"`, `"25"` or `"29.97"`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            return Self::new(n.trim().parse().ok()?, d.trim().parse().ok()?);
        }
        if let Ok(n) = s.parse::<u64>() {
            return Some(Self::integer(n));
        }
        let v: f64 = s.parse().ok()?;
        if !(v.is_finite() && v > 0.0) {
            return None;
        }
        Self::new((v * 1000.0).round() as u64, 1000)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelFormat {
    Rgb24,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaInfo {
    pub width: u32,
    pub height: u32,
    pub frame_rate: Rational,
    pub frame_count: u64,
    pub duration: f64,
    pub pixel_format: PixelFormat,
    /// Set when the shorter side is below 1080 pixels. Such sources are
    /// processed anyway; key frames from them tend to make poor references.
    pub low_quality: bool,
}

impl MediaInfo {
    /// Builds validated metadata; duration is derived from count and rate.
    pub fn new(width: u32, height: u32, frame_rate: Rational, frame_count: u64) -> Result<Self, String> {
        if width == 0 || height == 0 {
            return Err(format!("invalid geometry {width}x{height}"));
        }
        if frame_rate.num == 0 || frame_rate.den == 0 {
            return Err("frame rate must be positive".into());
        }
        if frame_count == 0 {
            return Err("stream has no frames".into());
        }
        Ok(Self {
            width,
            height,
            frame_rate,
            frame_count,
            duration: frame_count as f64 * frame_rate.den as f64 / frame_rate.num as f64,
            pixel_format: PixelFormat::Rgb24,
            low_quality: width.min(height) < MIN_CLEAR_SIDE,
        })
    }

    pub fn fps(&self) -> f64 {
        self.frame_rate.as_f64()
    }

    pub fn frame_period(&self) -> f64 {
        1.0 / self.fps()
    }

    pub fn timestamp_of(&self, index: u64) -> f64 {
        index as f64 * self.frame_rate.den as f64 / self.frame_rate.num as f64
    }

    pub fn frame_bytes(&self) -> usize {
        self.width as usize * self.height as usize * 3
    }

    /// Frame containing time `t` (clamped into the stream).
    pub fn frame_at(&self, t: f64) -> u64 {
        let idx = crate::round_half_up(t.max(0.0) * self.fps()).max(0) as u64;
        idx.min(self.frame_count - 1)
    }
}

/// Probes `path` with `decoder`. A missing or unreadable file is reported
/// before any process is spawned.
pub fn probe(decoder: &dyn Decoder, path: &Path) -> Result<MediaInfo, IngestError> {
    check_readable(path)?;
    let info = decoder.probe(path)?;
    if info.low_quality {
        tracing::warn!(
            width = info.width,
            height = info.height,
            "source is below 1080p; highlight key frames may be unreliable"
        );
    }
    Ok(info)
}

/// Streams frames `range.start..range.end` in index order.
pub fn extract_frames(
    decoder: &dyn Decoder,
    path: &Path,
    info: &MediaInfo,
    range: Range<u64>,
) -> Result<FrameStream, IngestError> {
    if range.start >= range.end || range.end > info.frame_count {
        return Err(IngestError::RangeOutOfBounds {
            start: range.start,
            end: range.end,
            frame_count: info.frame_count,
        });
    }
    check_readable(path)?;
    decoder.extract(path, info, range)
}

/// Convenience: extracts a range and collects it.
pub fn read_frames(
    decoder: &dyn Decoder,
    path: &Path,
    info: &MediaInfo,
    range: Range<u64>,
) -> Result<Vec<Frame>, IngestError> {
    extract_frames(decoder, path, info, range)?.collect()
}

fn check_readable(path: &Path) -> Result<(), IngestError> {
    std::fs::File::open(path)
        .map(drop)
        .map_err(|e| IngestError::UnreadableSource {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
}
