//! Compositing the timeline into output frames: per-frame plans,
//! cross-fade and wipe blends, and sinks for image sequences or an
//! encoder process.

mod exec;
mod plan;
mod sink;
mod source;

use thiserror::Error;

use crate::media::IngestError;
use crate::timeline::TimelineError;
use crate::Frame;

pub use exec::{compose_frame, render, render_thumbnail, RenderStats};
pub use plan::{plan, Instruction, Layer, RenderPlan};
pub use sink::{EncoderSink, FrameSink, ImageSequenceSink, SinkConfig, ENCODER_ENV};
pub use source::{AssetSource, DecoderSource, SourceFrames, StoreAssets};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("frames differ in size: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error(transparent)]
    Validation(#[from] TimelineError),
    #[error("timeline has no frames to render")]
    EmptyTimeline,
    #[error("asset {0} is missing")]
    MissingAsset(String),
    #[error("output frame {frame} is beyond the plan length {len}")]
    FrameOutOfRange { frame: u64, len: u64 },
    #[error("source: {0}")]
    Source(#[from] IngestError),
    #[error("sink: {0}")]
    SinkWriteError(String),
}

/// Linear ramp `t / d`.
pub fn alpha_curve(t: u64, d: u64) -> f64 {
    debug_assert!(d >= 1 && t <= d);
    t as f64 / d as f64
}

fn check_pair(a: &Frame, b: &Frame, alpha: f64) -> Result<(), RenderError> {
    if !a.same_dimensions(b) {
        return Err(RenderError::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(RenderError::AlphaOutOfRange(alpha));
    }
    Ok(())
}

/// Cross-fade: `round_half_up((1 - alpha) * a + alpha * b)` per channel.
pub fn blend(a: &Frame, b: &Frame, alpha: f64) -> Result<Frame, RenderError> {
    check_pair(a, b, alpha)?;
    let px = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let v = (1.0 - alpha) * f64::from(x) + alpha * f64::from(y);
            crate::round_half_up(v).clamp(0, 255) as u8
        })
        .collect();
    Ok(Frame::new(a.index(), a.timestamp(), a.width(), a.height(), px).expect("same geometry as input"))
}

/// Left-to-right wipe: columns below `round_half_up(alpha * width)` come
/// from `b`.
pub fn wipe(a: &Frame, b: &Frame, alpha: f64) -> Result<Frame, RenderError> {
    check_pair(a, b, alpha)?;
    let w = a.width() as usize;
    let split = (crate::round_half_up(alpha * w as f64).clamp(0, w as i64) as usize) * 3;
    let mut px = a.pixels().to_vec();
    for (row_out, row_b) in px.chunks_exact_mut(w * 3).zip(b.pixels().chunks_exact(w * 3)) {
        row_out[..split].copy_from_slice(&row_b[..split]);
    }
    Ok(Frame::new(a.index(), a.timestamp(), a.width(), a.height(), px).expect("same geometry as input"))
}

/// Scales a still to fit `width x height` keeping its aspect ratio,
/// centred on white.
pub fn fit_still(still: &Frame, width: u32, height: u32) -> Frame {
    if still.width() == width && still.height() == height {
        return still.clone();
    }
    let scale = (width as f64 / still.width() as f64).min(height as f64 / still.height() as f64);
    let sw = (crate::round_half_up(still.width() as f64 * scale) as u32).clamp(1, width);
    let sh = (crate::round_half_up(still.height() as f64 * scale) as u32).clamp(1, height);
    let scaled = still.resize_bilinear(sw, sh);
    let (ox, oy) = ((width - sw) / 2, (height - sh) / 2);
    let mut px = vec![255u8; width as usize * height as usize * 3];
    let row = sw as usize * 3;
    for y in 0..sh as usize {
        let dst = ((oy as usize + y) * width as usize + ox as usize) * 3;
        px[dst..dst + row].copy_from_slice(&scaled.pixels()[y * row..(y + 1) * row]);
    }
    Frame::new(0, 0.0, width, height, px).expect("geometry computed above")
}
