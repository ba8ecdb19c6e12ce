use std::sync::mpsc::sync_channel;

use serde::{Deserialize, Serialize};

use super::plan::{Instruction, Layer, RenderPlan};
use super::sink::FrameSink;
use super::source::{AssetSource, SourceFrames};
use super::{blend, wipe, RenderError};
use crate::timeline::TransitionKind;
use crate::{Frame, Sha256Writer};

const QUEUE_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderStats {
    pub frames_written: u64,
    /// sha256 over the concatenated rgb24 frame bytes.
    pub digest: String,
}

fn layer(
    l: &Layer,
    plan: &RenderPlan,
    source: &mut dyn SourceFrames,
    assets: &mut dyn AssetSource,
) -> Result<Frame, RenderError> {
    match l {
        Layer::SourceFrame { frame } => {
            let f = source.frame(*frame)?;
            if f.width() != plan.width || f.height() != plan.height {
                return Ok(f.resize_bilinear(plan.width, plan.height));
            }
            Ok(f)
        }
        Layer::AssetStill { asset_id } => assets.still(asset_id, plan.width, plan.height),
    }
}

/// Builds output frame `n` of the plan.
pub fn compose_frame(
    plan: &RenderPlan,
    n: u64,
    source: &mut dyn SourceFrames,
    assets: &mut dyn AssetSource,
) -> Result<Frame, RenderError> {
    let ins = plan
        .instructions
        .get(n as usize)
        .ok_or(RenderError::FrameOutOfRange { frame: n, len: plan.len() })?;
    let f = match ins {
        Instruction::SourceFrame { frame } => layer(&Layer::SourceFrame { frame: *frame }, plan, source, assets)?,
        Instruction::AssetStill { asset_id } => {
            layer(&Layer::AssetStill { asset_id: asset_id.clone() }, plan, source, assets)?
        }
        Instruction::Blend { from, to, alpha, transition } => {
            let a = layer(from, plan, source, assets)?;
            let b = layer(to, plan, source, assets)?;
            match transition {
                TransitionKind::Wipe => wipe(&a, &b, *alpha)?,
                _ => blend(&a, &b, *alpha)?,
            }
        }
    };
    let ts = n as f64 * plan.frame_rate.den as f64 / plan.frame_rate.num as f64;
    Ok(f.with_position(n, ts))
}

/// Composes every frame on a worker thread and streams them into `sink`.
pub fn render(
    plan: &RenderPlan,
    source: &mut dyn SourceFrames,
    assets: &mut dyn AssetSource,
    sink: Box<dyn FrameSink>,
) -> Result<RenderStats, RenderError> {
    if plan.is_empty() {
        return Err(RenderError::EmptyTimeline);
    }
    let mut sink = sink;
    let (tx, rx) = sync_channel::<Result<Frame, RenderError>>(QUEUE_DEPTH);
    let mut digest = Sha256Writer::new();
    let mut written = 0u64;
    std::thread::scope(|s| -> Result<(), RenderError> {
        s.spawn(move || {
            for n in 0..plan.len() {
                let r = compose_frame(plan, n, source, assets);
                let failed = r.is_err();
                if tx.send(r).is_err() || failed {
                    return;
                }
            }
        });
        for r in rx {
            let f = r?;
            digest.update(f.pixels());
            sink.write(&f)?;
            written += 1;
        }
        Ok(())
    })?;
    sink.finish()?;
    tracing::info!(frames = written, "render finished");
    Ok(RenderStats { frames_written: written, digest: digest.finish_hex() })
}

/// A single composed frame, for previews.
pub fn render_thumbnail(
    plan: &RenderPlan,
    n: u64,
    source: &mut dyn SourceFrames,
    assets: &mut dyn AssetSource,
) -> Result<Frame, RenderError> {
    compose_frame(plan, n, source, assets)
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::media::Rational;
    use crate::render::{ImageSequenceSink, SinkConfig};

    fn plan(instructions: Vec<Instruction>) -> RenderPlan {
        RenderPlan { width: 4, height: 2, frame_rate: Rational::integer(25), instructions }
    }

    fn source() -> Vec<Frame> {
        (0..4).map(|i| Frame::filled(i, 0.0, 4, 2, [i as u8 * 50; 3])).collect()
    }

    fn assets() -> HashMap<String, Frame> {
        HashMap::from([("ab".to_owned(), Frame::filled(0, 0.0, 4, 2, [250; 3]))])
    }

    #[test]
    fn digest_matches_concatenated_bytes() {
        let p = plan(vec![
            Instruction::SourceFrame { frame: 1 },
            Instruction::Blend {
                from: Layer::SourceFrame { frame: 2 },
                to: Layer::AssetStill { asset_id: "ab".into() },
                alpha: 0.5,
                transition: TransitionKind::CrossFade,
            },
            Instruction::AssetStill { asset_id: "ab".into() },
        ]);
        let dir = tempfile::tempdir().unwrap();
        let sink = SinkConfig::ImageSequence { dir: dir.path().to_owned() }.open(4, 2, Rational::integer(25)).unwrap();
        let stats = render(&p, &mut source(), &mut assets(), sink).unwrap();
        assert_eq!(stats.frames_written, 3);
        let mut bytes = vec![50u8; 24];
        bytes.extend([175u8; 24]);
        bytes.extend([250u8; 24]);
        assert_eq!(stats.digest, crate::sha256_hex(&bytes));
        let f1 = std::fs::read(ImageSequenceSink::frame_path(dir.path(), 1)).unwrap();
        assert_eq!(Frame::from_png(&f1, 1, 0.0).unwrap().pixel(3, 1), [175; 3]);
    }

    #[test]
    fn errors_surface() {
        let p = plan(vec![Instruction::AssetStill { asset_id: "zz".into() }]);
        let r = render(&p, &mut source(), &mut assets(), SinkConfig::Discard.open(4, 2, Rational::integer(1)).unwrap());
        assert!(matches!(r, Err(RenderError::MissingAsset(_))));
        assert!(matches!(
            render(&plan(vec![]), &mut source(), &mut assets(), SinkConfig::Discard.open(4, 2, Rational::integer(1)).unwrap()),
            Err(RenderError::EmptyTimeline)
        ));
    }
}
