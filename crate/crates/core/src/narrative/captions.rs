use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Caption, CaptionSource, NarrativeError};
use crate::genai::Gateway;
use crate::shots::Shot;
use crate::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionSampler {
    pub per_shot: usize,
    pub seed: u64,
}

impl Default for CaptionSampler {
    fn default() -> Self {
        Self { per_shot: 3, seed: 0 }
    }
}

/// Frames to caption: `per_shot` distinct frames per shot (fewer for short
/// shots), drawn uniformly with a generator seeded once per call. Sorted.
pub fn caption_sample_indices(shots: &[Shot], sampler: CaptionSampler) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mut out = Vec::new();
    for shot in shots {
        let len = shot.len() as usize;
        let k = sampler.per_shot.min(len);
        if k == 0 {
            continue;
        }
        let picked = rand::seq::index::sample(&mut rng, len, k);
        out.extend(picked.into_iter().map(|o| shot.start + o as u64));
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Captions the sampled frames of every shot. `frame_at` supplies pixels
/// for a source index. On any caption failure the successful captions are
/// returned inside the error.
pub fn describe_video(
    shots: &[Shot],
    sampler: CaptionSampler,
    gateway: &Gateway,
    mut frame_at: impl FnMut(u64) -> Result<Frame, NarrativeError>,
) -> Result<Vec<Caption>, NarrativeError> {
    if shots.is_empty() {
        return Err(NarrativeError::Precondition("no shots to describe".into()));
    }
    let frames = caption_sample_indices(shots, sampler)
        .into_iter()
        .map(|i| frame_at(i).map(|f| (i, f)))
        .collect::<Result<Vec<_>, _>>()?;
    let source = if gateway.is_replay() {
        CaptionSource::Fixture
    } else {
        CaptionSource::CaptionService
    };
    let results: Vec<(u64, Result<String, String>)> = frames
        .par_iter()
        .map(|(i, f)| (*i, gateway.caption(f).map_err(|e| e.to_string())))
        .collect();
    let mut partial = Vec::new();
    let mut failures = Vec::new();
    for (frame_index, r) in results {
        match r {
            Ok(text) => partial.push(Caption {
                frame_index,
                text,
                source,
            }),
            Err(e) => failures.push((frame_index, e)),
        }
    }
    if failures.is_empty() {
        Ok(partial)
    } else {
        tracing::warn!(failed = failures.len(), ok = partial.len(), "caption requests failed");
        Err(NarrativeError::CaptionServiceError { partial, failures })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genai::stub::StubTransport;
    use crate::genai::{FixtureStore, GatewayMode, RetryPolicy, TransportError};
    use std::sync::Arc;

    fn frame(i: u64) -> Result<Frame, NarrativeError> {
        let v = (i * 37 % 256) as u8;
        Ok(Frame::filled(i, 0.0, 8, 8, [v, 255 - v, 90]))
    }

    #[test]
    fn single_frame_shot_is_forced() {
        let g = Gateway::new(Arc::new(StubTransport::new()), GatewayMode::Live);
        let caps = describe_video(&[Shot::new(0, 1)], CaptionSampler::default(), &g, frame).unwrap();
        assert_eq!(caps.len(), 1);
        assert_eq!(caps[0].frame_index, 0);
        assert_eq!(caps[0].source, CaptionSource::CaptionService);
    }

    #[test]
    fn per_shot_count_is_clamped() {
        let idx = caption_sample_indices(&[Shot::new(10, 12)], CaptionSampler { per_shot: 3, seed: 1 });
        assert_eq!(idx, vec![10, 11]);
    }

    #[test]
    fn indices_are_seeded_sorted_and_in_shot() {
        let shots = [Shot::new(0, 50), Shot::new(50, 120), Shot::new(120, 121)];
        let s = CaptionSampler { per_shot: 3, seed: 9 };
        let a = caption_sample_indices(&shots, s);
        assert_eq!(a, caption_sample_indices(&shots, s));
        assert_eq!(a.len(), 7);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        for sh in &shots {
            let n = a.iter().filter(|&&i| sh.contains(i)).count();
            assert_eq!(n, 3.min(sh.len() as usize));
        }
        assert_ne!(a, caption_sample_indices(&shots, CaptionSampler { seed: 10, ..s }));
    }

    #[test]
    fn replayed_captions_are_identical() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::new(dir.path());
        let shots = [Shot::new(0, 30), Shot::new(30, 60)];
        let s = CaptionSampler { per_shot: 3, seed: 42 };
        let rec = Gateway::new(Arc::new(StubTransport::new()), GatewayMode::Record(store.clone()));
        let recorded = describe_video(&shots, s, &rec, frame).unwrap();
        let a = describe_video(&shots, s, &Gateway::replay(store.clone()), frame).unwrap();
        let b = describe_video(&shots, s, &Gateway::replay(store), frame).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        assert!(a.iter().all(|c| c.source == CaptionSource::Fixture));
        assert_eq!(
            a.iter().map(|c| &c.text).collect::<Vec<_>>(),
            recorded.iter().map(|c| &c.text).collect::<Vec<_>>()
        );
    }

    #[test]
    fn failures_carry_partial_results() {
        let stub = Arc::new(StubTransport::new());
        stub.push_reply(Err(TransportError::Permanent("boom".into())));
        let g = Gateway::new(stub, GatewayMode::Live).with_retry(RetryPolicy::immediate());
        // One frame only, so the scripted failure lands on it.
        let err = describe_video(&[Shot::new(0, 1), Shot::new(1, 2)], CaptionSampler { per_shot: 1, seed: 0 }, &g, frame)
            .unwrap_err();
        match err {
            NarrativeError::CaptionServiceError { partial, failures } => {
                assert_eq!(partial.len() + failures.len(), 2);
                assert_eq!(failures.len(), 1);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn empty_shots_rejected() {
        let g = Gateway::new(Arc::new(StubTransport::new()), GatewayMode::Live);
        assert!(matches!(
            describe_video(&[], CaptionSampler::default(), &g, frame),
            Err(NarrativeError::Precondition(_))
        ));
    }
}
