//! Random generators and brute-force oracles shared by the property and
//! acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;

use mangaroll::broll::{asset_id, AssetMeta};
use mangaroll::highlight::NonLocalParams;
use mangaroll::media::{MediaInfo, Rational};
use mangaroll::narrative::{BRollKind, NarrativeGap, NarrativeRole};
use mangaroll::timeline::{
    apply_edit, insert_broll, ClipPayload, EditOp, PipelineConfig, TimelineProject, Track, Transition, TransitionKind,
    TransitionSide,
};

pub const FPS: u64 = 25;
pub const KINDS: [BRollKind; 3] = [BRollKind::T1, BRollKind::T2, BRollKind::T3];

pub fn empty_project(frames: u64) -> TimelineProject {
    let media = MediaInfo::new(32, 24, Rational::integer(FPS), frames).unwrap();
    TimelineProject::new(media, "in.mrv", PipelineConfig::default())
}

pub fn asset(kind: BRollKind, n: usize) -> AssetMeta {
    let prompt = format!("{} still {n}", kind.as_str());
    AssetMeta {
        id: asset_id(kind, &prompt, None),
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

/// `count` gaps with random kinds and spans inside `0..seconds`.
pub fn random_gaps(rng: &mut impl Rng, seconds: f64, count: usize) -> Vec<NarrativeGap> {
    (0..count)
        .map(|_| {
            let a = rng.random_range(0.0..seconds);
            let b = (a + rng.random_range(0.0..4.0)).min(seconds);
            NarrativeGap {
                role: *NarrativeRole::ALL.choose(rng).unwrap(),
                anchor: [a, b],
                suggested_kind: *KINDS.choose(rng).unwrap(),
                note: String::new(),
            }
        })
        .collect()
}

pub fn random_transition(rng: &mut impl Rng, max: u64) -> Transition {
    match rng.random_range(0..3) {
        0 => Transition::CUT,
        1 => Transition::cross_fade(rng.random_range(0..=max)),
        _ => Transition { kind: TransitionKind::Wipe, duration: rng.random_range(1..=max.max(1)) },
    }
}

/// Source frame index of every A-roll output frame, sorted.
pub fn source_multiset(p: &TimelineProject) -> Vec<u64> {
    let mut v = p.a_roll_source_frames();
    v.sort_unstable();
    v
}

/// A valid project: `frames` of A-roll with stills inserted for up to
/// four random gaps. Returns the project and the total inserted budget.
pub fn random_project(rng: &mut impl Rng) -> (TimelineProject, u64) {
    let frames = rng.random_range(50..400);
    let mut p = empty_project(frames);
    for kind in KINDS {
        for n in 0..4 {
            p.register_asset(asset(kind, n));
        }
    }
    let count = rng.random_range(0..=4);
    let gaps = random_gaps(rng, frames as f64 / FPS as f64, count);
    let mut inserted = 0;
    for g in &gaps {
        let k = rng.random_range(1..=3);
        let ids: Vec<String> = (0..k).map(|n| asset(g.suggested_kind, n).id).collect();
        let budget = rng.random_range(k as u64..60);
        let t = random_transition(rng, 8);
        p = insert_broll(&p, g, &ids, budget, t).unwrap_or_else(|e| panic!("{e}: gap {:?} budget {budget} t {t:?}\n{}", g.anchor, serde_json::to_string(&p.clips).unwrap()));
        inserted += budget;
    }
    (p, inserted)
}

/// An edit that is plausible for `p`; many are rejected.
pub fn random_edit(rng: &mut impl Rng, p: &TimelineProject) -> EditOp {
    let total = p.output_len().max(1);
    let clip = p.clips.choose(rng).unwrap();
    let clip_id = clip.id.clone();
    match rng.random_range(0..7) {
        0 => {
            let track = if clip.track.is_broll() && rng.random_bool(0.3) {
                Some(*[Track::T1Track, Track::T2Track, Track::T3Track].choose(rng).unwrap())
            } else {
                None
            };
            EditOp::MoveClip { clip_id, out_start: rng.random_range(0..total + 20), track }
        }
        1 => EditOp::ResizeClip { clip_id, out_len: rng.random_range(0..clip.out_len * 2 + 2) },
        2 => EditOp::SetSpeed {
            clip_id,
            speed: Rational { num: rng.random_range(0..4), den: rng.random_range(1..4) },
        },
        3 => EditOp::RemoveClip { clip_id },
        4 | 5 => EditOp::SetTransition {
            clip_id,
            side: if rng.random_bool(0.5) { TransitionSide::In } else { TransitionSide::Out },
            transition: rng.random_bool(0.8).then(|| random_transition(rng, 12)),
        },
        _ => {
            let ids: Vec<&String> = p.assets.keys().collect();
            EditOp::AddClip {
                asset_id: (*ids.choose(rng).unwrap()).clone(),
                out_start: rng.random_range(0..total + 20),
                out_len: rng.random_range(1..40),
            }
        }
    }
}

/// Runs `ops` random edits from `p`. Returns the accepted projects in
/// order and the number of attempts.
pub fn edit_chain(rng: &mut impl Rng, mut p: TimelineProject, ops: usize) -> Vec<TimelineProject> {
    let mut accepted = Vec::new();
    for _ in 0..ops {
        let op = random_edit(rng, &p);
        if let Ok(q) = apply_edit(&p, &op) {
            accepted.push(q.clone());
            p = q;
        }
    }
    accepted
}

/// Invariant check written against frame occupancy rather than sorted
/// neighbours, independent of the library validator.
pub fn check_invariants(p: &TimelineProject) -> Result<(), String> {
    let mut ids = std::collections::HashSet::new();
    let total = p.clips.iter().map(|c| c.out_start + c.out_len).max().unwrap_or(0);
    if total != p.output_len() {
        return Err(format!("output length {} but clips end at {total}", p.output_len()));
    }
    let mut per_track: BTreeMap<Track, Vec<u8>> = BTreeMap::new();
    let mut stills = vec![0u8; total as usize];
    let mut a_roll = 0;
    for c in &p.clips {
        if !ids.insert(&c.id) {
            return Err(format!("duplicate id {}", c.id));
        }
        if c.out_len == 0 {
            return Err(format!("{} is empty", c.id));
        }
        let occ = per_track.entry(c.track).or_insert_with(|| vec![0; total as usize]);
        for f in c.out_start..c.out_start + c.out_len {
            occ[f as usize] += 1;
            if occ[f as usize] > 1 {
                return Err(format!("frame {f} doubly covered on {:?}", c.track));
            }
            if c.track != Track::ARoll {
                stills[f as usize] += 1;
                if stills[f as usize] > 1 {
                    return Err(format!("frame {f} holds two stills"));
                }
            }
        }
        match &c.payload {
            ClipPayload::SourceRef(s) => {
                if c.track != Track::ARoll {
                    return Err(format!("{} carries source on a still track", c.id));
                }
                a_roll += 1;
                if s.speed.num == 0 || s.speed.den == 0 || s.src_len == 0 {
                    return Err(format!("{} has bad source {s:?}", c.id));
                }
                if s.src_start + s.src_len > p.media.frame_count {
                    return Err(format!("{} reads past the source", c.id));
                }
            }
            ClipPayload::AssetRef(a) => {
                let meta = p.assets.get(&a.asset_id).ok_or(format!("{} dangles", c.id))?;
                if Track::for_kind(meta.kind) != c.track {
                    return Err(format!("{} on the wrong track", c.id));
                }
            }
        }
        for (t, is_in) in [(c.transition_in, true), (c.transition_out, false)] {
            let Some(t) = t else { continue };
            let blend = t.kind != TransitionKind::Cut;
            if !blend && t.duration != 0 {
                return Err(format!("{} has a timed cut", c.id));
            }
            if blend && (c.track == Track::ARoll || t.duration == 0 || t.duration > c.out_len) {
                return Err(format!("{} has an invalid transition", c.id));
            }
            if blend && is_in && t.duration > c.out_start {
                return Err(format!("{} fades in before frame 0", c.id));
            }
        }
    }
    if a_roll == 0 {
        return Err("no A-roll".into());
    }
    Ok(())
}

/// Random parameters with `d x d` embeddings and values of moderate size.
pub fn random_params(rng: &mut impl Rng, d: usize) -> NonLocalParams {
    let mut m = || ndarray::Array2::from_shape_fn((d, d), |_| rng.random_range(-1.0..1.0));
    NonLocalParams { w_theta: m(), w_phi: m(), w_g: m(), residual: false }
}

pub fn random_rows(rng: &mut impl Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn times(x: &[f64], w: &ndarray::Array2<f64>) -> Vec<f64> {
    (0..w.ncols()).map(|j| (0..x.len()).map(|i| x[i] * w[[i, j]]).sum()).collect()
}

/// Double loop over all pairs, without any max subtraction. Returns the
/// aggregated rows and the weight matrix.
pub fn brute_nonlocal(x: &[Vec<f64>], p: &NonLocalParams) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let theta: Vec<Vec<f64>> = x.iter().map(|r| times(r, &p.w_theta)).collect();
    let phi: Vec<Vec<f64>> = x.iter().map(|r| times(r, &p.w_phi)).collect();
    let g: Vec<Vec<f64>> = x.iter().map(|r| times(r, &p.w_g)).collect();
    let n = x.len();
    let mut ys = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for i in 0..n {
        let f: Vec<f64> = (0..n).map(|j| dot(&theta[i], &phi[j]).exp()).collect();
        let c: f64 = f.iter().sum();
        let mut y = vec![0.0; g[0].len()];
        for j in 0..n {
            for (k, v) in y.iter_mut().enumerate() {
                *v += f[j] * g[j][k];
            }
        }
        y.iter_mut().for_each(|v| *v /= c);
        if p.residual {
            for (v, xi) in y.iter_mut().zip(&x[i]) {
                *v += xi;
            }
        }
        ys.push(y);
        ws.push(f.iter().map(|v| v / c).collect());
    }
    (ys, ws)
}

/// `||a - b|| / max(||b||, 1)` over all entries.
pub fn rel_error(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            num += (x - y) * (x - y);
            den += y * y;
        }
    }
    num.sqrt() / den.sqrt().max(1.0)
}

/// Exact-match F1 between predicted and true boundary frames.
pub fn boundary_f1(found: &[u64], truth: &[u64]) -> f64 {
    if found.is_empty() && truth.is_empty() {
        return 1.0;
    }
    let tp = found.iter().filter(|f| truth.contains(f)).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let precision = tp / found.len() as f64;
    let recall = tp / truth.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Random mass vector, sparse about half the time.
pub fn random_mass(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let sparse = rng.random_bool(0.5);
    let mut m: Vec<f64> = (0..len)
        .map(|_| if sparse && rng.random_bool(0.9) { 0.0 } else { rng.random_range(0.0..1.0) })
        .collect();
    if m.iter().all(|v| *v == 0.0) {
        m[rng.random_range(0..len)] = 1.0;
    }
    m
}
