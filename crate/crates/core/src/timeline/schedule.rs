use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::validate::Violation;
use super::{AssetRef, Clip, ClipPayload, TimelineError, TimelineProject, Track, Transition};
use crate::narrative::{BRollKind, NarrativeGap};

/// Splits `budget` frames into `k` near-equal parts; the first
/// `budget % k` parts get one extra frame.
pub fn allocate_durations(budget: u64, k: usize) -> Result<Vec<u64>, TimelineError> {
    if k == 0 || budget < k as u64 {
        return Err(TimelineError::BudgetTooSmall { budget, k });
    }
    let k64 = k as u64;
    let (base, extra) = (budget / k64, budget % k64);
    Ok((0..k64).map(|i| base + u64::from(i < extra)).collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapAssignment {
    /// Stills per gap, aligned with the input gaps.
    pub per_gap: Vec<usize>,
    /// Stills of a kind that no gap asks for.
    pub unassigned: BTreeMap<BRollKind, usize>,
}

fn micros(seconds: f64) -> u128 {
    crate::round_half_up(seconds.max(0.0) * 1e6).max(0) as u128
}

/// Apportions each kind's stills over the gaps of that kind in proportion
/// to gap duration (largest remainder, earlier gap first on ties).
pub fn assign_assets_to_gaps(counts: &BTreeMap<BRollKind, usize>, gaps: &[NarrativeGap]) -> GapAssignment {
    let mut out = GapAssignment {
        per_gap: vec![0; gaps.len()],
        unassigned: BTreeMap::new(),
    };
    for (&kind, &n) in counts {
        if n == 0 {
            continue;
        }
        let idx: Vec<usize> = (0..gaps.len()).filter(|&i| gaps[i].suggested_kind == kind).collect();
        if idx.is_empty() {
            out.unassigned.insert(kind, n);
            continue;
        }
        let mut weights: Vec<u128> = idx.iter().map(|&i| micros(gaps[i].duration())).collect();
        if weights.iter().all(|&w| w == 0) {
            weights.iter_mut().for_each(|w| *w = 1);
        }
        let total: u128 = weights.iter().sum();
        let n128 = n as u128;
        let mut given = 0usize;
        let mut remainders = Vec::with_capacity(idx.len());
        for (pos, (&gi, &w)) in idx.iter().zip(&weights).enumerate() {
            let q = n128 * w;
            out.per_gap[gi] = (q / total) as usize;
            given += out.per_gap[gi];
            remainders.push((q % total, pos));
        }
        remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, pos) in remainders.iter().take(n - given) {
            out.per_gap[idx[pos]] += 1;
        }
    }
    out
}

/// Output frame at which a gap's stills are inserted: the A-roll position
/// showing the source frame at the gap's start.
pub fn gap_insert_frame(project: &TimelineProject, gap: &NarrativeGap) -> Result<u64, TimelineError> {
    let fps = project.media.fps();
    let src = (crate::round_half_up(gap.anchor[0] * fps).max(0) as u64).min(project.media.frame_count);
    let a_roll = || project.clips_on(Track::ARoll).filter_map(|c| c.source().map(|s| (c, s)));
    if let Some((c, s)) = a_roll().find(|(_, s)| s.src_start <= src && src < s.src_end()) {
        let o = crate::round_half_up((src - s.src_start) as f64 / s.speed.as_f64()).max(0) as u64;
        return Ok(c.out_start + o.min(c.out_len));
    }
    if let Some((c, _)) = a_roll().find(|(_, s)| s.src_end() == src) {
        return Ok(c.out_end());
    }
    Err(TimelineError::AnchorOutsideCoverage(gap.anchor))
}

/// Splits the A-roll clip strictly containing `f` in two. Returns the
/// actual split frame, which moves to a clip edge when the speed rounds
/// the source split onto one.
fn split_a_roll(p: &mut TimelineProject, f: u64) -> u64 {
    let Some(pos) = p
        .clips
        .iter()
        .position(|c| c.track == Track::ARoll && c.out_start < f && f < c.out_end())
    else {
        return f;
    };
    let clip = p.clips[pos].clone();
    let s = *clip.source().expect("A-roll clips carry a source");
    let o = f - clip.out_start;
    let cut = (crate::round_half_up(o as f64 * s.speed.as_f64()).max(0) as u64).min(s.src_len);
    if cut == 0 {
        return clip.out_start;
    }
    if cut >= s.src_len {
        return clip.out_end();
    }
    let id = p.fresh_clip_id();
    let first = &mut p.clips[pos];
    first.out_len = o;
    if let ClipPayload::SourceRef(r) = &mut first.payload {
        r.src_len = cut;
    }
    let mut rest = s;
    rest.src_start += cut;
    rest.src_len -= cut;
    p.clips.push(Clip {
        id,
        track: Track::ARoll,
        out_start: f,
        out_len: clip.out_len - o,
        payload: ClipPayload::SourceRef(rest),
        transition_in: None,
        transition_out: None,
    });
    f
}

fn shortened(t: Transition, room: u64) -> Transition {
    if t.effective() <= room {
        t
    } else if room == 0 {
        Transition::CUT
    } else {
        Transition { kind: t.kind, duration: room }
    }
}

/// Shortens existing fades that would reach into the opened span
/// `[from, to)`. A fade-out before the span keeps only the A-roll frames
/// left before it; a fade-in right after the span may not outlast the
/// last new still it fades from.
fn clip_neighbour_fades(p: &mut TimelineProject, from: u64, to: u64, last_len: u64) {
    for c in p.clips.iter_mut().filter(|c| c.track.is_broll()) {
        let (start, end) = (c.out_start, c.out_end());
        if end < from {
            c.transition_out = c.transition_out.map(|t| shortened(t, from - end));
        }
        if start > to {
            c.transition_in = c.transition_in.map(|t| shortened(t, start - to));
        } else if start == to {
            c.transition_in = c.transition_in.map(|t| shortened(t, last_len));
        }
    }
}

/// Freeze-inserts stills for one gap: the A-roll is split at the gap, all
/// later content moves right by `budget` frames, and the stills fill the
/// opened span in order on their kind's track.
pub fn insert_broll(
    project: &TimelineProject,
    gap: &NarrativeGap,
    asset_ids: &[String],
    budget: u64,
    default_transition: Transition,
) -> Result<TimelineProject, TimelineError> {
    if asset_ids.is_empty() {
        return Ok(project.clone());
    }
    for id in asset_ids {
        let meta = project.assets.get(id).ok_or_else(|| TimelineError::InvariantViolation {
            which: Violation::MissingAsset,
            detail: format!("asset {id} is not in the manifest"),
        })?;
        if meta.kind != gap.suggested_kind {
            return Err(TimelineError::InvariantViolation {
                which: Violation::PayloadKind,
                detail: format!("{} asset {id} offered to a {} gap", meta.kind.as_str(), gap.suggested_kind.as_str()),
            });
        }
    }
    let lens = allocate_durations(budget, asset_ids.len())?;
    let f0 = gap_insert_frame(project, gap)?;

    let build = |with_transitions: bool| -> TimelineProject {
        let mut p = project.clone();
        let f = split_a_roll(&mut p, f0);
        for c in p.clips.iter_mut().filter(|c| c.out_start >= f) {
            c.out_start += budget;
        }
        let shortest = *lens.iter().min().expect("at least one still");
        clip_neighbour_fades(&mut p, f, f + budget, lens[lens.len() - 1]);
        let total = p.output_len().max(f + budget);
        let d = default_transition.effective().min(shortest);
        let mut at = f;
        let last = lens.len() - 1;
        for (i, (id, &len)) in asset_ids.iter().zip(&lens).enumerate() {
            let (t_in, t_out) = if with_transitions && d > 0 {
                let tin = if i == 0 { d.min(at) } else { d };
                let tout = if i == last { d.min(total - (at + len)) } else { d };
                let mk = |n| Transition {
                    kind: default_transition.kind,
                    duration: n,
                };
                (
                    if tin > 0 { mk(tin) } else { Transition::CUT },
                    if tout > 0 { mk(tout) } else { Transition::CUT },
                )
            } else {
                (Transition::CUT, Transition::CUT)
            };
            let cid = p.fresh_clip_id();
            p.clips.push(Clip {
                id: cid,
                track: Track::for_kind(gap.suggested_kind),
                out_start: at,
                out_len: len,
                payload: ClipPayload::AssetRef(AssetRef { asset_id: id.clone() }),
                transition_in: Some(t_in),
                transition_out: Some(t_out),
            });
            at += len;
        }
        p.normalize();
        p
    };

    let p = build(true);
    match p.validate() {
        Ok(()) => Ok(p),
        Err(e) if matches!(e.violation(), Some(Violation::Transition | Violation::TransitionOverlap)) => {
            tracing::debug!(error = %e, "default transitions do not fit; using cuts");
            let p = build(false);
            p.validate()?;
            Ok(p)
        }
        Err(e) => Err(e),
    }
}
