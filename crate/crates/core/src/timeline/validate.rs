use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{Clip, ClipPayload, TimelineProject, Track, TransitionKind};

/// Names of the invariants a project can break, as reported to clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    DuplicateId,
    OutLen,
    PayloadKind,
    Speed,
    SourceRange,
    MissingAsset,
    Transition,
    Order,
    Overlap,
    CrossTrackOverlap,
    Coverage,
    TransitionOverlap,
}

impl Violation {
    pub fn as_str(self) -> &'static str {
        match self {
            Violation::DuplicateId => "duplicate_id",
            Violation::OutLen => "out_len",
            Violation::PayloadKind => "payload_kind",
            Violation::Speed => "speed",
            Violation::SourceRange => "source_range",
            Violation::MissingAsset => "missing_asset",
            Violation::Transition => "transition",
            Violation::Order => "order",
            Violation::Overlap => "overlap",
            Violation::CrossTrackOverlap => "cross_track_overlap",
            Violation::Coverage => "coverage",
            Violation::TransitionOverlap => "transition_overlap",
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

type Check = Result<(), (Violation, String)>;

fn fail(which: Violation, detail: String) -> Check {
    Err((which, detail))
}

/// Which end of a still a blend window belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowSide {
    /// Frames `[start - d, start)` fade from the preceding content into
    /// the still.
    In,
    /// Frames `[end, end + d)` fade from the still into the following
    /// content.
    Out,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionWindow {
    pub clip: usize,
    pub side: WindowSide,
    pub start: u64,
    pub end: u64,
    pub kind: TransitionKind,
    pub duration: u64,
}

/// Blend windows that take effect. An out transition is dropped when the
/// still is followed directly by another still or by nothing.
pub fn transition_windows(p: &TimelineProject) -> Vec<TransitionWindow> {
    let total = p.output_len();
    let broll: Vec<&Clip> = p.clips.iter().filter(|c| c.track.is_broll()).collect();
    let mut out = Vec::new();
    for (i, c) in p.clips.iter().enumerate() {
        if !c.track.is_broll() {
            continue;
        }
        if let Some(t) = c.transition_in.filter(|t| t.effective() > 0) {
            let d = t.duration;
            out.push(TransitionWindow {
                clip: i,
                side: WindowSide::In,
                start: c.out_start.saturating_sub(d),
                end: c.out_start,
                kind: t.kind,
                duration: d,
            });
        }
        if let Some(t) = c.transition_out.filter(|t| t.effective() > 0) {
            let e = c.out_end();
            let next_is_still = broll.iter().any(|b| b.covers(e));
            if e < total && !next_is_still {
                out.push(TransitionWindow {
                    clip: i,
                    side: WindowSide::Out,
                    start: e,
                    end: e + t.duration,
                    kind: t.kind,
                    duration: t.duration,
                });
            }
        }
    }
    out.sort_by_key(|w| (w.start, w.end));
    out
}

fn check_clip(p: &TimelineProject, c: &Clip) -> Check {
    if c.out_len == 0 {
        return fail(Violation::OutLen, format!("clip {} has zero length", c.id));
    }
    match (&c.payload, c.track) {
        (ClipPayload::SourceRef(s), Track::ARoll) => {
            if s.speed.num == 0 || s.speed.den == 0 {
                return fail(Violation::Speed, format!("clip {} has speed {}/{}", c.id, s.speed.num, s.speed.den));
            }
            if s.src_len == 0 || s.src_end() > p.media.frame_count {
                return fail(
                    Violation::SourceRange,
                    format!("clip {} source {}..{} outside 0..{}", c.id, s.src_start, s.src_end(), p.media.frame_count),
                );
            }
        }
        (ClipPayload::AssetRef(a), track) if track.is_broll() => {
            let Some(meta) = p.assets.get(&a.asset_id) else {
                return fail(Violation::MissingAsset, format!("clip {} references unknown asset {}", c.id, a.asset_id));
            };
            if Some(meta.kind) != track.kind() {
                return fail(
                    Violation::PayloadKind,
                    format!("clip {}: {} asset on {:?}", c.id, meta.kind.as_str(), track),
                );
            }
        }
        _ => {
            return fail(Violation::PayloadKind, format!("clip {} payload does not match track {:?}", c.id, c.track));
        }
    }
    for (side, t) in [("in", c.transition_in), ("out", c.transition_out)] {
        let Some(t) = t else { continue };
        let bad = match t.kind {
            TransitionKind::Cut => (t.duration != 0).then(|| "cut with nonzero duration".to_owned()),
            _ if !c.track.is_broll() => Some("A-roll clips take only cuts".to_owned()),
            _ if t.duration == 0 => Some("blend with zero duration".to_owned()),
            _ if t.duration > c.out_len => Some(format!("duration {} exceeds clip length {}", t.duration, c.out_len)),
            _ if side == "in" && t.duration > c.out_start => {
                Some(format!("duration {} reaches before frame 0", t.duration))
            }
            _ => None,
        };
        if let Some(why) = bad {
            return fail(Violation::Transition, format!("clip {} {side} transition: {why}", c.id));
        }
    }
    Ok(())
}

fn check_sequence(clips: &[&Clip], which: Violation) -> Check {
    for w in clips.windows(2) {
        if w[0].out_end() > w[1].out_start {
            return fail(
                which,
                format!(
                    "clip {} [{}, {}) overlaps clip {} [{}, {})",
                    w[0].id,
                    w[0].out_start,
                    w[0].out_end(),
                    w[1].id,
                    w[1].out_start,
                    w[1].out_end()
                ),
            );
        }
    }
    Ok(())
}

/// Checks every project invariant, reporting the first failure.
pub fn validate_project(p: &TimelineProject) -> Check {
    let mut ids = HashSet::new();
    for c in &p.clips {
        if !ids.insert(c.id.as_str()) {
            return fail(Violation::DuplicateId, format!("clip id {} used twice", c.id));
        }
    }
    for c in &p.clips {
        check_clip(p, c)?;
    }
    for track in Track::ALL {
        let on: Vec<&Clip> = p.clips_on(track).collect();
        if on.windows(2).any(|w| w[0].out_start > w[1].out_start) {
            return fail(Violation::Order, format!("{track:?} clips are not sorted by start"));
        }
        check_sequence(&on, Violation::Overlap)?;
    }
    let mut broll: Vec<&Clip> = p.clips.iter().filter(|c| c.track.is_broll()).collect();
    broll.sort_by_key(|c| c.out_start);
    check_sequence(&broll, Violation::CrossTrackOverlap)?;
    if p.clips_on(Track::ARoll).next().is_none() {
        return fail(Violation::Coverage, "the A-roll track is empty".into());
    }

    let windows = transition_windows(p);
    for pair in windows.windows(2) {
        if pair[0].end > pair[1].start {
            return fail(
                Violation::TransitionOverlap,
                format!(
                    "transitions of clips {} and {} overlap",
                    p.clips[pair[0].clip].id, p.clips[pair[1].clip].id
                ),
            );
        }
    }
    for w in &windows {
        let own = &p.clips[w.clip];
        for b in &broll {
            if b.id == own.id || b.out_end() <= w.start || w.end <= b.out_start {
                continue;
            }
            // Fading in from the still that ends right where this one
            // starts is the one allowed intersection.
            let from_previous = w.side == WindowSide::In && b.out_end() == w.end && b.out_start <= w.start;
            if !from_previous {
                return fail(
                    Violation::TransitionOverlap,
                    format!("transition of clip {} runs into clip {}", own.id, b.id),
                );
            }
        }
    }
    Ok(())
}
