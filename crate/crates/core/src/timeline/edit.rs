use serde::{Deserialize, Serialize};

use super::validate::Violation;
use super::{AssetRef, Clip, ClipPayload, TimelineError, TimelineProject, Track, Transition};
use crate::media::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionSide {
    In,
    Out,
}

/// A single timeline edit, as sent by clients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum EditOp {
    MoveClip {
        clip_id: String,
        out_start: u64,
        /// Another track of the same kind; only meaningful for stills.
        #[serde(default)]
        track: Option<Track>,
    },
    ResizeClip {
        clip_id: String,
        out_len: u64,
    },
    SetSpeed {
        clip_id: String,
        speed: Rational,
    },
    RemoveClip {
        clip_id: String,
    },
    SetTransition {
        clip_id: String,
        side: TransitionSide,
        transition: Option<Transition>,
    },
    /// Places a manifest asset on its track.
    AddClip {
        asset_id: String,
        out_start: u64,
        out_len: u64,
    },
}

fn violation(which: Violation, detail: impl Into<String>) -> TimelineError {
    TimelineError::InvariantViolation {
        which,
        detail: detail.into(),
    }
}

/// Applies `op` to a copy of the project. The copy is returned only if it
/// satisfies every invariant.
pub fn apply_edit(project: &TimelineProject, op: &EditOp) -> Result<TimelineProject, TimelineError> {
    let mut p = project.clone();
    let find = |p: &mut TimelineProject, id: &str| -> Result<usize, TimelineError> {
        p.clips
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| TimelineError::UnknownClip(id.to_owned()))
    };
    match op {
        EditOp::MoveClip { clip_id, out_start, track } => {
            let i = find(&mut p, clip_id)?;
            let c = &mut p.clips[i];
            if let Some(t) = track {
                if t.is_broll() != c.track.is_broll() {
                    return Err(violation(Violation::PayloadKind, format!("clip {clip_id} cannot move to {t:?}")));
                }
                c.track = *t;
            }
            c.out_start = *out_start;
        }
        EditOp::ResizeClip { clip_id, out_len } => {
            let i = find(&mut p, clip_id)?;
            let c = &mut p.clips[i];
            if *out_len == 0 {
                return Err(violation(Violation::OutLen, format!("clip {clip_id} cannot have zero length")));
            }
            c.out_len = *out_len;
            if let ClipPayload::SourceRef(s) = &mut c.payload {
                // Trimming an A-roll clip changes how much source it plays.
                s.src_len = (crate::round_half_up(*out_len as f64 * s.speed.as_f64()).max(1)) as u64;
            }
        }
        EditOp::SetSpeed { clip_id, speed } => {
            let i = find(&mut p, clip_id)?;
            let c = &mut p.clips[i];
            if speed.num == 0 || speed.den == 0 {
                return Err(violation(Violation::Speed, format!("speed {}/{} is not positive", speed.num, speed.den)));
            }
            let ClipPayload::SourceRef(s) = &mut c.payload else {
                return Err(violation(Violation::PayloadKind, format!("clip {clip_id} is a still")));
            };
            s.speed = Rational::new(speed.num, speed.den).expect("den checked");
            c.out_len = s.natural_out_len();
        }
        EditOp::RemoveClip { clip_id } => {
            let i = find(&mut p, clip_id)?;
            p.clips.remove(i);
        }
        EditOp::SetTransition { clip_id, side, transition } => {
            let i = find(&mut p, clip_id)?;
            let c = &mut p.clips[i];
            match side {
                TransitionSide::In => c.transition_in = *transition,
                TransitionSide::Out => c.transition_out = *transition,
            }
        }
        EditOp::AddClip { asset_id, out_start, out_len } => {
            let kind = p
                .assets
                .get(asset_id)
                .map(|m| m.kind)
                .ok_or_else(|| violation(Violation::MissingAsset, format!("asset {asset_id} is not in the manifest")))?;
            let id = p.fresh_clip_id();
            p.clips.push(Clip {
                id,
                track: Track::for_kind(kind),
                out_start: *out_start,
                out_len: *out_len,
                payload: ClipPayload::AssetRef(AssetRef { asset_id: asset_id.clone() }),
                transition_in: None,
                transition_out: None,
            });
        }
    }
    p.normalize();
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::super::{insert_broll, NarrativeGap};
    use super::*;
    use crate::narrative::{BRollKind, NarrativeRole};

    fn with_two_stills() -> TimelineProject {
        let mut p = project(250);
        let ids: Vec<String> = (0..2)
            .map(|i| {
                let a = asset(BRollKind::T3, i);
                let id = a.id.clone();
                p.register_asset(a);
                id
            })
            .collect();
        let g = NarrativeGap {
            role: NarrativeRole::Conclusion,
            anchor: [4.0, 6.0],
            suggested_kind: BRollKind::T3,
            note: String::new(),
        };
        insert_broll(&p, &g, &ids, 60, Transition::CUT).unwrap()
    }

    fn t3_ids(p: &TimelineProject) -> Vec<String> {
        p.clips_on(Track::T3Track).map(|c| c.id.clone()).collect()
    }

    #[test]
    fn move_onto_occupied_span_rejected() {
        let p = with_two_stills();
        let ids = t3_ids(&p);
        let e = apply_edit(&p, &EditOp::MoveClip { clip_id: ids[1].clone(), out_start: 110, track: None }).unwrap_err();
        assert_eq!(e.violation(), Some(Violation::Overlap));
    }

    #[test]
    fn resize_into_free_space() {
        let p = with_two_stills();
        let ids = t3_ids(&p);
        let p = apply_edit(&p, &EditOp::MoveClip { clip_id: ids[1].clone(), out_start: 200, track: None }).unwrap();
        let p = apply_edit(&p, &EditOp::ResizeClip { clip_id: ids[0].clone(), out_len: 45 }).unwrap();
        assert_eq!(p.clip(&ids[0]).unwrap().out_len, 45);
        let e = apply_edit(&p, &EditOp::ResizeClip { clip_id: ids[0].clone(), out_len: 200 }).unwrap_err();
        assert_eq!(e.violation(), Some(Violation::Overlap));
    }

    #[test]
    fn set_speed_halves_length() {
        let p = project(100);
        let p = apply_edit(&p, &EditOp::SetSpeed { clip_id: "c0".into(), speed: Rational::integer(2) }).unwrap();
        assert_eq!(p.clip("c0").unwrap().out_len, 50);
        let e = apply_edit(&p, &EditOp::SetSpeed { clip_id: "c0".into(), speed: Rational { num: 0, den: 1 } }).unwrap_err();
        assert_eq!(e.violation(), Some(Violation::Speed));
    }

    #[test]
    fn unknown_clip() {
        let p = project(10);
        assert!(matches!(
            apply_edit(&p, &EditOp::RemoveClip { clip_id: "nope".into() }),
            Err(TimelineError::UnknownClip(_))
        ));
    }

    #[test]
    fn removing_last_a_roll_clip_rejected() {
        let p = project(10);
        let e = apply_edit(&p, &EditOp::RemoveClip { clip_id: "c0".into() }).unwrap_err();
        assert_eq!(e.violation(), Some(Violation::Coverage));
    }

    #[test]
    fn add_clip_uses_asset_track() {
        let mut p = project(100);
        let a = asset(BRollKind::T2, 7);
        let id = a.id.clone();
        p.register_asset(a);
        let q = apply_edit(&p, &EditOp::AddClip { asset_id: id, out_start: 100, out_len: 20 }).unwrap();
        let c = q.clips_on(Track::T2Track).next().unwrap();
        assert_eq!((c.out_start, c.out_len), (100, 20));
        assert_eq!(q.output_len(), 120);
    }

    #[test]
    fn a_roll_reorder_through_a_hole() {
        let p = with_two_stills();
        let a: Vec<String> = p.clips_on(Track::ARoll).map(|c| c.id.clone()).collect();
        // a[0] is [0,100), a[1] is [160,310); swap their order.
        let p = apply_edit(&p, &EditOp::MoveClip { clip_id: a[0].clone(), out_start: 310, track: None }).unwrap();
        let p = apply_edit(&p, &EditOp::MoveClip { clip_id: a[1].clone(), out_start: 0, track: None }).unwrap();
        let order: Vec<&str> = p.clips_on(Track::ARoll).map(|c| c.id.as_str()).collect();
        assert_eq!(order, vec![a[1].as_str(), a[0].as_str()]);
    }

    #[test]
    fn edit_json_shape() {
        let op: EditOp = serde_json::from_str(r#"{"op": "move_clip", "clip_id": "c3", "out_start": 12}"#).unwrap();
        assert_eq!(op, EditOp::MoveClip { clip_id: "c3".into(), out_start: 12, track: None });
        let op: EditOp = serde_json::from_str(
            r#"{"op": "set_transition", "clip_id": "c3", "side": "in", "transition": {"kind": "wipe", "duration": 4}}"#,
        )
        .unwrap();
        assert!(matches!(op, EditOp::SetTransition { side: TransitionSide::In, .. }));
        assert!(serde_json::from_str::<EditOp>(r#"{"op": "explode", "clip_id": "c3"}"#).is_err());
    }
}
