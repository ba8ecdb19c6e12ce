use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::media::Rational;
use crate::timeline::{TimelineProject, Track, TransitionKind};
use crate::timeline::{transition_windows, WindowSide};

/// Content of one layer of an output frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    SourceFrame { frame: u64 },
    AssetStill { asset_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Instruction {
    SourceFrame { frame: u64 },
    AssetStill { asset_id: String },
    Blend { from: Layer, to: Layer, alpha: f64, transition: TransitionKind },
}

impl From<Layer> for Instruction {
    fn from(l: Layer) -> Self {
        match l {
            Layer::SourceFrame { frame } => Instruction::SourceFrame { frame },
            Layer::AssetStill { asset_id } => Instruction::AssetStill { asset_id },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderPlan {
    pub width: u32,
    pub height: u32,
    pub frame_rate: Rational,
    pub instructions: Vec<Instruction>,
}

impl RenderPlan {
    pub fn len(&self) -> u64 {
        self.instructions.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }
}

/// One instruction per output frame. Stills sit above the A-roll; frames
/// no clip covers hold the most recent A-roll frame (or the next one when
/// nothing precedes them).
pub fn plan(project: &TimelineProject) -> Result<RenderPlan, RenderError> {
    project.validate()?;
    let total = project.output_len();
    if total == 0 {
        return Err(RenderError::EmptyTimeline);
    }
    let n = total as usize;
    let mut base: Vec<Option<Layer>> = vec![None; n];
    for c in project.clips_on(Track::ARoll) {
        let s = c.source().expect("validated A-roll clip");
        for o in 0..c.out_len {
            base[(c.out_start + o) as usize] = Some(Layer::SourceFrame { frame: s.source_at(o) });
        }
    }
    for c in project.clips.iter().filter(|c| c.track.is_broll()) {
        let id = c.asset_id().expect("validated still").to_owned();
        for f in c.out_start..c.out_end() {
            base[f as usize] = Some(Layer::AssetStill { asset_id: id.clone() });
        }
    }
    // Holds: carry the last A-roll frame forward, then fill a leading hole
    // from the first A-roll frame.
    let mut last: Option<Layer> = None;
    let mut a_roll_at = vec![None; n];
    for c in project.clips_on(Track::ARoll) {
        let s = c.source().expect("validated A-roll clip");
        for o in 0..c.out_len {
            a_roll_at[(c.out_start + o) as usize] = Some(s.source_at(o));
        }
    }
    let first_a = a_roll_at.iter().flatten().next().copied().expect("A-roll is not empty");
    for f in 0..n {
        if let Some(frame) = a_roll_at[f] {
            last = Some(Layer::SourceFrame { frame });
        }
        if base[f].is_none() {
            base[f] = Some(last.clone().unwrap_or(Layer::SourceFrame { frame: first_a }));
        }
    }
    let mut instructions: Vec<Instruction> = base.into_iter().map(|l| l.expect("filled").into()).collect();

    for w in transition_windows(project) {
        let own = Layer::AssetStill {
            asset_id: project.clips[w.clip].asset_id().expect("windows belong to stills").to_owned(),
        };
        for f in w.start..w.end.min(total) {
            let under = match &instructions[f as usize] {
                Instruction::SourceFrame { frame } => Layer::SourceFrame { frame: *frame },
                Instruction::AssetStill { asset_id } => Layer::AssetStill { asset_id: asset_id.clone() },
                Instruction::Blend { .. } => unreachable!("transition windows are disjoint"),
            };
            let (from, to, alpha) = match w.side {
                WindowSide::In => (under, own.clone(), super::alpha_curve(f - w.start, w.duration)),
                WindowSide::Out => (own.clone(), under, super::alpha_curve(f - w.start + 1, w.duration)),
            };
            instructions[f as usize] = Instruction::Blend { from, to, alpha, transition: w.kind };
        }
    }
    Ok(RenderPlan {
        width: project.media.width,
        height: project.media.height,
        frame_rate: project.media.frame_rate,
        instructions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::broll::{asset_id, AssetMeta};
    use crate::media::MediaInfo;
    use crate::narrative::{BRollKind, NarrativeGap, NarrativeRole};
    use crate::timeline::{apply_edit, insert_broll, EditOp, PipelineConfig, Transition};

    fn project(frames: u64, speed: Rational) -> TimelineProject {
        let media = MediaInfo::new(8, 4, Rational::integer(25), frames).unwrap();
        TimelineProject::new(media, "x", PipelineConfig { playback_speed: speed, ..Default::default() })
    }

    fn with_still(p: &mut TimelineProject, kind: BRollKind, n: u32) -> String {
        let prompt = format!("p{n}");
        let id = asset_id(kind, &prompt, None);
        p.register_asset(AssetMeta {
            id: id.clone(),
            kind,
            caption: String::new(),
            prompt_text: prompt,
            source_frame: None,
            gap_hint: None,
            needs_review: false,
            width: 4,
            height: 4,
        });
        id
    }

    fn gap(kind: BRollKind, s: f64) -> NarrativeGap {
        NarrativeGap { role: NarrativeRole::Conflict, anchor: [s, s + 1.0], suggested_kind: kind, note: String::new() }
    }

    #[test]
    fn identity_plan() {
        let p = plan(&project(12, Rational::integer(1))).unwrap();
        assert_eq!(p.len(), 12);
        for (i, ins) in p.instructions.iter().enumerate() {
            assert_eq!(ins, &Instruction::SourceFrame { frame: i as u64 });
        }
    }

    #[test]
    fn double_speed_every_second_frame() {
        let p = plan(&project(100, Rational::integer(2))).unwrap();
        assert_eq!(p.len(), 50);
        for (i, ins) in p.instructions.iter().enumerate() {
            assert_eq!(ins, &Instruction::SourceFrame { frame: 2 * i as u64 });
        }
    }

    #[test]
    fn still_with_cuts() {
        let mut p = project(50, Rational::integer(1));
        let id = with_still(&mut p, BRollKind::T1, 0);
        let p = insert_broll(&p, &gap(BRollKind::T1, 1.0), &[id.clone()], 30, Transition::CUT).unwrap();
        let rp = plan(&p).unwrap();
        assert_eq!(rp.len(), 80);
        let stills = rp.instructions.iter().filter(|i| **i == Instruction::AssetStill { asset_id: id.clone() }).count();
        assert_eq!(stills, 30);
        assert_eq!(rp.instructions[24], Instruction::SourceFrame { frame: 24 });
        assert_eq!(rp.instructions[55], Instruction::SourceFrame { frame: 25 });
    }

    #[test]
    fn fades_are_endpoint_exact() {
        let mut p = project(50, Rational::integer(1));
        let id = with_still(&mut p, BRollKind::T3, 0);
        let p = insert_broll(&p, &gap(BRollKind::T3, 1.0), &[id.clone()], 20, Transition::cross_fade(4)).unwrap();
        let rp = plan(&p).unwrap();
        // still at [25, 45); in-window [21, 25), out-window [45, 49)
        assert_eq!(
            rp.instructions[21],
            Instruction::Blend {
                from: Layer::SourceFrame { frame: 21 },
                to: Layer::AssetStill { asset_id: id.clone() },
                alpha: 0.0,
                transition: TransitionKind::CrossFade
            }
        );
        assert!(matches!(rp.instructions[24], Instruction::Blend { alpha, .. } if alpha == 0.75));
        assert_eq!(rp.instructions[25], Instruction::AssetStill { asset_id: id.clone() });
        assert_eq!(rp.instructions[44], Instruction::AssetStill { asset_id: id.clone() });
        assert!(matches!(rp.instructions[45], Instruction::Blend { alpha, .. } if alpha == 0.25));
        assert_eq!(
            rp.instructions[48],
            Instruction::Blend {
                from: Layer::AssetStill { asset_id: id },
                to: Layer::SourceFrame { frame: 28 },
                alpha: 1.0,
                transition: TransitionKind::CrossFade
            }
        );
        assert_eq!(rp.instructions[49], Instruction::SourceFrame { frame: 29 });
    }

    #[test]
    fn holes_hold_previous_frame() {
        let p = project(20, Rational::integer(1));
        let p = apply_edit(&p, &EditOp::MoveClip { clip_id: "c0".into(), out_start: 5, track: None }).unwrap();
        let rp = plan(&p).unwrap();
        assert_eq!(rp.len(), 25);
        assert!(rp.instructions[..5].iter().all(|i| *i == Instruction::SourceFrame { frame: 0 }));
        assert_eq!(rp.instructions[5], Instruction::SourceFrame { frame: 0 });
        assert_eq!(rp.instructions[24], Instruction::SourceFrame { frame: 19 });
    }
}
