use crate::genai::{templates, Gateway, StyleSpec};
use crate::highlight::HighlightSpan;
use crate::narrative::{
    contextual_subjects, freeze_subject, BRollKind, NarrativeGap, VideoUnderstanding,
};
use crate::Frame;

use super::{BRollAsset, BRollError};

/// Reaction stills per gap at density 1.
pub const DEFAULT_CONTEXTUAL_COUNT: usize = 2;

/// Index of the highest energy, earliest on ties.
pub fn select_key_frame(energies: &[f64]) -> Option<usize> {
    key_frame_order(energies).first().copied()
}

/// Indices by descending energy, earlier first on ties.
pub fn key_frame_order(energies: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[b].total_cmp(&energies[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone)]
pub struct FreezeRequest<'a> {
    pub highlight: &'a HighlightSpan,
    /// Sampled source frame indices within the highlight and their motion
    /// energies.
    pub samples: &'a [(u64, f64)],
    pub sport: &'a str,
    /// Short description of the action, placed in the prompt.
    pub moment: &'a str,
    pub style: &'a StyleSpec,
}

pub fn make_freeze_frame(
    req: &FreezeRequest<'_>,
    gateway: &Gateway,
    frame_at: impl FnMut(u64) -> Result<Frame, BRollError>,
) -> Result<BRollAsset, BRollError> {
    Ok(make_freeze_frames(req, 1, gateway, frame_at)?.remove(0))
}

/// `count` stills from the `count` most energetic distinct samples, in
/// energy order.
pub fn make_freeze_frames(
    req: &FreezeRequest<'_>,
    count: usize,
    gateway: &Gateway,
    mut frame_at: impl FnMut(u64) -> Result<Frame, BRollError>,
) -> Result<Vec<BRollAsset>, BRollError> {
    if req.highlight.shot.is_empty() {
        return Err(BRollError::Precondition("highlight shot is empty".into()));
    }
    let inside: Vec<(u64, f64)> = req
        .samples
        .iter()
        .copied()
        .filter(|(i, _)| req.highlight.shot.contains(*i))
        .collect();
    let inside = if inside.is_empty() {
        vec![(req.highlight.shot.start, 0.0)]
    } else {
        inside
    };
    let energies: Vec<f64> = inside.iter().map(|s| s.1).collect();
    let subject = freeze_subject(req.sport, req.highlight.sentiment, req.moment)?;
    key_frame_order(&energies)
        .into_iter()
        .take(count.max(1))
        .map(|k| {
            let index = inside[k].0;
            let reference = frame_at(index)?;
            let generated = gateway.generate_image(&subject, Some(&reference), req.style)?;
            let caption = format!("Freeze-frame: {} ({})", req.moment, req.highlight.sentiment.as_str());
            Ok(BRollAsset::from_generated(BRollKind::T1, generated, caption, Some(index), None))
        })
        .collect()
}

/// Career stages as stills, all or nothing.
pub fn make_career_showcase(
    athlete: &str,
    sport: &str,
    stage_count: usize,
    style: &StyleSpec,
    gap_hint: Option<&NarrativeGap>,
    gateway: &Gateway,
) -> Result<Vec<BRollAsset>, BRollError> {
    if athlete.trim().is_empty() {
        return Err(BRollError::Precondition("athlete name is empty".into()));
    }
    if stage_count == 0 {
        return Err(BRollError::Precondition("stage count must be at least 1".into()));
    }
    let stages = gateway.athlete_career(athlete, sport, stage_count)?;
    let drawing = templates::CAREER_DRAWING.render(&[("sport", sport), ("palette", style.palette.directive())]).map_err(crate::genai::GenAiError::from)?;
    stages
        .iter()
        .enumerate()
        .map(|(i, stage)| {
            let subject = format!("{drawing}\n\n{}, stage {}: {stage}", athlete.trim(), i + 1);
            let generated = gateway.generate_image(&subject, None, style)?;
            let caption = format!("Stage {}: {stage}", i + 1);
            Ok(BRollAsset::from_generated(BRollKind::T2, generated, caption, None, gap_hint.cloned()))
        })
        .collect()
}

#[derive(Debug, Default)]
pub struct ContextualBatch {
    pub assets: Vec<BRollAsset>,
    /// Position in the requested list and the error text.
    pub failures: Vec<(usize, String)>,
}

/// Reaction stills for a gap. Each item succeeds or fails on its own.
pub fn make_contextual(
    gap: &NarrativeGap,
    understanding: &VideoUnderstanding,
    style: &StyleSpec,
    count: usize,
    gateway: &Gateway,
) -> Result<ContextualBatch, BRollError> {
    if count == 0 {
        return Err(BRollError::Precondition("count must be at least 1".into()));
    }
    let context = crate::narrative::gap_context_text(gap);
    let mut batch = ContextualBatch::default();
    for (i, subject) in contextual_subjects(understanding, count).into_iter().enumerate() {
        let result = crate::narrative::contextual_subject_text(&subject, &understanding.sport, &context)
            .map_err(BRollError::from)
            .and_then(|text| Ok(gateway.generate_image(&text, None, style)?));
        match result {
            Ok(generated) => batch.assets.push(BRollAsset::from_generated(
                BRollKind::T3,
                generated,
                format!("Reaction: {subject}"),
                None,
                Some(gap.clone()),
            )),
            Err(e) => {
                tracing::warn!(item = i, error = %e, "contextual still skipped");
                batch.failures.push((i, e.to_string()));
            }
        }
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genai::stub::StubTransport;
    use crate::genai::{FixtureStore, GatewayMode, RetryPolicy, TransportError};
    use crate::narrative::{identify_gaps, propose_fills, Entity, EntityRole, FillContext, NarrativeRole};
    use crate::highlight::Sentiment;
    use crate::shots::Shot;
    use std::sync::Arc;

    fn span(start: u64, end: u64) -> HighlightSpan {
        HighlightSpan {
            shot: Shot::new(start, end),
            score: 2.0,
            sentiment: Sentiment::Excitement,
            rank: 1,
            fallback_scored: false,
        }
    }

    fn frames(i: u64) -> Result<Frame, BRollError> {
        Ok(Frame::filled(i, 0.0, 16, 16, [(i * 20) as u8, 50, 90]))
    }

    fn stub_gateway() -> Gateway {
        Gateway::new(Arc::new(StubTransport::new()), GatewayMode::Live)
    }

    fn understanding(entities: Vec<Entity>) -> VideoUnderstanding {
        VideoUnderstanding { summary: "s".into(), sport: "basketball".into(), entities }
    }

    #[test]
    fn key_frame_rules() {
        assert_eq!(select_key_frame(&[3.0]), Some(0));
        assert_eq!(select_key_frame(&[5.0, 5.0]), Some(0));
        assert_eq!(select_key_frame(&[1.0, 9.0, 3.0]), Some(1));
        assert_eq!(select_key_frame(&[]), None);
        assert_eq!(key_frame_order(&[1.0, 9.0, 3.0, 9.0]), vec![1, 3, 2, 0]);
    }

    #[test]
    fn freeze_frame_uses_energy_argmax() {
        let g = stub_gateway();
        let h = span(10, 13);
        let samples = [(10, 1.0), (11, 9.0), (12, 3.0)];
        let style = StyleSpec::default();
        let req = FreezeRequest { highlight: &h, samples: &samples, sport: "basketball", moment: "the dunk", style: &style };
        let a = make_freeze_frame(&req, &g, frames).unwrap();
        assert_eq!(a.meta.kind, BRollKind::T1);
        assert_eq!(a.meta.source_frame, Some(11));
        assert!(a.meta.prompt_text.contains("should be 50%"));
        assert_eq!(a.meta.id, super::super::asset_id(BRollKind::T1, &a.meta.prompt_text, Some(11)));
        let b = make_freeze_frame(&req, &g, frames).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_frame_highlight() {
        let g = stub_gateway();
        let h = span(7, 8);
        let style = StyleSpec::default();
        let req = FreezeRequest { highlight: &h, samples: &[(7, 0.0)], sport: "x", moment: "m", style: &style };
        assert_eq!(make_freeze_frame(&req, &g, frames).unwrap().meta.source_frame, Some(7));
    }

    #[test]
    fn career_counts_and_all_or_nothing() {
        let g = stub_gateway();
        let style = StyleSpec::default();
        let one = make_career_showcase("Kai Moreno", "basketball", 1, &style, None, &g).unwrap();
        assert_eq!(one.len(), 1);
        let three = make_career_showcase("Kai Moreno", "basketball", 3, &style, None, &g).unwrap();
        assert_eq!(three.len(), 3);
        assert!(three.iter().all(|a| a.meta.kind == BRollKind::T2 && a.meta.prompt_text.contains("Use no more than two storyboards")));
        assert!(three[0].meta.caption.starts_with("Stage 1:"));
        assert!(matches!(
            make_career_showcase(" ", "basketball", 1, &style, None, &g),
            Err(BRollError::Precondition(_))
        ));

        let stub = Arc::new(StubTransport::new());
        stub.push_reply(Ok(b"Stage 1: a\nStage 2: b".to_vec()));
        stub.push_reply(Ok(StubTransport::respond(&crate::genai::ServiceRequest::new(
            crate::genai::ServiceKind::GenerateImage,
            serde_json::json!({"prompt": "p"}),
            serde_json::json!({}),
        )).unwrap()));
        stub.push_reply(Err(TransportError::Permanent("down".into())));
        let g = Gateway::new(stub, GatewayMode::Live).with_retry(RetryPolicy::immediate());
        assert!(make_career_showcase("Kai", "basketball", 2, &style, None, &g).is_err());
    }

    #[test]
    fn contextual_cycling_fallback_and_replay() {
        let g = stub_gateway();
        let style = StyleSpec::default();
        let gap = NarrativeGap { role: NarrativeRole::Conclusion, anchor: [8.0, 10.0], suggested_kind: BRollKind::T3, note: String::new() };
        let coach = understanding(vec![Entity { name: "the head coach".into(), role: EntityRole::Coach }]);
        let b = make_contextual(&gap, &coach, &style, 2, &g).unwrap();
        assert_eq!(b.assets.len(), 2);
        assert!(b.assets.iter().all(|a| a.meta.prompt_text.contains("the head coach") && a.meta.gap_hint.as_ref() == Some(&gap)));
        let nobody = understanding(vec![]);
        let b = make_contextual(&gap, &nobody, &style, 1, &g).unwrap();
        assert!(b.assets[0].meta.prompt_text.contains("spectators in the stands"));

        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::new(dir.path());
        let rec = Gateway::new(Arc::new(StubTransport::new()), GatewayMode::Record(store.clone()));
        let recorded = make_contextual(&gap, &coach, &style, 2, &rec).unwrap();
        let replayed = make_contextual(&gap, &coach, &style, 2, &Gateway::replay(store)).unwrap();
        let ids = |b: &ContextualBatch| b.assets.iter().map(|a| (a.meta.id.clone(), a.png.clone())).collect::<Vec<_>>();
        assert_eq!(ids(&recorded), ids(&replayed));
    }

    #[test]
    fn contextual_partial_failure() {
        let stub = Arc::new(StubTransport::new());
        stub.push_reply(Err(TransportError::Permanent("down".into())));
        let g = Gateway::new(stub, GatewayMode::Live).with_retry(RetryPolicy::immediate());
        let gap = NarrativeGap { role: NarrativeRole::Conflict, anchor: [0.0, 1.0], suggested_kind: BRollKind::T3, note: "n".into() };
        let b = make_contextual(&gap, &understanding(vec![]), &StyleSpec::default(), 2, &g).unwrap();
        assert_eq!(b.assets.len(), 1);
        assert_eq!(b.failures.len(), 1);
        assert_eq!(b.failures[0].0, 0);
    }

    #[test]
    fn suggestion_prompt_matches_generated_t3() {
        let style = StyleSpec::default();
        let u = understanding(vec![Entity { name: "the coach".into(), role: EntityRole::Coach }]);
        let outline = crate::narrative::NarrativeOutline {
            elements: NarrativeRole::ALL
                .iter()
                .map(|&role| crate::narrative::NarrativeElement {
                    role,
                    status: if role == NarrativeRole::Conflict { crate::narrative::ElementStatus::Missing } else { crate::narrative::ElementStatus::Covered },
                    anchor: [0.0, 1.0],
                    note: "tempers flare".into(),
                })
                .collect(),
        };
        let gaps = identify_gaps(&outline);
        let ctx = FillContext { style: &style, athlete_name: None, stage_count: 1, sentiment: Sentiment::Anger };
        let fills = propose_fills(&gaps, &u, &ctx).unwrap();
        let batch = make_contextual(&gaps[0], &u, &style, 1, &stub_gateway()).unwrap();
        assert_eq!(fills[0].prompt_text, batch.assets[0].meta.prompt_text);
    }
}
