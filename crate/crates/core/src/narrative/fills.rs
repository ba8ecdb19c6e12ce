use serde::{Deserialize, Serialize};

use super::outline::fmt_secs;
use super::{
    BRollKind, ElementStatus, EntityRole, NarrativeError, NarrativeGap, NarrativeOutline,
    VideoUnderstanding,
};
use crate::genai::{assemble_image_prompt, templates, GenAiError, StyleSpec};
use crate::highlight::Sentiment;

/// Subject used for reaction shots when no teammate, coach or spectator was
/// identified.
pub const GENERIC_REACTION_SUBJECT: &str = "spectators in the stands";

/// One gap per missing element, ordered by anchor start (role order on
/// ties).
pub fn identify_gaps(outline: &NarrativeOutline) -> Vec<NarrativeGap> {
    let mut gaps: Vec<NarrativeGap> = outline
        .elements
        .iter()
        .filter(|e| e.status == ElementStatus::Missing)
        .map(|e| NarrativeGap {
            role: e.role,
            anchor: e.anchor,
            suggested_kind: e.role.fill_kind(),
            note: e.note.clone(),
        })
        .collect();
    gaps.sort_by(|a, b| a.anchor[0].total_cmp(&b.anchor[0]).then(a.role.cmp(&b.role)));
    gaps
}

#[derive(Debug, Clone, PartialEq)]
pub struct FillContext<'a> {
    pub style: &'a StyleSpec,
    pub athlete_name: Option<&'a str>,
    pub stage_count: usize,
    /// Sentiment of the top highlight, used for freeze-frame prompts.
    pub sentiment: Sentiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillSuggestion {
    pub gap: NarrativeGap,
    /// Exact text that would be sent to the service.
    pub prompt_text: String,
    pub kind: BRollKind,
}

pub fn freeze_subject(sport: &str, sentiment: Sentiment, moment: &str) -> Result<String, GenAiError> {
    Ok(templates::FREEZE_MOMENT.render(&[
        ("sport", sport),
        ("sentiment", sentiment.as_str()),
        ("moment", moment),
    ])?)
}

/// `count` reaction subjects, cycling through the non-athlete people in the
/// understanding.
pub fn contextual_subjects(understanding: &VideoUnderstanding, count: usize) -> Vec<String> {
    let people: Vec<String> = understanding
        .entities
        .iter()
        .filter(|e| matches!(e.role, EntityRole::Teammate | EntityRole::Coach | EntityRole::Spectator))
        .map(|e| e.name.trim().to_owned())
        .collect();
    if people.is_empty() {
        return vec![GENERIC_REACTION_SUBJECT.to_owned(); count];
    }
    people.iter().cycle().take(count).cloned().collect()
}

/// Subject line of a reaction still; the image prompt wraps it.
pub fn contextual_subject_text(subject: &str, sport: &str, context: &str) -> Result<String, GenAiError> {
    Ok(templates::CONTEXTUAL.render(&[
        ("subject", subject),
        ("sport", sport),
        ("context", context),
    ])?)
}

/// The gap's note, or a description of its role and span.
pub fn gap_context_text(gap: &NarrativeGap) -> String {
    if gap.note.trim().is_empty() {
        format!(
            "the {} of the game, {} s to {} s",
            gap.role.as_str(),
            fmt_secs(gap.anchor[0]),
            fmt_secs(gap.anchor[1])
        )
    } else {
        gap.note.trim().to_owned()
    }
}

pub fn career_prompt(athlete: &str, sport: &str, stages: usize) -> Result<String, GenAiError> {
    Ok(templates::ATHLETE_JOURNEY.render(&[
        ("sport", sport),
        ("athlete", athlete),
        ("stages", &stages.to_string()),
    ])?)
}

pub fn athlete_for<'a>(ctx_name: Option<&'a str>, understanding: &'a VideoUnderstanding) -> &'a str {
    ctx_name
        .map(str::trim)
        .filter(|n| !n.is_empty())
        .or_else(|| understanding.athlete())
        .unwrap_or("the featured athlete")
}

/// One prompt per gap. Image gaps get the full outgoing image prompt; the
/// career gap gets the text request that starts the showcase.
pub fn propose_fills(
    gaps: &[NarrativeGap],
    understanding: &VideoUnderstanding,
    ctx: &FillContext<'_>,
) -> Result<Vec<FillSuggestion>, NarrativeError> {
    if gaps.is_empty() {
        return Err(NarrativeError::Precondition("no gaps to fill".into()));
    }
    let wrap = |e: GenAiError| NarrativeError::LlmServiceError(e);
    let sport = understanding.sport.as_str();
    gaps.iter()
        .map(|gap| {
            let prompt_text = match gap.suggested_kind {
                BRollKind::T1 => {
                    let subject = freeze_subject(sport, ctx.sentiment, &gap_context_text(gap)).map_err(wrap)?;
                    assemble_image_prompt(&subject, true, ctx.style).map_err(wrap)?
                }
                BRollKind::T2 => career_prompt(athlete_for(ctx.athlete_name, understanding), sport, ctx.stage_count.max(1))
                    .map_err(wrap)?,
                BRollKind::T3 => {
                    let subject = &contextual_subjects(understanding, 1)[0];
                    let text = contextual_subject_text(subject, sport, &gap_context_text(gap)).map_err(wrap)?;
                    assemble_image_prompt(&text, false, ctx.style).map_err(wrap)?
                }
            };
            Ok(FillSuggestion {
                gap: gap.clone(),
                prompt_text,
                kind: gap.suggested_kind,
            })
        })
        .collect()
}
