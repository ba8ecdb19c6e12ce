use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::run::{moment_text, top_sentiment};
use super::{PipelineEnv, PipelineError, Workspace};
use crate::broll::{
    make_career_showcase, make_contextual, make_freeze_frames, AssetMeta, BRollAsset, BRollError, FreezeRequest,
    DEFAULT_CONTEXTUAL_COUNT,
};
use crate::narrative::{athlete_for, propose_fills, BRollKind, FillContext, FillSuggestion, NarrativeGap};
use crate::render::{DecoderSource, SourceFrames};
use crate::timeline::{SuggestionLevel, TimelineProject};

/// An entry in the suggestion library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Suggestion {
    Prompt(FillSuggestion),
    Asset(AssetMeta),
    /// Generation for a gap failed; other suggestions are still returned.
    Failed { gap: NarrativeGap, error: String },
}

/// Suggestions for the project's gaps at the given level. Proactive
/// suggestions generate stills, save them to the workspace and add them to
/// the project manifest; the caller persists the project.
pub fn suggest(
    project: &mut TimelineProject,
    level: SuggestionLevel,
    env: &PipelineEnv,
    workspace: &Workspace,
) -> Result<Vec<Suggestion>, PipelineError> {
    if level == SuggestionLevel::Off {
        return Ok(Vec::new());
    }
    let understanding = project
        .narrative
        .understanding
        .clone()
        .ok_or_else(|| PipelineError::Precondition("project has not been analyzed".into()))?;
    if project.gaps.is_empty() {
        return Ok(Vec::new());
    }
    let config = project.config.clone();
    let spans: Vec<_> = project.narrative.highlights.iter().map(|h| h.span.clone()).collect();
    let ctx = FillContext {
        style: &config.style,
        athlete_name: config.athlete_name.as_deref(),
        stage_count: config.stage_count,
        sentiment: top_sentiment(&spans),
    };
    let mut out: Vec<Suggestion> = propose_fills(&project.gaps, &understanding, &ctx)?
        .into_iter()
        .map(Suggestion::Prompt)
        .collect();
    if level == SuggestionLevel::OnDemand {
        return Ok(out);
    }

    let gateway = env.gateway.as_ref();
    let frames = Mutex::new(DecoderSource::new(env.decoder.clone(), &project.source, project.media.clone()));
    let frame_at = |i: u64| {
        frames
            .lock()
            .expect("frame source lock")
            .frame(i)
            .map_err(|e| BRollError::FrameUnavailable { index: i, detail: e.to_string() })
    };
    let store = workspace.assets();
    std::fs::create_dir_all(store.dir())?;
    let sport = understanding.sport.clone();
    let gaps = project.gaps.clone();
    for gap in &gaps {
        let made: Result<Vec<BRollAsset>, BRollError> = match gap.suggested_kind {
            BRollKind::T1 => match project.narrative.highlights.iter().min_by_key(|h| h.span.rank) {
                None => Err(BRollError::Precondition("no highlight to freeze".into())),
                Some(rec) => {
                    let moment = moment_text(&project.narrative.captions, &rec.span);
                    let req = FreezeRequest {
                        highlight: &rec.span,
                        samples: &rec.samples,
                        sport: &sport,
                        moment: &moment,
                        style: &config.style,
                    };
                    make_freeze_frames(&req, config.density, gateway, frame_at)
                }
            },
            BRollKind::T2 => {
                let athlete = athlete_for(config.athlete_name.as_deref(), &understanding);
                make_career_showcase(athlete, &sport, config.stage_count, &config.style, Some(gap), gateway)
            }
            BRollKind::T3 => make_contextual(
                gap,
                &understanding,
                &config.style,
                DEFAULT_CONTEXTUAL_COUNT * config.density,
                gateway,
            )
            .map(|b| {
                for (_, e) in b.failures {
                    out.push(Suggestion::Failed { gap: gap.clone(), error: e });
                }
                b.assets
            }),
        };
        match made {
            Ok(assets) => {
                for a in assets {
                    store.save(&a)?;
                    project.register_asset(a.meta.clone());
                    out.push(Suggestion::Asset(a.meta));
                }
            }
            Err(e) => {
                tracing::warn!(role = gap.role.as_str(), error = %e, "suggestion generation failed");
                out.push(Suggestion::Failed { gap: gap.clone(), error: e.to_string() });
            }
        }
    }
    Ok(out)
}
