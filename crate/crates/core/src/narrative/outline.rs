use serde::Deserialize;

use super::{
    Caption, NarrativeElement, NarrativeError, NarrativeOutline, NarrativeRole, VideoUnderstanding,
};
use crate::genai::templates::{self, Template};
use crate::genai::{CompletionParams, Gateway};
use crate::highlight::HighlightSpan;
use crate::media::MediaInfo;

const PARAMS: CompletionParams = CompletionParams {
    max_tokens: 1024,
    temperature: 0.2,
};

/// Seconds with at most three decimals and no trailing zeros.
pub(crate) fn fmt_secs(x: f64) -> String {
    let s = format!("{x:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" { "0".into() } else { s.to_owned() }
}

/// Drops an optional markdown code fence around a JSON answer.
fn json_body(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

pub fn parse_understanding(text: &str) -> Result<VideoUnderstanding, String> {
    let mut u: VideoUnderstanding = serde_json::from_str(json_body(text)).map_err(|e| e.to_string())?;
    u.summary = u.summary.trim().to_owned();
    u.sport = u.sport.trim().to_lowercase();
    if u.summary.is_empty() {
        return Err("summary is empty".into());
    }
    if u.sport.is_empty() {
        return Err("sport is empty".into());
    }
    if u.entities.iter().any(|e| e.name.trim().is_empty()) {
        return Err("entity with empty name".into());
    }
    Ok(u)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutline {
    elements: Vec<NarrativeElement>,
}

/// Parses and normalizes an outline: each role exactly once, role order,
/// anchors clamped into `[0, duration]`.
pub fn parse_outline(text: &str, duration: f64) -> Result<NarrativeOutline, String> {
    let raw: RawOutline = serde_json::from_str(json_body(text)).map_err(|e| e.to_string())?;
    let mut elements = Vec::with_capacity(4);
    for role in NarrativeRole::ALL {
        let mut found = raw.elements.iter().filter(|e| e.role == role);
        let el = found
            .next()
            .ok_or_else(|| format!("role {} is missing", role.as_str()))?;
        if found.next().is_some() {
            return Err(format!("role {} appears more than once", role.as_str()));
        }
        let [s, e] = el.anchor;
        if !s.is_finite() || !e.is_finite() || s > e {
            return Err(format!("invalid anchor [{s}, {e}] for {}", role.as_str()));
        }
        let clamp = |v: f64| v.clamp(0.0, duration);
        elements.push(NarrativeElement {
            anchor: [clamp(s), clamp(e)],
            ..el.clone()
        });
    }
    Ok(NarrativeOutline { elements })
}

/// Asks once, then once more with a format-repair note.
fn ask_structured<T>(
    gateway: &Gateway,
    template: &Template,
    prompt: &str,
    what: &'static str,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<T, NarrativeError> {
    let first = gateway
        .complete_templated(template, prompt, PARAMS)
        .map_err(NarrativeError::LlmServiceError)?;
    let problem = match parse(&first) {
        Ok(v) => return Ok(v),
        Err(p) => p,
    };
    tracing::warn!(what, %problem, "malformed response; asking again");
    let repair = templates::FORMAT_REPAIR
        .render(&[("problem", &problem)])
        .map_err(|e| NarrativeError::LlmServiceError(e.into()))?;
    let second = gateway
        .complete_templated(template, &format!("{prompt}{repair}"), PARAMS)
        .map_err(NarrativeError::LlmServiceError)?;
    parse(&second).map_err(|detail| NarrativeError::UnparseableResponse { what, detail })
}

pub fn build_understanding(
    captions: &[Caption],
    media: &MediaInfo,
    gateway: &Gateway,
) -> Result<VideoUnderstanding, NarrativeError> {
    if captions.is_empty() {
        return Err(NarrativeError::Precondition("no captions to aggregate".into()));
    }
    let lines = captions
        .iter()
        .map(|c| format!("- {}: {}", fmt_secs(media.timestamp_of(c.frame_index)), c.text.trim()))
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = templates::UNDERSTANDING
        .render(&[("duration", &fmt_secs(media.duration)), ("captions", &lines)])
        .map_err(|e| NarrativeError::LlmServiceError(e.into()))?;
    ask_structured(gateway, &templates::UNDERSTANDING, &prompt, "understanding", parse_understanding)
}

fn span_seconds(h: &HighlightSpan, media: &MediaInfo) -> [f64; 2] {
    [media.timestamp_of(h.shot.start), media.timestamp_of(h.shot.end)]
}

pub fn extract_narrative(
    understanding: &VideoUnderstanding,
    highlights: &[HighlightSpan],
    media: &MediaInfo,
    gateway: &Gateway,
) -> Result<NarrativeOutline, NarrativeError> {
    let duration = media.duration;
    if !(duration > 0.0) {
        return Err(NarrativeError::Precondition("duration must be positive".into()));
    }
    let entities = if understanding.entities.is_empty() {
        "none identified".to_owned()
    } else {
        understanding
            .entities
            .iter()
            .map(|e| format!("{} ({})", e.name, serde_json::to_value(e.role).unwrap().as_str().unwrap()))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let spans = if highlights.is_empty() {
        "- none detected".to_owned()
    } else {
        highlights
            .iter()
            .map(|h| {
                let [s, e] = span_seconds(h, media);
                format!("- {}-{}: {}", fmt_secs(s), fmt_secs(e), h.sentiment.as_str())
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let prompt = templates::NARRATIVE
        .render(&[
            ("sport", &understanding.sport),
            ("duration", &fmt_secs(duration)),
            ("summary", &understanding.summary),
            ("entities", &entities),
            ("highlights", &spans),
        ])
        .map_err(|e| NarrativeError::LlmServiceError(e.into()))?;
    let mut outline = ask_structured(gateway, &templates::NARRATIVE, &prompt, "narrative", |t| {
        parse_outline(t, duration)
    })?;

    if let Some(top) = highlights.iter().min_by_key(|h| (h.rank, h.shot.start)) {
        let [hs, he] = span_seconds(top, media).map(|v| v.clamp(0.0, duration));
        let climax = outline
            .elements
            .iter_mut()
            .find(|e| e.role == NarrativeRole::Climax)
            .expect("parsed outline has every role");
        let [s, e] = climax.anchor;
        if !(hs <= s && e <= he) {
            climax.anchor = [hs, he];
        }
    }
    outline
        .validate(duration)
        .map_err(|detail| NarrativeError::UnparseableResponse { what: "narrative", detail })?;
    Ok(outline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genai::stub::StubTransport;
    use crate::genai::{GatewayMode, RetryPolicy};
    use crate::highlight::Sentiment;
    use crate::media::Rational;
    use crate::narrative::{CaptionSource, ElementStatus};
    use crate::shots::Shot;
    use serde_json::json;
    use std::sync::Arc;

    fn media(frames: u64) -> MediaInfo {
        MediaInfo::new(64, 48, Rational::integer(25), frames).unwrap()
    }

    fn understanding() -> VideoUnderstanding {
        parse_understanding(
            &json!({"summary": "A game.", "sport": "Basketball", "entities": [{"name": "Kai", "role": "athlete"}]}).to_string(),
        )
        .unwrap()
    }

    fn outline_json(climax: [f64; 2], opening: &str) -> String {
        json!({"elements": [
            {"role": "opening", "status": opening, "anchor": [0.0, 1.0], "note": "a"},
            {"role": "conflict", "status": "covered", "anchor": [1.0, 4.0], "note": "b"},
            {"role": "climax", "status": "covered", "anchor": climax, "note": "c"},
            {"role": "conclusion", "status": "covered", "anchor": [8.0, 12.0], "note": "d"},
        ]})
        .to_string()
    }

    fn scripted(replies: &[String]) -> Gateway {
        let stub = StubTransport::new();
        for r in replies {
            stub.push_reply(Ok(r.clone().into_bytes()));
        }
        Gateway::new(Arc::new(stub), GatewayMode::Live).with_retry(RetryPolicy::immediate())
    }

    fn span(start: u64, end: u64, rank: usize) -> HighlightSpan {
        HighlightSpan {
            shot: Shot::new(start, end),
            score: 1.0,
            sentiment: Sentiment::Excitement,
            rank,
            fallback_scored: false,
        }
    }

    #[test]
    fn seconds_formatting() {
        assert_eq!(fmt_secs(10.0), "10");
        assert_eq!(fmt_secs(2.5), "2.5");
        assert_eq!(fmt_secs(1.0 / 3.0), "0.333");
        assert_eq!(fmt_secs(0.0), "0");
    }

    #[test]
    fn fixture_captions_give_basketball() {
        let g = Gateway::new(Arc::new(StubTransport::new()), GatewayMode::Live);
        let caps = vec![Caption {
            frame_index: 0,
            text: "a player dunks a basketball".into(),
            source: CaptionSource::Fixture,
        }];
        let u = build_understanding(&caps, &media(100), &g).unwrap();
        assert_eq!(u.sport, "basketball");
        assert!(!u.summary.is_empty());
    }

    #[test]
    fn empty_captions_rejected() {
        let g = scripted(&[]);
        assert!(matches!(
            build_understanding(&[], &media(10), &g),
            Err(NarrativeError::Precondition(_))
        ));
    }

    #[test]
    fn invalid_twice_is_unparseable() {
        let g = scripted(&["not json".into(), "{\"summary\": \"\"}".into()]);
        let caps = vec![Caption { frame_index: 0, text: "x".into(), source: CaptionSource::Fixture }];
        assert!(matches!(
            build_understanding(&caps, &media(10), &g),
            Err(NarrativeError::UnparseableResponse { what: "understanding", .. })
        ));
    }

    #[test]
    fn repair_retry_recovers() {
        let good = json!({"summary": "s", "sport": "tennis", "entities": []}).to_string();
        let g = scripted(&["```json\n{oops\n```".into(), format!("```json\n{good}\n```")]);
        let caps = vec![Caption { frame_index: 0, text: "x".into(), source: CaptionSource::Fixture }];
        assert_eq!(build_understanding(&caps, &media(10), &g).unwrap().sport, "tennis");
    }

    #[test]
    fn opening_missing_passes_through() {
        let g = scripted(&[outline_json([5.0, 7.0], "missing")]);
        let o = extract_narrative(&understanding(), &[], &media(250), &g).unwrap();
        assert_eq!(o.missing_count(), 1);
        assert_eq!(o.element(NarrativeRole::Opening).unwrap().status, ElementStatus::Missing);
    }

    #[test]
    fn climax_corrected_to_top_highlight() {
        let g = scripted(&[outline_json([1.0, 2.0], "covered")]);
        // rank 1 is frames 150..200 = 6 s..8 s at 25 fps
        let hs = [span(0, 50, 2), span(150, 200, 1)];
        let o = extract_narrative(&understanding(), &hs, &media(250), &g).unwrap();
        assert_eq!(o.element(NarrativeRole::Climax).unwrap().anchor, [6.0, 8.0]);
    }

    #[test]
    fn climax_inside_top_highlight_kept() {
        let g = scripted(&[outline_json([6.5, 7.0], "covered")]);
        let o = extract_narrative(&understanding(), &[span(150, 200, 1)], &media(250), &g).unwrap();
        assert_eq!(o.element(NarrativeRole::Climax).unwrap().anchor, [6.5, 7.0]);
    }

    #[test]
    fn no_highlights_anchors_clamped() {
        // Duration is 10 s; the conclusion anchor [8, 12] is clamped.
        let g = scripted(&[outline_json([5.0, 7.0], "covered")]);
        let o = extract_narrative(&understanding(), &[], &media(250), &g).unwrap();
        assert_eq!(o.element(NarrativeRole::Conclusion).unwrap().anchor, [8.0, 10.0]);
        assert_eq!(o.element(NarrativeRole::Climax).unwrap().anchor, [5.0, 7.0]);
        o.validate(10.0).unwrap();
    }

    #[test]
    fn duplicate_or_missing_roles_rejected() {
        assert!(parse_outline(r#"{"elements": []}"#, 10.0).is_err());
        let dup = json!({"elements": [
            {"role": "opening", "status": "covered", "anchor": [0, 1], "note": ""},
            {"role": "opening", "status": "covered", "anchor": [0, 1], "note": ""},
            {"role": "climax", "status": "covered", "anchor": [0, 1], "note": ""},
            {"role": "conclusion", "status": "covered", "anchor": [0, 1], "note": ""},
        ]});
        assert!(parse_outline(&dup.to_string(), 10.0).is_err());
    }

    #[test]
    fn stub_outline_round_trip() {
        let g = Gateway::new(Arc::new(StubTransport::new()), GatewayMode::Live);
        let o = extract_narrative(&understanding(), &[], &media(250), &g).unwrap();
        assert_eq!(o.missing_count(), 2);
        o.validate(10.0).unwrap();
    }
}
