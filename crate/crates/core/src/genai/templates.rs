//! Versioned prompt templates with `{{slot}}` placeholders. Rendering is
//! total: every slot must be supplied and every supplied value must match
//! a slot.

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template} has unfilled slot {{{{{slot}}}}}")]
    UnfilledSlot { template: String, slot: String },
    #[error("template {template} has no slot {{{{{slot}}}}}")]
    UnknownSlot { template: String, slot: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    pub version: u32,
    text: &'static str,
}

macro_rules! template {
    ($ident:ident, $name:literal, $version:literal, $file:literal) => {
        pub const $ident: Template = Template {
            name: $name,
            version: $version,
            text: include_str!(concat!("../../templates/", $file)),
        };
    };
}

template!(UNDERSTANDING, "understanding", 1, "understanding.txt");
template!(NARRATIVE, "narrative", 1, "narrative.txt");
template!(FORMAT_REPAIR, "format_repair", 1, "format_repair.txt");
template!(FREEZE_FRAME, "freeze_frame", 1, "freeze_frame.txt");
template!(FREEZE_MOMENT, "freeze_moment", 1, "freeze_moment.txt");
template!(ATHLETE_JOURNEY, "athlete_journey", 1, "athlete_journey.txt");
template!(STAGE_COUNT_REPAIR, "stage_count_repair", 1, "stage_count_repair.txt");
template!(CAREER_DRAWING, "career_drawing", 1, "career_drawing.txt");
template!(CONTEXTUAL, "contextual", 1, "contextual.txt");

/// First sentence of the freeze-frame template, used when no source image
/// accompanies the request.
pub const MANGA_PREFACE: &str = "I need an image in the style of Japanese manga.";

impl Template {
    /// `name/vN`, recorded in request payloads.
    pub fn id(&self) -> String {
        format!("{}/v{}", self.name, self.version)
    }

    pub fn raw(&self) -> &'static str {
        self.text.strip_suffix('\n').unwrap_or(self.text)
    }

    pub fn slots(&self) -> BTreeSet<&'static str> {
        find_slots(self.raw()).collect()
    }

    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let slots = self.slots();
        for (k, _) in values {
            if !slots.contains(k) {
                return Err(TemplateError::UnknownSlot {
                    template: self.id(),
                    slot: (*k).to_owned(),
                });
            }
        }
        let mut out = self.raw().to_owned();
        for slot in &slots {
            let value = values
                .iter()
                .find(|(k, _)| k == slot)
                .map(|(_, v)| *v)
                .ok_or_else(|| TemplateError::UnfilledSlot {
                    template: self.id(),
                    slot: (*slot).to_owned(),
                })?;
            out = out.replace(&format!("{{{{{slot}}}}}"), value);
        }
        Ok(out)
    }
}

fn find_slots(text: &str) -> impl Iterator<Item = &str> {
    text.match_indices("{{").filter_map(move |(i, _)| {
        let rest = &text[i + 2..];
        let end = rest.find("}}")?;
        let name = &rest[..end];
        (!name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')).then_some(name)
    })
}

/// Fails if `text` still contains a `{{slot}}` placeholder.
pub fn ensure_filled(template: &str, text: &str) -> Result<(), TemplateError> {
    match find_slots(text).next() {
        Some(slot) => Err(TemplateError::UnfilledSlot {
            template: template.to_owned(),
            slot: slot.to_owned(),
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn freeze_frame_relevance() {
        let p = FREEZE_FRAME.render(&[("relevance", "50")]).unwrap();
        assert!(p.contains("The relevance of the generated image should be 50% in relation to the source-image I provide."));
        assert!(p.starts_with(MANGA_PREFACE));
    }

    #[test]
    fn athlete_journey_slots() {
        assert_eq!(
            ATHLETE_JOURNEY.slots().into_iter().collect::<Vec<_>>(),
            vec!["athlete", "sport", "stages"]
        );
        let p = ATHLETE_JOURNEY
            .render(&[("sport", "basketball"), ("athlete", "Lee"), ("stages", "3")])
            .unwrap();
        assert!(p.contains("summarize his career into 3 stages"));
        assert!(p.contains("an basketball athlete named Lee"));
    }

    #[test]
    fn unfilled_and_unknown_slots() {
        assert_eq!(
            ATHLETE_JOURNEY.render(&[("sport", "x"), ("athlete", "y")]),
            Err(TemplateError::UnfilledSlot {
                template: "athlete_journey/v1".into(),
                slot: "stages".into()
            })
        );
        assert!(matches!(
            FREEZE_FRAME.render(&[("relevance", "5"), ("bogus", "1")]),
            Err(TemplateError::UnknownSlot { .. })
        ));
        assert!(ensure_filled("t", "a {{b}} c").is_err());
        assert!(ensure_filled("t", r#"{"a": {"b": 1}}"#).is_ok());
    }

    #[test]
    fn json_examples_are_not_slots() {
        assert_eq!(
            UNDERSTANDING.slots().into_iter().collect::<Vec<_>>(),
            vec!["captions", "duration"]
        );
    }
}
