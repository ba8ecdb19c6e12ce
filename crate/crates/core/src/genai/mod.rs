//! Clients for the three generative services (frame captioning, text
//! completion, image generation) behind one [`Gateway`] with retries,
//! rate limiting and a record/replay fixture store.

mod fixtures;
mod gateway;
mod ratelimit;
pub mod stub;
pub mod templates;
mod transport;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use fixtures::{FixtureRecord, FixtureStore};
pub use gateway::{
    assemble_image_prompt,
    parse_stage_lines, CompletionParams, Gateway, GatewayMode, GatewayStats, GeneratedImage,
    RetryPolicy,
};
pub use ratelimit::TokenBucket;
pub use templates::{Template, TemplateError};
pub use transport::{HttpTransport, ServiceEndpoints, Transport, TransportError, MAX_PAYLOAD_BYTES};

#[derive(Debug, Error)]
pub enum GenAiError {
    #[error("caption service: {0}")]
    CaptionServiceError(String),
    #[error("text service: {0}")]
    LlmServiceError(String),
    #[error("image service: {0}")]
    ImageServiceError(String),
    #[error("no recorded {kind} response for key {key}")]
    MissingFixture { kind: ServiceKind, key: String },
    #[error("request payload of {bytes} bytes exceeds {limit}")]
    OversizePayload { bytes: usize, limit: usize },
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("expected {expected} career stages, got {got}")]
    StageCountMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("fixture store: {0}")]
    Fixture(String),
}

impl GenAiError {
    fn for_kind(kind: ServiceKind, msg: String) -> Self {
        match kind {
            ServiceKind::Caption => GenAiError::CaptionServiceError(msg),
            ServiceKind::Complete => GenAiError::LlmServiceError(msg),
            ServiceKind::GenerateImage => GenAiError::ImageServiceError(msg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceKind {
    Caption,
    Complete,
    GenerateImage,
}

impl ServiceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ServiceKind::Caption => "caption",
            ServiceKind::Complete => "complete",
            ServiceKind::GenerateImage => "generate_image",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Caption, Self::Complete, Self::GenerateImage]
            .into_iter()
            .find(|k| k.as_str() == s)
    }
}

impl std::fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One outgoing service call. The key is a content digest of the kind and
/// payload; sampling options such as temperature are not part of it.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceRequest {
    pub kind: ServiceKind,
    pub payload: Value,
    pub options: Value,
    pub idempotency_key: String,
}

impl ServiceRequest {
    pub fn new(kind: ServiceKind, payload: Value, options: Value) -> Self {
        // serde_json maps are ordered, so this serialization is canonical.
        let canonical = format!("{}\n{}", kind.as_str(), payload);
        Self {
            kind,
            idempotency_key: crate::sha256_hex(canonical.as_bytes()),
            payload,
            options,
        }
    }

    pub fn payload_str(&self, field: &str) -> Option<&str> {
        self.payload.get(field).and_then(Value::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Palette {
    #[default]
    BlackWhite,
    Color,
}

impl Palette {
    /// Drawing directive appended to every image prompt.
    pub fn directive(self) -> &'static str {
        match self {
            Palette::BlackWhite => "Generate black-and-white manga-style comics.",
            Palette::Color => "Generate full-color manga-style comics.",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleSpec {
    pub palette: Palette,
    /// Fraction of the output that should follow the reference image.
    pub relevance: f64,
    pub extra_directives: String,
}

impl Default for StyleSpec {
    fn default() -> Self {
        Self {
            palette: Palette::BlackWhite,
            relevance: 0.5,
            extra_directives: String::new(),
        }
    }
}

impl StyleSpec {
    pub fn validate(&self) -> Result<(), GenAiError> {
        if !(0.0..=1.0).contains(&self.relevance) {
            return Err(GenAiError::InvalidArgument(format!(
                "relevance {} outside [0, 1]",
                self.relevance
            )));
        }
        Ok(())
    }

    /// Relevance as a whole percentage, e.g. `0.5 -> "50"`.
    pub fn relevance_percent(&self) -> String {
        crate::round_half_up(self.relevance * 100.0).to_string()
    }
}
