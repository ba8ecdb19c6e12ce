use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::templates::{self, Template};
use super::{
    FixtureStore, GenAiError, ServiceKind, ServiceRequest, StyleSpec, TokenBucket, Transport,
    TransportError, MAX_PAYLOAD_BYTES,
};
use crate::Frame;

#[derive(Debug, Clone)]
pub enum GatewayMode {
    Live,
    /// Live calls whose responses are also written to the store.
    Record(FixtureStore),
    /// Responses come only from the store; the transport is never used.
    Replay(FixtureStore),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn immediate() -> Self {
        Self {
            base_delay: Duration::ZERO,
            ..Self::default()
        }
    }

    /// Delay before retry number `n` (0-based).
    pub fn delay(&self, n: u32) -> Duration {
        self.base_delay.mul_f64(self.factor.powi(n as i32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletionParams {
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            max_tokens: 1024,
            temperature: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub live_calls: u64,
    pub retries: u64,
    pub replayed: u64,
    pub recorded: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedImage {
    /// Encoded bytes exactly as returned by the service.
    pub png: Vec<u8>,
    pub image: Frame,
    /// The complete outgoing prompt.
    pub prompt: String,
}

#[derive(Default)]
struct Counters {
    live_calls: AtomicU64,
    retries: AtomicU64,
    replayed: AtomicU64,
    recorded: AtomicU64,
}

pub struct Gateway {
    transport: Option<Arc<dyn Transport>>,
    mode: GatewayMode,
    retry: RetryPolicy,
    limiters: [TokenBucket; 3],
    athlete_table: BTreeMap<String, Vec<String>>,
    counters: Counters,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("retry", &self.retry)
            .field("stats", &self.stats())
            .finish()
    }
}

fn kind_slot(kind: ServiceKind) -> usize {
    match kind {
        ServiceKind::Caption => 0,
        ServiceKind::Complete => 1,
        ServiceKind::GenerateImage => 2,
    }
}

impl Gateway {
    pub fn new(transport: Arc<dyn Transport>, mode: GatewayMode) -> Self {
        Self::build(Some(transport), mode)
    }

    pub fn replay(store: FixtureStore) -> Self {
        Self::build(None, GatewayMode::Replay(store))
    }

    fn build(transport: Option<Arc<dyn Transport>>, mode: GatewayMode) -> Self {
        Self {
            transport,
            mode,
            retry: RetryPolicy::default(),
            limiters: [
                TokenBucket::unlimited(),
                TokenBucket::unlimited(),
                TokenBucket::unlimited(),
            ],
            athlete_table: BTreeMap::new(),
            counters: Counters::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, kind: ServiceKind, per_second: f64, burst: u32) -> Self {
        self.limiters[kind_slot(kind)] = TokenBucket::new(per_second, burst);
        self
    }

    /// Local career descriptions consulted before asking the text service.
    /// Keys are matched case-insensitively.
    pub fn with_athlete_table(mut self, table: BTreeMap<String, Vec<String>>) -> Self {
        self.athlete_table = table
            .into_iter()
            .map(|(k, v)| (k.to_lowercase(), v))
            .collect();
        self
    }

    pub fn mode(&self) -> &GatewayMode {
        &self.mode
    }

    pub fn is_replay(&self) -> bool {
        matches!(self.mode, GatewayMode::Replay(_))
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            live_calls: self.counters.live_calls.load(Ordering::Relaxed),
            retries: self.counters.retries.load(Ordering::Relaxed),
            replayed: self.counters.replayed.load(Ordering::Relaxed),
            recorded: self.counters.recorded.load(Ordering::Relaxed),
        }
    }

    /// Resolves one request, checking each body with `validate`. Invalid
    /// live bodies are retried like transient failures.
    fn execute(
        &self,
        request: &ServiceRequest,
        validate: impl Fn(&[u8]) -> Result<(), String>,
    ) -> Result<Vec<u8>, GenAiError> {
        let kind = request.kind;
        let size = request.payload.to_string().len();
        if size > MAX_PAYLOAD_BYTES {
            return Err(GenAiError::OversizePayload {
                bytes: size,
                limit: MAX_PAYLOAD_BYTES,
            });
        }
        let store = match &self.mode {
            GatewayMode::Replay(store) => {
                let body = store.get(kind, &request.idempotency_key)?.ok_or_else(|| {
                    GenAiError::MissingFixture {
                        kind,
                        key: request.idempotency_key.clone(),
                    }
                })?;
                validate(&body).map_err(|e| GenAiError::for_kind(kind, format!("recorded response: {e}")))?;
                self.counters.replayed.fetch_add(1, Ordering::Relaxed);
                return Ok(body);
            }
            GatewayMode::Record(store) => Some(store),
            GatewayMode::Live => None,
        };
        let transport = self
            .transport
            .as_ref()
            .ok_or_else(|| GenAiError::for_kind(kind, "no transport configured".into()))?;

        let mut attempt = 0u32;
        let body = loop {
            self.limiters[kind_slot(kind)].acquire();
            self.counters.live_calls.fetch_add(1, Ordering::Relaxed);
            let failure = match transport.send(request) {
                Ok(body) => match validate(&body) {
                    Ok(()) => break body,
                    Err(e) => format!("invalid response: {e}"),
                },
                Err(TransportError::Transient(e)) => e,
                Err(TransportError::Permanent(e)) => return Err(GenAiError::for_kind(kind, e)),
                Err(TransportError::Oversize) => {
                    return Err(GenAiError::OversizePayload {
                        bytes: size,
                        limit: MAX_PAYLOAD_BYTES,
                    })
                }
            };
            if attempt >= self.retry.max_retries {
                return Err(GenAiError::for_kind(
                    kind,
                    format!("{failure} (gave up after {attempt} retries)"),
                ));
            }
            let delay = self.retry.delay(attempt);
            attempt += 1;
            self.counters.retries.fetch_add(1, Ordering::Relaxed);
            tracing::warn!(service = %kind, retry = attempt, ?delay, "{failure}; retrying");
            std::thread::sleep(delay);
        };
        if attempt > 0 {
            tracing::info!(service = %kind, retries = attempt, "succeeded after retries");
        }
        if let Some(store) = store {
            store.put(kind, &request.idempotency_key, &body)?;
            self.counters.recorded.fetch_add(1, Ordering::Relaxed);
        }
        Ok(body)
    }

    pub fn caption(&self, image: &Frame) -> Result<String, GenAiError> {
        let png = image.to_png();
        let payload = json!({
            "image_png_b64": base64::engine::general_purpose::STANDARD.encode(png),
        });
        let req = ServiceRequest::new(ServiceKind::Caption, payload, json!({}));
        let body = self.execute(&req, validate_text)?;
        Ok(String::from_utf8(body).expect("validated as utf-8"))
    }

    pub fn complete(&self, prompt: &str, params: CompletionParams) -> Result<String, GenAiError> {
        self.complete_inner(None, prompt, params)
    }

    /// Like [`Gateway::complete`], tagging the request with the template
    /// that produced the prompt.
    pub fn complete_templated(
        &self,
        template: &Template,
        prompt: &str,
        params: CompletionParams,
    ) -> Result<String, GenAiError> {
        self.complete_inner(Some(template), prompt, params)
    }

    fn complete_inner(
        &self,
        template: Option<&Template>,
        prompt: &str,
        params: CompletionParams,
    ) -> Result<String, GenAiError> {
        if prompt.trim().is_empty() {
            return Err(GenAiError::EmptyPrompt);
        }
        templates::ensure_filled(template.map_or("prompt".into(), |t| t.id()).as_str(), prompt)?;
        let mut payload = json!({ "prompt": prompt, "max_tokens": params.max_tokens });
        if let Some(t) = template {
            payload["template"] = Value::String(t.id());
        }
        let req = ServiceRequest::new(
            ServiceKind::Complete,
            payload,
            json!({ "temperature": params.temperature }),
        );
        let body = self.execute(&req, validate_text)?;
        Ok(String::from_utf8(body).expect("validated as utf-8"))
    }

    pub fn generate_image(
        &self,
        subject: &str,
        reference: Option<&Frame>,
        style: &StyleSpec,
    ) -> Result<GeneratedImage, GenAiError> {
        style.validate()?;
        let prompt = assemble_image_prompt(subject, reference.is_some(), style)?;
        let reference_b64 = match reference {
            Some(f) => Value::String(
                base64::engine::general_purpose::STANDARD.encode(f.to_png()),
            ),
            None => Value::Null,
        };
        let payload = json!({ "prompt": prompt, "reference_image_png_b64": reference_b64 });
        let req = ServiceRequest::new(ServiceKind::GenerateImage, payload, json!({}));
        let png = self.execute(&req, |b| Frame::from_png(b, 0, 0.0).map(|_| ()).map_err(|e| e.to_string()))?;
        let image = Frame::from_png(&png, 0, 0.0).expect("validated as png");
        Ok(GeneratedImage { png, image, prompt })
    }

    /// Career stage descriptions for an athlete, exactly `stage_count` of
    /// them.
    pub fn athlete_career(
        &self,
        name: &str,
        sport: &str,
        stage_count: usize,
    ) -> Result<Vec<String>, GenAiError> {
        if name.trim().is_empty() {
            return Err(GenAiError::InvalidArgument("athlete name is empty".into()));
        }
        if stage_count == 0 {
            return Err(GenAiError::InvalidArgument("stage count must be at least 1".into()));
        }
        if let Some(stages) = self.athlete_table.get(&name.trim().to_lowercase()) {
            if stages.len() == stage_count {
                return Ok(stages.clone());
            }
        }
        let n = stage_count.to_string();
        let prompt = templates::ATHLETE_JOURNEY.render(&[
            ("sport", sport),
            ("athlete", name.trim()),
            ("stages", &n),
        ])?;
        let params = CompletionParams::default();
        let first = parse_stage_lines(&self.complete_templated(&templates::ATHLETE_JOURNEY, &prompt, params)?);
        if first.len() == stage_count {
            return Ok(first);
        }
        tracing::warn!(expected = stage_count, got = first.len(), "stage count mismatch; asking again");
        let repair = templates::STAGE_COUNT_REPAIR.render(&[("stages", &n)])?;
        let second = parse_stage_lines(&self.complete_templated(
            &templates::ATHLETE_JOURNEY,
            &format!("{prompt}{repair}"),
            params,
        )?);
        if second.len() == stage_count {
            Ok(second)
        } else {
            Err(GenAiError::StageCountMismatch {
                expected: stage_count,
                got: second.len(),
            })
        }
    }
}

fn validate_text(body: &[u8]) -> Result<(), String> {
    let s = std::str::from_utf8(body).map_err(|_| "not utf-8".to_string())?;
    if s.trim().is_empty() {
        return Err("empty text".into());
    }
    Ok(())
}

/// Builds the outgoing image prompt: the manga preamble (with the relevance
/// clause when a reference image is sent), the palette directive, extra
/// directives, then the subject.
pub fn assemble_image_prompt(
    subject: &str,
    has_reference: bool,
    style: &StyleSpec,
) -> Result<String, GenAiError> {
    let subject = subject.trim();
    if subject.is_empty() {
        return Err(GenAiError::EmptyPrompt);
    }
    let mut head = if has_reference {
        templates::FREEZE_FRAME.render(&[("relevance", &style.relevance_percent())])?
    } else {
        templates::MANGA_PREFACE.to_owned()
    };
    let directive = style.palette.directive();
    if !subject.contains(directive) {
        head.push(' ');
        head.push_str(directive);
    }
    let extra = style.extra_directives.trim();
    if !extra.is_empty() {
        head.push(' ');
        head.push_str(extra);
    }
    let prompt = format!("{head}\n\n{subject}");
    templates::ensure_filled("image prompt", &prompt)?;
    Ok(prompt)
}

/// Splits a completion into stage descriptions, one per non-empty line,
/// dropping list markers such as `Stage 2:`, `2.`, `2)` or `-`.
pub fn parse_stage_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(strip_marker)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect()
}

fn strip_marker(line: &str) -> &str {
    let mut l = line.trim();
    for bullet in ["-", "*", "\u{2022}"] {
        if let Some(rest) = l.strip_prefix(bullet) {
            l = rest.trim_start();
        }
    }
    let lower = l.to_ascii_lowercase();
    if lower.starts_with("stage") {
        let rest = &l[5..];
        let digits = rest.trim_start();
        let num_len = digits.chars().take_while(char::is_ascii_digit).count();
        if num_len > 0 {
            let after = digits[num_len..].trim_start();
            if let Some(r) = after.strip_prefix(':').or_else(|| after.strip_prefix('.')).or_else(|| after.strip_prefix('-')) {
                return r.trim();
            }
        }
    }
    let num_len = l.chars().take_while(char::is_ascii_digit).count();
    if num_len > 0 {
        let after = &l[num_len..];
        if let Some(r) = after.strip_prefix('.').or_else(|| after.strip_prefix(')')) {
            return r.trim();
        }
    }
    l.trim()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genai::Palette;
    use std::collections::VecDeque;
    use std::sync::Mutex;

    struct Scripted {
        replies: Mutex<VecDeque<Result<Vec<u8>, TransportError>>>,
        seen: Mutex<Vec<ServiceRequest>>,
    }

    impl Scripted {
        fn new(replies: Vec<Result<Vec<u8>, TransportError>>) -> Arc<Self> {
            Arc::new(Self {
                replies: Mutex::new(replies.into()),
                seen: Mutex::new(Vec::new()),
            })
        }
    }

    impl Transport for Scripted {
        fn send(&self, request: &ServiceRequest) -> Result<Vec<u8>, TransportError> {
            self.seen.lock().unwrap().push(request.clone());
            self.replies
                .lock()
                .unwrap()
                .pop_front()
                .unwrap_or(Err(TransportError::Permanent("script exhausted".into())))
        }
    }

    fn transient() -> Result<Vec<u8>, TransportError> {
        Err(TransportError::Transient("503".into()))
    }

    fn gateway(t: Arc<Scripted>) -> Gateway {
        Gateway::new(t, GatewayMode::Live).with_retry(RetryPolicy::immediate())
    }

    #[test]
    fn backoff_schedule() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay(0), Duration::from_millis(500));
        assert_eq!(p.delay(1), Duration::from_millis(1000));
        assert_eq!(p.delay(2), Duration::from_millis(2000));
    }

    #[test]
    fn transient_failure_then_success() {
        let t = Scripted::new(vec![transient(), Ok(b"a player dunks".to_vec())]);
        let g = gateway(t.clone());
        let frame = Frame::filled(0, 0.0, 4, 4, [10, 20, 30]);
        assert_eq!(g.caption(&frame).unwrap(), "a player dunks");
        assert_eq!(g.stats().retries, 1);
        assert_eq!(g.stats().live_calls, 2);
        let seen = t.seen.lock().unwrap();
        assert_eq!(seen[0].idempotency_key, seen[1].idempotency_key);
    }

    #[test]
    fn four_failures_exhaust_retries() {
        let t = Scripted::new(vec![transient(), transient(), transient(), transient(), Ok(b"late".to_vec())]);
        let g = gateway(t);
        let err = g.caption(&Frame::filled(0, 0.0, 2, 2, [0, 0, 0])).unwrap_err();
        assert!(matches!(err, GenAiError::CaptionServiceError(_)), "{err}");
        assert_eq!(g.stats().live_calls, 4);
    }

    #[test]
    fn permanent_failure_is_not_retried() {
        let t = Scripted::new(vec![Err(TransportError::Permanent("400".into()))]);
        let g = gateway(t);
        assert!(matches!(
            g.complete("hi", CompletionParams::default()),
            Err(GenAiError::LlmServiceError(_))
        ));
        assert_eq!(g.stats().retries, 0);
    }

    #[test]
    fn empty_prompt_rejected_before_io() {
        let t = Scripted::new(vec![]);
        let g = gateway(t.clone());
        assert!(matches!(g.complete("  ", CompletionParams::default()), Err(GenAiError::EmptyPrompt)));
        assert!(t.seen.lock().unwrap().is_empty());
    }

    #[test]
    fn unfilled_slot_never_sent() {
        let t = Scripted::new(vec![Ok(b"x".to_vec())]);
        let g = gateway(t.clone());
        assert!(matches!(
            g.complete("about {{sport}}", CompletionParams::default()),
            Err(GenAiError::Template(_))
        ));
        assert!(t.seen.lock().unwrap().is_empty());
    }

    #[test]
    fn record_then_replay_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::new(dir.path());
        let t = Scripted::new(vec![Ok(b"recorded answer".to_vec())]);
        let rec = Gateway::new(t, GatewayMode::Record(store.clone())).with_retry(RetryPolicy::immediate());
        let params = CompletionParams { max_tokens: 10, temperature: 0.0 };
        let a = rec.complete("tell me", params).unwrap();
        let rep = Gateway::replay(store);
        let hot = CompletionParams { temperature: 1.5, ..params };
        assert_eq!(rep.complete("tell me", hot).unwrap(), a);
        assert!(matches!(
            rep.complete("something else", params),
            Err(GenAiError::MissingFixture { kind: ServiceKind::Complete, .. })
        ));
        assert_eq!(rep.stats().live_calls, 0);
    }

    #[test]
    fn image_prompt_assembly() {
        let style = StyleSpec::default();
        let p = assemble_image_prompt("a dunk", true, &style).unwrap();
        assert!(p.contains("should be 50% in relation to the source-image"));
        assert!(p.contains("Generate black-and-white manga-style comics."));
        assert!(p.ends_with("\n\na dunk"));
        let p = assemble_image_prompt("a dunk", false, &StyleSpec { palette: Palette::Color, ..style.clone() }).unwrap();
        assert!(!p.contains("relevance"));
        assert!(p.contains("full-color"));
        let already = "Draw it. Generate black-and-white manga-style comics.";
        let p = assemble_image_prompt(already, false, &style).unwrap();
        assert_eq!(p.matches("black-and-white").count(), 1);
        assert!(matches!(assemble_image_prompt(" ", true, &style), Err(GenAiError::EmptyPrompt)));
    }

    #[test]
    fn generate_image_embeds_reference() {
        let png = Frame::filled(0, 0.0, 3, 2, [1, 2, 3]).to_png();
        let t = Scripted::new(vec![Ok(png.clone())]);
        let g = gateway(t.clone());
        let r = Frame::filled(0, 0.0, 8, 8, [200, 0, 0]);
        let out = g.generate_image("a dunk", Some(&r), &StyleSpec::default()).unwrap();
        assert_eq!(out.png, png);
        assert_eq!((out.image.width(), out.image.height()), (3, 2));
        let seen = t.seen.lock().unwrap();
        assert!(seen[0].payload["reference_image_png_b64"].is_string());
        assert_eq!(seen[0].payload_str("prompt"), Some(out.prompt.as_str()));
    }

    #[test]
    fn undecodable_image_retried_then_failed() {
        let t = Scripted::new(vec![Ok(b"nope".to_vec()); 4]);
        let g = gateway(t);
        assert!(matches!(
            g.generate_image("x", None, &StyleSpec::default()),
            Err(GenAiError::ImageServiceError(_))
        ));
    }

    #[test]
    fn stage_lines() {
        let text = "Stage 1: Youth league\n\n2. College star\n- Pro debut\nStage 4 - Retirement\n3) Comeback";
        assert_eq!(
            parse_stage_lines(text),
            vec!["Youth league", "College star", "Pro debut", "Retirement", "Comeback"]
        );
    }

    #[test]
    fn career_retries_once_then_rejects() {
        let two = b"Stage 1: a\nStage 2: b".to_vec();
        let t = Scripted::new(vec![Ok(two.clone()), Ok(two)]);
        let g = gateway(t.clone());
        assert!(matches!(
            g.athlete_career("Lee", "basketball", 3),
            Err(GenAiError::StageCountMismatch { expected: 3, got: 2 })
        ));
        let seen = t.seen.lock().unwrap();
        assert_eq!(seen.len(), 2);
        assert!(seen[1].payload_str("prompt").unwrap().contains("Output exactly 3 stage descriptions"));
    }

    #[test]
    fn career_repair_succeeds() {
        let t = Scripted::new(vec![Ok(b"only one".to_vec()), Ok(b"one\ntwo".to_vec())]);
        let g = gateway(t);
        assert_eq!(g.athlete_career("Lee", "basketball", 2).unwrap(), vec!["one", "two"]);
    }

    #[test]
    fn athlete_table_short_circuits() {
        let t = Scripted::new(vec![]);
        let mut table = BTreeMap::new();
        table.insert("Lee".to_string(), vec!["a".to_string()]);
        let g = gateway(t.clone()).with_athlete_table(table);
        assert_eq!(g.athlete_career("LEE", "x", 1).unwrap(), vec!["a"]);
        assert!(t.seen.lock().unwrap().is_empty());
        assert!(g.athlete_career("", "x", 1).is_err());
        assert!(g.athlete_career("Lee", "x", 0).is_err());
    }
}
