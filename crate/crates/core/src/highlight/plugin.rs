//! External highlight scorer. A trained model can sit behind either a
//! long-lived subprocess (one JSON request/response per line) or an HTTP
//! POST endpoint:
//!
//! ```text
//! -> {"shot":{"start":0,"end":50},"features":[[...],...],"frames_dir":null}
//! <- {"score":0.9,"sentiment":"tension"}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, HighlightError, Sentiment};
use crate::shots::Shot;

pub const DEFAULT_PLUGIN_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerEndpoint {
    Subprocess { command: Vec<String> },
    Http { url: String },
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    shot: ShotRef,
    features: Vec<Vec<f64>>,
    frames_dir: Option<&'a str>,
}

#[derive(Serialize)]
struct ShotRef {
    start: u64,
    end: u64,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
    sentiment: String,
}

struct Running {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

pub struct ScorerPlugin {
    endpoint: ScorerEndpoint,
    timeout: Duration,
    process: Mutex<Option<Running>>,
}

/// Result of a plugin call, possibly replaced by the built-in scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct PluginScore {
    pub score: f64,
    pub sentiment: Sentiment,
    pub fallback: bool,
    pub error: Option<String>,
}

impl ScorerPlugin {
    pub fn new(endpoint: ScorerEndpoint, timeout: Duration) -> Self {
        Self {
            endpoint,
            timeout,
            process: Mutex::new(None),
        }
    }

    pub fn endpoint(&self) -> &ScorerEndpoint {
        &self.endpoint
    }

    /// One round trip; protocol violations and timeouts are errors.
    pub fn request(
        &self,
        shot: Shot,
        features: &FeatureMatrix,
        frames_dir: Option<&Path>,
    ) -> Result<(f64, Sentiment), HighlightError> {
        let dir = frames_dir.map(|p| p.to_string_lossy().into_owned());
        let body = serde_json::to_string(&ScoreRequest {
            shot: ShotRef {
                start: shot.start,
                end: shot.end,
            },
            features: features.rows(),
            frames_dir: dir.as_deref(),
        })
        .map_err(|e| HighlightError::PluginProtocolError(e.to_string()))?;
        let raw = match &self.endpoint {
            ScorerEndpoint::Subprocess { command } => self.call_subprocess(command, &body)?,
            ScorerEndpoint::Http { url } => self.call_http(url, body)?,
        };
        let resp: ScoreResponse = serde_json::from_str(raw.trim())
            .map_err(|e| HighlightError::PluginProtocolError(format!("malformed response: {e}")))?;
        if !resp.score.is_finite() {
            return Err(HighlightError::PluginProtocolError("non-finite score".into()));
        }
        let sentiment = Sentiment::parse(&resp.sentiment).ok_or_else(|| {
            HighlightError::PluginProtocolError(format!("unknown sentiment {:?}", resp.sentiment))
        })?;
        Ok((resp.score, sentiment))
    }

    fn call_subprocess(&self, command: &[String], body: &str) -> Result<String, HighlightError> {
        let proto = |m: String| HighlightError::PluginProtocolError(m);
        let mut guard = self.process.lock().map_err(|_| proto("plugin lock poisoned".into()))?;
        if guard.is_none() {
            let (program, args) = command
                .split_first()
                .ok_or_else(|| proto("empty plugin command".into()))?;
            let mut child = Command::new(program)
                .args(args)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| proto(format!("cannot start plugin: {e}")))?;
            let stdin = child.stdin.take().expect("piped");
            let stdout = child.stdout.take().expect("piped");
            let (tx, rx) = mpsc::channel();
            std::thread::spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    if tx.send(line).is_err() {
                        break;
                    }
                }
            });
            *guard = Some(Running {
                child,
                stdin,
                lines: rx,
            });
        }
        let running = guard.as_mut().expect("spawned above");
        let outcome = (|| {
            writeln!(running.stdin, "{body}").map_err(|e| proto(format!("write failed: {e}")))?;
            running
                .stdin
                .flush()
                .map_err(|e| proto(format!("write failed: {e}")))?;
            match running.lines.recv_timeout(self.timeout) {
                Ok(Ok(line)) => Ok(line),
                Ok(Err(e)) => Err(proto(format!("read failed: {e}"))),
                Err(RecvTimeoutError::Timeout) => Err(HighlightError::PluginTimeout(self.timeout)),
                Err(RecvTimeoutError::Disconnected) => Err(proto("plugin exited".into())),
            }
        })();
        if outcome.is_err() {
            // Restart on the next call; a late answer must not be paired
            // with a later request.
            if let Some(mut r) = guard.take() {
                let _ = r.child.kill();
                let _ = r.child.wait();
            }
        }
        outcome
    }

    fn call_http(&self, url: &str, body: String) -> Result<String, HighlightError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let mut resp = agent
            .post(url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => HighlightError::PluginTimeout(self.timeout),
                other => HighlightError::PluginProtocolError(other.to_string()),
            })?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| HighlightError::PluginProtocolError(e.to_string()))
    }
}

impl Drop for ScorerPlugin {
    fn drop(&mut self) {
        if let Ok(mut g) = self.process.lock() {
            if let Some(mut r) = g.take() {
                let _ = r.child.kill();
                let _ = r.child.wait();
            }
        }
    }
}

/// Calls the plugin and falls back to `builtin` on any plugin failure.
/// Errors from the built-in scorer itself are propagated.
pub fn score_via_plugin(
    plugin: &ScorerPlugin,
    shot: Shot,
    features: &FeatureMatrix,
    frames_dir: Option<&Path>,
    builtin: impl FnOnce() -> Result<(f64, Sentiment), HighlightError>,
) -> Result<PluginScore, HighlightError> {
    match plugin.request(shot, features, frames_dir) {
        Ok((score, sentiment)) => Ok(PluginScore {
            score,
            sentiment,
            fallback: false,
            error: None,
        }),
        Err(e) => {
            tracing::warn!(shot.start, shot.end, error = %e, "scorer plugin failed; using built-in scorer");
            let (score, sentiment) = builtin()?;
            Ok(PluginScore {
                score,
                sentiment,
                fallback: true,
                error: Some(e.to_string()),
            })
        }
    }
}
