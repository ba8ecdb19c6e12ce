use std::path::Path;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{ServiceKind, ServiceRequest};

/// Upper bound on a serialized request body.
pub const MAX_PAYLOAD_BYTES: usize = 20 * 1024 * 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Worth retrying: timeouts, throttling, server errors.
    #[error("transient: {0}")]
    Transient(String),
    #[error("{0}")]
    Permanent(String),
    #[error("payload rejected as too large")]
    Oversize,
}

/// Carries one request to a service. The response body is the caption or
/// completion text as UTF-8, or the encoded image bytes.
pub trait Transport: Send + Sync {
    fn send(&self, request: &ServiceRequest) -> Result<Vec<u8>, TransportError>;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceEndpoints {
    pub caption_url: Option<String>,
    pub llm_url: Option<String>,
    pub image_url: Option<String>,
    pub caption_api_key: Option<String>,
    pub llm_api_key: Option<String>,
    pub image_api_key: Option<String>,
}

impl ServiceEndpoints {
    /// Reads an optional JSON config file, then applies environment
    /// overrides.
    pub fn load(config_file: Option<&Path>) -> std::io::Result<Self> {
        let mut ep = match config_file {
            Some(p) => serde_json::from_slice(&std::fs::read(p)?)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?,
            None => Self::default(),
        };
        ep.apply_env(|k| std::env::var(k).ok());
        Ok(ep)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        let pairs: [(&str, &mut Option<String>); 6] = [
            ("MANGAROLL_CAPTION_URL", &mut self.caption_url),
            ("MANGAROLL_LLM_URL", &mut self.llm_url),
            ("MANGAROLL_IMAGE_URL", &mut self.image_url),
            ("MANGAROLL_CAPTION_API_KEY", &mut self.caption_api_key),
            ("MANGAROLL_LLM_API_KEY", &mut self.llm_api_key),
            ("MANGAROLL_IMAGE_API_KEY", &mut self.image_api_key),
        ];
        for (name, slot) in pairs {
            if let Some(v) = get(name).filter(|v| !v.is_empty()) {
                *slot = Some(v);
            }
        }
    }

    fn for_kind(&self, kind: ServiceKind) -> (Option<&str>, Option<&str>) {
        match kind {
            ServiceKind::Caption => (self.caption_url.as_deref(), self.caption_api_key.as_deref()),
            ServiceKind::Complete => (self.llm_url.as_deref(), self.llm_api_key.as_deref()),
            ServiceKind::GenerateImage => (self.image_url.as_deref(), self.image_api_key.as_deref()),
        }
    }
}

/// JSON over HTTP. The request body is the payload object with the
/// options merged in; responses are `{"caption"}`, `{"text"}`, or
/// `{"image": <base64>}` / `{"url"}` for images.
pub struct HttpTransport {
    endpoints: ServiceEndpoints,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoints: ServiceEndpoints, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { endpoints, agent }
    }

    fn body_for(request: &ServiceRequest) -> Value {
        let mut body = request.payload.clone();
        if let (Some(obj), Some(opts)) = (body.as_object_mut(), request.options.as_object()) {
            for (k, v) in opts {
                obj.insert(k.clone(), v.clone());
            }
        }
        body
    }

    fn fetch(&self, url: &str) -> Result<Vec<u8>, TransportError> {
        let mut resp = self
            .agent
            .get(url)
            .call()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        check_status(resp.status().as_u16(), url)?;
        resp.body_mut()
            .with_config()
            .limit(MAX_PAYLOAD_BYTES as u64)
            .read_to_vec()
            .map_err(|e| TransportError::Transient(e.to_string()))
    }
}

fn check_status(status: u16, what: &str) -> Result<(), TransportError> {
    match status {
        200..=299 => Ok(()),
        413 => Err(TransportError::Oversize),
        408 | 429 | 500..=599 => Err(TransportError::Transient(format!("{what}: HTTP {status}"))),
        _ => Err(TransportError::Permanent(format!("{what}: HTTP {status}"))),
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ServiceRequest) -> Result<Vec<u8>, TransportError> {
        let (url, key) = self.endpoints.for_kind(request.kind);
        let url = url.ok_or_else(|| {
            TransportError::Permanent(format!("no endpoint configured for {}", request.kind))
        })?;
        let mut req = self
            .agent
            .post(url)
            .header("content-type", "application/json")
            .header("idempotency-key", &request.idempotency_key);
        if let Some(k) = key {
            req = req.header("authorization", &format!("Bearer {k}"));
        }
        let body = serde_json::to_vec(&Self::body_for(request))
            .map_err(|e| TransportError::Permanent(e.to_string()))?;
        if body.len() > MAX_PAYLOAD_BYTES {
            return Err(TransportError::Oversize);
        }
        let mut resp = req.send(&body[..]).map_err(|e| match e {
            ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed => {
                TransportError::Transient(e.to_string())
            }
            other => TransportError::Permanent(other.to_string()),
        })?;
        check_status(resp.status().as_u16(), url)?;
        let value: Value = resp
            .body_mut()
            .with_config()
            .limit(MAX_PAYLOAD_BYTES as u64 * 2)
            .read_json()
            .map_err(|e| TransportError::Permanent(format!("bad response body: {e}")))?;
        decode_response(request.kind, &value, |u| self.fetch(u))
    }
}

pub(crate) fn decode_response(
    kind: ServiceKind,
    value: &Value,
    fetch: impl Fn(&str) -> Result<Vec<u8>, TransportError>,
) -> Result<Vec<u8>, TransportError> {
    let field = |name: &str| value.get(name).and_then(Value::as_str);
    match kind {
        ServiceKind::Caption | ServiceKind::Complete => field("caption")
            .or_else(|| field("text"))
            .map(|s| s.as_bytes().to_vec())
            .ok_or_else(|| TransportError::Permanent("response has no text field".into())),
        ServiceKind::GenerateImage => {
            if let Some(b64) = field("image") {
                base64::engine::general_purpose::STANDARD
                    .decode(b64)
                    .map_err(|e| TransportError::Permanent(format!("bad base64 image: {e}")))
            } else if let Some(url) = field("url") {
                fetch(url)
            } else {
                Err(TransportError::Permanent("response has neither image nor url".into()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn env_overrides_file_values() {
        let mut ep = ServiceEndpoints {
            llm_url: Some("http://file".into()),
            ..Default::default()
        };
        ep.apply_env(|k| (k == "MANGAROLL_LLM_URL").then(|| "http://env".to_string()));
        assert_eq!(ep.llm_url.as_deref(), Some("http://env"));
        assert_eq!(ep.caption_url, None);
    }

    #[test]
    fn both_image_encodings_accepted() {
        let b64 = base64::engine::general_purpose::STANDARD.encode(b"PNGDATA");
        let got = decode_response(ServiceKind::GenerateImage, &json!({"image": b64}), |_| unreachable!());
        assert_eq!(got.unwrap(), b"PNGDATA");
        let got = decode_response(ServiceKind::GenerateImage, &json!({"url": "http://x/i.png"}), |u| {
            assert_eq!(u, "http://x/i.png");
            Ok(b"FETCHED".to_vec())
        });
        assert_eq!(got.unwrap(), b"FETCHED");
        assert!(decode_response(ServiceKind::Complete, &json!({"text": "hi"}), |_| unreachable!()).is_ok());
        assert!(decode_response(ServiceKind::Caption, &json!({}), |_| unreachable!()).is_err());
    }

    #[test]
    fn status_classification() {
        assert!(check_status(200, "x").is_ok());
        assert!(matches!(check_status(429, "x"), Err(TransportError::Transient(_))));
        assert!(matches!(check_status(503, "x"), Err(TransportError::Transient(_))));
        assert!(matches!(check_status(400, "x"), Err(TransportError::Permanent(_))));
        assert_eq!(check_status(413, "x"), Err(TransportError::Oversize));
    }
}
