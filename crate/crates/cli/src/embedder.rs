//! HTTP client for the embedding sidecar.
//!
//! Endpoints: `GET /healthz`, `POST /v1/embed_text` with `{"texts": [...]}`
//! and `POST /v1/embed_image` with `{"image_b64": "..."}`. Both embed calls
//! answer `{"dim": d, "vectors": [[...], ...]}`.

use std::thread;
use std::time::Duration;

use base64::Engine;
use log::{debug, warn};
use serde::Deserialize;
use serde_json::json;
use stateprompt::EmbeddingVector;
use ureq::http::Response;
use ureq::{Agent, Body};

use crate::{CliError, Result};

const RETRY_PAUSE: Duration = Duration::from_millis(100);

/// Vectors further than this from unit norm are reported before being
/// normalized.
pub const UNIT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderEndpoint {
    pub base_url: String,
    pub timeout: Duration,
    pub retries: u32,
}

impl EmbedderEndpoint {
    pub fn new(base_url: &str) -> Result<Self> {
        let base_url = base_url.trim().trim_end_matches('/');
        if base_url.is_empty() {
            return Err(CliError::Usage("embedder url must not be empty".into()));
        }
        Ok(Self {
            base_url: base_url.to_string(),
            timeout: Duration::from_secs(30),
            retries: 2,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base_url)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Health {
    pub status: String,
    pub dim: usize,
    pub model: String,
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

pub struct EmbedderClient {
    endpoint: EmbedderEndpoint,
    agent: Agent,
    health: Option<Health>,
}

fn transient(e: &ureq::Error) -> bool {
    matches!(
        e,
        ureq::Error::Io(_)
            | ureq::Error::Timeout(_)
            | ureq::Error::ConnectionFailed
            | ureq::Error::HostNotFound
            | ureq::Error::Protocol(_)
    )
}

impl EmbedderClient {
    pub fn new(endpoint: EmbedderEndpoint) -> Self {
        let agent = Agent::config_builder()
            .timeout_global(Some(endpoint.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint,
            agent,
            health: None,
        }
    }

    pub fn endpoint(&self) -> &EmbedderEndpoint {
        &self.endpoint
    }

    /// Sends the request up to `retries + 1` times. Connection failures,
    /// timeouts and 5xx answers are retried; other statuses fail at once.
    fn request(
        &self,
        what: &str,
        send: impl Fn(&Agent) -> std::result::Result<Response<Body>, ureq::Error>,
    ) -> Result<String> {
        let mut attempt = 0;
        loop {
            let last = attempt >= self.endpoint.retries;
            match send(&self.agent) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let body = resp
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| CliError::Transport(format!("{what}: reading body: {e}")))?;
                    if (200..300).contains(&status) {
                        return Ok(body);
                    }
                    if status < 500 || last {
                        return Err(CliError::Transport(format!(
                            "{what}: HTTP {status}: {}",
                            body.trim()
                        )));
                    }
                    warn!("{what}: HTTP {status}, retrying");
                }
                Err(e) if transient(&e) && !last => warn!("{what}: {e}, retrying"),
                Err(e) => return Err(CliError::Transport(format!("{what}: {e}"))),
            }
            attempt += 1;
            thread::sleep(RETRY_PAUSE * attempt);
        }
    }

    /// Probes `/healthz`; the answer is cached for later embed calls.
    pub fn health(&mut self) -> Result<Health> {
        let url = self.endpoint.url("/healthz");
        let body = self.request("GET /healthz", |a| a.get(&url).call())?;
        let health: Health = serde_json::from_str(&body)
            .map_err(|e| CliError::Transport(format!("malformed /healthz answer: {e}")))?;
        if health.status != "ok" {
            return Err(CliError::Transport(format!("service status '{}'", health.status)));
        }
        if health.dim == 0 {
            return Err(CliError::Transport("service reports dim 0".into()));
        }
        debug!("embedder {} ready: model {}, dim {}", self.endpoint.base_url, health.model, health.dim);
        self.health = Some(health.clone());
        Ok(health)
    }

    fn ensure_health(&mut self) -> Result<usize> {
        match &self.health {
            Some(h) => Ok(h.dim),
            None => self.health().map(|h| h.dim),
        }
    }

    fn embed(&mut self, what: &str, path: &str, payload: serde_json::Value, expected: usize) -> Result<Vec<EmbeddingVector>> {
        let dim = self.ensure_health()?;
        let url = self.endpoint.url(path);
        let body = self.request(what, |a| a.post(&url).send_json(&payload))?;
        let resp: EmbedResponse = serde_json::from_str(&body)
            .map_err(|e| CliError::Transport(format!("malformed {path} answer: {e}")))?;
        if resp.dim != dim {
            return Err(CliError::Transport(format!(
                "{path} answered dim {} but /healthz declared {dim}",
                resp.dim
            )));
        }
        if resp.vectors.len() != expected {
            return Err(CliError::Transport(format!(
                "{path} returned {} vectors for {expected} inputs",
                resp.vectors.len()
            )));
        }
        resp.vectors
            .into_iter()
            .enumerate()
            .map(|(k, v)| {
                if v.len() != dim {
                    return Err(CliError::Transport(format!(
                        "{path}: vector {k} has length {}, expected {dim}",
                        v.len()
                    )));
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > UNIT_TOLERANCE {
                    warn!("{path}: vector {k} has norm {norm}, normalizing");
                }
                Ok(EmbeddingVector::normalized(v)?)
            })
            .collect()
    }

    pub fn embed_texts(&mut self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        self.embed("POST /v1/embed_text", "/v1/embed_text", json!({ "texts": texts }), texts.len())
    }

    /// Image bytes are sent as-is; decoding happens in the service.
    pub fn embed_image(&mut self, bytes: &[u8]) -> Result<EmbeddingVector> {
        let image_b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
        let mut v = self.embed(
            "POST /v1/embed_image",
            "/v1/embed_image",
            json!({ "image_b64": image_b64 }),
            1,
        )?;
        Ok(v.remove(0))
    }
}
