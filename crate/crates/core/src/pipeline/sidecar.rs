//! HTTP clients for the optional inference sidecar.
//!
//! `POST {base}/embed` takes PNG bytes and answers
//! `{"vector": [..], "dim": n, "model_name": ".."}`.
//! `POST {base}/narrate` takes `{"section": s, "context": {..}}` and answers
//! `{"section": s, "text": ".."}`.

use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};
use ureq::Agent;

use super::registry::Embedder;
use crate::narrative::{NarrateError, Narrator};
use crate::wafer::WaferMap;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

fn agent(timeout: Duration) -> Agent {
    Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(true)
        .build()
        .into()
}

fn endpoint(base: &str, path: &str) -> String {
    format!("{}/{path}", base.trim_end_matches('/'))
}

pub struct HttpNarrator {
    url: String,
    agent: Agent,
}

impl HttpNarrator {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        HttpNarrator {
            url: endpoint(base_url, "narrate"),
            agent: agent(timeout),
        }
    }
}

#[derive(Deserialize)]
struct NarrateResponse {
    section: String,
    text: String,
}

impl Narrator for HttpNarrator {
    fn name(&self) -> &str {
        &self.url
    }

    fn narrate(&self, section: &str, context: &Value) -> Result<String, NarrateError> {
        let backend = |e: String| NarrateError::Backend(format!("{}: {e}", self.url));
        let resp: NarrateResponse = self
            .agent
            .post(&self.url)
            .send_json(json!({ "section": section, "context": context }))
            .map_err(|e| backend(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| backend(e.to_string()))?;
        if resp.section != section {
            return Err(backend(format!("answered section {:?} for {section:?}", resp.section)));
        }
        if resp.text.trim().is_empty() {
            return Err(backend("empty text".into()));
        }
        Ok(resp.text)
    }
}

pub struct HttpEmbedder {
    url: String,
    agent: Agent,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        HttpEmbedder {
            url: endpoint(base_url, "embed"),
            agent: agent(timeout),
        }
    }
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
    dim: usize,
    #[allow(dead_code)]
    model_name: String,
}

impl Embedder for HttpEmbedder {
    fn name(&self) -> &str {
        &self.url
    }

    fn embed(&self, map: &WaferMap) -> Result<Vec<f64>, String> {
        let png = map.to_png();
        let resp: EmbedResponse = self
            .agent
            .post(&self.url)
            .header("content-type", "image/png")
            .send(&png[..])
            .map_err(|e| format!("{}: {e}", self.url))?
            .body_mut()
            .read_json()
            .map_err(|e| format!("{}: {e}", self.url))?;
        if resp.dim != resp.vector.len() {
            return Err(format!(
                "{}: dim {} but {} values",
                self.url,
                resp.dim,
                resp.vector.len()
            ));
        }
        if resp.vector.is_empty() || resp.vector.iter().any(|v| !v.is_finite()) {
            return Err(format!("{}: empty or non-finite vector", self.url));
        }
        Ok(resp.vector)
    }
}
