//! Description embeddings.
//!
//! The default provider is a deterministic stub: hashed character-trigram
//! counts. It needs no network and gives near-duplicate descriptions a
//! cosine close to 1, which is all the resolver requires to be testable.
//! [`RemoteEmbedder`] talks to an OpenAI-style `/embeddings` endpoint.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STUB_DIMENSION: usize = 128;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding request failed: {0}")]
    Transport(String),
    #[error("embedding response malformed: {0}")]
    Malformed(String),
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;

    /// Identifies the provider and its settings for cache keys.
    fn fingerprint(&self) -> String;
}

/// Cosine similarity; zero when either vector has no magnitude.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StubEmbedder {
    pub dimension: usize,
}

impl Default for StubEmbedder {
    fn default() -> Self {
        Self {
            dimension: STUB_DIMENSION,
        }
    }
}

impl StubEmbedder {
    pub fn vector(&self, text: &str) -> Vec<f64> {
        let dimension = self.dimension.max(1);
        let mut v = vec![0.0; dimension];
        let padded: Vec<char> = std::iter::once(' ')
            .chain(text.trim().to_lowercase().chars())
            .chain(std::iter::once(' '))
            .collect();
        for window in padded.windows(3) {
            let trigram: String = window.iter().collect();
            v[(fnv1a(trigram.as_bytes()) % dimension as u64) as usize] += 1.0;
        }
        v
    }
}

impl EmbeddingProvider for StubEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        Ok(self.vector(text))
    }

    fn fingerprint(&self) -> String {
        format!("stub-trigram-{}", self.dimension)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    #[default]
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub kind: EmbeddingKind,
    pub dimension: usize,
    pub endpoint: String,
    pub model: String,
    pub credential_env: String,
    pub request_timeout_secs: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            kind: EmbeddingKind::Stub,
            dimension: STUB_DIMENSION,
            endpoint: "http://127.0.0.1:8080/v1/embeddings".into(),
            model: "text-embedding-ada-002".into(),
            credential_env: "OPENAI_API_KEY".into(),
            request_timeout_secs: 60,
        }
    }
}

impl EmbeddingConfig {
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>, EmbedError> {
        Ok(match self.kind {
            EmbeddingKind::Stub => Box::new(StubEmbedder {
                dimension: self.dimension,
            }),
            EmbeddingKind::Remote => Box::new(RemoteEmbedder::new(self)?),
        })
    }
}

/// Embeddings from a remote service; each distinct text is fetched once.
pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    config: EmbeddingConfig,
    cache: Mutex<HashMap<String, Vec<f64>>>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(config: &EmbeddingConfig) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.request_timeout_secs))
            .build()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            config: config.clone(),
            cache: Mutex::default(),
        })
    }

    fn fetch(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let mut request = self
            .client
            .post(&self.config.endpoint)
            .json(&serde_json::json!({ "model": self.config.model, "input": [text] }));
        if let Ok(key) = std::env::var(&self.config.credential_env) {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| EmbedError::Transport(e.to_string()))?;
        if !response.status().is_success() {
            return Err(EmbedError::Transport(format!("status {}", response.status())));
        }
        let body: EmbeddingResponse = response.json().map_err(|e| EmbedError::Malformed(e.to_string()))?;
        body.data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| EmbedError::Malformed("no embedding in response".into()))
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        if let Some(hit) = self.cache.lock().expect("embedding cache").get(text) {
            return Ok(hit.clone());
        }
        let v = self.fetch(text)?;
        self.cache
            .lock()
            .expect("embedding cache")
            .insert(text.to_string(), v.clone());
        Ok(v)
    }

    fn fingerprint(&self) -> String {
        format!("remote:{}:{}", self.config.endpoint, self.config.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_is_deterministic_and_sized() {
        let stub = StubEmbedder::default();
        let v = stub.vector("A road vehicle with four wheels");
        assert_eq!(v.len(), STUB_DIMENSION);
        assert_eq!(v, stub.vector("a road vehicle with four wheels "));
    }

    #[test]
    fn near_duplicates_are_close_and_unrelated_text_is_not() {
        let stub = StubEmbedder::default();
        let a = stub.vector("A motor vehicle with four wheels used to carry passengers");
        let b = stub.vector("A motor vehicle with four wheels used for carrying passengers");
        let c = stub.vector("Fortification on the old city walls");
        assert!(cosine(&a, &b) > 0.9);
        assert!(cosine(&a, &c) < cosine(&a, &b));
    }

    #[test]
    fn zero_vector_has_zero_cosine() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }
}
