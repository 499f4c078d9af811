//! Digest-keyed transcripts for offline, reproducible runs.
//!
//! A fixture file maps the digest of a canonicalized message list to the
//! scripted assistant reply. Saving also writes a plaintext sidecar with the
//! original prompts (`<file>.prompts.txt`) so transcripts can be audited.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatMessage, CompletionRequest, GatewayError};
use crate::digest::{digest_fields, sha256_hex};

/// Digest of the role/content pairs with newlines normalized to `\n`.
pub fn message_digest(messages: &[ChatMessage]) -> String {
    digest_fields(messages.iter().map(|m| {
        let content = m.content.replace("\r\n", "\n").replace('\r', "\n");
        format!("{}\n{}", m.role.as_str(), content)
    }))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureStore {
    #[serde(default)]
    pub responses: BTreeMap<String, String>,
    #[serde(skip)]
    prompts: BTreeMap<String, Vec<ChatMessage>>,
}

impl FixtureStore {
    pub fn load(path: &Path) -> io::Result<Self> {
        let bytes = fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut json = serde_json::to_vec_pretty(self).map_err(io::Error::other)?;
        json.push(b'\n');
        fs::write(path, json)?;
        if !self.prompts.is_empty() {
            fs::write(sidecar_path(path), self.render_prompts())?;
        }
        Ok(())
    }

    pub fn insert(&mut self, messages: &[ChatMessage], response: impl Into<String>) -> String {
        let digest = message_digest(messages);
        self.responses.insert(digest.clone(), response.into());
        self.prompts.insert(digest.clone(), messages.to_vec());
        digest
    }

    pub fn get(&self, messages: &[ChatMessage]) -> Option<&str> {
        self.responses.get(&message_digest(messages)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Digest of the serialized transcript, used as part of cache keys.
    pub fn content_digest(&self) -> String {
        sha256_hex(serde_json::to_vec(&self.responses).expect("map serializes"))
    }

    fn render_prompts(&self) -> String {
        let mut out = String::new();
        for (digest, messages) in &self.prompts {
            let _ = writeln!(out, "=== {digest} ===");
            for m in messages {
                let _ = writeln!(out, "[{}]\n{}", m.role.as_str(), m.content);
            }
            let _ = writeln!(out, "[response]\n{}\n", self.responses[digest]);
        }
        out
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".prompts.txt");
    path.with_file_name(name)
}

/// Answers only what the transcript scripts.
#[derive(Debug)]
pub struct FixtureBackend {
    store: FixtureStore,
    fingerprint: String,
}

impl FixtureBackend {
    pub fn new(store: FixtureStore) -> Self {
        let fingerprint = format!("fixture:{}", store.content_digest());
        Self { store, fingerprint }
    }
}

impl ChatBackend for FixtureBackend {
    fn send(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        self.store
            .get(&request.messages)
            .map(str::to_owned)
            .ok_or_else(|| GatewayError::Unscripted {
                digest: message_digest(&request.messages),
            })
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }
}

/// Produces a reply for a prompt, or `None` when it has nothing scripted.
pub type Responder = Box<dyn Fn(&[ChatMessage]) -> Option<String> + Send + Sync>;

/// Authoring backend: answers through a responder and records every
/// exchange so it can be saved as a fixture transcript.
pub struct RecordingBackend {
    responder: Responder,
    store: Mutex<FixtureStore>,
}

impl RecordingBackend {
    pub fn new(responder: Responder) -> Self {
        Self {
            responder,
            store: Mutex::new(FixtureStore::default()),
        }
    }

    pub fn snapshot(&self) -> FixtureStore {
        self.store.lock().expect("store lock").clone()
    }
}

impl ChatBackend for RecordingBackend {
    fn send(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        if let Some(hit) = self.store.lock().expect("store lock").get(&request.messages) {
            return Ok(hit.to_owned());
        }
        let reply = (self.responder)(&request.messages).ok_or_else(|| GatewayError::Unscripted {
            digest: message_digest(&request.messages),
        })?;
        self.store
            .lock()
            .expect("store lock")
            .insert(&request.messages, reply.clone());
        Ok(reply)
    }

    fn fingerprint(&self) -> String {
        "recording".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Gateway, WhitespaceTokenizer};
    use std::sync::Arc;

    fn messages() -> Vec<ChatMessage> {
        vec![ChatMessage::system("sys"), ChatMessage::user("hello\r\nworld")]
    }

    #[test]
    fn digest_normalizes_newlines() {
        let unix = vec![ChatMessage::system("sys"), ChatMessage::user("hello\nworld")];
        assert_eq!(message_digest(&messages()), message_digest(&unix));
    }

    #[test]
    fn digest_depends_on_role() {
        let a = vec![ChatMessage::system("x"), ChatMessage::user("y")];
        let b = vec![ChatMessage::system("x"), ChatMessage::assistant("y")];
        assert_ne!(message_digest(&a), message_digest(&b));
    }

    #[test]
    fn scripted_response_is_verbatim_and_repeatable() {
        let mut store = FixtureStore::default();
        store.insert(&messages(), "  scripted\nreply ");
        let gw = Gateway::new(
            Box::new(FixtureBackend::new(store)),
            Arc::new(WhitespaceTokenizer),
            4096,
        );
        let first = gw.chat(messages()).unwrap();
        let second = gw.chat(messages()).unwrap();
        assert_eq!(first, "  scripted\nreply ");
        assert_eq!(first, second);
    }

    #[test]
    fn unscripted_prompt_is_an_error() {
        let gw = Gateway::new(
            Box::new(FixtureBackend::new(FixtureStore::default())),
            Arc::new(WhitespaceTokenizer),
            4096,
        );
        assert!(matches!(gw.chat(messages()), Err(GatewayError::Unscripted { .. })));
    }

    #[test]
    fn save_writes_sidecar_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("llm.json");
        let mut store = FixtureStore::default();
        store.insert(&messages(), "ok");
        store.save(&path).unwrap();
        let sidecar = fs::read_to_string(dir.path().join("llm.json.prompts.txt")).unwrap();
        assert!(sidecar.contains("[user]\nhello\r\nworld"));
        let loaded = FixtureStore::load(&path).unwrap();
        assert_eq!(loaded.responses, store.responses);
    }

    #[test]
    fn recorder_captures_exchanges() {
        let rec = RecordingBackend::new(Box::new(|m| Some(format!("echo {}", m.len()))));
        let gw = Gateway::new(Box::new(rec), Arc::new(WhitespaceTokenizer), 4096);
        assert_eq!(gw.chat(messages()).unwrap(), "echo 2");
    }
}
