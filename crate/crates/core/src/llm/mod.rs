//! Chat-completion access shared by every prompting step.
//!
//! All requests go through [`Gateway`], which enforces the prompt contract
//! (exactly one system message, first; temperature zero) and the shared
//! input/output token budget before anything reaches a backend. Backends are
//! pluggable: [`FixtureBackend`] answers from a digest-keyed transcript for
//! offline runs, [`RemoteChatBackend`] speaks the chat-completions wire
//! protocol over HTTP.

mod fixture;
mod remote;
mod tokenizer;

pub use fixture::{message_digest, FixtureBackend, FixtureStore, RecordingBackend, Responder};
pub use remote::RemoteChatBackend;
pub use tokenizer::{ConservativeTokenizer, Tokenizer, TokenizerKind, WhitespaceTokenizer};

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default shared input + output budget of the reference chat model.
pub const DEFAULT_TOKEN_LIMIT: usize = 4096;

/// Headroom kept between the prompt and the default output allowance.
pub const OUTPUT_SAFETY_MARGIN: usize = 64;

/// Per-message framing overhead of chat formats, in tokens.
const TOKENS_PER_MESSAGE: usize = 3;
const REPLY_PRIMING_TOKENS: usize = 3;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("prompt needs {prompt_tokens} tokens plus {max_output_tokens} output tokens, over the limit of {limit}")]
    Budget {
        prompt_tokens: usize,
        max_output_tokens: usize,
        limit: usize,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no scripted response for prompt digest {digest}")]
    Unscripted { digest: String },
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: usize,
}

/// Something that can answer a validated request.
pub trait ChatBackend: Send + Sync {
    fn send(&self, request: &CompletionRequest) -> Result<String, GatewayError>;

    /// Identifies the backend in cache keys (fixture digest, endpoint + model).
    fn fingerprint(&self) -> String;
}

impl<T: ChatBackend + ?Sized> ChatBackend for Arc<T> {
    fn send(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        (**self).send(request)
    }

    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    #[default]
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer credential.
    pub credential_env: String,
    pub token_limit: usize,
    pub tokenizer: TokenizerKind,
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
    pub max_in_flight: usize,
    pub request_timeout_secs: u64,
    pub fixture_file: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Fixture,
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            credential_env: "OPENAI_API_KEY".into(),
            token_limit: DEFAULT_TOKEN_LIMIT,
            tokenizer: TokenizerKind::Whitespace,
            max_attempts: 3,
            base_backoff_ms: 1000,
            max_in_flight: 1,
            request_timeout_secs: 120,
            fixture_file: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.token_limit == 0 {
            return Err("backend.token_limit must be positive".into());
        }
        if self.max_attempts == 0 {
            return Err("backend.max_attempts must be at least 1".into());
        }
        if self.max_in_flight == 0 {
            return Err("backend.max_in_flight must be at least 1".into());
        }
        if self.kind == BackendKind::Fixture && self.fixture_file.is_none() {
            return Err("fixture backend requires backend.fixture_file".into());
        }
        Ok(())
    }

    pub fn backoff(&self) -> Duration {
        Duration::from_millis(self.base_backoff_ms)
    }
}

/// Budget-checked, role-disciplined access to a chat backend.
pub struct Gateway {
    backend: Box<dyn ChatBackend>,
    tokenizer: Arc<dyn Tokenizer>,
    token_limit: usize,
    model: String,
    calls: AtomicUsize,
    prompt_tokens_used: AtomicUsize,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.fingerprint())
            .field("tokenizer", &self.tokenizer.name())
            .field("token_limit", &self.token_limit)
            .field("calls", &self.calls())
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Box<dyn ChatBackend>, tokenizer: Arc<dyn Tokenizer>, token_limit: usize) -> Self {
        Self {
            backend,
            tokenizer,
            token_limit,
            model: BackendConfig::default().model,
            calls: AtomicUsize::new(0),
            prompt_tokens_used: AtomicUsize::new(0),
        }
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    /// Builds the backend named by `config`. Fixture files are loaded eagerly.
    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        config.validate().map_err(GatewayError::InvalidRequest)?;
        let backend: Box<dyn ChatBackend> = match config.kind {
            BackendKind::Fixture => {
                let path = config.fixture_file.as_ref().expect("validated");
                let store = FixtureStore::load(path)
                    .map_err(|e| GatewayError::InvalidRequest(format!("fixture file {}: {e}", path.display())))?;
                Box::new(FixtureBackend::new(store))
            }
            BackendKind::Remote => Box::new(RemoteChatBackend::from_config(config)?),
        };
        Ok(Self::new(backend, config.tokenizer.build(), config.token_limit).with_model(&config.model))
    }

    pub fn token_limit(&self) -> usize {
        self.token_limit
    }

    pub fn tokenizer(&self) -> &Arc<dyn Tokenizer> {
        &self.tokenizer
    }

    pub fn count_tokens(&self, text: &str) -> usize {
        self.tokenizer.count(text)
    }

    /// Tokens a message list occupies, including chat framing.
    pub fn prompt_tokens(&self, messages: &[ChatMessage]) -> usize {
        messages
            .iter()
            .map(|m| TOKENS_PER_MESSAGE + self.tokenizer.count(&m.content))
            .sum::<usize>()
            + REPLY_PRIMING_TOKENS
    }

    /// Number of requests handed to the backend so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn prompt_tokens_used(&self) -> usize {
        self.prompt_tokens_used.load(Ordering::SeqCst)
    }

    pub fn fingerprint(&self) -> String {
        format!(
            "{}|{}|{}",
            self.backend.fingerprint(),
            self.tokenizer.name(),
            self.token_limit
        )
    }

    /// Request with the default output allowance: whatever the prompt leaves
    /// free, minus [`OUTPUT_SAFETY_MARGIN`].
    pub fn request(&self, messages: Vec<ChatMessage>) -> Result<CompletionRequest, GatewayError> {
        let prompt = self.prompt_tokens(&messages);
        let max_tokens = self.token_limit.saturating_sub(prompt + OUTPUT_SAFETY_MARGIN);
        if max_tokens == 0 {
            return Err(GatewayError::Budget {
                prompt_tokens: prompt,
                max_output_tokens: OUTPUT_SAFETY_MARGIN,
                limit: self.token_limit,
            });
        }
        Ok(self.request_with_max(messages, max_tokens))
    }

    pub fn request_with_max(&self, messages: Vec<ChatMessage>, max_tokens: usize) -> CompletionRequest {
        CompletionRequest {
            model: self.model.clone(),
            messages,
            temperature: 0.0,
            max_tokens,
        }
    }

    /// Validates and sends one request. Nothing is transmitted when the
    /// budget or the prompt contract is violated.
    pub fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        self.check(request)?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompt_tokens_used
            .fetch_add(self.prompt_tokens(&request.messages), Ordering::SeqCst);
        self.backend.send(request)
    }

    /// Convenience wrapper: default output allowance, then [`Self::complete`].
    pub fn chat(&self, messages: Vec<ChatMessage>) -> Result<String, GatewayError> {
        let request = self.request(messages)?;
        self.complete(&request)
    }

    fn check(&self, request: &CompletionRequest) -> Result<(), GatewayError> {
        if request.temperature != 0.0 {
            return Err(GatewayError::InvalidRequest("temperature must be zero".into()));
        }
        let systems = request.messages.iter().filter(|m| m.role == Role::System).count();
        if systems != 1 || request.messages.first().map(|m| m.role) != Some(Role::System) {
            return Err(GatewayError::InvalidRequest(
                "exactly one system message is required and it must come first".into(),
            ));
        }
        if request.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        let prompt = self.prompt_tokens(&request.messages);
        if prompt + request.max_tokens > self.token_limit {
            return Err(GatewayError::Budget {
                prompt_tokens: prompt,
                max_output_tokens: request.max_tokens,
                limit: self.token_limit,
            });
        }
        Ok(())
    }
}
