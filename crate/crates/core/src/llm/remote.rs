use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use log::warn;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;

use super::{BackendConfig, ChatBackend, CompletionRequest, GatewayError};

/// Chat-completions client: bearer auth, first-choice content, bounded
/// in-flight requests and exponential backoff on transient failures.
pub struct RemoteChatBackend {
    client: Client,
    endpoint: String,
    model: String,
    credential: Option<String>,
    max_attempts: u32,
    base_backoff: Duration,
    slots: Slots,
}

impl std::fmt::Debug for RemoteChatBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteChatBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("credential", &self.credential.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Failure {
    Transient(String),
    Fatal(String),
}

impl RemoteChatBackend {
    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(config.request_timeout_secs))
            .build()
            .map_err(|e| GatewayError::InvalidRequest(format!("http client: {e}")))?;
        Ok(Self {
            client,
            endpoint: config.endpoint.clone(),
            model: config.model.clone(),
            credential: std::env::var(&config.credential_env).ok().filter(|c| !c.is_empty()),
            max_attempts: config.max_attempts.max(1),
            base_backoff: config.backoff(),
            slots: Slots::new(config.max_in_flight.max(1)),
        })
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<String, Failure> {
        let body = json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut call = self.client.post(&self.endpoint).json(&body);
        if let Some(token) = &self.credential {
            call = call.bearer_auth(token);
        }
        let response = call.send().map_err(|e| Failure::Transient(e.to_string()))?;
        let status = response.status();
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(Failure::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(Failure::Fatal(format!("HTTP {status}: {text}")));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| Failure::Fatal(format!("malformed response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Failure::Fatal("response has no first choice content".into()))
    }
}

impl ChatBackend for RemoteChatBackend {
    fn send(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let _slot = self.slots.acquire();
        let mut last = String::new();
        for attempt in 1..=self.max_attempts {
            match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(message)) => {
                    return Err(GatewayError::Transport {
                        attempts: attempt,
                        message,
                    })
                }
                Err(Failure::Transient(message)) => {
                    warn!("chat request attempt {attempt}/{} failed: {message}", self.max_attempts);
                    last = message;
                    if attempt < self.max_attempts {
                        thread::sleep(self.base_backoff * 2u32.pow(attempt - 1));
                    }
                }
            }
        }
        Err(GatewayError::Transport {
            attempts: self.max_attempts,
            message: last,
        })
    }

    fn fingerprint(&self) -> String {
        format!("remote:{}|{}", self.endpoint, self.model)
    }
}

/// Counting semaphore bounding concurrent requests.
struct Slots {
    free: Mutex<usize>,
    available: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock");
        while *free == 0 {
            free = self.available.wait(free).expect("slot lock");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock") += 1;
        self.0.available.notify_one();
    }
}
