//! Validated prompting with a single corrective retry, plus the diagnostics
//! log that records every rejected line.

use std::fmt::Write as _;
use std::sync::Mutex;

use log::debug;
use serde::Serialize;

use crate::extractor::{validate_response, RejectedLine, ValidationReport};
use crate::llm::{ChatMessage, Gateway, GatewayError};
use crate::prompts::{PromptTemplate, TaskId};

/// Follow-up sent when a whole response fails validation.
pub const RETRY_NOTICE: &str = "Your previous answer could not be parsed. \
Answer again, following the required output format exactly and writing nothing else.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    /// Document id or resolution/schema scope the call belonged to.
    pub scope: String,
    pub task: TaskId,
    pub message: String,
    pub rejected: Vec<RejectedLine>,
}

/// Thread-safe sink for diagnostics of one stage run.
#[derive(Debug, Default)]
pub struct DiagnosticLog {
    entries: Mutex<Vec<Diagnostic>>,
}

impl DiagnosticLog {
    pub fn push(&self, diagnostic: Diagnostic) {
        debug!("{} [{}]: {}", diagnostic.scope, diagnostic.task, diagnostic.message);
        self.entries.lock().expect("diagnostic lock").push(diagnostic);
    }

    pub fn extend(&self, more: impl IntoIterator<Item = Diagnostic>) {
        for d in more {
            self.push(d);
        }
    }

    /// Entries sorted by scope, task and message, so logs are reproducible
    /// regardless of worker scheduling.
    pub fn take(&self) -> Vec<Diagnostic> {
        let mut entries = std::mem::take(&mut *self.entries.lock().expect("diagnostic lock"));
        entries.sort_by(|a, b| (&a.scope, a.task, &a.message).cmp(&(&b.scope, b.task, &b.message)));
        entries
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("diagnostic lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Plain-text rendering used for the per-run rejection log.
pub fn render_log(entries: &[Diagnostic]) -> String {
    let mut out = String::new();
    for d in entries {
        let _ = writeln!(out, "[{}] {}: {}", d.scope, d.task, d.message);
        for r in &d.rejected {
            let reason = match r.reason {
                crate::extractor::RejectReason::PatternMismatch => "pattern-mismatch",
                crate::extractor::RejectReason::ConsistencyViolation => "consistency-violation",
            };
            let _ = writeln!(out, "    line {} ({reason}: {}): {}", r.line, r.detail, r.raw);
        }
    }
    out
}

/// Sends `messages`, validates the reply and retries once with a corrective
/// follow-up if nothing in it parses.
///
/// Returns `Ok(None)` when the step must be skipped: the retry also failed,
/// or the transport gave up. Budget, contract and fixture errors are
/// propagated because they indicate a configuration or authoring problem.
pub fn ask_validated(
    gateway: &Gateway,
    template: &PromptTemplate,
    messages: Vec<ChatMessage>,
    reference: Option<&[String]>,
    scope: &str,
    log: &DiagnosticLog,
) -> Result<Option<ValidationReport>, GatewayError> {
    let first = match send(gateway, messages.clone(), template, scope, log)? {
        Some(raw) => raw,
        None => return Ok(None),
    };
    let report = validate_response(&first, &template.grammar, reference);
    note_rejections(&report, template.task, scope, log);
    if !report.whole_rejected {
        return Ok(Some(report));
    }

    let mut retry = messages;
    retry.push(ChatMessage::assistant(first));
    retry.push(ChatMessage::user(RETRY_NOTICE));
    let second = match send(gateway, retry, template, scope, log)? {
        Some(raw) => raw,
        None => return Ok(None),
    };
    let report = validate_response(&second, &template.grammar, reference);
    note_rejections(&report, template.task, scope, log);
    if report.whole_rejected {
        log.push(Diagnostic {
            scope: scope.to_string(),
            task: template.task,
            message: "response rejected after retry; step skipped".into(),
            rejected: Vec::new(),
        });
        return Ok(None);
    }
    Ok(Some(report))
}

fn send(
    gateway: &Gateway,
    messages: Vec<ChatMessage>,
    template: &PromptTemplate,
    scope: &str,
    log: &DiagnosticLog,
) -> Result<Option<String>, GatewayError> {
    match gateway.chat(messages) {
        Ok(raw) => Ok(Some(raw)),
        Err(GatewayError::Transport { attempts, message }) => {
            log.push(Diagnostic {
                scope: scope.to_string(),
                task: template.task,
                message: format!("transport failed after {attempts} attempt(s): {message}; step skipped"),
                rejected: Vec::new(),
            });
            Ok(None)
        }
        Err(other) => Err(other),
    }
}

fn note_rejections(report: &ValidationReport, task: TaskId, scope: &str, log: &DiagnosticLog) {
    if report.rejected.is_empty() {
        return;
    }
    log.push(Diagnostic {
        scope: scope.to_string(),
        task,
        message: format!("{} of {} line(s) rejected", report.rejected.len(), report.line_count()),
        rejected: report.rejected.clone(),
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{FixtureBackend, FixtureStore, WhitespaceTokenizer};
    use crate::prompts::PromptSet;
    use std::sync::Arc;

    #[test]
    fn retry_recovers_from_unparsable_reply() {
        let prompts = PromptSet::builtin();
        let t = prompts.get(TaskId::EntityExtraction);
        let msgs = t.render(&[("text", "Cagliari is nice.")]).unwrap();
        let mut store = FixtureStore::default();
        store.insert(&msgs, "Sure! Here you go.");
        let mut retry = msgs.clone();
        retry.push(ChatMessage::assistant("Sure! Here you go."));
        retry.push(ChatMessage::user(RETRY_NOTICE));
        store.insert(&retry, "1. Cagliari | A city in Sardinia | City");
        let gw = Gateway::new(
            Box::new(FixtureBackend::new(store)),
            Arc::new(WhitespaceTokenizer),
            4096,
        );
        let log = DiagnosticLog::default();
        let report = ask_validated(&gw, t, msgs, None, "doc", &log).unwrap().unwrap();
        assert_eq!(report.accepted.len(), 1);
        assert_eq!(gw.calls(), 2);
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn second_failure_skips_the_step() {
        let prompts = PromptSet::builtin();
        let t = prompts.get(TaskId::EntityExtraction);
        let msgs = t.render(&[("text", "x")]).unwrap();
        let mut store = FixtureStore::default();
        store.insert(&msgs, "nope");
        let mut retry = msgs.clone();
        retry.push(ChatMessage::assistant("nope"));
        retry.push(ChatMessage::user(RETRY_NOTICE));
        store.insert(&retry, "still nope");
        let gw = Gateway::new(
            Box::new(FixtureBackend::new(store)),
            Arc::new(WhitespaceTokenizer),
            4096,
        );
        let log = DiagnosticLog::default();
        assert!(ask_validated(&gw, t, msgs, None, "doc", &log).unwrap().is_none());
        assert!(render_log(&log.take()).contains("step skipped"));
    }
}
