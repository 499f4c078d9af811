//! Overlapping token windows over a document, each carrying a summary of
//! everything before it.
//!
//! Windows are built from whole words: the text is cut only at whitespace,
//! and each window packs as many words as fit into `window_tokens`. The next
//! window restarts at the first word of the trailing `overlap_tokens` of the
//! previous one. Chunk spans include the whitespace that follows their last
//! word, so consecutive spans are contiguous or overlapping and the first
//! and last chunks reach the ends of the text.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extractor::validate_response;
use crate::llm::{Gateway, GatewayError, Tokenizer};
use crate::prompts::{PromptError, PromptSet, TaskId};

/// Inserted between the rolling summary and the chunk text in prompts.
pub const SUMMARY_SEPARATOR: &str = "\n\n---\n\n";

#[derive(Debug, Error)]
pub enum ChunkError {
    #[error("window ({window}) must be larger than overlap ({overlap})")]
    InvalidConfig { window: usize, overlap: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub window_tokens: usize,
    pub overlap_tokens: usize,
    pub summary_budget_tokens: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            window_tokens: 1200,
            overlap_tokens: 200,
            summary_budget_tokens: 512,
        }
    }
}

impl SplitConfig {
    pub fn new(window_tokens: usize, overlap_tokens: usize) -> Result<Self, ChunkError> {
        let config = Self {
            window_tokens,
            overlap_tokens,
            ..Self::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ChunkError> {
        if self.window_tokens == 0 || self.overlap_tokens >= self.window_tokens {
            return Err(ChunkError::InvalidConfig {
                window: self.window_tokens,
                overlap: self.overlap_tokens,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub index: usize,
    pub text: String,
    pub token_count: usize,
    /// Character offsets into the source, `start..end`.
    pub start: usize,
    pub end: usize,
    /// Word index range in the source, `first_word..end_word`.
    pub first_word: usize,
    pub end_word: usize,
    /// Summary of all preceding chunks; empty for the first.
    pub summary: String,
}

impl Chunk {
    /// What extraction prompts see: the summary (if any), a separator, then
    /// the chunk itself.
    pub fn prompt_text(&self) -> String {
        if self.summary.trim().is_empty() {
            self.text.trim().to_string()
        } else {
            format!("{}{SUMMARY_SEPARATOR}{}", self.summary.trim(), self.text.trim())
        }
    }
}

struct Word {
    /// Byte offsets.
    start: usize,
    tokens: usize,
}

fn words(text: &str, tokenizer: &dyn Tokenizer) -> Vec<Word> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices().chain(std::iter::once((text.len(), ' '))) {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push(Word {
                    start: s,
                    tokens: tokenizer.count(&text[s..i]).max(1),
                });
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// Splits `text` into overlapping windows. Empty or blank text yields no
/// chunks; text shorter than one window yields exactly one.
pub fn split(text: &str, config: &SplitConfig, tokenizer: &dyn Tokenizer) -> Result<Vec<Chunk>, ChunkError> {
    config.validate()?;
    let words = words(text, tokenizer);
    if words.is_empty() {
        return Ok(Vec::new());
    }
    let n = words.len();
    let pack = |start: usize| {
        let mut end = start;
        let mut tokens = 0;
        while end < n && (end == start || tokens + words[end].tokens <= config.window_tokens) {
            tokens += words[end].tokens;
            end += 1;
        }
        (end, tokens)
    };

    let mut windows = Vec::new();
    let mut start = 0;
    loop {
        let (end, tokens) = pack(start);
        windows.push((start, end, tokens));
        if end == n {
            break;
        }
        // Walk back from `end` while the tail still fits in the overlap.
        let mut next = end;
        let mut tail = 0;
        while next - 1 > start && tail + words[next - 1].tokens <= config.overlap_tokens {
            tail += words[next - 1].tokens;
            next -= 1;
        }
        // An oversized following word could stall the window; drop the
        // overlap for that step.
        if pack(next).0 <= end {
            next = end;
        }
        start = next;
    }

    let byte_to_char = |byte: usize| text[..byte].chars().count();
    let last = windows.len() - 1;
    Ok(windows
        .into_iter()
        .enumerate()
        .map(|(index, (first, end, tokens))| {
            let start_byte = if index == 0 { 0 } else { words[first].start };
            let end_byte = if index == last { text.len() } else { words[end].start };
            Chunk {
                index,
                text: text[start_byte..end_byte].to_string(),
                token_count: tokens,
                start: byte_to_char(start_byte),
                end: byte_to_char(end_byte),
                first_word: first,
                end_word: end,
                summary: String::new(),
            }
        })
        .collect())
}

/// One step of the summary recurrence: condenses the previous summary and
/// the previous chunk into the context for the next chunk.
pub fn rolling_summary(
    gateway: &Gateway,
    prompts: &PromptSet,
    previous_summary: &str,
    previous_chunk: &str,
    budget_tokens: usize,
) -> Result<String, ChunkError> {
    let template = prompts.get(TaskId::Summarization);
    let budget = budget_tokens.to_string();
    let messages = template.render(&[
        ("budget", &budget),
        ("summary", previous_summary.trim()),
        ("chunk", previous_chunk.trim()),
    ])?;
    let request = gateway.request_with_max(messages, budget_tokens);
    let raw = gateway.complete(&request)?;
    let report = validate_response(&raw, &template.grammar, None);
    let text = report
        .accepted
        .iter()
        .map(|a| a.raw.trim())
        .collect::<Vec<_>>()
        .join("\n");
    Ok(truncate_tokens(&text, budget_tokens, gateway.tokenizer().as_ref()))
}

/// Fills `summary` on every chunk after the first, in order.
pub fn summarize_chunks(
    gateway: &Gateway,
    prompts: &PromptSet,
    chunks: &mut [Chunk],
    budget_tokens: usize,
) -> Result<(), ChunkError> {
    for i in 1..chunks.len() {
        let summary = rolling_summary(
            gateway,
            prompts,
            &chunks[i - 1].summary,
            &chunks[i - 1].text,
            budget_tokens,
        )?;
        chunks[i].summary = summary;
    }
    Ok(())
}

/// Keeps whole words while the token count stays within `budget`.
fn truncate_tokens(text: &str, budget: usize, tokenizer: &dyn Tokenizer) -> String {
    if tokenizer.count(text) <= budget {
        return text.to_string();
    }
    let mut kept = String::new();
    for word in text.split_whitespace() {
        let candidate = if kept.is_empty() {
            word.to_string()
        } else {
            format!("{kept} {word}")
        };
        if tokenizer.count(&candidate) > budget {
            break;
        }
        kept = candidate;
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{FixtureBackend, FixtureStore, WhitespaceTokenizer};
    use std::sync::Arc;

    fn numbered_words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn thousand_words_three_windows() {
        let text = numbered_words(1000);
        let chunks = split(&text, &SplitConfig::new(400, 100).unwrap(), &WhitespaceTokenizer).unwrap();
        let ranges: Vec<_> = chunks.iter().map(|c| (c.first_word, c.end_word)).collect();
        assert_eq!(ranges, [(0, 400), (300, 700), (600, 1000)]);
        assert!(chunks.iter().all(|c| c.token_count == 400));
    }

    #[test]
    fn short_text_is_one_chunk() {
        let text = numbered_words(660);
        let chunks = split(&text, &SplitConfig::new(2000, 200).unwrap(), &WhitespaceTokenizer).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, text);
    }

    #[test]
    fn empty_text_has_no_chunks() {
        let cfg = SplitConfig::default();
        assert!(split("", &cfg, &WhitespaceTokenizer).unwrap().is_empty());
        assert!(split(" \n\t", &cfg, &WhitespaceTokenizer).unwrap().is_empty());
    }

    #[test]
    fn overlap_must_be_below_window() {
        assert!(SplitConfig::new(10, 10).is_err());
        assert!(SplitConfig::new(0, 0).is_err());
    }

    #[test]
    fn offsets_are_characters() {
        let text = "àè ìò ùé";
        let chunks = split(text, &SplitConfig::new(2, 1).unwrap(), &WhitespaceTokenizer).unwrap();
        assert_eq!(chunks.last().unwrap().end, text.chars().count());
    }

    #[derive(Debug)]
    struct CharTokens;

    impl Tokenizer for CharTokens {
        fn count(&self, text: &str) -> usize {
            text.chars().count()
        }

        fn name(&self) -> &'static str {
            "chars"
        }
    }

    #[test]
    fn oversized_word_does_not_stall() {
        let text = "abc def ghijklmnopqrstuvwxyz xy";
        let chunks = split(text, &SplitConfig::new(10, 5).unwrap(), &CharTokens).unwrap();
        let ends: Vec<_> = chunks.iter().map(|c| c.end_word).collect();
        assert!(ends.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*ends.last().unwrap(), 4);
    }

    fn scripted(responses: &[(&str, &str, &str)], budget: usize) -> (Gateway, PromptSet) {
        let prompts = PromptSet::builtin();
        let template = prompts.get(TaskId::Summarization);
        let mut store = FixtureStore::default();
        for (summary, chunk, reply) in responses {
            let msgs = template
                .render(&[("budget", &budget.to_string()), ("summary", summary), ("chunk", chunk)])
                .unwrap();
            store.insert(&msgs, *reply);
        }
        let gw = Gateway::new(
            Box::new(FixtureBackend::new(store)),
            Arc::new(WhitespaceTokenizer),
            4096,
        );
        (gw, prompts)
    }

    #[test]
    fn recurrence_makes_one_call_per_later_chunk() {
        let text = numbered_words(30);
        let mut chunks = split(&text, &SplitConfig::new(12, 2).unwrap(), &WhitespaceTokenizer).unwrap();
        assert_eq!(chunks.len(), 3);
        let (gw, prompts) = scripted(
            &[("", chunks[0].text.trim(), "s1"), ("s1", chunks[1].text.trim(), "s2")],
            512,
        );
        summarize_chunks(&gw, &prompts, &mut chunks, 512).unwrap();
        assert_eq!(gw.calls(), 2);
        assert_eq!(chunks[0].summary, "");
        assert_eq!(chunks[1].summary, "s1");
        assert_eq!(chunks[2].summary, "s2");
        assert_eq!(
            chunks[2].prompt_text(),
            format!("s2{SUMMARY_SEPARATOR}{}", chunks[2].text.trim())
        );
    }

    #[test]
    fn single_chunk_needs_no_summary() {
        let mut chunks = split("just a few words", &SplitConfig::default(), &WhitespaceTokenizer).unwrap();
        let (gw, prompts) = scripted(&[], 512);
        summarize_chunks(&gw, &prompts, &mut chunks, 512).unwrap();
        assert_eq!(gw.calls(), 0);
    }

    #[test]
    fn summaries_are_cut_to_budget() {
        let long = numbered_words(20);
        let (gw, prompts) = scripted(&[("", "a b", &long)], 5);
        let s = rolling_summary(&gw, &prompts, "", "a b", 5).unwrap();
        assert_eq!(s, "w0 w1 w2 w3 w4");
    }
}
