use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Counts tokens the way the target backend would.
pub trait Tokenizer: Send + Sync + fmt::Debug {
    fn count(&self, text: &str) -> usize;

    /// Stable name recorded in fixtures and cache keys.
    fn name(&self) -> &'static str;
}

/// One token per whitespace-separated word.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }

    fn name(&self) -> &'static str {
        "whitespace"
    }
}

/// Over-estimating approximation of a byte-pair tokenizer for English text:
/// the larger of `ceil(4/3 · words)` and `ceil(chars / 4)`, plus one token
/// per punctuation character. Intended for budgeting against remote models
/// when the exact vocabulary is not available.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConservativeTokenizer;

impl Tokenizer for ConservativeTokenizer {
    fn count(&self, text: &str) -> usize {
        let words = text.split_whitespace().count();
        if words == 0 {
            return 0;
        }
        let chars = text.chars().filter(|c| !c.is_whitespace()).count();
        let punct = text.chars().filter(|c| c.is_ascii_punctuation()).count();
        (words * 4).div_ceil(3).max(chars.div_ceil(4)) + punct
    }

    fn name(&self) -> &'static str {
        "conservative"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    #[default]
    Whitespace,
    Conservative,
}

impl TokenizerKind {
    pub fn build(self) -> Arc<dyn Tokenizer> {
        match self {
            TokenizerKind::Whitespace => Arc::new(WhitespaceTokenizer),
            TokenizerKind::Conservative => Arc::new(ConservativeTokenizer),
        }
    }
}
