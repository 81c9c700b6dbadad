//! Token accounting used for segment sizes and retrieval budgets.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::registry::{Registry, RegistryError};

/// Counts (and truncates to) tokens under some tokenization scheme.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;

    fn count(&self, text: &str) -> usize;

    /// Longest prefix of `text` whose count is at most `budget`.
    fn truncate<'a>(&self, text: &'a str, budget: usize) -> &'a str;
}

/// Splits on Unicode whitespace; one token per word.
#[derive(Debug, Default, Clone, Copy)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn name(&self) -> &str {
        "whitespace"
    }

    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }

    fn truncate<'a>(&self, text: &'a str, budget: usize) -> &'a str {
        if budget == 0 {
            return "";
        }
        let mut seen = 0;
        let mut in_word = false;
        for (i, c) in text.char_indices() {
            if c.is_whitespace() {
                if in_word {
                    in_word = false;
                    if seen == budget {
                        return &text[..i];
                    }
                }
            } else if !in_word {
                in_word = true;
                seen += 1;
            }
        }
        text
    }
}

/// Approximates LLM sub-word tokens as `ceil(chars / 4)`.
#[derive(Debug, Default, Clone, Copy)]
pub struct HeuristicTokenizer;

impl HeuristicTokenizer {
    pub const CHARS_PER_TOKEN: usize = 4;
}

impl Tokenizer for HeuristicTokenizer {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn count(&self, text: &str) -> usize {
        text.chars().count().div_ceil(Self::CHARS_PER_TOKEN)
    }

    fn truncate<'a>(&self, text: &'a str, budget: usize) -> &'a str {
        let max_chars = budget.saturating_mul(Self::CHARS_PER_TOKEN);
        match text.char_indices().nth(max_chars) {
            Some((i, _)) => &text[..i],
            None => text,
        }
    }
}

/// Names a tokenizer registered in [`tokenizers`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenizerSpec(pub String);

impl TokenizerSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn whitespace() -> Self {
        Self::new("whitespace")
    }

    pub fn heuristic() -> Self {
        Self::new("heuristic")
    }

    pub fn resolve(&self) -> Result<Arc<dyn Tokenizer>, RegistryError> {
        tokenizers().build(&self.0, &()).map(Arc::from)
    }
}

impl Default for TokenizerSpec {
    fn default() -> Self {
        Self::heuristic()
    }
}

/// The built-in tokenizer registry. Exact model tokenizers can be added with
/// [`Registry::register`].
pub fn tokenizers() -> Registry<dyn Tokenizer, ()> {
    let mut registry: Registry<dyn Tokenizer, ()> = Registry::new("tokenizer");
    registry.register("whitespace", |_| Ok(Box::new(WhitespaceTokenizer)));
    registry.register("heuristic", |_| Ok(Box::new(HeuristicTokenizer)));
    registry
}

pub fn count_tokens(text: &str, tokenizer: &TokenizerSpec) -> Result<usize, RegistryError> {
    Ok(tokenizer.resolve()?.count(text))
}
