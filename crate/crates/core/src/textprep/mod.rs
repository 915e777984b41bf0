//! Tokenization, stop-word removal, document-frequency pruning and sparse
//! count representations shared by both modeling tracks.

mod io;
mod ngram;
mod vocab;

pub use io::{read_bow, read_vocabulary, write_bow, write_vocabulary};
pub use ngram::{ngram_counts, NgramConfig};
pub use vocab::{build_vocabulary, to_bow, BowCorpus, SparseCounts, TokenId, Vocabulary};

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("malformed {what} at line {line}: {message}")]
    Format {
        what: &'static str,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub min_token_len: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            min_token_len: 3,
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<(), PrepError> {
        if self.min_token_len == 0 {
            return Err(PrepError::InvalidConfig("min_token_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// Split on every non-alphabetic character and keep runs of at least
/// `min_token_len` characters, in text order.
pub fn tokenize(text: &str, cfg: &TokenizerConfig) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|t| t.chars().count() >= cfg.min_token_len)
        .map(|t| if cfg.lowercase { t.to_lowercase() } else { t.to_string() })
        .collect()
}

const STANDARD_STOPWORDS: &str = include_str!("../../assets/stopwords_en.txt");
const DOMAIN_STOPWORDS: &str = include_str!("../../assets/stopwords_domain.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopList {
    pub standard: HashSet<String>,
    pub domain: HashSet<String>,
}

impl Default for StopList {
    fn default() -> Self {
        StopList {
            standard: parse_words(STANDARD_STOPWORDS),
            domain: parse_words(DOMAIN_STOPWORDS),
        }
    }
}

fn parse_words(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

impl StopList {
    /// One word per line; blank lines and `#` comments are ignored.
    pub fn read_words(path: &Path) -> Result<HashSet<String>, PrepError> {
        Ok(parse_words(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.standard.contains(token) || self.domain.contains(token)
    }
}

pub fn remove_stopwords(tokens: Vec<String>, stops: &StopList) -> Vec<String> {
    tokens.into_iter().filter(|t| !stops.contains(t)).collect()
}

/// Tokenize then drop stop words.
pub fn prepare_text(text: &str, cfg: &TokenizerConfig, stops: &StopList) -> Vec<String> {
    remove_stopwords(tokenize(text, cfg), stops)
}
