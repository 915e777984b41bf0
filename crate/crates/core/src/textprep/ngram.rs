use serde::{Deserialize, Serialize};

use super::vocab::{build_vocabulary, to_bow, SparseCounts, Vocabulary};
use super::PrepError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NgramConfig {
    pub ngram_range: (usize, usize),
    pub min_df: usize,
    pub max_df: f64,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig {
            ngram_range: (1, 3),
            min_df: 5,
            max_df: 0.95,
        }
    }
}

impl NgramConfig {
    pub fn validate(&self) -> Result<(), PrepError> {
        let (lo, hi) = self.ngram_range;
        if lo == 0 || lo > hi {
            return Err(PrepError::InvalidConfig(format!(
                "ngram_range must satisfy 1 <= lo <= hi, got ({lo}, {hi})"
            )));
        }
        if self.min_df == 0 {
            return Err(PrepError::InvalidConfig("min_df must be at least 1".into()));
        }
        if !(self.max_df > 0.0 && self.max_df <= 1.0) {
            return Err(PrepError::InvalidConfig(format!("max_df must be in (0, 1], got {}", self.max_df)));
        }
        Ok(())
    }
}

/// Contiguous n-grams (joined by a space) ordered by start position, then length.
pub fn ngrams<S: AsRef<str>>(doc: &[S], lo: usize, hi: usize) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..doc.len() {
        for n in lo..=hi {
            if i + n > doc.len() {
                break;
            }
            out.push(
                doc[i..i + n]
                    .iter()
                    .map(|s| s.as_ref())
                    .collect::<Vec<_>>()
                    .join(" "),
            );
        }
    }
    out
}

/// N-gram vocabulary (pruned like unigrams) and per-document sparse counts.
pub fn ngram_counts<S: AsRef<str>>(
    docs: &[Vec<S>],
    cfg: &NgramConfig,
) -> Result<(Vocabulary, Vec<SparseCounts>), PrepError> {
    cfg.validate()?;
    let (lo, hi) = cfg.ngram_range;
    let grams: Vec<Vec<String>> = docs.iter().map(|d| ngrams(d, lo, hi)).collect();
    let vocab = build_vocabulary(&grams, cfg.min_df, cfg.max_df)?;
    let counts = grams.iter().map(|g| to_bow(g, &vocab)).collect();
    Ok((vocab, counts))
}
