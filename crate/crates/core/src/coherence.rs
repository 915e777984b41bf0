//! C_v topic coherence and the topic-count sweep built on it.
//!
//! Word statistics come from boolean sliding windows over the reference
//! documents: a window of `window_size` consecutive tokens slides with stride
//! one, and each window counts a word (or word pair) at most once. Documents
//! no longer than the window form a single window.
//!
//! For a topic with top words `W`, every word `w` gets a context vector
//! `v(w) = [NPMI(w, u) for u in W]`; the topic score is the mean cosine
//! between each `v(w)` and `Σ_u v(u)`, and the model score is the mean over
//! topics.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lda::{log_perplexity, LdaError, LdaHyperparams, LdaModel};
use crate::textprep::{BowCorpus, TokenId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoherenceConfig {
    pub window_size: usize,
    pub top_n: usize,
    pub epsilon: f64,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        CoherenceConfig {
            window_size: 110,
            top_n: 10,
            epsilon: 1e-12,
        }
    }
}

impl CoherenceConfig {
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if self.window_size == 0 {
            v.push(("window_size", "must be at least 1".to_string()));
        }
        if self.top_n < 2 {
            v.push(("top_n", "must be at least 2".to_string()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            v.push(("epsilon", format!("must be in (0, 1), got {}", self.epsilon)));
        }
        v
    }
}

/// Boolean sliding-window occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowCounts<W: Hash + Eq> {
    pub word: HashMap<W, usize>,
    /// Keyed by `(a, b)` with `a < b`.
    pub pair: HashMap<(W, W), usize>,
    pub n_windows: usize,
}

impl<W: Hash + Eq + Ord + Clone> WindowCounts<W> {
    pub fn word_count(&self, w: &W) -> usize {
        self.word.get(w).copied().unwrap_or(0)
    }

    pub fn pair_count(&self, a: &W, b: &W) -> usize {
        match a.cmp(b) {
            std::cmp::Ordering::Equal => self.word_count(a),
            std::cmp::Ordering::Less => self.pair.get(&(a.clone(), b.clone())).copied().unwrap_or(0),
            std::cmp::Ordering::Greater => self.pair.get(&(b.clone(), a.clone())).copied().unwrap_or(0),
        }
    }
}

/// Counts over every distinct word.
pub fn window_counts<W: Hash + Eq + Ord + Clone>(docs: &[Vec<W>], window_size: usize) -> WindowCounts<W> {
    count_windows(docs, window_size, |_| true)
}

/// Counts restricted to `interest`; other tokens still occupy window slots.
pub fn window_counts_for<W: Hash + Eq + Ord + Clone>(
    docs: &[Vec<W>],
    window_size: usize,
    interest: &HashSet<W>,
) -> WindowCounts<W> {
    count_windows(docs, window_size, |w| interest.contains(w))
}

fn count_windows<W: Hash + Eq + Ord + Clone>(
    docs: &[Vec<W>],
    window_size: usize,
    keep: impl Fn(&W) -> bool,
) -> WindowCounts<W> {
    let window_size = window_size.max(1);
    let mut out = WindowCounts {
        word: HashMap::new(),
        pair: HashMap::new(),
        n_windows: 0,
    };
    for doc in docs {
        if doc.is_empty() {
            continue;
        }
        let n_win = if doc.len() <= window_size { 1 } else { doc.len() - window_size + 1 };
        let width = window_size.min(doc.len());
        // Multiset of interesting words in the current window.
        let mut inside: HashMap<&W, usize> = HashMap::new();
        for w in doc[..width].iter().filter(|w| keep(w)) {
            *inside.entry(w).or_insert(0) += 1;
        }
        for start in 0..n_win {
            if start > 0 {
                let gone = &doc[start - 1];
                if keep(gone) {
                    let c = inside.get_mut(gone).expect("leaving word was counted");
                    *c -= 1;
                    if *c == 0 {
                        inside.remove(gone);
                    }
                }
                let came = &doc[start + width - 1];
                if keep(came) {
                    *inside.entry(came).or_insert(0) += 1;
                }
            }
            let mut present: Vec<&W> = inside.keys().copied().collect();
            present.sort();
            for (i, a) in present.iter().enumerate() {
                *out.word.entry((*a).clone()).or_insert(0) += 1;
                for b in &present[i + 1..] {
                    *out.pair.entry(((*a).clone(), (*b).clone())).or_insert(0) += 1;
                }
            }
            out.n_windows += 1;
        }
    }
    out
}

/// Normalised PMI with ε added to the joint probability.
///
/// Unseen words score −1; a pair that always co-occurs (joint equal to both
/// marginals) scores exactly 1.
pub fn npmi<W: Hash + Eq + Ord + Clone>(a: &W, b: &W, counts: &WindowCounts<W>, epsilon: f64) -> f64 {
    let n = counts.n_windows as f64;
    let ca = counts.word_count(a);
    let cb = counts.word_count(b);
    if ca == 0 || cb == 0 || n == 0.0 {
        return -1.0;
    }
    let cab = counts.pair_count(a, b);
    if cab == ca && cab == cb {
        return 1.0;
    }
    let (pa, pb, pab) = (ca as f64 / n, cb as f64 / n, cab as f64 / n);
    let joint = pab + epsilon;
    let value = (joint / (pa * pb)).ln() / -joint.ln();
    value.clamp(-1.0, 1.0)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb).sqrt()).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub per_topic: Vec<f64>,
    /// Topics with fewer than two top words present in the reference corpus.
    pub flagged: Vec<usize>,
    pub mean: f64,
}

/// C_v of one topic given precomputed counts. `None` when fewer than two of
/// its words occur in the reference windows.
pub fn topic_cv<W: Hash + Eq + Ord + Clone>(words: &[W], counts: &WindowCounts<W>, epsilon: f64) -> Option<f64> {
    let alive: Vec<&W> = words.iter().filter(|w| counts.word_count(w) > 0).collect();
    if alive.len() < 2 {
        return None;
    }
    let vectors: Vec<Vec<f64>> = alive
        .iter()
        .map(|a| alive.iter().map(|b| npmi(*a, *b, counts, epsilon)).collect())
        .collect();
    let mut sum = vec![0.0; alive.len()];
    for v in &vectors {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    let total: f64 = vectors.iter().map(|v| cosine(v, &sum)).sum();
    Some(total / vectors.len() as f64)
}

pub fn cv_coherence<W: Hash + Eq + Ord + Clone>(
    topics: &[Vec<W>],
    docs: &[Vec<W>],
    cfg: &CoherenceConfig,
) -> CoherenceReport {
    let interest: HashSet<W> = topics.iter().flatten().cloned().collect();
    let counts = window_counts_for(docs, cfg.window_size, &interest);
    let mut per_topic = Vec::with_capacity(topics.len());
    let mut flagged = Vec::new();
    for (i, t) in topics.iter().enumerate() {
        match topic_cv(t, &counts, cfg.epsilon) {
            Some(s) => per_topic.push(s),
            None => {
                per_topic.push(0.0);
                flagged.push(i);
            }
        }
    }
    let mean = if per_topic.is_empty() {
        0.0
    } else {
        per_topic.iter().sum::<f64>() / per_topic.len() as f64
    };
    CoherenceReport { per_topic, flagged, mean }
}

/// Top-`n` words of every topic of a trained model.
pub fn model_top_words(model: &LdaModel, n: usize) -> Result<Vec<Vec<TokenId>>, LdaError> {
    let n = n.min(model.vocab_size);
    (0..model.k()).map(|k| model.top_words(k, n)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub coherence: Option<f64>,
    pub heldout_loglik: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Argmax of coherence; ties go to the smaller K.
    pub selected_k: Option<usize>,
}

impl SweepResult {
    pub fn row(&self, k: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    /// CSV with columns `k,coherence,heldout_loglik` (failed rows leave the
    /// metrics empty).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,coherence,heldout_loglik\n");
        let fmt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
        for r in &self.rows {
            s.push_str(&format!("{},{},{}\n", r.k, fmt(r.coherence), fmt(r.heldout_loglik)));
        }
        s
    }
}

/// Data for a sweep: training counts, optional held-out counts and the
/// reference token sequences for coherence (tokens outside the vocabulary
/// may be any id that is never a top word, e.g. `TokenId::MAX`).
pub struct SweepData<'a> {
    pub train: &'a BowCorpus,
    pub heldout: Option<&'a BowCorpus>,
    pub reference: &'a [Vec<TokenId>],
}

/// Train one model per K with seed `base.seed + K`, score each, pick the
/// coherence peak. Per-K models are independent and trained in parallel;
/// rows come back ordered by K.
pub fn sweep<F>(
    data: &SweepData<'_>,
    k_range: std::ops::RangeInclusive<usize>,
    base: &LdaHyperparams,
    cfg: &CoherenceConfig,
    trainer: F,
) -> SweepResult
where
    F: Fn(&BowCorpus, &LdaHyperparams) -> Result<LdaModel, LdaError> + Sync,
{
    let ks: Vec<usize> = k_range.collect();
    let rows: Vec<SweepRow> = ks
        .par_iter()
        .map(|&k| {
            let hyper = LdaHyperparams {
                k,
                seed: base.seed.wrapping_add(k as u64),
                ..base.clone()
            };
            let scored = trainer(data.train, &hyper).and_then(|m| {
                let top = model_top_words(&m, cfg.top_n)?;
                let c = cv_coherence(&top, data.reference, cfg).mean;
                let ll = data.heldout.map(|h| log_perplexity(&m, h));
                Ok((c, ll))
            });
            match scored {
                Ok((c, ll)) => SweepRow { k, coherence: Some(c), heldout_loglik: ll, error: None },
                Err(e) => {
                    log::warn!("sweep: K={k} failed: {e}");
                    SweepRow { k, coherence: None, heldout_loglik: None, error: Some(e.to_string()) }
                }
            }
        })
        .collect();
    let selected_k = select_k(&rows);
    SweepResult { rows, selected_k }
}

pub fn select_k(rows: &[SweepRow]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    let mut ordered: Vec<&SweepRow> = rows.iter().collect();
    ordered.sort_by_key(|r| r.k);
    for r in ordered {
        if let Some(c) = r.coherence {
            if best.map_or(true, |(_, b)| c > b) {
                best = Some((r.k, c));
            }
        }
    }
    best.map(|(k, _)| k)
}
