//! Latent Dirichlet allocation trained by collapsed Gibbs sampling.
//!
//! The sampler keeps three count tables (document-topic, word-topic and
//! per-topic totals) plus the topic assignment of every token. Each sweep
//! visits every token once, removes it from the tables, draws a new topic
//! from
//!
//! ```text
//! p(z = k | rest) ∝ (n_dk + α) · (n_kw + β) / (n_k + Vβ)
//! ```
//!
//! and adds it back. Topic-word and document-topic distributions are the
//! smoothed, normalised count tables.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textprep::{BowCorpus, TokenId};
use crate::util::{fnv1a64, splitmix64};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("topic {0} out of range")]
    TopicOutOfRange(usize),
    #[error("requested {n} words but vocabulary has {v}")]
    BadWordCount { n: usize, v: usize },
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaHyperparams {
    pub k: usize,
    /// Symmetric document-topic prior; `None` means `50 / k`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for LdaHyperparams {
    fn default() -> Self {
        LdaHyperparams {
            k: 14,
            alpha: None,
            beta: 0.01,
            iterations: 1000,
            burn_in: 200,
            seed: 0,
        }
    }
}

impl LdaHyperparams {
    pub fn with_k(k: usize) -> Self {
        LdaHyperparams { k, ..Default::default() }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.k.max(1) as f64)
    }

    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if self.k == 0 {
            v.push(("k", "must be at least 1".to_string()));
        }
        if self.k > u16::MAX as usize {
            v.push(("k", format!("must be at most {}", u16::MAX)));
        }
        if !(self.alpha() > 0.0 && self.alpha().is_finite()) {
            v.push(("alpha", format!("must be positive, got {}", self.alpha())));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            v.push(("beta", format!("must be positive, got {}", self.beta)));
        }
        if self.iterations <= self.burn_in {
            v.push((
                "iterations",
                format!("must exceed burn_in ({} <= {})", self.iterations, self.burn_in),
            ));
        }
        v
    }

    pub fn validate(&self) -> Result<(), LdaError> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((f, m)) => Err(LdaError::InvalidHyper(format!("{f}: {m}"))),
        }
    }
}

/// Trained (or in-training) LDA state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub hyper: LdaHyperparams,
    pub vocab_size: usize,
    /// Token ids per document, expanded from the bag of words.
    tokens: Vec<Vec<TokenId>>,
    /// Topic of every token.
    z: Vec<Vec<u16>>,
    /// D×K, row-major.
    n_dk: Vec<u32>,
    /// V×K, row-major (word-major for the sampler's inner loop).
    n_wk: Vec<u32>,
    n_k: Vec<u32>,
    /// Per-word training log-likelihood recorded every `TRACE_EVERY` sweeps
    /// after burn-in, as `(sweep, value)`.
    pub trace: Vec<(usize, f64)>,
}

const TRACE_EVERY: usize = 50;

impl LdaModel {
    pub fn k(&self) -> usize {
        self.hyper.k
    }

    pub fn n_docs(&self) -> usize {
        self.tokens.len()
    }

    pub fn assignments(&self) -> &[Vec<u16>] {
        &self.z
    }

    pub fn doc_len(&self, d: usize) -> usize {
        self.tokens[d].len()
    }

    pub fn n_dk(&self, d: usize, k: usize) -> u32 {
        self.n_dk[d * self.k() + k]
    }

    pub fn n_kw(&self, k: usize, w: usize) -> u32 {
        self.n_wk[w * self.k() + k]
    }

    pub fn n_k(&self, k: usize) -> u32 {
        self.n_k[k]
    }

    /// Σ_w n_kw = n_k, Σ_k n_dk = N_d, and the tables agree with `z`.
    pub fn counts_consistent(&self) -> bool {
        let k = self.k();
        let mut n_dk = vec![0u32; self.n_dk.len()];
        let mut n_wk = vec![0u32; self.n_wk.len()];
        let mut n_k = vec![0u32; k];
        for (d, (toks, zs)) in self.tokens.iter().zip(&self.z).enumerate() {
            if toks.len() != zs.len() {
                return false;
            }
            for (&w, &t) in toks.iter().zip(zs) {
                n_dk[d * k + t as usize] += 1;
                n_wk[w as usize * k + t as usize] += 1;
                n_k[t as usize] += 1;
            }
        }
        n_dk == self.n_dk && n_wk == self.n_wk && n_k == self.n_k
    }

    /// φ[k][w] = (n_kw + β) / (n_k + Vβ).
    pub fn phi<T: Scalar>(&self) -> Array2<T> {
        let (k, v, beta) = (self.k(), self.vocab_size, self.hyper.beta);
        Array2::from_shape_fn((k, v), |(t, w)| {
            T::of((self.n_kw(t, w) as f64 + beta) / (self.n_k[t] as f64 + v as f64 * beta))
        })
    }

    /// θ[d][k] = (n_dk + α) / (N_d + Kα).
    pub fn theta<T: Scalar>(&self) -> Array2<T> {
        let (k, alpha) = (self.k(), self.hyper.alpha());
        Array2::from_shape_fn((self.n_docs(), k), |(d, t)| {
            T::of((self.n_dk(d, t) as f64 + alpha) / (self.doc_len(d) as f64 + k as f64 * alpha))
        })
    }

    /// The `n` most probable words of topic `k`; exact ties go to the lower id.
    pub fn top_words(&self, k: usize, n: usize) -> Result<Vec<TokenId>, LdaError> {
        if k >= self.k() {
            return Err(LdaError::TopicOutOfRange(k));
        }
        if n == 0 || n > self.vocab_size {
            return Err(LdaError::BadWordCount { n, v: self.vocab_size });
        }
        // φ[k][·] is a monotone function of n_kw within a topic.
        let mut ids: Vec<TokenId> = (0..self.vocab_size as TokenId).collect();
        ids.sort_by(|&a, &b| {
            self.n_kw(k, b as usize)
                .cmp(&self.n_kw(k, a as usize))
                .then(a.cmp(&b))
        });
        ids.truncate(n);
        Ok(ids)
    }

    /// Per-word log-likelihood of the training tokens under φ and θ.
    pub fn training_log_likelihood(&self) -> f64 {
        let phi = self.phi::<f64>();
        let theta = self.theta::<f64>();
        let mut total = 0.0;
        let mut n = 0usize;
        for (d, toks) in self.tokens.iter().enumerate() {
            for &w in toks {
                let p: f64 = (0..self.k()).map(|t| theta[(d, t)] * phi[(t, w as usize)]).sum();
                total += p.ln();
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            total / n as f64
        }
    }

    pub fn save(&self, path: &Path, vocab_hash: &str) -> Result<(), LdaError> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            vocab_hash: vocab_hash.to_string(),
            n_kw: (0..self.k())
                .map(|t| (0..self.vocab_size).map(|w| self.n_kw(t, w)).collect())
                .collect(),
            n_dk: (0..self.n_docs())
                .map(|d| (0..self.k()).map(|t| self.n_dk(d, t)).collect())
                .collect(),
            model: self.clone(),
        };
        let json = serde_json::to_string(&file).map_err(|e| LdaError::Format(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Load a model, checking format version and (when given) vocabulary hash.
    pub fn load(path: &Path, expect_vocab_hash: Option<&str>) -> Result<Self, LdaError> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile =
            serde_json::from_str(&text).map_err(|e| LdaError::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(LdaError::Format(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        if let Some(h) = expect_vocab_hash {
            if h != file.vocab_hash {
                return Err(LdaError::Format("vocabulary hash mismatch".into()));
            }
        }
        let m = file.model;
        if !m.counts_consistent() {
            return Err(LdaError::Format("count tables disagree with assignments".into()));
        }
        Ok(m)
    }
}

const MODEL_FORMAT: &str = "topicscope-lda";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    vocab_hash: String,
    /// K×V word counts per topic (redundant with `model`, kept for external readers).
    n_kw: Vec<Vec<u32>>,
    /// D×K topic counts per document.
    n_dk: Vec<Vec<u32>>,
    model: LdaModel,
}

/// Stateful sampler; [`train`] runs it for `hyper.iterations` sweeps.
pub struct GibbsSampler {
    model: LdaModel,
    rng: ChaCha8Rng,
    alpha: f64,
    v_beta: f64,
    probs: Vec<f64>,
    sweeps: usize,
}

impl GibbsSampler {
    /// Random initial assignment of every token.
    pub fn new(bow: &BowCorpus, hyper: &LdaHyperparams) -> Result<Self, LdaError> {
        hyper.validate()?;
        if bow.vocab_size == 0 || bow.total_tokens() == 0 {
            return Err(LdaError::EmptyCorpus);
        }
        let k = hyper.k;
        let v = bow.vocab_size;
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let tokens: Vec<Vec<TokenId>> = bow
            .docs
            .iter()
            .map(|d| {
                d.iter()
                    .flat_map(|&(w, c)| std::iter::repeat(w).take(c as usize))
                    .collect()
            })
            .collect();
        let mut n_dk = vec![0u32; tokens.len() * k];
        let mut n_wk = vec![0u32; v * k];
        let mut n_k = vec![0u32; k];
        let z: Vec<Vec<u16>> = tokens
            .iter()
            .enumerate()
            .map(|(d, toks)| {
                toks.iter()
                    .map(|&w| {
                        let t = rng.random_range(0..k);
                        n_dk[d * k + t] += 1;
                        n_wk[w as usize * k + t] += 1;
                        n_k[t] += 1;
                        t as u16
                    })
                    .collect()
            })
            .collect();
        Ok(GibbsSampler {
            model: LdaModel {
                hyper: hyper.clone(),
                vocab_size: v,
                tokens,
                z,
                n_dk,
                n_wk,
                n_k,
                trace: Vec::new(),
            },
            rng,
            alpha: hyper.alpha(),
            v_beta: v as f64 * hyper.beta,
            probs: vec![0.0; k],
            sweeps: 0,
        })
    }

    pub fn model(&self) -> &LdaModel {
        &self.model
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps
    }

    /// Resample every token once.
    pub fn sweep(&mut self) {
        let m = &mut self.model;
        let k = m.hyper.k;
        let beta = m.hyper.beta;
        for d in 0..m.tokens.len() {
            let dk = &mut m.n_dk[d * k..(d + 1) * k];
            for (i, &w) in m.tokens[d].iter().enumerate() {
                let old = m.z[d][i] as usize;
                let wk = &mut m.n_wk[w as usize * k..(w as usize + 1) * k];
                dk[old] -= 1;
                wk[old] -= 1;
                m.n_k[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    total += (dk[t] as f64 + self.alpha) * (wk[t] as f64 + beta)
                        / (m.n_k[t] as f64 + self.v_beta);
                    self.probs[t] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = self.probs.partition_point(|&c| c <= u).min(k - 1);

                dk[new] += 1;
                wk[new] += 1;
                m.n_k[new] += 1;
                m.z[d][i] = new as u16;
            }
        }
        self.sweeps += 1;
        if self.sweeps > m.hyper.burn_in && self.sweeps % TRACE_EVERY == 0 {
            let ll = m.training_log_likelihood();
            m.trace.push((self.sweeps, ll));
        }
    }

    pub fn into_model(self) -> LdaModel {
        self.model
    }
}

/// Run `hyper.iterations` sweeps of collapsed Gibbs sampling.
pub fn train(bow: &BowCorpus, hyper: &LdaHyperparams) -> Result<LdaModel, LdaError> {
    let mut s = GibbsSampler::new(bow, hyper)?;
    for _ in 0..hyper.iterations {
        s.sweep();
    }
    Ok(s.into_model())
}

pub const FOLD_IN_SWEEPS: usize = 20;

/// Held-out per-word log-likelihood
/// `(1/N) Σ_tokens ln Σ_k θ̂_d[k] φ[k][w]`, where θ̂_d is estimated by
/// Gibbs fold-in with φ frozen. Always ≤ 0; this is the quantity topic
/// toolkits often print as "log perplexity".
pub fn log_perplexity(model: &LdaModel, heldout: &BowCorpus) -> f64 {
    let phi = model.phi::<f64>();
    let k = model.k();
    let alpha = model.hyper.alpha();
    let mut total = 0.0;
    let mut n_tokens = 0usize;
    let mut probs = vec![0.0; k];
    for doc in &heldout.docs {
        let toks: Vec<usize> = doc
            .iter()
            .filter(|&&(w, _)| (w as usize) < model.vocab_size)
            .flat_map(|&(w, c)| std::iter::repeat(w as usize).take(c as usize))
            .collect();
        if toks.is_empty() {
            continue;
        }
        // Seed from the document content so duplicated documents fold in identically.
        let mut h = fnv1a64(toks.iter().flat_map(|w| (*w as u64).to_le_bytes()));
        h = splitmix64(h ^ model.hyper.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let mut n_dk = vec![0u32; k];
        let mut z: Vec<usize> = toks
            .iter()
            .map(|_| {
                let t = rng.random_range(0..k);
                n_dk[t] += 1;
                t
            })
            .collect();
        for _ in 0..FOLD_IN_SWEEPS {
            for (i, &w) in toks.iter().enumerate() {
                n_dk[z[i]] -= 1;
                let mut acc = 0.0;
                for t in 0..k {
                    acc += (n_dk[t] as f64 + alpha) * phi[(t, w)];
                    probs[t] = acc;
                }
                let u = rng.random::<f64>() * acc;
                let new = probs.partition_point(|&c| c <= u).min(k - 1);
                n_dk[new] += 1;
                z[i] = new;
            }
        }
        let norm = toks.len() as f64 + k as f64 * alpha;
        for &w in &toks {
            let p: f64 = (0..k).map(|t| (n_dk[t] as f64 + alpha) / norm * phi[(t, w)]).sum();
            total += p.ln();
        }
        n_tokens += toks.len();
    }
    if n_tokens == 0 {
        0.0
    } else {
        total / n_tokens as f64
    }
}
