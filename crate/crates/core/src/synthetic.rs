//! Seeded generators for planted-structure corpora and point clouds, used by
//! tests, the acceptance suite and the bundled sample data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::textprep::{BowCorpus, SparseCounts, TokenId};

/// Parameters of the LDA generative process.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub n_topics: usize,
    pub vocab_size: usize,
    pub n_docs: usize,
    pub doc_len: usize,
    /// Dirichlet concentration of each document's topic mixture.
    pub doc_alpha: f64,
    /// Dirichlet concentration of each topic's word distribution.
    pub topic_beta: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            n_topics: 5,
            vocab_size: 500,
            n_docs: 200,
            doc_len: 100,
            doc_alpha: 0.1,
            topic_beta: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    /// Token sequences in generation order.
    pub docs: Vec<Vec<TokenId>>,
    pub bow: BowCorpus,
    /// Topic-word distributions, `n_topics × vocab_size`.
    pub phi: Vec<Vec<f64>>,
    /// Document-topic mixtures, `n_docs × n_topics`.
    pub theta: Vec<Vec<f64>>,
}

pub fn dirichlet(rng: &mut impl Rng, concentration: f64, dim: usize) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    loop {
        let draws: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|x| x / total).collect();
        }
    }
}

pub fn categorical(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Draw a corpus from the LDA generative model.
pub fn planted_corpus(spec: &PlantedSpec) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phi: Vec<Vec<f64>> = (0..spec.n_topics)
        .map(|_| dirichlet(&mut rng, spec.topic_beta, spec.vocab_size))
        .collect();
    let mut docs = Vec::with_capacity(spec.n_docs);
    let mut theta = Vec::with_capacity(spec.n_docs);
    for _ in 0..spec.n_docs {
        let mix = dirichlet(&mut rng, spec.doc_alpha, spec.n_topics);
        let doc: Vec<TokenId> = (0..spec.doc_len)
            .map(|_| {
                let t = categorical(&mut rng, &mix);
                categorical(&mut rng, &phi[t]) as TokenId
            })
            .collect();
        docs.push(doc);
        theta.push(mix);
    }
    let bow = BowCorpus {
        docs: docs.iter().map(|d| sparse_counts(d)).collect(),
        vocab_size: spec.vocab_size,
    };
    PlantedCorpus { docs, bow, phi, theta }
}

pub fn sparse_counts(doc: &[TokenId]) -> SparseCounts {
    let mut counts = std::collections::BTreeMap::new();
    for &w in doc {
        *counts.entry(w).or_insert(0u32) += 1;
    }
    counts.into_iter().collect()
}

/// Isotropic Gaussian blobs: `sizes[i]` points around `centers[i]`.
/// Returns points and their blob index.
pub fn gaussian_blobs(
    centers: &[Vec<f64>],
    sizes: &[usize],
    std_dev: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std_dev).expect("finite std dev");
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (b, (c, &n)) in centers.iter().zip(sizes).enumerate() {
        for _ in 0..n {
            points.push(c.iter().map(|&x| x + normal.sample(&mut rng)).collect());
            labels.push(b);
        }
    }
    (points, labels)
}

/// Uniform points in `[lo, hi]^dim`.
pub fn uniform_points(n: usize, dim: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(lo..=hi)).collect())
        .collect()
}
