//! Topic representations for the clustering track: class-based TF-IDF,
//! topic similarity, merging, hierarchy and summaries. The LDA intertopic
//! map lives in [`intertopic`].

mod export;
mod hierarchy;
pub mod intertopic;

pub use export::{dendrogram_svg, heatmap_csv, heatmap_svg, intertopic_csv};
pub use hierarchy::{dendrogram, Dendrogram, DendrogramNode, Merge};
pub use intertopic::{classical_mds, jsd, lda_intertopic_map, IntertopicMap};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::cluster::NOISE;
use crate::embed::Metric;
use crate::scalar::Scalar;
use crate::textprep::{SparseCounts, Vocabulary};

/// Class-by-term weights `tf(t,c) · ln(1 + A / f(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct CtfidfMatrix<T> {
    pub weights: Array2<T>,
    /// Total term count per class.
    pub totals: Vec<T>,
    /// Mean total count per class.
    pub average: T,
    /// Classes without any terms.
    pub empty: Vec<usize>,
}

/// Sum document term counts per cluster; outliers are skipped.
pub fn class_term_counts<T: Scalar>(docs: &[SparseCounts], labels: &[i32], n_classes: usize, n_terms: usize) -> Array2<T> {
    let mut m = Array2::<T>::zeros((n_classes, n_terms));
    for (doc, &l) in docs.iter().zip(labels) {
        if l == NOISE || l < 0 {
            continue;
        }
        for &(t, c) in doc {
            m[[l as usize, t as usize]] += T::of(c as f64);
        }
    }
    m
}

pub fn ctfidf<T: Scalar>(counts: ArrayView2<T>) -> CtfidfMatrix<T> {
    let (c, v) = counts.dim();
    let totals: Vec<T> = counts.rows().into_iter().map(|r| r.sum()).collect();
    let average = if c == 0 {
        T::zero()
    } else {
        totals.iter().copied().sum::<T>() / T::of_usize(c)
    };
    let f: Vec<T> = (0..v).map(|t| counts.column(t).sum()).collect();
    let weights = Array2::from_shape_fn((c, v), |(k, t)| {
        let tf = counts[[k, t]];
        if tf == T::zero() || f[t] == T::zero() {
            T::zero()
        } else {
            tf * (T::one() + average / f[t]).ln()
        }
    });
    let empty = (0..c).filter(|&k| totals[k] == T::zero()).collect();
    CtfidfMatrix { weights, totals, average, empty }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix<T> {
    pub values: Array2<T>,
    /// Rows whose vector was all zero.
    pub zero_rows: Vec<usize>,
}

/// Pairwise cosine similarity of row vectors. A zero row has similarity 0 to
/// everything except itself.
pub fn topic_similarity<T: Scalar>(vectors: ArrayView2<T>) -> SimilarityMatrix<T> {
    let c = vectors.nrows();
    let norms: Vec<T> = vectors.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let zero_rows: Vec<usize> = (0..c).filter(|&i| norms[i] == T::zero()).collect();
    let values = Array2::from_shape_fn((c, c), |(i, j)| {
        if i == j {
            T::one()
        } else if norms[i] == T::zero() || norms[j] == T::zero() {
            T::zero()
        } else {
            let s = vectors.row(i).dot(&vectors.row(j)) / (norms[i] * norms[j]);
            s.max(-T::one()).min(T::one())
        }
    });
    SimilarityMatrix { values, zero_rows }
}

/// Mean embedding per cluster (the alternative heatmap basis).
pub fn centroid_vectors<T: Scalar>(points: ArrayView2<T>, labels: &[i32], n_classes: usize) -> Array2<T> {
    let mut m = Array2::<T>::zeros((n_classes, points.ncols()));
    let mut n = vec![0usize; n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= 0 {
            let mut row = m.row_mut(l as usize);
            row += &points.row(i);
            n[l as usize] += 1;
        }
    }
    for (k, &count) in n.iter().enumerate() {
        if count > 0 {
            let mut row = m.row_mut(k);
            row /= T::of_usize(count);
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub kept: usize,
    pub absorbed: usize,
    pub similarity: f64,
}

/// Repeatedly merge the most similar topic pair at or above `threshold`,
/// recomputing c-TF-IDF after each merge. The merged topic keeps the lower
/// id and higher ids shift down by one.
pub fn merge_similar(
    labels: &[i32],
    docs: &[SparseCounts],
    n_terms: usize,
    threshold: f64,
) -> (Vec<i32>, Vec<MergeStep>) {
    let mut labels = labels.to_vec();
    let mut log = Vec::new();
    loop {
        let c = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
        if c < 2 {
            break;
        }
        let counts = class_term_counts::<f64>(docs, &labels, c, n_terms);
        let sim = topic_similarity(ctfidf(counts.view()).weights.view()).values;
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..c {
            for j in i + 1..c {
                let s = sim[[i, j]];
                if s >= threshold && best.map_or(true, |(_, _, b)| s > b) {
                    best = Some((i, j, s));
                }
            }
        }
        let Some((keep, gone, s)) = best else { break };
        for l in labels.iter_mut() {
            let cur = *l;
            if cur == gone as i32 {
                *l = keep as i32;
            } else if cur > gone as i32 {
                *l = cur - 1;
            }
        }
        log.push(MergeStep { kept: keep, absorbed: gone, similarity: s });
    }
    (labels, log)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub topic: usize,
    pub size: usize,
    /// Sorted by descending score, ties by term.
    pub top_terms: Vec<(String, f64)>,
    /// Members closest to the cluster centroid.
    pub representative_docs: Vec<usize>,
}

pub fn top_terms<T: Scalar>(weights: ArrayView2<T>, topic: usize, vocab: &Vocabulary, n: usize) -> Vec<(String, f64)> {
    let row = weights.row(topic);
    let mut ids: Vec<usize> = (0..row.len()).filter(|&t| row[t] > T::zero()).collect();
    ids.sort_by(|&a, &b| {
        crate::scalar::total_cmp(row[b], row[a]).then_with(|| vocab.tokens()[a].cmp(&vocab.tokens()[b]))
    });
    ids.truncate(n);
    ids.into_iter().map(|t| (vocab.tokens()[t].clone(), row[t].as_f64())).collect()
}

pub fn summarize<T: Scalar>(
    labels: &[i32],
    weights: ArrayView2<T>,
    vocab: &Vocabulary,
    points: ArrayView2<T>,
    n_terms: usize,
    n_docs: usize,
) -> Vec<TopicSummary> {
    let c = weights.nrows();
    let centroids = centroid_vectors(points, labels, c);
    (0..c)
        .map(|k| {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k as i32).collect();
            let mut by_dist: Vec<(f64, usize)> = members
                .iter()
                .map(|&i| (Metric::Euclidean.distance(points.row(i), centroids.row(k)).as_f64(), i))
                .collect();
            by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            TopicSummary {
                topic: k,
                size: members.len(),
                top_terms: top_terms(weights, k, vocab, n_terms),
                representative_docs: by_dist.into_iter().take(n_docs).map(|x| x.1).collect(),
            }
        })
        .collect()
}
