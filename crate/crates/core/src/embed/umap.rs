//! UMAP: exact kNN graph, smooth-kNN calibration, fuzzy union and the
//! negative-sampling layout optimiser.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EmbedError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Manhattan,
    Euclidean,
    Cosine,
}

impl Metric {
    pub fn distance<T: Scalar>(self, a: ArrayView1<T>, b: ArrayView1<T>) -> T {
        match self {
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (*x - *y).abs()).sum(),
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum::<T>().sqrt(),
            Metric::Cosine => {
                let dot: T = a.iter().zip(b).map(|(x, y)| *x * *y).sum();
                let na: T = a.iter().map(|x| *x * *x).sum();
                let nb: T = b.iter().map(|x| *x * *x).sum();
                if na == T::zero() && nb == T::zero() {
                    T::zero()
                } else if na == T::zero() || nb == T::zero() {
                    T::one()
                } else {
                    (T::one() - dot / (na * nb).sqrt()).max(T::zero())
                }
            }
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "manhattan" => Ok(Metric::Manhattan),
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(format!("unknown metric {other:?} (manhattan, euclidean, cosine)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UmapConfig {
    pub n_neighbors: usize,
    pub n_components: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub metric: Metric,
    pub epochs: usize,
    pub negative_sample_rate: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for UmapConfig {
    fn default() -> Self {
        UmapConfig {
            n_neighbors: 8,
            n_components: 8,
            min_dist: 0.1,
            spread: 1.0,
            metric: Metric::Manhattan,
            epochs: 500,
            negative_sample_rate: 5,
            learning_rate: 1.0,
            seed: 0,
        }
    }
}

impl UmapConfig {
    /// Field-level problems independent of the data size.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if self.n_neighbors < 2 {
            v.push(("n_neighbors", "must be at least 2".to_string()));
        }
        if self.n_components < 2 {
            v.push(("n_components", "must be at least 2".to_string()));
        }
        if !(self.min_dist > 0.0) {
            v.push(("min_dist", "must be positive".to_string()));
        }
        if !(self.spread > 0.0) {
            v.push(("spread", "must be positive".to_string()));
        }
        if self.min_dist > self.spread {
            v.push(("min_dist", "must not exceed spread".to_string()));
        }
        if self.epochs == 0 {
            v.push(("epochs", "must be at least 1".to_string()));
        }
        if !(self.learning_rate > 0.0) {
            v.push(("learning_rate", "must be positive".to_string()));
        }
        v
    }

    pub fn validate(&self, n_points: usize) -> Result<(), EmbedError> {
        if let Some((f, m)) = self.violations().into_iter().next() {
            return Err(EmbedError::InvalidConfig(format!("{f}: {m}")));
        }
        if self.n_neighbors >= n_points {
            return Err(EmbedError::InvalidConfig(format!(
                "n_neighbors ({}) must be below the number of points ({n_points})",
                self.n_neighbors
            )));
        }
        Ok(())
    }
}

/// Neighbour lists sorted by distance (ties by index), self excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct Knn<T> {
    pub indices: Vec<Vec<usize>>,
    pub distances: Vec<Vec<T>>,
}

/// Exact brute-force kNN.
pub fn knn<T: Scalar>(points: ArrayView2<T>, k: usize, metric: Metric) -> Knn<T> {
    let n = points.nrows();
    let k = k.min(n.saturating_sub(1));
    let rows: Vec<(Vec<usize>, Vec<T>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(T, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (metric.distance(points.row(i), points.row(j)), j))
                .collect();
            let by = |a: &(T, usize), b: &(T, usize)| crate::scalar::total_cmp(a.0, b.0).then(a.1.cmp(&b.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k, by);
                cand.truncate(k);
            }
            cand.sort_by(by);
            cand.into_iter().map(|(d, j)| (j, d)).unzip()
        })
        .collect();
    let (indices, distances) = rows.into_iter().unzip();
    Knn { indices, distances }
}

pub const SMOOTH_K_TOLERANCE: f64 = 1e-5;
const SMOOTH_K_ITERATIONS: usize = 64;
const MIN_K_DIST_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothKnn {
    pub rho: f64,
    pub sigma: f64,
    /// The target could not be reached (too many neighbours at distance
    /// `rho`) or sigma was clamped.
    pub degenerate: bool,
}

/// Per-point bandwidth: `rho` is the smallest positive distance, `sigma`
/// solves `Σ exp(−max(0, d − rho)/sigma) = log2(k)` by bisection.
pub fn smooth_knn(distances: &[f64], k: usize) -> SmoothKnn {
    let target = (k.max(1) as f64).log2();
    let rho = distances.iter().copied().filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min);
    let rho = if rho.is_finite() { rho } else { 0.0 };
    let psum = |sigma: f64| -> f64 {
        distances
            .iter()
            .map(|&d| {
                let x = d - rho;
                if x > 0.0 { (-x / sigma).exp() } else { 1.0 }
            })
            .sum()
    };
    let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
    for _ in 0..SMOOTH_K_ITERATIONS {
        let s = psum(mid);
        if (s - target).abs() < SMOOTH_K_TOLERANCE {
            break;
        }
        if s > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
        }
    }
    let at_rho = distances.iter().filter(|&&d| d <= rho).count() as f64;
    let mut degenerate = at_rho >= target;
    let mean = if distances.is_empty() {
        0.0
    } else {
        distances.iter().sum::<f64>() / distances.len() as f64
    };
    let floor = if mean > 0.0 { MIN_K_DIST_SCALE * mean } else { MIN_K_DIST_SCALE };
    if mid < floor {
        mid = floor;
        degenerate = true;
    }
    SmoothKnn { rho, sigma: mid, degenerate }
}

/// Directed membership strengths `w_ij = exp(−max(0, d_ij − rho_i)/sigma_i)`.
pub fn directed_weights<T: Scalar>(graph: &Knn<T>, k: usize) -> (Vec<SmoothKnn>, Vec<Vec<(usize, f64)>>) {
    graph
        .distances
        .par_iter()
        .zip(&graph.indices)
        .map(|(dist, idx)| {
            let d: Vec<f64> = dist.iter().map(|x| x.as_f64()).collect();
            let s = smooth_knn(&d, k);
            let w = idx
                .iter()
                .zip(&d)
                .map(|(&j, &dj)| (j, (-(dj - s.rho).max(0.0) / s.sigma).exp()))
                .collect();
            (s, w)
        })
        .unzip()
}

/// Symmetric fuzzy simplicial set.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    pub n: usize,
    /// Row-major adjacency, each row sorted by column; symmetric, no
    /// diagonal, weights in (0, 1].
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl FuzzyGraph {
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match self.rows[i].binary_search_by_key(&j, |e| e.0) {
            Ok(p) => self.rows[i][p].1,
            Err(_) => 0.0,
        }
    }

    pub fn n_edges(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

/// Probabilistic t-conorm `a + b − ab` over both edge directions.
pub fn fuzzy_union(directed: &[Vec<(usize, f64)>], calibration: &[SmoothKnn]) -> FuzzyGraph {
    let n = directed.len();
    let mut w: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, row) in directed.iter().enumerate() {
        for &(j, x) in row {
            if i != j {
                w.insert((i, j), x);
            }
        }
    }
    let mut rows = vec![Vec::new(); n];
    for (&(i, j), &a) in &w {
        let b = w.get(&(j, i)).copied().unwrap_or(0.0);
        let s = a + b - a * b;
        if s > 0.0 {
            rows[i].push((j, s));
            if !w.contains_key(&(j, i)) {
                rows[j].push((i, s));
            }
        }
    }
    for r in rows.iter_mut() {
        r.sort_by_key(|e| e.0);
        r.dedup_by_key(|e| e.0);
    }
    FuzzyGraph {
        n,
        rows,
        rho: calibration.iter().map(|c| c.rho).collect(),
        sigma: calibration.iter().map(|c| c.sigma).collect(),
    }
}

const FIT_POINTS: usize = 300;

fn fit_target(d: f64, min_dist: f64, spread: f64) -> f64 {
    if d <= min_dist {
        1.0
    } else {
        (-(d - min_dist) / spread).exp()
    }
}

fn fit_curve(d: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * d.powf(2.0 * b))
}

/// Fit `1/(1 + a·d^(2b))` to the min_dist/spread target over `[0, 3·spread]`
/// with Levenberg-Marquardt.
pub fn fit_ab(min_dist: f64, spread: f64) -> Result<(f64, f64), EmbedError> {
    if !(min_dist > 0.0 && spread > 0.0) {
        return Err(EmbedError::InvalidConfig("min_dist and spread must be positive".into()));
    }
    let xs: Vec<f64> = (0..FIT_POINTS)
        .map(|i| 3.0 * spread * i as f64 / (FIT_POINTS - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&d| fit_target(d, min_dist, spread)).collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter().zip(&ys).map(|(&d, &y)| (fit_curve(d, a, b) - y).powi(2)).sum()
    };
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut lambda = 1e-3;
    let mut cost = sse(a, b);
    let mut converged = false;
    for _ in 0..500 {
        // Normal equations J^T J δ = −J^T r
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&d, &y) in xs.iter().zip(&ys) {
            let r = fit_curve(d, a, b) - y;
            let (da, db) = if d > 0.0 {
                let p = d.powf(2.0 * b);
                let q = (1.0 + a * p).powi(2);
                (-p / q, -a * p * 2.0 * d.ln() / q)
            } else {
                (0.0, 0.0)
            };
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut accepted = false;
        for _ in 0..50 {
            let (m11, m22) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = m11 * m22 - jab * jab;
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(m22 * ga - jab * gb) / det;
            let step_b = -(m11 * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            if na > 0.0 && nb > 0.0 {
                let c = sse(na, nb);
                if c <= cost {
                    let rel = (cost - c) / cost.max(1e-300);
                    a = na;
                    b = nb;
                    cost = c;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if rel < 1e-12 && step_a.abs() < 1e-10 && step_b.abs() < 1e-10 {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted || converged {
            converged = true;
            break;
        }
    }
    let rmse = (cost / FIT_POINTS as f64).sqrt();
    if !converged || !a.is_finite() || !b.is_finite() || rmse > 0.1 {
        return Err(EmbedError::FitFailed { rmse });
    }
    Ok((a, b))
}

#[inline]
fn clip(x: f64) -> f64 {
    x.clamp(-4.0, 4.0)
}

/// Stochastic layout optimisation. Edges are sampled in proportion to their
/// weight; each positive sample is followed by `negative_sample_rate`
/// repulsive samples. Single-threaded so the result depends only on the
/// seed.
pub fn optimize_layout<T: Scalar>(graph: &FuzzyGraph, cfg: &UmapConfig, a: f64, b: f64) -> Array2<T> {
    let n = graph.n;
    let dim = cfg.n_components;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut emb: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-10.0..=10.0)).collect();

    let max_w = graph.rows.iter().flatten().map(|e| e.1).fold(0.0, f64::max);
    let n_epochs = cfg.epochs as f64;
    let mut heads = Vec::new();
    let mut tails = Vec::new();
    let mut eps = Vec::new();
    for (i, row) in graph.rows.iter().enumerate() {
        for &(j, w) in row {
            // Edges too weak to be sampled even once are dropped.
            if w >= max_w / n_epochs {
                heads.push(i);
                tails.push(j);
                eps.push(max_w / w);
            }
        }
    }
    let neg_rate = cfg.negative_sample_rate.max(1) as f64;
    let eps_neg: Vec<f64> = eps.iter().map(|e| e / neg_rate).collect();
    let mut next = eps.clone();
    let mut next_neg = eps_neg.clone();
    let mut cur = vec![0.0; dim];
    let mut oth = vec![0.0; dim];

    for epoch in 0..cfg.epochs {
        let epoch_f = epoch as f64;
        let alpha = cfg.learning_rate * (1.0 - epoch_f / n_epochs);
        for e in 0..heads.len() {
            if next[e] > epoch_f {
                continue;
            }
            let (i, j) = (heads[e], tails[e]);
            cur.copy_from_slice(&emb[i * dim..(i + 1) * dim]);
            oth.copy_from_slice(&emb[j * dim..(j + 1) * dim]);
            let dist_sq: f64 = cur.iter().zip(&oth).map(|(x, y)| (x - y) * (x - y)).sum();
            let coeff = if dist_sq > 0.0 {
                -2.0 * a * b * dist_sq.powf(b - 1.0) / (a * dist_sq.powf(b) + 1.0)
            } else {
                0.0
            };
            for d in 0..dim {
                let g = clip(coeff * (cur[d] - oth[d])) * alpha;
                cur[d] += g;
                oth[d] -= g;
            }
            emb[j * dim..(j + 1) * dim].copy_from_slice(&oth);
            next[e] += eps[e];

            let n_neg = ((epoch_f - next_neg[e]) / eps_neg[e]).floor().max(0.0) as usize;
            for _ in 0..n_neg {
                let k = rng.random_range(0..n);
                if k == i {
                    continue;
                }
                let other = &emb[k * dim..(k + 1) * dim];
                let dist_sq: f64 = cur.iter().zip(other).map(|(x, y)| (x - y) * (x - y)).sum();
                let coeff = if dist_sq > 0.0 {
                    2.0 * b / ((0.001 + dist_sq) * (a * dist_sq.powf(b) + 1.0))
                } else {
                    0.0
                };
                for d in 0..dim {
                    let g = if coeff > 0.0 { clip(coeff * (cur[d] - other[d])) } else { 4.0 };
                    cur[d] += g * alpha;
                }
            }
            next_neg[e] += n_neg as f64 * eps_neg[e];
            emb[i * dim..(i + 1) * dim].copy_from_slice(&cur);
        }
    }
    Array2::from_shape_vec((n, dim), emb.into_iter().map(T::of).collect()).expect("layout shape")
}

/// Full reduction: kNN graph, calibration, fuzzy union, curve fit, layout.
pub fn umap<T: Scalar>(points: ArrayView2<T>, cfg: &UmapConfig) -> Result<Array2<T>, EmbedError> {
    cfg.validate(points.nrows())?;
    let graph = knn(points, cfg.n_neighbors, cfg.metric);
    let (cal, directed) = directed_weights(&graph, cfg.n_neighbors);
    let fuzzy = fuzzy_union(&directed, &cal);
    let (a, b) = fit_ab(cfg.min_dist, cfg.spread)?;
    Ok(optimize_layout(&fuzzy, cfg, a, b))
}
