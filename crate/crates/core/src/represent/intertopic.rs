//! Intertopic distance map: Jensen-Shannon divergence between topic-word
//! distributions, embedded in two dimensions with classical MDS.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Jensen-Shannon divergence in bits; both inputs are probability vectors.
pub fn jsd<T: Scalar>(p: &[T], q: &[T]) -> f64 {
    let mut kl_p = 0.0;
    let mut kl_q = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let (a, b) = (a.as_f64(), b.as_f64());
        let m = 0.5 * (a + b);
        if a > 0.0 {
            kl_p += a * (a / m).log2();
        }
        if b > 0.0 {
            kl_q += b * (b / m).log2();
        }
    }
    (0.5 * kl_p + 0.5 * kl_q).clamp(0.0, 1.0)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (descending) and eigenvectors as columns.
pub fn symmetric_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[[y, y]].total_cmp(&m[[x, x]]).then(x.cmp(&y)));
    let values = order.iter().map(|&i| m[[i, i]]).collect();
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (col, &i) in order.iter().enumerate() {
        // Sign convention: largest-magnitude component positive.
        let mut pivot = 0;
        for k in 0..n {
            if v[[k, i]].abs() > v[[pivot, i]].abs() + 1e-12 {
                pivot = k;
            }
        }
        let sign = if v[[pivot, i]] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vectors[[k, col]] = sign * v[[k, i]];
        }
    }
    (values, vectors)
}

/// Classical (Torgerson) MDS of a distance matrix into `dims` coordinates.
pub fn classical_mds(d: &Array2<f64>, dims: usize) -> Array2<f64> {
    let n = d.nrows();
    let sq = d.mapv(|x| x * x);
    let row_mean: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let all_mean = row_mean.iter().sum::<f64>() / n.max(1) as f64;
    let b = Array2::from_shape_fn((n, n), |(i, j)| -0.5 * (sq[[i, j]] - row_mean[i] - row_mean[j] + all_mean));
    let (values, vectors) = symmetric_eigen(&b);
    Array2::from_shape_fn((n, dims), |(i, k)| {
        if k < n {
            vectors[[i, k]] * values[k].max(0.0).sqrt()
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntertopicMap {
    pub coords: Vec<[f64; 2]>,
    /// Share of corpus tokens per topic.
    pub prevalence: Vec<f64>,
    /// Fewer than three topics: the layout carries no real 2-d structure.
    pub degenerate: bool,
}

/// `prevalence[k] = Σ_d θ[d][k]·N_d / Σ_d N_d`.
pub fn lda_intertopic_map<T: Scalar>(phi: ArrayView2<T>, theta: ArrayView2<T>, doc_lens: &[usize]) -> IntertopicMap {
    let k = phi.nrows();
    let rows: Vec<Vec<T>> = phi.rows().into_iter().map(|r| r.to_vec()).collect();
    let d = Array2::from_shape_fn((k, k), |(i, j)| if i == j { 0.0 } else { jsd(&rows[i], &rows[j]) });
    let xy = classical_mds(&d, 2);
    let coords = (0..k).map(|i| [xy[[i, 0]], xy[[i, 1]]]).collect();
    let total: f64 = doc_lens.iter().map(|&n| n as f64).sum();
    let mut prevalence = vec![0.0; k];
    for (row, &n) in theta.rows().into_iter().zip(doc_lens) {
        for (p, t) in prevalence.iter_mut().zip(row) {
            *p += t.as_f64() * n as f64;
        }
    }
    if total > 0.0 {
        prevalence.iter_mut().for_each(|p| *p /= total);
    } else if k > 0 {
        prevalence = vec![1.0 / k as f64; k];
    }
    IntertopicMap { coords, prevalence, degenerate: k < 3 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn jsd_extremes() {
        let p = [0.2, 0.3, 0.5];
        assert!(jsd(&p, &p).abs() < 1e-12);
        assert!((jsd(&[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.3, 0.7]) - 1.0).abs() < 1e-12);
        // p=(1,0), q=(.5,.5): m=(.75,.25)
        let hand = 0.5 * (1.0f64 / 0.75).log2() + 0.5 * (0.5 * (0.5f64 / 0.75).log2() + 0.5 * (0.5f64 / 0.25).log2());
        assert!((jsd(&[1.0, 0.0], &[0.5, 0.5]) - hand).abs() < 1e-12);
    }

    #[test]
    fn eigen_reconstructs() {
        let a = array![[4.0, 1.0, 2.0], [1.0, 3.0, 0.5], [2.0, 0.5, 5.0]];
        let (vals, vecs) = symmetric_eigen(&a);
        for k in 0..3 {
            let v = vecs.column(k);
            let av = a.dot(&v);
            for i in 0..3 {
                assert!((av[i] - vals[k] * v[i]).abs() < 1e-9);
            }
        }
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
    }

    #[test]
    fn three_topics_embed_faithfully() {
        let phi = array![[0.7, 0.2, 0.1, 0.0], [0.1, 0.6, 0.2, 0.1], [0.0, 0.1, 0.3, 0.6]];
        let theta = array![[0.5, 0.3, 0.2], [0.1, 0.1, 0.8]];
        let map = lda_intertopic_map(phi.view(), theta.view(), &[10, 30]);
        let rows: Vec<Vec<f64>> = phi.rows().into_iter().map(|r| r.to_vec()).collect();
        for i in 0..3 {
            for j in i + 1..3 {
                let truth = jsd(&rows[i], &rows[j]);
                let (a, b) = (map.coords[i], map.coords[j]);
                let got = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                assert!((got - truth).abs() / truth < 0.1, "{i},{j}: {got} vs {truth}");
            }
        }
        assert!((map.prevalence.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((map.prevalence[2] - (0.2 * 10.0 + 0.8 * 30.0) / 40.0).abs() < 1e-12);
        assert!(!map.degenerate);
    }

    #[test]
    fn two_topics_flagged() {
        let phi = array![[0.5f32, 0.5], [0.9, 0.1]];
        let theta = array![[0.5f32, 0.5]];
        let map = lda_intertopic_map(phi.view(), theta.view(), &[4]);
        assert!(map.degenerate);
        assert!(map.coords.iter().all(|c| c[0].is_finite() && c[1].is_finite()));
    }

    proptest! {
        #[test]
        fn jsd_symmetric_bounded(a in prop::collection::vec(0.0f64..1.0, 5), b in prop::collection::vec(0.0f64..1.0, 5)) {
            let norm = |v: &[f64]| { let s: f64 = v.iter().sum::<f64>() + 1e-9; v.iter().map(|x| (x + 1e-9 / 5.0) / s).collect::<Vec<_>>() };
            let (p, q) = (norm(&a), norm(&b));
            let x = jsd(&p, &q);
            prop_assert!((x - jsd(&q, &p)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&x));
        }
    }
}
