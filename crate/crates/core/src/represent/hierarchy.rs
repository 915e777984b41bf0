use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::topic_similarity;
use crate::scalar::Scalar;

/// One agglomeration step; node ids below the topic count are topics,
/// merge `i` creates node `n_topics + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_topics: usize,
    pub merges: Vec<Merge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramNode {
    pub id: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub children: Vec<DendrogramNode>,
    pub height: f64,
}

impl Dendrogram {
    pub fn tree(&self) -> Option<DendrogramNode> {
        let n = self.n_topics;
        if n == 0 {
            return None;
        }
        let root = if self.merges.is_empty() { 0 } else { n + self.merges.len() - 1 };
        Some(self.node(root))
    }

    fn node(&self, id: usize) -> DendrogramNode {
        if id < self.n_topics {
            return DendrogramNode { id, children: Vec::new(), height: 0.0 };
        }
        let m = &self.merges[id - self.n_topics];
        DendrogramNode {
            id,
            children: vec![self.node(m.left), self.node(m.right)],
            height: m.height,
        }
    }

    /// Leaf order of a depth-first walk (left before right).
    pub fn leaf_order(&self) -> Vec<usize> {
        fn walk(n: &DendrogramNode, out: &mut Vec<usize>) {
            if n.children.is_empty() {
                out.push(n.id);
            }
            for c in &n.children {
                walk(c, out);
            }
        }
        let mut out = Vec::new();
        if let Some(t) = self.tree() {
            walk(&t, &mut out);
        }
        out
    }
}

/// Average-linkage agglomeration over cosine distance `1 − similarity`.
/// Ties go to the pair with the lowest node ids.
pub fn dendrogram<T: Scalar>(vectors: ArrayView2<T>) -> Dendrogram {
    let n = vectors.nrows();
    let sim = topic_similarity(vectors).values;
    // Distances between active clusters, indexed by node id.
    let total = 2 * n.max(1) - 1;
    let mut dist = vec![vec![0.0f64; total]; total];
    for i in 0..n {
        for j in 0..n {
            dist[i][j] = (1.0 - sim[[i, j]].as_f64()).max(0.0);
        }
    }
    let mut size = vec![1usize; total];
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::new();
    while active.len() > 1 {
        let mut best = (0, 0, f64::INFINITY);
        for (x, &a) in active.iter().enumerate() {
            for &b in &active[x + 1..] {
                if dist[a][b] < best.2 {
                    best = (a, b, dist[a][b]);
                }
            }
        }
        let (a, b, h) = best;
        let id = n + merges.len();
        size[id] = size[a] + size[b];
        for &k in &active {
            if k != a && k != b {
                let d = (size[a] as f64 * dist[k][a] + size[b] as f64 * dist[k][b]) / size[id] as f64;
                dist[k][id] = d;
                dist[id][k] = d;
            }
        }
        active.retain(|&k| k != a && k != b);
        active.push(id);
        merges.push(Merge { left: a, right: b, height: h, size: size[id] });
    }
    Dendrogram { n_topics: n, merges }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct definition: cluster distance is the mean over all leaf pairs.
    fn oracle(vectors: &Array2<f64>) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
        let n = vectors.nrows();
        let cos = |i: usize, j: usize| {
            let (a, b) = (vectors.row(i), vectors.row(j));
            1.0 - a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
        };
        let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let mut out = Vec::new();
        while clusters.len() > 1 {
            let mut best = (0, 0, f64::INFINITY);
            for x in 0..clusters.len() {
                for y in x + 1..clusters.len() {
                    let mut s = 0.0;
                    for &i in &clusters[x] {
                        for &j in &clusters[y] {
                            s += cos(i, j);
                        }
                    }
                    let d = s / (clusters[x].len() * clusters[y].len()) as f64;
                    if d < best.2 - 1e-12 {
                        best = (x, y, d);
                    }
                }
            }
            let (x, y, d) = best;
            let mut merged = clusters[x].clone();
            merged.extend(&clusters[y]);
            merged.sort();
            out.push((clusters[x].clone(), clusters[y].clone(), d));
            clusters.remove(y);
            clusters.remove(x);
            clusters.push(merged);
        }
        out
    }

    fn members(d: &Dendrogram, id: usize) -> Vec<usize> {
        if id < d.n_topics {
            return vec![id];
        }
        let m = &d.merges[id - d.n_topics];
        let mut v = members(d, m.left);
        v.extend(members(d, m.right));
        v.sort();
        v
    }

    #[test]
    fn close_pair_merges_first() {
        let v = array![[1.0, 0.0, 0.0], [0.99, 0.05, 0.0], [0.0, 0.0, 1.0]];
        let d = dendrogram(v.view());
        assert_eq!((d.merges[0].left, d.merges[0].right), (0, 1));
        assert_eq!(d.merges[1].size, 3);
        let json = serde_json::to_value(d.tree().unwrap()).unwrap();
        assert_eq!(json["id"], 4);
        assert_eq!(json["children"][1]["id"], 3);
        assert_eq!(json["children"][1]["children"][0]["id"], 0);
    }

    #[test]
    fn matches_oracle_and_heights_increase() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..30 {
            let v = Array2::from_shape_fn((5, 4), |_| rng.random_range(0.0..1.0));
            let d = dendrogram(v.view());
            let o = oracle(&v);
            assert_eq!(d.merges.len(), 4);
            for (m, (a, b, h)) in d.merges.iter().zip(&o) {
                let mut got = [members(&d, m.left), members(&d, m.right)];
                got.sort();
                let mut want = [a.clone(), b.clone()];
                want.iter_mut().for_each(|w| w.sort());
                want.sort();
                assert_eq!(got, want);
                assert!((m.height - h).abs() < 1e-12);
            }
            assert!(d.merges.windows(2).all(|w| w[1].height >= w[0].height - 1e-12));
        }
    }

    #[test]
    fn single_topic() {
        let d = dendrogram(array![[1.0, 2.0]].view());
        assert!(d.merges.is_empty());
        assert_eq!(d.leaf_order(), vec![0]);
    }
}
