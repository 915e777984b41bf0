//! HDBSCAN over reduced embeddings, outlier accounting and the
//! centroid-based outlier reassignment.
//!
//! The single-linkage hierarchy is built from the mutual-reachability MST
//! with all edges of equal weight merged at once, so the condensed tree (and
//! therefore the labels) does not depend on which of several equal-weight
//! MSTs Prim happened to find.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::embed::{knn, Metric};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum ClusterError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("labels line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("labels cover {labels} points but {points} were given")]
    LengthMismatch { labels: usize, points: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HdbscanConfig {
    pub min_cluster_size: usize,
    /// Defaults to `min_cluster_size`.
    pub min_samples: Option<usize>,
    pub metric: Metric,
}

impl Default for HdbscanConfig {
    fn default() -> Self {
        HdbscanConfig {
            min_cluster_size: 15,
            min_samples: None,
            metric: Metric::Euclidean,
        }
    }
}

impl HdbscanConfig {
    pub fn min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }

    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if self.min_cluster_size < 2 {
            v.push(("min_cluster_size", "must be at least 2".to_string()));
        }
        if self.min_samples == Some(0) {
            v.push(("min_samples", "must be at least 1".to_string()));
        }
        v
    }
}

pub const NOISE: i32 = -1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabels {
    pub labels: Vec<i32>,
    pub n_clusters: usize,
    /// Points that were outliers before `reassign_outliers` moved them.
    pub reassigned: Vec<bool>,
}

impl ClusterLabels {
    pub fn from_labels(labels: Vec<i32>) -> Self {
        let n_clusters = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
        let reassigned = vec![false; labels.len()];
        ClusterLabels { labels, n_clusters, reassigned }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.n_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                m[l as usize].push(i);
            }
        }
        m
    }

    pub fn outlier_ratio(&self) -> f64 {
        outlier_ratio(&self.labels)
    }

    /// CSV with header `docid,label`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("docid,label\n");
        for (i, l) in self.labels.iter().enumerate() {
            s.push_str(&format!("{i},{l}\n"));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ClusterError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, ClusterError> {
        let text = std::fs::read_to_string(path)?;
        let mut labels = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let bad = |message: String| ClusterError::Format { line: i + 1, message };
            let (id, l) = line.split_once(',').ok_or_else(|| bad("expected `docid,label`".into()))?;
            if id.parse::<usize>().ok() != Some(labels.len()) {
                return Err(bad(format!("docid {id:?} out of sequence")));
            }
            let l: i32 = l.trim().parse().map_err(|_| bad(format!("bad label {l:?}")))?;
            if l < NOISE {
                return Err(bad(format!("bad label {l}")));
            }
            labels.push(l);
        }
        Ok(ClusterLabels::from_labels(labels))
    }
}

pub fn outlier_ratio(labels: &[i32]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    labels.iter().filter(|&&l| l == NOISE).count() as f64 / labels.len() as f64
}

/// Distance to the `min_samples`-th nearest other point.
pub fn core_distances<T: Scalar>(points: ArrayView2<T>, min_samples: usize, metric: Metric) -> Vec<f64> {
    if min_samples == 0 {
        return vec![0.0; points.nrows()];
    }
    let g = knn(points, min_samples, metric);
    g.distances
        .iter()
        .map(|d| d.last().map_or(0.0, |x| x.as_f64()))
        .collect()
}

/// Dense mutual-reachability matrix; the diagonal holds the core distance.
pub fn mutual_reachability<T: Scalar>(points: ArrayView2<T>, core: &[f64], metric: Metric) -> Array2<f64> {
    let n = points.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            core[i]
        } else {
            let d = metric.distance(points.row(i), points.row(j)).as_f64();
            d.max(core[i]).max(core[j])
        }
    })
}

/// Prim's algorithm on the implicit complete mutual-reachability graph.
/// Returns `(from, to, weight)` edges in insertion order; ties pick the
/// lowest index.
pub fn mst<T: Scalar>(points: ArrayView2<T>, core: &[f64], metric: Metric) -> Vec<(usize, usize, f64)> {
    let n = points.nrows();
    mst_with(n, |i, j| {
        metric.distance(points.row(i), points.row(j)).as_f64().max(core[i]).max(core[j])
    })
}

pub fn mst_with(n: usize, weight: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize, f64)> {
    if n == 0 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut cur = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_w = f64::INFINITY;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let w = weight(cur, j);
            if w < best[j] {
                best[j] = w;
                from[j] = cur;
            }
            if next == usize::MAX || best[j] < next_w {
                next = j;
                next_w = best[j];
            }
        }
        in_tree[next] = true;
        edges.push((from[next], next, next_w));
        cur = next;
    }
    edges
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Node of the single-linkage hierarchy. Leaves `0..n` are points; an
/// internal node is created at `level` by merging all its children at once.
#[derive(Debug, Clone)]
struct LevelNode {
    children: Vec<usize>,
    level: f64,
    size: usize,
}

fn level_tree(n: usize, mut edges: Vec<(usize, usize, f64)>) -> Vec<LevelNode> {
    let mut nodes: Vec<LevelNode> = (0..n).map(|_| LevelNode { children: Vec::new(), level: 0.0, size: 1 }).collect();
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.sort_by(|&a, &b| edges[a].2.total_cmp(&edges[b].2).then(a.cmp(&b)));
    edges = order.into_iter().map(|i| edges[i]).collect();
    let mut uf = UnionFind::new(n);
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut start = 0;
    while start < edges.len() {
        let w = edges[start].2;
        let mut end = start;
        while end < edges.len() && edges[end].2 == w {
            end += 1;
        }
        let mut touched: Vec<(usize, usize)> = Vec::new();
        for &(a, b, _) in &edges[start..end] {
            for r in [uf.find(a), uf.find(b)] {
                touched.push((r, node_of[r]));
            }
        }
        for &(a, b, _) in &edges[start..end] {
            uf.union(a, b);
        }
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for (r, node) in touched {
            groups.entry(uf.find(r)).or_default().push(node);
        }
        let mut roots: Vec<usize> = groups.keys().copied().collect();
        roots.sort_unstable();
        for root in roots {
            let mut children = groups.remove(&root).unwrap();
            children.sort_unstable();
            children.dedup();
            let size = children.iter().map(|&c| nodes[c].size).sum();
            nodes.push(LevelNode { children, level: w, size });
            node_of[root] = nodes.len() - 1;
        }
        start = end;
    }
    nodes
}

fn leaves(nodes: &[LevelNode], n: usize, node: usize, out: &mut Vec<usize>) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if x < n {
            out.push(x);
        } else {
            stack.extend(nodes[x].children.iter().copied());
        }
    }
}

fn lambda(level: f64) -> f64 {
    if level > 0.0 {
        1.0 / level
    } else {
        f64::MAX
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub lambda_birth: f64,
    pub lambda_death: f64,
    pub size: usize,
    pub stability: f64,
    pub selected: bool,
}

/// A point leaving `cluster` at density `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointExit {
    pub point: usize,
    pub cluster: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CondensedTree {
    pub nodes: Vec<CondensedNode>,
    pub exits: Vec<PointExit>,
}

impl CondensedTree {
    pub fn children(&self, id: usize) -> Vec<usize> {
        self.nodes.iter().filter(|c| c.parent == Some(id)).map(|c| c.id).collect()
    }

    pub fn write_json(&self, path: &Path) -> Result<(), ClusterError> {
        let s = serde_json::to_string_pretty(self).expect("tree serialises");
        std::fs::write(path, s)?;
        Ok(())
    }
}

fn condense(nodes: &[LevelNode], n: usize, mcs: usize) -> (CondensedTree, Vec<Vec<usize>>) {
    let mut tree = CondensedTree::default();
    let mut birth_points: Vec<Vec<usize>> = Vec::new();
    let root = nodes.len() - 1;
    let mut all = Vec::new();
    leaves(nodes, n, root, &mut all);
    tree.nodes.push(CondensedNode {
        id: 0,
        parent: None,
        lambda_birth: 0.0,
        lambda_death: 0.0,
        size: nodes[root].size,
        stability: 0.0,
        selected: false,
    });
    birth_points.push(all);
    // (cluster id, level-tree node currently representing it)
    let mut stack = vec![(0usize, root)];
    while let Some((cid, mut node)) = stack.pop() {
        let birth = tree.nodes[cid].lambda_birth;
        let mut stability = 0.0;
        loop {
            if node < n {
                // A lone point: it leaves at the last split.
                tree.exits.push(PointExit { point: node, cluster: cid, lambda: tree.nodes[cid].lambda_death });
                break;
            }
            let lam = lambda(nodes[node].level);
            let children = &nodes[node].children;
            let big: Vec<usize> = children.iter().copied().filter(|&c| nodes[c].size >= mcs).collect();
            let fall = |c: usize, tree: &mut CondensedTree, stability: &mut f64| {
                let mut pts = Vec::new();
                leaves(nodes, n, c, &mut pts);
                pts.sort_unstable();
                *stability += (lam - birth) * pts.len() as f64;
                for p in pts {
                    tree.exits.push(PointExit { point: p, cluster: cid, lambda: lam });
                }
            };
            for &c in children {
                if nodes[c].size < mcs {
                    fall(c, &mut tree, &mut stability);
                }
            }
            match big.len() {
                0 => {
                    tree.nodes[cid].lambda_death = lam;
                    break;
                }
                1 => node = big[0],
                _ => {
                    tree.nodes[cid].lambda_death = lam;
                    for &c in &big {
                        stability += (lam - birth) * nodes[c].size as f64;
                        let id = tree.nodes.len();
                        tree.nodes.push(CondensedNode {
                            id,
                            parent: Some(cid),
                            lambda_birth: lam,
                            lambda_death: lam,
                            size: nodes[c].size,
                            stability: 0.0,
                            selected: false,
                        });
                        let mut pts = Vec::new();
                        leaves(nodes, n, c, &mut pts);
                        pts.sort_unstable();
                        birth_points.push(pts);
                        stack.push((id, c));
                    }
                    break;
                }
            }
        }
        tree.nodes[cid].stability = stability;
    }
    (tree, birth_points)
}

/// Excess-of-mass selection: keep a cluster when its stability is at least
/// the best total of its descendants (ties keep the parent). The root is
/// never selected.
fn select_eom(tree: &mut CondensedTree) {
    let m = tree.nodes.len();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); m];
    for c in &tree.nodes {
        if let Some(p) = c.parent {
            children[p].push(c.id);
        }
    }
    let mut best = vec![0.0; m];
    let mut chosen = vec![false; m];
    // Children always have larger ids than their parent.
    for id in (0..m).rev() {
        let sub: f64 = children[id].iter().map(|&c| best[c]).sum();
        if id != 0 && (children[id].is_empty() || tree.nodes[id].stability >= sub) {
            best[id] = tree.nodes[id].stability;
            chosen[id] = true;
        } else {
            best[id] = sub;
        }
    }
    // Top-down: a chosen cluster hides its descendants.
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        if chosen[id] {
            tree.nodes[id].selected = true;
        } else {
            stack.extend(children[id].iter().copied());
        }
    }
}

pub fn hdbscan_fit<T: Scalar>(
    points: ArrayView2<T>,
    cfg: &HdbscanConfig,
) -> Result<(ClusterLabels, CondensedTree), ClusterError> {
    if let Some((f, m)) = cfg.violations().into_iter().next() {
        return Err(ClusterError::InvalidConfig(format!("{f}: {m}")));
    }
    let n = points.nrows();
    let mcs = cfg.min_cluster_size;
    if n < mcs || n < 2 {
        log::warn!("hdbscan: {n} points is fewer than min_cluster_size {mcs}; everything is noise");
        return Ok((ClusterLabels::from_labels(vec![NOISE; n]), CondensedTree::default()));
    }
    let mut min_samples = cfg.min_samples();
    if min_samples >= n {
        log::warn!("hdbscan: min_samples {min_samples} clamped to {} for {n} points", n - 1);
        min_samples = n - 1;
    }
    let core = core_distances(points, min_samples, cfg.metric);
    let edges = mst(points, &core, cfg.metric);
    Ok(fit_from_mst(n, edges, mcs))
}

/// Condense and extract from a precomputed spanning tree of the
/// mutual-reachability graph.
pub fn fit_from_mst(n: usize, edges: Vec<(usize, usize, f64)>, mcs: usize) -> (ClusterLabels, CondensedTree) {
    let nodes = level_tree(n, edges);
    let (mut tree, birth_points) = condense(&nodes, n, mcs);
    select_eom(&mut tree);
    let mut selected: Vec<&Vec<usize>> = tree
        .nodes
        .iter()
        .filter(|c| c.selected)
        .map(|c| &birth_points[c.id])
        .collect();
    selected.sort_by_key(|pts| pts[0]);
    let mut labels = vec![NOISE; n];
    for (l, pts) in selected.iter().enumerate() {
        for &p in pts.iter() {
            labels[p] = l as i32;
        }
    }
    (ClusterLabels::from_labels(labels), tree)
}

/// Type-7 (linear interpolation) sample quantile.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Move outliers to the nearest cluster centroid when they are no farther
/// from it than the `max_distance_quantile` of that cluster's own
/// member-to-centroid distances. Centroids and quantiles come from the
/// original members only, so applying this twice changes nothing.
pub fn reassign_outliers<T: Scalar>(
    labels: &ClusterLabels,
    points: ArrayView2<T>,
    max_distance_quantile: f64,
    metric: Metric,
) -> Result<ClusterLabels, ClusterError> {
    if labels.len() != points.nrows() {
        return Err(ClusterError::LengthMismatch { labels: labels.len(), points: points.nrows() });
    }
    let c = labels.n_clusters;
    if c == 0 {
        return Ok(labels.clone());
    }
    let dim = points.ncols();
    let mut centroids = Array2::<T>::zeros((c, dim));
    let mut counts = vec![0usize; c];
    for (i, &l) in labels.labels.iter().enumerate() {
        if l >= 0 && !labels.reassigned[i] {
            let l = l as usize;
            counts[l] += 1;
            let mut row = centroids.row_mut(l);
            row += &points.row(i);
        }
    }
    for (l, &k) in counts.iter().enumerate() {
        if k > 0 {
            let mut row = centroids.row_mut(l);
            row /= T::of_usize(k);
        }
    }
    let mut spreads: Vec<Vec<f64>> = vec![Vec::new(); c];
    for (i, &l) in labels.labels.iter().enumerate() {
        if l >= 0 && !labels.reassigned[i] {
            let l = l as usize;
            spreads[l].push(metric.distance(points.row(i), centroids.row(l)).as_f64());
        }
    }
    let gates: Vec<f64> = spreads.iter().map(|s| quantile(s, max_distance_quantile)).collect();
    let mut out = labels.clone();
    for i in 0..labels.len() {
        if labels.labels[i] != NOISE {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for l in 0..c {
            if counts[l] == 0 {
                continue;
            }
            let d = metric.distance(points.row(i), centroids.row(l)).as_f64();
            if best.map_or(true, |(_, b)| d < b) {
                best = Some((l, d));
            }
        }
        if let Some((l, d)) = best {
            if d <= gates[l] {
                out.labels[i] = l as i32;
                out.reassigned[i] = true;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{gaussian_blobs, uniform_points};
    use proptest::prelude::*;

    fn matrix(points: &[Vec<f64>]) -> Array2<f64> {
        let dim = points[0].len();
        Array2::from_shape_vec((points.len(), dim), points.concat()).unwrap()
    }

    #[test]
    fn core_distance_example() {
        let m = matrix(&[vec![0.0], vec![1.0], vec![2.0], vec![10.0]]);
        assert_eq!(core_distances(m.view(), 2, Metric::Euclidean), vec![2.0, 1.0, 2.0, 9.0]);
        let same = Array2::<f32>::ones((5, 3));
        assert_eq!(core_distances(same.view(), 3, Metric::Manhattan), vec![0.0; 5]);
    }

    #[test]
    fn core_distance_matches_sorted_rows() {
        let pts = uniform_points(40, 3, 0.0, 1.0, 2);
        let m = matrix(&pts);
        let core = core_distances(m.view(), 4, Metric::Euclidean);
        for i in 0..40 {
            let mut d: Vec<f64> = (0..40)
                .filter(|&j| j != i)
                .map(|j| pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .collect();
            d.sort_by(f64::total_cmp);
            assert_eq!(core[i], d[3]);
        }
    }

    #[test]
    fn mutual_reachability_example() {
        let m = matrix(&[vec![0.0], vec![1.0]]);
        let r = mutual_reachability(m.view(), &[2.0, 1.0], Metric::Euclidean);
        assert_eq!(r[[0, 1]], 2.0);
        assert_eq!(r[[1, 0]], 2.0);
        assert_eq!(r[[0, 0]], 2.0);
    }

    /// Decode a Prüfer sequence into tree edges.
    fn prufer_edges(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
        let mut degree = vec![1usize; n];
        for &s in seq {
            degree[s] += 1;
        }
        let mut edges = Vec::new();
        for &s in seq {
            let leaf = (0..n).find(|&i| degree[i] == 1).unwrap();
            edges.push((leaf, s));
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
        edges.push((rest[0], rest[1]));
        edges
    }

    fn min_spanning_weight(w: &Array2<f64>) -> f64 {
        let n = w.nrows();
        let mut best = f64::INFINITY;
        let total = n.pow(n as u32 - 2);
        let mut seq = vec![0usize; n - 2];
        for code in 0..total {
            let mut c = code;
            for s in seq.iter_mut() {
                *s = c % n;
                c /= n;
            }
            let sum: f64 = prufer_edges(&seq, n).iter().map(|&(a, b)| w[[a, b]]).sum();
            best = best.min(sum);
        }
        best
    }

    #[test]
    fn mst_weight_is_minimal() {
        for seed in 0..6 {
            let n = 3 + seed as usize % 5;
            let pts = uniform_points(n, 2, 0.0, 1.0, seed);
            let m = matrix(&pts);
            let core = core_distances(m.view(), 2, Metric::Euclidean);
            let r = mutual_reachability(m.view(), &core, Metric::Euclidean);
            let tree: f64 = mst(m.view(), &core, Metric::Euclidean).iter().map(|e| e.2).sum();
            assert!((tree - min_spanning_weight(&r)).abs() < 1e-12);
        }
    }

    #[test]
    fn two_one_dimensional_blobs() {
        let (pts, truth) = gaussian_blobs(&[vec![0.0], vec![100.0]], &[20, 20], 1.0, 4);
        let m = matrix(&pts);
        let cfg = HdbscanConfig { min_cluster_size: 5, ..Default::default() };
        let (labels, tree) = hdbscan_fit(m.view(), &cfg).unwrap();
        assert_eq!(labels.n_clusters, 2);
        assert!(labels.labels.iter().filter(|&&l| l == NOISE).count() <= 2);
        for (l, t) in labels.labels.iter().zip(&truth) {
            if *l != NOISE {
                assert_eq!(*l as usize, *t);
            }
        }
        for c in &tree.nodes {
            if let Some(p) = c.parent {
                assert!(c.lambda_birth >= tree.nodes[p].lambda_birth);
            }
        }
    }

    #[test]
    fn min_cluster_size_equal_to_n_is_all_noise() {
        let pts = uniform_points(30, 2, 0.0, 1.0, 5);
        let cfg = HdbscanConfig { min_cluster_size: 30, ..Default::default() };
        let (labels, _) = hdbscan_fit(matrix(&pts).view(), &cfg).unwrap();
        assert!(labels.labels.iter().all(|&l| l == NOISE));
        let small = HdbscanConfig { min_cluster_size: 31, ..Default::default() };
        let (labels, tree) = hdbscan_fit(matrix(&pts).view(), &small).unwrap();
        assert_eq!(labels.outlier_ratio(), 1.0);
        assert!(tree.nodes.is_empty());
    }

    #[test]
    fn duplicate_points_do_not_break_the_tree() {
        let mut pts = vec![vec![0.0, 0.0]; 10];
        pts.extend(vec![vec![5.0, 5.0]; 10]);
        let cfg = HdbscanConfig { min_cluster_size: 4, ..Default::default() };
        let (labels, tree) = hdbscan_fit(matrix(&pts).view(), &cfg).unwrap();
        assert_eq!(labels.n_clusters, 2);
        assert_eq!(labels.outlier_ratio(), 0.0);
        assert!(tree.nodes.iter().all(|c| !c.stability.is_nan()));
    }

    #[test]
    fn condensed_sizes_telescope() {
        let (pts, _) = gaussian_blobs(&[vec![0.0, 0.0], vec![8.0, 0.0], vec![0.0, 8.0]], &[15, 20, 25], 1.0, 8);
        let cfg = HdbscanConfig { min_cluster_size: 5, ..Default::default() };
        let (_, tree) = hdbscan_fit(matrix(&pts).view(), &cfg).unwrap();
        for c in &tree.nodes {
            let kids: usize = tree.children(c.id).iter().map(|&k| tree.nodes[k].size).sum();
            let fell = tree.exits.iter().filter(|e| e.cluster == c.id).count();
            assert_eq!(c.size, kids + fell, "cluster {}", c.id);
        }
        assert_eq!(tree.exits.len(), 60);
    }

    #[test]
    fn eom_selection_is_optimal() {
        let (pts, _) = gaussian_blobs(&[vec![0.0, 0.0], vec![3.0, 0.0], vec![20.0, 0.0]], &[20, 20, 30], 0.8, 3);
        let cfg = HdbscanConfig { min_cluster_size: 6, ..Default::default() };
        let (_, tree) = hdbscan_fit(matrix(&pts).view(), &cfg).unwrap();
        fn selected_below(tree: &CondensedTree, id: usize) -> f64 {
            tree.children(id)
                .into_iter()
                .map(|c| if tree.nodes[c].selected { tree.nodes[c].stability } else { selected_below(tree, c) })
                .sum()
        }
        for c in tree.nodes.iter().filter(|c| c.selected) {
            assert!(c.stability >= selected_below(&tree, c.id));
        }
    }

    #[test]
    fn outlier_ratio_examples() {
        assert_eq!(outlier_ratio(&[-1, 0, 0, 1]), 0.25);
        assert_eq!(outlier_ratio(&[0, 1]), 0.0);
    }

    #[test]
    fn quantile_type7() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert!((quantile(&[1.0, 2.0, 3.0, 4.0], 0.9) - 3.7).abs() < 1e-12);
        assert_eq!(quantile(&[5.0], 0.9), 5.0);
    }

    #[test]
    fn reassignment_examples() {
        let m = matrix(&[
            vec![0.0, 0.0],
            vec![2.0, 0.0],
            vec![0.0, 2.0],
            vec![2.0, 2.0],
            vec![10.0, 10.0],
            vec![12.0, 10.0],
            vec![1.2, 1.0],
            vec![500.0, 500.0],
        ]);
        let labels = ClusterLabels::from_labels(vec![0, 0, 0, 0, 1, 1, -1, -1]);
        let out = reassign_outliers(&labels, m.view(), 0.9, Metric::Euclidean).unwrap();
        assert_eq!(out.labels, vec![0, 0, 0, 0, 1, 1, 0, -1]);
        assert_eq!(out.reassigned, vec![false, false, false, false, false, false, true, false]);
        let again = reassign_outliers(&out, m.view(), 0.9, Metric::Euclidean).unwrap();
        assert_eq!(again, out);
        let none = ClusterLabels::from_labels(vec![-1; 8]);
        assert_eq!(reassign_outliers(&none, m.view(), 0.9, Metric::Euclidean).unwrap(), none);
    }

    #[test]
    fn labels_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.csv");
        let l = ClusterLabels::from_labels(vec![0, -1, 1, 1]);
        l.write_csv(&p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "docid,label\n0,0\n1,-1\n2,1\n3,1\n");
        assert_eq!(ClusterLabels::read_csv(&p).unwrap(), l);
    }

    proptest! {
        #[test]
        fn reassignment_never_adds_outliers(seed in 0u64..10_000, q in 0.0f64..1.0) {
            let pts = uniform_points(40, 2, 0.0, 10.0, seed);
            let m = matrix(&pts);
            let labels: Vec<i32> = (0..40).map(|i| ((i as u64 * 7 + seed) % 4) as i32 - 1).collect();
            let l = ClusterLabels::from_labels(labels);
            let out = reassign_outliers(&l, m.view(), q, Metric::Manhattan).unwrap();
            prop_assert!(out.outlier_ratio() <= l.outlier_ratio());
            for i in 0..40 {
                if l.labels[i] != NOISE {
                    prop_assert_eq!(out.labels[i], l.labels[i]);
                }
            }
            prop_assert_eq!(reassign_outliers(&out, m.view(), q, Metric::Manhattan).unwrap(), out);
        }

        #[test]
        fn clusters_respect_min_size(seed in 0u64..1000, mcs in 2usize..8) {
            let pts = uniform_points(35, 2, 0.0, 1.0, seed);
            let cfg = HdbscanConfig { min_cluster_size: mcs, ..Default::default() };
            let (l, _) = hdbscan_fit(matrix(&pts).view(), &cfg).unwrap();
            for members in l.members() {
                prop_assert!(members.len() >= mcs);
            }
        }
    }
}
