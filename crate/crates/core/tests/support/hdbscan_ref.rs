//! Reference HDBSCAN written directly from the level-set definitions: no
//! spanning tree, no union-find. A cluster is split at the smallest
//! threshold `s` at which it is still connected; its children are the
//! connected pieces under edges strictly below `s`.

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn mutual_reachability(points: &[Vec<f64>], min_samples: usize) -> Vec<Vec<f64>> {
    let n = points.len();
    let d: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| euclidean(&points[i], &points[j])).collect())
        .collect();
    let core: Vec<f64> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d[i][j]).collect();
            row.sort_by(|a, b| a.partial_cmp(b).unwrap());
            row[min_samples - 1]
        })
        .collect();
    (0..n)
        .map(|i| (0..n).map(|j| d[i][j].max(core[i]).max(core[j])).collect())
        .collect()
}

fn components(set: &[usize], m: &[Vec<f64>], below: impl Fn(f64) -> bool) -> Vec<Vec<usize>> {
    let mut seen = vec![false; set.len()];
    let mut out = Vec::new();
    for s in 0..set.len() {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![set[s]];
        let mut queue = vec![s];
        while let Some(a) = queue.pop() {
            for b in 0..set.len() {
                if !seen[b] && below(m[set[a]][set[b]]) {
                    seen[b] = true;
                    comp.push(set[b]);
                    queue.push(b);
                }
            }
        }
        comp.sort();
        out.push(comp);
    }
    out
}

fn split_level(set: &[usize], m: &[Vec<f64>]) -> f64 {
    let mut weights: Vec<f64> = Vec::new();
    for &a in set {
        for &b in set {
            if a < b {
                weights.push(m[a][b]);
            }
        }
    }
    weights.sort_by(|a, b| a.partial_cmp(b).unwrap());
    weights.dedup();
    for w in weights {
        if components(set, m, |x| x <= w).len() == 1 {
            return w;
        }
    }
    0.0
}

struct Node {
    points: Vec<usize>,
    stability: f64,
    children: Vec<Node>,
}

fn grow(mut set: Vec<usize>, birth: f64, m: &[Vec<f64>], mcs: usize) -> Node {
    let points = set.clone();
    let mut stability = 0.0;
    loop {
        if set.len() < 2 {
            return Node { points, stability, children: Vec::new() };
        }
        let s = split_level(&set, m);
        let lam = if s > 0.0 { 1.0 / s } else { f64::MAX };
        let pieces = components(&set, m, |x| x < s);
        let big: Vec<Vec<usize>> = pieces.into_iter().filter(|p| p.len() >= mcs).collect();
        match big.len() {
            0 => {
                stability += (lam - birth) * set.len() as f64;
                return Node { points, stability, children: Vec::new() };
            }
            1 => {
                stability += (lam - birth) * (set.len() - big[0].len()) as f64;
                set = big.into_iter().next().unwrap();
            }
            _ => {
                stability += (lam - birth) * set.len() as f64;
                let children = big.into_iter().map(|p| grow(p, lam, m, mcs)).collect();
                return Node { points, stability, children };
            }
        }
    }
}

/// Returns (best total stability, chosen clusters' point sets).
fn choose(node: &Node, is_root: bool) -> (f64, Vec<Vec<usize>>) {
    let mut total = 0.0;
    let mut picked = Vec::new();
    for c in &node.children {
        let (s, p) = choose(c, false);
        total += s;
        picked.extend(p);
    }
    if !is_root && (node.children.is_empty() || node.stability >= total) {
        return (node.stability, vec![node.points.clone()]);
    }
    (total, picked)
}

pub fn reference_labels(points: &[Vec<f64>], mcs: usize, min_samples: usize) -> Vec<i32> {
    let n = points.len();
    if n < mcs {
        return vec![-1; n];
    }
    let m = mutual_reachability(points, min_samples);
    let root = grow((0..n).collect(), 0.0, &m, mcs);
    let (_, mut clusters) = choose(&root, true);
    clusters.sort_by_key(|c| c[0]);
    let mut labels = vec![-1; n];
    for (l, c) in clusters.iter().enumerate() {
        for &p in c {
            labels[p] = l as i32;
        }
    }
    labels
}
