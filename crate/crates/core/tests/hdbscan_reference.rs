mod support {
    pub mod hdbscan_ref;
}

use ndarray::Array2;
use support::hdbscan_ref::reference_labels;
use topicscope_core::cluster::{hdbscan_fit, HdbscanConfig};
use topicscope_core::embed::Metric;
use topicscope_core::synthetic::{gaussian_blobs, uniform_points};

fn case(seed: u64) -> (Vec<Vec<f64>>, usize, usize) {
    let n_blobs = 1 + seed as usize % 3;
    let centers: Vec<Vec<f64>> = (0..n_blobs).map(|b| vec![6.0 * b as f64, 3.0 * (b % 2) as f64]).collect();
    let sizes: Vec<usize> = (0..n_blobs).map(|b| 8 + (seed as usize * 3 + b * 5) % 9).collect();
    let (mut pts, _) = gaussian_blobs(&centers, &sizes, 0.4 + 0.1 * (seed % 4) as f64, seed);
    let noise = (seed as usize * 7) % 10;
    pts.extend(uniform_points(noise, 2, -3.0, 15.0, seed + 1000));
    pts.truncate(50);
    let mcs = 3 + seed as usize % 4;
    let ms = 2 + seed as usize % 5;
    (pts, mcs, ms)
}

#[test]
fn labels_match_reference_on_mixed_instances() {
    for seed in 0..20 {
        let (pts, mcs, ms) = case(seed);
        let m = Array2::from_shape_vec((pts.len(), 2), pts.concat()).unwrap();
        let cfg = HdbscanConfig { min_cluster_size: mcs, min_samples: Some(ms), metric: Metric::Euclidean };
        let (labels, _) = hdbscan_fit(m.view(), &cfg).unwrap();
        assert_eq!(labels.labels, reference_labels(&pts, mcs, ms), "case {seed}");
    }
}

#[test]
fn labels_match_reference_with_ties() {
    // Integer lattice points produce many equal mutual-reachability weights.
    for seed in 0..10u64 {
        let pts: Vec<Vec<f64>> = uniform_points(30, 2, 0.0, 6.0, seed)
            .into_iter()
            .map(|p| p.into_iter().map(f64::round).collect())
            .collect();
        let m = Array2::from_shape_vec((30, 2), pts.concat()).unwrap();
        let cfg = HdbscanConfig { min_cluster_size: 4, min_samples: Some(3), metric: Metric::Euclidean };
        let (labels, _) = hdbscan_fit(m.view(), &cfg).unwrap();
        assert_eq!(labels.labels, reference_labels(&pts, 4, 3), "case {seed}");
    }
}
