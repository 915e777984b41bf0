//! Document embeddings and their UMAP reduction.

mod umap;

pub use umap::{
    directed_weights, fit_ab, fuzzy_union, knn, optimize_layout, smooth_knn, umap, FuzzyGraph, Knn,
    Metric, SmoothKnn, UmapConfig, SMOOTH_K_TOLERANCE,
};

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::textprep::BowCorpus;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("{what} line {line}: {message}")]
    Format {
        what: &'static str,
        line: usize,
        message: String,
    },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("embedding has {found} rows but the corpus has {expected} documents")]
    RowMismatch { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("curve fit did not converge (rmse {rmse:.4})")]
    FitFailed { rmse: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `n × dim` document vectors, rows in corpus order.
pub type EmbeddingMatrix<T> = Array2<T>;

/// Parse an embedding file: `n dim` on the first line, then `n` rows of
/// `dim` whitespace-separated reals. With `expected_rows`, the row count
/// must match the corpus size.
pub fn load_embeddings<T: Scalar>(path: &Path, expected_rows: Option<usize>) -> Result<EmbeddingMatrix<T>, EmbedError> {
    let text = std::fs::read_to_string(path)?;
    parse_embeddings(&text, expected_rows)
}

pub fn parse_embeddings<T: Scalar>(text: &str, expected_rows: Option<usize>) -> Result<EmbeddingMatrix<T>, EmbedError> {
    let bad = |line: usize, message: String| EmbedError::Format { what: "embedding", line, message };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| bad(1, format!("bad header field {s:?}"))))
        .collect::<Result<_, _>>()?;
    let [n, dim] = dims[..] else {
        return Err(bad(1, "header must be `n dim`".into()));
    };
    if let Some(expected) = expected_rows {
        if expected != n {
            return Err(EmbedError::RowMismatch { expected, found: n });
        }
    }
    let mut values = Vec::with_capacity(n * dim);
    let mut rows = 0;
    for (i, line) in lines {
        if rows == n {
            return Err(bad(i + 1, format!("more than {n} rows")));
        }
        let before = values.len();
        for (col, field) in line.split_whitespace().enumerate() {
            let x: f64 = field.parse().map_err(|_| bad(i + 1, format!("bad number {field:?}")))?;
            if !x.is_finite() {
                return Err(EmbedError::NonFinite { row: rows, col });
            }
            values.push(T::of(x));
        }
        if values.len() - before != dim {
            return Err(bad(i + 1, format!("expected {dim} values, got {}", values.len() - before)));
        }
        rows += 1;
    }
    if rows != n {
        return Err(EmbedError::RowMismatch { expected: n, found: rows });
    }
    Ok(Array2::from_shape_vec((n, dim), values).expect("shape checked"))
}

pub fn write_embeddings<T: Scalar>(emb: &EmbeddingMatrix<T>, path: &Path) -> Result<(), EmbedError> {
    let mut s = format!("{} {}\n", emb.nrows(), emb.ncols());
    for row in emb.rows() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Smoothed TF-IDF weights: `tf · (ln((1+n)/(1+df)) + 1)`.
pub fn tfidf(bow: &BowCorpus) -> Vec<Vec<(usize, f64)>> {
    let n = bow.docs.len() as f64;
    let mut df = vec![0usize; bow.vocab_size];
    for doc in &bow.docs {
        for &(t, _) in doc {
            df[t as usize] += 1;
        }
    }
    bow.docs
        .iter()
        .map(|doc| {
            doc.iter()
                .map(|&(t, c)| {
                    let idf = ((1.0 + n) / (1.0 + df[t as usize] as f64)).ln() + 1.0;
                    (t as usize, c as f64 * idf)
                })
                .collect()
        })
        .collect()
}

/// Offline stand-in for sentence embeddings: TF-IDF rows projected through a
/// seeded `±1/√dim` matrix, then L2-normalised. Empty documents map to zero
/// rows.
pub fn fallback_embed<T: Scalar>(bow: &BowCorpus, dim: usize, seed: u64) -> Result<EmbeddingMatrix<T>, EmbedError> {
    if dim == 0 {
        return Err(EmbedError::InvalidConfig("dim must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (dim as f64).sqrt();
    let projection: Vec<f64> = (0..bow.vocab_size * dim)
        .map(|_| if rng.random::<bool>() { scale } else { -scale })
        .collect();
    let weights = tfidf(bow);
    let mut out = Array2::<T>::zeros((bow.docs.len(), dim));
    for (d, doc) in weights.iter().enumerate() {
        let mut row = vec![0.0f64; dim];
        for &(t, w) in doc {
            let p = &projection[t * dim..(t + 1) * dim];
            for (r, x) in row.iter_mut().zip(p) {
                *r += w * x;
            }
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (j, x) in row.iter().enumerate() {
                out[[d, j]] = T::of(x / norm);
            }
        }
    }
    Ok(out)
}

/// Tab-separated matrix with a `doc c0 c1 ...` header; used for reduced
/// coordinates.
pub fn write_matrix_tsv<T: Scalar>(m: &Array2<T>, path: &Path) -> Result<(), EmbedError> {
    let mut s = String::from("doc");
    for j in 0..m.ncols() {
        write!(s, "\tc{j}").unwrap();
    }
    s.push('\n');
    for (i, row) in m.rows().into_iter().enumerate() {
        write!(s, "{i}").unwrap();
        for x in row {
            write!(s, "\t{x}").unwrap();
        }
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_matrix_tsv<T: Scalar>(path: &Path) -> Result<Array2<T>, EmbedError> {
    let text = std::fs::read_to_string(path)?;
    let bad = |line: usize, message: String| EmbedError::Format { what: "matrix", line, message };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let cols = header.split('\t').count().saturating_sub(1);
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or("");
        if id.parse::<usize>().ok() != Some(rows) {
            return Err(bad(i + 2, format!("expected row id {rows}, got {id:?}")));
        }
        let before = values.len();
        for (col, f) in fields.enumerate() {
            let x: f64 = f.parse().map_err(|_| bad(i + 2, format!("bad number {f:?}")))?;
            if !x.is_finite() {
                return Err(EmbedError::NonFinite { row: rows, col });
            }
            values.push(T::of(x));
        }
        if values.len() - before != cols {
            return Err(bad(i + 2, format!("expected {cols} values")));
        }
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, cols), values).expect("shape checked"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{planted_corpus, PlantedSpec};

    #[test]
    fn parses_small_file() {
        let m: Array2<f64> = parse_embeddings("3 4\n1 2 3 4\n0 0 0 0\n-1 .5 2e1 7\n", Some(3)).unwrap();
        assert_eq!(m.dim(), (3, 4));
        assert_eq!(m[[2, 2]], 20.0);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(
            parse_embeddings::<f64>("2 2\n1 2\n3 4\n", Some(3)),
            Err(EmbedError::RowMismatch { expected: 3, found: 2 })
        ));
        assert!(matches!(
            parse_embeddings::<f64>("2 2\n1 2\n", None),
            Err(EmbedError::RowMismatch { .. })
        ));
        assert!(matches!(
            parse_embeddings::<f64>("1 2\n1 NaN\n", None),
            Err(EmbedError::NonFinite { row: 0, col: 1 })
        ));
        assert!(matches!(
            parse_embeddings::<f64>("1 2\n1 2 3\n", None),
            Err(EmbedError::Format { line: 2, .. })
        ));
    }

    #[test]
    fn file_round_trip_f32() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        let m = Array2::from_shape_vec((2, 3), vec![0.1f32, -2.0, 3.5, 0.0, 1e-7, 8.0]).unwrap();
        write_embeddings(&m, &p).unwrap();
        assert_eq!(load_embeddings::<f32>(&p, Some(2)).unwrap(), m);
        let q = dir.path().join("r.tsv");
        write_matrix_tsv(&m, &q).unwrap();
        assert_eq!(read_matrix_tsv::<f32>(&q).unwrap(), m);
    }

    #[test]
    fn identical_docs_identical_rows() {
        let bow = BowCorpus {
            docs: vec![vec![(0, 2), (3, 1)], vec![(1, 1)], vec![(0, 2), (3, 1)]],
            vocab_size: 4,
        };
        let e: Array2<f64> = fallback_embed(&bow, 16, 3).unwrap();
        assert_eq!(e.row(0), e.row(2));
        let norm: f64 = e.row(1).iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_roughly_preserves_cosine() {
        let c = planted_corpus(&PlantedSpec::default());
        let e: Array2<f64> = fallback_embed(&c.bow, 256, 1).unwrap();
        let w = tfidf(&c.bow);
        let dense = |d: usize| {
            let mut v = vec![0.0; c.bow.vocab_size];
            for &(t, x) in &w[d] {
                v[t] = x;
            }
            v
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let (i, j) = (rng.random_range(0..200), rng.random_range(0..200));
            let exact = crate::coherence::cosine(&dense(i), &dense(j));
            let proj: f64 = e.row(i).dot(&e.row(j));
            assert!((exact - proj).abs() < 0.15, "{i},{j}: {exact} vs {proj}");
        }
    }
}
