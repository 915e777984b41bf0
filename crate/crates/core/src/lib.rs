//! Literature topic-modelling toolkit: PubMed retrieval and curation, text
//! preparation, collapsed-Gibbs LDA with C_v coherence, and an
//! embedding → UMAP → HDBSCAN → c-TF-IDF clustering track.
//!
//! Dense numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for callers that do not care.

pub mod cluster;
pub mod coherence;
pub mod curate;
pub mod embed;
pub mod ingest;
pub mod lda;
pub mod represent;
pub mod scalar;
pub mod synthetic;
pub mod textprep;
pub mod util;

pub use scalar::Scalar;

/// Double-precision embedding matrix.
pub type Embeddings = embed::EmbeddingMatrix<f64>;
/// Single-precision embedding matrix.
pub type Embeddings32 = embed::EmbeddingMatrix<f32>;
pub type Ctfidf = represent::CtfidfMatrix<f64>;
pub type Ctfidf32 = represent::CtfidfMatrix<f32>;
pub type Similarity = represent::SimilarityMatrix<f64>;
pub type Similarity32 = represent::SimilarityMatrix<f32>;
pub type Neighbours = embed::Knn<f64>;
pub type Neighbours32 = embed::Knn<f32>;
