//! Stage graph: fetch → curate → prep → {LDA sweep + train, embed → reduce →
//! cluster → topics} → viz. Every stage records a content-hash key over its
//! inputs and config slice in `manifest.json` and is skipped when the key and
//! its outputs are unchanged.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use topicscope_core::cluster::{hdbscan_fit, reassign_outliers, ClusterLabels, HdbscanConfig};
use topicscope_core::coherence::{cv_coherence, model_top_words, sweep, CoherenceConfig, SweepData, SweepResult};
use topicscope_core::curate::{curate, ChildKeywordSet, CurationReport};
use topicscope_core::embed::{
    fallback_embed, load_embeddings, read_matrix_tsv, umap, write_embeddings, write_matrix_tsv, UmapConfig,
};
use topicscope_core::ingest::{
    build_query, read_corpus_csv, write_corpus_csv, EutilsClient, FetchSession, QuerySpec, SystemClock, UreqTransport,
};
use topicscope_core::lda::{train, LdaModel};
use topicscope_core::represent::{
    centroid_vectors, class_term_counts, ctfidf, dendrogram, dendrogram_svg, heatmap_csv, heatmap_svg,
    intertopic_csv, lda_intertopic_map, merge_similar, summarize, topic_similarity, MergeStep,
};
use topicscope_core::textprep::{
    build_vocabulary, ngram_counts, prepare_text, read_bow, read_vocabulary, write_bow, write_vocabulary, BowCorpus,
    NgramConfig, StopList, TokenId, Vocabulary,
};
use topicscope_core::util::vocab_fingerprint;

use crate::config::{HeatmapBasis, Lda, PipelineConfig, Prep};

/// Environment variable holding the NCBI API key.
pub const API_KEY_ENV: &str = "NCBI_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Fetch,
    Curate,
    Prep,
    LdaSweep,
    LdaTrain,
    Embed,
    Reduce,
    Cluster,
    Topics,
    Viz,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Fetch,
        Stage::Curate,
        Stage::Prep,
        Stage::LdaSweep,
        Stage::LdaTrain,
        Stage::Embed,
        Stage::Reduce,
        Stage::Cluster,
        Stage::Topics,
        Stage::Viz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Fetch => "fetch",
            Stage::Curate => "curate",
            Stage::Prep => "prep",
            Stage::LdaSweep => "lda-sweep",
            Stage::LdaTrain => "lda-train",
            Stage::Embed => "embed",
            Stage::Reduce => "reduce",
            Stage::Cluster => "cluster",
            Stage::Topics => "topics",
            Stage::Viz => "viz",
        }
    }

    /// Process exit status when this stage fails.
    pub fn exit_code(self) -> i32 {
        10 + Stage::ALL.iter().position(|&s| s == self).unwrap() as i32
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} failed: {source:#}")]
pub struct StageError {
    pub stage: Stage,
    pub source: anyhow::Error,
}

pub trait StageContext<T> {
    fn stage(self, stage: Stage) -> Result<T, StageError>;
}

impl<T, E: Into<anyhow::Error>> StageContext<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|e| StageError { stage, source: e.into() })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

pub fn file_hash(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

// Artifact names relative to the output directory.
pub const CURATED: &str = "curate/curated.csv";
pub const CURATION_REPORT: &str = "curate/report.csv";
pub const PREP_DIR: &str = "prep";
pub const SWEEP_CSV: &str = "lda/sweep.csv";
pub const SWEEP_JSON: &str = "lda/sweep.json";
pub const LDA_MODEL: &str = "lda/model.json";
pub const LDA_TOPICS: &str = "lda/topics.json";
pub const EMBED_CHECK: &str = "embed/check.json";
pub const FALLBACK_EMBEDDINGS: &str = "embed/embeddings.txt";
pub const REDUCED: &str = "reduce/reduced.tsv";
pub const HDBSCAN_LABELS: &str = "cluster/hdbscan_labels.csv";
pub const CONDENSED_TREE: &str = "cluster/condensed_tree.json";
pub const CLUSTER_LABELS: &str = "cluster/labels.csv";
pub const CLUSTER_SUMMARY: &str = "cluster/summary.json";
pub const TOPIC_LABELS: &str = "topics/labels.csv";
pub const TOPIC_MERGES: &str = "topics/merges.json";
pub const TOPIC_SUMMARIES: &str = "topics/summaries.json";
pub const HEATMAP_CSV: &str = "viz/heatmap.csv";
pub const HEATMAP_SVG: &str = "viz/heatmap.svg";
pub const DENDROGRAM_JSON: &str = "viz/dendrogram.json";
pub const DENDROGRAM_SVG: &str = "viz/dendrogram.svg";
pub const INTERTOPIC_CSV: &str = "viz/intertopic.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "logs/timings.json";

// ---------------------------------------------------------------- fetch

/// Search and download every matching record.
pub fn fetch_live(query: &QuerySpec, session: &FetchSession) -> anyhow::Result<Vec<topicscope_core::ingest::DocumentRecord>> {
    let mut session = session.clone();
    if let Ok(key) = std::env::var(API_KEY_ENV) {
        if !key.is_empty() {
            session.api_key = Some(key);
        }
    }
    let term = build_query(query)?;
    let transport = UreqTransport::new(Duration::from_secs(60));
    let clock = SystemClock::default();
    let client = EutilsClient::new(session, &transport, &clock)?;
    let ids = client.search_ids(&term)?;
    log::info!("fetch: {} ids for {term}", ids.len());
    let outcome = client.fetch_records(&ids)?;
    if !outcome.skipped.is_empty() {
        log::warn!("fetch: {} ids returned no article", outcome.skipped.len());
    }
    Ok(outcome.records)
}

// ---------------------------------------------------------------- curate

pub fn curate_file(raw: &Path, keywords: &ChildKeywordSet, out: &Path, report: &Path) -> anyhow::Result<CurationReport> {
    keywords.validate()?;
    let records = read_corpus_csv(raw)?;
    let (kept, rep) = curate(records, keywords);
    ensure_parent(out)?;
    ensure_parent(report)?;
    write_corpus_csv(&kept, out)?;
    rep.write_csv(report)?;
    Ok(rep)
}

// ---------------------------------------------------------------- prep

/// Token documents plus the unigram (LDA) and n-gram (c-TF-IDF) count views.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub tokens: Vec<Vec<String>>,
    pub vocab: Vocabulary,
    pub bow: BowCorpus,
    pub ngram_vocab: Vocabulary,
    pub ngram: BowCorpus,
}

impl Prepared {
    pub const FILES: [&'static str; 5] = ["tokens.txt", "vocab.tsv", "bow.txt", "ngram_vocab.tsv", "ngram_bow.txt"];

    pub fn build(texts: &[String], prep: &Prep, ngram: &NgramConfig, stoplist: Option<&Path>) -> anyhow::Result<Self> {
        prep.tokenizer.validate()?;
        let mut stops = StopList::default();
        if let Some(p) = stoplist {
            stops.standard = StopList::read_words(p)?;
        }
        stops.domain.extend(prep.extra_stopwords.iter().map(|w| w.to_lowercase()));
        let tokens: Vec<Vec<String>> = texts.iter().map(|t| prepare_text(t, &prep.tokenizer, &stops)).collect();
        let vocab = build_vocabulary(&tokens, prep.min_df, prep.max_df)?;
        let bow = BowCorpus::from_token_docs(&tokens, &vocab);
        let (ngram_vocab, docs) = ngram_counts(&tokens, ngram)?;
        let ngram = BowCorpus { docs, vocab_size: ngram_vocab.len() };
        Ok(Prepared { tokens, vocab, bow, ngram_vocab, ngram })
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut s = String::new();
        for doc in &self.tokens {
            s.push_str(&doc.join(" "));
            s.push('\n');
        }
        std::fs::write(dir.join(Self::FILES[0]), s)?;
        write_vocabulary(&self.vocab, &dir.join(Self::FILES[1]))?;
        write_bow(&self.bow, &dir.join(Self::FILES[2]))?;
        write_vocabulary(&self.ngram_vocab, &dir.join(Self::FILES[3]))?;
        write_bow(&self.ngram, &dir.join(Self::FILES[4]))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(Self::FILES[0]);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let tokens = text.lines().map(|l| l.split_whitespace().map(str::to_string).collect()).collect();
        let vocab = read_vocabulary(&dir.join(Self::FILES[1]))?;
        let bow = read_bow(&dir.join(Self::FILES[2]), vocab.len())?;
        let ngram_vocab = read_vocabulary(&dir.join(Self::FILES[3]))?;
        let ngram = read_bow(&dir.join(Self::FILES[4]), ngram_vocab.len())?;
        Ok(Prepared { tokens, vocab, bow, ngram_vocab, ngram })
    }

    /// Token documents mapped onto the unigram vocabulary.
    pub fn reference(&self) -> Vec<Vec<TokenId>> {
        self.tokens.iter().map(|d| self.vocab.encode(d)).collect()
    }

    pub fn doc_lens(&self) -> Vec<usize> {
        (0..self.bow.len()).map(|d| self.bow.doc_len(d)).collect()
    }
}

pub fn prep_file(curated: &Path, prep: &Prep, ngram: &NgramConfig, stoplist: Option<&Path>, dir: &Path) -> anyhow::Result<Prepared> {
    let records = read_corpus_csv(curated)?;
    if records.is_empty() {
        bail!("curated corpus is empty");
    }
    let texts: Vec<String> = records.iter().map(|r| r.text()).collect();
    let p = Prepared::build(&texts, prep, ngram, stoplist)?;
    p.write(dir)?;
    Ok(p)
}

// ---------------------------------------------------------------- LDA

/// Indices of the held-out documents (every `every`-th, 1-based).
pub fn heldout_split(n: usize, every: usize) -> (Vec<usize>, Vec<usize>) {
    (0..n).partition(|i| (i + 1) % every != 0)
}

pub fn lda_sweep(p: &Prepared, lda: &Lda, coherence: &CoherenceConfig, seed: u64) -> SweepResult {
    let (train_idx, held_idx) = heldout_split(p.bow.len(), lda.heldout_every);
    let train_bow = p.bow.subset(&train_idx);
    let held = p.bow.subset(&held_idx);
    let reference = p.reference();
    let data = SweepData {
        train: &train_bow,
        heldout: (!held.is_empty()).then_some(&held),
        reference: &reference,
    };
    sweep(&data, lda.k_min..=lda.k_max, &lda.hyper(lda.k_min, seed), coherence, train)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaTopic {
    pub topic: usize,
    pub words: Vec<String>,
    pub coherence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaSummary {
    pub k: usize,
    pub coherence: f64,
    /// Per-word held-out log-likelihood of the sweep model at this K.
    pub heldout_loglik: Option<f64>,
    pub topics: Vec<LdaTopic>,
}

/// Train the final model on every document with seed `seed + k`.
pub fn lda_train(p: &Prepared, lda: &Lda, coherence: &CoherenceConfig, k: usize, seed: u64) -> anyhow::Result<(LdaModel, LdaSummary)> {
    let model = train(&p.bow, &lda.hyper(k, seed.wrapping_add(k as u64)))?;
    let top = model_top_words(&model, coherence.top_n)?;
    let report = cv_coherence(&top, &p.reference(), coherence);
    let topics = top
        .iter()
        .enumerate()
        .map(|(t, words)| LdaTopic {
            topic: t,
            words: words.iter().map(|&w| p.vocab.token(w).to_string()).collect(),
            coherence: (!report.flagged.contains(&t)).then(|| report.per_topic[t]),
        })
        .collect();
    let summary = LdaSummary { k, coherence: report.mean, heldout_loglik: None, topics };
    Ok((model, summary))
}

// ---------------------------------------------------------------- embed track

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedCheck {
    /// `file` or `fallback`.
    pub source: String,
    pub rows: usize,
    pub dim: usize,
    pub sha256: String,
}

pub fn embed_check(path: &Path, rows: Option<usize>) -> anyhow::Result<EmbedCheck> {
    let m = load_embeddings::<f64>(path, rows)?;
    Ok(EmbedCheck { source: "file".into(), rows: m.nrows(), dim: m.ncols(), sha256: file_hash(path)? })
}

pub fn reduce_file(embeddings: &Path, cfg: &UmapConfig, out: &Path) -> anyhow::Result<()> {
    let emb = load_embeddings::<f64>(embeddings, None)?;
    let reduced = umap(emb.view(), cfg)?;
    ensure_parent(out)?;
    write_matrix_tsv(&reduced, out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub n_clusters: usize,
    pub outlier_ratio_before: f64,
    pub outlier_ratio_after: f64,
    pub reassigned: usize,
}

pub struct ClusterOutputs<'a> {
    pub labels: &'a Path,
    pub raw_labels: Option<&'a Path>,
    pub tree: Option<&'a Path>,
}

pub fn cluster_file(reduced: &Path, cfg: &HdbscanConfig, reassign: Option<f64>, out: &ClusterOutputs<'_>) -> anyhow::Result<ClusterSummary> {
    let points = read_matrix_tsv::<f64>(reduced)?;
    let (raw, tree) = hdbscan_fit(points.view(), cfg)?;
    let final_labels = match reassign {
        Some(q) => reassign_outliers(&raw, points.view(), q, cfg.metric)?,
        None => raw.clone(),
    };
    ensure_parent(out.labels)?;
    final_labels.write_csv(out.labels)?;
    if let Some(p) = out.raw_labels {
        ensure_parent(p)?;
        raw.write_csv(p)?;
    }
    if let Some(p) = out.tree {
        ensure_parent(p)?;
        tree.write_json(p)?;
    }
    Ok(ClusterSummary {
        n_clusters: raw.n_clusters,
        outlier_ratio_before: raw.outlier_ratio(),
        outlier_ratio_after: final_labels.outlier_ratio(),
        reassigned: final_labels.reassigned.iter().filter(|&&r| r).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicsOutput {
    pub n_topics: usize,
    pub merges: Vec<MergeStep>,
    pub summaries: Vec<topicscope_core::represent::TopicSummary>,
}

/// Merge near-duplicate clusters, then describe each topic by c-TF-IDF terms
/// and its documents closest to the centroid.
pub fn build_topics(labels: &[i32], p: &Prepared, points: &ndarray::Array2<f64>, threshold: f64, top_terms: usize, rep_docs: usize) -> anyhow::Result<(Vec<i32>, TopicsOutput)> {
    if labels.len() != p.ngram.len() || labels.len() != points.nrows() {
        bail!("{} labels, {} documents, {} reduced rows", labels.len(), p.ngram.len(), points.nrows());
    }
    let (merged, merges) = merge_similar(labels, &p.ngram.docs, p.ngram_vocab.len(), threshold);
    let c = n_classes(&merged);
    let counts = class_term_counts::<f64>(&p.ngram.docs, &merged, c, p.ngram_vocab.len());
    let weights = ctfidf(counts.view()).weights;
    let summaries = summarize(&merged, weights.view(), &p.ngram_vocab, points.view(), top_terms, rep_docs);
    Ok((merged, TopicsOutput { n_topics: c, merges, summaries }))
}

fn n_classes(labels: &[i32]) -> usize {
    labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize)
}

pub fn write_labels(labels: &[i32], path: &Path) -> anyhow::Result<()> {
    ensure_parent(path)?;
    ClusterLabels::from_labels(labels.to_vec()).write_csv(path)?;
    Ok(())
}

// ---------------------------------------------------------------- viz

pub struct VizInputs<'a> {
    pub labels: &'a [i32],
    pub prepared: &'a Prepared,
    /// Original document embeddings, needed for the centroid basis.
    pub embeddings: Option<&'a ndarray::Array2<f64>>,
    pub basis: HeatmapBasis,
    pub model: Option<&'a LdaModel>,
}

/// Heatmap, dendrogram and (when a model is given) the intertopic map.
/// Returns the largest off-diagonal topic similarity.
pub fn viz_export(inputs: &VizInputs<'_>, dir: &Path) -> anyhow::Result<Option<f64>> {
    std::fs::create_dir_all(dir)?;
    let p = inputs.prepared;
    let c = n_classes(inputs.labels);
    let counts = class_term_counts::<f64>(&p.ngram.docs, inputs.labels, c, p.ngram_vocab.len());
    let weights = ctfidf(counts.view()).weights;
    let sim = match inputs.basis {
        HeatmapBasis::Ctfidf => topic_similarity(weights.view()),
        HeatmapBasis::Centroid => {
            let emb = inputs.embeddings.ok_or_else(|| anyhow!("centroid heatmap needs embeddings"))?;
            topic_similarity(centroid_vectors(emb.view(), inputs.labels, c).view())
        }
    };
    let name = |rel: &str| dir.join(Path::new(rel).file_name().unwrap());
    std::fs::write(name(HEATMAP_CSV), heatmap_csv(sim.values.view()))?;
    std::fs::write(name(HEATMAP_SVG), heatmap_svg(sim.values.view()))?;
    let tree = dendrogram(weights.view());
    write_json(&tree.tree(), &name(DENDROGRAM_JSON))?;
    std::fs::write(name(DENDROGRAM_SVG), dendrogram_svg(&tree))?;
    if let Some(model) = inputs.model {
        let map = lda_intertopic_map(model.phi::<f64>().view(), model.theta::<f64>().view(), &p.doc_lens());
        std::fs::write(name(INTERTOPIC_CSV), intertopic_csv(&map))?;
    }
    let mut max_off = None::<f64>;
    for i in 0..c {
        for j in 0..c {
            if i != j {
                let v = sim.values[[i, j]];
                max_off = Some(max_off.map_or(v, |m| m.max(v)));
            }
        }
    }
    Ok(max_off)
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaReport {
    pub selected_k: usize,
    pub coherence: f64,
    pub heldout_loglik: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustererReport {
    pub n_clusters: usize,
    pub n_topics: usize,
    pub outlier_ratio_before: f64,
    pub outlier_ratio_after: f64,
    pub max_topic_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub documents: usize,
    pub curation: CurationReport,
    pub lda: LdaReport,
    pub clusterer: ClustererReport,
}

impl ComparisonReport {
    pub fn table(&self) -> String {
        let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
        let rows = [
            ("Documents", self.documents.to_string(), self.documents.to_string()),
            ("Topics", self.lda.selected_k.to_string(), self.clusterer.n_topics.to_string()),
            ("Clusters before merging", "-".into(), self.clusterer.n_clusters.to_string()),
            ("Coherence (C_v)", format!("{:.4}", self.lda.coherence), "-".into()),
            ("Held-out log-likelihood per word", opt(self.lda.heldout_loglik), "-".into()),
            ("Outlier ratio", "-".into(), format!("{:.4}", self.clusterer.outlier_ratio_before)),
            ("Outlier ratio after reassignment", "-".into(), format!("{:.4}", self.clusterer.outlier_ratio_after)),
            ("Max off-diagonal topic similarity", "-".into(), opt(self.clusterer.max_topic_similarity)),
        ];
        let mut s = format!("{:<34} {:>10} {:>10}\n", "Metric", "LDA", "Clusterer");
        for (m, a, b) in rows {
            writeln!(s, "{m:<34} {a:>10} {b:>10}").unwrap();
        }
        s
    }
}

// ---------------------------------------------------------------- cache

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub key: String,
    /// Output path (relative to the output directory) → sha256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub cache_hit: bool,
    pub seconds: f64,
}

/// Executes stages against one output directory, skipping those whose key
/// and outputs are unchanged.
pub struct Runner {
    out: PathBuf,
    force: bool,
    manifest: Mutex<Manifest>,
    timings: Mutex<Vec<(Stage, StageTiming)>>,
}

impl Runner {
    pub fn new(out: &Path, force: bool) -> anyhow::Result<Self> {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let path = out.join(MANIFEST);
        let manifest = if path.exists() {
            read_json(&path).unwrap_or_else(|e| {
                log::warn!("ignoring unreadable manifest: {e:#}");
                Manifest::default()
            })
        } else {
            Manifest::default()
        };
        Ok(Runner { out: out.to_path_buf(), force, manifest: Mutex::new(manifest), timings: Mutex::new(Vec::new()) })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub fn timings(&self) -> Vec<StageTiming> {
        let mut t = self.timings.lock().unwrap().clone();
        t.sort_by_key(|(s, _)| *s);
        t.into_iter().map(|(_, t)| t).collect()
    }

    fn record(&self, stage: Stage, cache_hit: bool, elapsed: Duration) {
        let t = StageTiming { stage: stage.name().into(), cache_hit, seconds: elapsed.as_secs_f64() };
        self.timings.lock().unwrap().push((stage, t));
    }

    pub fn mark_cached(&self, stage: Stage) {
        self.record(stage, true, Duration::ZERO);
    }

    /// Run `body` unless the manifest already holds this key with intact
    /// outputs. Returns whether the stage was a cache hit.
    pub fn stage<C: Serialize>(
        &self,
        stage: Stage,
        config: &C,
        inputs: &[&Path],
        outputs: &[&str],
        body: impl FnOnce() -> anyhow::Result<()>,
    ) -> Result<bool, StageError> {
        let start = Instant::now();
        let key = self.key(stage, config, inputs).stage(stage)?;
        if !self.force && self.is_fresh(stage, &key) {
            log::info!("{stage}: cache hit");
            self.record(stage, true, start.elapsed());
            return Ok(true);
        }
        log::info!("{stage}: running");
        body().stage(stage)?;
        let mut hashes = BTreeMap::new();
        for rel in outputs {
            hashes.insert(rel.to_string(), file_hash(&self.path(rel)).stage(stage)?);
        }
        let mut m = self.manifest.lock().unwrap();
        m.stages.insert(stage.name().into(), ManifestEntry { key, outputs: hashes });
        let tmp = self.path("manifest.json.tmp");
        write_json(&*m, &tmp).stage(stage)?;
        std::fs::rename(&tmp, self.path(MANIFEST)).stage(stage)?;
        drop(m);
        self.record(stage, false, start.elapsed());
        Ok(false)
    }

    fn key<C: Serialize>(&self, stage: Stage, config: &C, inputs: &[&Path]) -> anyhow::Result<String> {
        let mut h = Sha256::new();
        h.update(stage.name().as_bytes());
        h.update([0]);
        h.update(serde_json::to_string(config)?.as_bytes());
        for p in inputs {
            h.update([0]);
            h.update(file_hash(p)?.as_bytes());
        }
        Ok(sha256_hex(&h.finalize()))
    }

    fn is_fresh(&self, stage: Stage, key: &str) -> bool {
        let m = self.manifest.lock().unwrap();
        let Some(entry) = m.stages.get(stage.name()) else { return false };
        entry.key == key
            && entry.outputs.iter().all(|(rel, hash)| file_hash(&self.path(rel)).is_ok_and(|h| &h == hash))
    }

    pub fn write_timings(&self) -> anyhow::Result<()> {
        let path = self.path(TIMINGS);
        ensure_parent(&path)?;
        write_json(&self.timings(), &path)
    }
}

// ---------------------------------------------------------------- run

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Download the corpus when the raw CSV is missing.
    pub live: bool,
    /// Ignore the cache.
    pub force: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: ComparisonReport,
    pub timings: Vec<StageTiming>,
}

/// Execute the whole pipeline into `cfg.paths.out`. The config must already
/// be validated.
pub fn run_pipeline(cfg: &PipelineConfig, opts: &RunOptions) -> Result<RunOutcome, StageError> {
    let runner = Runner::new(&cfg.paths.out, opts.force).stage(Stage::Fetch)?;
    let result = run_stages(cfg, opts, &runner);
    if let Err(e) = runner.write_timings() {
        log::warn!("could not write timings: {e:#}");
    }
    result.map(|report| RunOutcome { report, timings: runner.timings() })
}

fn run_stages(cfg: &PipelineConfig, opts: &RunOptions, r: &Runner) -> Result<ComparisonReport, StageError> {
    let raw = cfg.paths.raw.clone();
    if raw.exists() {
        r.mark_cached(Stage::Fetch);
    } else if opts.live {
        let start = Instant::now();
        let records = fetch_live(&cfg.query, &cfg.fetch).stage(Stage::Fetch)?;
        ensure_parent(&raw).stage(Stage::Fetch)?;
        write_corpus_csv(&records, &raw).stage(Stage::Fetch)?;
        r.record(Stage::Fetch, false, start.elapsed());
    } else {
        return Err(StageError {
            stage: Stage::Fetch,
            source: anyhow!("raw corpus {} not found; pass --live to download it", raw.display()),
        });
    }

    let (curated, report_csv) = (r.path(CURATED), r.path(CURATION_REPORT));
    r.stage(Stage::Curate, &cfg.curation, &[&raw], &[CURATED, CURATION_REPORT], || {
        curate_file(&raw, &cfg.curation.keywords, &curated, &report_csv).map(|_| ())
    })?;

    let prep_dir = r.path(PREP_DIR);
    let prep_outputs: Vec<String> = Prepared::FILES.iter().map(|f| format!("{PREP_DIR}/{f}")).collect();
    let prep_outputs: Vec<&str> = prep_outputs.iter().map(String::as_str).collect();
    let mut prep_inputs: Vec<&Path> = vec![&curated];
    if let Some(p) = &cfg.paths.stoplist {
        prep_inputs.push(p);
    }
    r.stage(Stage::Prep, &(&cfg.prep, &cfg.ngram), &prep_inputs, &prep_outputs, || {
        prep_file(&curated, &cfg.prep, &cfg.ngram, cfg.paths.stoplist.as_deref(), &prep_dir).map(|_| ())
    })?;
    let prepared = Prepared::read(&prep_dir).stage(Stage::Prep)?;
    let prep_paths: Vec<PathBuf> = Prepared::FILES.iter().map(|f| prep_dir.join(f)).collect();
    let prep_refs: Vec<&Path> = prep_paths.iter().map(PathBuf::as_path).collect();

    let (lda, clusters) = std::thread::scope(|s| {
        let lda = s.spawn(|| lda_track(cfg, r, &prepared, &prep_refs));
        let clusters = embed_track(cfg, r, &prepared, &prep_refs);
        (lda.join().expect("LDA track panicked"), clusters)
    });
    let (lda, model) = lda?;
    let (clusters, topics, embeddings) = clusters?;

    let labels_path = r.path(TOPIC_LABELS);
    let model_path = r.path(LDA_MODEL);
    let viz_outputs = [HEATMAP_CSV, HEATMAP_SVG, DENDROGRAM_JSON, DENDROGRAM_SVG, INTERTOPIC_CSV];
    let mut viz_inputs: Vec<&Path> = vec![&labels_path, &model_path];
    viz_inputs.extend(&prep_refs[3..]);
    let emb_path = embeddings.clone();
    if cfg.heatmap_basis == HeatmapBasis::Centroid {
        viz_inputs.push(&emb_path);
    }
    let viz_dir = r.path("viz");
    r.stage(Stage::Viz, &cfg.heatmap_basis, &viz_inputs, &viz_outputs, || {
        let labels = ClusterLabels::read_csv(&labels_path)?.labels;
        let emb = match cfg.heatmap_basis {
            HeatmapBasis::Centroid => Some(load_embeddings::<f64>(&emb_path, None)?),
            HeatmapBasis::Ctfidf => None,
        };
        viz_export(
            &VizInputs { labels: &labels, prepared: &prepared, embeddings: emb.as_ref(), basis: cfg.heatmap_basis, model: Some(&model) },
            &viz_dir,
        )?;
        Ok(())
    })?;
    // Read back from the written heatmap so cached and fresh runs agree.
    let max_sim = max_off_diagonal(&r.path(HEATMAP_CSV)).stage(Stage::Viz)?;

    let curation = read_curation_report(&report_csv).stage(Stage::Curate)?;
    let report = ComparisonReport {
        documents: prepared.bow.len(),
        curation,
        lda: LdaReport { selected_k: lda.k, coherence: lda.coherence, heldout_loglik: lda.heldout_loglik },
        clusterer: ClustererReport {
            n_clusters: clusters.n_clusters,
            n_topics: topics,
            outlier_ratio_before: clusters.outlier_ratio_before,
            outlier_ratio_after: clusters.outlier_ratio_after,
            max_topic_similarity: max_sim,
        },
    };
    write_json(&report, &r.path(REPORT_JSON)).stage(Stage::Viz)?;
    std::fs::write(r.path(REPORT_TXT), report.table()).stage(Stage::Viz)?;
    Ok(report)
}

fn lda_track(cfg: &PipelineConfig, r: &Runner, p: &Prepared, prep: &[&Path]) -> Result<(LdaSummary, LdaModel), StageError> {
    let sweep_key = (&cfg.lda, &cfg.coherence, cfg.seed);
    r.stage(Stage::LdaSweep, &sweep_key, &prep[..3], &[SWEEP_CSV, SWEEP_JSON], || {
        let result = lda_sweep(p, &cfg.lda, &cfg.coherence, cfg.seed);
        ensure_parent(&r.path(SWEEP_CSV))?;
        std::fs::write(r.path(SWEEP_CSV), result.to_csv())?;
        write_json(&result, &r.path(SWEEP_JSON))
    })?;
    let sweep_path = r.path(SWEEP_JSON);
    let mut inputs = prep[..3].to_vec();
    inputs.push(&sweep_path);
    r.stage(Stage::LdaTrain, &sweep_key, &inputs, &[LDA_MODEL, LDA_TOPICS], || {
        let result: SweepResult = read_json(&sweep_path)?;
        let k = match cfg.lda.k.or(result.selected_k) {
            Some(k) => k,
            None => bail!("every K in the sweep failed"),
        };
        let (model, mut summary) = lda_train(p, &cfg.lda, &cfg.coherence, k, cfg.seed)?;
        summary.heldout_loglik = result.row(k).and_then(|row| row.heldout_loglik);
        model.save(&r.path(LDA_MODEL), &vocab_fingerprint(p.vocab.tokens()))?;
        write_json(&summary, &r.path(LDA_TOPICS))
    })?;
    let summary: LdaSummary = read_json(&r.path(LDA_TOPICS)).stage(Stage::LdaTrain)?;
    let model = LdaModel::load(&r.path(LDA_MODEL), Some(&vocab_fingerprint(p.vocab.tokens()))).stage(Stage::LdaTrain)?;
    Ok((summary, model))
}

type EmbedTrack = (ClusterSummary, usize, PathBuf);

fn embed_track(cfg: &PipelineConfig, r: &Runner, p: &Prepared, prep: &[&Path]) -> Result<EmbedTrack, StageError> {
    let check = r.path(EMBED_CHECK);
    let embeddings = match &cfg.paths.embeddings {
        Some(src) => {
            r.stage(Stage::Embed, &"file", &[src], &[EMBED_CHECK], || {
                ensure_parent(&check)?;
                write_json(&embed_check(src, Some(p.bow.len()))?, &check)
            })?;
            src.clone()
        }
        None => {
            let out = r.path(FALLBACK_EMBEDDINGS);
            r.stage(Stage::Embed, &(&cfg.embed, cfg.seed), &prep[..3], &[EMBED_CHECK, FALLBACK_EMBEDDINGS], || {
                let emb = fallback_embed::<f64>(&p.bow, cfg.embed.fallback_dim, cfg.seed)?;
                ensure_parent(&out)?;
                write_embeddings(&emb, &out)?;
                let c = EmbedCheck { source: "fallback".into(), rows: emb.nrows(), dim: emb.ncols(), sha256: file_hash(&out)? };
                write_json(&c, &check)
            })?;
            out
        }
    };

    let umap_cfg = UmapConfig { seed: cfg.seed, ..cfg.umap.clone() };
    let reduced = r.path(REDUCED);
    r.stage(Stage::Reduce, &umap_cfg, &[&embeddings], &[REDUCED], || reduce_file(&embeddings, &umap_cfg, &reduced))?;

    let reassign = cfg.reassign.enabled.then_some(cfg.reassign.max_distance_quantile);
    let summary_path = r.path(CLUSTER_SUMMARY);
    let (labels, raw_labels, tree) = (r.path(CLUSTER_LABELS), r.path(HDBSCAN_LABELS), r.path(CONDENSED_TREE));
    r.stage(
        Stage::Cluster,
        &(&cfg.hdbscan, reassign),
        &[&reduced],
        &[CLUSTER_LABELS, HDBSCAN_LABELS, CONDENSED_TREE, CLUSTER_SUMMARY],
        || {
            let out = ClusterOutputs { labels: &labels, raw_labels: Some(&raw_labels), tree: Some(&tree) };
            let s = cluster_file(&reduced, &cfg.hdbscan, reassign, &out)?;
            write_json(&s, &summary_path)
        },
    )?;
    let summary: ClusterSummary = read_json(&summary_path).stage(Stage::Cluster)?;

    let summaries = r.path(TOPIC_SUMMARIES);
    let mut inputs = vec![labels.as_path(), reduced.as_path()];
    inputs.extend(&prep[3..]);
    r.stage(
        Stage::Topics,
        &(cfg.merge_threshold, &cfg.topics),
        &inputs,
        &[TOPIC_LABELS, TOPIC_MERGES, TOPIC_SUMMARIES],
        || {
            let l = ClusterLabels::read_csv(&labels)?.labels;
            let points = read_matrix_tsv::<f64>(&reduced)?;
            let (merged, out) = build_topics(&l, p, &points, cfg.merge_threshold, cfg.topics.top_terms, cfg.topics.representative_docs)?;
            write_labels(&merged, &r.path(TOPIC_LABELS))?;
            write_json(&out.merges, &r.path(TOPIC_MERGES))?;
            write_json(&out.summaries, &summaries)
        },
    )?;
    let topics: Vec<topicscope_core::represent::TopicSummary> = read_json(&summaries).stage(Stage::Topics)?;
    Ok((summary, topics.len(), embeddings))
}

fn max_off_diagonal(heatmap: &Path) -> anyhow::Result<Option<f64>> {
    let text = std::fs::read_to_string(heatmap)?;
    let mut best = None::<f64>;
    for (i, line) in text.lines().skip(1).enumerate() {
        for (j, cell) in line.split(',').skip(1).enumerate() {
            if i != j {
                let v: f64 = cell.parse()?;
                best = Some(best.map_or(v, |b| b.max(v)));
            }
        }
    }
    Ok(best)
}

pub fn read_curation_report(path: &Path) -> anyhow::Result<CurationReport> {
    let mut rdr = csv::Reader::from_path(path)?;
    let steps = rdr.deserialize().collect::<Result<Vec<_>, _>>()?;
    Ok(CurationReport { steps })
}
