//! Pipeline configuration: one TOML document with a section per stage.
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use topicscope_core::cluster::HdbscanConfig;
use topicscope_core::coherence::CoherenceConfig;
use topicscope_core::curate::ChildKeywordSet;
use topicscope_core::embed::UmapConfig;
use topicscope_core::ingest::{FetchSession, QuerySpec};
use topicscope_core::lda::LdaHyperparams;
use topicscope_core::textprep::{NgramConfig, TokenizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HeatmapBasis {
    /// Cosine similarity of c-TF-IDF rows.
    #[default]
    Ctfidf,
    /// Cosine similarity of cluster centroids in the embedding space.
    Centroid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Corpus CSV; written by `fetch --live` when absent.
    pub raw: PathBuf,
    /// Precomputed sentence embeddings; the TF-IDF projection is used when unset.
    pub embeddings: Option<PathBuf>,
    pub out: PathBuf,
    /// Replaces the built-in standard stop list.
    pub stoplist: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            raw: PathBuf::from("raw.csv"),
            embeddings: None,
            out: PathBuf::from("out"),
            stoplist: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Curation {
    pub keywords: ChildKeywordSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Prep {
    pub tokenizer: TokenizerConfig,
    pub min_df: usize,
    pub max_df: f64,
    /// Extra domain stop words on top of the built-in list.
    pub extra_stopwords: Vec<String>,
}

impl Default for Prep {
    fn default() -> Self {
        Prep {
            tokenizer: TokenizerConfig::default(),
            min_df: 5,
            max_df: 0.95,
            extra_stopwords: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Lda {
    pub k_min: usize,
    pub k_max: usize,
    /// Final topic count; the sweep's coherence peak when unset.
    pub k: Option<usize>,
    /// Symmetric document prior; `50 / K` when unset.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    /// Every n-th document is held out for the sweep's log-likelihood column.
    pub heldout_every: usize,
}

impl Default for Lda {
    fn default() -> Self {
        let h = LdaHyperparams::default();
        Lda {
            k_min: 10,
            k_max: 30,
            k: None,
            alpha: h.alpha,
            beta: h.beta,
            iterations: h.iterations,
            burn_in: h.burn_in,
            heldout_every: 10,
        }
    }
}

impl Lda {
    pub fn hyper(&self, k: usize, seed: u64) -> LdaHyperparams {
        LdaHyperparams {
            k,
            alpha: self.alpha,
            beta: self.beta,
            iterations: self.iterations,
            burn_in: self.burn_in,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Embed {
    pub fallback_dim: usize,
}

impl Default for Embed {
    fn default() -> Self {
        Embed { fallback_dim: 384 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Reassign {
    pub enabled: bool,
    pub max_distance_quantile: f64,
}

impl Default for Reassign {
    fn default() -> Self {
        Reassign {
            enabled: true,
            max_distance_quantile: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Topics {
    pub top_terms: usize,
    pub representative_docs: usize,
}

impl Default for Topics {
    fn default() -> Self {
        Topics {
            top_terms: 10,
            representative_docs: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Drives every seeded stage: sweep and final LDA, fallback projection, UMAP.
    pub seed: u64,
    pub merge_threshold: f64,
    pub heatmap_basis: HeatmapBasis,
    pub paths: Paths,
    pub query: QuerySpec,
    pub fetch: FetchSession,
    pub curation: Curation,
    pub prep: Prep,
    pub ngram: NgramConfig,
    pub lda: Lda,
    pub coherence: CoherenceConfig,
    pub embed: Embed,
    pub umap: UmapConfig,
    pub hdbscan: HdbscanConfig,
    pub reassign: Reassign,
    pub topics: Topics,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            merge_threshold: 0.85,
            heatmap_basis: HeatmapBasis::default(),
            paths: Paths::default(),
            query: QuerySpec::default(),
            fetch: FetchSession::default(),
            curation: Curation::default(),
            prep: Prep::default(),
            ngram: NgramConfig::default(),
            lda: Lda::default(),
            coherence: CoherenceConfig::default(),
            embed: Embed::default(),
            umap: UmapConfig::default(),
            hdbscan: HdbscanConfig::default(),
            reassign: Reassign::default(),
            topics: Topics::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Dotted field path, empty for document-level problems.
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub errors: Vec<Diagnostic>,
    pub warnings: Vec<Diagnostic>,
}

impl Diagnostics {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(Diagnostic { path: path.into(), message: message.into() });
    }

    fn warn(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(Diagnostic { path: path.into(), message: message.into() });
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
}

/// Parse without validating. Unknown keys become warnings; syntax and type
/// errors become error diagnostics.
pub fn parse_config(text: &str) -> (Option<PipelineConfig>, Diagnostics) {
    let mut diags = Diagnostics::default();
    let de = toml::Deserializer::new(text);
    let mut unknown = Vec::new();
    let parsed: Result<PipelineConfig, _> = serde_ignored::deserialize(de, |p| unknown.push(p.to_string()));
    for p in unknown {
        diags.warn(p, "unknown key ignored");
    }
    match parsed {
        Ok(cfg) => {
            for seeded in ["lda.seed", "umap.seed"] {
                let (table, key) = seeded.split_once('.').unwrap();
                let value = table_value(text, table, key);
                if value.is_some_and(|v| v.as_integer() != Some(cfg.seed as i64)) {
                    diags.warn(seeded, "ignored; the top-level seed drives every stage");
                }
            }
            (Some(cfg), diags)
        }
        Err(e) => {
            diags.error("", e.message().trim().to_string());
            (None, diags)
        }
    }
}

fn table_value(text: &str, table: &str, key: &str) -> Option<toml::Value> {
    let v = text.parse::<toml::Table>().ok()?;
    v.get(table)?.as_table()?.get(key).cloned()
}

impl PipelineConfig {
    /// Every violated invariant, with dotted field paths.
    pub fn check(&self, diags: &mut Diagnostics) {
        let sect = |d: &mut Diagnostics, s: &str, v: Vec<(&'static str, String)>| {
            for (f, m) in v {
                d.error(format!("{s}.{f}"), m);
            }
        };
        sect(diags, "query", self.query.violations());
        if let Err(e) = self.fetch.validate() {
            diags.error("fetch", strip_prefix(&e.to_string()));
        }
        if let Err(e) = self.curation.keywords.validate() {
            diags.error("curation.keywords", strip_prefix(&e.to_string()));
        }
        if let Err(e) = self.prep.tokenizer.validate() {
            diags.error("prep.tokenizer", strip_prefix(&e.to_string()));
        }
        if self.prep.min_df == 0 {
            diags.error("prep.min_df", "must be at least 1");
        }
        if !(self.prep.max_df > 0.0 && self.prep.max_df <= 1.0) {
            diags.error("prep.max_df", format!("must be in (0, 1], got {}", self.prep.max_df));
        }
        if let Err(e) = self.ngram.validate() {
            diags.error("ngram", strip_prefix(&e.to_string()));
        }
        let lda = &self.lda;
        if lda.k_min < 2 {
            diags.error("lda.k_min", "must be at least 2");
        }
        if lda.k_min > lda.k_max {
            diags.error("lda.k_min", format!("must not exceed k_max ({} > {})", lda.k_min, lda.k_max));
        }
        if let Some(k) = lda.k {
            if !(lda.k_min..=lda.k_max).contains(&k) {
                diags.error("lda.k", format!("must lie in [k_min, k_max], got {k}"));
            }
        }
        if lda.heldout_every < 2 {
            diags.error("lda.heldout_every", "must be at least 2");
        }
        let mut seen = BTreeSet::new();
        for k in [lda.k_min, lda.k_max] {
            for (f, m) in lda.hyper(k.max(1), self.seed).violations() {
                if f != "k" && seen.insert((f, m.clone())) {
                    diags.error(format!("lda.{f}"), m);
                }
            }
        }
        sect(diags, "coherence", self.coherence.violations());
        if self.embed.fallback_dim == 0 {
            diags.error("embed.fallback_dim", "must be at least 1");
        }
        sect(diags, "umap", self.umap.violations());
        sect(diags, "hdbscan", self.hdbscan.violations());
        let q = self.reassign.max_distance_quantile;
        if !(0.0..=1.0).contains(&q) {
            diags.error("reassign.max_distance_quantile", format!("must be in [0, 1], got {q}"));
        }
        if !(self.merge_threshold > 0.0 && self.merge_threshold <= 1.0) {
            diags.error("merge_threshold", format!("must be in (0, 1], got {}", self.merge_threshold));
        }
        if self.topics.top_terms == 0 {
            diags.error("topics.top_terms", "must be at least 1");
        }
        let mut named: Vec<(&str, &Path)> = vec![("paths.raw", &self.paths.raw), ("paths.out", &self.paths.out)];
        if let Some(p) = &self.paths.embeddings {
            named.push(("paths.embeddings", p));
        }
        if let Some(p) = &self.paths.stoplist {
            named.push(("paths.stoplist", p));
        }
        for (i, (a, pa)) in named.iter().enumerate() {
            for (b, pb) in &named[i + 1..] {
                if pa == pb {
                    diags.error(*b, format!("must differ from {a}"));
                }
            }
        }
    }

    /// Resolve relative paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.raw);
        fix(&mut self.paths.out);
        if let Some(p) = self.paths.embeddings.as_mut() {
            fix(p);
        }
        if let Some(p) = self.paths.stoplist.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut d = Diagnostics::default();
        self.check(&mut d);
        if d.is_valid() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(d.errors))
        }
    }
}

fn strip_prefix(msg: &str) -> String {
    for p in ["invalid configuration: ", "invalid fetch session: ", "invalid child keyword set: "] {
        if let Some(rest) = msg.strip_prefix(p) {
            return rest.to_string();
        }
    }
    msg.to_string()
}

/// Read and check a config file. Returns the diagnostics even when the
/// document does not parse.
pub fn validate_config(path: &Path) -> Result<(Option<PipelineConfig>, Diagnostics), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let (cfg, mut diags) = parse_config(&text);
    if let Some(c) = &cfg {
        c.check(&mut diags);
    }
    Ok((cfg, diags))
}

/// Load, validate and resolve paths; warnings are logged.
pub fn load_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let (cfg, diags) = validate_config(path)?;
    for w in &diags.warnings {
        log::warn!("config: {w}");
    }
    match cfg {
        Some(mut c) if diags.is_valid() => {
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            c.resolve_paths(&base);
            Ok(c)
        }
        _ => Err(ConfigError::Invalid(diags.errors)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(text: &str) -> Diagnostics {
        let (cfg, mut d) = parse_config(text);
        if let Some(c) = cfg {
            c.check(&mut d);
        }
        d
    }

    #[test]
    fn defaults_are_valid() {
        let d = check("");
        assert!(d.is_valid(), "{:?}", d.errors);
        assert!(d.warnings.is_empty());
        let text = toml::to_string(&PipelineConfig::default()).unwrap();
        let (back, d) = parse_config(&text);
        assert!(d.warnings.is_empty(), "{:?}", d.warnings);
        assert_eq!(back.unwrap(), PipelineConfig::default());
    }

    #[test]
    fn reports_every_violation_with_paths() {
        let d = check("merge_threshold = 2.0\n[lda]\nk_min = 20\nk_max = 10\n[umap]\nmin_dist = 0.0\n");
        let paths: Vec<&str> = d.errors.iter().map(|e| e.path.as_str()).collect();
        assert!(paths.contains(&"lda.k_min"));
        assert!(paths.contains(&"umap.min_dist"));
        assert!(paths.contains(&"merge_threshold"));
    }

    #[test]
    fn unknown_keys_warn() {
        let d = check("colour = \"blue\"\n[umap]\nwarp = 9\n");
        assert!(d.is_valid());
        let paths: Vec<&str> = d.warnings.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(paths, vec!["colour", "umap.warp"]);
    }

    #[test]
    fn type_errors_are_errors() {
        let d = check("[umap]\nn_neighbors = \"eight\"\n");
        assert!(!d.is_valid());
        assert!(d.errors[0].message.contains("n_neighbors") || d.errors[0].message.contains("invalid type"));
    }

    #[test]
    fn paths_must_differ() {
        let d = check("[paths]\nraw = \"a\"\nout = \"a\"\n");
        assert_eq!(d.errors[0].path, "paths.out");
    }

    #[test]
    fn component_seed_warns() {
        let d = check("[umap]\nseed = 3\n");
        assert!(d.is_valid());
        assert_eq!(d.warnings[0].path, "umap.seed");
        assert!(check("seed = 3\n[umap]\nseed = 3\n").warnings.is_empty());
    }
}
