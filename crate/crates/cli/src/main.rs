use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use topicscope::config::{load_config, validate_config, ConfigError, HeatmapBasis, PipelineConfig};
use topicscope::pipeline::{
    build_topics, cluster_file, curate_file, embed_check, fetch_live, lda_sweep, lda_train, prep_file, reduce_file,
    run_pipeline, viz_export, write_labels, ClusterOutputs, EmbedCheck, Prepared, RunOptions, Stage, StageContext,
    StageError, VizInputs,
};
use topicscope_core::cluster::ClusterLabels;
use topicscope_core::embed::{fallback_embed, load_embeddings, read_matrix_tsv, write_embeddings, Metric};
use topicscope_core::ingest::{build_query, write_corpus_csv, QuerySpec};
use topicscope_core::lda::LdaModel;
use topicscope_core::util::vocab_fingerprint;

const EXIT_GENERIC: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "topicscope", version, about = "Topic discovery over PubMed abstracts with LDA and embedding clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArg {
    /// Pipeline config supplying defaults for unset flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config file and list every problem.
    Validate { config: PathBuf },
    /// Run the full pipeline.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Download the corpus when the raw CSV is missing.
        #[arg(long)]
        live: bool,
        /// Recompute every stage.
        #[arg(long)]
        force: bool,
    },
    /// Build the PubMed query; with --live, download the matching records.
    Fetch {
        #[arg(long)]
        query_file: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        live: bool,
    },
    /// Filter a raw corpus to English, child-related records.
    Curate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Tokenize and build the vocabulary, bag-of-words and n-gram counts.
    Prep {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        stoplist: Option<PathBuf>,
        #[arg(long)]
        min_df: Option<usize>,
        #[arg(long)]
        max_df: Option<f64>,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Train one LDA model per K and score coherence and held-out likelihood.
    LdaSweep {
        #[arg(long)]
        prep: PathBuf,
        #[arg(long)]
        kmin: Option<usize>,
        #[arg(long)]
        kmax: Option<usize>,
        #[command(flatten)]
        lda: LdaFlags,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Train the final LDA model (seed + K, as in the sweep).
    LdaTrain {
        #[arg(long)]
        prep: PathBuf,
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        lda: LdaFlags,
        #[arg(long)]
        out: PathBuf,
        /// Topic words and coherence as JSON.
        #[arg(long)]
        topics: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Verify an embedding file against the corpus, or write the fallback embedding.
    EmbedCheck {
        #[arg(long)]
        prep: PathBuf,
        #[arg(long, conflicts_with = "fallback_out")]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        fallback_out: Option<PathBuf>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// UMAP reduction of an embedding file.
    Reduce {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        neighbors: Option<usize>,
        #[arg(long)]
        components: Option<usize>,
        #[arg(long)]
        min_dist: Option<f64>,
        #[arg(long)]
        metric: Option<Metric>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// HDBSCAN over reduced coordinates, then outlier reassignment.
    Cluster {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        min_cluster_size: Option<usize>,
        #[arg(long)]
        min_samples: Option<usize>,
        #[arg(long)]
        reassign_quantile: Option<f64>,
        #[arg(long)]
        no_reassign: bool,
        /// Labels before reassignment.
        #[arg(long)]
        raw_labels: Option<PathBuf>,
        /// Condensed cluster tree as JSON.
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Merge similar clusters and summarise topics by c-TF-IDF.
    Topics {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        prep: PathBuf,
        #[arg(long)]
        reduced: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Heatmap, dendrogram and intertopic-map data.
    VizExport {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        prep: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        basis: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArg,
    },
}

#[derive(Args, Clone, Default)]
struct LdaFlags {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Config(ConfigError),
    Stage(StageError),
    Other(anyhow::Error),
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        Failure::Stage(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_GENERIC)
        }
    }
}

fn base_config(arg: &ConfigArg) -> Result<PipelineConfig, Failure> {
    match &arg.config {
        Some(p) => Ok(load_config(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn check(cfg: &PipelineConfig) -> Result<(), Failure> {
    cfg.validate().map_err(Failure::Config)
}

impl LdaFlags {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if self.alpha.is_some() {
            cfg.lda.alpha = self.alpha;
        }
        if let Some(b) = self.beta {
            cfg.lda.beta = b;
        }
        if let Some(i) = self.iterations {
            cfg.lda.iterations = i;
        }
        if let Some(b) = self.burn_in {
            cfg.lda.burn_in = b;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
    }
}

fn dispatch(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Validate { config } => {
            let (_, diags) = validate_config(&config)?;
            for w in &diags.warnings {
                eprintln!("warning: {w}");
            }
            for e in &diags.errors {
                eprintln!("error: {e}");
            }
            if diags.is_valid() {
                println!("{}: valid", config.display());
                Ok(0)
            } else {
                Ok(EXIT_CONFIG)
            }
        }
        Command::Run { config, out, seed, live, force } => {
            let mut cfg = load_config(&config)?;
            if let Some(o) = out {
                cfg.paths.out = o;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            check(&cfg)?;
            let outcome = run_pipeline(&cfg, &RunOptions { live, force })?;
            print!("{}", outcome.report.table());
            println!();
            println!("{:<12} {:>6} {:>10}", "stage", "cache", "seconds");
            for t in &outcome.timings {
                println!("{:<12} {:>6} {:>10.2}", t.stage, if t.cache_hit { "hit" } else { "miss" }, t.seconds);
            }
            Ok(0)
        }
        Command::Fetch { query_file, out, live } => {
            let query: QuerySpec = match query_file {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|source| ConfigError::Io { path: p.clone(), source })?;
                    toml::from_str(&text).map_err(|e| {
                        Failure::Config(ConfigError::Invalid(vec![topicscope::config::Diagnostic {
                            path: "query".into(),
                            message: e.message().to_string(),
                        }]))
                    })?
                }
                None => QuerySpec::default(),
            };
            let term = build_query(&query).stage(Stage::Fetch)?;
            println!("{term}");
            if live {
                let records = fetch_live(&query, &PipelineConfig::default().fetch).stage(Stage::Fetch)?;
                write_corpus_csv(&records, &out).stage(Stage::Fetch)?;
                println!("{} records written to {}", records.len(), out.display());
            }
            Ok(0)
        }
        Command::Curate { input, out, report, cfg } => {
            let c = base_config(&cfg)?;
            let rep = curate_file(&input, &c.curation.keywords, &out, &report).stage(Stage::Curate)?;
            for s in &rep.steps {
                println!("{:<22} removed {:>6}  remaining {:>6}", s.step, s.removed, s.remaining);
            }
            Ok(0)
        }
        Command::Prep { input, out_dir, stoplist, min_df, max_df, cfg } => {
            let mut c = base_config(&cfg)?;
            if let Some(m) = min_df {
                c.prep.min_df = m;
            }
            if let Some(m) = max_df {
                c.prep.max_df = m;
            }
            check(&c)?;
            let stop = stoplist.or(c.paths.stoplist.clone().filter(|_| cfg.config.is_some()));
            let p = prep_file(&input, &c.prep, &c.ngram, stop.as_deref(), &out_dir).stage(Stage::Prep)?;
            println!("{} documents, {} terms, {} n-grams", p.bow.len(), p.vocab.len(), p.ngram_vocab.len());
            Ok(0)
        }
        Command::LdaSweep { prep, kmin, kmax, lda, out, cfg } => {
            let mut c = base_config(&cfg)?;
            lda.apply(&mut c);
            if let Some(k) = kmin {
                c.lda.k_min = k;
            }
            if let Some(k) = kmax {
                c.lda.k_max = k;
            }
            check(&c)?;
            let p = Prepared::read(&prep).stage(Stage::LdaSweep)?;
            let result = lda_sweep(&p, &c.lda, &c.coherence, c.seed);
            std::fs::write(&out, result.to_csv()).stage(Stage::LdaSweep)?;
            print!("{}", result.to_csv());
            match result.selected_k {
                Some(k) => println!("selected K = {k}"),
                None => return Err(Failure::Stage(StageError { stage: Stage::LdaSweep, source: anyhow::anyhow!("every K failed") })),
            }
            Ok(0)
        }
        Command::LdaTrain { prep, k, lda, out, topics, cfg } => {
            let mut c = base_config(&cfg)?;
            lda.apply(&mut c);
            c.lda.k_min = c.lda.k_min.min(k);
            c.lda.k_max = c.lda.k_max.max(k);
            check(&c)?;
            let p = Prepared::read(&prep).stage(Stage::LdaTrain)?;
            let (model, summary) = lda_train(&p, &c.lda, &c.coherence, k, c.seed).stage(Stage::LdaTrain)?;
            model.save(&out, &vocab_fingerprint(p.vocab.tokens())).stage(Stage::LdaTrain)?;
            if let Some(t) = topics {
                let json = serde_json::to_string_pretty(&summary).map_err(|e| Failure::Other(e.into()))?;
                std::fs::write(t, json + "\n").stage(Stage::LdaTrain)?;
            }
            println!("K = {k}, C_v = {:.4}", summary.coherence);
            for t in &summary.topics {
                println!("{:>3}  {}", t.topic, t.words.join(", "));
            }
            Ok(0)
        }
        Command::EmbedCheck { prep, embeddings, fallback_out, dim, seed, cfg } => {
            let c = base_config(&cfg)?;
            let p = Prepared::read(&prep).stage(Stage::Embed)?;
            let check: EmbedCheck = match (embeddings, fallback_out) {
                (Some(e), _) => embed_check(&e, Some(p.bow.len())).stage(Stage::Embed)?,
                (None, Some(out)) => {
                    let dim = dim.unwrap_or(c.embed.fallback_dim);
                    let emb = fallback_embed::<f64>(&p.bow, dim, seed.unwrap_or(c.seed)).stage(Stage::Embed)?;
                    write_embeddings(&emb, &out).stage(Stage::Embed)?;
                    embed_check(&out, Some(p.bow.len())).stage(Stage::Embed)?
                }
                (None, None) => {
                    return Err(Failure::Other(anyhow::anyhow!("pass --embeddings or --fallback-out")));
                }
            };
            println!("{} rows x {} dims, sha256 {}", check.rows, check.dim, check.sha256);
            Ok(0)
        }
        Command::Reduce { input, neighbors, components, min_dist, metric, epochs, seed, out, cfg } => {
            let mut c = base_config(&cfg)?;
            let u = &mut c.umap;
            if let Some(v) = neighbors {
                u.n_neighbors = v;
            }
            if let Some(v) = components {
                u.n_components = v;
            }
            if let Some(v) = min_dist {
                u.min_dist = v;
            }
            if let Some(v) = metric {
                u.metric = v;
            }
            if let Some(v) = epochs {
                u.epochs = v;
            }
            if let Some(v) = seed {
                c.seed = v;
            }
            check(&c)?;
            c.umap.seed = c.seed;
            reduce_file(&input, &c.umap, &out).stage(Stage::Reduce)?;
            Ok(0)
        }
        Command::Cluster { input, min_cluster_size, min_samples, reassign_quantile, no_reassign, raw_labels, tree, out, cfg } => {
            let mut c = base_config(&cfg)?;
            if let Some(v) = min_cluster_size {
                c.hdbscan.min_cluster_size = v;
            }
            if min_samples.is_some() {
                c.hdbscan.min_samples = min_samples;
            }
            if let Some(q) = reassign_quantile {
                c.reassign.max_distance_quantile = q;
            }
            if no_reassign {
                c.reassign.enabled = false;
            }
            check(&c)?;
            let reassign = c.reassign.enabled.then_some(c.reassign.max_distance_quantile);
            let outputs = ClusterOutputs { labels: &out, raw_labels: raw_labels.as_deref(), tree: tree.as_deref() };
            let s = cluster_file(&input, &c.hdbscan, reassign, &outputs).stage(Stage::Cluster)?;
            println!(
                "{} clusters, outlier ratio {:.4} -> {:.4} ({} reassigned)",
                s.n_clusters, s.outlier_ratio_before, s.outlier_ratio_after, s.reassigned
            );
            Ok(0)
        }
        Command::Topics { labels, prep, reduced, threshold, out_dir, cfg } => {
            let mut c = base_config(&cfg)?;
            if let Some(t) = threshold {
                c.merge_threshold = t;
            }
            check(&c)?;
            let run = || -> anyhow::Result<usize> {
                let l = ClusterLabels::read_csv(&labels)?.labels;
                let p = Prepared::read(&prep)?;
                let points = read_matrix_tsv::<f64>(&reduced)?;
                let (merged, out) = build_topics(&l, &p, &points, c.merge_threshold, c.topics.top_terms, c.topics.representative_docs)?;
                std::fs::create_dir_all(&out_dir)?;
                write_labels(&merged, &out_dir.join("labels.csv"))?;
                std::fs::write(out_dir.join("merges.json"), serde_json::to_string_pretty(&out.merges)? + "\n")?;
                std::fs::write(out_dir.join("summaries.json"), serde_json::to_string_pretty(&out.summaries)? + "\n")?;
                for s in &out.summaries {
                    let terms: Vec<&str> = s.top_terms.iter().take(5).map(|(t, _)| t.as_str()).collect();
                    println!("{:>3} ({:>4} docs)  {}", s.topic, s.size, terms.join(", "));
                }
                Ok(out.n_topics)
            };
            let n = run().stage(Stage::Topics)?;
            println!("{n} topics");
            Ok(0)
        }
        Command::VizExport { labels, prep, model, embeddings, basis, out_dir, cfg } => {
            let mut c = base_config(&cfg)?;
            if let Some(b) = basis {
                c.heatmap_basis = match b.as_str() {
                    "ctfidf" => HeatmapBasis::Ctfidf,
                    "centroid" => HeatmapBasis::Centroid,
                    other => return Err(Failure::Other(anyhow::anyhow!("unknown basis {other:?} (ctfidf, centroid)"))),
                };
            }
            let run = || -> anyhow::Result<Option<f64>> {
                let l = ClusterLabels::read_csv(&labels)?.labels;
                let p = Prepared::read(&prep)?;
                let m = match &model {
                    Some(path) => Some(LdaModel::load(path, Some(&vocab_fingerprint(p.vocab.tokens())))?),
                    None => None,
                };
                let emb = match &embeddings {
                    Some(path) => Some(load_embeddings::<f64>(path, Some(l.len()))?),
                    None => None,
                };
                let inputs = VizInputs { labels: &l, prepared: &p, embeddings: emb.as_ref(), basis: c.heatmap_basis, model: m.as_ref() };
                viz_export(&inputs, &out_dir)
            };
            let max = run().stage(Stage::Viz)?;
            if let Some(v) = max {
                println!("largest off-diagonal similarity {v:.4}");
            }
            println!("figures written to {}", display(&out_dir));
            Ok(0)
        }
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
