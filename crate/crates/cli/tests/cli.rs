use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn topicscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topicscope"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn topicscope")
}

fn sample(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sample").join(name)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A cheap configuration over the bundled corpus: fallback embeddings, a
/// two-point sweep and short schedules.
fn quick_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        r#"seed = 3
[paths]
raw = "{raw}"
out = "out"
[lda]
k_min = 3
k_max = 4
iterations = 20
burn_in = 5
[umap]
n_components = 2
epochs = 50
{extra}
"#,
        raw = sample("raw.csv").display()
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bundled_config_validates() {
    let o = topicscope(&["validate", s(&sample("config.toml"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn invalid_field_reported_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), "min_dist = 0.0");
    let o = topicscope(&["validate", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("umap.min_dist"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), "warp = 9");
    let o = topicscope(&["validate", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("umap.warp"), "{}", stderr(&o));
}

#[test]
fn inverted_k_range_fails_before_any_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("k_min = 3", "k_min = 9");
    std::fs::write(&cfg, text).unwrap();
    let o = topicscope(&["run", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lda.k_min"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_raw_corpus_fails_in_fetch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), "");
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace(&sample("raw.csv").display().to_string(), "absent.csv");
    std::fs::write(&cfg, text).unwrap();
    let o = topicscope(&["run", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(10), "{}", stderr(&o));
}

#[test]
fn rerun_hits_the_cache_and_force_recomputes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), "");
    let out = dir.path().join("out");
    let hits = || -> Vec<bool> {
        let t: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("logs/timings.json")).unwrap()).unwrap();
        t.as_array().unwrap().iter().map(|r| r["cache_hit"].as_bool().unwrap()).collect()
    };

    let o = topicscope(&["run", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let first = std::fs::read(out.join("report.json")).unwrap();
    assert!(hits().iter().skip(1).all(|h| !h));

    let o = topicscope(&["run", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(hits().iter().all(|&h| h));
    assert_eq!(std::fs::read(out.join("report.json")).unwrap(), first);

    let o = topicscope(&["run", "--config", s(&cfg), "--force"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(hits().iter().skip(1).all(|h| !h));
    assert_eq!(std::fs::read(out.join("report.json")).unwrap(), first);
}

#[test]
fn changed_setting_reruns_downstream_stages_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), "");
    let out = dir.path().join("out");
    assert_eq!(topicscope(&["run", "--config", s(&cfg)]).status.code(), Some(0));
    let text = std::fs::read_to_string(&cfg).unwrap() + "[hdbscan]\nmin_cluster_size = 20\n";
    std::fs::write(&cfg, text).unwrap();
    let o = topicscope(&["run", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("logs/timings.json")).unwrap()).unwrap();
    for row in t.as_array().unwrap() {
        let stage = row["stage"].as_str().unwrap();
        let hit = row["cache_hit"].as_bool().unwrap();
        let upstream = ["fetch", "curate", "prep", "lda-sweep", "lda-train", "embed", "reduce"].contains(&stage);
        assert_eq!(hit, upstream, "stage {stage}");
    }
}
