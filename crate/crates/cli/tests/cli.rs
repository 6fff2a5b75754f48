use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const STAGES: [&str; 10] = ["ingest", "annotate", "segment", "dtw", "graph", "sweep", "heatmap", "mds", "embed", "cluster"];

fn melograph(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_melograph"));
    cmd.args(args).env_remove("MELOGRAPH_ABORT_AFTER_CHUNKS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "failed: {}\n{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Synthetic corpus of `pieces` pieces in `styles` styles with its starter config.
fn corpus(dir: &Path, pieces: usize, styles: usize) -> PathBuf {
    let out = dir.join("corpus");
    let (p, s) = (pieces.to_string(), styles.to_string());
    stdout(&melograph(&["synth", "--pieces", &p, "--styles", &s, "--phrases", "6", "--out", out.to_str().unwrap()], &[]));
    out.join("melograph.toml")
}

/// Stage name to "cached" / "computed" from `run` output.
fn outcomes(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| {
            let mut words = l.split_whitespace();
            let stage = words.next()?;
            STAGES.contains(&stage).then(|| (stage.to_string(), words.next().unwrap_or_default().to_string()))
        })
        .collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_writes_every_stage_and_a_consistent_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = corpus(dir.path(), 3, 3);
    let cfg = config.to_str().unwrap();
    let first = stdout(&melograph(&["run", "--config", cfg], &[]));
    assert!(outcomes(&first).iter().all(|(_, o)| o == "computed"), "{first}");
    assert_eq!(outcomes(&first).len(), 10);

    let run = dir.path().join("corpus/run");
    for stage in STAGES {
        assert!(run.join(stage).join("stage.json").is_file(), "missing {stage}");
    }
    let summary = json(&run.join("report/summary.json"));
    let levels = summary["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 11);
    assert_eq!(summary["clusters"].as_array().unwrap().len(), 3);

    let sweep = fs::read_to_string(run.join("sweep/sweep.csv")).unwrap();
    for (row, level) in sweep.lines().skip(1).zip(levels) {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[0].parse::<u64>().unwrap(), level["k"].as_u64().unwrap());
        assert_eq!(cells[1].parse::<f64>().unwrap(), level["mean_intra"].as_f64().unwrap());
        assert_eq!(cells[2].parse::<f64>().unwrap(), level["mean_inter"].as_f64().unwrap());
        assert_eq!(cells[4].parse::<f64>().unwrap(), level["auc"].as_f64().unwrap());
    }
    let clusters = fs::read_to_string(run.join("cluster/clusters.csv")).unwrap();
    for (row, entry) in clusters.lines().skip(1).zip(summary["clusters"].as_array().unwrap()) {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[1], entry["piece"].as_str().unwrap());
        assert_eq!(cells[2].parse::<u64>().unwrap(), entry["label"].as_u64().unwrap());
    }

    let report = stdout(&melograph(&["report", "--config", cfg], &[]));
    assert!(report.contains("adjusted Rand index"));

    let again = stdout(&melograph(&["run", "--config", cfg], &[]));
    assert!(outcomes(&again).iter().all(|(_, o)| o == "cached"), "{again}");
    let status = stdout(&melograph(&["status", "--config", cfg], &[]));
    assert_eq!(status.lines().filter(|l| l.ends_with("current")).count(), 10, "{status}");
}

#[test]
fn changing_wl_iterations_reuses_upstream_stages() {
    let dir = tempfile::tempdir().unwrap();
    let config = corpus(dir.path(), 3, 3);
    let cfg = config.to_str().unwrap();
    stdout(&melograph(&["run", "--config", cfg], &[]));

    let text = fs::read_to_string(&config).unwrap();
    assert!(text.contains("wl_iterations = 3"), "{text}");
    fs::write(&config, text.replace("wl_iterations = 3", "wl_iterations = 2")).unwrap();
    let status = stdout(&melograph(&["status", "--config", cfg], &[]));
    assert!(status.lines().any(|l| l.starts_with("sweep") && l.ends_with("stale")), "{status}");

    let rerun = outcomes(&stdout(&melograph(&["run", "--config", cfg], &[])));
    for (stage, outcome) in rerun {
        let upstream = ["ingest", "annotate", "segment", "dtw", "graph"].contains(&stage.as_str());
        assert_eq!(outcome, if upstream { "cached" } else { "computed" }, "{stage}");
    }
}

#[test]
fn missing_dependency_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = corpus(dir.path(), 3, 3);
    let out = melograph(&["graph", "--config", config.to_str().unwrap()], &[]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("melograph segment --config"), "{err}");
}

/// Runs the stages up to and including `dtw` one at a time.
fn through_dtw(cfg: &str, env: &[(&str, &str)]) -> Output {
    for stage in ["ingest", "annotate", "segment"] {
        stdout(&melograph(&[stage, "--config", cfg], &[]));
    }
    melograph(&["dtw", "--config", cfg], env)
}

#[test]
fn aborted_dtw_resumes_from_its_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = corpus(dir.path(), 4, 2);
    let cfg = config.to_str().unwrap();
    let text = fs::read_to_string(&config).unwrap().replace("chunk_size = 256", "chunk_size = 16");
    fs::write(&config, &text).unwrap();
    let fresh = dir.path().join("corpus/fresh.toml");
    fs::write(&fresh, text.replace("output_dir = \"run\"", "output_dir = \"fresh\"")).unwrap();

    let killed = through_dtw(cfg, &[("MELOGRAPH_ABORT_AFTER_CHUNKS", "3"), ("MELOGRAPH_WORKERS", "1")]);
    assert!(!killed.status.success());
    let run = dir.path().join("corpus/run");
    assert!(!run.join("dtw/stage.json").exists());

    stdout(&melograph(&["dtw", "--config", cfg], &[]));
    let details = &json(&run.join("dtw/stage.json"))["details"];
    let total = details["pairs"].as_u64().unwrap().div_ceil(16);
    assert!(total > 6, "only {total} chunks");
    assert_eq!(details["chunks_reused"].as_u64().unwrap(), 3);
    assert_eq!(details["chunks_computed"].as_u64().unwrap(), total - 3);

    stdout(&through_dtw(fresh.to_str().unwrap(), &[]));
    let fresh_details = &json(&dir.path().join("corpus/fresh/dtw/stage.json"))["details"];
    assert_eq!(fresh_details["chunks_computed"].as_u64().unwrap(), total);
    assert_eq!(
        fs::read(run.join("dtw/distances.csv")).unwrap(),
        fs::read(dir.path().join("corpus/fresh/dtw/distances.csv")).unwrap()
    );
}

#[test]
fn concurrent_runs_on_one_output_dir_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let config = corpus(dir.path(), 3, 3);
    let run = dir.path().join("corpus/run");
    fs::create_dir_all(&run).unwrap();
    let held = fs::OpenOptions::new().create(true).truncate(false).write(true).open(run.join(".melograph.lock")).unwrap();
    held.try_lock().unwrap();
    let out = melograph(&["ingest", "--config", config.to_str().unwrap()], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("in use"));
    held.unlock().unwrap();
    stdout(&melograph(&["ingest", "--config", config.to_str().unwrap()], &[]));
}
