use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use alkit::commands::cmd_run;
use alkit::simulator::RunControl;
use alkit::synth::longtail_counts;
use alkit::ExperimentConfig;
use tempfile::TempDir;

const MINIMAL: &str = r#"
[data]
kind = "synth"
num_classes = 4
feature_dim = 6
max_per_class = 60
imbalance_ratio = 4.0
class_separation = 3.0
noise_sigma = 1.0
seed = 3
test_per_class = 10

[pool]
val_frac = 0.1
initial_size = 12
budget = 6
rounds = 1

[train]
epochs = 8
early_stop_patience = 8
batch_size = 16
learning_rate = 0.1
weight_decay = 0.0
momentum = 0.9
schedule = { kind = "cosine", t_max = 8 }

[strategy]
name = "random"

[run]
seeds = [0]
"#;

fn alkit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alkit"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn alkit")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path
}

fn log_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(log_files(&path));
        } else if path.to_string_lossy().ends_with(".aljsonl") && !path.to_string_lossy().ends_with(".timing.aljsonl") {
            out.push(path);
        }
    }
    out.sort();
    out
}

fn records(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn error_line(o: &Output, tag: &str) {
    let err = stderr(o);
    let lines: Vec<&str> = err.lines().filter(|l| l.starts_with("[E_")).collect();
    assert!(!lines.is_empty(), "no error line in {err:?}");
    assert!(lines[0].starts_with(&format!("[{tag}] ")), "{err}");
}

#[test]
fn minimal_run_writes_one_log() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let o = alkit(&["run", "--config", cfg.to_str().unwrap(), "--out", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let logs = log_files(&dir.path().join("out"));
    assert_eq!(logs.len(), 1);
    assert_eq!(records(&logs[0]).len(), 2);
}

#[test]
fn strategy_override_shares_initial_set() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let cfg = cfg.to_str().unwrap();
    assert!(alkit(&["run", "--config", cfg, "--out", "out"], dir.path()).status.success());
    let o = alkit(&["run", "--config", cfg, "--out", "out", "--strategy", "base"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let logs = log_files(&dir.path().join("out"));
    assert_eq!(logs.len(), 2);
    let mut first: Vec<serde_json::Value> = logs.iter().map(|l| records(l)[0].clone()).collect();
    assert_eq!(first[0]["strategy"], "base");
    assert_eq!(first[1]["strategy"], "random");
    // same s0 and same training stream: round 0 agrees in everything but the name
    for r in &mut first {
        r.as_object_mut().unwrap().remove("strategy");
    }
    assert_eq!(first[0], first[1]);
}

#[test]
fn over_capacity_refused_before_work() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let o = alkit(
        &["run", "--config", cfg.to_str().unwrap(), "--out", "out", "--set", "pool.budget=500"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    error_line(&o, "E_CONFIG");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn cli_and_library_runs_are_identical() {
    let dir = TempDir::new().unwrap();
    let cfg_path = write_config(dir.path(), &MINIMAL.replace("name = \"random\"", "name = [\"mase\", \"coreset\"]"));
    let o = alkit(
        &["run", "--config", cfg_path.to_str().unwrap(), "--out", "cli", "--seeds", "4,5"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));

    let mut cfg = ExperimentConfig::from_file(&cfg_path, &["run.seeds=[4,5]".into()]).unwrap();
    cfg.run.out_dir = Some(dir.path().join("lib"));
    let outcome = cmd_run(&cfg, RunControl::default()).unwrap();
    assert!(outcome.is_success());

    let cli = log_files(&dir.path().join("cli"));
    let lib = log_files(&dir.path().join("lib"));
    assert_eq!(cli.len(), 4);
    for (a, b) in cli.iter().zip(&lib) {
        assert_eq!(a.file_name(), b.file_name());
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap(), "{}", a.display());
    }
}

#[test]
fn interrupted_cli_run_resumes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &MINIMAL.replace("rounds = 1", "rounds = 3"));
    let cfg = cfg.to_str().unwrap();
    assert!(alkit(&["run", "--config", cfg, "--out", "full"], dir.path()).status.success());
    let o = alkit(&["run", "--config", cfg, "--out", "cut", "--stop-after-round", "1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let cut = dir.path().join("cut/random/seed-0.aljsonl");
    assert_eq!(records(&cut).len(), 2);
    let o = alkit(&["resume", "--out", "cut"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(cut).unwrap(),
        fs::read(dir.path().join("full/random/seed-0.aljsonl")).unwrap()
    );

    let o = alkit(&["resume", "--out", "cut", "--set", "pool.budget=5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    error_line(&o, "E_CONFIG");
    assert!(stderr(&o).contains("pool.budget"));
}

#[test]
fn report_histograms_normalized() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &MINIMAL.replace("rounds = 1", "rounds = 2"));
    assert!(alkit(&["run", "--config", cfg.to_str().unwrap(), "--out", "out"], dir.path())
        .status
        .success());
    let o = alkit(&["report", "out", "--out", "rep"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let hist = fs::read_to_string(dir.path().join("rep/histograms.csv")).unwrap();
    let rows: Vec<&str> = hist.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        let props: Vec<f64> = cells[3..].iter().map(|c| c.parse().unwrap()).collect();
        assert_eq!(props.len(), 4);
        assert!((props.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{row}");
        assert!(props.windows(2).all(|w| w[0] >= w[1]), "{row}");
    }

    let summary = fs::read_to_string(dir.path().join("rep/summary.csv")).unwrap();
    assert_eq!(
        summary.lines().next().unwrap(),
        "round,metric,mean,ci_low,ci_high,strategy,n_seeds"
    );
    let entropy = fs::read_to_string(dir.path().join("rep/entropy.csv")).unwrap();
    assert_eq!(entropy.lines().count(), 4);
}

#[test]
fn report_on_empty_directory_fails() {
    let dir = TempDir::new().unwrap();
    fs::create_dir(dir.path().join("empty")).unwrap();
    let o = alkit(&["report", "empty"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    error_line(&o, "E_DATA");
}

#[test]
fn synth_manifest_matches_longtail_counts() {
    let dir = TempDir::new().unwrap();
    let text = MINIMAL
        .replace("num_classes = 4", "num_classes = 10")
        .replace("imbalance_ratio = 4.0", "imbalance_ratio = 10.0")
        .replace("max_per_class = 60", "max_per_class = 500");
    let cfg = write_config(dir.path(), &text);
    let cfg = cfg.to_str().unwrap();
    for out in ["a", "b"] {
        let o = alkit(&["synth", "--config", cfg, "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    let counts: Vec<usize> = serde_json::from_value(manifest["counts"].clone()).unwrap();
    assert_eq!(counts, longtail_counts(10, 500, 10.0).unwrap());
    for f in ["features.alf", "labels.alf", "test_features.alf", "test_labels.alf", "manifest.json"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }

    let o = alkit(&["synth", "--config", cfg, "--out", "flat", "--set", "data.imbalance_ratio=1.0"], dir.path());
    assert!(o.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("flat/manifest.json")).unwrap()).unwrap();
    let counts: Vec<usize> = serde_json::from_value(manifest["counts"].clone()).unwrap();
    assert_eq!(counts, vec![500; 10]);
}

#[test]
fn synthesized_files_feed_a_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    assert!(alkit(&["synth", "--config", cfg.to_str().unwrap(), "--out", "data"], dir.path())
        .status
        .success());
    let (head, tail) = MINIMAL.split_once("[pool]").unwrap();
    assert!(head.contains("[data]"));
    let files = format!(
        "[data]\nkind = \"files\"\nfeatures = \"data/features.alf\"\nlabels = \"data/labels.alf\"\n\
         test_features = \"data/test_features.alf\"\ntest_labels = \"data/test_labels.alf\"\n\n[pool]{tail}"
    );
    let cfg = write_config(dir.path(), &files);
    let o = alkit(&["run", "--config", cfg.to_str().unwrap(), "--out", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(log_files(&dir.path().join("out")).len(), 1);
}

#[test]
fn missing_files_listed_together() {
    let dir = TempDir::new().unwrap();
    let (_, tail) = MINIMAL.split_once("[pool]").unwrap();
    let text = format!(
        "[data]\nkind = \"files\"\nfeatures = \"gone_x.npy\"\nlabels = \"gone_y.npy\"\ntest_frac = 0.2\n\n[pool]{tail}"
    );
    let cfg = write_config(dir.path(), &text);
    let o = alkit(&["run", "--config", cfg.to_str().unwrap(), "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    error_line(&o, "E_DATA");
    let err = stderr(&o);
    assert!(err.contains("gone_x.npy") && err.contains("gone_y.npy"), "{err}");
}

#[test]
fn parse_error_has_position() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &MINIMAL.replace("budget = 6", "budget = = 6"));
    let o = alkit(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    error_line(&o, "E_CONFIG");
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("line 16"), "{err}");
}

#[test]
fn divergence_exit_code() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let o = alkit(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "out",
            "--set",
            "train.learning_rate=1e12",
            "--set",
            "train.weight_decay=1.0",
            "--set",
            "train.epochs=100",
            "--set",
            "train.early_stop_patience=100",
            "--set",
            "train.schedule={ kind = \"step\", factor = 1.0, every = 1 }",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    error_line(&o, "E_DIVERGENCE");
}

#[test]
fn bad_arguments_and_help() {
    let dir = TempDir::new().unwrap();
    let o = alkit(&["run"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    error_line(&o, "E_CONFIG");
    assert_eq!(stderr(&o).lines().count(), 1);
    assert!(alkit(&["--help"], dir.path()).status.success());
}

#[test]
fn inspect_dumps_scores() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let o = alkit(&["inspect", "--config", cfg.to_str().unwrap(), "--out", "ins"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let scores = fs::read_to_string(dir.path().join("ins/boundary_scores.csv")).unwrap();
    let mut lines = scores.lines();
    assert_eq!(
        lines.next().unwrap(),
        "index,label,prediction,ddb,dcsdb_0,dcsdb_1,dcsdb_2,dcsdb_3"
    );
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let pred: usize = cells[2].parse().unwrap();
        assert_eq!(cells[3], cells[4 + pred]);
    }
    let minima = fs::read_to_string(dir.path().join("ins/dcsdb_minima.csv")).unwrap();
    assert_eq!(minima.lines().count(), 5);
}
