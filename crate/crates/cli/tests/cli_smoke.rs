//! Exercises the binary: exit codes, artifact layout and reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_s2srank"))
}

fn write_ratings(dir: &Path) -> std::path::PathBuf {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(99);
    let path = dir.join("ratings.tsv");
    let mut text = String::new();
    for u in 0..50 {
        let mut items: Vec<u32> = (0..100).collect();
        items.shuffle(&mut rng);
        for v in items.into_iter().take(rng.gen_range(12..=25)) {
            text.push_str(&format!("user{u}\titem{v}\t5\n"));
        }
    }
    std::fs::write(&path, text).unwrap();
    path
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn base_config(extra: &str) -> String {
    format!(
        r#"
[data]
path = "ratings.tsv"
rating_threshold = 4.0
min_interactions = 10
seed = 42

[model]
dim = 8

[train]
epochs = 4
lr = 0.02
eval_every = 2
patience = 5
seed = 7

[train.sampler]
l = 2
k = 3
{extra}
"#
    )
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn prepare_train_evaluate_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    write_ratings(dir.path());
    let cfg = write_config(dir.path(), &base_config(""));

    run_ok(bin()
        .current_dir(dir.path())
        .args(["prepare", "--config"])
        .arg(&cfg)
        .args(["--run-dir", "prep"]));
    assert!(dir.path().join("prep/dataset.s2sr").exists());
    assert!(dir.path().join("prep/dataset.s2sr.json").exists());

    run_ok(bin()
        .current_dir(dir.path())
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--dataset", "prep/dataset.s2sr", "--run-dir", "tr"]));
    assert!(dir.path().join("tr/model.ck").exists());
    assert!(dir.path().join("tr/train_log.jsonl").exists());

    let out = run_ok(bin().current_dir(dir.path()).args([
        "evaluate",
        "--checkpoint",
        "tr/model.ck",
        "--dataset",
        "prep/dataset.s2sr",
        "--cutoffs",
        "10,20",
        "--run-dir",
        "ev",
    ]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("NDCG@10"));

    // JSON and text reports agree on every number.
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ev/eval_test.json")).unwrap())
            .unwrap();
    let text = std::fs::read_to_string(dir.path().join("ev/eval_test.txt")).unwrap();
    for metric in ["hr", "ndcg"] {
        for v in json[metric].as_array().unwrap() {
            let rendered = format!("{:.5}", v.as_f64().unwrap());
            assert!(
                text.contains(rendered.trim_start_matches('0')),
                "text table missing {metric}={rendered}\n{text}"
            );
        }
    }
}

#[test]
fn missing_input_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &base_config(""));
    let out = bin()
        .current_dir(dir.path())
        .args(["prepare", "--config"])
        .arg(&cfg)
        .args(["--run-dir", "prep"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ratings.tsv"), "stderr: {stderr}");
}

#[test]
fn missing_checkpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write_ratings(dir.path());
    let cfg = write_config(dir.path(), &base_config(""));
    run_ok(bin()
        .current_dir(dir.path())
        .args(["prepare", "--config"])
        .arg(&cfg)
        .args(["--run-dir", "prep"]));
    let out = bin()
        .current_dir(dir.path())
        .args([
            "evaluate",
            "--checkpoint",
            "nope.ck",
            "--dataset",
            "prep/dataset.s2sr",
            "--run-dir",
            "ev",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_objective_exits_2_with_listing() {
    let out = bin()
        .args(["train", "--objective", "pointwise"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("set2set_easy"), "stderr: {stderr}");
}

#[test]
fn prepare_is_byte_identical_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    write_ratings(dir.path());
    let cfg = write_config(dir.path(), &base_config(""));
    for run in ["a", "b"] {
        run_ok(bin()
            .current_dir(dir.path())
            .args(["prepare", "--config"])
            .arg(&cfg)
            .args(["--run-dir", run]));
    }
    let a = std::fs::read(dir.path().join("a/dataset.s2sr")).unwrap();
    let b = std::fs::read(dir.path().join("b/dataset.s2sr")).unwrap();
    assert_eq!(a, b);
    let aj = std::fs::read(dir.path().join("a/dataset.s2sr.json")).unwrap();
    let bj = std::fs::read(dir.path().join("b/dataset.s2sr.json")).unwrap();
    assert_eq!(aj, bj);
}

#[test]
fn compare_single_cell_matches_train_plus_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    write_ratings(dir.path());
    let grid = r#"
[eval]
cutoffs = [10]

[grid]
l = [2]
"#;
    let cfg = write_config(dir.path(), &base_config(grid));

    run_ok(bin()
        .current_dir(dir.path())
        .args(["prepare", "--config"])
        .arg(&cfg)
        .args(["--run-dir", "prep"]));

    let out = run_ok(bin()
        .current_dir(dir.path())
        .args(["compare", "--config"])
        .arg(&cfg)
        .args(["--run-dir", "cmp"]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("grid has 1 cells"), "stdout: {stdout}");

    run_ok(bin()
        .current_dir(dir.path())
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--run-dir", "tr"]));
    run_ok(bin().current_dir(dir.path()).args([
        "evaluate",
        "--checkpoint",
        "tr/model.ck",
        "--dataset",
        "prep/dataset.s2sr",
        "--cutoffs",
        "10",
        "--run-dir",
        "ev",
    ]));

    let compare: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cmp/compare.json")).unwrap())
            .unwrap();
    let eval: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ev/eval_test.json")).unwrap())
            .unwrap();
    assert_eq!(compare[0]["ndcg"], eval["ndcg"]);
    assert_eq!(compare[0]["hr"], eval["hr"]);
}

#[test]
fn empty_grid_block_is_single_default_cell_and_missing_grid_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write_ratings(dir.path());
    let cfg = write_config(dir.path(), &base_config(""));
    let out = bin()
        .current_dir(dir.path())
        .args(["compare", "--config"])
        .arg(&cfg)
        .args(["--run-dir", "cmp"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "compare without [grid] must be a usage error");
}
