use std::path::Path;
use std::process::{Command, Output};

use nat_core::data::read_dataset;

fn nat(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nat"))
        .current_dir(dir)
        .args(args)
        .env("NAT_LOG", "error")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CONFIG: &str = "seed = 3
model.layers = 1
model.units = 8
model.embed = 4
estimator.K = 4
data.train = data/train.natd
data.dev = data/dev.natd
data.vocab = data/vocab.txt
train.max_steps = 40
train.eval_interval = 20
train.checkpoint_interval = 20
gen.train_count = 20
gen.dev_count = 5
gen.tokens_min = 2
gen.tokens_max = 3
";

/// Generates data and trains a tiny model; returns the temp dir.
fn trained() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("gen.cfg"), "seed = 3\ngen.train_count = 20\ngen.dev_count = 5\ngen.tokens_min = 2\ngen.tokens_max = 3\n").unwrap();
    let o = nat(dir.path(), &["gen", "--config", "gen.cfg", "--out", "data"]);
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::write(dir.path().join("run.cfg"), CONFIG).unwrap();
    let o = nat(dir.path(), &["train", "--config", "run.cfg", "--out", "run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir
}

#[test]
fn train_writes_metrics_and_checkpoints() {
    let dir = trained();
    let metrics = std::fs::read_to_string(dir.path().join("run/metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "step,mean_reward,dev_per,entropy_weight,noise_std");
    assert_eq!(lines.len(), 3);
    assert!(dir.path().join("run/final.natc").is_file());
    assert!(dir.path().join("run/checkpoints/ckpt-00000020.natc").is_file());
}

#[test]
fn eval_against_own_references_is_perfect() {
    let dir = trained();
    let o = nat(
        dir.path(),
        &["eval", "--config", "run.cfg", "--checkpoint", "run/final.natc", "--out", "ev", "--self-reference"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("PER 0.000000"));
    let csv = std::fs::read_to_string(dir.path().join("ev/eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn trace_matches_utterance_length() {
    let dir = trained();
    let dev = read_dataset(dir.path().join("data/dev.natd")).unwrap();
    let id = &dev[0].id;
    let o = nat(
        dir.path(),
        &["trace", "--config", "run.cfg", "--checkpoint", "run/final.natc", "--out", "tr", "--utterance", id, "--chars-per-step", "1"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let steps = dev[0].frames.len().div_ceil(3);
    let line = String::from_utf8_lossy(&o.stdout).lines().next().unwrap().to_string();
    assert_eq!(line.len(), steps);
    assert!(line.chars().all(|c| c == 'x' || c == '-'));
    let csv = std::fs::read_to_string(dir.path().join(format!("tr/trace-{id}.csv"))).unwrap();
    assert_eq!(csv.lines().count(), steps + 1);
}

#[test]
fn mix_with_zero_proportion_keeps_primary_shape() {
    let dir = trained();
    let o = nat(dir.path(), &["mix", "data/dev.natd", "data/dev.natd", "--proportion", "0", "--out", "mixed.natd"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dev = read_dataset(dir.path().join("data/dev.natd")).unwrap();
    let mixed = read_dataset(dir.path().join("mixed.natd")).unwrap();
    assert_eq!(dev.len(), mixed.len());
    for (a, b) in dev.iter().zip(&mixed) {
        assert_eq!(a.targets, b.targets);
        assert_eq!(a.frames.len(), b.frames.len());
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = nat(dir.path(), &["train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[config]:"));

    let o = nat(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));

    let o = nat(dir.path(), &["train", "--config", "missing.cfg"]);
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(dir.path().join("bad.cfg"), "seed = 1\nmodel.colour = red\n").unwrap();
    let o = nat(dir.path(), &["train", "--config", "bad.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn corrupted_dataset_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.natd"), b"NOPE\x01\x00\x00\x00").unwrap();
    let o = nat(dir.path(), &["mix", "a.natd", "a.natd", "--proportion", "0.5", "--out", "b.natd"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).starts_with("error[data]:"), "{}", stderr(&o));
}
