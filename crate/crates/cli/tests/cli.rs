use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use zarkit::corpus::parse_corpus;

fn zarkit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zarkit"))
        .current_dir(dir)
        .args(args)
        .env_remove("ZARKIT_SEED")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synth(dir: &Path, name: &str, start: &str, n: &str) {
    ok(&zarkit(
        dir,
        &["synth", "--n", n, "--start", start, "--out", name],
    ));
}

/// Tiny corpora and a config that trains in well under a second per run.
fn workspace(dir: &Path) {
    synth(dir, "train.zar.tsv", "0", "30");
    synth(dir, "val.zar.tsv", "50000", "15");
    synth(dir, "test.zar.tsv", "60000", "15");
    synth(dir, "pre.zar.tsv", "100000", "200");
    fs::write(
        dir.join("exp.cfg"),
        "train_path = train.zar.tsv\nvalidation_path = val.zar.tsv\ntest_path = test.zar.tsv\n\
         desk.pretrain_corpus = pre.zar.tsv\ndesk.epochs = 1\nout_dir = run\nmodel.layers = 1\n\
         model.hidden = 4\ntrain.epochs = 1\ntrain.warmup = 0\ntrain.n_seeds = 2\nprecision = f64\n",
    )
    .unwrap();
}

#[test]
fn synth_writes_a_parseable_corpus() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "out/c.zar.tsv", "3", "25");
    let text = fs::read_to_string(dir.path().join("out/c.zar.tsv")).unwrap();
    assert_eq!(parse_corpus(&text).unwrap().len(), 25);
    synth(dir.path(), "again.zar.tsv", "3", "25");
    assert_eq!(
        fs::read_to_string(dir.path().join("again.zar.tsv")).unwrap(),
        text
    );
}

#[test]
fn missing_corpus_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.cfg"),
        "train_path = nope.zar.tsv\nvalidation_path = nope.zar.tsv\nout_dir = run\n",
    )
    .unwrap();
    let out = zarkit(dir.path(), &["train", "--config", "bad.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train_path"));
}

#[test]
fn malformed_corpus_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    workspace(dir.path());
    fs::write(dir.path().join("train.zar.tsv"), "1\tx\tNOUN\n").unwrap();
    let out = zarkit(dir.path(), &["train", "--config", "exp.cfg"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(zarkit(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        zarkit(dir.path(), &["synth", "--n", "3"]).status.code(),
        Some(1)
    );
    assert_eq!(zarkit(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn train_eval_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    workspace(d);
    ok(&zarkit(d, &["train", "--config", "exp.cfg"]));
    for seed in [1, 2] {
        assert!(d.join(format!("run/seed-{seed}/model.ckpt")).is_file());
        let log = fs::read_to_string(d.join(format!("run/seed-{seed}/train_log.jsonl"))).unwrap();
        assert_eq!(log.lines().count(), 1);
    }
    ok(&zarkit(d, &["eval", "--config", "exp.cfg", "--ensemble"]));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("run/report.json")).unwrap()).unwrap();
    assert_eq!(report["seeds"], 2);
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    assert!(d.join("run/ensemble_report.json").is_file());

    let other = ["--set", "out_dir=other", "--set", "mode=masking"];
    ok(&zarkit(
        d,
        &[&["train", "--config", "exp.cfg"][..], &other].concat(),
    ));
    ok(&zarkit(
        d,
        &[&["eval", "--config", "exp.cfg"][..], &other].concat(),
    ));
    ok(&zarkit(
        d,
        &[
            &["eval", "--config", "exp.cfg", "--against", "run"][..],
            &other,
        ]
        .concat(),
    ));
    let sig: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("other/significance.json")).unwrap())
            .unwrap();
    for key in ["all.p", "zar.p", "dep.p"] {
        let p = sig[key].as_f64().unwrap();
        assert!(p > 0.0 && p <= 1.0, "{key} = {p}");
    }

    let out = zarkit(
        d,
        &[
            "report",
            "--input",
            "baseline=run/report.json",
            "--input",
            "masking=other/report.json",
            "--out-dir",
            "rep",
        ],
    );
    ok(&out);
    let table = fs::read_to_string(d.join("rep/table.txt")).unwrap();
    assert!(table.contains("baseline") && table.contains("masking"));
}

#[test]
fn sweep_covers_the_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    workspace(d);
    ok(&zarkit(
        d,
        &["sweep", "--config", "exp.cfg", "--set", "sweep.workers=2"],
    ));
    let csv = fs::read_to_string(d.join("run/sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "tagset,alpha,masked_fraction,seed,zar_f1,dep_f1,all_f1"
    );
    assert_eq!(lines.count(), 5 * 6 * 2);
    ok(&zarkit(
        d,
        &["report", "--sweep", "run/sweep.csv", "--out-dir", "rep"],
    ));
    assert!(fs::read_to_string(d.join("rep/sweep.svg"))
        .unwrap()
        .contains("<polyline"));
}
