use std::path::Path;
use std::process::{Command, Output};

fn antidote(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_antidote"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, seed: &str) {
    let out = antidote(&[
        "synth",
        "--seed",
        seed,
        "--out",
        s(dir),
        "--users-per-group",
        "30",
        "--items-per-group",
        "25",
        "--beta1",
        "0.5",
        "--beta2",
        "0.3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

const SMALL_RUN: &[&str] = &[
    "--threads",
    "1",
    "--seed",
    "4",
    "--users-per-group",
    "30",
    "--items-per-group",
    "25",
    "--trials",
    "2",
    "--n-filler",
    "8",
    "--pgd-steps",
    "4",
    "--dim",
    "4",
    "--max-sweeps",
    "20",
    "--retrain-sweeps",
    "3",
];

#[test]
fn run_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out_dir = dir.path().join(format!("r{k}"));
        let mut args = vec!["run", "--out", s(&out_dir)];
        args.extend_from_slice(SMALL_RUN);
        let out = antidote(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push((
            std::fs::read(out_dir.join("run_rows.csv")).unwrap(),
            std::fs::read(out_dir.join("run_summary.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let rows = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert_eq!(rows.lines().count(), 1 + 4 * 2);
}

#[test]
fn sweep_and_transfer_write_series() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "--out", s(dir.path()), "--filler-counts", "4,8", "--fixed-fraction", "0.05"];
    args.extend_from_slice(SMALL_RUN);
    let out = antidote(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let series = std::fs::read_to_string(dir.path().join("sweep_series.csv")).unwrap();
    assert_eq!(series.lines().count(), 1 + 2 * 4);

    let mut args = vec!["transfer", "--out", s(dir.path()), "--fixed-fraction", "0.05"];
    args.extend_from_slice(SMALL_RUN);
    let out = antidote(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("transfer.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 1 + 4);
    assert!(table.starts_with("source,value,absolute,overestimation,non_parity"));
}

#[test]
fn antidote_train_evaluate_embed_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "3");
    let ratings = d.join("ratings.csv");
    let groups = d.join("groups.csv");
    let data = ["--ratings", s(&ratings), "--groups", s(&groups)];

    let anti = d.join("anti.csv");
    let sidecar = d.join("anti.json");
    let mut args = vec!["antidote", "--seed", "3", "--alpha", "0.05", "--n-filler", "6", "--pgd-steps", "3"];
    args.extend_from_slice(&data);
    args.extend(["--out", s(&anti), "--sidecar", s(&sidecar)]);
    let out = antidote(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&anti).unwrap();
    // 3 users × 6 fillers
    assert_eq!(csv.lines().count(), 1 + 3 * 6);
    assert!(sidecar.exists());

    let model = d.join("m.bin");
    let mut args = vec!["train", "--seed", "3", "--antidote", s(&anti), "--out", s(&model)];
    args.extend_from_slice(&data);
    assert!(antidote(&args).status.success());

    let scores = d.join("scores.json");
    let mut args = vec!["evaluate", "--antidote", s(&anti), "--model", s(&model), "--out", s(&scores)];
    args.extend_from_slice(&data);
    assert!(antidote(&args).status.success());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&scores).unwrap()).unwrap();
    assert_eq!(json["metrics"].as_array().unwrap().len(), 4);

    let emb = d.join("emb.csv");
    let mut args = vec!["embed", "--antidote", s(&anti), "--model", s(&model), "--out", s(&emb)];
    args.extend_from_slice(&data);
    assert!(antidote(&args).status.success());
    let text = std::fs::read_to_string(&emb).unwrap();
    assert_eq!(text.lines().count(), 1 + 60 + 3);
    assert_eq!(text.lines().filter(|l| l.contains(",true,")).count(), 3);

    // scores only need the original users
    let mut args = vec!["evaluate", "--model", s(&model)];
    args.extend_from_slice(&data);
    assert!(antidote(&args).status.success());

    // embeddings need every user row
    let mut args = vec!["embed", "--model", s(&model), "--out", s(&emb)];
    args.extend_from_slice(&data);
    assert_eq!(antidote(&args).status.code(), Some(1));
}

#[test]
fn exit_codes() {
    assert_eq!(antidote(&["--help"]).status.code(), Some(0));
    assert_eq!(antidote(&["--version"]).status.code(), Some(0));
    assert_eq!(antidote(&["bogus"]).status.code(), Some(1));
    // --seed is mandatory for experiment commands
    assert_eq!(antidote(&["run", "--out", "x"]).status.code(), Some(1));
    assert_eq!(antidote(&["synth", "--out", "x"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = antidote(&[
        "evaluate",
        "--ratings",
        s(&missing),
        "--groups",
        s(&missing),
        "--model",
        s(&missing),
    ]);
    assert_eq!(out.status.code(), Some(3));

    synth(dir.path(), "1");
    let ratings = dir.path().join("ratings.csv");
    let groups = dir.path().join("groups.csv");
    // more fillers than items
    let out = antidote(&[
        "antidote",
        "--seed",
        "1",
        "--ratings",
        s(&ratings),
        "--groups",
        s(&groups),
        "--n-filler",
        "1000",
        "--out",
        s(&dir.path().join("a.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"trials": 0}"#).unwrap();
    let out = antidote(&["run", "--config", s(&cfg), "--seed", "1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_values_apply_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("spec.json");
    std::fs::write(
        &cfg,
        r#"{"method": "none", "trials": 3, "fractions": [0.02],
            "source": {"synthetic": {"users_per_group": 20, "items_per_group": 15, "beta1": 0.5, "beta2": 0.3}},
            "train": {"dim": 3, "max_sweeps": 10}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("r");
    let out = antidote(&[
        "run",
        "--config",
        s(&cfg),
        "--seed",
        "5",
        "--trials",
        "2",
        "--threads",
        "1",
        "--out",
        s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = std::fs::read_to_string(out_dir.join("run_rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2);
    assert!(rows.lines().skip(1).all(|l| l.starts_with("none,")));
}
