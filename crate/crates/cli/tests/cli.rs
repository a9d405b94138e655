//! Command-line surface tests: every subcommand runs end to end on small
//! inputs, writes its declared outputs plus a run manifest, and fails with a
//! nonzero exit on bad input.

use std::path::Path;
use std::process::{Command, Output};

fn deconf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deconf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = deconf(args);
    assert!(
        out.status.success(),
        "command {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_flag_exits_nonzero_with_usage() {
    let out = deconf(&["synth", "--frobnicate"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage") || stderr.contains("usage"), "{stderr}");
}

#[test]
fn spec_init_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    let stdout = ok(&[
        "spec", "init", "--preset", "cm", "--d", "4", "--p", "0.9", "--out",
        path_str(&spec),
    ]);
    assert!(stdout.contains("hash"));
    assert!(spec.exists());
    assert!(dir.path().join("spec.json.manifest.json").exists());
    let stdout = ok(&["spec", "validate", "--spec", path_str(&spec)]);
    assert!(stdout.starts_with("OK "));

    // break the spec and expect a nonzero exit with the violation printed
    let text = std::fs::read_to_string(&spec).unwrap();
    std::fs::write(&spec, text.replace("\"strength\":0.9", "\"strength\":1.5")).unwrap();
    let out = deconf(&["spec", "validate", "--spec", path_str(&spec)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("strength outside [0,1]"));
}

#[test]
fn synth_measure_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    ok(&["spec", "init", "--preset", "dcm", "--d", "4", "--out", path_str(&spec)]);
    let data = dir.path().join("data");
    ok(&[
        "synth", "--spec", path_str(&spec), "--n", "300", "--split", "train", "--out",
        path_str(&data),
    ]);
    for f in ["manifest.json", "images.bin", "attrs.csv", "noise.csv", "run_manifest.json"] {
        assert!(data.join(f).exists(), "missing {f}");
    }
    let report = dir.path().join("report");
    let svg = dir.path().join("curve.svg");
    ok(&[
        "measure", "--data", path_str(&data), "--spec", path_str(&spec), "--out",
        path_str(&report), "--svg", path_str(&svg),
    ]);
    assert!(report.with_extension("csv").exists());
    assert!(report.with_extension("json").exists());
    let svg_text = std::fs::read_to_string(&svg).unwrap();
    assert!(svg_text.starts_with("<svg"));
}

#[test]
fn table3_writes_one_row_per_strength() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    ok(&[
        "table3", "--d", "4", "--grid", "0.2,0.8", "--n", "2000", "--out", path_str(&out),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3, "{text}");
    assert!(text.lines().next().unwrap().contains("confounding_nats"));
}

#[test]
fn probe_mapper_augment_plumbing() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    // two-attribute process keeps this fast
    let spec_value = deconf_core::spec::pair_spec(4, 0.9, 16, 5);
    std::fs::write(&spec, spec_value.canonical_json().unwrap()).unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--spec", path_str(&spec), "--n", "400", "--out", path_str(&data)]);

    let probe_color = dir.path().join("probe_color.ckpt");
    ok(&[
        "probes", "--data", path_str(&data), "--attr", "color", "--spec", path_str(&spec),
        "--steps", "40", "--min-accuracy", "0", "--out", path_str(&probe_color),
    ]);
    let probe_label = dir.path().join("probe_label.ckpt");
    ok(&[
        "probes", "--data", path_str(&data), "--attr", "label", "--spec", path_str(&spec),
        "--steps", "40", "--min-accuracy", "0", "--out", path_str(&probe_label),
    ]);

    let mapper_dir = dir.path().join("mapper");
    ok(&[
        "mapper", "--data", path_str(&data), "--t1", "color!=1,label=1", "--t2",
        "color=1,label=1", "--probe-target", path_str(&probe_color), "--probe-keep",
        path_str(&probe_label), "--steps", "3", "--batch", "4", "--out", path_str(&mapper_dir),
    ]);
    assert!(mapper_dir.join("g1.ckpt").exists());
    assert!(mapper_dir.join("mapper.json").exists());

    // learned mapper generates a counterfactual batch with origin columns
    let cfs = dir.path().join("cfs");
    ok(&[
        "augment", "--data", path_str(&data), "--spec", path_str(&spec), "--edge",
        "c_style:color", "--mapper", path_str(&mapper_dir), "--budget", "count:10", "--out",
        path_str(&cfs),
    ]);
    let attrs = std::fs::read_to_string(cfs.join("attrs.csv")).unwrap();
    assert!(attrs.lines().next().unwrap().ends_with("mapper_kind"));
    assert_eq!(attrs.lines().count(), 11);
    assert!(attrs.contains("learned"));
}

#[test]
fn e2e_with_empty_budget_and_lambda_zero_makes_both_rows_identical() {
    let dir = tempfile::tempdir().unwrap();
    let outdir = dir.path().join("run");
    let stdout = ok(&[
        "e2e", "--preset", "cm", "--d", "4", "--p", "0.9", "--n", "200", "--test-n", "100",
        "--seed", "3", "--lambda", "0", "--budget", "count:0", "--epochs", "2", "--outdir",
        path_str(&outdir),
    ]);
    assert!(stdout.contains("summary"));
    // empty augmentation at lambda zero: the two training runs share the
    // objective, the data, and the seed, so the checkpoints match exactly
    let erm = std::fs::read(outdir.join("erm.ckpt")).unwrap();
    let aug = std::fs::read(outdir.join("augmented.ckpt")).unwrap();
    assert_eq!(erm, aug, "identical training trajectories");
    let erm_eval: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(outdir.join("erm_eval.json")).unwrap())
            .unwrap();
    let aug_eval: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(outdir.join("augmented_eval.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(erm_eval["overall_accuracy"], aug_eval["overall_accuracy"]);
}

#[test]
fn oracle_augment_then_train_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    ok(&[
        "spec", "init", "--preset", "cm", "--d", "4", "--p", "0.95", "--seed", "11", "--out",
        path_str(&spec),
    ]);
    let train_dir = dir.path().join("train");
    let test_dir = dir.path().join("test");
    ok(&["synth", "--spec", path_str(&spec), "--n", "400", "--out", path_str(&train_dir)]);
    ok(&[
        "synth", "--spec", path_str(&spec), "--n", "200", "--split", "test", "--out",
        path_str(&test_dir),
    ]);
    let cfs = dir.path().join("cfs");
    ok(&[
        "augment", "--data", path_str(&train_dir), "--spec", path_str(&spec), "--edge",
        "c_style:color", "--mapper", "oracle", "--budget", "count:100", "--out", path_str(&cfs),
    ]);
    let model = dir.path().join("model.ckpt");
    ok(&[
        "train", "--data", path_str(&train_dir), "--aug", path_str(&cfs), "--lambda", "0.5",
        "--epochs", "2", "--batch", "64", "--out", path_str(&model),
    ]);
    let report = dir.path().join("eval");
    let stdout = ok(&[
        "eval", "--model", path_str(&model), "--test", path_str(&test_dir), "--out",
        path_str(&report),
    ]);
    assert!(stdout.contains("accuracy"));
    assert!(report.with_extension("json").exists());
    assert!(report.with_extension("csv").exists());
}
