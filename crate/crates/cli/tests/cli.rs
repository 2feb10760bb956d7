//! Binary-level behavior: exit codes, artifact layout, command composition.

use rescnn_cli::commands::{cmd_eval, EvalArgs};
use rescnn_cli::config::{Dataset, RunConfig};
use rescnn_cli::synth;
use rescnn_cli::train::run_training;
use rescnn_core::eval::{evaluate, top_k_inputs, collect_activations};
use rescnn_core::model::load_checkpoint;
use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rescnn"))
}

fn quick_synth_cfg(out: &Path, seed: u64, epochs: usize) -> RunConfig {
    let mut cfg = RunConfig::defaults(Dataset::Synthetic);
    cfg.seed = seed;
    cfg.epochs = epochs;
    cfg.output_dir = out.to_path_buf();
    cfg
}

#[test]
fn train_smoke_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = bin()
        .args([
            "train",
            "--dataset",
            "synthetic",
            "--seed",
            "3",
            "--epochs",
            "1",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for name in [
        "resolved_config.json",
        "split_manifest.json",
        "epochs.csv",
        "best.ckpt",
        "final.ckpt",
        "metrics.json",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let log = fs::read_to_string(out.join("epochs.csv")).unwrap();
    assert_eq!(log.lines().count(), 2); // header + one epoch
    assert!(log.starts_with("epoch,lr,train_loss,train_acc,val_acc,wall_time_s"));
}

#[test]
fn resolved_snapshot_records_final_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    fs::write(
        &cfg_path,
        r#"{"dataset": "synthetic", "seed": 11, "epochs": 5}"#,
    )
    .unwrap();
    let out = dir.path().join("run");
    let status = bin()
        .args(["train", "--config"])
        .arg(&cfg_path)
        .args(["--epochs", "1", "--out"]) // CLI beats the file's 5
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let snapshot: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("resolved_config.json")).unwrap())
            .unwrap();
    assert_eq!(snapshot["seed"], 11);
    assert_eq!(snapshot["epochs"], 1);
    assert_eq!(snapshot["batch_size"], 20);
}

#[test]
fn missing_dataset_root_is_a_config_error() {
    let out = bin()
        .env_remove("RESCNN_DATA_ROOT")
        .args(["train", "--dataset", "bonn"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn nonexistent_data_root_is_a_data_error() {
    let out = bin()
        .args([
            "train",
            "--dataset",
            "bonn",
            "--data-root",
            "/definitely/not/there",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn eval_twice_is_identical_apart_from_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let cfg = quick_synth_cfg(&run, 17, 2);
    run_training(&cfg, false).unwrap();

    let eval_out = |path: &Path| -> serde_json::Value {
        let output = bin()
            .args(["eval", "--checkpoint"])
            .arg(run.join("final.ckpt"))
            .args(["--manifest"])
            .arg(run.join("split_manifest.json"))
            .args(["--out"])
            .arg(path)
            .output()
            .unwrap();
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
        serde_json::from_slice(&output.stdout).unwrap()
    };
    let mut a = eval_out(&dir.path().join("a.json"));
    let mut b = eval_out(&dir.path().join("b.json"));
    a.as_object_mut().unwrap().remove("generated_unix_ms");
    b.as_object_mut().unwrap().remove("generated_unix_ms");
    assert_eq!(a, b);
    // The file mirrors stdout.
    let mut f: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    f.as_object_mut().unwrap().remove("generated_unix_ms");
    assert_eq!(a, f);
}

#[test]
fn eval_supports_train_and_test_parts_and_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let cfg = quick_synth_cfg(&run, 19, 2);
    run_training(&cfg, false).unwrap();

    for part in ["train", "test"] {
        let (doc, _) = cmd_eval(&EvalArgs {
            checkpoint: run.join("final.ckpt"),
            manifest: run.join("split_manifest.json"),
            data_root: None,
            part: part.to_string(),
            out: Some(dir.path().join(format!("{part}.json"))),
            batch_size: 20,
        })
        .unwrap();
        assert_eq!(doc.part, part);

        // Library-level composition gives the same numbers.
        let (segments, split) = synth::generate(19);
        let (model, _, _) = load_checkpoint(&run.join("final.ckpt")).unwrap();
        let want = evaluate(
            &model,
            &segments,
            split.part(part).unwrap(),
            cfg.crop_len,
            20,
        )
        .unwrap();
        assert_eq!(doc.accuracy, want.report.accuracy);
        assert_eq!(doc.confusion, want.report.confusion);
    }
}

#[test]
fn run_directory_is_self_describing() {
    // Re-evaluating the best checkpoint on the val part reproduces the best
    // logged validation accuracy exactly.
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let cfg = quick_synth_cfg(&run, 23, 3);
    let artifacts = run_training(&cfg, false).unwrap();

    let (doc, _) = cmd_eval(&EvalArgs {
        checkpoint: run.join("best.ckpt"),
        manifest: run.join("split_manifest.json"),
        data_root: None,
        part: "val".to_string(),
        out: Some(dir.path().join("val.json")),
        batch_size: 20,
    })
    .unwrap();
    assert_eq!(doc.accuracy, artifacts.best_val_acc);

    let logged: Vec<f64> = fs::read_to_string(run.join("epochs.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    let max_logged = logged.iter().cloned().fold(f64::MIN, f64::max);
    assert_eq!(doc.accuracy, max_logged);
}

#[test]
fn inspect_defaults_to_top_four_and_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let cfg = quick_synth_cfg(&run, 29, 2);
    run_training(&cfg, false).unwrap();
    let inspect_dir = dir.path().join("inspect");
    let output = bin()
        .args(["inspect", "--checkpoint"])
        .arg(run.join("final.ckpt"))
        .args(["--manifest"])
        .arg(run.join("split_manifest.json"))
        .args(["--out"])
        .arg(&inspect_dir)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    // Heatmap rows == test-set size (plus the header line).
    let heatmap = fs::read_to_string(inspect_dir.join("heatmap.csv")).unwrap();
    assert_eq!(heatmap.lines().count(), 100 + 1);

    // Default top_k is 4: every unit contributes exactly 4 rows.
    let topk = fs::read_to_string(inspect_dir.join("topk.csv")).unwrap();
    let n_units = cfg.model.fc_hidden;
    assert_eq!(topk.lines().count(), 1 + 4 * n_units);

    // Rows for unit 7 match the library ranking.
    let (segments, split) = synth::generate(29);
    let (model, _, _) = load_checkpoint(&run.join("final.ckpt")).unwrap();
    let acts = collect_activations(&model, &segments, &split.test, cfg.crop_len, 20).unwrap();
    let want = top_k_inputs(&acts, 7, 4).unwrap();
    let got: Vec<(String, f64)> = topk
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("7,"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[2].to_string(), f[3].parse().unwrap())
        })
        .collect();
    assert_eq!(got, want);
}

#[test]
fn synth_check_report_only_single_epoch_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin()
        .args([
            "synth-check",
            "--seed",
            "7",
            "--epochs",
            "1",
            "--report-only",
            "--out",
        ])
        .arg(dir.path().join("sc"))
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("synthetic test accuracy"), "{stdout}");
}

#[test]
fn synth_check_is_deterministic_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run_once = |tag: &str| -> String {
        let out = dir.path().join(tag);
        let output = bin()
            .args(["synth-check", "--seed", "31", "--epochs", "2", "--report-only", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(output.status.success());
        let log = fs::read_to_string(out.join("epochs.csv")).unwrap();
        // Strip wall time.
        log.lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head).unwrap_or(l))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(run_once("a"), run_once("b"));
}
