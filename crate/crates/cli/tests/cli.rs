//! End-to-end pipeline tests driving the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_latentflow")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("LATENTFLOW_SEED")
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("latentflow-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.txt");
    fs::write(
        &path,
        "\
data.kind = gaussians
data.classes = 2
data.seq_len = 4
data.channels = 2
data.n_per_class = 64
model.hidden = 24,24
model.embed_dim = 6
train.steps = 60
train.batch_size = 16
train.warmup_steps = 5
solver.method = euler
solver.num_steps = 8
seed = 3
",
    )
    .unwrap();
    path
}

#[test]
fn oracle_check_passes_and_writes_manifest() {
    let dir = temp_dir("oracle");
    let out = run(&[
        "oracle-check",
        "--mu",
        "3",
        "--sigma",
        "0.5",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_success(&out, "oracle-check");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("max binned deviation"), "stdout: {stdout}");
    let manifest = fs::read_to_string(dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"command\": \"oracle-check\""));
}

#[test]
fn usage_errors_exit_2() {
    // Missing required --checkpoint.
    let out = run(&["generate", "--num", "4", "--out", "x.lseq"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--checkpoint"), "stderr must name the flag: {stderr}");

    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = temp_dir("missing");
    let out = run(&[
        "generate",
        "--checkpoint",
        dir.join("nope.mlpf").to_str().unwrap(),
        "--out",
        dir.join("x.lseq").to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn full_pipeline() {
    let dir = temp_dir("pipeline");
    let config = write_tiny_config(&dir);
    let ckpt = dir.join("model.mlpf");

    let train_dir = dir.join("train");
    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--out-dir",
        train_dir.to_str().unwrap(),
    ]);
    assert_success(&out, "train");
    assert!(ckpt.exists());
    let log = fs::read_to_string(train_dir.join("metrics.csv")).unwrap();
    assert!(log.starts_with("step,loss,pair_cost,ema_loss"));
    assert_eq!(log.lines().count(), 61, "one row per step plus header");
    assert!(train_dir.join("eval.lseq").exists());
    assert!(train_dir.join("manifest.json").exists());

    // Generation: LSEQ + labels sidecar + trajectory CSV.
    let gen_dir = dir.join("gen");
    let gen = dir.join("generated.lseq");
    let out = run(&[
        "generate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--num",
        "12",
        "--class",
        "balanced",
        "--solver",
        "euler",
        "--steps",
        "8",
        "--record-trajectory",
        "--csv",
        "--out",
        gen.to_str().unwrap(),
        "--out-dir",
        gen_dir.to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert_success(&out, "generate");
    assert!(gen.exists());
    assert!(dir.join("generated.lseq.labels.json").exists());
    assert!(dir.join("generated.csv").exists());
    assert!(gen_dir.join("trajectory.csv").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(gen_dir.join("manifest.json")).unwrap()).unwrap();
    // 12 euler solves with 8 steps each.
    assert_eq!(manifest["nfe_total"], serde_json::json!(96));

    // Determinism: the same seed reproduces identical bytes.
    let gen2 = dir.join("generated2.lseq");
    let out = run(&[
        "generate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--num",
        "12",
        "--class",
        "balanced",
        "--solver",
        "euler",
        "--steps",
        "8",
        "--out",
        gen2.to_str().unwrap(),
        "--out-dir",
        dir.join("gen2").to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert_success(&out, "generate (repeat)");
    assert_eq!(fs::read(&gen).unwrap(), fs::read(&gen2).unwrap());

    // Inversion of the training eval split under original conditions.
    let inv_dir = dir.join("inv");
    let inverted = dir.join("inverted.lseq");
    let out = run(&[
        "invert",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        train_dir.join("eval.lseq").to_str().unwrap(),
        "--labels",
        train_dir.join("eval.labels.json").to_str().unwrap(),
        "--t-edit",
        "0.04",
        "--s",
        "5",
        "--k",
        "4",
        "--lambda-kl",
        "0.2",
        "--cond",
        "orig",
        "--pred-space",
        "velocity",
        "--out",
        inverted.to_str().unwrap(),
        "--out-dir",
        inv_dir.to_str().unwrap(),
    ]);
    assert_success(&out, "invert");
    assert!(inverted.exists());

    // Edit everything toward class 1.
    let edit_dir = dir.join("edit");
    let edited = dir.join("edited.lseq");
    let out = run(&[
        "edit",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        train_dir.join("eval.lseq").to_str().unwrap(),
        "--c-orig",
        "null",
        "--c-edit",
        "1",
        "--t-edit",
        "0.04",
        "--s",
        "5",
        "--k",
        "2",
        "--weights",
        "0,1",
        "--solver",
        "euler",
        "--forward-steps",
        "5",
        "--out",
        edited.to_str().unwrap(),
        "--out-dir",
        edit_dir.to_str().unwrap(),
    ]);
    assert_success(&out, "edit");
    assert!(edited.exists());

    // Metrics of generated vs the exported reference.
    let eval_dir = dir.join("eval");
    let out = run(&[
        "eval",
        "--config",
        config.to_str().unwrap(),
        "--generated",
        gen.to_str().unwrap(),
        "--reference",
        train_dir.join("eval.lseq").to_str().unwrap(),
        "--labels",
        dir.join("generated.lseq.labels.json").to_str().unwrap(),
        "--out-dir",
        eval_dir.to_str().unwrap(),
    ]);
    assert_success(&out, "eval");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval_dir.join("report.json")).unwrap()).unwrap();
    for key in ["frechet", "lpaps", "adherence", "straightness", "nfe", "config_hash"] {
        assert!(report.get(key).is_some(), "report missing {key}");
    }
    assert!(report["frechet"].as_f64().unwrap().is_finite());

    // Ablation sweep over guidance: one row per grid value plus the plot.
    let ablate_dir = dir.join("ablate");
    let out = run(&[
        "ablate",
        "--config",
        config.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--sweep",
        "cfg",
        "--grid",
        "0,1,2",
        "--items",
        "8",
        "--out-dir",
        ablate_dir.to_str().unwrap(),
    ]);
    assert_success(&out, "ablate cfg");
    let results = fs::read_to_string(ablate_dir.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 4, "header plus 3 rows: {results}");
    assert!(ablate_dir.join("sweep.svg").exists());

    // t-edit sweep with both methods.
    let ablate2_dir = dir.join("ablate2");
    let out = run(&[
        "ablate",
        "--config",
        config.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--sweep",
        "t-edit",
        "--grid",
        "0.0,0.2",
        "--items",
        "6",
        "--s",
        "4",
        "--k",
        "2",
        "--weights",
        "0,1",
        "--out-dir",
        ablate2_dir.to_str().unwrap(),
    ]);
    assert_success(&out, "ablate t-edit");
    let results = fs::read_to_string(ablate2_dir.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 5, "header plus 2x2 rows: {results}");
}

#[test]
fn invert_requires_labels_for_original_condition() {
    let dir = temp_dir("invert-labels");
    let config = write_tiny_config(&dir);
    let ckpt = dir.join("model.mlpf");
    let train_dir = dir.join("train");
    assert_success(
        &run(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--out",
            ckpt.to_str().unwrap(),
            "--out-dir",
            train_dir.to_str().unwrap(),
        ]),
        "train",
    );
    let out = run(&[
        "invert",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        train_dir.join("eval.lseq").to_str().unwrap(),
        "--cond",
        "orig",
        "--out",
        dir.join("z.lseq").to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--labels"));
}
