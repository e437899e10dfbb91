//! End-to-end checks of the command-line surface: exit codes, validation
//! diagnostics, and the file outputs of each subcommand.

use std::path::PathBuf;
use std::process::Command;

fn swnet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_swnet"))
}

fn work_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("swnet-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn unknown_flag_prints_usage_and_exits_1() {
    let out = swnet().arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(text.contains("Usage"), "usage text expected, got: {text}");
}

#[test]
fn gradcheck_passes_at_seed_7() {
    let out = swnet().args(["gradcheck", "--seed", "7"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("model/end-to-end"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn gen_ranks_train_eval_plot_pipeline() {
    let dir = work_dir("pipeline");
    let train = dir.join("train.ds");
    let test = dir.join("test.ds");
    let ckpt = dir.join("model.ckpt");

    // small far-field dataset
    let out = swnet()
        .args(["gen-data", "--count", "12", "--omega", "8", "--grid-n", "12", "--m", "8"])
        .args(["--ns", "2", "--sigma", "0.06", "--seed", "4", "--out"])
        .arg(&train)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let out = swnet()
        .args(["gen-data", "--count", "4", "--omega", "8", "--grid-n", "12", "--m", "8"])
        .args(["--ns", "2", "--sigma", "0.06", "--seed", "5", "--out"])
        .arg(&test)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));

    // rank report CSV
    let ranks_csv = dir.join("ranks.csv");
    let out = swnet()
        .args(["ranks", "--omega", "8", "--grid-n", "12", "--m", "8", "--px", "4", "--pd", "4"])
        .args(["--tol", "1e-3", "--out"])
        .arg(&ranks_csv)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(&ranks_csv).unwrap();
    assert!(csv.starts_with("i,j,tol,rank,sigma_max"));
    assert_eq!(csv.lines().count(), 1 + 16);

    // short training run writes a checkpoint and its sidecar
    let out = swnet()
        .args(["train", "--train-data"])
        .arg(&train)
        .args(["--test-data"])
        .arg(&test)
        .args(["--t", "1", "--px", "4", "--pd", "4", "--window", "3", "--channels", "2"])
        .args(["--layers", "1", "--lr", "0.001", "--batch", "4", "--epochs", "2", "--seed", "1"])
        .args(["--normalize", "--out"])
        .arg(&ckpt)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(ckpt.exists());
    assert!(ckpt.with_extension("spec").exists());

    // eval prints a metric
    let out = swnet()
        .args(["eval", "--checkpoint"])
        .arg(&ckpt)
        .args(["--data"])
        .arg(&test)
        .args(["--normalize"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean relative error"));

    // plot all three views
    for (what, name) in [("eta", "eta.pgm"), ("pattern", "pattern.pgm"), ("prediction", "pred.pgm")]
    {
        let img = dir.join(name);
        let mut cmd = swnet();
        cmd.args(["plot", "--data"])
            .arg(&train)
            .args(["--index", "1", "--what", what, "--format", "pgm", "--out"])
            .arg(&img);
        if what == "prediction" {
            cmd.args(["--checkpoint"]).arg(&ckpt);
        }
        let out = cmd.output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{what}: {}", String::from_utf8_lossy(&out.stderr));
        let bytes = std::fs::read(&img).unwrap();
        assert!(bytes.starts_with(b"P5\n"));
    }

    // backproject writes an image and reports the error
    let bp = dir.join("bp.csv");
    let out = swnet()
        .args(["backproject", "--data"])
        .arg(&train)
        .args(["--index", "0", "--eps", "1e-2", "--format", "csv", "--out"])
        .arg(&bp)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("relative error"));

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn eval_with_mismatched_grid_exits_1_with_shape_diagnostic() {
    let dir = work_dir("mismatch");
    let small = dir.join("small.ds");
    let big = dir.join("big.ds");
    let ckpt = dir.join("model.ckpt");

    for (path, n) in [(&small, "12"), (&big, "16")] {
        let out = swnet()
            .args(["gen-data", "--count", "4", "--omega", "8", "--grid-n", n, "--m", "8"])
            .args(["--sigma", "0.06", "--seed", "2", "--out"])
            .arg(path)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
    }
    let out = swnet()
        .args(["train", "--train-data"])
        .arg(&small)
        .args(["--t", "1", "--px", "4", "--pd", "4", "--window", "3", "--channels", "2"])
        .args(["--layers", "1", "--batch", "4", "--epochs", "1", "--out"])
        .arg(&ckpt)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));

    let out = swnet()
        .args(["eval", "--checkpoint"])
        .arg(&ckpt)
        .args(["--data"])
        .arg(&big)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("shape mismatch"), "diagnostic: {err}");

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn missing_dataset_file_exits_1() {
    let out = swnet()
        .args(["eval", "--checkpoint", "/nonexistent.ckpt", "--data", "/nonexistent.ds"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
