use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cmfdnet::blocks::CmfdNet;
use cmfdnet::data::{pnm, resize_bilinear, Sample};
use cmfdnet::metrics::MetricsReport;
use cmfdnet::train::predict_samples;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmfdnet"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let data = dir.join("data");
    let mut args = vec!["synth", "--out", p(&data)];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    data
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

/// Trains one short epoch on a small dataset and returns (data, run dir).
fn quick_model(dir: &Path, extra: &[&str]) -> (PathBuf, PathBuf) {
    let data = synth(dir, &["--count", "12", "--seed", "4"]);
    let cfg = write(
        dir,
        "quick.json",
        r#"{"train": {"epochs": 1, "batch_size": 4}}"#,
    );
    let out_dir = dir.join("run");
    let mut args = vec![
        "train",
        "--config",
        p(&cfg),
        "--data",
        p(&data),
        "--out",
        p(&out_dir),
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    (data, out_dir)
}

#[test]
fn synth_default_spec_and_seeds() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), &[]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["splits"]["train"].as_array().unwrap().len(), 160);
    assert_eq!(manifest["splits"]["test"].as_array().unwrap().len(), 40);
    assert_eq!(std::fs::read_dir(data.join("images")).unwrap().count(), 200);

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = run(&["synth", "--out", p(d), "--seed", "7", "--count", "20"]);
        assert_eq!(code(&out), 0);
    }
    let read = |d: &Path| std::fs::read(d.join("manifest.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(
        std::fs::read(a.join("images/s0005.ppm")).unwrap(),
        std::fs::read(b.join("images/s0005.ppm")).unwrap()
    );
}

#[test]
fn synth_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let file = write(dir.path(), "file.txt", "x");
    assert_eq!(code(&run(&["synth", "--out", p(&file)])), 2);
    let bad = write(dir.path(), "spec.json", r#"{"count": 10, "colour": 1}"#);
    assert_eq!(
        code(&run(&[
            "synth",
            "--spec",
            p(&bad),
            "--out",
            p(&dir.path().join("d"))
        ])),
        2
    );
    let bad = write(dir.path(), "spec2.json", r#"{"test_fraction": 1.5}"#);
    assert_eq!(
        code(&run(&[
            "synth",
            "--spec",
            p(&bad),
            "--out",
            p(&dir.path().join("d"))
        ])),
        2
    );
}

#[test]
fn print_defaults_round_trips_through_config() {
    let out = run(&["synth", "--print-defaults"]);
    assert_eq!(code(&out), 0);
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "defaults.json",
        &String::from_utf8(out.stdout).unwrap(),
    );
    // the printed defaults are a valid config on their own
    let out = run(&[
        "train",
        "--config",
        p(&cfg),
        "--data",
        p(&dir.path().join("none")),
        "--out",
        "x",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("does not exist"), "{}", stderr(&out));
}

#[test]
fn help_lists_every_flag_and_unknown_flags_fail() {
    let out = run(&["train", "--help"]);
    assert_eq!(code(&out), 0);
    let help = String::from_utf8(out.stdout).unwrap();
    for flag in [
        "--config",
        "--data",
        "--out",
        "--seed",
        "--epochs",
        "--no-cmd",
        "--no-msa",
        "--no-fd",
        "--attention",
    ] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
    assert_eq!(code(&run(&["train", "--no-such-flag"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn train_config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "train",
        "--data",
        p(&dir.path().join("missing")),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(code(&out), 2);
    let cfg = write(dir.path(), "bad.json", r#"{"train": {"epochz": 3}}"#);
    let out = run(&["train", "--config", p(&cfg), "--data", ".", "--out", "o"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("epochz"), "{}", stderr(&out));
}

#[test]
fn train_divergence_exits_3() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), &["--count", "8"]);
    let cfg = write(
        dir.path(),
        "hot.json",
        r#"{"train": {"epochs": 3, "batch_size": 4, "lr": 1e30}}"#,
    );
    let out = run(&[
        "train",
        "--config",
        p(&cfg),
        "--data",
        p(&data),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("non-finite"));
}

#[test]
fn ablation_flags_reach_the_model() {
    let dir = TempDir::new().unwrap();
    let (_, run_dir) = quick_model(dir.path(), &["--no-cmd", "--attention", "cbam"]);
    let cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("config.json")).unwrap())
            .unwrap();
    assert_eq!(cfg["model"]["use_cmd"], false);
    assert_eq!(cfg["model"]["use_msa"], true);
    assert_eq!(cfg["model"]["attention"], "cbam");
    let log = std::fs::read_to_string(run_dir.join("log.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = log
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 1);
    for key in ["epoch", "lr", "mean_loss", "train_mdice", "val_mdice"] {
        assert!(lines[0].get(key).is_some(), "{key}");
    }
    let (net, _) =
        CmfdNet::from_checkpoint::<f32>(&std::fs::read(run_dir.join("model.cmfd")).unwrap())
            .unwrap();
    assert!(!net.config.use_cmd);
}

#[test]
fn eval_model_and_checkpoint_errors() {
    let dir = TempDir::new().unwrap();
    let (data, run_dir) = quick_model(dir.path(), &[]);
    let model = run_dir.join("model.cmfd");
    let report_path = dir.path().join("report.json");
    let out = run(&[
        "eval",
        "--model",
        p(&model),
        "--data",
        p(&data),
        "--report",
        p(&report_path),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = String::from_utf8(out.stdout).unwrap();
    for name in ["mDice", "mIoU", "Fbw", "S_alpha", "E_xi", "MAE"] {
        assert!(table.contains(name), "{table}");
    }
    let report: MetricsReport =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let n = report.per_image.len() as f64;
    let manual = report.per_image.iter().map(|m| m.mae).sum::<f64>() / n;
    assert!((report.means.mae - manual).abs() < 1e-12);
    let manual = report.per_image.iter().map(|m| m.mdice).sum::<f64>() / n;
    assert!((report.means.mdice - manual).abs() < 1e-12);

    // config whose channels disagree with the checkpoint
    let other = write(
        dir.path(),
        "other.json",
        r#"{"model": {"channels": [4, 8, 16, 32]}}"#,
    );
    let out = run(&[
        "eval",
        "--model",
        p(&model),
        "--config",
        p(&other),
        "--data",
        p(&data),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("does not match"), "{}", stderr(&out));

    let mut bytes = std::fs::read(&model).unwrap();
    bytes[..4].copy_from_slice(b"NOPE");
    let broken = dir.path().join("broken.cmfd");
    std::fs::write(&broken, bytes).unwrap();
    let out = run(&["eval", "--model", p(&broken), "--data", p(&data)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bad magic"), "{}", stderr(&out));
}

#[test]
fn eval_ground_truth_as_prediction_is_perfect() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), &["--count", "15"]);
    let report_path = dir.path().join("r.json");
    let masks = data.join("masks");
    let out = run(&[
        "eval",
        "--pred-dir",
        p(&masks),
        "--data",
        p(&data),
        "--report",
        p(&report_path),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: MetricsReport =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let ideal = [1.0, 1.0, 1.0, 1.0, 1.0, 0.0];
    for (v, e) in report.means.values().iter().zip(ideal) {
        assert!((v - e).abs() < 1e-8, "{:?}", report.means);
    }
}

#[test]
fn infer_writes_masks_at_input_size() {
    let dir = TempDir::new().unwrap();
    let (_, run_dir) = quick_model(dir.path(), &[]);
    let model = run_dir.join("model.cmfd");
    // an image whose size differs from the model input
    let odd = synth(&dir.path().join("odd"), &["--count", "2", "--size", "40"]);
    let image = odd.join("images/s0000.ppm");
    let (mask_path, prob_path) = (dir.path().join("m.pgm"), dir.path().join("p.pgm"));
    let out = run(&[
        "infer",
        "--model",
        p(&model),
        "--image",
        p(&image),
        "--out",
        p(&mask_path),
        "--prob",
        p(&prob_path),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mask = pnm::decode(&std::fs::read(&mask_path).unwrap()).unwrap();
    assert_eq!((mask.height, mask.width, mask.channels), (40, 40, 1));
    assert!(mask.data.iter().all(|&v| v == 0 || v == 255));

    let (net, params) = CmfdNet::from_checkpoint::<f32>(&std::fs::read(&model).unwrap()).unwrap();
    let (h, w, planar) = pnm::decode_rgb(&std::fs::read(&image).unwrap()).unwrap();
    let sample = Sample {
        id: "x".into(),
        height: h,
        width: w,
        image: planar,
        mask: vec![0; h * w],
    }
    .resized(64);
    let probs = predict_samples(&net, &params, &[sample], 1)
        .unwrap()
        .remove(0);
    let probs = resize_bilinear(&probs, (64, 64), (h, w));
    let expect: Vec<u8> = probs.iter().map(|&v| (v * 255.0).round() as u8).collect();
    let prob = pnm::decode(&std::fs::read(&prob_path).unwrap()).unwrap();
    assert_eq!(prob.data, expect);
    let binary: Vec<u8> = probs
        .iter()
        .map(|&v| if v >= 0.5 { 255 } else { 0 })
        .collect();
    assert_eq!(mask.data, binary);

    let junk = write(dir.path(), "junk.ppm", "P3\n1 1\n255\n0 0 0\n");
    let out = run(&[
        "infer",
        "--model",
        p(&model),
        "--image",
        p(&junk),
        "--out",
        p(&mask_path),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn selfcheck_passes_and_catches_fault() {
    let out = run(&["selfcheck"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("gradient_full_model"));
    assert!(!text.contains("FAIL"));

    let out = run(&["selfcheck", "--skip-gradients", "--inject-scan-fault"]);
    assert_eq!(code(&out), 1);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.lines()
            .any(|l| l.starts_with("scan_bijectivity") && l.contains("FAIL")),
        "{text}"
    );
}
