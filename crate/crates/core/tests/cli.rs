use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn volsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volsr"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = volsr(args);
    assert!(
        out.status.success(),
        "volsr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn version_and_help_exit_zero() {
    let out = ok(&["--version"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("checkpoint format 1"), "{text}");
    ok(&["--help"]);
    ok(&["reconstruct", "--help"]);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(volsr(&[]).status.code(), Some(1));
    assert_eq!(volsr(&["phantom", "--bogus"]).status.code(), Some(1));
    assert_eq!(volsr(&["phantom"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.vvol");
    let code = volsr(&["phantom", "--dims", "8,8,8", "--out", s(&out)])
        .status
        .code();
    assert_eq!(code, Some(1));
    assert!(!out.exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"degrade": {"factor": 2, "sigma": 1}}"#).unwrap();
    let out = volsr(&[
        "--config",
        s(&cfg),
        "phantom",
        "--out",
        s(&dir.path().join("p.vvol")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma"));
}

#[test]
fn missing_pairs_dir_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = volsr(&[
        "train",
        "--pairs",
        s(&dir.path().join("nope")),
        "--out",
        s(&dir.path().join("run")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn phantom_degrade_upsample_metrics_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let hr = d.join("hr.vvol");
    let lr = d.join("lr.vvol");
    let up = d.join("up.vvol");
    let report = d.join("report.json");
    ok(&[
        "phantom",
        "--kind",
        "mixed",
        "--dims",
        "32,32,16",
        "--seed",
        "4",
        "--out",
        s(&hr),
    ]);
    ok(&[
        "degrade",
        "--input",
        s(&hr),
        "--factor",
        "2",
        "--noise",
        "0.01",
        "--seed",
        "1",
        "--out",
        s(&lr),
    ]);
    ok(&[
        "upsample",
        "--input",
        s(&lr),
        "--method",
        "trilinear",
        "--factor",
        "2",
        "--out",
        s(&up),
    ]);
    ok(&[
        "metrics",
        "--pred",
        s(&up),
        "--truth",
        s(&hr),
        "--heatmaps",
        "--out",
        s(&report),
    ]);

    let lr_vol = volsr::volume::read_volume(&lr).unwrap();
    assert_eq!(lr_vol.dims(), [16, 16, 16]);
    let r = json(&report);
    let psnr = r["psnr_db"].as_f64().unwrap();
    assert!(psnr > 15.0 && psnr < 60.0, "{psnr}");
    assert!(r["ssim"].as_f64().unwrap() > 0.3);
    assert!(d.join("report_dssim.vvol").exists());
    assert!(std::fs::read_dir(d).unwrap().any(|e| e
        .unwrap()
        .path()
        .extension()
        .is_some_and(|x| x == "png")));

    let echo = json(&d.join("lr.vvol.run.json"));
    assert_eq!(echo["command"], "degrade");
    assert_eq!(echo["degrade"]["factor"], 2);
    assert_eq!(echo["degrade"]["noise_sigma"], 0.01);
    assert!(echo["version"]
        .as_str()
        .unwrap()
        .contains("checkpoint format"));
    assert_eq!(json(&d.join("up.vvol.run.json"))["method"], "linear");
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let hr = d.join("hr.vvol");
    ok(&["phantom", "--dims", "32,32,16", "--out", s(&hr)]);
    let cfg = d.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"degrade": {"factor": 2, "seed": 5, "noise_sigma": 0.05}}"#,
    )
    .unwrap();
    let a = d.join("a.vvol");
    let b = d.join("b.vvol");
    ok(&[
        "--config",
        s(&cfg),
        "degrade",
        "--input",
        s(&hr),
        "--seed",
        "6",
        "--out",
        s(&a),
    ]);
    let echo = json(&d.join("a.vvol.run.json"));
    assert_eq!(echo["degrade"]["seed"], 6);
    assert_eq!(echo["degrade"]["noise_sigma"], 0.05);
    ok(&["degrade", "--input", s(&hr), "--out", s(&b)]);
    let echo = json(&d.join("b.vvol.run.json"));
    assert_eq!(echo["degrade"]["seed"], 0);
    assert_eq!(echo["degrade"]["noise_sigma"], 0.0);
}

#[test]
fn degrade_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let hr = d.join("hr.vvol");
    ok(&["phantom", "--dims", "32,32,16", "--out", s(&hr)]);
    for name in ["a.vvol", "b.vvol"] {
        ok(&[
            "degrade",
            "--input",
            s(&hr),
            "--noise",
            "0.05",
            "--seed",
            "9",
            "--out",
            s(&d.join(name)),
        ]);
    }
    assert_eq!(
        std::fs::read(d.join("a.vvol")).unwrap(),
        std::fs::read(d.join("b.vvol")).unwrap()
    );
}

#[test]
fn pairs_train_and_cnn_upsample() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let hr = d.join("hr.vvol");
    ok(&[
        "phantom",
        "--dims",
        "32,32,16",
        "--seed",
        "2",
        "--out",
        s(&hr),
    ]);
    let pairs = d.join("pairs");
    ok(&[
        "pairs",
        "--input",
        s(&hr),
        "--factor",
        "2",
        "--out",
        s(&pairs),
    ]);
    assert!(pairs.join("run.json").exists());
    let run = d.join("run");
    ok(&[
        "train",
        "--pairs",
        s(&pairs),
        "--epochs",
        "2",
        "--width",
        "4",
        "--batch-size",
        "1",
        "--learning-rate",
        "1e-3",
        "--validation-fraction",
        "0",
        "--out",
        s(&run),
    ]);
    let log = std::fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    let records: Vec<Value> = log
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 2);
    assert!(records
        .iter()
        .all(|r| r["train_loss"].as_f64().unwrap().is_finite()));
    assert!(run.join("model.vnet").exists());
    assert_eq!(json(&run.join("run.json"))["train"]["hidden_width"], 4);

    let lr = d.join("lr.vvol");
    let up = d.join("up.vvol");
    ok(&["degrade", "--input", s(&hr), "--out", s(&lr)]);
    let model = run.join("model.vnet");
    ok(&[
        "upsample",
        "--input",
        s(&lr),
        "--method",
        "cnn",
        "--checkpoint",
        s(&model),
        "--out",
        s(&up),
    ]);
    assert_eq!(
        volsr::volume::read_volume(&up).unwrap().dims(),
        [32, 32, 16]
    );
    let mismatch = volsr(&[
        "upsample",
        "--input",
        s(&lr),
        "--method",
        "cnn",
        "--checkpoint",
        s(&model),
        "--factor",
        "4",
        "--out",
        s(&d.join("x.vvol")),
    ]);
    assert_eq!(mismatch.status.code(), Some(1));
    let no_ckpt = volsr(&[
        "upsample",
        "--input",
        s(&lr),
        "--method",
        "cnn",
        "--out",
        s(&d.join("y.vvol")),
    ]);
    assert_eq!(no_ckpt.status.code(), Some(1));
}

#[test]
fn corrupt_checkpoint_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let hr = d.join("hr.vvol");
    ok(&["phantom", "--dims", "16,16,16", "--out", s(&hr)]);
    let bad = d.join("bad.vnet");
    std::fs::write(&bad, b"garbage").unwrap();
    let out = volsr(&[
        "upsample",
        "--input",
        s(&hr),
        "--method",
        "cnn",
        "--checkpoint",
        s(&bad),
        "--out",
        s(&d.join("u.vvol")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_reports_json_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["gradcheck", "--out", s(dir.path())]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("max relative error"));
    let r = json(&dir.path().join("gradcheck.json"));
    assert!(r["max_rel_error"].as_f64().unwrap() < 1e-3);
}

#[test]
fn benchmark_writes_csv_with_fixed_header() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = d.join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    for seed in 0..2 {
        let p = corpus.join(format!("v{seed}.vvol"));
        ok(&[
            "phantom",
            "--dims",
            "32,32,16",
            "--seed",
            &seed.to_string(),
            "--out",
            s(&p),
        ]);
    }
    let out_dir = d.join("bench");
    ok(&[
        "benchmark",
        "--corpus",
        s(&corpus),
        "--methods",
        "none,linear,bspline",
        "--out",
        s(&out_dir),
    ]);
    let csv = std::fs::read_to_string(out_dir.join("benchmark.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), volsr::cli::BENCHMARK_CSV_HEADER);
    let methods: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["none", "linear", "bspline"]);
    let table = json(&out_dir.join("benchmark.json"));
    assert_eq!(table["per_volume"].as_array().unwrap().len(), 6);
    assert_eq!(table["expected_ordering"], volsr::cli::EXPECTED_ORDERING);
}

#[test]
fn stacks_then_reconstruct() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let hr = d.join("hr.vvol");
    ok(&[
        "phantom",
        "--dims",
        "32,32,32",
        "--seed",
        "1",
        "--out",
        s(&hr),
    ]);
    let stacks = d.join("stacks");
    ok(&[
        "stacks",
        "--input",
        s(&hr),
        "--sigma-translation",
        "0.5",
        "--seed",
        "2",
        "--out",
        s(&stacks),
    ]);
    let poses = json(&stacks.join("true_poses.json"));
    assert_eq!(poses.as_array().unwrap().len(), 3);
    let dirs: Vec<String> = ["stack_z", "stack_y", "stack_x"]
        .iter()
        .map(|n| s(&stacks.join(n)).to_string())
        .collect();
    let out = d.join("recon");
    let mut args = vec!["reconstruct"];
    for p in &dirs {
        args.extend(["--stacks", p.as_str()]);
    }
    args.extend([
        "--method",
        "linear",
        "--outer-iterations",
        "1",
        "--sr-steps",
        "2",
        "--no-register",
        "--truth",
        s(&hr),
        "--out",
        s(&out),
    ]);
    ok(&args);
    let recon = volsr::volume::read_volume(out.join("recon.vvol")).unwrap();
    assert_eq!(recon.dims(), [32, 32, 32]);
    let report = json(&out.join("recon_report.json"));
    assert_eq!(report["upsampler"], "linear");
    assert_eq!(report["rounds"].as_array().unwrap().len(), 1);
    assert!(json(&out.join("metrics.json"))["psnr_db"].as_f64().unwrap() > 10.0);

    let one = volsr(&[
        "reconstruct",
        "--stacks",
        dirs[0].as_str(),
        "--out",
        s(&d.join("r1")),
    ]);
    assert_eq!(one.status.code(), Some(1));
}

#[test]
fn pairs_from_stack_slices() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let hr = d.join("hr.vvol");
    ok(&[
        "phantom",
        "--dims",
        "32,32,32",
        "--seed",
        "3",
        "--out",
        s(&hr),
    ]);
    let pairs = d.join("pairs");
    let out = ok(&[
        "pairs",
        "--input",
        s(&hr),
        "--factor",
        "2",
        "--z-slices",
        "4",
        "--stack-slices",
        "--out",
        s(&pairs),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("6 pairs"));
    let echo = json(&pairs.join("run.json"));
    assert_eq!(echo["stack_slices"], true);
    assert_eq!(echo["acquisition"]["inplane_factor"], 2);
    assert_eq!(echo["acquisition"]["thickness_ratio"], 2);
}
