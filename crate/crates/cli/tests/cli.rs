use std::path::Path;
use std::process::{Command, Output};

use adagan::gan::Metrics;
use adagan_cli::train::{checkpoint_path, read_metrics, METRICS_FILE};

fn adagan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adagan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn train(out: &Path, extra: &[&str]) -> Output {
    let out = out.to_str().unwrap();
    let mut args = vec![
        "train", "--arch", "AdaGAN-1-3x3", "--profile", "tiny", "--dataset", "shapes", "--batch", "8", "--out", out,
    ];
    args.extend_from_slice(extra);
    adagan(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn same_records(a: &[Metrics], b: &[Metrics]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.same_trajectory(y))
}

#[test]
fn bad_architecture_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = adagan(&["train", "--arch", "AdaGAN-9", "--profile", "tiny", "--out", out]);
    assert_eq!(o.status.code(), Some(adagan_cli::EXIT_CONFIG), "{}", stderr(&o));
    assert!(stderr(&o).contains("AdaGAN-9"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = adagan(&["train", "--colour", "blue"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_writes_artifacts_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = train(out, &["--iters", "12", "--seed", "7", "--snapshot-every", "5"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for it in [5, 10, 12] {
        assert!(checkpoint_path(&a, it).exists(), "checkpoint {it}");
        assert!(a.join(format!("samples-{it:07}.ppm")).exists(), "grid {it}");
    }
    assert!(a.join("config.txt").exists());
    let ma = read_metrics(&a.join(METRICS_FILE)).unwrap();
    let mb = read_metrics(&b.join(METRICS_FILE)).unwrap();
    assert_eq!(ma.len(), 12);
    assert!(ma.iter().all(|m| m.loss_d.is_finite() && m.loss_g.is_finite()));
    assert!(same_records(&ma, &mb));
}

#[test]
fn resume_continues_the_same_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let (full, resumed) = (dir.path().join("full"), dir.path().join("resumed"));
    let o = train(&full, &["--iters", "14", "--seed", "3", "--snapshot-every", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ck = checkpoint_path(&full, 4);
    let o = train(&resumed, &["--iters", "14", "--seed", "3", "--snapshot-every", "4", "--resume", ck.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mf = read_metrics(&full.join(METRICS_FILE)).unwrap();
    let mr = read_metrics(&resumed.join(METRICS_FILE)).unwrap();
    assert_eq!(mr.first().map(|m| m.iteration), Some(5));
    assert!(same_records(&mf[4..], &mr));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.txt");
    let out = dir.path().join("run");
    std::fs::write(
        &cfg,
        format!(
            "# smoke\narch = Baseline\nprofile = tiny\niterations = 3\nbatch_size = 4\nout = {}\n",
            out.display()
        ),
    )
    .unwrap();
    let o = adagan(&["train", "--config", cfg.to_str().unwrap(), "--iters", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_metrics(&out.join(METRICS_FILE)).unwrap().len(), 2);
    let written = std::fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(written.contains("iterations = 2") && written.contains("arch = Baseline"));
}

#[test]
fn eval_rejects_a_mismatched_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let o = train(dir.path(), &["--iters", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ck = checkpoint_path(dir.path(), 1);
    let o = adagan(&["eval", "--checkpoint", ck.to_str().unwrap(), "--arch", "Baseline", "--samples", "8"]);
    assert_eq!(o.status.code(), Some(adagan_cli::EXIT_CONFIG));
    let err = stderr(&o);
    assert!(err.contains("AdaGAN-1-3x3") && err.contains("Baseline"), "{err}");
}

#[test]
fn eval_reports_ten_groups() {
    let dir = tempfile::tempdir().unwrap();
    let o = train(dir.path(), &["--iters", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ck = checkpoint_path(dir.path(), 1);
    let o = adagan(&["eval", "--checkpoint", ck.to_str().unwrap(), "--samples", "16", "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["groups"], 10);
    assert_eq!(report["two_sample_accuracy"]["groups"].as_array().unwrap().len(), 10);
    assert!(report["mode_coverage"]["mean"].is_number());
    let again = adagan(&["eval", "--checkpoint", ck.to_str().unwrap(), "--samples", "16", "--seed", "4"]);
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn audit_prints_reference_layer() {
    let o = adagan(&["audit", "--arch", "AdaGAN-3x3", "--profile", "paper", "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let first = &report["layers"][0];
    assert_eq!(first["params_naive"], 84_934_656u64);
    assert_eq!(first["params_separable"], 9_438_336u64);
    assert_eq!(first["constructed_naive"], first["params_naive"]);
}

#[test]
fn bench_emits_one_row_per_case() {
    let o = adagan(&["bench", "--side", "4", "--batch", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<serde_json::Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), adagan_cli::bench::default_grid(4, 1).len());
    assert!(rows.iter().all(|r| r["median_ms"].as_f64().unwrap() > 0.0));
}

/// The documented smoke command, at full batch size. Takes several minutes.
#[test]
#[ignore]
fn documented_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = adagan(&[
        "train", "--arch", "AdaGAN-1-3x3", "--profile", "tiny", "--dataset", "shapes", "--iters", "2000", "--seed", "7",
        "--out", out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(checkpoint_path(dir.path(), 2000).exists());
    assert!(dir.path().join("samples-0002000.ppm").exists());
}
