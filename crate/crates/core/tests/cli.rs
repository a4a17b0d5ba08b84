use cathseg::centerline::Centerline;
use cathseg::cli::{initial_checkpoint, RunConfig};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cathseg")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path
}

const SMALL: &str = r#"{
    "model": {"levels": 2, "base_filters": 4, "dropout_blocks": []},
    "training": {"batch_size": 4},
    "synth": {"image_size": 32, "noise_sigma": 0.0}
}"#;

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_data_writes_sequences_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = bin(&["gen-data", "--config", p(&cfg), "--out", p(out), "--n", "3", "--seed", "5"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("manifest.json"));
    }
    let seqs: Vec<_> = std::fs::read_dir(&a).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).collect();
    assert_eq!(seqs.len(), 3);
    assert_eq!(files(&a), files(&b));
}

#[test]
fn missing_or_invalid_config_exits_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("data");
    let o = bin(&["gen-data", "--config", p(&tmp.path().join("nope.json")), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    assert!(!out.exists());
    let cfg = write_config(tmp.path(), r#"{"synth": {"image_size": 64, "colour": 1}}"#);
    let o = bin(&["gen-data", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn train_zero_epochs_resume_and_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), SMALL);
    let cfg = RunConfig::from_json(SMALL).unwrap();
    let data = tmp.path().join("data");
    assert!(bin(&["gen-data", "--config", p(&cfg_path), "--out", p(&data), "--n", "2"]).status.success());

    let ck = tmp.path().join("init.ckpt");
    let o = bin(&["train", "--config", p(&cfg_path), "--data", p(&data), "--out", p(&ck), "--epochs", "0", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&ck).unwrap(), initial_checkpoint(&cfg, 3, Some((32, 32))).unwrap());

    let run = tmp.path().join("run.ckpt");
    let o = bin(&["train", "--config", p(&cfg_path), "--data", p(&data), "--out", p(&run), "--epochs", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read_to_string(tmp.path().join("run.loss.csv")).unwrap();
    assert_eq!(first.lines().count(), 3);
    let more = tmp.path().join("more.ckpt");
    let o = bin(&[
        "train", "--config", p(&cfg_path), "--data", p(&data), "--out", p(&more), "--epochs", "1", "--resume", p(&run),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let resumed = std::fs::read_to_string(tmp.path().join("more.loss.csv")).unwrap();
    let lines: Vec<&str> = resumed.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(resumed.lines().take(3).collect::<Vec<_>>(), first.lines().collect::<Vec<_>>());
    assert!(lines[3].starts_with("2,"));

    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let o = bin(&["train", "--config", p(&cfg_path), "--data", p(&empty), "--out", p(&tmp.path().join("x.ckpt"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn overfits_ten_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{
        "model": {"levels": 2, "base_filters": 4, "dropout_blocks": []},
        "training": {"augment": false, "batch_size": 10},
        "synth": {"image_size": 32, "frames_per_seq": 1, "noise_sigma": 0.0}
    }"#,
    );
    let data = tmp.path().join("data");
    assert!(bin(&["gen-data", "--config", p(&cfg), "--out", p(&data), "--n", "10"]).status.success());
    let ck = tmp.path().join("m.ckpt");
    let o = bin(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&ck), "--epochs", "200"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = std::fs::read_to_string(tmp.path().join("m.loss.csv")).unwrap();
    let last: f64 = trace.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(last < -0.9, "final loss {last}");
}

fn normal_shift(c: &Centerline, by: f64) -> Centerline {
    let n = c.points.len();
    let points = (0..n)
        .map(|i| {
            let (a, b) = (c.points[i.saturating_sub(1)], c.points[(i + 1).min(n - 1)]);
            let (tx, ty) = (b[0] - a[0], b[1] - a[1]);
            let len = tx.hypot(ty);
            [c.points[i][0] - by * ty / len, c.points[i][1] + by * tx / len]
        })
        .collect();
    Centerline { points, ..c.clone() }
}

#[test]
fn extract_and_evaluate_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"synth": {"image_size": 96, "noise_sigma": 0.0}, "pixel_spacing": 0.5}"#);
    let data = tmp.path().join("data");
    assert!(bin(&["gen-data", "--config", p(&cfg), "--out", p(&data), "--n", "2"]).status.success());
    let pred = tmp.path().join("pred");
    let o = bin(&["extract", "--config", p(&cfg), "--no-model", "--input", p(&data), "--out", p(&pred)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let seq = pred.join("seq_0000");
    let cl: Vec<_> = (0..4).map(|i| seq.join(format!("centerline_{i}.json"))).collect();
    assert!(cl.iter().all(|f| f.is_file()));
    assert!(!seq.join("centerline_4.json").exists());
    assert!(seq.join("overlay_0.png").is_file());

    let report = tmp.path().join("report");
    let o = bin(&["evaluate", "--config", p(&cfg), "--pred", p(&pred), "--gt", p(&data), "--out", p(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report.join("summary.json")).unwrap()).unwrap();
    assert!(summary["gt_to_seg_px"]["median"].as_f64().unwrap() <= 1.0);
    assert!(report.join("report.csv").is_file());

    // ground truth against itself
    let o = bin(&["evaluate", "--config", p(&cfg), "--pred", p(&data), "--gt", p(&data), "--out", p(&report)]);
    assert!(o.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["gt_to_seg_px"]["median"].as_f64(), Some(0.0));
    assert_eq!(summary["tip_error_px"]["median"].as_f64(), Some(0.0));
    assert_eq!(summary["percent_under_threshold"].as_f64(), Some(100.0));

    // every point moved 2 px along the normal
    let shifted = tmp.path().join("shifted");
    for s in ["seq_0000", "seq_0001"] {
        std::fs::create_dir_all(shifted.join(s)).unwrap();
        for i in 0..4 {
            let c = Centerline::load(&data.join(s).join(format!("centerline_{i}.json"))).unwrap();
            normal_shift(&c, 2.0).save(&shifted.join(s).join(format!("centerline_{i}.json"))).unwrap();
        }
    }
    let o = bin(&["evaluate", "--config", p(&cfg), "--pred", p(&shifted), "--gt", p(&data), "--out", p(&report)]);
    assert!(o.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report.join("summary.json")).unwrap()).unwrap();
    let med = summary["gt_to_seg_px"]["median"].as_f64().unwrap();
    assert!((med - 2.0).abs() <= 0.1, "median {med}");
    assert!((summary["gt_to_seg_mm"]["median"].as_f64().unwrap() - 0.5 * med).abs() < 1e-12);

    std::fs::remove_file(shifted.join("seq_0001").join("centerline_2.json")).unwrap();
    let o = bin(&["evaluate", "--config", p(&cfg), "--pred", p(&shifted), "--gt", p(&data), "--out", p(&report)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seq_0001/frame 2"));
}

#[test]
fn empty_mask_gives_failed_centerline() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("seq");
    std::fs::create_dir(&seq).unwrap();
    let frame = cathseg::imagecore::Image::zeros(32, 32);
    cathseg::imagecore::save_image_u16(&frame, &seq.join("frame_0.png")).unwrap();
    cathseg::imagecore::save_mask(&cathseg::imagecore::BinaryMask::zeros(32, 32), &seq.join("mask_0.png")).unwrap();
    let out = tmp.path().join("out");
    let o = bin(&["extract", "--no-model", "--input", p(&seq), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("centerline_0.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["success"], false);
    assert_eq!(v["points"].as_array().unwrap().len(), 0);
}

#[test]
fn extract_rejects_frames_of_another_size() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let data = tmp.path().join("data");
    assert!(bin(&["gen-data", "--config", p(&cfg), "--out", p(&data), "--n", "1"]).status.success());
    let ck = tmp.path().join("m.ckpt");
    assert!(bin(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&ck), "--epochs", "0"]).status.success());
    let big = write_config(tmp.path(), r#"{"synth": {"image_size": 48}}"#);
    let other = tmp.path().join("other");
    assert!(bin(&["gen-data", "--config", p(&big), "--out", p(&other), "--n", "1"]).status.success());
    let o = bin(&["extract", "--checkpoint", p(&ck), "--input", p(&other), "--out", p(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = bin(&["extract", "--checkpoint", p(&ck), "--input", p(&data), "--out", p(&tmp.path().join("o"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("o/seq_0000/prob_3.png").is_file());
}
