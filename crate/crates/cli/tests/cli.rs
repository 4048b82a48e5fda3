use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use prnu_core::fingerprint::{estimate_prnu_from_images, Fingerprint};
use prnu_core::imaging::{FrameSet, ResidualConfig};
use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_prnu-forge"));
    for a in args {
        cmd.arg(a);
    }
    cmd.env("RUST_LOG", "error").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scenario(dir: &Path, seed: u64, frames: usize, videos: usize) -> PathBuf {
    let cfg = format!(
        r#"{{"seed": {seed}, "sensor_dims": [128, 128], "video_dims": [64, 64],
            "conversion": {{"s": 0.7, "theta": 0.0, "cx": 12.0, "cy": 12.0}},
            "images": 12, "videos": {videos}, "frames_per_video": {frames},
            "model": "dof2", "jitter": {{"shift_sigma": 2.0, "round_shifts": true}}}}"#
    );
    let cfg_path = dir.join(format!("scenario_{seed}.json"));
    fs::write(&cfg_path, cfg).unwrap();
    let out = dir.join(format!("cam_{seed}"));
    let o = run(&[&"synth", &cfg_path, &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

#[test]
fn fingerprint_images_round_trips_bit_exactly() {
    let t = TempDir::new().unwrap();
    let cam = scenario(t.path(), 1, 4, 1);
    let out = t.path().join("k.prnf");
    let o = run(&[&"fingerprint-images", &cam.join("images"), &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let images = FrameSet::load_dir(cam.join("images"), "x").unwrap();
    let direct = estimate_prnu_from_images(&images, &ResidualConfig::default()).unwrap();
    let loaded = Fingerprint::load(&out).unwrap();
    assert_eq!(loaded.plane, direct.quantized().plane);
    assert_eq!(loaded.frames_used, 12);
}

#[test]
fn empty_dir_exits_2() {
    let t = TempDir::new().unwrap();
    let empty = t.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = t.path().join("k.prnf");
    let o = run(&[&"fingerprint-images", &empty, &out]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
    let o = run(&[&"fingerprint-video", &empty, &out]);
    assert_eq!(code(&o), 2);
}

#[test]
fn corrupted_image_exits_2_and_names_the_file() {
    let t = TempDir::new().unwrap();
    let cam = scenario(t.path(), 2, 4, 1);
    let bad = cam.join("images").join("frame_000007.png");
    fs::write(&bad, b"\x89PNG\r\n\x1a\ngarbage").unwrap();
    let out = t.path().join("k.prnf");
    let o = run(&[&"fingerprint-images", &cam.join("images"), &out]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("frame_000007.png"), "{}", stderr(&o));
    assert!(!out.exists());
    assert!(!t.path().join("k.prnf.meta").exists());
}

#[test]
fn unreachable_threshold_exits_3() {
    let t = TempDir::new().unwrap();
    let cam = scenario(t.path(), 3, 4, 1);
    let out = t.path().join("kiv.prnf");
    let o = run(&[
        &"convert-iv",
        &cam.join("camera.prnf"),
        &cam.join("video_000"),
        &out,
        &"--pce-threshold",
        &"1e9",
        &"--particles",
        &"8",
        &"--iterations",
        &"5",
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn missing_fingerprint_exits_2() {
    let t = TempDir::new().unwrap();
    let cam = scenario(t.path(), 4, 4, 1);
    let o = run(&[&"test", &t.path().join("nope.prnf"), &cam.join("video_000")]);
    assert_eq!(code(&o), 2);
}

#[test]
fn image_domain_fingerprint_is_refused_for_queries() {
    let t = TempDir::new().unwrap();
    let cam = scenario(t.path(), 5, 4, 1);
    let o = run(&[&"test", &cam.join("camera.prnf"), &cam.join("video_000")]);
    assert_eq!(code(&o), 2);
}

fn test_json(k: &Path, frames: &Path, extra: &[&str]) -> Value {
    let mut args: Vec<&dyn AsRef<std::ffi::OsStr>> = vec![&"test", &k, &frames, &"--json"];
    for e in extra {
        args.push(e);
    }
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn matching_and_foreign_queries() {
    let t = TempDir::new().unwrap();
    let own = scenario(t.path(), 6, 51, 1);
    let other = scenario(t.path(), 7, 51, 1);
    let k = own.join("camera_video.prnf");
    let hit = test_json(&k, &own.join("video_000"), &["--strategy", "complete", "--frames", "5", "--seed", "9"]);
    assert_eq!(hit["decision"], "attributed");
    assert_eq!(hit["per_frame"].as_array().unwrap().len(), 5);
    assert!(hit["per_frame"].as_array().unwrap().iter().all(|f| f["index"] != 1));
    let miss = test_json(&k, &other.join("video_000"), &["--strategy", "quick", "--frames", "50"]);
    assert_eq!(miss["decision"], "rejected");
    let again = test_json(&k, &own.join("video_000"), &["--strategy", "complete", "--frames", "5", "--seed", "9"]);
    assert_eq!(hit, again);
}

#[test]
fn flags_override_config_file() {
    let t = TempDir::new().unwrap();
    let cam = scenario(t.path(), 8, 8, 1);
    let cfg = t.path().join("run.json");
    fs::write(&cfg, r#"{"strategy": "quick", "threshold": 1e9, "json": true}"#).unwrap();
    let k = cam.join("camera_video.prnf");
    let frames = cam.join("video_000");
    let o = run(&[&"--config", &cfg, &"test", &k, &frames]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["strategy"], "quick");
    assert_eq!(v["decision"], "rejected");
    let o = run(&[&"--config", &cfg, &"test", &k, &frames, &"--threshold", &"60"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["decision"], "attributed");
    fs::write(&cfg, r#"{"treshold": 5}"#).unwrap();
    let o = run(&[&"--config", &cfg, &"test", &k, &frames]);
    assert_eq!(code(&o), 2);
}

#[test]
fn video_fingerprint_writes_state_and_snapshots() {
    let t = TempDir::new().unwrap();
    let cam = scenario(t.path(), 10, 9, 1);
    let out = t.path().join("kv.prnf");
    let o = run(&[&"fingerprint-video", &cam.join("video_000"), &out, &"--snapshots"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let state: Value = serde_json::from_str(&fs::read_to_string(t.path().join("kv.prnf.state.json")).unwrap()).unwrap();
    let members = state["member_indices"].as_array().unwrap().len();
    let snaps = fs::read_dir(t.path().join("kv.prnf.snapshots"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "prnf"))
        .count();
    assert_eq!(snaps, members);
    let kv = Fingerprint::load(&out).unwrap();
    assert_eq!(kv.frames_used, members);
}

#[test]
fn degenerate_aggregation_still_succeeds() {
    let t = TempDir::new().unwrap();
    let cam = scenario(t.path(), 11, 3, 1);
    let out = t.path().join("kv.prnf");
    let o = run(&[&"fingerprint-video", &cam.join("video_000"), &out, &"--delta", &"0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    let kv = Fingerprint::load(&out).unwrap();
    assert_eq!(kv.metadata.get("degenerate").map(String::as_str), Some("true"));
    assert_eq!(kv.frames_used, 1);
}

fn experiment(dir: &Path, cams: &[(&str, &Path)], queries: &[(&str, &str, PathBuf)]) -> PathBuf {
    let cameras: Vec<Value> = cams
        .iter()
        .map(|(id, p)| serde_json::json!({"id": id, "fingerprint": p}))
        .collect();
    let queries: Vec<Value> = queries
        .iter()
        .map(|(id, cam, p)| serde_json::json!({"id": id, "camera": cam, "frames": p}))
        .collect();
    let cfg = serde_json::json!({"cameras": cameras, "queries": queries, "strategy": "quick", "frames": 4, "seed": 3});
    let path = dir.join("experiment.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn roc_separates_and_rejects_single_class() {
    let t = TempDir::new().unwrap();
    let a = scenario(t.path(), 12, 6, 3);
    let b = scenario(t.path(), 13, 6, 3);
    let ka = a.join("camera_video.prnf");
    let kb = b.join("camera_video.prnf");
    let mut qs = Vec::new();
    for v in 0..3 {
        qs.push((format!("a{v}"), "a", a.join(format!("video_{v:03}"))));
        qs.push((format!("b{v}"), "b", b.join(format!("video_{v:03}"))));
    }
    let qs: Vec<(&str, &str, PathBuf)> = qs.iter().map(|(i, c, p)| (i.as_str(), *c, p.clone())).collect();
    let exp = experiment(t.path(), &[("a", &ka), ("b", &kb)], &qs);
    let out = t.path().join("roc");
    let o = run(&[&"roc", &exp, &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["averaged"]["auc"], 1.0);
    for f in ["scores.csv", "roc_a.csv", "roc_b.csv", "roc_average.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let exp = experiment(t.path(), &[("a", &ka)], &qs[..1]);
    let o = run(&[&"roc", &exp, &t.path().join("roc1")]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}
