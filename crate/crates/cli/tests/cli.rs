use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use stickerloc::imaging::save_pgm;
use stickerloc::{CameraIntrinsics, GreyImage};

fn stickerloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stickerloc")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout).lines().map(|l| serde_json::from_str(l).expect("json line")).collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_blank(path: &Path) {
    let k = CameraIntrinsics::default();
    save_pgm(&GreyImage::filled(k.width, k.height, 120), path).unwrap();
}

#[test]
fn blur_check_reproduces_the_shutter_bound() {
    let out = stickerloc(&["blur-check", "--focal", "3.6e-3", "--distance", "1", "--velocity", "1", "--pixel-pitch", "1.4e-6"]);
    assert!(out.status.success());
    let v = &stdout_json(&out)[0];
    let n = v["n_min"].as_f64().unwrap();
    assert!((n - 2571.43).abs() < 0.5, "{n}");
    assert!(v.get("verdict").is_none());

    let out = stickerloc(&["blur-check", "--focal", "3.6e-3", "--distance", "1", "--velocity", "1", "--pixel-pitch", "1.4e-6", "--shutter", "3000"]);
    assert_eq!(stdout_json(&out)[0]["verdict"], "sharp");
}

#[test]
fn localize_blank_frame_is_no_sticker() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("map.csv");
    let img = dir.path().join("blank.pgm");
    assert!(stickerloc(&["gen-map", "--rows", "2", "--cols", "2", "-o", s(&map)]).status.success());
    write_blank(&img);
    let out = stickerloc(&["localize", "--map", s(&map), "--image", s(&img)]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v.len(), 1);
    assert_eq!(v[0]["outcome"], "no_sticker");
    assert!(v[0]["position"].is_null());
}

#[test]
fn render_then_localize_recovers_the_pose() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("map.csv");
    let img = dir.path().join("frame.pgm");
    assert!(stickerloc(&["gen-map", "--rows", "2", "--cols", "2", "-o", s(&map)]).status.success());
    let out = stickerloc(&["render", "--map", s(&map), "--pose", "1.04,-0.03,1.1,0.05,0.1,-2.0", "--seed", "3", "-o", s(&img)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let truth = std::fs::read_to_string(dir.path().join("frame.truth")).unwrap();
    assert!(truth.lines().any(|l| l.starts_with("sticker 2 ")), "{truth}");

    let out = stickerloc(&["localize", "--map", s(&map), "--image", s(&img)]);
    let v = &stdout_json(&out)[0];
    assert_eq!(v["outcome"], "localised");
    assert_eq!(v["method"], "decoded");
    assert_eq!(v["sticker_id"], 2);
    let p: Vec<f64> = v["position"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    let err = ((p[0] - 1.04).powi(2) + (p[1] + 0.03).powi(2) + (p[2] - 1.1).powi(2)).sqrt();
    assert!(err < 0.01, "{p:?}");
}

#[test]
fn build_refs_then_identify_artwork() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("map.csv");
    let refs = dir.path().join("refs");
    let art = dir.path().join("art.pgm");
    assert!(stickerloc(&["gen-map", "--rows", "2", "--cols", "3", "-o", s(&map)]).status.success());
    let out = stickerloc(&["build-refs", "--map", s(&map), "-o", s(&refs)]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 6);
    assert!(stickerloc(&["gen-sticker", "--id", "4", "--module-px", "8", "-o", s(&art)]).status.success());
    let out = stickerloc(&["identify", "--refs", s(&refs), "--image", s(&art)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = &stdout_json(&out)[0];
    assert_eq!(v["outcome"], "identified", "{v}");
    assert_eq!(v["id"], 4);
}

#[test]
fn localize_stream_keeps_going_past_a_bad_frame() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("map.csv");
    let frames = dir.path().join("frames");
    std::fs::create_dir(&frames).unwrap();
    assert!(stickerloc(&["gen-map", "--rows", "1", "--cols", "2", "-o", s(&map)]).status.success());
    write_blank(&frames.join("000.pgm"));
    std::fs::write(frames.join("001.pgm"), b"not a pgm").unwrap();
    write_blank(&frames.join("002.pgm"));
    let out = stickerloc(&["localize-stream", "--map", s(&map), "--dir", s(&frames)]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v.len(), 3);
    assert!(v.iter().all(|r| r["outcome"] == "no_sticker"));
    assert!(v[0]["error"].is_null() && v[2]["error"].is_null());
    assert!(v[1]["error"].as_str().unwrap().contains("001.pgm"));
    assert_eq!(v[2]["timestamp_s"].as_f64(), Some(0.2));
}

#[test]
fn bench_is_reproducible() {
    let run = || stickerloc(&["bench", "--trials", "2", "--seed", "7", "--rows", "2", "--cols", "2"]);
    let (a, b) = (run(), run());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("seed 7\n"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("sharp ")));
}

#[test]
fn exit_codes() {
    assert_eq!(stickerloc(&["localize", "--bogus"]).status.code(), Some(2));
    assert_eq!(stickerloc(&["render", "--map", "m.csv", "--pose", "1,2,3", "-o", "x.pgm"]).status.code(), Some(2));
    assert_eq!(stickerloc(&["frobnicate"]).status.code(), Some(2));
    let out = stickerloc(&["localize", "--map", "/nonexistent/map.csv", "--image", "/nonexistent/f.pgm"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("map.csv"));
    assert!(stickerloc(&["--help"]).status.success());
}

#[test]
fn gen_map_writes_csv_to_stdout() {
    let out = stickerloc(&["gen-map", "--rows", "2", "--cols", "3", "--pitch", "1.5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().any(|l| l == "5,1.5,3,0"), "{text}");
}
