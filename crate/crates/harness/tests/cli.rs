use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fsai(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsai")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fsai-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn summary_field(dir: &Path, key: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("summary.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mut v = &json;
    for part in key.split('.') {
        v = &v[part];
    }
    v.clone()
}

#[test]
fn acceleration_run_and_replay() {
    let dir = scratch("accel");
    let cfg = write_config(&dir, "mission = acceleration\nseed = 1\nnoise = off\n");
    let out_dir = dir.join("out");
    let out = fsai(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("telemetry.csv").exists());
    assert_eq!(summary_field(&out_dir, "cones_hit"), 0);
    let offset = summary_field(&out_dir, "final_lateral_offset_m").as_f64().unwrap();
    assert!(offset.abs() < 0.2, "final offset {offset}");

    let telemetry = out_dir.join("telemetry.csv");
    let replay = fsai(&["replay", "--telemetry", telemetry.to_str().unwrap(), "--check"]);
    assert_eq!(replay.status.code(), Some(0), "{}", String::from_utf8_lossy(&replay.stdout));
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = scratch("seed");
    let cfg = write_config(&dir, "mission = acceleration\nseed = 1\n");
    let out_dir = dir.join("out");
    let out = fsai(&["run", "--config", &cfg, "--seed", "9", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(summary_field(&out_dir, "seed"), 9);
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn starved_perception_triggers_emergency_stop() {
    let dir = scratch("estop");
    let cfg = write_config(&dir, "mission = acceleration\nseed = 1\nperception_rate_hz = 1\n");
    let out = fsai(&["run", "--config", &cfg, "--out", dir.join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn bad_config_is_rejected() {
    let dir = scratch("bad");
    let cfg = write_config(&dir, "mission = acceleration\nwarp_drive = on\n");
    let out = fsai(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warp_drive"));
    let missing = fsai(&["run", "--config", dir.join("nope.cfg").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn gen_track_writes_json() {
    let dir = scratch("track");
    let path = dir.join("skidpad.json");
    let out = fsai(&["gen-track", "--mission", "skidpad", "--seed", "4", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(json["cones"].as_array().is_some_and(|c| !c.is_empty()));

    // the generated file drives a run through the `track` key
    let cfg = write_config(&dir, &format!("mission = skidpad\ntrack = {}\nnoise = off\n", path.display()));
    let run = fsai(&["run", "--config", &cfg, "--out", dir.join("out").to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn bench_depth_prints_summary() {
    let dir = scratch("bench");
    let cfg = dir.join("bench.cfg");
    std::fs::write(&cfg, "cones = 60\nseed = 3\n").unwrap();
    let out = fsai(&["bench-depth", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().count() > 3);
    assert!(dir.join("depth_cones.csv").exists());
    assert!(dir.join("depth_summary.csv").exists());
    let _ = std::fs::remove_dir_all(dir);
}
