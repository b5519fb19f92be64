use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const EDIT_CONFIG: &str = r#"
backend = "mock:color"
[scene]
mesh = "builtin:quad"
texture_res = 8
env = "constant:0.8"
env_res = 8
[prompts]
source = "a gray object"
target = "a red object"
[optimize]
iterations = 12
resolution = 24
seed = 3
[optimize.prefilter]
min_res = 4
[render]
resolution = 24
views = 2
lut_res = 16
lut_samples = 64
"#;

fn reltex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reltex"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn project(dir: &Path) -> String {
    let path = dir.join("project.toml");
    std::fs::write(&path, EDIT_CONFIG).unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("summary is JSON")
}

fn diagnostic(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("a diagnostic line");
    serde_json::from_str(line).expect("diagnostic is JSON")
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// The training log with wall-clock timings removed.
fn log_without_timing(out: &Path) -> Vec<Value> {
    String::from_utf8(read(&out.join("log/train.ndjson")))
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("wall_ms");
            v
        })
        .collect()
}

#[test]
fn failures_use_documented_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = out_dir.to_str().unwrap();
    let cases: [(&[&str], i32, &str); 5] = [
        (&["edit", "-o", out, "--target", "a red object", "--iterations", "0"], 2, "config"),
        (&["edit", "-o", out, "--source", "x", "--target", "y", "--mesh", "builtin:torus"], 2, "config"),
        (&["edit", "-o", out, "--source", "x", "--target", "y", "--mesh", "/no/such.obj"], 3, "asset"),
        (&["render", "-o", out, "--edited"], 3, "asset"),
        (&["edit", "-o", out, "--source", "x", "--target", "y", "--backend", "sidecar:exec:/bin/false"], 4, "backend"),
    ];
    for (args, code, kind) in cases {
        let o = reltex(args);
        assert_eq!(o.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let d = diagnostic(&o);
        assert_eq!(d["error"]["kind"], kind, "{args:?}");
        assert_eq!(d["error"]["exit_code"], code);
    }
    assert_eq!(reltex(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn dry_run_validates_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = project(dir.path());
    let out = dir.path().join("dry");
    let o = reltex(&["edit", "--config", &cfg, "-o", out.to_str().unwrap(), "--dry-run"]);
    let v = stdout_json(&o);
    assert_eq!(v["dry_run"], true);
    assert!(!out.exists());

    let o = reltex(&["edit", "--config", &cfg, "-o", out.to_str().unwrap(), "--dry-run", "--target", ""]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn repeated_edits_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = project(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        stdout_json(&reltex(&["edit", "--config", &cfg, "-o", out.to_str().unwrap()]));
    }
    for file in [
        "textures/kd.png",
        "textures/orm.png",
        "textures/normal.png",
        "textures/params.bin",
        "env/env.hdr",
    ] {
        assert_eq!(read(&a.join(file)), read(&b.join(file)), "{file} differs");
    }
    // the edit moved the albedo off its constant start
    let (m, _) = reltex_cli::assets::read_params(&a.join("textures/params.bin")).unwrap();
    assert!(m.kd.texels.iter().any(|t| (t.x - t.y).abs() > 1e-3));
}

#[test]
fn resumed_edit_matches_an_uninterrupted_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = project(dir.path());
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("seed = 3\n", "seed = 3\ncheckpoint_period = 5\n");
    std::fs::write(&cfg, text).unwrap();

    let full = dir.path().join("full");
    let v = stdout_json(&reltex(&["edit", "--config", &cfg, "-o", full.to_str().unwrap()]));
    assert_eq!(v["checkpoints"].as_array().unwrap().len(), 2);
    let ckpt = full.join("checkpoints/iter_000005.ckpt");
    assert!(ckpt.exists());

    let resumed = dir.path().join("resumed");
    stdout_json(&reltex(&[
        "edit",
        "--config",
        &cfg,
        "-o",
        resumed.to_str().unwrap(),
        "--resume",
        ckpt.to_str().unwrap(),
    ]));
    assert_eq!(
        read(&full.join("textures/params.bin")),
        read(&resumed.join("textures/params.bin"))
    );
    assert_eq!(log_without_timing(&full), log_without_timing(&resumed));

    // a different seed must not silently continue someone else's run
    let o = reltex(&[
        "edit",
        "--config",
        &cfg,
        "-o",
        resumed.to_str().unwrap(),
        "--seed",
        "9",
        "--resume",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn relight_writes_env_but_not_textures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = project(dir.path());
    let out = dir.path().join("relit");
    let v = stdout_json(&reltex(&[
        "relight",
        "--config",
        &cfg,
        "-o",
        out.to_str().unwrap(),
        "--target",
        "a blue object",
    ]));
    assert_eq!(v["command"], "relight");
    assert!(out.join("env/env.hdr").exists());
    assert!(!out.join("textures/kd.png").exists());
    let (m, env) = reltex_cli::assets::read_params(&out.join("textures/params.bin")).unwrap();
    assert!(m.kd.texels.iter().all(|t| *t == m.kd.texels[0]));
    assert!(env.cube.data.iter().any(|c| (c.z - 0.8).abs() > 1e-6));
}

#[test]
fn eval_scores_the_edit_toward_the_target() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = project(dir.path());
    let out = dir.path().join("e");
    let o = out.to_str().unwrap();
    stdout_json(&reltex(&["edit", "--config", &cfg, "-o", o, "--iterations", "60"]));
    let v = stdout_json(&reltex(&["eval", "--config", &cfg, "-o", o]));
    let report = &v["report"];
    assert_eq!(report["views"], 8);
    assert!(report["directional"].as_f64().unwrap() > 0.0, "{report}");
    let saved: Value = serde_json::from_slice(&read(&out.join("log/scores.json"))).unwrap();
    assert_eq!(&saved, report);

    let rendered = stdout_json(&reltex(&["render", "--config", &cfg, "-o", o, "--edited"]));
    assert_eq!(rendered["files"].as_array().unwrap().len(), 2);
    assert!(out.join("renders/edited_01.hdr").exists());
}

#[test]
fn precompute_fills_the_cache_once() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = project(dir.path());
    let o = dir.path().join("c");
    let first = stdout_json(&reltex(&["precompute", "--config", &cfg, "-o", o.to_str().unwrap()]));
    let second = stdout_json(&reltex(&["precompute", "--config", &cfg, "-o", o.to_str().unwrap()]));
    assert_eq!(second["lut"]["cached"], true);
    assert_eq!(second["prefiltered"]["cached"], true);
    assert_eq!(first["lut"]["path"], second["lut"]["path"]);
}
