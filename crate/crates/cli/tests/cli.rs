use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn splatsem(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splatsem"))
        .current_dir(dir)
        .env_remove("SPLATSEM_THREADS")
        .args(args)
        .output()
        .unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "stdout must be one JSON document: {text}");
    serde_json::from_str(&text).unwrap()
}

fn small_synth(dir: &Path) {
    fs::write(dir.join("synth.json"), r#"{"gaussians_per_object": 1500, "image_size": 32}"#).unwrap();
    let out = splatsem(dir, &["synth", "--seed", "1", "--config", "synth.json", "--out-dir", "s", "--json"]);
    json(&out);
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn unknown_subcommand_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(splatsem(tmp.path(), &["teleport"]).status.code(), Some(2));
    assert_eq!(splatsem(tmp.path(), &[]).status.code(), Some(2));
}

#[test]
fn help_and_version_exit_0() {
    let tmp = tempfile::tempdir().unwrap();
    let out = splatsem(tmp.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["render", "voxelize", "warploss", "fuse", "gradcheck", "metrics", "totalloss", "synth", "bench"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    assert_eq!(splatsem(tmp.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn zero_threads_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = splatsem(tmp.path(), &["--threads", "0", "totalloss"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn threads_env_var_is_honoured() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_splatsem"))
        .current_dir(tmp.path())
        .env("SPLATSEM_THREADS", "0")
        .arg("totalloss")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_leave_no_output_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_synth(dir);
    let before = files_in(dir);
    let cases: &[&[&str]] = &[
        &["voxelize", "--scene", "s/scene.fgsc", "--voxel-size", "0", "--out", "v.fgsc", "--stats", "v.json"],
        &["voxelize", "--scene", "s/scene.fgsc", "--lambda", "-1", "--out", "v.fgsc"],
        &["render", "--scene", "s/scene.fgsc", "--camera", "s/cam_0.json", "--out", "r.ppm", "--bg", "1,2"],
        &["render", "--scene", "s/scene.fgsc", "--camera", "s/cam_0.json", "--labels-out", "l.dmap"],
        &["fuse", "--geometry", "a.dmap", "--semantic", "b.dmap", "--out", "f.dmap"],
        &["gradcheck", "--op", "fuse", "--sizes", "1,2"],
        &["gradcheck", "--op", "voxel", "--sizes", "0,3"],
        &["warploss", "--views", "s/cam_0.json", "--features", "a,b", "--depths", "c"],
        &["warploss", "--views", "s/cam_0.json,s/cam_1.json", "--features", "a,b", "--depths", "c,d", "--pairs", "0-5"],
        &["metrics", "--pred", "x", "--gt", "y", "--kind", "nope"],
    ];
    for args in cases {
        let out = splatsem(dir, args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
        assert_eq!(files_in(dir), before, "{args:?} left files behind");
    }
}

#[test]
fn processing_failures_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("junk.fgsc"), b"not a scene").unwrap();
    let out = splatsem(dir, &["voxelize", "--scene", "junk.fgsc", "--out", "v.fgsc"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.join("v.fgsc").exists());
    let out = splatsem(dir, &["voxelize", "--scene", "missing.fgsc", "--out", "v.fgsc"]);
    assert_eq!(out.status.code(), Some(1));
    fs::write(dir.join("w.json"), r#"{"lambda_feat": -1}"#).unwrap();
    assert_eq!(splatsem(dir, &["totalloss", "--config", "w.json"]).status.code(), Some(2));
    fs::write(dir.join("w.json"), r#"{"lambda_bogus": 1}"#).unwrap();
    assert_eq!(splatsem(dir, &["totalloss", "--config", "w.json"]).status.code(), Some(1));
}

#[test]
fn pipeline_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_synth(dir);
    for f in ["scene.fgsc", "class_features.json", "cam_0.json", "cam_3.json", "labels_0.dmap"] {
        assert!(dir.join("s").join(f).exists(), "{f}");
    }
    let r = json(&splatsem(
        dir,
        &["render", "--scene", "s/scene.fgsc", "--camera", "s/cam_0.json", "--out", "a.ppm", "--color-out", "a.dmap", "--json"],
    ));
    assert_eq!(r["width"], 32);
    assert!(fs::read(dir.join("a.ppm")).unwrap().starts_with(b"P6\n32 32\n255\n"));

    let v = json(&splatsem(dir, &["voxelize", "--scene", "s/scene.fgsc", "--voxel-size", "0.08", "--out", "v.fgsc", "--json"]));
    assert_eq!(v["n_in"], 6000);
    assert!(v["n_out"].as_u64().unwrap() < 6000);

    json(&splatsem(dir, &["render", "--scene", "v.fgsc", "--camera", "s/cam_0.json", "--color-out", "b.dmap", "--json"]));
    let p = json(&splatsem(dir, &["metrics", "--pred", "b.dmap", "--gt", "a.dmap", "--kind", "psnr", "--json"]));
    assert_eq!(p["kind"], "psnr");
    let psnr = p["value"].as_f64().unwrap();
    assert!(psnr > 15.0 && psnr < 99.0, "{psnr}");
    let same = json(&splatsem(dir, &["metrics", "--pred", "a.dmap", "--gt", "a.dmap", "--kind", "psnr", "--json"]));
    assert_eq!(same["value"], 99.0);
}

#[test]
fn labels_and_miou() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_synth(dir);
    let args = [
        "render", "--scene", "s/scene.fgsc", "--camera", "s/cam_2.json", "--classes", "s/class_features.json",
        "--labels-out", "l.dmap",
    ];
    assert!(splatsem(dir, &args).status.success());
    let m = json(&splatsem(dir, &["metrics", "--pred", "l.dmap", "--gt", "s/labels_2.dmap", "--kind", "miou", "--json"]));
    assert!(m["value"].as_f64().unwrap() > 0.8, "{m}");
    let bad = splatsem(dir, &["metrics", "--pred", "s/scene.fgsc", "--gt", "s/labels_2.dmap", "--kind", "miou"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn warploss_and_fuse() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_synth(dir);
    for i in 0..2 {
        let (cam, f, d) = (format!("s/cam_{i}.json"), format!("f{i}.dmap"), format!("d{i}.dmap"));
        let out = splatsem(
            dir,
            &["render", "--scene", "s/scene.fgsc", "--camera", &cam, "--feature-out", &f, "--depth-out", &d],
        );
        assert!(out.status.success());
    }
    let w = json(&splatsem(
        dir,
        &["warploss", "--views", "s/cam_0.json,s/cam_1.json", "--features", "f0.dmap,f1.dmap", "--depths", "d0.dmap,d1.dmap", "--json"],
    ));
    let per_pair = w["per_pair"].as_array().unwrap();
    assert_eq!(per_pair.len(), 2);
    let sum: f64 = per_pair.iter().map(|t| t["loss"].as_f64().unwrap()).sum();
    assert!((sum - w["loss"].as_f64().unwrap()).abs() < 1e-12);

    let f = json(&splatsem(
        dir,
        &["fuse", "--geometry", "f0.dmap", "--semantic", "f1.dmap", "--init-seed", "0", "--d-k", "4", "--d-v", "3", "--out", "o.dmap", "--json"],
    ));
    assert_eq!(f["n_geometry"], 32 * 32);
    assert_eq!(f["d_v"], 3);
    assert!(f["max_row_sum_error"].as_f64().unwrap() < 1e-12);
    let bytes = fs::read(dir.join("o.dmap")).unwrap();
    assert!(bytes.starts_with(b"DMAP"));

    fs::write(dir.join("p.json"), r#"{"w_q": [[1.0]], "w_k": [[1.0]], "w_v": [[1.0]]}"#).unwrap();
    let out = splatsem(dir, &["fuse", "--geometry", "f0.dmap", "--semantic", "f1.dmap", "--params", "p.json", "--out", "o2.dmap"]);
    assert_eq!(out.status.code(), Some(1), "mismatched projection shapes");
    assert!(!dir.join("o2.dmap").exists());
}

#[test]
fn gradcheck_reports_pass() {
    let tmp = tempfile::tempdir().unwrap();
    for op in ["fuse", "warp", "voxel", "feature"] {
        let r = json(&splatsem(tmp.path(), &["gradcheck", "--op", op, "--seed", "4", "--json"]));
        assert_eq!(r["passed"], true, "{op}: {r}");
        assert_eq!(r["op"], op);
    }
}

#[test]
fn totalloss_with_default_weights() {
    let tmp = tempfile::tempdir().unwrap();
    let r = json(&splatsem(
        tmp.path(),
        &["totalloss", "--rgb", "1", "--feat", "1", "--warp", "1", "--depth", "1", "--pose", "1", "--json"],
    ));
    assert_eq!(r["total"], 12.2);
    let text = splatsem(tmp.path(), &["totalloss", "--rgb", "2"]);
    assert!(String::from_utf8(text.stdout).unwrap().starts_with("total 2"));
}

#[test]
fn bench_emits_report() {
    let tmp = tempfile::tempdir().unwrap();
    let r = json(&splatsem(tmp.path(), &["bench", "--op", "voxelize", "--n", "20000", "--voxel-size", "0.25", "--lambda", "2"]));
    assert_eq!(r["op"], "voxelize");
    assert_eq!(r["n"], 20000);
    assert_eq!(r["runs"], 5);
    assert!(r["median_ms"].as_f64().unwrap() > 0.0);
    assert_eq!(r["throughput_unit"], "primitives/s");
    let r = json(&splatsem(tmp.path(), &["bench", "--op", "render", "--n", "500", "--size", "64", "--runs", "3"]));
    assert_eq!(r["size"], 64);
    assert_eq!(splatsem(tmp.path(), &["bench", "--op", "render", "--runs", "0"]).status.code(), Some(2));
}

#[test]
fn synth_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("bad.json"), r#"{"n_classes": 9, "feature_dim": 4}"#).unwrap();
    let out = splatsem(dir, &["synth", "--config", "bad.json", "--out-dir", "s"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.join("s").exists());
}
