mod common;

use std::path::Path;

use deformsplat::io::{camera_from_nerf, load_dataset, read_png};

fn ok(args: &[&str]) -> String {
    let out = common::run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_small(dir: &Path, program: &str) {
    ok(&[
        "gen", program, "--out", path(dir), "--seed", "3", "--width", "24", "--height", "20", "--n-train", "6",
        "--n-test", "2", "--n-static", "6", "--n-dynamic", "6",
    ]);
}

fn train_args<'a>(data: &'a str, out: &'a str, iterations: &'a str, overrides: &'a [String]) -> Vec<&'a str> {
    let mut args = vec!["train", "--data", data, "--out", out, "--iterations", iterations];
    for o in overrides {
        args.push("--config");
        args.push(o);
    }
    args
}

fn render_args<'a>(snap: &'a str, pose: &'a str, t: &'a str, out: &'a str) -> Vec<&'a str> {
    vec!["render", "--snapshot", snap, "--pose", pose, "--time", t, "--out", out]
}

#[test]
fn gen_writes_dataset() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path(), "two-cluster");
    let ds = load_dataset(dir.path(), [0.0; 3]).unwrap();
    assert_eq!((ds.train.len(), ds.test.len()), (6, 2));
    assert_eq!(ds.points.unwrap().len(), 6);
    let out = common::run(&["gen", "spiral", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spiral"));
}

#[test]
fn zero_init_snapshot_renders_identically_over_time() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    gen_small(&data, "rigid-orbit");
    let o = common::small_overrides();
    ok(&train_args(path(&data), path(&run), "0", &o));
    let snap = run.join("final.snap");
    let pose = common::pose_csv(&common::poses()[1]);
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    ok(&render_args(path(&snap), &pose, "0", path(&a)));
    ok(&render_args(path(&snap), &pose, "0.5", path(&b)));
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let (w, h, _) = read_png(&a, [0.0; 3]).unwrap();
    assert_eq!((w, h), (24, 20));
}

#[test]
fn eval_of_self_rendered_test_set_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    gen_small(&data, "two-cluster");
    ok(&train_args(path(&data), path(&run), "0", &common::small_overrides()));
    let snap = run.join("final.snap");
    let ds = load_dataset(&data, [0.0; 3]).unwrap();
    let text = std::fs::read_to_string(data.join("transforms_test.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    for (frame, rec) in ds.test.iter().zip(json["frames"].as_array().unwrap()) {
        let c2w: Vec<f64> = rec["transform_matrix"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|row| row.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()))
            .collect();
        let w2c = camera_from_nerf(&nalgebra::Matrix4::from_row_slice(&c2w));
        let pose: Vec<f64> = (0..16).map(|i| w2c[(i / 4, i % 4)]).collect();
        let file = data.join(format!("{}.png", rec["file_path"].as_str().unwrap()));
        let t = frame.time.to_string();
        ok(&render_args(path(&snap), &common::pose_csv(&pose), &t, path(&file)));
    }
    let report = ok(&["eval", "--snapshot", path(&snap), "--data", path(&data)]);
    let metrics: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(metrics["psnr"], serde_json::json!(99.0));
    assert_eq!(metrics["per_frame"].as_array().unwrap().len(), 2);
    let train = ok(&["eval", "--snapshot", path(&snap), "--data", path(&data), "--split", "train"]);
    let train: serde_json::Value = serde_json::from_str(&train).unwrap();
    assert!(train["psnr"].as_f64().unwrap() < 99.0);
}

#[test]
fn training_is_reproducible_and_writes_logs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_small(&data, "pulsating-scale");
    let mut o = common::small_overrides();
    o.push("checkpoint_interval=10".into());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&train_args(path(&data), path(&a), "20", &o));
    ok(&train_args(path(&data), path(&b), "20", &o));
    assert_eq!(
        std::fs::read(a.join("final.snap")).unwrap(),
        std::fs::read(b.join("final.snap")).unwrap()
    );
    let log = std::fs::read_to_string(a.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 20);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["iter", "loss", "n_deformable", "n_static", "lr_position"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
    assert!(a.join("checkpoints/checkpoint_000010.snap").exists());
}

#[test]
fn cli_render_matches_service_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (snap, file) = common::write_snapshot(dir.path(), 8);
    for (i, p) in common::poses().iter().enumerate() {
        let t = (0.2 * i as f64).to_string();
        let out = dir.path().join(format!("f{i}.png"));
        ok(&render_args(path(&file), &common::pose_csv(p), &t, path(&out)));
        let expected = deformsplat_cli::render_png(
            &snap,
            &deformsplat_cli::pose_from_values(p).unwrap(),
            t.parse().unwrap(),
            None,
            None,
        )
        .unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), expected);
    }
}

#[test]
fn pose_accepts_separate_values() {
    let dir = tempfile::tempdir().unwrap();
    let (_, file) = common::write_snapshot(dir.path(), 9);
    let p = common::poses()[0];
    let joined = dir.path().join("joined.png");
    let split = dir.path().join("split.png");
    ok(&render_args(path(&file), &common::pose_csv(&p), "0.4", path(&joined)));
    let values: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
    let mut args = vec!["render", "--snapshot", path(&file), "--time", "0.4", "--out", path(&split), "--pose"];
    args.extend(values.iter().map(String::as_str));
    ok(&args);
    assert_eq!(std::fs::read(&joined).unwrap(), std::fs::read(&split).unwrap());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let (_, file) = common::write_snapshot(dir.path(), 10);
    let out = dir.path().join("x.png");
    let p = common::poses()[0];
    let short = common::pose_csv(&p[..15]);
    let full = common::pose_csv(&p);
    let cases: Vec<Vec<&str>> = vec![
        render_args(path(&file), &short, "0", path(&out)),
        vec!["render", "--snapshot", path(&file), "--pose", &full, "--width", "8", "--out", path(&out)],
        vec!["render", "--snapshot", path(&file), "--out", path(&out)],
        vec!["frobnicate"],
        vec!["eval", "--snapshot", path(&file), "--data", ".", "--split", "val"],
        vec![],
    ];
    for args in cases {
        let r = common::run(&args);
        assert_eq!(r.status.code(), Some(2), "{args:?}");
        assert!(!r.stderr.is_empty());
    }
    assert!(!out.exists());
}

#[test]
fn runtime_errors_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let full = common::pose_csv(&common::poses()[0]);
    let missing = dir.path().join("missing.snap");
    let out = dir.path().join("x.png");
    let r = common::run(&render_args(path(&missing), &full, "0", path(&out)));
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("missing.snap"));

    let data = dir.path().join("data");
    gen_small(&data, "two-cluster");
    let r = common::run(&["train", "--data", path(&data), "--out", path(&dir.path().join("r")), "--config", "bogus=1"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("bogus"));

    let garbage = dir.path().join("garbage.snap");
    std::fs::write(&garbage, b"not a snapshot at all").unwrap();
    let r = common::run(&["eval", "--snapshot", path(&garbage), "--data", path(&data)]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn ablate_writes_report_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_small(&data, "pulsating-scale");
    let report = dir.path().join("ablation.md");
    let mut args = vec!["ablate", "--data", path(&data), "--out", path(&report), "--iterations", "3"];
    let o = common::small_overrides();
    for x in &o {
        args.push("--config");
        args.push(x);
    }
    ok(&args);
    let text = std::fs::read_to_string(&report).unwrap();
    let names: Vec<&str> = text
        .lines()
        .skip(2)
        .map(|l| l.split('|').nth(1).unwrap().trim())
        .collect();
    assert_eq!(names, deformsplat::train::ABLATION_VARIANTS);
}

#[test]
fn negative_leading_pose_list_is_a_value() {
    let args = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    assert_eq!(
        deformsplat_cli::attach_pose_lists(args(&["x", "--pose", "-1,0", "--time", "-0.5"])),
        args(&["x", "--pose=-1,0", "--time", "-0.5"])
    );
    assert_eq!(
        deformsplat_cli::attach_pose_lists(args(&["x", "--pose", "-1", "0"])),
        args(&["x", "--pose", "-1", "0"])
    );
}
