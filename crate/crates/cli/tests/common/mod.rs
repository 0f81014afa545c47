#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deformsplat::io::{save_snapshot, Snapshot, SnapshotMeta};
use deformsplat::math::Vec3;
use deformsplat::testing;
use deformsplat::train::{init_scene, TrainConfig};
use deformsplat_cli::overrides::apply_overrides;
use rand::Rng;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_deformsplat"));
    c.env("GAUFRE_THREADS", "1").env("RUST_LOG", "warn");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn small_overrides() -> Vec<String> {
    ["n_deformable=30", "mlp_width=16", "mlp_depth=3", "mlp_skip_layer=2", "position_bands=3", "time_bands=2"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// A small scene whose field is randomized, so renders depend on time.
pub fn random_snapshot(seed: u64) -> Snapshot {
    let cfg = apply_overrides(&TrainConfig::default(), &small_overrides()).unwrap();
    let mut rng = testing::rng(seed);
    let bbox = (Vec3::repeat(-0.8), Vec3::repeat(0.8));
    let mut scene = init_scene(None, bbox, 4.0, &cfg, &mut rng).unwrap();
    for g in scene.deformable.iter_mut() {
        g.opacity_logit = 1.0;
        g.log_scale = Vec3::repeat(-2.0);
        g.sh[0] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    }
    for p in scene.field.params_mut() {
        *p = rng.random_range(-0.3..0.3);
    }
    Snapshot {
        scene,
        config: cfg,
        iteration: 0,
        meta: SnapshotMeta {
            resolution: [24, 20],
            fov_x: 0.8,
            time_range: [0.0, 1.0],
            background: [0.1, 0.1, 0.1],
        },
    }
}

pub fn write_snapshot(dir: &Path, seed: u64) -> (Snapshot, PathBuf) {
    let snap = random_snapshot(seed);
    let path = dir.join(format!("scene_{seed}.snap"));
    save_snapshot(&snap, &path).unwrap();
    (snap, path)
}

/// Row-major world-to-camera matrices of cameras orbiting the origin.
pub fn poses() -> Vec<[f64; 16]> {
    (0..5)
        .map(|k| {
            let a = k as f64 * 1.1;
            let eye = Vec3::new(3.5 * a.cos(), 0.4 * k as f64 - 0.8, 3.5 * a.sin());
            let m = deformsplat::raster::look_at_matrix(eye, Vec3::zeros(), Vec3::y());
            std::array::from_fn(|i| m[(i / 4, i % 4)])
        })
        .collect()
}

pub fn pose_csv(p: &[f64]) -> String {
    p.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}
