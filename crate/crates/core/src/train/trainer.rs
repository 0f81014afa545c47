use std::io::Write;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::metrics::compute_loss;
use super::scene::{init_scene, scene_extent};
use super::{Scene, TrainConfig};
use crate::error::{Error, Result};
use crate::io::{save_snapshot, Dataset, Frame, Snapshot, SnapshotMeta};
use crate::math::{logit, sigmoid};
use crate::optim::{densify_and_prune, lr_factor, AdamConfig, AdamState, DensifyStats, GaussianAdam};

/// Opacity the periodic reset clamps to, when enabled.
const OPACITY_RESET_VALUE: f64 = 0.01;

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// JSON-lines log destination.
    pub log_path: Option<PathBuf>,
    /// Directory receiving periodic snapshots.
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEntry {
    pub iter: usize,
    pub loss: f64,
    pub frame: usize,
    pub time: f64,
    pub n_deformable: usize,
    pub n_static: usize,
    pub lr_position: f64,
    pub lr_field: f64,
    pub l1: bool,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub scene: Scene,
    pub log: Vec<LogEntry>,
    pub iteration: usize,
    pub meta: SnapshotMeta,
}

/// Optimization state of one training run.
pub struct Trainer {
    pub config: TrainConfig,
    pub scene: Scene,
    frames: Vec<Frame>,
    meta: SnapshotMeta,
    adam_deformable: GaussianAdam,
    adam_static: GaussianAdam,
    adam_field: AdamState,
    stats_deformable: DensifyStats,
    stats_static: DensifyStats,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    iteration: usize,
}

impl Trainer {
    pub fn new(dataset: &Dataset, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        if dataset.train.is_empty() {
            return Err(Error::Config("dataset has no training frames".into()));
        }
        let frames: Vec<Frame> = dataset.train.iter().map(|f| f.downscaled(config.image_downscale)).collect();
        let mut rng = crate::testing::rng(config.seed);
        let extent = scene_extent(&dataset.cameras());
        let scene = init_scene(dataset.points.as_deref(), dataset.bbox_or_default(), extent, config, &mut rng)?;
        let cam = &frames[0].camera;
        let meta = SnapshotMeta {
            resolution: [cam.width, cam.height],
            fov_x: cam.fov_x(),
            time_range: [dataset.time_range.0, dataset.time_range.1],
            background: config.background,
        };
        Ok(Self::from_scene(scene, frames, meta, config.clone(), rng))
    }

    fn from_scene(scene: Scene, frames: Vec<Frame>, meta: SnapshotMeta, config: TrainConfig, rng: ChaCha8Rng) -> Self {
        let k = crate::math::sh_coeff_count(scene.sh_degree);
        let adam = AdamConfig::default();
        Self {
            adam_deformable: GaussianAdam::new("deformable", scene.deformable.len(), k, adam),
            adam_static: GaussianAdam::new("static", scene.static_set.len(), k, adam),
            adam_field: AdamState::new("field", scene.field.params().len(), 1, adam),
            stats_deformable: DensifyStats::new(scene.deformable.len()),
            stats_static: DensifyStats::new(scene.static_set.len()),
            scene,
            frames,
            meta,
            config,
            rng,
            order: Vec::new(),
            cursor: 0,
            iteration: 0,
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn meta(&self) -> &SnapshotMeta {
        &self.meta
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            scene: self.scene.clone(),
            config: self.config.clone(),
            iteration: self.iteration,
            meta: self.meta.clone(),
        }
    }

    fn next_frame(&mut self) -> usize {
        if self.cursor == self.order.len() {
            self.order = (0..self.frames.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    /// One optimization iteration on the next frame of the shuffled epoch.
    pub fn step(&mut self) -> Result<LogEntry> {
        let fi = self.next_frame();
        self.iteration += 1;
        let it = self.iteration;
        let cfg = &self.config;
        let frame = &self.frames[fi];
        let (w, h) = (frame.width(), frame.height());
        let settings = self.scene.settings(cfg.background, cfg.tile_size);
        let pass = self.scene.forward(&frame.camera, frame.time, &settings, it <= cfg.warmup_iters)?;
        let (loss, d_image) = compute_loss(&pass.output.image, &frame.image, w, h, it, cfg)?;
        let grads = self.scene.backward(&pass, &d_image)?;
        drop(pass);

        let nd = self.scene.deformable.len();
        if it <= cfg.densify_until {
            let r = &grads.render;
            let pos_d: Vec<_> = grads.deformable.iter().map(|g| g.position).collect();
            let pos_s: Vec<_> = grads.static_set.iter().map(|g| g.position).collect();
            self.stats_deformable
                .accumulate(&r.screen_grad_norm[..nd], &r.visible[..nd], &r.radius[..nd], &pos_d)?;
            self.stats_static
                .accumulate(&r.screen_grad_norm[nd..], &r.visible[nd..], &r.radius[nd..], &pos_s)?;
        }

        let factor = lr_factor(it, cfg.lr_decay_iters, cfg.lr_final_factor);
        let lrs = cfg.gaussian_lrs(factor, self.scene.scene_extent);
        let lr_field = cfg.lr_field * factor;
        let frame_name = frame.name.clone();
        let diagnose = |e: Error| {
            log::error!("aborting at iteration {it} on frame {frame_name} (loss {loss}): {e}");
            e
        };
        if !loss.is_finite() {
            return Err(diagnose(Error::NonFiniteGradient {
                group: "loss".into(),
                index: fi,
            }));
        }
        self.adam_deformable
            .step(&mut self.scene.deformable, &grads.deformable, &lrs)
            .map_err(diagnose)?;
        self.adam_static
            .step(&mut self.scene.static_set, &grads.static_set, &lrs)
            .map_err(diagnose)?;
        if !grads.field.is_empty() {
            self.adam_field
                .step(self.scene.field.params_mut(), &grads.field, lr_field)
                .map_err(diagnose)?;
        }

        if it >= cfg.densify_from && it <= cfg.densify_until && it % cfg.densify_interval == 0 {
            let th = cfg.densify_thresholds(w, h);
            let extent = self.scene.scene_extent;
            let rd = densify_and_prune(
                &mut self.scene.deformable,
                &mut self.stats_deformable,
                &mut self.adam_deformable,
                &th,
                extent,
                &mut self.rng,
            )?;
            let rs = densify_and_prune(
                &mut self.scene.static_set,
                &mut self.stats_static,
                &mut self.adam_static,
                &th,
                extent,
                &mut self.rng,
            )?;
            log::debug!("iteration {it}: deformable {rd:?}, static {rs:?}");
        }
        if cfg.opacity_reset_interval > 0 && it % cfg.opacity_reset_interval == 0 && it <= cfg.densify_until {
            let cap = logit(OPACITY_RESET_VALUE);
            for g in self.scene.deformable.iter_mut().chain(self.scene.static_set.iter_mut()) {
                if sigmoid(g.opacity_logit) > OPACITY_RESET_VALUE {
                    g.opacity_logit = cap;
                }
            }
        }

        Ok(LogEntry {
            iter: it,
            loss,
            frame: fi,
            time: self.frames[fi].time,
            n_deformable: self.scene.deformable.len(),
            n_static: self.scene.static_set.len(),
            lr_position: lrs.position,
            lr_field,
            l1: self.config.uses_l1(it),
        })
    }
}

/// Runs `config.iterations` iterations from a fresh initialization.
pub fn train(dataset: &Dataset, config: &TrainConfig, options: &TrainOptions) -> Result<TrainResult> {
    let mut trainer = Trainer::new(dataset, config)?;
    let mut log_file = match &options.log_path {
        Some(p) => Some(std::io::BufWriter::new(std::fs::File::create(p).map_err(|e| Error::io(p, e))?)),
        None => None,
    };
    if let Some(dir) = &options.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut log = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let entry = trainer.step()?;
        if let (Some(f), Some(p)) = (log_file.as_mut(), &options.log_path) {
            let line = serde_json::to_string(&entry).map_err(|e| Error::Format(e.to_string()))?;
            writeln!(f, "{line}").map_err(|e| Error::io(p, e))?;
        }
        if let Some(dir) = &options.checkpoint_dir {
            if config.checkpoint_interval > 0 && entry.iter % config.checkpoint_interval == 0 {
                save_snapshot(&trainer.snapshot(), &dir.join(format!("checkpoint_{:06}.snap", entry.iter)))?;
            }
        }
        log.push(entry);
    }
    if let (Some(f), Some(p)) = (log_file.as_mut(), &options.log_path) {
        f.flush().map_err(|e| Error::io(p, e))?;
    }
    Ok(TrainResult {
        iteration: trainer.iteration,
        meta: trainer.meta.clone(),
        scene: trainer.scene,
        log,
    })
}
