use serde::{Deserialize, Serialize};

use crate::deform::{DeformMode, FieldConfig};
use crate::error::{Error, Result};
use crate::math::EncodingConfig;
use crate::optim::{DensifyThresholds, GaussianLrs};

/// Every schedule, threshold, loss weight and ablation flag of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Last iteration using the L2 data term; L1 afterwards.
    pub loss_switch_iter: usize,
    pub lambda_ssim: f64,

    pub densify_from: usize,
    pub densify_until: usize,
    pub densify_interval: usize,
    pub densify_grad_threshold: f64,
    pub split_scale_threshold: f64,
    pub prune_opacity: f64,
    /// Prune Gaussians whose screen radius exceeds the larger image side.
    pub prune_screen_radius: bool,
    /// 0 disables the periodic opacity reset.
    pub opacity_reset_interval: usize,
    /// Iterations rendered without the deformation field.
    pub warmup_iters: usize,

    /// Multiplied by the scene extent.
    pub lr_position: f64,
    pub lr_rotation: f64,
    pub lr_log_scale: f64,
    pub lr_opacity: f64,
    pub lr_sh: f64,
    pub lr_field: f64,
    pub lr_decay_iters: usize,
    pub lr_final_factor: f64,

    pub position_bands: usize,
    pub time_bands: usize,
    pub mlp_depth: usize,
    pub mlp_width: usize,
    /// Hidden layer receiving the input encoding again; 0 disables the skip.
    pub mlp_skip_layer: usize,
    pub propagate_field_position: bool,

    pub sh_degree: usize,
    pub n_deformable: usize,
    pub seed: u64,
    pub background: [f64; 3],
    pub image_downscale: usize,
    pub tile_size: usize,
    pub checkpoint_interval: usize,

    pub fix_scale: bool,
    pub deform_opacity: bool,
    pub deform_sh: bool,
    pub quaternion_addition: bool,
    pub scale_post_exp: bool,
    pub no_static: bool,
    pub no_ib_init: bool,
    pub no_lr_transit: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 40_000,
            loss_switch_iter: 20_000,
            lambda_ssim: 0.2,
            densify_from: 500,
            densify_until: 20_000,
            densify_interval: 100,
            densify_grad_threshold: 2e-4,
            split_scale_threshold: 0.01,
            prune_opacity: 0.005,
            prune_screen_radius: true,
            opacity_reset_interval: 0,
            warmup_iters: 0,
            lr_position: 1.6e-4,
            lr_rotation: 1e-3,
            lr_log_scale: 5e-3,
            lr_opacity: 0.05,
            lr_sh: 2.5e-3,
            lr_field: 1e-3,
            lr_decay_iters: 30_000,
            lr_final_factor: 0.001,
            position_bands: 10,
            time_bands: 10,
            mlp_depth: 6,
            mlp_width: 256,
            mlp_skip_layer: 4,
            propagate_field_position: false,
            sh_degree: 1,
            n_deformable: 1000,
            seed: 0,
            background: [0.0; 3],
            image_downscale: 1,
            tile_size: 16,
            checkpoint_interval: 5000,
            fix_scale: false,
            deform_opacity: false,
            deform_sh: false,
            quaternion_addition: false,
            scale_post_exp: false,
            no_static: false,
            no_ib_init: false,
            no_lr_transit: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.loss_switch_iter > self.iterations {
            return fail(format!(
                "loss_switch_iter {} exceeds iterations {}",
                self.loss_switch_iter, self.iterations
            ));
        }
        if self.densify_interval == 0 {
            return fail("densify_interval must be positive".into());
        }
        if self.n_deformable == 0 {
            return fail("n_deformable must be positive".into());
        }
        if self.mlp_depth < 2 || self.mlp_width == 0 {
            return fail("mlp needs depth >= 2 and positive width".into());
        }
        if self.mlp_skip_layer >= self.mlp_depth {
            return fail(format!("skip layer {} outside depth {}", self.mlp_skip_layer, self.mlp_depth));
        }
        if self.image_downscale == 0 || self.tile_size == 0 {
            return fail("image_downscale and tile_size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.lambda_ssim) {
            return fail(format!("lambda_ssim {} outside [0, 1]", self.lambda_ssim));
        }
        crate::math::sh::validate_degree(self.sh_degree)?;
        self.deform_mode().map(|_| ())
    }

    /// Copy with the iteration-based schedules rescaled from the default
    /// 40k-iteration run to `iterations`.
    pub fn scaled_to(&self, iterations: usize) -> Self {
        let r = iterations as f64 / self.iterations.max(1) as f64;
        let scale = |v: usize| (v as f64 * r).round() as usize;
        Self {
            iterations,
            loss_switch_iter: scale(self.loss_switch_iter),
            densify_from: scale(self.densify_from),
            densify_until: scale(self.densify_until),
            lr_decay_iters: scale(self.lr_decay_iters).max(1),
            warmup_iters: scale(self.warmup_iters),
            ..self.clone()
        }
    }

    /// Applies `key = value` overrides given as a JSON object. Unknown keys
    /// and ill-typed values are configuration errors.
    pub fn with_overrides(&self, overrides: &serde_json::Map<String, serde_json::Value>) -> Result<Self> {
        let mut base = serde_json::to_value(self).map_err(|e| Error::Config(e.to_string()))?;
        let obj = base.as_object_mut().expect("config serializes to an object");
        for (k, v) in overrides {
            if !obj.contains_key(k) {
                return Err(Error::Config(format!("unknown config key `{k}`")));
            }
            obj.insert(k.clone(), v.clone());
        }
        let cfg: Self = serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn deform_mode(&self) -> Result<DeformMode> {
        DeformMode::from_flags(
            self.fix_scale,
            self.scale_post_exp,
            self.quaternion_addition,
            self.deform_opacity,
            self.deform_sh,
        )
    }

    pub fn field_config(&self) -> FieldConfig {
        FieldConfig {
            encoding: EncodingConfig {
                position_bands: self.position_bands,
                time_bands: self.time_bands,
            },
            depth: self.mlp_depth,
            width: self.mlp_width,
            skip_layer: (self.mlp_skip_layer > 0).then_some(self.mlp_skip_layer),
            deform_opacity: self.deform_opacity,
            deform_sh_coeffs: if self.deform_sh {
                crate::math::sh_coeff_count(self.sh_degree)
            } else {
                0
            },
        }
    }

    pub fn densify_thresholds(&self, width: usize, height: usize) -> DensifyThresholds {
        DensifyThresholds {
            grad: self.densify_grad_threshold,
            split_scale: self.split_scale_threshold,
            prune_opacity: self.prune_opacity,
            max_screen_radius: self.prune_screen_radius.then(|| width.max(height) as f64),
        }
    }

    pub fn gaussian_lrs(&self, factor: f64, scene_extent: f64) -> GaussianLrs {
        GaussianLrs {
            position: self.lr_position * scene_extent * factor,
            rotation: self.lr_rotation,
            log_scale: self.lr_log_scale,
            opacity: self.lr_opacity,
            sh: self.lr_sh,
        }
    }

    /// Whether the L1 data term is active at `iter`.
    pub fn uses_l1(&self, iter: usize) -> bool {
        self.no_lr_transit || iter > self.loss_switch_iter
    }
}
