use rand::Rng;

use super::TrainConfig;
use crate::deform::{apply_deformation, apply_deformation_backward, DeformMode, DeformOutput, DeformationField, FieldCache};
use crate::error::{Error, Result};
use crate::io::SeedPoint;
use crate::math::sh::rgb_to_dc;
use crate::math::{logit, sh_coeff_count, Gaussian, Quaternion, Vec3};
use crate::raster::{rasterize_backward, render_with_anchors, Camera, GaussianGrad, RenderGradients, RenderOutput, RenderSettings};

pub const INITIAL_OPACITY: f64 = 0.1;

/// Deformable and static Gaussian sets with the field that warps the former.
#[derive(Debug, Clone)]
pub struct Scene {
    pub deformable: Vec<Gaussian>,
    pub static_set: Vec<Gaussian>,
    pub field: DeformationField,
    pub mode: DeformMode,
    pub scene_extent: f64,
    pub sh_degree: usize,
    /// Propagate field gradients back to the canonical positions it reads.
    pub propagate_field_position: bool,
}

/// Forward state of [`Scene::forward`].
#[derive(Debug, Clone)]
pub struct ScenePass {
    pub output: RenderOutput,
    pub gaussians: Vec<Gaussian>,
    pub anchors: Vec<Vec3>,
    deltas: Vec<DeformOutput>,
    cache: Option<FieldCache>,
}

#[derive(Debug, Clone)]
pub struct SceneGradients {
    pub deformable: Vec<GaussianGrad>,
    pub static_set: Vec<GaussianGrad>,
    /// Empty when the pass skipped the field.
    pub field: Vec<f64>,
    pub render: RenderGradients,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.deformable.len() + self.static_set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The render list at time `t`: warped deformable Gaussians followed by
    /// the static ones, and the canonical SH anchors of each.
    pub fn gaussians_at(&self, t: f64) -> Result<(Vec<Gaussian>, Vec<Vec3>)> {
        let (g, a, _, _) = self.assemble(t, false)?;
        Ok((g, a))
    }

    #[allow(clippy::type_complexity)]
    fn assemble(&self, t: f64, canonical_only: bool) -> Result<(Vec<Gaussian>, Vec<Vec3>, Vec<DeformOutput>, Option<FieldCache>)> {
        let mut gaussians = Vec::with_capacity(self.len());
        let mut anchors = Vec::with_capacity(self.len());
        let (deltas, cache) = if canonical_only || self.deformable.is_empty() {
            gaussians.extend(self.deformable.iter().cloned());
            (Vec::new(), None)
        } else {
            let positions: Vec<Vec3> = self.deformable.iter().map(|g| g.position).collect();
            let (deltas, cache) = self.field.forward_batch(&positions, t)?;
            for (g, d) in self.deformable.iter().zip(&deltas) {
                gaussians.push(apply_deformation(g, d, &self.mode)?);
            }
            (deltas, Some(cache))
        };
        anchors.extend(self.deformable.iter().map(|g| g.position));
        gaussians.extend(self.static_set.iter().cloned());
        anchors.extend(self.static_set.iter().map(|g| g.position));
        Ok((gaussians, anchors, deltas, cache))
    }

    pub fn settings(&self, background: [f64; 3], tile_size: usize) -> RenderSettings {
        RenderSettings {
            background,
            tile_size,
            sh_degree: self.sh_degree,
        }
    }

    /// Renders at time `t`, returning the image only.
    pub fn render(&self, cam: &Camera, t: f64, settings: &RenderSettings) -> Result<Vec<f64>> {
        Ok(self.forward(cam, t, settings, false)?.output.into_image())
    }

    /// Renders at time `t`, keeping what [`Scene::backward`] needs.
    /// `canonical_only` bypasses the field.
    pub fn forward(&self, cam: &Camera, t: f64, settings: &RenderSettings, canonical_only: bool) -> Result<ScenePass> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Config(format!("time {t} outside [0, 1]")));
        }
        let (gaussians, anchors, deltas, cache) = self.assemble(t, canonical_only)?;
        let output = render_with_anchors(&gaussians, &anchors, cam, settings)?;
        Ok(ScenePass {
            output,
            gaussians,
            anchors,
            deltas,
            cache,
        })
    }

    /// Gradients of `sum(d_image * image)` w.r.t. both canonical sets and the
    /// field weights.
    pub fn backward(&self, pass: &ScenePass, d_image: &[f64]) -> Result<SceneGradients> {
        let render = rasterize_backward(&pass.output, &pass.gaussians, &pass.anchors, d_image)?;
        let nd = self.deformable.len();
        let with_anchor = |g: &GaussianGrad, a: &Vec3| {
            let mut g = g.clone();
            g.position += a;
            g
        };
        let static_set = render.gaussians[nd..]
            .iter()
            .zip(&render.sh_anchors[nd..])
            .map(|(g, a)| with_anchor(g, a))
            .collect();
        let (deformable, field) = match &pass.cache {
            None => (
                render.gaussians[..nd]
                    .iter()
                    .zip(&render.sh_anchors[..nd])
                    .map(|(g, a)| with_anchor(g, a))
                    .collect(),
                Vec::new(),
            ),
            Some(cache) => {
                let mut canonical = Vec::with_capacity(nd);
                let mut d_out = Vec::with_capacity(nd);
                for i in 0..nd {
                    let (dg, dd) = apply_deformation_backward(&self.deformable[i], &pass.deltas[i], &self.mode, &render.gaussians[i]);
                    canonical.push(with_anchor(&dg, &render.sh_anchors[i]));
                    d_out.push(dd);
                }
                let fg = self.field.backward_batch(cache, &d_out, self.propagate_field_position)?;
                if let Some(dp) = fg.positions {
                    for (c, p) in canonical.iter_mut().zip(dp) {
                        c.position += p;
                    }
                }
                (canonical, fg.params)
            }
        };
        Ok(SceneGradients {
            deformable,
            static_set,
            field,
            render,
        })
    }
}

/// Radius of the bounding sphere of the camera centers around their centroid.
pub fn scene_extent(cameras: &[&Camera]) -> f64 {
    if cameras.is_empty() {
        return 1.0;
    }
    let centers: Vec<Vec3> = cameras.iter().map(|c| c.center()).collect();
    let centroid = centers.iter().sum::<Vec3>() / centers.len() as f64;
    let r = centers.iter().map(|c| (c - centroid).norm()).fold(0.0, f64::max);
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

/// Log of the mean distance from each point to its three nearest neighbours.
pub fn knn_log_scales(points: &[Vec3], fallback: f64) -> Vec<f64> {
    let k = 3.min(points.len().saturating_sub(1));
    crate::par::map_range(points.len(), |i| {
        if k == 0 {
            return fallback.ln();
        }
        let mut best = [f64::INFINITY; 3];
        for (j, q) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = (points[i] - q).norm_squared();
            if d < best[k - 1] {
                let mut s = k - 1;
                while s > 0 && best[s - 1] > d {
                    best[s] = best[s - 1];
                    s -= 1;
                }
                best[s] = d;
            }
        }
        let mean = best[..k].iter().map(|d| d.sqrt()).sum::<f64>() / k as f64;
        mean.max(1e-7).ln()
    })
}

fn isotropic(position: Vec3, log_scale: f64, rgb: [f64; 3], sh_degree: usize) -> Gaussian {
    let mut sh = vec![[0.0; 3]; sh_coeff_count(sh_degree)];
    sh[0] = rgb_to_dc(rgb);
    Gaussian {
        position,
        rotation: Quaternion::identity(),
        log_scale: Vec3::repeat(log_scale),
        opacity_logit: logit(INITIAL_OPACITY),
        sh,
    }
}

fn from_points(points: &[SeedPoint], fallback: f64, sh_degree: usize) -> Vec<Gaussian> {
    let pos: Vec<Vec3> = points.iter().map(|p| p.position).collect();
    let scales = knn_log_scales(&pos, fallback);
    points
        .iter()
        .zip(scales)
        .map(|(p, s)| isotropic(p.position, s, p.color.map(|c| f64::from(c) / 255.0), sh_degree))
        .collect()
}

/// Initial scene: a deformable set sampled uniformly in `bbox` and a static
/// set copied from the seed points. With `no_ib_init` both sets start from
/// the seed points; with `no_static` the static set is empty.
pub fn init_scene(
    points: Option<&[SeedPoint]>,
    bbox: (Vec3, Vec3),
    scene_extent: f64,
    config: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<Scene> {
    config.validate()?;
    let (lo, hi) = bbox;
    if (0..3).any(|k| !(hi[k] > lo[k])) {
        return Err(Error::Config(format!("degenerate bounding box {lo:?} .. {hi:?}")));
    }
    let fallback = 0.01 * scene_extent;
    let seeds = points.filter(|p| !p.is_empty());
    let deformable = match (config.no_ib_init, seeds) {
        (true, Some(p)) => from_points(p, fallback, config.sh_degree),
        _ => {
            if config.no_ib_init {
                log::warn!("no_ib_init without seed points; sampling the deformable set uniformly");
            }
            let pos: Vec<Vec3> = (0..config.n_deformable)
                .map(|_| Vec3::from_fn(|k, _| rng.random_range(lo[k]..hi[k])))
                .collect();
            let scales = knn_log_scales(&pos, fallback);
            pos.into_iter()
                .zip(scales)
                .map(|(p, s)| isotropic(p, s, [0.5; 3], config.sh_degree))
                .collect()
        }
    };
    let static_set = match (config.no_static, seeds) {
        (false, Some(p)) => from_points(p, fallback, config.sh_degree),
        _ => Vec::new(),
    };
    let field = DeformationField::new(config.field_config(), rng)?;
    Ok(Scene {
        deformable,
        static_set,
        field,
        mode: config.deform_mode()?,
        scene_extent,
        sh_degree: config.sh_degree,
        propagate_field_position: config.propagate_field_position,
    })
}
