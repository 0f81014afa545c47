use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::GaussianAdam;
use crate::error::{Error, Result};
use crate::math::{sigmoid, Gaussian, Vec3};

/// Split children are this many times smaller than their parent per axis.
pub const SPLIT_SCALE_DIVISOR: f64 = 1.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensifyThresholds {
    /// Mean NDC screen-space positional gradient above which a Gaussian is densified.
    pub grad: f64,
    /// Fraction of the scene extent separating clone (below) from split (above).
    pub split_scale: f64,
    /// Opacity below which a Gaussian is pruned.
    pub prune_opacity: f64,
    /// Screen radius in pixels above which a Gaussian is pruned.
    pub max_screen_radius: Option<f64>,
}

impl Default for DensifyThresholds {
    fn default() -> Self {
        Self {
            grad: 2e-4,
            split_scale: 0.01,
            prune_opacity: 0.005,
            max_screen_radius: None,
        }
    }
}

/// Gradient statistics gathered between two densification passes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DensifyStats {
    pub grad_accum: Vec<f64>,
    pub count: Vec<u32>,
    /// Summed world-space position gradient, used as the clone direction.
    pub position_grad: Vec<Vec3>,
    pub max_radius: Vec<f64>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        Self {
            grad_accum: vec![0.0; n],
            count: vec![0; n],
            position_grad: vec![Vec3::zeros(); n],
            max_radius: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.count.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count.is_empty()
    }

    /// Adds one frame of observations. Only visible entries are touched.
    pub fn accumulate(&mut self, screen_grad_norm: &[f64], visible: &[bool], radius: &[f64], position_grad: &[Vec3]) -> Result<()> {
        let n = self.len();
        if [screen_grad_norm.len(), visible.len(), radius.len(), position_grad.len()] != [n; 4] {
            return Err(Error::Shape(format!("densify stats hold {n} entries")));
        }
        for i in 0..n {
            if visible[i] {
                self.grad_accum[i] += screen_grad_norm[i];
                self.count[i] += 1;
                self.position_grad[i] += position_grad[i];
                self.max_radius[i] = self.max_radius[i].max(radius[i]);
            }
        }
        Ok(())
    }

    pub fn mean_grad(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.grad_accum[i] / f64::from(self.count[i])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DensifyReport {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

/// Clones small and splits large high-gradient Gaussians, then prunes
/// transparent or oversized ones. Optimizer rows follow the set: new entries
/// start with zero moments and removed entries are dropped. Stats are reset.
pub fn densify_and_prune(
    set: &mut Vec<Gaussian>,
    stats: &mut DensifyStats,
    adam: &mut GaussianAdam,
    thresholds: &DensifyThresholds,
    scene_extent: f64,
    rng: &mut impl Rng,
) -> Result<DensifyReport> {
    let n = set.len();
    if stats.len() != n || adam.len() != n {
        return Err(Error::Shape(format!(
            "set has {n} Gaussians, stats {}, optimizer {}",
            stats.len(),
            adam.len()
        )));
    }
    let mut report = DensifyReport::default();
    let mut keep = vec![true; n];
    let mut born = Vec::new();
    let mut born_radius = Vec::new();
    for i in 0..n {
        if stats.mean_grad(i) <= thresholds.grad {
            continue;
        }
        let g = &set[i];
        if g.max_scale() <= thresholds.split_scale * scene_extent {
            let mut c = g.clone();
            let dir = stats.position_grad[i];
            if dir.norm() > 0.0 {
                c.position -= dir.normalize() * g.max_scale();
            }
            born.push(c);
            born_radius.push(0.0);
            report.cloned += 1;
        } else {
            let rot = g.rotation.normalize()?.to_rotmat();
            let scale = g.scale();
            for _ in 0..2 {
                let z = Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                let mut c = g.clone();
                c.position += rot * scale.component_mul(&z);
                c.log_scale = g.log_scale.add_scalar(-SPLIT_SCALE_DIVISOR.ln());
                born.push(c);
                born_radius.push(0.0);
            }
            keep[i] = false;
            report.split += 1;
        }
    }

    let mut radius: Vec<f64> = stats.max_radius.iter().zip(&keep).filter(|(_, &k)| k).map(|(&r, _)| r).collect();
    let mut idx = 0;
    set.retain(|_| {
        idx += 1;
        keep[idx - 1]
    });
    adam.retain(&keep);
    adam.append(born.len());
    set.extend(born);
    radius.extend(born_radius);

    let prune: Vec<bool> = set
        .iter()
        .zip(&radius)
        .map(|(g, &r)| {
            sigmoid(g.opacity_logit) < thresholds.prune_opacity || thresholds.max_screen_radius.is_some_and(|m| r > m)
        })
        .collect();
    report.pruned = prune.iter().filter(|&&p| p).count();
    if report.pruned > 0 {
        let keep: Vec<bool> = prune.iter().map(|p| !p).collect();
        let mut idx = 0;
        set.retain(|_| {
            idx += 1;
            keep[idx - 1]
        });
        adam.retain(&keep);
    }
    *stats = DensifyStats::new(set.len());
    debug_assert_eq!(adam.len(), set.len());
    Ok(report)
}
