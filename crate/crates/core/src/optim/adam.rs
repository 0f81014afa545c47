use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Gaussian, Quaternion};
use crate::raster::GaussianGrad;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }
}

/// Moment buffers for a flat parameter group organised in rows of `stride`
/// scalars, so rows can be dropped or appended as primitives are pruned or
/// created.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    name: String,
    stride: usize,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(name: impl Into<String>, len: usize, stride: usize, config: AdamConfig) -> Self {
        assert!(stride > 0 && len % stride == 0);
        Self {
            config,
            name: name.into(),
            stride,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.m.len() / self.stride
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// One bias-corrected Adam update. Non-finite gradients abort the step
    /// before anything is modified.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam group {}: state {} params {} grads {}",
                self.name,
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                group: self.name.clone(),
                index,
            });
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }

    /// Keeps rows whose flag is set.
    pub fn retain_rows(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.rows());
        let s = self.stride;
        let filter = |buf: &mut Vec<f64>| {
            let mut out = Vec::with_capacity(buf.len());
            for (row, &k) in buf.chunks(s).zip(keep) {
                if k {
                    out.extend_from_slice(row);
                }
            }
            *buf = out;
        };
        filter(&mut self.m);
        filter(&mut self.v);
    }

    /// Appends `n` rows with zero moments.
    pub fn append_rows(&mut self, n: usize) {
        let len = self.m.len() + n * self.stride;
        self.m.resize(len, 0.0);
        self.v.resize(len, 0.0);
    }
}

/// Per-attribute learning rates of a Gaussian set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianLrs {
    pub position: f64,
    pub rotation: f64,
    pub log_scale: f64,
    pub opacity: f64,
    pub sh: f64,
}

/// Adam state for every attribute group of one Gaussian set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianAdam {
    sh_coeffs: usize,
    position: AdamState,
    rotation: AdamState,
    log_scale: AdamState,
    opacity: AdamState,
    sh: Option<AdamState>,
}

impl GaussianAdam {
    pub fn new(prefix: &str, n: usize, sh_coeffs: usize, config: AdamConfig) -> Self {
        let group = |name: &str, stride: usize| AdamState::new(format!("{prefix}.{name}"), n * stride, stride, config);
        Self {
            sh_coeffs,
            position: group("position", 3),
            rotation: group("rotation", 4),
            log_scale: group("log_scale", 3),
            opacity: group("opacity", 1),
            sh: (sh_coeffs > 0).then(|| group("sh", 3 * sh_coeffs)),
        }
    }

    pub fn len(&self) -> usize {
        self.opacity.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn retain(&mut self, keep: &[bool]) {
        for g in self.groups_mut() {
            g.retain_rows(keep);
        }
    }

    pub fn append(&mut self, n: usize) {
        for g in self.groups_mut() {
            g.append_rows(n);
        }
    }

    fn groups_mut(&mut self) -> impl Iterator<Item = &mut AdamState> {
        [
            &mut self.position,
            &mut self.rotation,
            &mut self.log_scale,
            &mut self.opacity,
        ]
        .into_iter()
        .chain(self.sh.as_mut())
    }

    /// Updates every attribute of `set` in place. All gradients are checked
    /// for finiteness before any parameter changes.
    pub fn step(&mut self, set: &mut [Gaussian], grads: &[GaussianGrad], lrs: &GaussianLrs) -> Result<()> {
        if set.len() != self.len() || grads.len() != set.len() {
            return Err(Error::Shape(format!(
                "optimizer holds {} rows, set has {}, gradients {}",
                self.len(),
                set.len(),
                grads.len()
            )));
        }
        let k = self.sh_coeffs;
        let mut p_pos = Vec::with_capacity(set.len() * 3);
        let mut g_pos = Vec::with_capacity(set.len() * 3);
        let mut p_rot = Vec::with_capacity(set.len() * 4);
        let mut g_rot = Vec::with_capacity(set.len() * 4);
        let mut p_scale = Vec::with_capacity(set.len() * 3);
        let mut g_scale = Vec::with_capacity(set.len() * 3);
        let mut p_op = Vec::with_capacity(set.len());
        let mut g_op = Vec::with_capacity(set.len());
        let mut p_sh = Vec::with_capacity(set.len() * 3 * k);
        let mut g_sh = Vec::with_capacity(set.len() * 3 * k);
        for (g, d) in set.iter().zip(grads) {
            if g.sh.len() != k || d.sh.len() != k {
                return Err(Error::Shape(format!("expected {k} SH coefficients")));
            }
            p_pos.extend_from_slice(g.position.as_slice());
            g_pos.extend_from_slice(d.position.as_slice());
            p_rot.extend_from_slice(&g.rotation.to_array());
            g_rot.extend_from_slice(&d.rotation.to_array());
            p_scale.extend_from_slice(g.log_scale.as_slice());
            g_scale.extend_from_slice(d.log_scale.as_slice());
            p_op.push(g.opacity_logit);
            g_op.push(d.opacity_logit);
            p_sh.extend(g.sh.iter().flatten());
            g_sh.extend(d.sh.iter().flatten());
        }
        let checks = [
            (&self.position, &g_pos),
            (&self.rotation, &g_rot),
            (&self.log_scale, &g_scale),
            (&self.opacity, &g_op),
        ];
        for (state, grads) in checks.into_iter().chain(self.sh.as_ref().map(|s| (s, &g_sh))) {
            if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    group: state.name.clone(),
                    index,
                });
            }
        }
        self.position.step(&mut p_pos, &g_pos, lrs.position)?;
        self.rotation.step(&mut p_rot, &g_rot, lrs.rotation)?;
        self.log_scale.step(&mut p_scale, &g_scale, lrs.log_scale)?;
        self.opacity.step(&mut p_op, &g_op, lrs.opacity)?;
        if let Some(sh) = &mut self.sh {
            sh.step(&mut p_sh, &g_sh, lrs.sh)?;
        }
        for (i, g) in set.iter_mut().enumerate() {
            g.position = crate::math::Vec3::from_column_slice(&p_pos[3 * i..3 * i + 3]);
            g.rotation = Quaternion::new(p_rot[4 * i], p_rot[4 * i + 1], p_rot[4 * i + 2], p_rot[4 * i + 3]);
            g.log_scale = crate::math::Vec3::from_column_slice(&p_scale[3 * i..3 * i + 3]);
            g.opacity_logit = p_op[i];
            for (c, src) in g.sh.iter_mut().zip(p_sh[3 * k * i..3 * k * (i + 1)].chunks(3)) {
                c.copy_from_slice(src);
            }
        }
        Ok(())
    }
}
