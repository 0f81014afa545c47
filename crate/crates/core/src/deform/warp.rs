use serde::{Deserialize, Serialize};

use super::field::{DeformOutput, DeformationField};
use crate::error::{Error, Result};
use crate::math::{Gaussian, Quaternion};
use crate::raster::GaussianGrad;

/// Floor applied to the post-exponentiation scale before taking the log.
pub const POST_EXP_SCALE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// `exp(s + ds)`
    #[default]
    PreExponentiate,
    /// `exp(s) + ds`
    PostExponentiate,
    /// scale not deformed
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationMode {
    /// `normalize(q * normalize(1 + dq))`
    #[default]
    Multiply,
    /// `normalize(q + dq)`
    Add,
}

/// How field outputs are applied to canonical attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DeformMode {
    pub scale: ScaleMode,
    pub rotation: RotationMode,
    pub deform_opacity: bool,
    pub deform_sh: bool,
}

impl DeformMode {
    pub fn from_flags(
        fix_scale: bool,
        scale_post_exp: bool,
        quaternion_addition: bool,
        deform_opacity: bool,
        deform_sh: bool,
    ) -> Result<Self> {
        let scale = match (fix_scale, scale_post_exp) {
            (true, true) => {
                return Err(Error::Config(
                    "fix_scale and scale_post_exp select conflicting scale modes".into(),
                ))
            }
            (true, false) => ScaleMode::Fixed,
            (false, true) => ScaleMode::PostExponentiate,
            (false, false) => ScaleMode::PreExponentiate,
        };
        let rotation = if quaternion_addition { RotationMode::Add } else { RotationMode::Multiply };
        Ok(Self {
            scale,
            rotation,
            deform_opacity,
            deform_sh,
        })
    }
}

/// Attributes of `g` at the time the deltas `d` were predicted for.
pub fn apply_deformation(g: &Gaussian, d: &DeformOutput, mode: &DeformMode) -> Result<Gaussian> {
    let mut out = g.clone();
    out.position = g.position + d.delta_position;
    match mode.scale {
        ScaleMode::PreExponentiate => out.log_scale = g.log_scale + d.delta_log_scale,
        ScaleMode::Fixed => {}
        ScaleMode::PostExponentiate => {
            for k in 0..3 {
                let e = g.log_scale[k].exp() + d.delta_log_scale[k];
                if e < POST_EXP_SCALE_FLOOR {
                    log::debug!("post-exponentiated scale {e} clamped to {POST_EXP_SCALE_FLOOR}");
                }
                out.log_scale[k] = e.max(POST_EXP_SCALE_FLOOR).ln();
            }
        }
    }
    out.rotation = match mode.rotation {
        RotationMode::Multiply => {
            let dq = Quaternion::identity().add(d.delta_quat_raw).normalize()?;
            (g.rotation * dq).normalize()?
        }
        RotationMode::Add => g.rotation.add(d.delta_quat_raw).normalize()?,
    };
    if mode.deform_opacity {
        out.opacity_logit = g.opacity_logit + d.delta_opacity;
    }
    if mode.deform_sh {
        for (c, dc) in out.sh.iter_mut().zip(&d.delta_sh) {
            for ch in 0..3 {
                c[ch] += dc[ch];
            }
        }
    }
    Ok(out)
}

/// Chain rule through [`apply_deformation`]: returns gradients w.r.t. the
/// canonical Gaussian and w.r.t. the deltas, given gradients w.r.t. the
/// deformed Gaussian.
pub fn apply_deformation_backward(
    g: &Gaussian,
    d: &DeformOutput,
    mode: &DeformMode,
    grad: &GaussianGrad,
) -> (GaussianGrad, DeformOutput) {
    let mut dg = grad.clone();
    let mut dd = DeformOutput::zeros(d.delta_sh.len());

    dd.delta_position = grad.position;

    match mode.scale {
        ScaleMode::PreExponentiate => dd.delta_log_scale = grad.log_scale,
        ScaleMode::Fixed => {}
        ScaleMode::PostExponentiate => {
            for k in 0..3 {
                let s = g.log_scale[k].exp();
                let e = s + d.delta_log_scale[k];
                if e < POST_EXP_SCALE_FLOOR {
                    dg.log_scale[k] = 0.0;
                } else {
                    dg.log_scale[k] = grad.log_scale[k] * s / e;
                    dd.delta_log_scale[k] = grad.log_scale[k] / e;
                }
            }
        }
    }

    match mode.rotation {
        RotationMode::Multiply => {
            let raw_dq = Quaternion::identity().add(d.delta_quat_raw);
            let dq = raw_dq.normalize().expect("forward pass validated the rotation delta");
            let product = g.rotation * dq;
            let d_product = product.normalize_backward(grad.rotation);
            let (d_rot, d_dq) = g.rotation.multiply_backward(dq, d_product);
            dg.rotation = d_rot;
            dd.delta_quat_raw = raw_dq.normalize_backward(d_dq);
        }
        RotationMode::Add => {
            let sum = g.rotation.add(d.delta_quat_raw);
            let d_sum = sum.normalize_backward(grad.rotation);
            dg.rotation = d_sum;
            dd.delta_quat_raw = d_sum;
        }
    }

    if mode.deform_opacity {
        dd.delta_opacity = grad.opacity_logit;
    }
    if mode.deform_sh {
        for (k, c) in dd.delta_sh.iter_mut().enumerate() {
            if let Some(gc) = grad.sh.get(k) {
                *c = *gc;
            }
        }
    }
    (dg, dd)
}

/// Deforms every Gaussian of `set` to time `t`, preserving order.
pub fn deform_set(set: &[Gaussian], field: &DeformationField, t: f64, mode: &DeformMode) -> Result<Vec<Gaussian>> {
    let positions: Vec<_> = set.iter().map(|g| g.position).collect();
    let (deltas, _) = field.forward_batch(&positions, t)?;
    set.iter().zip(&deltas).map(|(g, d)| apply_deformation(g, d, mode)).collect()
}
