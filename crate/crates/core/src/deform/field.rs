use serde::{Deserialize, Serialize};

use super::mlp::{LayerShape, Mlp, MlpCache};
use crate::error::{Error, Result};
use crate::math::encode_into;
use crate::math::{encoding_backward, EncodingConfig, Quaternion, Vec3};

/// Architecture of the deformation field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub encoding: EncodingConfig,
    pub depth: usize,
    pub width: usize,
    pub skip_layer: Option<usize>,
    /// Adds an opacity-logit delta head.
    pub deform_opacity: bool,
    /// Number of SH coefficients that receive a delta head (0 disables).
    pub deform_sh_coeffs: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            encoding: EncodingConfig::default(),
            depth: 6,
            width: 256,
            skip_layer: Some(4),
            deform_opacity: false,
            deform_sh_coeffs: 0,
        }
    }
}

impl FieldConfig {
    pub fn output_dim(&self) -> usize {
        10 + usize::from(self.deform_opacity) + 3 * self.deform_sh_coeffs
    }
}

/// Per-Gaussian attribute deltas predicted by the field. The same type
/// carries gradients w.r.t. those deltas.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformOutput {
    pub delta_position: Vec3,
    /// Added to the identity quaternion before normalization.
    pub delta_quat_raw: Quaternion,
    pub delta_log_scale: Vec3,
    pub delta_opacity: f64,
    pub delta_sh: Vec<[f64; 3]>,
}

impl DeformOutput {
    pub fn zeros(sh_coeffs: usize) -> Self {
        Self {
            delta_position: Vec3::zeros(),
            delta_quat_raw: Quaternion::new(0.0, 0.0, 0.0, 0.0),
            delta_log_scale: Vec3::zeros(),
            delta_opacity: 0.0,
            delta_sh: vec![[0.0; 3]; sh_coeffs],
        }
    }

    fn from_raw(raw: &[f64], cfg: &FieldConfig) -> Self {
        let mut out = Self {
            delta_position: Vec3::new(raw[0], raw[1], raw[2]),
            delta_quat_raw: Quaternion::new(raw[3], raw[4], raw[5], raw[6]),
            delta_log_scale: Vec3::new(raw[7], raw[8], raw[9]),
            delta_opacity: 0.0,
            delta_sh: Vec::new(),
        };
        let mut k = 10;
        if cfg.deform_opacity {
            out.delta_opacity = raw[k];
            k += 1;
        }
        out.delta_sh = raw[k..k + 3 * cfg.deform_sh_coeffs]
            .chunks(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        out
    }

    fn write_raw(&self, cfg: &FieldConfig, raw: &mut [f64]) {
        raw[..3].copy_from_slice(self.delta_position.as_slice());
        raw[3..7].copy_from_slice(&self.delta_quat_raw.to_array());
        raw[7..10].copy_from_slice(self.delta_log_scale.as_slice());
        let mut k = 10;
        if cfg.deform_opacity {
            raw[k] = self.delta_opacity;
            k += 1;
        }
        for (i, c) in self.delta_sh.iter().take(cfg.deform_sh_coeffs).enumerate() {
            raw[k + 3 * i..k + 3 * i + 3].copy_from_slice(c);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.delta_position.iter().all(|v| v.is_finite())
            && self.delta_quat_raw.to_array().iter().all(|v| v.is_finite())
            && self.delta_log_scale.iter().all(|v| v.is_finite())
            && self.delta_opacity.is_finite()
            && self.delta_sh.iter().flatten().all(|v| v.is_finite())
    }
}

/// Forward state retained for [`DeformationField::backward_batch`].
#[derive(Debug, Clone, Default)]
pub struct FieldCache {
    positions: Vec<Vec3>,
    mlp: MlpCache,
}

impl FieldCache {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct FieldGradients {
    pub params: Vec<f64>,
    /// Gradient w.r.t. the canonical positions fed to the field; `None` when
    /// the position input is detached.
    pub positions: Option<Vec<Vec3>>,
}

/// Time-conditioned MLP mapping encoded `(position, t)` to attribute deltas.
#[derive(Debug, Clone)]
pub struct DeformationField {
    config: FieldConfig,
    mlp: Mlp,
}

impl DeformationField {
    /// Field with fan-in initialized hidden layers and zero output head, so
    /// the initial deformation is the identity.
    pub fn new(config: FieldConfig, rng: &mut impl rand::Rng) -> Result<Self> {
        let mut field = Self::zeroed(config)?;
        field.mlp.init(rng);
        Ok(field)
    }

    /// Field with every parameter zero, for loading stored weights.
    pub fn zeroed(config: FieldConfig) -> Result<Self> {
        let mlp = Mlp::new(
            config.encoding.input_dim(),
            config.depth,
            config.width,
            config.output_dim(),
            config.skip_layer,
        )?;
        Ok(Self { config, mlp })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        self.mlp.layer_shapes()
    }

    pub fn params(&self) -> &[f64] {
        self.mlp.params()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.mlp.params_mut()
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        self.mlp.set_params(params)
    }

    /// Concatenated position and time encodings.
    pub fn encode(&self, position: &Vec3, t: f64, out: &mut Vec<f64>) {
        encode_into(position.as_slice(), self.config.encoding.position_bands, out);
        encode_into(&[t], self.config.encoding.time_bands, out);
    }

    pub fn field_forward(&self, position: &Vec3, t: f64) -> Result<DeformOutput> {
        let (mut out, _) = self.forward_batch(std::slice::from_ref(position), t)?;
        Ok(out.pop().unwrap())
    }

    pub fn forward_batch(&self, positions: &[Vec3], t: f64) -> Result<(Vec<DeformOutput>, FieldCache)> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Config(format!("time {t} outside [0, 1]")));
        }
        let mut input = Vec::with_capacity(positions.len() * self.config.encoding.input_dim());
        for p in positions {
            self.encode(p, t, &mut input);
        }
        let (raw, mlp) = self.mlp.forward(&input, positions.len());
        let od = self.config.output_dim();
        let outputs = raw.chunks(od).map(|r| DeformOutput::from_raw(r, &self.config)).collect();
        Ok((
            outputs,
            FieldCache {
                positions: positions.to_vec(),
                mlp,
            },
        ))
    }

    /// Gradients of the weights given gradients w.r.t. each output. When
    /// `propagate_positions` is set, also differentiates through the position
    /// encoding.
    pub fn backward_batch(&self, cache: &FieldCache, grads: &[DeformOutput], propagate_positions: bool) -> Result<FieldGradients> {
        if cache.mlp.rows() != cache.positions.len() {
            return Err(Error::State("field cache is inconsistent".into()));
        }
        if grads.len() != cache.len() {
            return Err(Error::Shape(format!(
                "{} output gradients for a cache of {} rows",
                grads.len(),
                cache.len()
            )));
        }
        let od = self.config.output_dim();
        let mut d_out = vec![0.0; grads.len() * od];
        for (g, row) in grads.iter().zip(d_out.chunks_mut(od)) {
            g.write_raw(&self.config, row);
        }
        let (params, d_input) = self.mlp.backward(&cache.mlp, &d_out, propagate_positions)?;
        let positions = d_input.map(|di| {
            let in_dim = self.config.encoding.input_dim();
            let pos_dim = self.config.encoding.position_dim();
            cache
                .positions
                .iter()
                .zip(di.chunks(in_dim))
                .map(|(p, row)| {
                    let g = encoding_backward(p.as_slice(), self.config.encoding.position_bands, &row[..pos_dim]);
                    Vec3::new(g[0], g[1], g[2])
                })
                .collect()
        });
        Ok(FieldGradients { params, positions })
    }
}
