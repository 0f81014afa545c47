//! Forward-warping deformation field and the warp algebra that applies its
//! outputs to canonical Gaussians.

mod field;
mod mlp;
mod warp;

pub use field::{DeformOutput, DeformationField, FieldCache, FieldConfig, FieldGradients};
pub use mlp::{LayerShape, Mlp, MlpCache};
pub use warp::{
    apply_deformation, apply_deformation_backward, deform_set, DeformMode, RotationMode,
    ScaleMode, POST_EXP_SCALE_FLOOR,
};

#[cfg(test)]
mod tests;
