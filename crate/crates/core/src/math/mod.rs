//! Closed-form Gaussian, quaternion, spherical-harmonics and encoding math.

mod encoding;
mod gaussian;
mod quaternion;
pub mod sh;

pub(crate) use encoding::encode_into;
pub use encoding::{encoding_backward, positional_encoding, EncodingConfig};
pub use gaussian::{covariance_backward, covariance_from, logit, sigmoid, Gaussian};
pub use quaternion::Quaternion;
pub use sh::{sh_coeff_count, sh_evaluate};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
