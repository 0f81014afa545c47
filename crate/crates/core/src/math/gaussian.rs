use serde::{Deserialize, Serialize};

use super::{Mat3, Quaternion, Vec3};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// One anisotropic Gaussian primitive.
///
/// `rotation` is stored unnormalized as an optimization parameter and is
/// normalized wherever it is turned into a rotation. `sh` holds one RGB triple
/// per spherical-harmonic basis function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub position: Vec3,
    pub rotation: Quaternion,
    pub log_scale: Vec3,
    pub opacity_logit: f64,
    pub sh: Vec<[f64; 3]>,
}

impl Gaussian {
    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn scale(&self) -> Vec3 {
        self.log_scale.map(f64::exp)
    }

    pub fn max_scale(&self) -> f64 {
        self.scale().max()
    }

    /// Covariance after normalizing the stored rotation.
    pub fn covariance(&self) -> crate::Result<Mat3> {
        Ok(covariance_from(self.rotation.normalize()?, &self.log_scale))
    }
}

/// `R diag(exp(s)) diag(exp(s))^T R^T` for a unit quaternion.
pub fn covariance_from(q: Quaternion, log_scale: &Vec3) -> Mat3 {
    let m = q.to_rotmat() * Mat3::from_diagonal(&log_scale.map(f64::exp));
    m * m.transpose()
}

/// Gradients of [`covariance_from`] w.r.t. the (unit) quaternion entries and
/// the log-scale, given `dL/dSigma`.
pub fn covariance_backward(q: Quaternion, log_scale: &Vec3, d_sigma: &Mat3) -> (Quaternion, Vec3) {
    let r = q.to_rotmat();
    let s = log_scale.map(f64::exp);
    let m = r * Mat3::from_diagonal(&s);
    let d_m = (d_sigma + d_sigma.transpose()) * m;
    let d_r = d_m * Mat3::from_diagonal(&s);
    let rt_dm = r.transpose() * d_m;
    let d_log_scale = Vec3::new(rt_dm[(0, 0)] * s.x, rt_dm[(1, 1)] * s.y, rt_dm[(2, 2)] * s.z);
    (q.to_rotmat_backward(&d_r), d_log_scale)
}
