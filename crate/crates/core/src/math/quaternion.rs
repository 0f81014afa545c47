use std::ops::Mul;

use serde::{Deserialize, Serialize};

use super::Mat3;
use crate::error::{Error, Result};

/// Squared-norm distance from one below which a quaternion counts as unit.
pub const UNIT_TOLERANCE: f64 = 1e-14;

/// Quaternion `w + xi + yj + zk`. Rotations use the unit-norm subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::identity()
    }
}

impl Quaternion {
    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new(c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n)
    }

    pub fn norm_squared(self) -> f64 {
        self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.w * k, self.x * k, self.y * k, self.z * k)
    }

    pub fn add(self, o: Self) -> Self {
        Self::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn dot(self, o: Self) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Unit quaternion with the same direction. Quaternions already unit to
    /// within [`UNIT_TOLERANCE`] are returned unchanged, which makes repeated
    /// normalization bit-stable.
    pub fn normalize(self) -> Result<Self> {
        let n2 = self.norm_squared();
        if n2 == 0.0 || !n2.is_finite() {
            return Err(Error::DegenerateQuaternion);
        }
        if (n2 - 1.0).abs() <= UNIT_TOLERANCE {
            return Ok(self);
        }
        Ok(self.scale(1.0 / n2.sqrt()))
    }

    /// Vector-Jacobian product of `normalize` at `self`.
    pub fn normalize_backward(self, grad_out: Self) -> Self {
        let n = self.norm();
        let u = self.scale(1.0 / n);
        let proj = u.dot(grad_out);
        grad_out.add(u.scale(-proj)).scale(1.0 / n)
    }

    /// Hamilton product `self * rhs`.
    pub fn multiply(self, rhs: Self) -> Self {
        let (a, b) = (self, rhs);
        Self::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    /// Gradients of `self * rhs` with respect to `(self, rhs)`.
    pub fn multiply_backward(self, rhs: Self, g: Self) -> (Self, Self) {
        let (a, b) = (self, rhs);
        // c = R(b) a, so dL/da = R(b)^T g
        let da = Self::new(
            b.w * g.w + b.x * g.x + b.y * g.y + b.z * g.z,
            -b.x * g.w + b.w * g.x - b.z * g.y + b.y * g.z,
            -b.y * g.w + b.z * g.x + b.w * g.y - b.x * g.z,
            -b.z * g.w - b.y * g.x + b.x * g.y + b.w * g.z,
        );
        // c = L(a) b, so dL/db = L(a)^T g
        let db = Self::new(
            a.w * g.w + a.x * g.x + a.y * g.y + a.z * g.z,
            -a.x * g.w + a.w * g.x + a.z * g.y - a.y * g.z,
            -a.y * g.w - a.z * g.x + a.w * g.y + a.x * g.z,
            -a.z * g.w + a.y * g.x - a.x * g.y + a.w * g.z,
        );
        (da, db)
    }

    /// Rotation matrix of a unit quaternion. The caller normalizes.
    pub fn to_rotmat(self) -> Mat3 {
        let Self { w, x, y, z } = self;
        Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Gradient of `to_rotmat` (treating the entries as a polynomial in q).
    pub fn to_rotmat_backward(self, g: &Mat3) -> Self {
        let Self { w, x, y, z } = self;
        let gm = |r: usize, c: usize| g[(r, c)];
        Self::new(
            2.0 * (-z * gm(0, 1) + y * gm(0, 2) + z * gm(1, 0) - x * gm(1, 2) - y * gm(2, 0)
                + x * gm(2, 1)),
            2.0 * (y * gm(0, 1) + z * gm(0, 2) + y * gm(1, 0) - 2.0 * x * gm(1, 1) - w * gm(1, 2)
                + z * gm(2, 0)
                + w * gm(2, 1)
                - 2.0 * x * gm(2, 2)),
            2.0 * (-2.0 * y * gm(0, 0) + x * gm(0, 1) + w * gm(0, 2) + x * gm(1, 0)
                + z * gm(1, 2)
                - w * gm(2, 0)
                + z * gm(2, 1)
                - 2.0 * y * gm(2, 2)),
            2.0 * (-2.0 * z * gm(0, 0) - w * gm(0, 1) + x * gm(0, 2) + w * gm(1, 0)
                - 2.0 * z * gm(1, 1)
                + y * gm(1, 2)
                + x * gm(2, 0)
                + y * gm(2, 1)),
        )
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, rhs: Self) -> Self {
        self.multiply(rhs)
    }
}
