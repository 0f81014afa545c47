use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

/// Pinhole camera. `world_to_camera` maps world points into a view space with
/// x right, y down and z forward; pixel centers sit at half-integer coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub world_to_camera: Matrix4<f64>,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    /// Camera with square pixels, principal point at the image center and a
    /// horizontal field of view of `fov_x` radians.
    pub fn from_fov(fov_x: f64, width: usize, height: usize, world_to_camera: Matrix4<f64>) -> Self {
        let fx = 0.5 * width as f64 / (0.5 * fov_x).tan();
        Self {
            fx,
            fy: fx,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            world_to_camera,
            width,
            height,
        }
    }

    /// Camera at `eye` looking at `target`, with `up` pointing up in the image.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_x: f64, width: usize, height: usize) -> Self {
        Self::from_fov(fov_x, width, height, look_at_matrix(eye, target, up))
    }

    pub fn rotation(&self) -> Mat3 {
        self.world_to_camera.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vec3 {
        self.world_to_camera.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation().transpose() * self.translation())
    }

    pub fn fov_x(&self) -> f64 {
        2.0 * (0.5 * self.width as f64 / self.fx).atan()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image size must be non-zero".into()));
        }
        let r = self.rotation();
        if (r.transpose() * r - Mat3::identity()).abs().max() > 1e-9 {
            return Err(Error::Config("camera rotation is not orthonormal".into()));
        }
        let last = self.world_to_camera.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(Error::Config("world_to_camera is not a rigid transform".into()));
        }
        Ok(())
    }

    pub fn with_size(&self, width: usize, height: usize) -> Self {
        Self::from_fov(self.fov_x(), width, height, self.world_to_camera)
    }
}

pub fn look_at_matrix(eye: Vec3, target: Vec3, up: Vec3) -> Matrix4<f64> {
    let z = (target - eye).normalize();
    let x = (-up).cross(&z).normalize();
    let y = z.cross(&x);
    let r = Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let t = -(r * eye);
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_convention() {
        let cam = Camera::look_at(
            Vec3::new(0.0, 0.0, 4.0),
            Vec3::zeros(),
            Vec3::y(),
            1.0,
            64,
            64,
        );
        cam.validate().unwrap();
        assert!((cam.center() - Vec3::new(0.0, 0.0, 4.0)).norm() < 1e-12);
        let r = cam.rotation();
        // forward is world -z, image-down is world -y
        assert!((r.row(2).transpose() - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert!((r.row(1).transpose() - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
        assert!((cam.fov_x() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rotation() {
        let mut m = Matrix4::identity();
        m[(0, 0)] = 2.0;
        let cam = Camera::from_fov(1.0, 8, 8, m);
        assert!(cam.validate().is_err());
    }
}
