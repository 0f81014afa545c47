use nalgebra::{Matrix2, Matrix2x3, Vector2};

use super::Camera;
use crate::math::sh::{self, sh_raw};
use crate::math::{covariance_backward, covariance_from, sigmoid, Gaussian, Mat3, Quaternion, Vec3};

/// Splats closer than this along the view axis are culled.
pub const Z_NEAR: f64 = 0.01;
/// Added to both diagonal entries of the screen covariance.
pub const LOW_PASS: f64 = 0.3;
/// Cull extent in standard deviations along the major axis.
pub const EXTENT_SIGMAS: f64 = 3.0;

/// A Gaussian reduced to a screen-space ellipse.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedGaussian {
    /// Index of the source primitive in the input slice.
    pub index: usize,
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    /// Inverse of `cov2d` as `(a, b, c)` for `[[a, b], [b, c]]`.
    pub conic: [f64; 3],
    pub depth: f64,
    pub rgb: [f64; 3],
    /// Channels whose color was not clamped.
    pub rgb_active: [bool; 3],
    pub alpha_base: f64,
    pub radius: f64,
}

impl ProjectedGaussian {
    /// Whether the pixel center `(px, py)` lies in the cull box.
    #[inline]
    pub fn covers(&self, px: f64, py: f64) -> bool {
        (px - self.mean2d.x).abs() <= self.radius && (py - self.mean2d.y).abs() <= self.radius
    }

    /// Exponent `-0.5 d^T conic d` at the pixel center.
    #[inline]
    pub fn power(&self, px: f64, py: f64) -> f64 {
        let dx = px - self.mean2d.x;
        let dy = py - self.mean2d.y;
        let [a, b, c] = self.conic;
        -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
    }
}

fn jacobian(cam: &Camera, t: &Vec3) -> Matrix2x3<f64> {
    let iz = 1.0 / t.z;
    let iz2 = iz * iz;
    Matrix2x3::new(
        cam.fx * iz,
        0.0,
        -cam.fx * t.x * iz2,
        0.0,
        cam.fy * iz,
        -cam.fy * t.y * iz2,
    )
}

/// Projects `g` into `cam`. `sh_anchor` is the point whose direction from the
/// camera center selects the view-dependent color. Returns `None` when culled.
pub fn project(
    g: &Gaussian,
    index: usize,
    sh_anchor: &Vec3,
    cam: &Camera,
    sh_degree: usize,
) -> Option<ProjectedGaussian> {
    let r = cam.rotation();
    let t = r * g.position + cam.translation();
    if t.z <= Z_NEAR || !t.z.is_finite() {
        return None;
    }
    let mean2d = Vector2::new(cam.fx * t.x / t.z + cam.cx, cam.fy * t.y / t.z + cam.cy);

    let q = g.rotation.normalize().ok()?;
    let sigma = covariance_from(q, &g.log_scale);
    let tm = jacobian(cam, &t) * r;
    let cov2d = tm * sigma * tm.transpose() + Matrix2::identity() * LOW_PASS;
    let det = cov2d[(0, 0)] * cov2d[(1, 1)] - cov2d[(0, 1)] * cov2d[(1, 0)];
    if !(det > 0.0) {
        return None;
    }
    let conic = [cov2d[(1, 1)] / det, -cov2d[(0, 1)] / det, cov2d[(0, 0)] / det];
    let mid = 0.5 * (cov2d[(0, 0)] + cov2d[(1, 1)]);
    let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
    let radius = EXTENT_SIGMAS * lambda_max.sqrt();

    let w = cam.width as f64;
    let h = cam.height as f64;
    if mean2d.x + radius < 0.0 || mean2d.x - radius > w || mean2d.y + radius < 0.0 || mean2d.y - radius > h {
        return None;
    }

    let dir = (sh_anchor - cam.center()).normalize();
    let raw = sh_raw(&g.sh, &dir, sh_degree);
    let rgb_active = raw.map(|v| (0.0..=1.0).contains(&v));
    let rgb = raw.map(|v| v.clamp(0.0, 1.0));

    Some(ProjectedGaussian {
        index,
        mean2d,
        cov2d,
        conic,
        depth: t.z,
        rgb,
        rgb_active,
        alpha_base: sigmoid(g.opacity_logit),
        radius,
    })
}

/// Screen-space gradients of one projected splat.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScreenGrad {
    pub mean2d: [f64; 2],
    pub conic: [f64; 3],
    pub alpha_base: f64,
    pub rgb: [f64; 3],
}

impl ScreenGrad {
    pub fn add(&mut self, o: &ScreenGrad) {
        for k in 0..2 {
            self.mean2d[k] += o.mean2d[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.rgb[k] += o.rgb[k];
        }
        self.alpha_base += o.alpha_base;
    }
}

/// Gradients of one Gaussian's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGrad {
    pub position: Vec3,
    pub rotation: Quaternion,
    pub log_scale: Vec3,
    pub opacity_logit: f64,
    pub sh: Vec<[f64; 3]>,
}

impl GaussianGrad {
    pub fn zeros(sh_len: usize) -> Self {
        Self {
            position: Vec3::zeros(),
            rotation: Quaternion::new(0.0, 0.0, 0.0, 0.0),
            log_scale: Vec3::zeros(),
            opacity_logit: 0.0,
            sh: vec![[0.0; 3]; sh_len],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.position == Vec3::zeros()
            && self.rotation.to_array() == [0.0; 4]
            && self.log_scale == Vec3::zeros()
            && self.opacity_logit == 0.0
            && self.sh.iter().all(|c| *c == [0.0; 3])
    }
}

/// Chain rule from screen-space gradients back to the Gaussian parameters.
/// Returns the parameter gradients and the gradient w.r.t. the SH anchor.
pub fn project_backward(
    g: &Gaussian,
    p: &ProjectedGaussian,
    sh_anchor: &Vec3,
    cam: &Camera,
    sh_degree: usize,
    sg: &ScreenGrad,
) -> (GaussianGrad, Vec3) {
    let mut out = GaussianGrad::zeros(g.sh.len());

    // color
    let cam_center = cam.center();
    let v = sh_anchor - cam_center;
    let vn = v.norm();
    let dir = v / vn;
    let d_raw: [f64; 3] = std::array::from_fn(|c| if p.rgb_active[c] { sg.rgb[c] } else { 0.0 });
    let mut basis = [0.0; 16];
    let mut basis_grad = [[0.0; 3]; 16];
    sh::basis(&dir, sh_degree, &mut basis);
    sh::basis_grad(&dir, sh_degree, &mut basis_grad);
    let mut d_dir = Vec3::zeros();
    for k in 0..sh::sh_coeff_count(sh_degree).min(g.sh.len()) {
        let mut s = 0.0;
        for c in 0..3 {
            out.sh[k][c] = basis[k] * d_raw[c];
            s += g.sh[k][c] * d_raw[c];
        }
        d_dir += Vec3::from(basis_grad[k]) * s;
    }
    let d_anchor = (d_dir - dir * dir.dot(&d_dir)) / vn;

    // opacity
    let a = p.alpha_base;
    out.opacity_logit = sg.alpha_base * a * (1.0 - a);

    // conic -> cov2d, as full symmetric matrices
    let conic_m = Matrix2::new(p.conic[0], p.conic[1], p.conic[1], p.conic[2]);
    let g_conic = Matrix2::new(sg.conic[0], 0.5 * sg.conic[1], 0.5 * sg.conic[1], sg.conic[2]);
    let d_cov2d = -(conic_m * g_conic * conic_m);

    let r = cam.rotation();
    let t = r * g.position + cam.translation();
    let j = jacobian(cam, &t);
    let tm = j * r;
    let q_raw = g.rotation;
    let q = q_raw.normalize().expect("projected Gaussian has a valid rotation");
    let sigma = covariance_from(q, &g.log_scale);

    let d_sigma: Mat3 = tm.transpose() * d_cov2d * tm;
    let d_tm = (d_cov2d + d_cov2d.transpose()) * tm * sigma;
    let d_j = d_tm * r.transpose();

    let (fx, fy) = (cam.fx, cam.fy);
    let iz = 1.0 / t.z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let mut d_t = Vec3::new(
        d_j[(0, 2)] * (-fx * iz2),
        d_j[(1, 2)] * (-fy * iz2),
        d_j[(0, 0)] * (-fx * iz2)
            + d_j[(0, 2)] * (2.0 * fx * t.x * iz3)
            + d_j[(1, 1)] * (-fy * iz2)
            + d_j[(1, 2)] * (2.0 * fy * t.y * iz3),
    );
    d_t.x += sg.mean2d[0] * fx * iz;
    d_t.y += sg.mean2d[1] * fy * iz;
    d_t.z -= sg.mean2d[0] * fx * t.x * iz2 + sg.mean2d[1] * fy * t.y * iz2;
    out.position = r.transpose() * d_t;

    let (d_q, d_log_scale) = covariance_backward(q, &g.log_scale, &d_sigma);
    out.rotation = q_raw.normalize_backward(d_q);
    out.log_scale = d_log_scale;

    (out, d_anchor)
}
