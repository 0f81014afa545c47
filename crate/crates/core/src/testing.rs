//! Seeded random scenes and cameras shared by tests, benches and examples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::{sh_coeff_count, Gaussian, Quaternion, Vec3};
use crate::raster::Camera;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A Gaussian inside the cube `[-extent, extent]^3` with a log-scale in
/// `log_scale_range` and opacity in `[0.2, 0.9]`.
pub fn random_gaussian(
    rng: &mut impl Rng,
    extent: f64,
    log_scale_range: (f64, f64),
    sh_degree: usize,
) -> Gaussian {
    let mut v = || rng.random_range(-1.0..1.0);
    let position = Vec3::new(v(), v(), v()) * extent;
    let rotation = Quaternion::new(v(), v(), v(), v());
    let sh = (0..sh_coeff_count(sh_degree))
        .map(|k| {
            let amp = if k == 0 { 1.2 } else { 0.3 };
            [rng.random_range(-amp..amp), rng.random_range(-amp..amp), rng.random_range(-amp..amp)]
        })
        .collect();
    Gaussian {
        position,
        rotation,
        log_scale: Vec3::new(
            rng.random_range(log_scale_range.0..log_scale_range.1),
            rng.random_range(log_scale_range.0..log_scale_range.1),
            rng.random_range(log_scale_range.0..log_scale_range.1),
        ),
        opacity_logit: crate::math::logit(rng.random_range(0.2..0.9)),
        sh,
    }
}

pub fn random_gaussians(
    rng: &mut impl Rng,
    n: usize,
    extent: f64,
    log_scale_range: (f64, f64),
    sh_degree: usize,
) -> Vec<Gaussian> {
    (0..n)
        .map(|_| random_gaussian(rng, extent, log_scale_range, sh_degree))
        .collect()
}

/// Camera on a sphere of radius in `[3, 4]` looking at the origin.
pub fn random_camera(rng: &mut impl Rng, width: usize, height: usize) -> Camera {
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let elev: f64 = rng.random_range(-0.8..0.8);
    let r: f64 = rng.random_range(3.0..4.0);
    let eye = Vec3::new(r * elev.cos() * theta.sin(), r * elev.sin(), r * elev.cos() * theta.cos());
    let mut cam = Camera::look_at(eye, Vec3::zeros(), Vec3::y(), 0.9, width, height);
    cam.cx += rng.random_range(-2.0..2.0);
    cam.cy += rng.random_range(-2.0..2.0);
    cam
}

/// Relative error with the denominator floored at `floor`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Outcome of a structure-aware finite difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FiniteDiff {
    Central(f64),
    /// Compositing structure changed on one side; one-sided difference taken
    /// on the side that matches the unperturbed structure.
    OneSided(f64),
    /// Structure differs on both sides: no smooth piece to compare against.
    Discontinuous,
}

impl FiniteDiff {
    pub fn value(self) -> Option<f64> {
        match self {
            FiniteDiff::Central(v) | FiniteDiff::OneSided(v) => Some(v),
            FiniteDiff::Discontinuous => None,
        }
    }
}

/// Finite difference of `f` at step `h`, where `f(delta)` returns the loss at
/// the perturbed point and a signature of its discrete structure.
pub fn structured_fd(h: f64, mut f: impl FnMut(f64) -> (f64, u64)) -> FiniteDiff {
    let (f0, s0) = f(0.0);
    let (fp, sp) = f(h);
    let (fm, sm) = f(-h);
    match (sp == s0, sm == s0) {
        (true, true) => FiniteDiff::Central((fp - fm) / (2.0 * h)),
        (true, false) => FiniteDiff::OneSided((fp - f0) / h),
        (false, true) => FiniteDiff::OneSided((f0 - fm) / h),
        (false, false) => FiniteDiff::Discontinuous,
    }
}

/// Number of scalar parameters of `g` in the flat order used by
/// [`perturb_param`]: position, rotation, log-scale, opacity logit, SH.
pub fn param_count(g: &Gaussian) -> usize {
    11 + 3 * g.sh.len()
}

pub fn perturb_param(g: &mut Gaussian, k: usize, delta: f64) {
    match k {
        0..=2 => g.position[k] += delta,
        3..=6 => {
            let mut q = g.rotation.to_array();
            q[k - 3] += delta;
            g.rotation = Quaternion::from_array(q);
        }
        7..=9 => g.log_scale[k - 7] += delta,
        10 => g.opacity_logit += delta,
        _ => {
            let j = k - 11;
            g.sh[j / 3][j % 3] += delta;
        }
    }
}

pub fn grad_param(gr: &crate::raster::GaussianGrad, k: usize) -> f64 {
    match k {
        0..=2 => gr.position[k],
        3..=6 => gr.rotation.to_array()[k - 3],
        7..=9 => gr.log_scale[k - 7],
        10 => gr.opacity_logit,
        _ => {
            let j = k - 11;
            gr.sh[j / 3][j % 3]
        }
    }
}

/// Summary of a batch of finite-difference comparisons.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    /// Parameters whose compositing structure changed on both sides of the
    /// step, so no smooth difference exists.
    pub discontinuous: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

impl GradCheck {
    pub fn record(&mut self, label: impl FnOnce() -> String, analytic: f64, fd: FiniteDiff) {
        match fd.value() {
            Some(v) => {
                self.checked += 1;
                let e = rel_err(analytic, v, 1e-6);
                if e > self.max_rel_err {
                    self.max_rel_err = e;
                    self.worst = format!("{}: analytic {analytic:e}, numeric {v:e}", label());
                }
            }
            None => self.discontinuous += 1,
        }
    }

    pub fn merge(&mut self, other: GradCheck) {
        self.checked += other.checked;
        self.discontinuous += other.discontinuous;
        if other.max_rel_err > self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
        }
    }
}

/// Compares every rasterizer gradient of a random scene of `n` Gaussians
/// against structure-aware central differences with step `h`, using the
/// loss `sum(weights * image)` with random weights.
pub fn raster_gradient_check(seed: u64, n: usize, size: usize, h: f64) -> GradCheck {
    use crate::raster::{rasterize_backward, render, RenderSettings};
    let mut rng = rng(seed);
    let gs = random_gaussians(&mut rng, n, 0.8, (-2.2, -1.0), 1);
    let cam = random_camera(&mut rng, size, size);
    let settings = RenderSettings {
        background: [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
        ..Default::default()
    };
    let weights: Vec<f64> = (0..size * size * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let anchors: Vec<Vec3> = gs.iter().map(|g| g.position).collect();
    let out = render(&gs, &cam, &settings).expect("valid scene");
    let grads = rasterize_backward(&out, &gs, &anchors, &weights).expect("aux retained");
    let mut report = GradCheck::default();
    for i in 0..gs.len() {
        for k in 0..param_count(&gs[i]) {
            let fd = structured_fd(h, |d| {
                let mut p = gs.clone();
                perturb_param(&mut p[i], k, d);
                let o = render(&p, &cam, &settings).expect("valid scene");
                let loss = o.image.iter().zip(&weights).map(|(a, b)| a * b).sum();
                (loss, o.compositing_signature().expect("aux retained"))
            });
            let mut analytic = grad_param(&grads.gaussians[i], k);
            if k < 3 {
                analytic += grads.sh_anchors[i][k];
            }
            report.record(|| format!("seed {seed} gaussian {i} param {k}"), analytic, fd);
        }
    }
    report
}

/// End-to-end check of image loss to field weights and canonical
/// attributes, on a scene of 5 deformable Gaussians at 16x16 and time 0.3.
/// The field output layer is randomized so that every weight matters.
/// `field_params` limits the number of field weights checked (evenly
/// strided); `None` checks all of them.
pub fn pipeline_gradient_check(seed: u64, field: crate::deform::FieldConfig, field_params: Option<usize>, h: f64) -> GradCheck {
    use crate::deform::{DeformMode, DeformationField};
    use crate::train::{metrics::image_loss, Scene};
    const SIZE: usize = 16;
    let mut rng = rng(seed);
    let deformable = random_gaussians(&mut rng, 5, 0.6, (-2.0, -1.2), 1);
    let cam = random_camera(&mut rng, SIZE, SIZE);
    let mut f = DeformationField::new(field, &mut rng).expect("valid field config");
    let shapes = f.layer_shapes();
    let head = shapes.last().map(|s| s.in_dim * s.out_dim + s.out_dim).unwrap_or(0);
    let n_params = f.params().len();
    for p in &mut f.params_mut()[n_params - head..] {
        *p = rng.random_range(-0.05..0.05);
    }
    let scene = Scene {
        deformable,
        static_set: Vec::new(),
        field: f,
        mode: DeformMode::default(),
        scene_extent: 1.0,
        sh_degree: 1,
        propagate_field_position: true,
    };
    let settings = scene.settings([0.1, 0.2, 0.3], 16);
    let target: Vec<f64> = (0..SIZE * SIZE * 3).map(|_| rng.random_range(0.0..1.0)).collect();
    let t = 0.3;
    let eval = |s: &Scene| {
        let pass = s.forward(&cam, t, &settings, false).expect("valid scene");
        let (loss, _) = image_loss(&pass.output.image, &target, SIZE, SIZE, 0.2, false).expect("sizes match");
        (loss, pass.output.compositing_signature().expect("aux retained"))
    };
    let pass = scene.forward(&cam, t, &settings, false).expect("valid scene");
    let (_, d_image) = image_loss(&pass.output.image, &target, SIZE, SIZE, 0.2, false).expect("sizes match");
    let grads = scene.backward(&pass, &d_image).expect("aux retained");

    let mut report = GradCheck::default();
    let stride = field_params.map_or(1, |m| (n_params / m.max(1)).max(1));
    for k in (0..n_params).step_by(stride) {
        let fd = structured_fd(h, |d| {
            let mut s = scene.clone();
            s.field.params_mut()[k] += d;
            eval(&s)
        });
        report.record(|| format!("seed {seed} field weight {k}"), grads.field[k], fd);
    }
    for i in 0..scene.deformable.len() {
        for k in 0..param_count(&scene.deformable[i]) {
            let fd = structured_fd(h, |d| {
                let mut s = scene.clone();
                perturb_param(&mut s.deformable[i], k, d);
                eval(&s)
            });
            report.record(|| format!("seed {seed} canonical {i} param {k}"), grad_param(&grads.deformable[i], k), fd);
        }
    }
    report
}
