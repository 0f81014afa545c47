use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::math::{EncodingConfig, Gaussian, Quaternion, Vec3};
use crate::raster::GaussianGrad;
use crate::testing::{self, rel_err};

fn mini_config() -> FieldConfig {
    FieldConfig {
        encoding: EncodingConfig {
            position_bands: 2,
            time_bands: 2,
        },
        depth: 3,
        width: 8,
        skip_layer: Some(2),
        deform_opacity: false,
        deform_sh_coeffs: 0,
    }
}

/// Field with every parameter random so the head is not zero.
fn randomized_field(cfg: FieldConfig, seed: u64) -> DeformationField {
    let mut rng = testing::rng(seed);
    let mut f = DeformationField::new(cfg, &mut rng).unwrap();
    for p in f.params_mut() {
        *p = rng.random_range(-0.5..0.5);
    }
    f
}

fn random_output(rng: &mut impl Rng, sh: usize, scale: f64) -> DeformOutput {
    let mut v = || rng.random_range(-scale..scale);
    DeformOutput {
        delta_position: Vec3::new(v(), v(), v()),
        delta_quat_raw: Quaternion::new(v(), v(), v(), v()),
        delta_log_scale: Vec3::new(v(), v(), v()),
        delta_opacity: v(),
        delta_sh: (0..sh).map(|_| [v(), v(), v()]).collect(),
    }
}

fn output_dot(a: &DeformOutput, b: &DeformOutput) -> f64 {
    a.delta_position.dot(&b.delta_position)
        + a.delta_quat_raw.dot(b.delta_quat_raw)
        + a.delta_log_scale.dot(&b.delta_log_scale)
        + a.delta_opacity * b.delta_opacity
        + a.delta_sh.iter().flatten().zip(b.delta_sh.iter().flatten()).map(|(x, y)| x * y).sum::<f64>()
}

fn gaussian_dot(a: &Gaussian, b: &GaussianGrad) -> f64 {
    a.position.dot(&b.position)
        + a.rotation.dot(b.rotation)
        + a.log_scale.dot(&b.log_scale)
        + a.opacity_logit * b.opacity_logit
        + a.sh.iter().flatten().zip(b.sh.iter().flatten()).map(|(x, y)| x * y).sum::<f64>()
}

#[test]
fn fresh_field_outputs_zero() {
    let f = DeformationField::new(FieldConfig::default(), &mut testing::rng(1)).unwrap();
    for (p, t) in [(Vec3::new(0.3, -1.0, 2.0), 0.0), (Vec3::new(-5.0, 0.1, 0.0), 0.7)] {
        let d = f.field_forward(&p, t).unwrap();
        assert_eq!(d, DeformOutput::zeros(0));
    }
    assert_eq!(f.config().output_dim(), 10);
    assert_eq!(f.layer_shapes()[0].in_dim, 2 * 10 * 3 + 2 * 10);
}

#[test]
fn time_outside_unit_interval_is_rejected() {
    let f = DeformationField::new(mini_config(), &mut testing::rng(1)).unwrap();
    assert!(matches!(f.field_forward(&Vec3::zeros(), 1.5), Err(crate::Error::Config(_))));
}

#[test]
fn field_weight_gradients_match_finite_differences() {
    let mut rng = testing::rng(7);
    let cfg = FieldConfig {
        deform_opacity: true,
        deform_sh_coeffs: 1,
        ..mini_config()
    };
    let f = randomized_field(cfg.clone(), 3);
    let positions: Vec<Vec3> = (0..3)
        .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let t = 0.37;
    let upstream: Vec<DeformOutput> = (0..3).map(|_| random_output(&mut rng, 1, 1.0)).collect();
    let loss = |f: &DeformationField| -> f64 {
        let (out, _) = f.forward_batch(&positions, t).unwrap();
        out.iter().zip(&upstream).map(|(o, u)| output_dot(o, u)).sum()
    };
    let (_, cache) = f.forward_batch(&positions, t).unwrap();
    let grads = f.backward_batch(&cache, &upstream, false).unwrap();
    assert!(grads.positions.is_none());
    let h = 1e-6;
    for k in 0..f.params().len() {
        let mut fp = f.clone();
        fp.params_mut()[k] += h;
        let mut fm = f.clone();
        fm.params_mut()[k] -= h;
        let num = (loss(&fp) - loss(&fm)) / (2.0 * h);
        let err = rel_err(grads.params[k], num, 1e-6);
        assert!(err < 1e-4, "param {k}: analytic {} numeric {num}", grads.params[k]);
    }
}

#[test]
fn field_position_gradients_match_finite_differences() {
    let mut rng = testing::rng(8);
    let f = randomized_field(mini_config(), 4);
    let positions = vec![Vec3::new(0.2, -0.4, 0.9), Vec3::new(-0.7, 0.1, 0.3)];
    let upstream: Vec<DeformOutput> = (0..2).map(|_| random_output(&mut rng, 0, 1.0)).collect();
    let loss = |pos: &[Vec3]| -> f64 {
        let (out, _) = f.forward_batch(pos, 0.6).unwrap();
        out.iter().zip(&upstream).map(|(o, u)| output_dot(o, u)).sum()
    };
    let (_, cache) = f.forward_batch(&positions, 0.6).unwrap();
    let grads = f.backward_batch(&cache, &upstream, true).unwrap();
    let dpos = grads.positions.unwrap();
    let h = 1e-6;
    for i in 0..2 {
        for a in 0..3 {
            let mut p = positions.clone();
            p[i][a] += h;
            let mut m = positions.clone();
            m[i][a] -= h;
            let num = (loss(&p) - loss(&m)) / (2.0 * h);
            assert!(rel_err(dpos[i][a], num, 1e-6) < 1e-4, "pos {i}.{a}: {} vs {num}", dpos[i][a]);
        }
    }
}

#[test]
fn zero_upstream_gives_zero_weight_gradients() {
    let f = randomized_field(mini_config(), 5);
    let positions = vec![Vec3::new(0.1, 0.2, 0.3); 4];
    let (_, cache) = f.forward_batch(&positions, 0.2).unwrap();
    let g = f.backward_batch(&cache, &vec![DeformOutput::zeros(0); 4], true).unwrap();
    assert!(g.params.iter().all(|&v| v == 0.0));
    assert!(g.positions.unwrap().iter().all(|p| p.iter().all(|&v| v == 0.0)));
}

#[test]
fn batched_backward_equals_sum_of_single_backwards() {
    let mut rng = testing::rng(9);
    let f = randomized_field(mini_config(), 6);
    let positions: Vec<Vec3> = (0..20)
        .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let upstream: Vec<DeformOutput> = (0..20).map(|_| random_output(&mut rng, 0, 1.0)).collect();
    let (_, cache) = f.forward_batch(&positions, 0.4).unwrap();
    let batched = f.backward_batch(&cache, &upstream, false).unwrap().params;
    let mut summed = vec![0.0; batched.len()];
    for (p, u) in positions.iter().zip(&upstream) {
        let (_, c) = f.forward_batch(std::slice::from_ref(p), 0.4).unwrap();
        let g = f.backward_batch(&c, std::slice::from_ref(u), false).unwrap().params;
        for (s, v) in summed.iter_mut().zip(g) {
            *s += v;
        }
    }
    for (a, b) in batched.iter().zip(&summed) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}

#[test]
fn backward_rejects_mismatched_gradients() {
    let f = randomized_field(mini_config(), 6);
    let (_, cache) = f.forward_batch(&[Vec3::zeros(); 2], 0.4).unwrap();
    assert!(matches!(
        f.backward_batch(&cache, &[DeformOutput::zeros(0)], false),
        Err(crate::Error::Shape(_))
    ));
}

fn sample_gaussian(seed: u64) -> Gaussian {
    let mut g = testing::random_gaussian(&mut testing::rng(seed), 1.0, (-2.0, -0.5), 1);
    g.rotation = g.rotation.normalize().unwrap();
    g
}

#[test]
fn zero_deltas_are_identity() {
    let g = sample_gaussian(1);
    let out = apply_deformation(&g, &DeformOutput::zeros(0), &DeformMode::default()).unwrap();
    assert_eq!(out, g);
}

#[test]
fn position_delta_shifts_only_position() {
    let g = sample_gaussian(2);
    let mut d = DeformOutput::zeros(0);
    d.delta_position = Vec3::new(1.0, 0.0, 0.0);
    let out = apply_deformation(&g, &d, &DeformMode::default()).unwrap();
    assert_eq!(out.position, g.position + Vec3::new(1.0, 0.0, 0.0));
    assert_eq!(out.rotation, g.rotation);
    assert_eq!(out.log_scale, g.log_scale);
    assert_eq!(out.opacity_logit, g.opacity_logit);
    assert_eq!(out.sh, g.sh);
}

#[test]
fn log_scale_delta_doubles_axis() {
    let g = Gaussian {
        position: Vec3::zeros(),
        rotation: Quaternion::identity(),
        log_scale: Vec3::zeros(),
        opacity_logit: 0.0,
        sh: vec![[0.0; 3]],
    };
    let mut d = DeformOutput::zeros(0);
    d.delta_log_scale = Vec3::new(2f64.ln(), 0.0, 0.0);
    let cov = apply_deformation(&g, &d, &DeformMode::default()).unwrap().covariance().unwrap();
    let expected = crate::math::Mat3::from_diagonal(&Vec3::new(4.0, 1.0, 1.0));
    assert!((cov - expected).abs().max() < 1e-12);
}

#[test]
fn degenerate_rotation_delta_is_an_error() {
    let g = sample_gaussian(3);
    let mut d = DeformOutput::zeros(0);
    d.delta_quat_raw = Quaternion::new(-1.0, 0.0, 0.0, 0.0);
    assert!(matches!(
        apply_deformation(&g, &d, &DeformMode::default()),
        Err(crate::Error::DegenerateQuaternion)
    ));
}

#[test]
fn conflicting_scale_flags_are_rejected() {
    assert!(matches!(
        DeformMode::from_flags(true, true, false, false, false),
        Err(crate::Error::Config(_))
    ));
    let m = DeformMode::from_flags(false, true, true, true, false).unwrap();
    assert_eq!(m.scale, ScaleMode::PostExponentiate);
    assert_eq!(m.rotation, RotationMode::Add);
    assert!(m.deform_opacity);
}

#[test]
fn fix_scale_ignores_scale_delta() {
    let g = sample_gaussian(4);
    let mut d = DeformOutput::zeros(0);
    d.delta_log_scale = Vec3::new(0.5, -0.3, 1.0);
    let mode = DeformMode::from_flags(true, false, false, false, false).unwrap();
    assert_eq!(apply_deformation(&g, &d, &mode).unwrap().log_scale, g.log_scale);
}

#[test]
fn quaternion_addition_with_zero_delta_keeps_rotation() {
    let g = sample_gaussian(5);
    let mode = DeformMode::from_flags(false, false, true, false, false).unwrap();
    let out = apply_deformation(&g, &DeformOutput::zeros(0), &mode).unwrap();
    assert_eq!(out.rotation, g.rotation);
}

#[test]
fn post_exponentiate_clamps_at_floor() {
    let g = sample_gaussian(6);
    let mut d = DeformOutput::zeros(0);
    d.delta_log_scale = Vec3::new(-10.0, 0.0, 0.0);
    let mode = DeformMode::from_flags(false, true, false, false, false).unwrap();
    let out = apply_deformation(&g, &d, &mode).unwrap();
    assert_eq!(out.log_scale[0], POST_EXP_SCALE_FLOOR.ln());
    assert!((out.log_scale[1] - g.log_scale[1]).abs() < 1e-12);
}

#[test]
fn opacity_and_sh_heads_apply_when_enabled() {
    let g = sample_gaussian(7);
    let mut d = DeformOutput::zeros(4);
    d.delta_opacity = 0.25;
    d.delta_sh[0] = [0.1, 0.2, 0.3];
    let frozen = apply_deformation(&g, &d, &DeformMode::default()).unwrap();
    assert_eq!(frozen.opacity_logit, g.opacity_logit);
    assert_eq!(frozen.sh, g.sh);
    let mode = DeformMode::from_flags(false, false, false, true, true).unwrap();
    let out = apply_deformation(&g, &d, &mode).unwrap();
    assert_eq!(out.opacity_logit, g.opacity_logit + 0.25);
    assert_eq!(out.sh[0][2], g.sh[0][2] + 0.3);
}

fn all_modes() -> Vec<DeformMode> {
    let mut modes = Vec::new();
    for (fix, post) in [(false, false), (true, false), (false, true)] {
        for add in [false, true] {
            modes.push(DeformMode::from_flags(fix, post, add, true, true).unwrap());
        }
    }
    modes
}

#[test]
fn warp_backward_matches_finite_differences() {
    let mut rng = testing::rng(11);
    for (trial, mode) in all_modes().into_iter().enumerate() {
        for s in 0..5 {
            let g = sample_gaussian(100 + 10 * trial as u64 + s);
            let d = random_output(&mut rng, g.sh.len(), 0.3);
            let mut up = GaussianGrad::zeros(g.sh.len());
            up.position = Vec3::new(rng.random(), rng.random(), rng.random());
            up.rotation = Quaternion::new(rng.random(), rng.random(), rng.random(), rng.random());
            up.log_scale = Vec3::new(rng.random(), rng.random(), rng.random());
            up.opacity_logit = rng.random();
            for c in &mut up.sh {
                *c = [rng.random(), rng.random(), rng.random()];
            }
            let loss = |g: &Gaussian, d: &DeformOutput| {
                let o = apply_deformation(g, d, &mode).unwrap();
                gaussian_dot(&o, &up)
            };
            let (dg, dd) = apply_deformation_backward(&g, &d, &mode, &up);
            let h = 1e-6;
            for k in 0..testing::param_count(&g) {
                let mut gp = g.clone();
                testing::perturb_param(&mut gp, k, h);
                let mut gm = g.clone();
                testing::perturb_param(&mut gm, k, -h);
                let num = (loss(&gp, &d) - loss(&gm, &d)) / (2.0 * h);
                let ana = testing::grad_param(&dg, k);
                assert!(rel_err(ana, num, 1e-6) < 1e-4, "{mode:?} canonical {k}: {ana} vs {num}");
            }
            let n_out = 11 + 3 * g.sh.len();
            for k in 0..n_out {
                let perturb = |d: &DeformOutput, delta: f64| {
                    let mut o = d.clone();
                    match k {
                        0..=2 => o.delta_position[k] += delta,
                        3..=6 => {
                            let mut q = o.delta_quat_raw.to_array();
                            q[k - 3] += delta;
                            o.delta_quat_raw = Quaternion::from_array(q);
                        }
                        7..=9 => o.delta_log_scale[k - 7] += delta,
                        10 => o.delta_opacity += delta,
                        _ => o.delta_sh[(k - 11) / 3][(k - 11) % 3] += delta,
                    }
                    o
                };
                let num = (loss(&g, &perturb(&d, h)) - loss(&g, &perturb(&d, -h))) / (2.0 * h);
                let unit = perturb(&DeformOutput::zeros(g.sh.len()), 1.0);
                let ana = output_dot(&dd, &unit);
                assert!(rel_err(ana, num, 1e-6) < 1e-4, "{mode:?} delta {k}: {ana} vs {num}");
            }
        }
    }
}

#[test]
fn position_delta_gradient_equals_position_gradient() {
    let g = sample_gaussian(12);
    let d = random_output(&mut testing::rng(3), 0, 0.2);
    let mut up = GaussianGrad::zeros(g.sh.len());
    up.position = Vec3::new(0.3, -1.7, 2.2);
    up.rotation = Quaternion::new(0.1, 0.2, 0.3, 0.4);
    let (dg, dd) = apply_deformation_backward(&g, &d, &DeformMode::default(), &up);
    assert_eq!(dd.delta_position, up.position);
    assert_eq!(dg.position, up.position);
}

#[test]
fn zero_upstream_warp_gradient_is_zero() {
    let g = sample_gaussian(13);
    let d = random_output(&mut testing::rng(4), g.sh.len(), 0.2);
    for mode in all_modes() {
        let (dg, dd) = apply_deformation_backward(&g, &d, &mode, &GaussianGrad::zeros(g.sh.len()));
        assert!(dg.is_zero());
        assert_eq!(dd, DeformOutput::zeros(g.sh.len()));
    }
}

#[test]
fn deform_set_with_fresh_field_is_identity() {
    let mut set = testing::random_gaussians(&mut testing::rng(20), 30, 1.5, (-3.0, -1.0), 1);
    for g in &mut set {
        g.rotation = g.rotation.normalize().unwrap();
    }
    let field = DeformationField::new(FieldConfig::default(), &mut testing::rng(2)).unwrap();
    for t in [0.0, 0.25, 0.5, 1.0] {
        assert_eq!(deform_set(&set, &field, t, &DeformMode::default()).unwrap(), set);
    }
    assert!(deform_set(&[], &field, 0.5, &DeformMode::default()).unwrap().is_empty());
}

#[test]
fn deform_set_matches_elementwise_deformation() {
    let set = testing::random_gaussians(&mut testing::rng(21), 12, 1.5, (-3.0, -1.0), 1);
    let field = randomized_field(mini_config(), 8);
    let mode = DeformMode::default();
    let batch = deform_set(&set, &field, 0.8, &mode).unwrap();
    for (g, b) in set.iter().zip(&batch) {
        let d = field.field_forward(&g.position, 0.8).unwrap();
        assert_eq!(&apply_deformation(g, &d, &mode).unwrap(), b);
    }
}

proptest! {
    #[test]
    fn deformed_rotation_is_unit(
        q in prop::array::uniform4(-1.0f64..1.0),
        dq in prop::array::uniform4(-0.5f64..0.5),
        add in any::<bool>(),
    ) {
        let q = Quaternion::from_array(q);
        prop_assume!(q.norm() > 0.1);
        let mut g = sample_gaussian(1);
        g.rotation = q.normalize().unwrap();
        let mut d = DeformOutput::zeros(0);
        d.delta_quat_raw = Quaternion::from_array(dq);
        let mode = DeformMode::from_flags(false, false, add, false, false).unwrap();
        if let Ok(out) = apply_deformation(&g, &d, &mode) {
            prop_assert!((out.rotation.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn negative_log_delta_shrinks_scale(
        s in prop::array::uniform3(-4.0f64..2.0),
        ds in prop::array::uniform3(-3.0f64..-1e-6),
    ) {
        let mut g = sample_gaussian(2);
        g.log_scale = Vec3::from(s);
        let mut d = DeformOutput::zeros(0);
        d.delta_log_scale = Vec3::from(ds);
        let out = apply_deformation(&g, &d, &DeformMode::default()).unwrap();
        for k in 0..3 {
            prop_assert!(out.scale()[k] < g.scale()[k]);
        }
    }
}
