//! Image losses and quality metrics on row-major RGB images with values in
//! `[0, 1]`.

use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const PSNR_CAP: f64 = 99.0;
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

const C1: f64 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
const C2: f64 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

fn check_pair(a: &[f64], b: &[f64], width: usize, height: usize) -> Result<()> {
    if a.len() != width * height * 3 || b.len() != a.len() {
        return Err(Error::Shape(format!(
            "images of {} and {} values for {width}x{height} RGB",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

fn channel(img: &[f64], c: usize) -> Vec<f64> {
    img.iter().skip(c).step_by(3).copied().collect()
}

/// Valid-mode separable filtering of a `w x h` plane.
fn filter_valid(p: &[f64], w: usize, h: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &p[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = g.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (k, gk) in g.iter().enumerate() {
            let src = &horiz[(y + k) * ow..(y + k + 1) * ow];
            for (o, s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += gk * s;
            }
        }
    }
    out
}

/// Adjoint of [`filter_valid`].
fn filter_transpose(m: &[f64], w: usize, h: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut vert = vec![0.0; ow * h];
    for y in 0..oh {
        for (k, gk) in g.iter().enumerate() {
            let dst = &mut vert[(y + k) * ow..(y + k + 1) * ow];
            for (d, s) in dst.iter_mut().zip(&m[y * ow..(y + 1) * ow]) {
                *d += gk * s;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = vert[y * ow + x];
            for (k, gk) in g.iter().enumerate() {
                out[y * w + x + k] += gk * v;
            }
        }
    }
    out
}

struct PlaneStats {
    mu1: Vec<f64>,
    mu2: Vec<f64>,
    s11: Vec<f64>,
    s22: Vec<f64>,
    s12: Vec<f64>,
}

fn plane_stats(x: &[f64], y: &[f64], w: usize, h: usize, g: &[f64; SSIM_WINDOW]) -> PlaneStats {
    let mu1 = filter_valid(x, w, h, g);
    let mu2 = filter_valid(y, w, h, g);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mut s11 = filter_valid(&xx, w, h, g);
    let mut s22 = filter_valid(&yy, w, h, g);
    let mut s12 = filter_valid(&xy, w, h, g);
    for i in 0..mu1.len() {
        s11[i] -= mu1[i] * mu1[i];
        s22[i] -= mu2[i] * mu2[i];
        s12[i] -= mu1[i] * mu2[i];
    }
    PlaneStats { mu1, mu2, s11, s22, s12 }
}

fn check_window(width: usize, height: usize) -> Result<()> {
    if width < SSIM_WINDOW || height < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "{width}x{height} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    Ok(())
}

/// Mean SSIM over valid windows, averaged over channels.
pub fn ssim(a: &[f64], b: &[f64], width: usize, height: usize) -> Result<f64> {
    ssim_and_cs(a, b, width, height).map(|(s, _)| s)
}

/// Mean SSIM and mean contrast-structure term, both averaged over channels.
fn ssim_and_cs(a: &[f64], b: &[f64], width: usize, height: usize) -> Result<(f64, f64)> {
    check_pair(a, b, width, height)?;
    check_window(width, height)?;
    let g = gaussian_taps();
    let (mut s_total, mut cs_total) = (0.0, 0.0);
    for c in 0..3 {
        let st = plane_stats(&channel(a, c), &channel(b, c), width, height, &g);
        let n = st.mu1.len() as f64;
        let (mut s, mut cs) = (0.0, 0.0);
        for i in 0..st.mu1.len() {
            let l = (2.0 * st.mu1[i] * st.mu2[i] + C1) / (st.mu1[i].powi(2) + st.mu2[i].powi(2) + C1);
            let v = (2.0 * st.s12[i] + C2) / (st.s11[i] + st.s22[i] + C2);
            s += l * v;
            cs += v;
        }
        s_total += s / n;
        cs_total += cs / n;
    }
    Ok((s_total / 3.0, cs_total / 3.0))
}

/// SSIM and its gradient with respect to `a`.
pub fn ssim_with_grad(a: &[f64], b: &[f64], width: usize, height: usize) -> Result<(f64, Vec<f64>)> {
    check_pair(a, b, width, height)?;
    check_window(width, height)?;
    let g = gaussian_taps();
    let mut grad = vec![0.0; a.len()];
    let mut total = 0.0;
    for c in 0..3 {
        let x = channel(a, c);
        let y = channel(b, c);
        let st = plane_stats(&x, &y, width, height, &g);
        let n = st.mu1.len();
        let scale = 1.0 / (3.0 * n as f64);
        let mut da = vec![0.0; n];
        let mut db = vec![0.0; n];
        let mut dc = vec![0.0; n];
        let mut s = 0.0;
        for i in 0..n {
            let (m1, m2) = (st.mu1[i], st.mu2[i]);
            let n1 = 2.0 * m1 * m2 + C1;
            let n2 = 2.0 * st.s12[i] + C2;
            let d1 = m1 * m1 + m2 * m2 + C1;
            let d2 = st.s11[i] + st.s22[i] + C2;
            let v = n1 * n2 / (d1 * d2);
            s += v;
            let d_mu1 = 2.0 * m2 * n2 / (d1 * d2) - v * 2.0 * m1 / d1;
            let d_s11 = -v / d2;
            let d_s12 = 2.0 * n1 / (d1 * d2);
            da[i] = scale * (d_mu1 - 2.0 * m1 * d_s11 - m2 * d_s12);
            db[i] = scale * d_s11;
            dc[i] = scale * d_s12;
        }
        total += s / n as f64;
        let ta = filter_transpose(&da, width, height, &g);
        let tb = filter_transpose(&db, width, height, &g);
        let tc = filter_transpose(&dc, width, height, &g);
        for p in 0..width * height {
            grad[3 * p + c] = ta[p] + 2.0 * x[p] * tb[p] + y[p] * tc[p];
        }
    }
    Ok((total / 3.0, grad))
}

/// Peak signal-to-noise ratio for unit dynamic range, capped at [`PSNR_CAP`].
pub fn psnr(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!("images of {} and {} values", a.len(), b.len())));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

fn downsample(img: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w / 2, h / 2);
    let mut out = vec![0.0; ow * oh * 3];
    for y in 0..oh {
        for x in 0..ow {
            for c in 0..3 {
                let at = |yy: usize, xx: usize| img[3 * (yy * w + xx) + c];
                out[3 * (y * ow + x) + c] =
                    0.25 * (at(2 * y, 2 * x) + at(2 * y, 2 * x + 1) + at(2 * y + 1, 2 * x) + at(2 * y + 1, 2 * x + 1));
            }
        }
    }
    (out, ow, oh)
}

/// Number of dyadic scales at which the SSIM window still fits.
pub fn ms_ssim_scales(width: usize, height: usize) -> usize {
    let mut n = 0;
    let m = width.min(height);
    while n < MS_SSIM_WEIGHTS.len() && (m >> n) >= SSIM_WINDOW {
        n += 1;
    }
    n
}

/// Multi-scale SSIM with 2x2 average-pool downsampling. Images too small for
/// all five scales use the leading weights renormalized to sum to one.
pub fn ms_ssim(a: &[f64], b: &[f64], width: usize, height: usize) -> Result<f64> {
    check_pair(a, b, width, height)?;
    let scales = ms_ssim_scales(width, height);
    if scales == 0 {
        check_window(width, height)?;
    }
    if scales < MS_SSIM_WEIGHTS.len() {
        log::debug!("ms-ssim on {width}x{height} uses {scales} scales");
    }
    let wsum: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let (mut x, mut y, mut w, mut h) = (a.to_vec(), b.to_vec(), width, height);
    let mut value = 1.0;
    for s in 0..scales {
        let weight = MS_SSIM_WEIGHTS[s] / wsum;
        let (ss, cs) = ssim_and_cs(&x, &y, w, h)?;
        let term = if s + 1 == scales { ss } else { cs };
        value *= term.max(0.0).powf(weight);
        if s + 1 < scales {
            let (nx, nw, nh) = downsample(&x, w, h);
            let (ny, _, _) = downsample(&y, w, h);
            (x, y, w, h) = (nx, ny, nw, nh);
        }
    }
    Ok(value)
}

/// Training objective at iteration `iter`: the L2 data term up to
/// `loss_switch_iter` and L1 after it (L1 throughout with `no_lr_transit`),
/// blended with `(1 - SSIM)`. Returns the loss and its gradient w.r.t. `img`.
pub fn compute_loss(
    img: &[f64],
    gt: &[f64],
    width: usize,
    height: usize,
    iter: usize,
    config: &super::TrainConfig,
) -> Result<(f64, Vec<f64>)> {
    image_loss(img, gt, width, height, config.lambda_ssim, config.uses_l1(iter))
}

/// `(1 - lambda) * data + lambda * (1 - SSIM)` with an L1 or L2 data term.
pub fn image_loss(
    img: &[f64],
    gt: &[f64],
    width: usize,
    height: usize,
    lambda_ssim: f64,
    use_l1: bool,
) -> Result<(f64, Vec<f64>)> {
    check_pair(img, gt, width, height)?;
    let n = img.len() as f64;
    let mut data = 0.0;
    let mut grad: Vec<f64> = img
        .iter()
        .zip(gt)
        .map(|(x, y)| {
            let d = x - y;
            if use_l1 {
                data += d.abs();
                (1.0 - lambda_ssim) * d.signum() * f64::from(d != 0.0) / n
            } else {
                data += d * d;
                (1.0 - lambda_ssim) * 2.0 * d / n
            }
        })
        .collect();
    data /= n;
    let mut loss = (1.0 - lambda_ssim) * data;
    if lambda_ssim > 0.0 {
        let (s, ds) = ssim_with_grad(img, gt, width, height)?;
        loss += lambda_ssim * (1.0 - s);
        for (g, d) in grad.iter_mut().zip(ds) {
            *g -= lambda_ssim * d;
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> Vec<f64> {
        (0..w * h * 3).map(|_| rng.random_range(0.0..1.0)).collect()
    }

    /// Direct 11x11 windowed sums per output pixel.
    fn naive_ssim(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
        let g = gaussian_taps();
        let mut total = 0.0;
        for c in 0..3 {
            let mut acc = 0.0;
            let mut n = 0usize;
            for y0 in 0..=h - SSIM_WINDOW {
                for x0 in 0..=w - SSIM_WINDOW {
                    let (mut m1, mut m2, mut e11, mut e22, mut e12) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for i in 0..SSIM_WINDOW {
                        for j in 0..SSIM_WINDOW {
                            let wt = g[i] * g[j];
                            let p = 3 * ((y0 + i) * w + x0 + j) + c;
                            m1 += wt * a[p];
                            m2 += wt * b[p];
                            e11 += wt * a[p] * a[p];
                            e22 += wt * b[p] * b[p];
                            e12 += wt * a[p] * b[p];
                        }
                    }
                    let (v1, v2, v12) = (e11 - m1 * m1, e22 - m2 * m2, e12 - m1 * m2);
                    let c1 = 0.01f64.powi(2);
                    let c2 = 0.03f64.powi(2);
                    acc += ((2.0 * m1 * m2 + c1) * (2.0 * v12 + c2)) / ((m1 * m1 + m2 * m2 + c1) * (v1 + v2 + c2));
                    n += 1;
                }
            }
            total += acc / n as f64;
        }
        total / 3.0
    }

    #[test]
    fn taps_follow_gaussian_profile() {
        let g = gaussian_taps();
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((g[5] / g[6] - (1.0 / (2.0 * 2.25f64)).exp()).abs() < 1e-12);
    }

    #[test]
    fn ssim_matches_naive_convolution() {
        let mut rng = testing::rng(1);
        for (w, h) in [(11, 11), (16, 13), (24, 20)] {
            let a = random_image(&mut rng, w, h);
            let mut b = a.clone();
            for v in &mut b {
                *v = (*v + rng.random_range(-0.2..0.2)).clamp(0.0, 1.0);
            }
            let fast = ssim(&a, &b, w, h).unwrap();
            let slow = naive_ssim(&a, &b, w, h);
            assert!((fast - slow).abs() <= 1e-10, "{w}x{h}: {fast} vs {slow}");
        }
    }

    #[test]
    fn ssim_identical_is_one_and_small_images_fail() {
        let a = random_image(&mut testing::rng(2), 12, 12);
        assert!((ssim(&a, &a, 12, 12).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(ssim(&a[..300], &a[..300], 10, 10), Err(Error::Shape(_))));
    }

    #[test]
    fn ssim_of_inverted_binary_image_is_bounded() {
        let mut rng = testing::rng(3);
        let a: Vec<f64> = (0..16 * 16 * 3).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect();
        let b: Vec<f64> = a.iter().map(|v| 1.0 - v).collect();
        let s = ssim(&a, &b, 16, 16).unwrap();
        assert!(s < 0.0 && s >= -1.0);
    }

    #[test]
    fn psnr_closed_forms() {
        let a = vec![0.5; 30];
        let b = vec![0.6; 30];
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &a).unwrap(), 99.0);
        let c = vec![0.0; 30];
        let d = vec![1.0; 30];
        assert_eq!(psnr(&c, &d).unwrap(), 0.0);
    }

    #[test]
    fn ms_ssim_identity_and_scale_count() {
        let a = random_image(&mut testing::rng(4), 64, 64);
        assert!((ms_ssim(&a, &a, 64, 64).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ms_ssim_scales(64, 64), 3);
        assert_eq!(ms_ssim_scales(256, 200), 5);
        assert_eq!(ms_ssim_scales(11, 11), 1);
        let mut b = a.clone();
        b[100] = 1.0 - b[100];
        let v = ms_ssim(&a, &b, 64, 64).unwrap();
        assert!(v < 1.0 && v > 0.9);
    }

    #[test]
    fn ms_ssim_at_one_scale_is_ssim() {
        let mut rng = testing::rng(5);
        let a = random_image(&mut rng, 16, 16);
        let b: Vec<f64> = a.iter().map(|v| v * 0.8 + 0.1).collect();
        let s = ssim(&a, &b, 16, 16).unwrap();
        assert!((ms_ssim(&a, &b, 16, 16).unwrap() - s.max(0.0)).abs() < 1e-12);
    }

    #[test]
    fn loss_of_identical_images_is_zero() {
        let a = random_image(&mut testing::rng(6), 16, 16);
        for l1 in [false, true] {
            let (loss, grad) = image_loss(&a, &a, 16, 16, 0.2, l1).unwrap();
            assert!(loss.abs() < 1e-12);
            assert!(grad.iter().all(|g| g.abs() < 1e-12));
        }
    }

    #[test]
    fn pure_l1_is_mean_absolute_error() {
        let mut rng = testing::rng(7);
        let a = random_image(&mut rng, 12, 12);
        let b = random_image(&mut rng, 12, 12);
        let (loss, _) = image_loss(&a, &b, 12, 12, 0.0, true).unwrap();
        let mae = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
        assert_eq!(loss, mae);
        assert!(matches!(image_loss(&a, &b[3..], 12, 12, 0.2, true), Err(Error::Shape(_))));
    }

    #[test]
    fn data_term_switches_after_iteration_20000() {
        let mut rng = testing::rng(11);
        let a = random_image(&mut rng, 12, 12);
        let b = random_image(&mut rng, 12, 12);
        let cfg = crate::train::TrainConfig::default();
        let l2 = image_loss(&a, &b, 12, 12, 0.2, false).unwrap().0;
        let l1 = image_loss(&a, &b, 12, 12, 0.2, true).unwrap().0;
        assert_ne!(l1, l2);
        assert_eq!(compute_loss(&a, &b, 12, 12, 1, &cfg).unwrap().0, l2);
        assert_eq!(compute_loss(&a, &b, 12, 12, 20_000, &cfg).unwrap().0, l2);
        assert_eq!(compute_loss(&a, &b, 12, 12, 20_001, &cfg).unwrap().0, l1);
        let forced = crate::train::TrainConfig {
            no_lr_transit: true,
            ..cfg
        };
        assert_eq!(compute_loss(&a, &b, 12, 12, 1, &forced).unwrap().0, l1);
    }

    fn check_loss_gradient(w: usize, h: usize, lambda: f64, seed: u64) {
        let mut rng = testing::rng(seed);
        let a = random_image(&mut rng, w, h);
        let b = random_image(&mut rng, w, h);
        for l1 in [false, true] {
            let loss = |x: &[f64]| image_loss(x, &b, w, h, lambda, l1).unwrap().0;
            let (_, grad) = image_loss(&a, &b, w, h, lambda, l1).unwrap();
            let step = 1e-6;
            for k in 0..a.len() {
                let mut p = a.clone();
                p[k] += step;
                let mut m = a.clone();
                m[k] -= step;
                let num = (loss(&p) - loss(&m)) / (2.0 * step);
                assert!(testing::rel_err(grad[k], num, 1e-6) < 1e-4, "{w}x{h} l1={l1} {k}: {} vs {num}", grad[k]);
            }
        }
    }

    #[test]
    fn data_term_gradient_matches_finite_differences_8x8() {
        check_loss_gradient(8, 8, 0.0, 8);
    }

    #[test]
    fn full_loss_gradient_matches_finite_differences() {
        check_loss_gradient(11, 11, 0.2, 9);
        check_loss_gradient(14, 12, 0.2, 10);
    }

    proptest! {
        #[test]
        fn metrics_are_symmetric(seed in 0u64..1000) {
            let mut rng = testing::rng(seed);
            let a = random_image(&mut rng, 12, 12);
            let b = random_image(&mut rng, 12, 12);
            prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
            prop_assert!((ssim(&a, &b, 12, 12).unwrap() - ssim(&b, &a, 12, 12).unwrap()).abs() <= 1e-12);
        }
    }
}
