//! Real spherical harmonics up to degree 3, with the +0.5 DC offset used by
//! splatting renderers.

use super::Vec3;
use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 3;

pub const C0: f64 = 0.282_094_791_773_878_14;
pub const C1: f64 = 0.488_602_511_902_919_9;
pub const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const fn sh_coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

fn check_degree(degree: usize) -> Result<()> {
    if degree > MAX_DEGREE {
        return Err(Error::Config(format!(
            "spherical-harmonics degree {degree} outside 0..={MAX_DEGREE}"
        )));
    }
    Ok(())
}

/// Basis values for `degree`, written into `out[..sh_coeff_count(degree)]`.
pub fn basis(d: &Vec3, degree: usize, out: &mut [f64; 16]) {
    let (x, y, z) = (d.x, d.y, d.z);
    out[0] = C0;
    if degree < 1 {
        return;
    }
    out[1] = -C1 * y;
    out[2] = C1 * z;
    out[3] = -C1 * x;
    if degree < 2 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    out[4] = C2[0] * x * y;
    out[5] = C2[1] * y * z;
    out[6] = C2[2] * (2.0 * zz - xx - yy);
    out[7] = C2[3] * x * z;
    out[8] = C2[4] * (xx - yy);
    if degree < 3 {
        return;
    }
    out[9] = C3[0] * y * (3.0 * xx - yy);
    out[10] = C3[1] * x * y * z;
    out[11] = C3[2] * y * (4.0 * zz - xx - yy);
    out[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = C3[4] * x * (4.0 * zz - xx - yy);
    out[14] = C3[5] * z * (xx - yy);
    out[15] = C3[6] * x * (xx - 3.0 * yy);
}

/// Partial derivatives of each basis function w.r.t. the (unnormalized)
/// direction components.
pub fn basis_grad(d: &Vec3, degree: usize, out: &mut [[f64; 3]; 16]) {
    let (x, y, z) = (d.x, d.y, d.z);
    out[0] = [0.0; 3];
    if degree < 1 {
        return;
    }
    out[1] = [0.0, -C1, 0.0];
    out[2] = [0.0, 0.0, C1];
    out[3] = [-C1, 0.0, 0.0];
    if degree < 2 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    out[4] = [C2[0] * y, C2[0] * x, 0.0];
    out[5] = [0.0, C2[1] * z, C2[1] * y];
    out[6] = [-2.0 * C2[2] * x, -2.0 * C2[2] * y, 4.0 * C2[2] * z];
    out[7] = [C2[3] * z, 0.0, C2[3] * x];
    out[8] = [2.0 * C2[4] * x, -2.0 * C2[4] * y, 0.0];
    if degree < 3 {
        return;
    }
    out[9] = [C3[0] * 6.0 * x * y, C3[0] * (3.0 * xx - 3.0 * yy), 0.0];
    out[10] = [C3[1] * y * z, C3[1] * x * z, C3[1] * x * y];
    out[11] = [
        -2.0 * C3[2] * x * y,
        C3[2] * (4.0 * zz - xx - 3.0 * yy),
        8.0 * C3[2] * y * z,
    ];
    out[12] = [
        -6.0 * C3[3] * x * z,
        -6.0 * C3[3] * y * z,
        C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy),
    ];
    out[13] = [
        C3[4] * (4.0 * zz - 3.0 * xx - yy),
        -2.0 * C3[4] * x * y,
        8.0 * C3[4] * x * z,
    ];
    out[14] = [2.0 * C3[5] * x * z, -2.0 * C3[5] * y * z, C3[5] * (xx - yy)];
    out[15] = [C3[6] * (3.0 * xx - 3.0 * yy), -6.0 * C3[6] * x * y, 0.0];
}

/// Unclamped color `sum_k basis_k(dir) * coeff_k + 0.5`.
pub fn sh_raw(coeffs: &[[f64; 3]], dir: &Vec3, degree: usize) -> [f64; 3] {
    let mut b = [0.0; 16];
    basis(dir, degree, &mut b);
    let mut c = [0.5; 3];
    for (bk, ck) in b.iter().zip(coeffs).take(sh_coeff_count(degree)) {
        for ch in 0..3 {
            c[ch] += bk * ck[ch];
        }
    }
    c
}

/// View-dependent RGB color, clamped to `[0, 1]`.
pub fn sh_evaluate(coeffs: &[[f64; 3]], view_dir: &Vec3, degree: usize) -> Result<[f64; 3]> {
    check_degree(degree)?;
    let n = sh_coeff_count(degree);
    if coeffs.len() < n {
        return Err(Error::Shape(format!(
            "degree {degree} needs {n} SH coefficients, got {}",
            coeffs.len()
        )));
    }
    Ok(sh_raw(coeffs, view_dir, degree).map(|v| v.clamp(0.0, 1.0)))
}

/// Converts an RGB color in `[0, 1]` to the DC coefficient that reproduces it.
pub fn rgb_to_dc(rgb: [f64; 3]) -> [f64; 3] {
    rgb.map(|c| (c - 0.5) / C0)
}

pub fn validate_degree(degree: usize) -> Result<()> {
    check_degree(degree)
}
