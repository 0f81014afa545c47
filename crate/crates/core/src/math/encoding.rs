use serde::{Deserialize, Serialize};

/// Number of frequency bands used to encode positions and times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub position_bands: usize,
    pub time_bands: usize,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            position_bands: 10,
            time_bands: 10,
        }
    }
}

impl EncodingConfig {
    pub fn position_dim(&self) -> usize {
        2 * self.position_bands * 3
    }

    pub fn time_dim(&self) -> usize {
        2 * self.time_bands
    }

    pub fn input_dim(&self) -> usize {
        self.position_dim() + self.time_dim()
    }
}

/// Band-major sinusoidal encoding:
/// `(sin(2^0 v), cos(2^0 v), sin(2^1 v), cos(2^1 v), ...)`, each block `v.len()` wide.
pub fn positional_encoding(v: &[f64], bands: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * bands * v.len());
    encode_into(v, bands, &mut out);
    out
}

pub(crate) fn encode_into(v: &[f64], bands: usize, out: &mut Vec<f64>) {
    let mut freq = 1.0;
    for _ in 0..bands {
        out.extend(v.iter().map(|x| (freq * x).sin()));
        out.extend(v.iter().map(|x| (freq * x).cos()));
        freq *= 2.0;
    }
}

/// Gradient of the encoding w.r.t. `v`, given the upstream gradient `grad`.
pub fn encoding_backward(v: &[f64], bands: usize, grad: &[f64]) -> Vec<f64> {
    let d = v.len();
    assert_eq!(grad.len(), 2 * bands * d);
    let mut out = vec![0.0; d];
    let mut freq = 1.0;
    for k in 0..bands {
        let base = 2 * k * d;
        for i in 0..d {
            let (s, c) = (freq * v[i]).sin_cos();
            out[i] += freq * (c * grad[base + i] - s * grad[base + d + i]);
        }
        freq *= 2.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(positional_encoding(&[0.0], 2), vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(positional_encoding(&[0.1, 0.2, 0.3], 10).len(), 60);
        assert!(positional_encoding(&[0.5, 0.5], 0).is_empty());
        let e = positional_encoding(&[1.0], 3);
        let oracle = [1.0f64.sin(), 1.0f64.cos(), 2.0f64.sin(), 2.0f64.cos(), 4.0f64.sin(), 4.0f64.cos()];
        for (a, b) in e.iter().zip(oracle) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_matches_fd() {
        let v = [0.3, -1.2, 2.0];
        let g: Vec<f64> = (0..24).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let d = encoding_backward(&v, 4, &g);
        let f = |v: &[f64]| positional_encoding(v, 4).iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..3 {
            let (mut p, mut m) = (v, v);
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let fd = (f(&p) - f(&m)) / 2e-6;
            assert!((fd - d[i]).abs() < 1e-6);
        }
    }

    proptest::proptest! {
        #[test]
        fn bounded_and_deterministic(x in -100.0f64..100.0, y in -100.0f64..100.0, bands in 0usize..12) {
            let a = positional_encoding(&[x, y], bands);
            let b = positional_encoding(&[x, y], bands);
            proptest::prop_assert_eq!(&a, &b);
            proptest::prop_assert_eq!(a.len(), 4 * bands);
            proptest::prop_assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
