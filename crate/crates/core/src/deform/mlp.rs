//! Fully connected ReLU network with an optional input skip connection,
//! evaluated in row batches through `matrixmultiply`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Rows per work unit. Fixed so that gradient reduction order does not depend
/// on the number of threads.
const CHUNK_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub in_dim: usize,
    pub out_dim: usize,
    pub relu: bool,
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    shape: LayerShape,
    w_off: usize,
    b_off: usize,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    input_dim: usize,
    skip_layer: Option<usize>,
    layers: Vec<Layer>,
    params: Vec<f64>,
}

/// Activations of one row chunk.
#[derive(Debug, Clone)]
struct ChunkCache {
    rows: usize,
    input: Vec<f64>,
    /// Post-activation output of every hidden layer.
    hidden: Vec<Vec<f64>>,
    /// Materialized input of the skip layer.
    skip_input: Option<Vec<f64>>,
}

/// Forward activations retained for [`Mlp::backward`].
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    rows: usize,
    chunks: Vec<ChunkCache>,
}

impl MlpCache {
    pub fn rows(&self) -> usize {
        self.rows
    }
}

fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

impl Mlp {
    /// `depth` hidden ReLU layers of `width` units and a linear output layer.
    /// When `skip_layer` is `Some(l)`, hidden layer `l` receives the previous
    /// activations concatenated with the network input.
    pub fn new(input_dim: usize, depth: usize, width: usize, output_dim: usize, skip_layer: Option<usize>) -> Result<Self> {
        if depth == 0 || width == 0 {
            return Err(Error::Config("MLP depth and width must be positive".into()));
        }
        if let Some(s) = skip_layer {
            if s == 0 || s >= depth {
                return Err(Error::Config(format!("skip layer {s} must be in 1..{depth}")));
            }
        }
        let mut shapes = Vec::with_capacity(depth + 1);
        for l in 0..depth {
            let in_dim = match l {
                0 => input_dim,
                _ if Some(l) == skip_layer => width + input_dim,
                _ => width,
            };
            shapes.push(LayerShape { in_dim, out_dim: width, relu: true });
        }
        shapes.push(LayerShape { in_dim: width, out_dim: output_dim, relu: false });
        let mut off = 0;
        let layers = shapes
            .into_iter()
            .map(|shape| {
                let w_off = off;
                let b_off = w_off + shape.in_dim * shape.out_dim;
                off = b_off + shape.out_dim;
                Layer { shape, w_off, b_off }
            })
            .collect();
        Ok(Self {
            input_dim,
            skip_layer,
            layers,
            params: vec![0.0; off],
        })
    }

    /// Uniform fan-in initialization of hidden layers; output layer zero.
    pub fn init(&mut self, rng: &mut impl Rng) {
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            let end = layer.b_off + layer.shape.out_dim;
            let slice = &mut self.params[layer.w_off..end];
            if i + 1 == n {
                slice.fill(0.0);
            } else {
                let bound = 1.0 / (layer.shape.in_dim as f64).sqrt();
                slice.iter_mut().for_each(|p| *p = rng.random_range(-bound..bound));
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().shape.out_dim
    }

    pub fn skip_layer(&self) -> Option<usize> {
        self.skip_layer
    }

    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        self.layers.iter().map(|l| l.shape).collect()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "MLP expects {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    fn layer_forward(&self, layer: &Layer, input: &[f64], rows: usize) -> Vec<f64> {
        let LayerShape { in_dim, out_dim, relu } = layer.shape;
        let w = &self.params[layer.w_off..layer.b_off];
        let b = &self.params[layer.b_off..layer.b_off + out_dim];
        let mut z = vec![0.0; rows * out_dim];
        for row in z.chunks_mut(out_dim) {
            row.copy_from_slice(b);
        }
        gemm(rows, in_dim, out_dim, input, (in_dim, 1), w, (1, in_dim), 1.0, &mut z, (out_dim, 1));
        if relu {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        z
    }

    fn chunk_forward(&self, input: &[f64], rows: usize) -> (Vec<f64>, ChunkCache) {
        let depth = self.layers.len() - 1;
        let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(depth);
        let mut skip_input = None;
        for l in 0..depth {
            let layer = &self.layers[l];
            let h = if l == 0 {
                self.layer_forward(layer, input, rows)
            } else if Some(l) == self.skip_layer {
                let prev = &hidden[l - 1];
                let width = prev.len() / rows;
                let mut cat = Vec::with_capacity(rows * (width + self.input_dim));
                for r in 0..rows {
                    cat.extend_from_slice(&prev[r * width..(r + 1) * width]);
                    cat.extend_from_slice(&input[r * self.input_dim..(r + 1) * self.input_dim]);
                }
                let h = self.layer_forward(layer, &cat, rows);
                skip_input = Some(cat);
                h
            } else {
                self.layer_forward(layer, &hidden[l - 1], rows)
            };
            hidden.push(h);
        }
        let out = self.layer_forward(&self.layers[depth], &hidden[depth - 1], rows);
        (
            out,
            ChunkCache {
                rows,
                input: input.to_vec(),
                hidden,
                skip_input,
            },
        )
    }

    /// Evaluates `rows` inputs laid out row-major. Returns the row-major
    /// outputs and the activations needed by [`Mlp::backward`].
    pub fn forward(&self, input: &[f64], rows: usize) -> (Vec<f64>, MlpCache) {
        assert_eq!(input.len(), rows * self.input_dim);
        let n_chunks = rows.div_ceil(CHUNK_ROWS);
        let results = par::map_range(n_chunks, |c| {
            let r0 = c * CHUNK_ROWS;
            let r1 = (r0 + CHUNK_ROWS).min(rows);
            self.chunk_forward(&input[r0 * self.input_dim..r1 * self.input_dim], r1 - r0)
        });
        let mut out = Vec::with_capacity(rows * self.output_dim());
        let mut chunks = Vec::with_capacity(n_chunks);
        for (o, cache) in results {
            out.extend_from_slice(&o);
            chunks.push(cache);
        }
        (out, MlpCache { rows, chunks })
    }

    fn chunk_backward(&self, cache: &ChunkCache, d_out: &[f64], want_input: bool) -> (Vec<f64>, Option<Vec<f64>>) {
        let rows = cache.rows;
        let depth = self.layers.len() - 1;
        let mut grads = vec![0.0; self.params.len()];
        let mut d_input = want_input.then(|| vec![0.0; rows * self.input_dim]);
        let mut dz = d_out.to_vec();
        for l in (0..=depth).rev() {
            let layer = &self.layers[l];
            let LayerShape { in_dim, out_dim, relu } = layer.shape;
            if relu {
                let h = &cache.hidden[l];
                dz.iter_mut().zip(h).for_each(|(d, &h)| {
                    if h <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let layer_input: &[f64] = if l == 0 {
                &cache.input
            } else if Some(l) == self.skip_layer {
                cache.skip_input.as_ref().unwrap()
            } else {
                &cache.hidden[l - 1]
            };
            let (gw, gb) = grads[layer.w_off..layer.b_off + out_dim].split_at_mut(in_dim * out_dim);
            gemm(out_dim, rows, in_dim, &dz, (1, out_dim), layer_input, (in_dim, 1), 1.0, gw, (in_dim, 1));
            for row in dz.chunks(out_dim) {
                gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
            }
            if l == 0 && d_input.is_none() {
                break;
            }
            let w = &self.params[layer.w_off..layer.b_off];
            let mut dx = vec![0.0; rows * in_dim];
            gemm(rows, out_dim, in_dim, &dz, (out_dim, 1), w, (in_dim, 1), 0.0, &mut dx, (in_dim, 1));
            if l == 0 {
                let di = d_input.as_mut().unwrap();
                di.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
                break;
            }
            if Some(l) == self.skip_layer {
                let width = in_dim - self.input_dim;
                let mut prev = Vec::with_capacity(rows * width);
                for r in 0..rows {
                    let row = &dx[r * in_dim..(r + 1) * in_dim];
                    prev.extend_from_slice(&row[..width]);
                    if let Some(di) = d_input.as_mut() {
                        di[r * self.input_dim..(r + 1) * self.input_dim]
                            .iter_mut()
                            .zip(&row[width..])
                            .for_each(|(a, b)| *a += b);
                    }
                }
                dz = prev;
            } else {
                dz = dx;
            }
        }
        (grads, d_input)
    }

    /// Reverse-mode pass. Returns parameter gradients summed over rows and,
    /// when `want_input`, the row-major gradient w.r.t. the inputs.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], want_input: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let od = self.output_dim();
        if cache.chunks.is_empty() && cache.rows > 0 {
            return Err(Error::State("MLP cache holds no activations".into()));
        }
        if d_out.len() != cache.rows * od {
            return Err(Error::Shape(format!(
                "output gradient has {} entries, cache has {} rows of {od}",
                d_out.len(),
                cache.rows
            )));
        }
        let parts = par::map_range(cache.chunks.len(), |c| {
            let r0 = c * CHUNK_ROWS;
            let r1 = r0 + cache.chunks[c].rows;
            self.chunk_backward(&cache.chunks[c], &d_out[r0 * od..r1 * od], want_input)
        });
        let mut grads = vec![0.0; self.params.len()];
        let mut d_input = want_input.then(|| Vec::with_capacity(cache.rows * self.input_dim));
        for (g, di) in parts {
            grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            if let (Some(acc), Some(di)) = (d_input.as_mut(), di) {
                acc.extend_from_slice(&di);
            }
        }
        Ok((grads, d_input))
    }
}
