//! Tile-based differentiable splatting.
//!
//! Splats are depth sorted once per frame, binned into square tiles, and
//! composited front to back per pixel. The forward pass records, per pixel,
//! the splats that contributed so the backward pass can replay the exact
//! compositing sequence.

mod camera;
mod project;
mod reference;

pub use camera::{look_at_matrix, Camera};
pub use project::{
    project, project_backward, GaussianGrad, ProjectedGaussian, ScreenGrad, EXTENT_SIGMAS,
    LOW_PASS, Z_NEAR,
};
pub use reference::reference_render;

use crate::error::{Error, Result};
use crate::math::{Gaussian, Vec3};
use crate::par;

pub const ALPHA_MAX: f64 = 0.99;
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
pub const T_MIN: f64 = 1e-4;
pub const DEFAULT_TILE_SIZE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSettings {
    pub background: [f64; 3],
    pub tile_size: usize,
    pub sh_degree: usize,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            background: [0.0; 3],
            tile_size: DEFAULT_TILE_SIZE,
            sh_degree: 1,
        }
    }
}

/// Per-tile record of the compositing sequence.
#[derive(Debug, Clone, Default)]
struct TileAux {
    /// Indices into the sorted projected list, in depth order.
    splats: Vec<u32>,
    /// `pixel_start[i]..pixel_start[i + 1]` indexes `contributors` for the
    /// i-th pixel of the tile (row-major within the tile).
    pixel_start: Vec<u32>,
    /// Positions into `splats`.
    contributors: Vec<u32>,
}

/// State retained by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct RenderAux {
    pub projected: Vec<ProjectedGaussian>,
    pub final_transmittance: Vec<f64>,
    tiles: Vec<TileAux>,
    tiles_x: usize,
    settings: RenderSettings,
    camera: Camera,
    input_len: usize,
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    /// Row-major `height * width * 3`, values in `[0, 1]`.
    pub image: Vec<f64>,
    pub aux: Option<RenderAux>,
}

impl RenderOutput {
    /// Drops the backward-pass state.
    pub fn into_image(self) -> Vec<f64> {
        self.image
    }

    /// Hash of the discrete compositing structure: which splats contribute
    /// to which pixel, in which order, and which alpha and color clamps are
    /// active. The rendered image is a smooth function of the parameters
    /// wherever this signature is locally constant.
    pub fn compositing_signature(&self) -> Option<u64> {
        use std::hash::{Hash, Hasher};
        let aux = self.aux.as_ref()?;
        let tile = aux.settings.tile_size.max(1);
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for p in &aux.projected {
            p.index.hash(&mut h);
            p.rgb_active.hash(&mut h);
        }
        for (t, ta) in aux.tiles.iter().enumerate() {
            let (x0, y0, x1, y1) = tile_bounds(&aux.camera, tile, aux.tiles_x, t);
            let tw = x1 - x0;
            for i in 0..(x1 - x0) * (y1 - y0) {
                let (fx, fy) = ((x0 + i % tw) as f64 + 0.5, (y0 + i / tw) as f64 + 0.5);
                let range = ta.pixel_start[i] as usize..ta.pixel_start[i + 1] as usize;
                range.len().hash(&mut h);
                for &pos in &ta.contributors[range] {
                    let p = &aux.projected[ta.splats[pos as usize] as usize];
                    p.index.hash(&mut h);
                    splat_alpha(p, fx, fy).map(|a| a.2).hash(&mut h);
                }
            }
        }
        Some(h.finish())
    }
}

/// Gradients produced by [`rasterize_backward`], indexed like the input slice.
#[derive(Debug, Clone)]
pub struct RenderGradients {
    pub gaussians: Vec<GaussianGrad>,
    pub sh_anchors: Vec<Vec3>,
    /// Norm of the positional gradient in normalized device coordinates.
    pub screen_grad_norm: Vec<f64>,
    pub visible: Vec<bool>,
    pub radius: Vec<f64>,
    pub background: [f64; 3],
}

/// Projects every Gaussian and returns the visible ones sorted by depth, ties
/// broken by input index.
pub fn project_all(
    gaussians: &[Gaussian],
    sh_anchors: &[Vec3],
    cam: &Camera,
    sh_degree: usize,
) -> Vec<ProjectedGaussian> {
    assert_eq!(gaussians.len(), sh_anchors.len());
    let mut projected: Vec<ProjectedGaussian> = par::map_range(gaussians.len(), |i| {
        project(&gaussians[i], i, &sh_anchors[i], cam, sh_degree)
    })
    .into_iter()
    .flatten()
    .collect();
    projected.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    projected
}

fn bin_tiles(projected: &[ProjectedGaussian], cam: &Camera, tile: usize) -> (usize, Vec<Vec<u32>>) {
    let tiles_x = cam.width.div_ceil(tile);
    let tiles_y = cam.height.div_ceil(tile);
    let mut bins = vec![Vec::new(); tiles_x * tiles_y];
    let ts = tile as f64;
    for (k, p) in projected.iter().enumerate() {
        let x0 = ((p.mean2d.x - p.radius) / ts).floor().max(0.0) as usize;
        let y0 = ((p.mean2d.y - p.radius) / ts).floor().max(0.0) as usize;
        let x1 = (((p.mean2d.x + p.radius) / ts).floor() as isize).min(tiles_x as isize - 1);
        let y1 = (((p.mean2d.y + p.radius) / ts).floor() as isize).min(tiles_y as isize - 1);
        if x1 < 0 || y1 < 0 {
            continue;
        }
        for ty in y0..=y1 as usize {
            for tx in x0..=x1 as usize {
                bins[ty * tiles_x + tx].push(k as u32);
            }
        }
    }
    (tiles_x, bins)
}

fn tile_bounds(cam: &Camera, tile: usize, tiles_x: usize, t: usize) -> (usize, usize, usize, usize) {
    let (tx, ty) = (t % tiles_x, t / tiles_x);
    let x0 = tx * tile;
    let y0 = ty * tile;
    (x0, y0, (x0 + tile).min(cam.width), (y0 + tile).min(cam.height))
}

/// Alpha of splat `p` at pixel center `(px, py)`, or `None` when it is skipped.
/// Returns `(alpha, gaussian_weight, clamped)`.
#[inline]
pub(crate) fn splat_alpha(p: &ProjectedGaussian, px: f64, py: f64) -> Option<(f64, f64, bool)> {
    if !p.covers(px, py) {
        return None;
    }
    let power = p.power(px, py);
    if power > 0.0 {
        return None;
    }
    let weight = power.exp();
    let raw = p.alpha_base * weight;
    let (alpha, clamped) = if raw > ALPHA_MAX { (ALPHA_MAX, true) } else { (raw, false) };
    if alpha < ALPHA_MIN {
        return None;
    }
    Some((alpha, weight, clamped))
}

/// Composites the depth-sorted `projected` splats.
pub fn rasterize_forward(projected: Vec<ProjectedGaussian>, cam: &Camera, settings: &RenderSettings, input_len: usize) -> RenderOutput {
    let tile = settings.tile_size.max(1);
    let (tiles_x, bins) = bin_tiles(&projected, cam, tile);
    let bg = settings.background;

    struct TileResult {
        colors: Vec<[f64; 3]>,
        transmittance: Vec<f64>,
        aux: TileAux,
    }

    let results: Vec<TileResult> = par::map_range(bins.len(), |t| {
        let (x0, y0, x1, y1) = tile_bounds(cam, tile, tiles_x, t);
        let list = &bins[t];
        let n_pix = (x1 - x0) * (y1 - y0);
        let mut colors = Vec::with_capacity(n_pix);
        let mut transmittance = Vec::with_capacity(n_pix);
        let mut pixel_start = Vec::with_capacity(n_pix + 1);
        let mut contributors = Vec::new();
        pixel_start.push(0);
        for py in y0..y1 {
            for px in x0..x1 {
                let (fx, fy) = (px as f64 + 0.5, py as f64 + 0.5);
                let mut trans = 1.0;
                let mut c = [0.0; 3];
                for (pos, &k) in list.iter().enumerate() {
                    let p = &projected[k as usize];
                    let Some((alpha, _, _)) = splat_alpha(p, fx, fy) else {
                        continue;
                    };
                    let next = trans * (1.0 - alpha);
                    if next < T_MIN {
                        break;
                    }
                    for ch in 0..3 {
                        c[ch] += p.rgb[ch] * alpha * trans;
                    }
                    contributors.push(pos as u32);
                    trans = next;
                }
                for ch in 0..3 {
                    c[ch] += trans * bg[ch];
                }
                colors.push(c);
                transmittance.push(trans);
                pixel_start.push(contributors.len() as u32);
            }
        }
        TileResult {
            colors,
            transmittance,
            aux: TileAux {
                splats: list.clone(),
                pixel_start,
                contributors,
            },
        }
    });

    let (w, h) = (cam.width, cam.height);
    let mut image = vec![0.0; w * h * 3];
    let mut final_t = vec![1.0; w * h];
    let mut tiles = Vec::with_capacity(results.len());
    for (t, r) in results.into_iter().enumerate() {
        let (x0, y0, x1, _) = tile_bounds(cam, tile, tiles_x, t);
        let tw = x1 - x0;
        for (i, (c, tr)) in r.colors.iter().zip(&r.transmittance).enumerate() {
            let (px, py) = (x0 + i % tw, y0 + i / tw);
            let o = py * w + px;
            image[3 * o..3 * o + 3].copy_from_slice(c);
            final_t[o] = *tr;
        }
        tiles.push(r.aux);
    }

    RenderOutput {
        width: w,
        height: h,
        image,
        aux: Some(RenderAux {
            projected,
            final_transmittance: final_t,
            tiles,
            tiles_x,
            settings: settings.clone(),
            camera: cam.clone(),
            input_len,
        }),
    }
}

/// Projects and composites `gaussians`. `sh_anchors[i]` selects the view
/// direction used for the color of `gaussians[i]`.
pub fn render_with_anchors(
    gaussians: &[Gaussian],
    sh_anchors: &[Vec3],
    cam: &Camera,
    settings: &RenderSettings,
) -> Result<RenderOutput> {
    cam.validate()?;
    crate::math::sh::validate_degree(settings.sh_degree)?;
    if gaussians.len() != sh_anchors.len() {
        return Err(Error::Shape(format!(
            "{} Gaussians but {} SH anchors",
            gaussians.len(),
            sh_anchors.len()
        )));
    }
    let projected = project_all(gaussians, sh_anchors, cam, settings.sh_degree);
    Ok(rasterize_forward(projected, cam, settings, gaussians.len()))
}

/// Renders with each Gaussian's own position as its SH anchor.
pub fn render(gaussians: &[Gaussian], cam: &Camera, settings: &RenderSettings) -> Result<RenderOutput> {
    let anchors: Vec<Vec3> = gaussians.iter().map(|g| g.position).collect();
    render_with_anchors(gaussians, &anchors, cam, settings)
}

/// Analytic gradients of `sum(d_image * image)` w.r.t. every input Gaussian,
/// SH anchor and the background color.
pub fn rasterize_backward(
    out: &RenderOutput,
    gaussians: &[Gaussian],
    sh_anchors: &[Vec3],
    d_image: &[f64],
) -> Result<RenderGradients> {
    let aux = out
        .aux
        .as_ref()
        .ok_or_else(|| Error::State("render output has no backward state".into()))?;
    if gaussians.len() != aux.input_len || sh_anchors.len() != aux.input_len {
        return Err(Error::Shape(format!(
            "backward called with {} Gaussians, forward had {}",
            gaussians.len(),
            aux.input_len
        )));
    }
    if d_image.len() != out.image.len() {
        return Err(Error::Shape(format!(
            "image gradient has {} entries, expected {}",
            d_image.len(),
            out.image.len()
        )));
    }
    let cam = &aux.camera;
    let settings = &aux.settings;
    let tile = settings.tile_size.max(1);
    let bg = settings.background;
    let w = cam.width;
    let projected = &aux.projected;

    // Per-tile screen-space gradients, indexed by position in the tile list.
    let per_tile: Vec<(Vec<ScreenGrad>, [f64; 3])> = par::map_range(aux.tiles.len(), |t| {
        let ta = &aux.tiles[t];
        let (x0, y0, x1, y1) = tile_bounds(cam, tile, aux.tiles_x, t);
        let mut grads = vec![ScreenGrad::default(); ta.splats.len()];
        let mut d_bg = [0.0; 3];
        let mut alphas: Vec<(f64, f64, bool)> = Vec::new();
        let mut trans: Vec<f64> = Vec::new();
        let tw = x1 - x0;
        for py in y0..y1 {
            for px in x0..x1 {
                let i = (py - y0) * tw + (px - x0);
                let o = py * w + px;
                let dc = &d_image[3 * o..3 * o + 3];
                let t_final = aux.final_transmittance[o];
                for ch in 0..3 {
                    d_bg[ch] += t_final * dc[ch];
                }
                let contrib = &ta.contributors[ta.pixel_start[i] as usize..ta.pixel_start[i + 1] as usize];
                if contrib.is_empty() || dc.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let (fx, fy) = (px as f64 + 0.5, py as f64 + 0.5);
                alphas.clear();
                trans.clear();
                let mut tr = 1.0;
                for &pos in contrib {
                    let p = &projected[ta.splats[pos as usize] as usize];
                    let a = splat_alpha(p, fx, fy).expect("contributor replays with non-zero alpha");
                    trans.push(tr);
                    tr *= 1.0 - a.0;
                    alphas.push(a);
                }
                let mut behind = bg;
                for j in (0..contrib.len()).rev() {
                    let pos = contrib[j] as usize;
                    let p = &projected[ta.splats[pos] as usize];
                    let (alpha, weight, clamped) = alphas[j];
                    let tj = trans[j];
                    let g = &mut grads[pos];
                    let mut d_alpha = 0.0;
                    for ch in 0..3 {
                        g.rgb[ch] += alpha * tj * dc[ch];
                        d_alpha += (p.rgb[ch] - behind[ch]) * dc[ch];
                        behind[ch] = p.rgb[ch] * alpha + (1.0 - alpha) * behind[ch];
                    }
                    d_alpha *= tj;
                    if clamped {
                        continue;
                    }
                    g.alpha_base += d_alpha * weight;
                    let d_power = d_alpha * p.alpha_base * weight;
                    let dx = fx - p.mean2d.x;
                    let dy = fy - p.mean2d.y;
                    let [ca, cb, cc] = p.conic;
                    g.conic[0] += -0.5 * dx * dx * d_power;
                    g.conic[1] += -dx * dy * d_power;
                    g.conic[2] += -0.5 * dy * dy * d_power;
                    g.mean2d[0] += d_power * (ca * dx + cb * dy);
                    g.mean2d[1] += d_power * (cb * dx + cc * dy);
                }
            }
        }
        (grads, d_bg)
    });

    let mut screen = vec![ScreenGrad::default(); projected.len()];
    let mut d_background = [0.0; 3];
    for (t, (grads, d_bg)) in per_tile.iter().enumerate() {
        for (pos, g) in grads.iter().enumerate() {
            screen[aux.tiles[t].splats[pos] as usize].add(g);
        }
        for ch in 0..3 {
            d_background[ch] += d_bg[ch];
        }
    }

    let per_splat = par::map_range(projected.len(), |k| {
        let p = &projected[k];
        project_backward(&gaussians[p.index], p, &sh_anchors[p.index], cam, settings.sh_degree, &screen[k])
    });

    let n = gaussians.len();
    let mut result = RenderGradients {
        gaussians: gaussians.iter().map(|g| GaussianGrad::zeros(g.sh.len())).collect(),
        sh_anchors: vec![Vec3::zeros(); n],
        screen_grad_norm: vec![0.0; n],
        visible: vec![false; n],
        radius: vec![0.0; n],
        background: d_background,
    };
    for ((p, (gg, da)), sg) in projected.iter().zip(per_splat).zip(&screen) {
        let i = p.index;
        result.gaussians[i] = gg;
        result.sh_anchors[i] = da;
        result.visible[i] = true;
        result.radius[i] = p.radius;
        let gx = sg.mean2d[0] * 0.5 * cam.width as f64;
        let gy = sg.mean2d[1] * 0.5 * cam.height as f64;
        result.screen_grad_norm[i] = (gx * gx + gy * gy).sqrt();
    }
    Ok(result)
}
