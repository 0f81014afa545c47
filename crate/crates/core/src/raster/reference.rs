use super::{project, splat_alpha, Camera, RenderSettings, T_MIN};
use crate::math::{Gaussian, Vec3};

/// Straightforward per-pixel renderer over all depth-sorted splats, with no
/// tiling. Shares the projection, alpha and termination rules of the tiled
/// rasterizer and serves as its correctness oracle.
pub fn reference_render(
    gaussians: &[Gaussian],
    sh_anchors: &[Vec3],
    cam: &Camera,
    settings: &RenderSettings,
) -> Vec<f64> {
    let mut splats: Vec<_> = gaussians
        .iter()
        .zip(sh_anchors)
        .enumerate()
        .filter_map(|(i, (g, a))| project(g, i, a, cam, settings.sh_degree))
        .collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));

    let mut image = vec![0.0; cam.width * cam.height * 3];
    for py in 0..cam.height {
        for px in 0..cam.width {
            let (fx, fy) = (px as f64 + 0.5, py as f64 + 0.5);
            let mut trans = 1.0;
            let mut c = [0.0; 3];
            for p in &splats {
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
                trans = next;
            }
            let o = 3 * (py * cam.width + px);
            for ch in 0..3 {
                image[o + ch] = c[ch] + trans * settings.background[ch];
            }
        }
    }
    image
}
