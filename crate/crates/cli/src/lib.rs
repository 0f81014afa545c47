//! Command-line front end and HTTP render service for trained snapshots.

pub mod overrides;
pub mod server;

use deformsplat::io::{encode_png, Snapshot};
use deformsplat::{Camera, Error, Result};
use nalgebra::Matrix4;

/// Largest width or height a render request may ask for.
pub const MAX_RENDER_SIZE: usize = 1024;

/// Parses 16 comma- or whitespace-separated numbers as a row-major
/// world-to-camera matrix.
pub fn parse_pose(text: &str) -> Result<Matrix4<f64>> {
    let values: Vec<f64> = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("pose entry `{s}` is not a number")))
        })
        .collect::<Result<_>>()?;
    pose_from_values(&values)
}

pub fn pose_from_values(values: &[f64]) -> Result<Matrix4<f64>> {
    if values.len() != 16 {
        return Err(Error::Config(format!("pose needs 16 values, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("pose contains a non-finite value".into()));
    }
    Ok(Matrix4::from_row_slice(values))
}

/// Attaches a list-valued pose that starts with a minus sign to its flag
/// (`--pose -1,0,...` becomes `--pose=-1,0,...`) so it is not read as a flag.
pub fn attach_pose_lists(args: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for arg in args {
        let is_list = arg.starts_with('-') && arg.contains(|c: char| c == ',' || c.is_whitespace());
        if is_list && out.last().is_some_and(|prev| prev == "--pose") {
            out.pop();
            out.push(format!("--pose={arg}"));
        } else {
            out.push(arg);
        }
    }
    out
}

/// Renders the snapshot from `pose` at time `t` (clamped to `[0, 1]`) and
/// encodes the frame as an 8-bit PNG. Missing sizes fall back to the training
/// resolution.
pub fn render_png(snapshot: &Snapshot, pose: &Matrix4<f64>, t: f64, width: Option<usize>, height: Option<usize>) -> Result<Vec<u8>> {
    let [w0, h0] = snapshot.meta.resolution;
    let w = width.unwrap_or(w0);
    let h = height.unwrap_or(h0);
    if w == 0 || h == 0 || w > MAX_RENDER_SIZE || h > MAX_RENDER_SIZE {
        return Err(Error::Config(format!("image size {w}x{h} outside 1..={MAX_RENDER_SIZE}")));
    }
    if !t.is_finite() {
        return Err(Error::Config("time must be finite".into()));
    }
    let cam = Camera::from_fov(snapshot.meta.fov_x, w, h, *pose);
    cam.validate()?;
    let settings = snapshot
        .scene
        .settings(snapshot.meta.background, snapshot.config.tile_size);
    let image = snapshot.scene.render(&cam, t.clamp(0.0, 1.0), &settings)?;
    encode_png(w, h, &image)
}
