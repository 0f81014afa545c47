use std::path::{Path, PathBuf};

use nalgebra::Matrix4;
use serde::Deserialize;

use super::points::{read_points, SeedPoint, POINTS_FILE};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::raster::Camera;

/// Half side of the cube used when a dataset declares no bounding box.
pub const DEFAULT_BBOX_HALF_EXTENT: f64 = 1.5;

/// One posed, timestamped image.
#[derive(Debug, Clone)]
pub struct Frame {
    pub name: String,
    pub camera: Camera,
    /// Normalized to `[0, 1]` over the whole sequence.
    pub time: f64,
    /// Row-major RGB in `[0, 1]`, `camera.height * camera.width * 3` values.
    pub image: Vec<f64>,
}

impl Frame {
    pub fn width(&self) -> usize {
        self.camera.width
    }

    pub fn height(&self) -> usize {
        self.camera.height
    }

    /// Box-filtered copy reduced by an integer `factor`, with intrinsics
    /// scaled to match.
    pub fn downscaled(&self, factor: usize) -> Frame {
        if factor <= 1 {
            return self.clone();
        }
        let (w, h) = (self.width() / factor, self.height() / factor);
        let mut image = vec![0.0; w * h * 3];
        let norm = 1.0 / (factor * factor) as f64;
        for y in 0..h {
            for x in 0..w {
                for dy in 0..factor {
                    for dx in 0..factor {
                        let src = 3 * ((y * factor + dy) * self.width() + x * factor + dx);
                        for c in 0..3 {
                            image[3 * (y * w + x) + c] += norm * self.image[src + c];
                        }
                    }
                }
            }
        }
        let s = factor as f64;
        let mut camera = self.camera.clone();
        camera.fx /= s;
        camera.fy /= s;
        camera.cx /= s;
        camera.cy /= s;
        camera.width = w;
        camera.height = h;
        Frame {
            name: self.name.clone(),
            camera,
            time: self.time,
            image,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub train: Vec<Frame>,
    pub test: Vec<Frame>,
    pub points: Option<Vec<SeedPoint>>,
    pub bbox: Option<(Vec3, Vec3)>,
    /// Raw timestamps before normalization, as `(min, max)`.
    pub time_range: (f64, f64),
}

impl Dataset {
    pub fn bbox_or_default(&self) -> (Vec3, Vec3) {
        self.bbox.unwrap_or((
            Vec3::repeat(-DEFAULT_BBOX_HALF_EXTENT),
            Vec3::repeat(DEFAULT_BBOX_HALF_EXTENT),
        ))
    }

    pub fn cameras(&self) -> Vec<&Camera> {
        self.train.iter().chain(&self.test).map(|f| &f.camera).collect()
    }

    pub fn downscaled(&self, factor: usize) -> Dataset {
        Dataset {
            train: self.train.iter().map(|f| f.downscaled(factor)).collect(),
            test: self.test.iter().map(|f| f.downscaled(factor)).collect(),
            ..self.clone()
        }
    }
}

#[derive(Deserialize)]
struct TransformsFile {
    camera_angle_x: f64,
    #[serde(default)]
    aabb: Option<[[f64; 3]; 2]>,
    frames: Vec<serde_json::Value>,
}

/// Flip between the OpenGL camera axes of `transform_matrix` (y up, looking
/// down -z) and the x-right, y-down, z-forward axes used by [`Camera`].
fn axis_flip() -> Matrix4<f64> {
    Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, -1.0, -1.0, 1.0))
}

fn rigid_inverse(m: &Matrix4<f64>) -> Matrix4<f64> {
    let r = m.fixed_view::<3, 3>(0, 0).transpose();
    let t = -(r * m.fixed_view::<3, 1>(0, 3));
    let mut out = Matrix4::identity();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    out.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    out
}

/// World-to-camera matrix from a camera-to-world `transform_matrix`.
pub fn camera_from_nerf(c2w: &Matrix4<f64>) -> Matrix4<f64> {
    rigid_inverse(&(c2w * axis_flip()))
}

/// Inverse of [`camera_from_nerf`].
pub fn nerf_from_camera(w2c: &Matrix4<f64>) -> Matrix4<f64> {
    rigid_inverse(w2c) * axis_flip()
}

struct RawFrame {
    name: String,
    path: PathBuf,
    c2w: Matrix4<f64>,
    time: f64,
}

fn parse_frames(root: &Path, file: &str) -> Result<Option<(f64, Option<[[f64; 3]; 2]>, Vec<RawFrame>)>> {
    let path = root.join(file);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let tf: TransformsFile =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut frames = Vec::with_capacity(tf.frames.len());
    for (i, f) in tf.frames.iter().enumerate() {
        let name = f
            .get("file_path")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Format(format!("{file}: frame {i} has no file_path")))?
            .to_string();
        let time = f
            .get("time")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| Error::Format(format!("{file}: frame {i} ({name}) has no numeric time")))?;
        let rows: Vec<Vec<f64>> = f
            .get("transform_matrix")
            .cloned()
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| Error::Format(format!("{file}: frame {i} ({name}): {e}")))?
            .ok_or_else(|| Error::Format(format!("{file}: frame {i} ({name}) has no transform_matrix")))?;
        if rows.len() != 4 || rows.iter().any(|r| r.len() != 4) {
            return Err(Error::Format(format!("{file}: frame {i} ({name}) transform is not 4x4")));
        }
        let c2w = Matrix4::from_fn(|r, c| rows[r][c]);
        let mut rel = PathBuf::from(&name);
        if rel.extension().is_none() {
            rel.set_extension("png");
        }
        frames.push(RawFrame {
            path: root.join(rel),
            name,
            c2w,
            time,
        });
    }
    Ok(Some((tf.camera_angle_x, tf.aabb, frames)))
}

/// Loads `transforms_train.json`, the optional `transforms_test.json` and
/// the optional seed cloud from `root`. RGBA images are composited over
/// `background`; timestamps are min-max normalized over all frames.
pub fn load_dataset(root: &Path, background: [f64; 3]) -> Result<Dataset> {
    let (fov_train, aabb, train_raw) = parse_frames(root, "transforms_train.json")?.ok_or_else(|| {
        Error::io(
            root.join("transforms_train.json"),
            std::io::Error::new(std::io::ErrorKind::NotFound, "missing transforms_train.json"),
        )
    })?;
    if train_raw.is_empty() {
        return Err(Error::Format("transforms_train.json has no frames".into()));
    }
    let (fov_test, test_raw) = match parse_frames(root, "transforms_test.json")? {
        Some((f, _, frames)) => (f, frames),
        None => (fov_train, Vec::new()),
    };
    let times = train_raw.iter().chain(&test_raw).map(|f| f.time);
    let t_min = times.clone().fold(f64::INFINITY, f64::min);
    let t_max = times.fold(f64::NEG_INFINITY, f64::max);
    let normalize = |t: f64| if t_max > t_min { (t - t_min) / (t_max - t_min) } else { 0.0 };
    let load = |raw: Vec<RawFrame>, fov: f64| -> Result<Vec<Frame>> {
        raw.into_iter()
            .map(|r| {
                let (w, h, image) = super::image::read_png(&r.path, background)?;
                let camera = Camera::from_fov(fov, w, h, camera_from_nerf(&r.c2w));
                camera
                    .validate()
                    .map_err(|e| Error::Format(format!("frame {}: {e}", r.name)))?;
                Ok(Frame {
                    name: r.name,
                    camera,
                    time: normalize(r.time),
                    image,
                })
            })
            .collect()
    };
    let points_path = root.join(POINTS_FILE);
    let points = if points_path.exists() {
        Some(read_points(&points_path)?)
    } else {
        None
    };
    Ok(Dataset {
        root: root.to_path_buf(),
        train: load(train_raw, fov_train)?,
        test: load(test_raw, fov_test)?,
        points,
        bbox: aabb.map(|[lo, hi]| (Vec3::from(lo), Vec3::from(hi))),
        time_range: (t_min, t_max),
    })
}
