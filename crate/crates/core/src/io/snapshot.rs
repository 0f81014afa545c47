use std::io::{Cursor, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::deform::{DeformMode, DeformationField, FieldConfig, LayerShape};
use crate::error::{Error, Result};
use crate::math::{sh_coeff_count, Gaussian, Quaternion, Vec3};
use crate::train::{Scene, TrainConfig};

pub const SNAPSHOT_MAGIC: [u8; 8] = *b"DSPLSNAP";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Rendering context stored alongside the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub resolution: [usize; 2],
    pub fov_x: f64,
    pub time_range: [f64; 2],
    pub background: [f64; 3],
}

impl Default for SnapshotMeta {
    fn default() -> Self {
        Self {
            resolution: [64, 64],
            fov_x: 0.8,
            time_range: [0.0, 1.0],
            background: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub scene: Scene,
    pub config: TrainConfig,
    pub iteration: usize,
    pub meta: SnapshotMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    sh_degree: usize,
    n_deformable: usize,
    n_static: usize,
    stride: usize,
    field: FieldConfig,
    layer_shapes: Vec<LayerShape>,
    n_field_params: usize,
    mode: DeformMode,
    scene_extent: f64,
    propagate_field_position: bool,
    iteration: usize,
    config: TrainConfig,
    meta: SnapshotMeta,
}

fn stride(sh_degree: usize) -> usize {
    11 + 3 * sh_coeff_count(sh_degree)
}

fn push_gaussian(out: &mut Vec<f64>, g: &Gaussian) {
    out.extend_from_slice(g.position.as_slice());
    out.extend_from_slice(&g.rotation.to_array());
    out.extend_from_slice(g.log_scale.as_slice());
    out.push(g.opacity_logit);
    out.extend(g.sh.iter().flatten());
}

fn gaussian_from(v: &[f64]) -> Gaussian {
    Gaussian {
        position: Vec3::new(v[0], v[1], v[2]),
        rotation: Quaternion::new(v[3], v[4], v[5], v[6]),
        log_scale: Vec3::new(v[7], v[8], v[9]),
        opacity_logit: v[10],
        sh: v[11..].chunks(3).map(|c| [c[0], c[1], c[2]]).collect(),
    }
}

/// Binary layout: magic, `u32` version, `u64` header length, JSON header,
/// then little-endian `f64` arrays for the deformable set, the static set and
/// the field weights.
pub fn save_snapshot(snapshot: &Snapshot, path: &Path) -> Result<()> {
    let scene = &snapshot.scene;
    let s = stride(scene.sh_degree);
    for g in scene.deformable.iter().chain(&scene.static_set) {
        if g.sh.len() != sh_coeff_count(scene.sh_degree) {
            return Err(Error::Shape("Gaussian SH length disagrees with the scene degree".into()));
        }
    }
    let header = Header {
        version: SNAPSHOT_VERSION,
        sh_degree: scene.sh_degree,
        n_deformable: scene.deformable.len(),
        n_static: scene.static_set.len(),
        stride: s,
        field: scene.field.config().clone(),
        layer_shapes: scene.field.layer_shapes(),
        n_field_params: scene.field.params().len(),
        mode: scene.mode,
        scene_extent: scene.scene_extent,
        propagate_field_position: scene.propagate_field_position,
        iteration: snapshot.iteration,
        config: snapshot.config.clone(),
        meta: snapshot.meta.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut values = Vec::with_capacity(s * scene.len() + scene.field.params().len());
    for g in scene.deformable.iter().chain(&scene.static_set) {
        push_gaussian(&mut values, g);
    }
    values.extend_from_slice(scene.field.params());
    let mut buf = Vec::with_capacity(20 + json.len() + 8 * values.len());
    buf.extend_from_slice(&SNAPSHOT_MAGIC);
    buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor::new(bytes.as_slice());
    let mut read = |n: usize| -> Result<Vec<u8>> {
        let mut b = vec![0u8; n];
        cur.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
        Ok(b)
    };
    if read(8)? != SNAPSHOT_MAGIC {
        return Err(Error::Format(format!("{} is not a snapshot (bad magic)", path.display())));
    }
    let version = u32::from_le_bytes(read(4)?.try_into().unwrap());
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!(
            "snapshot version {version}, this build reads {SNAPSHOT_VERSION}"
        )));
    }
    let header_len = u64::from_le_bytes(read(8)?.try_into().unwrap()) as usize;
    if header_len > bytes.len() {
        return Err(Error::io(path, std::io::ErrorKind::UnexpectedEof.into()));
    }
    let header: Header = serde_json::from_slice(&read(header_len)?).map_err(|e| Error::Format(format!("snapshot header: {e}")))?;
    if header.version != version || header.stride != stride(header.sh_degree) {
        return Err(Error::Format("inconsistent snapshot header".into()));
    }
    let n_values = header.stride * (header.n_deformable + header.n_static) + header.n_field_params;
    let raw = read(8 * n_values)?;
    let values: Vec<f64> = raw.chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let (gaussians, params) = values.split_at(n_values - header.n_field_params);
    let mut all = gaussians.chunks(header.stride).map(gaussian_from);
    let deformable: Vec<Gaussian> = all.by_ref().take(header.n_deformable).collect();
    let static_set: Vec<Gaussian> = all.collect();
    let mut field = DeformationField::zeroed(header.field)?;
    if field.layer_shapes() != header.layer_shapes {
        return Err(Error::Format("field layer shapes disagree with its configuration".into()));
    }
    field.set_params(params.to_vec())?;
    Ok(Snapshot {
        scene: Scene {
            deformable,
            static_set,
            field,
            mode: header.mode,
            scene_extent: header.scene_extent,
            sh_degree: header.sh_degree,
            propagate_field_position: header.propagate_field_position,
        },
        config: header.config,
        iteration: header.iteration,
        meta: header.meta,
    })
}
