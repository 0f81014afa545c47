//! Datasets, seed point clouds, PNG images, synthetic scenes and snapshots.

mod dataset;
mod image;
mod points;
mod snapshot;
mod synthetic;

pub use dataset::{
    camera_from_nerf, load_dataset, nerf_from_camera, Dataset, Frame, DEFAULT_BBOX_HALF_EXTENT,
};
pub use image::{decode_png, encode_png, quantize, quantize_image, read_png, write_png};
pub use points::{read_points, write_points, SeedPoint, POINTS_FILE};
pub use snapshot::{load_snapshot, save_snapshot, Snapshot, SnapshotMeta, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};
pub use synthetic::{generate_synthetic, GroundTruth, MotionProgram, SyntheticSpec};
