//! Differentiable Gaussian splatting for dynamic scenes.
//!
//! A scene is a canonical set of deformable Gaussians warped to time `t` by an
//! MLP deformation field, concatenated with a separate set of static Gaussians,
//! and rendered with a tile-based differentiable rasterizer.

pub mod deform;
pub mod error;
pub mod io;
pub mod math;
pub mod optim;
pub mod par;
pub mod raster;
pub mod testing;
pub mod train;

pub use error::{Error, Result};
pub use math::{Gaussian, Quaternion};
pub use raster::Camera;
