use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Vec3;

/// File name of the seed cloud inside a dataset directory.
pub const POINTS_FILE: &str = "points3d.bin";

/// A seed point: position and 8-bit color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedPoint {
    pub position: Vec3,
    pub color: [u8; 3],
}

const RECORD: usize = 15;

/// Binary layout: `u64` count, then per point three `f32` coordinates and
/// three color bytes, all little-endian.
pub fn write_points(path: &Path, points: &[SeedPoint]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 + RECORD * points.len());
    buf.extend_from_slice(&(points.len() as u64).to_le_bytes());
    for p in points {
        for k in 0..3 {
            buf.extend_from_slice(&(p.position[k] as f32).to_le_bytes());
        }
        buf.extend_from_slice(&p.color);
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_points(path: &Path) -> Result<Vec<SeedPoint>> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let truncated = || Error::io(path, std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "truncated point file"));
    let count = u64::from_le_bytes(buf.get(..8).ok_or_else(truncated)?.try_into().unwrap()) as usize;
    let body = &buf[8..];
    if body.len() != count.checked_mul(RECORD).ok_or_else(truncated)? {
        return Err(truncated());
    }
    Ok(body
        .chunks(RECORD)
        .map(|r| {
            let f = |i: usize| f64::from(f32::from_le_bytes(r[4 * i..4 * i + 4].try_into().unwrap()));
            SeedPoint {
                position: Vec3::new(f(0), f(1), f(2)),
                color: [r[12], r[13], r[14]],
            }
        })
        .collect())
}
