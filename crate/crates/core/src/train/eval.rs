use serde::Serialize;

use super::metrics::{ms_ssim, psnr, ssim};
use super::Scene;
use crate::error::{Error, Result};
use crate::io::{quantize_image, Frame};
use crate::raster::RenderSettings;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameMetrics {
    pub name: String,
    pub time: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
}

/// Averages over the evaluated frames.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub psnr: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
    pub per_frame: Vec<FrameMetrics>,
}

impl Metrics {
    pub fn from_frames(per_frame: Vec<FrameMetrics>) -> Result<Self> {
        if per_frame.is_empty() {
            return Err(Error::EmptySplit);
        }
        let n = per_frame.len() as f64;
        let mean = |f: fn(&FrameMetrics) -> f64| per_frame.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            psnr: mean(|m| m.psnr),
            ssim: mean(|m| m.ssim),
            ms_ssim: mean(|m| m.ms_ssim),
            per_frame,
        })
    }
}

pub fn frame_metrics(name: &str, time: f64, img: &[f64], gt: &[f64], width: usize, height: usize) -> Result<FrameMetrics> {
    Ok(FrameMetrics {
        name: name.to_string(),
        time,
        psnr: psnr(img, gt)?,
        ssim: ssim(img, gt, width, height)?,
        ms_ssim: ms_ssim(img, gt, width, height)?,
    })
}

/// Renders every frame at its own timestamp and averages the metrics. Renders
/// are quantized to 8 bits first, as they would be when saved.
pub fn evaluate(scene: &Scene, frames: &[Frame], settings: &RenderSettings) -> Result<Metrics> {
    if frames.is_empty() {
        return Err(Error::EmptySplit);
    }
    let mut per_frame = Vec::with_capacity(frames.len());
    for f in frames {
        let img = quantize_image(&scene.render(&f.camera, f.time, settings)?);
        per_frame.push(frame_metrics(&f.name, f.time, &img, &f.image, f.width(), f.height())?);
    }
    Metrics::from_frames(per_frame)
}
