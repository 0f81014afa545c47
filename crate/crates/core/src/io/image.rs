use std::io::Cursor;
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};

/// Maps `[0, 1]` to 8 bits with rounding.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// The image as it reads back after an 8-bit round trip.
pub fn quantize_image(rgb: &[f64]) -> Vec<f64> {
    rgb.iter().map(|&v| f64::from(quantize(v)) / 255.0).collect()
}

/// Encodes a row-major RGB image with values in `[0, 1]` as an 8-bit PNG.
pub fn encode_png(width: usize, height: usize, rgb: &[f64]) -> Result<Vec<u8>> {
    if rgb.len() != width * height * 3 {
        return Err(Error::Shape(format!("{} values for a {width}x{height} RGB image", rgb.len())));
    }
    let bytes: Vec<u8> = rgb.iter().map(|&v| quantize(v)).collect();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(ColorType::Rgb);
        enc.set_depth(BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| Error::Format(e.to_string()))?;
        w.write_image_data(&bytes).map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(out)
}

pub fn write_png(path: &Path, width: usize, height: usize, rgb: &[f64]) -> Result<()> {
    let bytes = encode_png(width, height, rgb)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decodes a PNG into `[0, 1]` RGB, compositing any alpha channel over
/// `background`.
pub fn decode_png(bytes: &[u8], background: [f64; 3]) -> Result<(usize, usize, Vec<f64>)> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(Transformations::normalize_to_color8());
    let mut reader = dec.read_info().map_err(|e| Error::Format(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("png too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Format(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Indexed => return Err(Error::Format("unexpanded indexed png".into())),
    };
    let mut rgb = Vec::with_capacity(w * h * 3);
    for px in buf[..w * h * channels].chunks(channels) {
        let f = |v: u8| f64::from(v) / 255.0;
        let (c, a) = match channels {
            1 => ([f(px[0]); 3], 1.0),
            2 => ([f(px[0]); 3], f(px[1])),
            3 => ([f(px[0]), f(px[1]), f(px[2])], 1.0),
            _ => ([f(px[0]), f(px[1]), f(px[2])], f(px[3])),
        };
        for k in 0..3 {
            rgb.push(c[k] * a + background[k] * (1.0 - a));
        }
    }
    Ok((w, h, rgb))
}

pub fn read_png(path: &Path, background: [f64; 3]) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes, background)
}
