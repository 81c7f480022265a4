//! PNG decoding and encoding.
//!
//! Grayscale input is replicated to three channels, alpha is dropped
//! without compositing, and 16-bit samples are truncated to their high
//! byte. Palette images arrive already expanded by the decoder.

use std::path::Path;

use amsr_core::imaging::ImageU8;
use image::{DynamicImage, ImageFormat};

use crate::error::{AppError, Result};

pub fn decode(bytes: &[u8], path: &Path) -> Result<ImageU8> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| AppError::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<u8> = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().flat_map(|v| [v; 3]).collect(),
        DynamicImage::ImageLumaA8(b) => b.into_raw().chunks(2).flat_map(|p| [p[0]; 3]).collect(),
        DynamicImage::ImageRgb8(b) => b.into_raw(),
        DynamicImage::ImageRgba8(b) => b.into_raw().chunks(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().flat_map(|v| [(v >> 8) as u8; 3]).collect(),
        DynamicImage::ImageLumaA16(b) => b.into_raw().chunks(2).flat_map(|p| [(p[0] >> 8) as u8; 3]).collect(),
        DynamicImage::ImageRgb16(b) => b.into_raw().into_iter().map(|v| (v >> 8) as u8).collect(),
        DynamicImage::ImageRgba16(b) => b
            .into_raw()
            .chunks(4)
            .flat_map(|p| [(p[0] >> 8) as u8, (p[1] >> 8) as u8, (p[2] >> 8) as u8])
            .collect(),
        other => other.to_rgb8().into_raw(),
    };
    Ok(ImageU8::new(w, h, pixels)?)
}

pub fn load(path: &Path) -> Result<ImageU8> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode(&bytes, path)
}

pub fn encode(img: &ImageU8) -> Result<Vec<u8>> {
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.pixels().to_vec())
        .ok_or_else(|| AppError::Failed("pixel buffer does not match image size".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| AppError::Failed(format!("png encoding failed: {e}")))?;
    Ok(out.into_inner())
}

pub fn save(path: &Path, img: &ImageU8) -> Result<()> {
    let bytes = encode(img)?;
    std::fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}
