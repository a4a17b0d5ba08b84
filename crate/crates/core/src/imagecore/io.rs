//! PNG and PGM reading and writing.

use super::{normalize_percentile, BinaryMask, Image, ProbabilityMap, RawImage};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use image::{DynamicImage, GrayImage, ImageBuffer, ImageFormat, Luma, RgbImage};
use std::io::Cursor;
use std::path::Path;

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

/// Reads a grayscale PNG (8 or 16 bit) or PGM without rescaling.
pub fn load_raw(path: &Path) -> Result<RawImage> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
        other => other.into_luma16().into_raw().into_iter().map(f64::from).collect(),
    };
    RawImage::new(w, h, data)
}

/// Reads a frame and normalizes it between its 2nd and 98th percentiles.
pub fn load_image(path: &Path) -> Result<Image> {
    Ok(normalize_percentile(&load_raw(path)?, 2.0, 98.0).image)
}

/// Reads a mask; any nonzero pixel is foreground.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let raw = load_raw(path)?;
    let data = raw.data.iter().map(|&v| u8::from(v > 0.0)).collect();
    BinaryMask::new(raw.width, raw.height, data)
}

/// Reads a probability map stored as 8- or 16-bit grayscale, scaled to `[0, 1]`.
pub fn load_probability(path: &Path) -> Result<ProbabilityMap> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    // 8-bit input is widened to the full 16-bit range
    let data = img.into_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
    ProbabilityMap::new(w, h, data)
}

fn encode_png(img: DynamicImage) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
        .map_err(|source| Error::Image { path: "<memory>".into(), source })?;
    Ok(bytes)
}

fn to_u16(values: &[f64]) -> Vec<u16> {
    values.iter().map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16).collect()
}

/// Writes an image as 16-bit grayscale PNG, clamping to `[0, 1]`.
pub fn save_image_u16(img: &Image, path: &Path) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width as u32, img.height as u32, to_u16(&img.data)).expect("buffer size");
    write_atomic(path, &encode_png(DynamicImage::ImageLuma16(buf))?)
}

/// Writes a probability map as 16-bit grayscale PNG.
pub fn save_probability(pm: &ProbabilityMap, path: &Path) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(pm.width as u32, pm.height as u32, to_u16(&pm.data)).expect("buffer size");
    write_atomic(path, &encode_png(DynamicImage::ImageLuma16(buf))?)
}

/// Writes a mask as 8-bit PNG with values 0 and 255.
pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    let data = mask.data.iter().map(|&v| v * 255).collect();
    let buf = GrayImage::from_raw(mask.width as u32, mask.height as u32, data).expect("buffer size");
    write_atomic(path, &encode_png(DynamicImage::ImageLuma8(buf))?)
}

/// Writes interleaved 8-bit RGB data as PNG.
pub fn save_rgb(width: usize, height: usize, rgb: Vec<u8>, path: &Path) -> Result<()> {
    let buf = RgbImage::from_raw(width as u32, height as u32, rgb)
        .ok_or_else(|| Error::Shape(format!("rgb buffer does not match {width}x{height}")))?;
    write_atomic(path, &encode_png(DynamicImage::ImageRgb8(buf))?)
}
