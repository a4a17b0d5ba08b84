//! Pixel grids shared by every stage of the pipeline.
//!
//! All grids are row-major with `data[y * width + x]`. Coordinates are `(x, y)`
//! with `x` the column and `y` the row; sub-pixel points use the same axes with
//! pixel centers at integer positions.

mod io;
mod morph;
mod normalize;
mod spline;

pub use io::{load_image, load_mask, load_probability, load_raw, save_image_u16, save_mask, save_probability, save_rgb};
pub use morph::dilate_5x5;
pub use normalize::{normalize_percentile, percentile_nearest_rank, Normalized};
pub use spline::{catmull_rom, rasterize_curve, resample_polyline};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A sub-pixel position `(x, y)` in image coordinates.
pub type Point = [f64; 2];

fn check_len(width: usize, height: usize, len: usize) -> Result<()> {
    if width.checked_mul(height) != Some(len) {
        return Err(Error::Shape(format!(
            "{width}x{height} grid needs {} values, got {len}",
            width * height
        )));
    }
    Ok(())
}

/// Unnormalized intensities as read from a detector or file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_len(width, height, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("raw image holds non-finite values".into()));
        }
        Ok(Self { width, height, data })
    }
}

/// A grayscale frame. Values are finite and lie in `[0, 1]` after normalization;
/// augmented copies may leave that range slightly.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_len(width, height, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("image holds non-finite values".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn is_normalized(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// A strictly binary mask; catheter pixels are 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_len(width, height, data.len())?;
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("mask values must be 0 or 1".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    /// Reads `(x, y)` treating everything outside the grid as background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.data[y as usize * self.width + x as usize] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// `true` when every foreground pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b)
    }

    /// Number of 8-connected foreground components.
    pub fn count_components(&self) -> usize {
        let (w, h) = (self.width, self.height);
        let mut seen = vec![false; w * h];
        let mut stack = Vec::new();
        let mut n = 0;
        for start in 0..w * h {
            if self.data[start] == 0 || seen[start] {
                continue;
            }
            n += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                let (x, y) = ((i % w) as i64, (i / w) as i64);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if self.get_signed(nx, ny) {
                            let j = ny as usize * w + nx as usize;
                            if !seen[j] {
                                seen[j] = true;
                                stack.push(j);
                            }
                        }
                    }
                }
            }
        }
        n
    }

    /// Interprets the mask as a probability map with values 0 and 1.
    pub fn to_probability(&self) -> ProbabilityMap {
        ProbabilityMap {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }
}

/// Network output: per-pixel catheter probability in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_len(width, height, data.len())?;
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("probabilities must lie in [0, 1]".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }
}

/// An ordered list of frames, optionally with one ground-truth mask per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Image>,
    masks: Option<Vec<BinaryMask>>,
}

impl FrameSequence {
    pub fn new(frames: Vec<Image>, masks: Option<Vec<BinaryMask>>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::InvalidArgument("sequence has no frames".into()));
        };
        let (w, h) = (first.width, first.height);
        if frames.iter().any(|f| f.width != w || f.height != h) {
            return Err(Error::Shape("frames of a sequence must share dimensions".into()));
        }
        if let Some(masks) = &masks {
            if masks.len() != frames.len() {
                return Err(Error::Shape(format!(
                    "{} masks for {} frames",
                    masks.len(),
                    frames.len()
                )));
            }
            if masks.iter().any(|m| m.width != w || m.height != h) {
                return Err(Error::Shape("mask dimensions differ from frames".into()));
            }
        }
        Ok(Self { frames, masks })
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn masks(&self) -> Option<&[BinaryMask]> {
        self.masks.as_deref()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.frames[0].width, self.frames[0].height)
    }

    /// The `count` frames ending at `index`, newest first. Frames before the
    /// start of the sequence repeat the earliest frame.
    pub fn stack(&self, index: usize, count: usize) -> Vec<&Image> {
        (0..count).map(|k| &self.frames[index.saturating_sub(k)]).collect()
    }
}

/// Physical size of one detector pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PixelSpacing(f64);

impl PixelSpacing {
    pub fn new(mm_per_pixel: f64) -> Result<Self> {
        if !(mm_per_pixel.is_finite() && mm_per_pixel > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pixel spacing must be finite and positive, got {mm_per_pixel}"
            )));
        }
        Ok(Self(mm_per_pixel))
    }

    pub fn mm_per_pixel(self) -> f64 {
        self.0
    }

    pub fn to_mm(self, px: f64) -> f64 {
        px * self.0
    }
}

impl Default for PixelSpacing {
    fn default() -> Self {
        Self(1.0)
    }
}
