//! Synthetic fluoroscopy-like sequences with exact ground truth.
//!
//! Each sequence holds one smooth curve entering from an image border, drawn
//! as a dark Gaussian ridge over a smooth cosine-grating background with
//! additive noise. Between frames the control points jitter slightly. Masks
//! are built from the ground-truth centerline with [`rasterize_curve`] and
//! [`dilate_5x5`]. With probability `loop_probability` the curve crosses
//! itself once.

mod dataset;
mod shape;

pub use dataset::{
    generate_dataset, list_sequences, load_sequence, sequence_name, sequence_rng, Manifest, SequenceData, MANIFEST,
};
pub use shape::{random_curve, CurveShape};

use crate::centerline::Centerline;
use crate::error::{Error, Result};
use crate::imagecore::{
    catmull_rom, dilate_5x5, normalize_percentile, rasterize_curve, resample_polyline, FrameSequence, Image, Point,
    RawImage,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub image_size: usize,
    pub frames_per_seq: usize,
    /// Inclusive range of control points for curves without a loop.
    pub n_control_points: [usize; 2],
    /// Range of the per-sequence jitter amplitude of control points, in pixels.
    pub motion_px: [f64; 2],
    /// Range of the ridge depth below the background.
    pub catheter_intensity: [f64; 2],
    /// Range of the Gaussian cross-section standard deviation, in pixels.
    pub profile_sigma: [f64; 2],
    /// Amplitude of the background gratings; 0 gives a flat background.
    pub background_texture_scale: f64,
    pub noise_sigma: f64,
    pub loop_probability: f64,
    /// Number of broad horizontal dark bands added to the background.
    pub distractor_bands: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            frames_per_seq: 4,
            n_control_points: [4, 8],
            motion_px: [0.0, 1.5],
            catheter_intensity: [0.2, 0.4],
            profile_sigma: [2.0, 3.0],
            background_texture_scale: 0.15,
            noise_sigma: 0.03,
            loop_probability: 0.2,
            distractor_bands: 0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let range = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && 0.0 <= r[0] && r[0] <= r[1];
        let problem = if self.image_size < 32 {
            Some("image_size must be at least 32")
        } else if self.frames_per_seq == 0 {
            Some("frames_per_seq must be at least 1")
        } else if self.n_control_points[0] < 2 || self.n_control_points[0] > self.n_control_points[1] {
            Some("n_control_points must be an increasing range starting at 2 or more")
        } else if !range(self.motion_px) || !range(self.catheter_intensity) || !range(self.profile_sigma) {
            Some("ranges must be finite, non-negative and increasing")
        } else if self.profile_sigma[0] <= 0.0 || self.catheter_intensity[1] <= 0.0 {
            Some("profile_sigma and catheter_intensity must be positive")
        } else if !(self.background_texture_scale >= 0.0 && self.noise_sigma >= 0.0) {
            Some("background_texture_scale and noise_sigma must be non-negative")
        } else if !(0.0..=1.0).contains(&self.loop_probability) {
            Some("loop_probability must lie in [0, 1]")
        } else {
            None
        };
        match problem {
            Some(p) => Err(Error::InvalidArgument(p.into())),
            None => Ok(()),
        }
    }
}

/// One generated sequence with per-frame ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub sequence: FrameSequence,
    /// Ground-truth centerlines, tip first, resampled at 1 px.
    pub centerlines: Vec<Centerline>,
    pub has_loop: bool,
}

fn uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

/// Dense samples of the curve through `ctrl`, tip first, at 1 px spacing.
pub fn centerline_points(ctrl: &[Point]) -> Vec<Point> {
    let mut dense = catmull_rom(ctrl, 0.05);
    dense.reverse();
    resample_polyline(&dense, 1.0)
}

struct Background {
    gratings: Vec<([f64; 2], f64, f64)>,
    bands: Vec<(f64, f64, f64)>,
    level: f64,
}

impl Background {
    fn random(cfg: &SynthConfig, rng: &mut impl Rng) -> Self {
        let n = rng.random_range(3..=5);
        let size = cfg.image_size as f64;
        let gratings = (0..n)
            .map(|_| {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let cycles = rng.random_range(0.3..2.0);
                let k = 2.0 * std::f64::consts::PI * cycles / size;
                let amp = cfg.background_texture_scale * rng.random_range(0.3..1.0) / n as f64;
                ([k * angle.cos(), k * angle.sin()], rng.random_range(0.0..std::f64::consts::TAU), amp)
            })
            .collect();
        let bands = (0..cfg.distractor_bands)
            .map(|_| (rng.random_range(0.0..size), rng.random_range(4.0..10.0), rng.random_range(0.05..0.15)))
            .collect();
        Self { gratings, bands, level: 0.65 }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let mut v = self.level;
        for (k, phase, amp) in &self.gratings {
            v += amp * (k[0] * x + k[1] * y + phase).cos();
        }
        for (center, width, depth) in &self.bands {
            v -= depth * (-((y - center) / width).powi(2)).exp();
        }
        v
    }
}

/// Renders one frame: background minus a Gaussian ridge along the curve,
/// plus noise, then percentile-normalized.
fn render(
    cfg: &SynthConfig,
    bg: &Background,
    curve: &[Point],
    depth: f64,
    sigma: f64,
    rng: &mut impl Rng,
) -> Image {
    let n = cfg.image_size;
    let reach = 3.5 * sigma;
    let mut d2 = vec![f64::INFINITY; n * n];
    for p in resample_polyline(curve, 0.25) {
        let x0 = ((p[0] - reach).floor().max(0.0)) as usize;
        let x1 = ((p[0] + reach).ceil().min(n as f64 - 1.0)) as usize;
        let y0 = ((p[1] - reach).floor().max(0.0)) as usize;
        let y1 = ((p[1] + reach).ceil().min(n as f64 - 1.0)) as usize;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dd = (x as f64 - p[0]).powi(2) + (y as f64 - p[1]).powi(2);
                let cell = &mut d2[y * n + x];
                if dd < *cell {
                    *cell = dd;
                }
            }
        }
    }
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
    let mut data = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let mut v = bg.at(x as f64, y as f64) - depth * (-d2[y * n + x] / (2.0 * sigma * sigma)).exp();
            if cfg.noise_sigma > 0.0 {
                v += noise.sample(rng);
            }
            data.push(v);
        }
    }
    let raw = RawImage { width: n, height: n, data };
    normalize_percentile(&raw, 2.0, 98.0).image
}

/// Generates one sequence.
pub fn generate_sequence(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<SyntheticSequence> {
    cfg.validate()?;
    let n = cfg.image_size;
    let has_loop = rng.random::<f64>() < cfg.loop_probability;
    let base = random_curve(cfg, has_loop, rng);
    let motion = uniform(rng, cfg.motion_px);
    let depth = uniform(rng, cfg.catheter_intensity);
    let sigma = uniform(rng, cfg.profile_sigma);
    let bg = Background::random(cfg, rng);
    let mut frames = Vec::with_capacity(cfg.frames_per_seq);
    let mut masks = Vec::with_capacity(cfg.frames_per_seq);
    let mut centerlines = Vec::with_capacity(cfg.frames_per_seq);
    for _ in 0..cfg.frames_per_seq {
        let ctrl = base.jittered(cfg, motion, rng);
        let points = centerline_points(&ctrl);
        let mask = dilate_5x5(&rasterize_curve(&points, n, n)?);
        frames.push(render(cfg, &bg, &points, depth, sigma, rng));
        masks.push(mask);
        centerlines.push(Centerline { width: n, height: n, points });
    }
    Ok(SyntheticSequence { sequence: FrameSequence::new(frames, Some(masks))?, centerlines, has_loop })
}
