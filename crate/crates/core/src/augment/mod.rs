//! On-the-fly augmentation of training samples.
//!
//! An augmented sample receives one composed affine warp (flips, rotation about
//! the image center, isotropic scale, translation), applied identically to the
//! input frames and to the mask, followed by an intensity shift and additive
//! Gaussian noise on the frames only. The mask is re-binarized at 0.5.

mod warp;

pub use warp::{warp, Interpolation, WarpParams};

use crate::error::{Error, Result};
use crate::imagecore::{BinaryMask, Image};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Probability that a sample is augmented at all.
    pub p_augment: f64,
    /// Probability of each of the horizontal and vertical flips.
    pub p_flip: f64,
    /// Rotation drawn uniformly from `[-rot_deg, rot_deg]`.
    pub rot_deg: f64,
    /// Scale factor range.
    pub scale: [f64; 2],
    /// Translation drawn from `[-translate_frac, translate_frac]` times the image size, per axis.
    pub translate_frac: f64,
    /// Additive intensity shift drawn from `[-intensity_shift, intensity_shift]`.
    pub intensity_shift: f64,
    pub noise_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            p_augment: 0.5,
            p_flip: 0.5,
            rot_deg: 9.0,
            scale: [0.9, 1.1],
            translate_frac: 0.16,
            intensity_shift: 0.07,
            noise_sigma: 0.03,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let ok = prob(self.p_augment)
            && prob(self.p_flip)
            && (0.0..=180.0).contains(&self.rot_deg)
            && self.scale[0] > 0.0
            && self.scale[0] <= self.scale[1]
            && self.scale[1].is_finite()
            && self.translate_frac >= 0.0
            && self.translate_frac.is_finite()
            && self.intensity_shift >= 0.0
            && self.intensity_shift.is_finite()
            && self.noise_sigma >= 0.0
            && self.noise_sigma.is_finite();
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid augmentation settings {self:?}")));
        }
        Ok(())
    }
}

/// The random draws of one augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub warp: WarpParams,
    pub intensity_shift: f64,
}

fn symmetric(rng: &mut impl Rng, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..=half)
    } else {
        0.0
    }
}

/// Draws the augmentation for one sample, or `None` for the untouched branch.
pub fn sample_params(cfg: &AugmentConfig, width: usize, height: usize, rng: &mut impl Rng) -> Option<AugmentParams> {
    if rng.random::<f64>() >= cfg.p_augment {
        return None;
    }
    let flip_h = rng.random::<f64>() < cfg.p_flip;
    let flip_v = rng.random::<f64>() < cfg.p_flip;
    let angle_deg = symmetric(rng, cfg.rot_deg);
    let scale = if cfg.scale[1] > cfg.scale[0] { rng.random_range(cfg.scale[0]..=cfg.scale[1]) } else { cfg.scale[0] };
    let tx = symmetric(rng, cfg.translate_frac) * width as f64;
    let ty = symmetric(rng, cfg.translate_frac) * height as f64;
    let intensity_shift = symmetric(rng, cfg.intensity_shift);
    Some(AugmentParams { warp: WarpParams { flip_h, flip_v, angle_deg, scale, tx, ty }, intensity_shift })
}

/// Applies drawn parameters: the warp to frames and mask, then shift and noise
/// (standard deviation `noise_sigma`, drawn from `rng`) to the frames.
pub fn apply_params(
    frames: &[Image],
    mask: &BinaryMask,
    params: &AugmentParams,
    noise_sigma: f64,
    rng: &mut impl Rng,
) -> (Vec<Image>, BinaryMask) {
    let noise = Normal::new(0.0, noise_sigma.max(0.0)).expect("finite sigma");
    let frames = frames
        .iter()
        .map(|f| {
            let mut out = warp(f, &params.warp, Interpolation::Bilinear);
            for v in &mut out.data {
                *v += params.intensity_shift;
                if noise_sigma > 0.0 {
                    *v += noise.sample(rng);
                }
            }
            out
        })
        .collect();
    let soft = Image { width: mask.width, height: mask.height, data: mask.data.iter().map(|&v| v as f64).collect() };
    let warped = warp(&soft, &params.warp, Interpolation::Bilinear);
    let mask = BinaryMask {
        width: mask.width,
        height: mask.height,
        data: warped.data.iter().map(|&v| u8::from(v >= 0.5)).collect(),
    };
    (frames, mask)
}

/// Augments one sample with probability `p_augment`; otherwise returns copies
/// of the inputs.
pub fn augment_sample(
    frames: &[Image],
    mask: &BinaryMask,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> (Vec<Image>, BinaryMask) {
    assert!(
        frames.iter().all(|f| (f.width, f.height) == (mask.width, mask.height)),
        "frames and mask must share dimensions"
    );
    match sample_params(cfg, mask.width, mask.height, rng) {
        None => (frames.to_vec(), mask.clone()),
        Some(p) => apply_params(frames, mask, &p, cfg.noise_sigma, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::{dilate_5x5, rasterize_curve};
    use crate::metrics::dice_coefficient;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(rng: &mut ChaCha8Rng) -> (Vec<Image>, BinaryMask) {
        let frames = (0..4)
            .map(|_| Image { width: 32, height: 24, data: (0..32 * 24).map(|_| rng.random::<f64>()).collect() })
            .collect();
        let mask = dilate_5x5(&rasterize_curve(&[[0.0, 3.0], [12.0, 10.0], [25.0, 20.0]], 32, 24).unwrap());
        (frames, mask)
    }

    #[test]
    fn no_augment_branch_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (frames, mask) = sample(&mut rng);
        let cfg = AugmentConfig { p_augment: 0.0, ..Default::default() };
        let (f2, m2) = augment_sample(&frames, &mask, &cfg, &mut rng);
        assert_eq!((f2, m2), (frames, mask));
    }

    #[test]
    fn double_flip_is_an_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (frames, mask) = sample(&mut rng);
        let p = AugmentParams {
            warp: WarpParams { flip_h: true, flip_v: true, ..WarpParams::identity() },
            intensity_shift: 0.0,
        };
        let (f1, m1) = apply_params(&frames, &mask, &p, 0.0, &mut rng);
        assert_ne!(m1, mask);
        assert_eq!(f1[0].get(0, 0), frames[0].get(31, 23));
        let (f2, m2) = apply_params(&f1, &m1, &p, 0.0, &mut rng);
        assert_eq!(m2, mask);
        assert_eq!(f2, frames);
    }

    #[test]
    fn rotation_round_trip_keeps_overlap() {
        let mask = dilate_5x5(&rasterize_curve(&[[5.0, 40.0], [30.0, 20.0], [58.0, 30.0]], 64, 64).unwrap());
        let rot = |m: &BinaryMask, a: f64| {
            let p = AugmentParams { warp: WarpParams { angle_deg: a, ..WarpParams::identity() }, intensity_shift: 0.0 };
            apply_params(&[], m, &p, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).1
        };
        let back = rot(&rot(&mask, 9.0), -9.0);
        assert!(dice_coefficient(&mask, &back) >= 0.9);
    }

    #[test]
    fn mask_stays_binary_and_shift_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (frames, mask) = sample(&mut rng);
        let cfg = AugmentConfig { p_augment: 1.0, noise_sigma: 0.0, ..Default::default() };
        for _ in 0..50 {
            let (f, m) = augment_sample(&frames, &mask, &cfg, &mut rng);
            assert!(m.data.iter().all(|&v| v <= 1));
            assert!(f.iter().flat_map(|i| &i.data).all(|&v| (-0.07..=1.07).contains(&v)));
        }
    }

    #[test]
    fn noise_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let frame = Image::zeros(1000, 1000);
        let mask = BinaryMask::zeros(1000, 1000);
        let p = AugmentParams { warp: WarpParams::identity(), intensity_shift: 0.0 };
        let (f, _) = apply_params(&[frame], &mask, &p, 0.03, &mut rng);
        let n = f[0].data.len() as f64;
        let mean = f[0].data.iter().sum::<f64>() / n;
        let sd = (f[0].data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() <= 0.001, "mean {mean}");
        assert!((sd - 0.03).abs() <= 0.005, "sd {sd}");
    }

    #[test]
    fn draws_respect_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = AugmentConfig { p_augment: 1.0, ..Default::default() };
        for _ in 0..500 {
            let p = sample_params(&cfg, 100, 50, &mut rng).unwrap();
            assert!(p.warp.angle_deg.abs() <= 9.0);
            assert!((0.9..=1.1).contains(&p.warp.scale));
            assert!(p.warp.tx.abs() <= 16.0 + 1e-9 && p.warp.ty.abs() <= 8.0 + 1e-9);
            assert!(p.intensity_shift.abs() <= 0.07);
        }
    }

    #[test]
    fn frames_and_mask_share_geometry() {
        // warp a coordinate grid through both paths and compare
        let (w, h) = (40, 30);
        let p = AugmentParams {
            warp: WarpParams { flip_h: true, flip_v: false, angle_deg: 7.0, scale: 1.05, tx: 3.0, ty: -2.0 },
            intensity_shift: 0.0,
        };
        for y in (2..h - 2).step_by(5) {
            for x in (2..w - 2).step_by(5) {
                let mut mask = BinaryMask::zeros(w, h);
                mask.set(x, y, true);
                let frame = Image { width: w, height: h, data: mask.data.iter().map(|&v| v as f64).collect() };
                let (f, m) = apply_params(&[frame], &mask, &p, 0.0, &mut ChaCha8Rng::seed_from_u64(0));
                let expected: Vec<u8> = f[0].data.iter().map(|&v| u8::from(v >= 0.5)).collect();
                assert_eq!(m.data, expected);
            }
        }
    }
}
