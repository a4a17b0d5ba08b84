use crate::imagecore::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Bilinear,
    Nearest,
}

/// A similarity transform about the image center with optional axis flips.
/// Forward map: `p' = c + t + R(angle) * scale * F * (p - c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpParams {
    pub flip_h: bool,
    pub flip_v: bool,
    pub angle_deg: f64,
    pub scale: f64,
    /// Translation in pixels.
    pub tx: f64,
    pub ty: f64,
}

impl WarpParams {
    pub fn identity() -> Self {
        Self { flip_h: false, flip_v: false, angle_deg: 0.0, scale: 1.0, tx: 0.0, ty: 0.0 }
    }
}

impl Default for WarpParams {
    fn default() -> Self {
        Self::identity()
    }
}

#[inline]
fn sample_zero(img: &Image, x: i64, y: i64) -> f64 {
    if x < 0 || y < 0 || x >= img.width as i64 || y >= img.height as i64 {
        0.0
    } else {
        img.data[y as usize * img.width + x as usize]
    }
}

/// Resamples `img` under the composed transform in a single pass. Samples
/// falling outside the source read as zero.
pub fn warp(img: &Image, p: &WarpParams, interpolation: Interpolation) -> Image {
    assert!(p.angle_deg.abs() <= 180.0, "angle out of range");
    assert!(p.scale > 0.0, "scale must be positive");
    let (w, h) = (img.width, img.height);
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let (sin, cos) = p.angle_deg.to_radians().sin_cos();
    let inv_scale = 1.0 / p.scale;
    let fx = if p.flip_h { -1.0 } else { 1.0 };
    let fy = if p.flip_v { -1.0 } else { 1.0 };
    let mut out = Image::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx - p.tx;
            let dy = y as f64 - cy - p.ty;
            // inverse rotation, then inverse scale, then flip
            let rx = cos * dx + sin * dy;
            let ry = -sin * dx + cos * dy;
            let sx = cx + fx * rx * inv_scale;
            let sy = cy + fy * ry * inv_scale;
            out.data[y * w + x] = match interpolation {
                Interpolation::Nearest => sample_zero(img, sx.round() as i64, sy.round() as i64),
                Interpolation::Bilinear => {
                    let (x0, y0) = (sx.floor(), sy.floor());
                    let (ax, ay) = (sx - x0, sy - y0);
                    let (x0, y0) = (x0 as i64, y0 as i64);
                    let top = sample_zero(img, x0, y0) * (1.0 - ax) + sample_zero(img, x0 + 1, y0) * ax;
                    let bottom = sample_zero(img, x0, y0 + 1) * (1.0 - ax) + sample_zero(img, x0 + 1, y0 + 1) * ax;
                    top * (1.0 - ay) + bottom * ay
                }
            };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = Image { width: 17, height: 12, data: (0..17 * 12).map(|_| rng.random()).collect() };
        for interp in [Interpolation::Bilinear, Interpolation::Nearest] {
            assert_eq!(warp(&img, &WarpParams::identity(), interp), img);
        }
    }

    #[test]
    fn translation_moves_pixel() {
        let mut img = Image::zeros(20, 20);
        img.data[10 * 20 + 4] = 1.0;
        let out = warp(&img, &WarpParams { tx: 5.0, ..WarpParams::identity() }, Interpolation::Bilinear);
        assert_eq!(out.get(9, 10), 1.0);
        assert_eq!(out.data.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn scaling_doubles_disk_radius() {
        let n = 101;
        let c = 50.0;
        let r = 10.0;
        let mut img = Image::zeros(n, n);
        for y in 0..n {
            for x in 0..n {
                if ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt() <= r {
                    img.data[y * n + x] = 1.0;
                }
            }
        }
        let out = warp(&img, &WarpParams { scale: 2.0, ..WarpParams::identity() }, Interpolation::Bilinear);
        let area = out.data.iter().filter(|&&v| v >= 0.5).count() as f64;
        let radius = (area / std::f64::consts::PI).sqrt();
        assert!((radius - 2.0 * r).abs() <= 1.0, "radius {radius}");
    }

    #[test]
    fn rotation_by_90_degrees_permutes_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = Image { width: 9, height: 9, data: (0..81).map(|_| rng.random()).collect() };
        let out = warp(&img, &WarpParams { angle_deg: 90.0, ..WarpParams::identity() }, Interpolation::Nearest);
        let mut a: Vec<f64> = img.data.clone();
        let mut b: Vec<f64> = out.data.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
    }
}
