use super::{Image, RawImage};

/// Result of percentile normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub image: Image,
    /// Set when the low and high percentiles coincide; the image is then all zero.
    pub degenerate: bool,
}

/// Nearest-rank percentile of an ascending-sorted slice: the value at
/// 1-based rank `ceil(p / 100 * n)`, clamped to `[1, n]`.
pub fn percentile_nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Maps intensities linearly so the `low` percentile becomes 0 and the `high`
/// percentile becomes 1, clamping outside that band.
pub fn normalize_percentile(raw: &RawImage, low: f64, high: f64) -> Normalized {
    assert!(!raw.data.is_empty(), "cannot normalize an empty image");
    assert!(low < high, "low percentile must be below high percentile");
    let mut sorted = raw.data.clone();
    sorted.sort_by(f64::total_cmp);
    let lo = percentile_nearest_rank(&sorted, low);
    let hi = percentile_nearest_rank(&sorted, high);
    let (w, h) = (raw.width, raw.height);
    if hi <= lo {
        return Normalized { image: Image::zeros(w, h), degenerate: true };
    }
    let span = hi - lo;
    let data = raw
        .data
        .iter()
        .map(|&v| {
            if v <= lo {
                0.0
            } else if v >= hi {
                1.0
            } else {
                (v - lo) / span
            }
        })
        .collect();
    Normalized { image: Image { width: w, height: h, data }, degenerate: false }
}
