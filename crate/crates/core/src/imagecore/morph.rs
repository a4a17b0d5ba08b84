use super::BinaryMask;

/// Binary dilation with a 5x5 square structuring element. The neighborhood is
/// clipped at the image border.
pub fn dilate_5x5(mask: &BinaryMask) -> BinaryMask {
    const R: usize = 2;
    let (w, h) = (mask.width, mask.height);
    // separable: max over rows, then over columns
    let mut horiz = vec![0u8; w * h];
    for y in 0..h {
        let row = &mask.data[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(R);
            let hi = (x + R).min(w - 1);
            horiz[y * w + x] = row[lo..=hi].iter().copied().max().unwrap_or(0);
        }
    }
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(R);
        let hi = (y + R).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).map(|yy| horiz[yy * w + x]).max().unwrap_or(0);
        }
    }
    BinaryMask { width: w, height: h, data: out }
}
