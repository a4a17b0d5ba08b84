use crate::imagecore::{BinaryMask, ProbabilityMap};

/// Pixel is 1 iff the probability is at least `alpha`.
pub fn threshold(pm: &ProbabilityMap, alpha: f64) -> BinaryMask {
    BinaryMask { width: pm.width, height: pm.height, data: pm.data.iter().map(|&p| u8::from(p >= alpha)).collect() }
}

// Padded working copy so neighbor reads need no bounds checks.
struct Padded {
    w: usize,
    data: Vec<u8>,
}

impl Padded {
    fn new(mask: &BinaryMask) -> Self {
        let w = mask.width + 2;
        let mut data = vec![0u8; w * (mask.height + 2)];
        for y in 0..mask.height {
            data[(y + 1) * w + 1..(y + 1) * w + 1 + mask.width]
                .copy_from_slice(&mask.data[y * mask.width..(y + 1) * mask.width]);
        }
        Self { w, data }
    }

    fn unpad(&self, width: usize, height: usize) -> BinaryMask {
        let mut out = BinaryMask::zeros(width, height);
        for y in 0..height {
            out.data[y * width..(y + 1) * width].copy_from_slice(&self.data[(y + 1) * self.w + 1..(y + 1) * self.w + 1 + width]);
        }
        out
    }

    /// P2..P9: N, NE, E, SE, S, SW, W, NW.
    #[inline]
    fn ring(&self, i: usize) -> [u8; 8] {
        let w = self.w;
        let d = &self.data;
        [d[i - w], d[i - w + 1], d[i + 1], d[i + w + 1], d[i + w], d[i + w - 1], d[i - 1], d[i - w - 1]]
    }
}

/// Zhang-Suen two-subiteration thinning, iterated until no pixel changes.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let mut img = Padded::new(mask);
    let mut live: Vec<usize> = (0..img.data.len()).filter(|&i| img.data[i] == 1).collect();
    let mut doomed = Vec::new();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            doomed.clear();
            for &i in &live {
                let p = img.ring(i);
                let b: u8 = p.iter().sum();
                if !(2..=6).contains(&b) {
                    continue;
                }
                let a = (0..8).filter(|&k| p[k] == 0 && p[(k + 1) % 8] == 1).count();
                if a != 1 {
                    continue;
                }
                let (p2, p4, p6, p8) = (p[0], p[2], p[4], p[6]);
                let ok = if pass == 0 {
                    p2 * p4 * p6 == 0 && p4 * p6 * p8 == 0
                } else {
                    p2 * p4 * p8 == 0 && p2 * p6 * p8 == 0
                };
                if ok {
                    doomed.push(i);
                }
            }
            if !doomed.is_empty() {
                changed = true;
                for &i in &doomed {
                    img.data[i] = 0;
                }
                live.retain(|&i| img.data[i] == 1);
            }
        }
        if !changed {
            break;
        }
    }
    img.unpad(mask.width, mask.height)
}

/// Cleans a skeleton for branch extraction.
///
/// First removes staircase corner pixels: a pixel with two perpendicular
/// 4-neighbors whose remaining neighbors stay 8-connected without it.
/// Afterwards every pixel of a diagonal run has at most two neighbors. Then
/// breaks any 2x2 block that survived thinning by removing the block pixel
/// with the fewest neighbors. Pixels are visited in raster order and updated
/// in place.
pub fn remove_staircase(skel: &BinaryMask) -> BinaryMask {
    let mut img = Padded::new(skel);
    let (w, h) = (skel.width, skel.height);
    let pw = img.w;
    for y in 0..h {
        for x in 0..w {
            let i = (y + 1) * pw + x + 1;
            if img.data[i] == 0 {
                continue;
            }
            let p = img.ring(i);
            let (n, e, s, wst) = (p[0], p[2], p[4], p[6]);
            let corner = (n & e) | (e & s) | (s & wst) | (wst & n);
            if corner == 1 && ring_components(&p) == 1 {
                img.data[i] = 0;
            }
        }
    }
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let i = (y + 1) * pw + x + 1;
            let block = [i, i + 1, i + pw, i + pw + 1];
            if block.iter().all(|&k| img.data[k] == 1) {
                let victim = *block.iter().min_by_key(|&&k| img.ring(k).iter().sum::<u8>()).expect("four pixels");
                img.data[victim] = 0;
            }
        }
    }
    img.unpad(w, h)
}

// 8-connected components among the ring pixels, ignoring the center.
fn ring_components(p: &[u8; 8]) -> usize {
    // ring positions as offsets
    const OFF: [(i32, i32); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];
    let mut label = [usize::MAX; 8];
    let mut count = 0;
    for start in 0..8 {
        if p[start] == 0 || label[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        label[start] = count;
        while let Some(k) = stack.pop() {
            for j in 0..8 {
                let adjacent = (OFF[k].0 - OFF[j].0).abs() <= 1 && (OFF[k].1 - OFF[j].1).abs() <= 1;
                if p[j] == 1 && label[j] == usize::MAX && adjacent {
                    label[j] = count;
                    stack.push(j);
                }
            }
        }
        count += 1;
    }
    count
}
