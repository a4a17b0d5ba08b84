use super::{BinaryMask, Point};
use crate::error::{Error, Result};

#[inline]
fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[inline]
fn lerp2(a: Point, b: Point, wa: f64, wb: f64) -> Point {
    [wa * a[0] + wb * b[0], wa * a[1] + wb * b[1]]
}

/// Centripetal Catmull-Rom segment between `p[1]` and `p[2]`, evaluated at
/// `u` in `[0, 1]` (Barry-Goldman pyramid).
fn segment_point(p: [Point; 4], knots: [f64; 4], u: f64) -> Point {
    let [t0, t1, t2, t3] = knots;
    let t = t1 + u * (t2 - t1);
    let a1 = lerp2(p[0], p[1], (t1 - t) / (t1 - t0), (t - t0) / (t1 - t0));
    let a2 = lerp2(p[1], p[2], (t2 - t) / (t2 - t1), (t - t1) / (t2 - t1));
    let a3 = lerp2(p[2], p[3], (t3 - t) / (t3 - t2), (t - t2) / (t3 - t2));
    let b1 = lerp2(a1, a2, (t2 - t) / (t2 - t0), (t - t0) / (t2 - t0));
    let b2 = lerp2(a2, a3, (t3 - t) / (t3 - t1), (t - t1) / (t3 - t1));
    lerp2(b1, b2, (t2 - t) / (t2 - t1), (t - t1) / (t2 - t1))
}

/// Densely samples the centripetal Catmull-Rom spline interpolating `points`.
///
/// The end tangents come from reflected phantom points, so a two-point input
/// yields the straight segment. Consecutive duplicate points are ignored.
/// Samples are spaced at most about `step` apart along the curve, and the
/// first and last samples are exactly the first and last input points.
pub fn catmull_rom(points: &[Point], step: f64) -> Vec<Point> {
    let mut pts: Vec<Point> = Vec::with_capacity(points.len());
    for &p in points {
        if pts.last().is_none_or(|&q| dist(p, q) > 1e-9) {
            pts.push(p);
        }
    }
    if pts.len() < 2 {
        return pts;
    }
    let n = pts.len();
    let reflect = |a: Point, b: Point| [2.0 * a[0] - b[0], 2.0 * a[1] - b[1]];
    let mut ext = Vec::with_capacity(n + 2);
    ext.push(reflect(pts[0], pts[1]));
    ext.extend_from_slice(&pts);
    ext.push(reflect(pts[n - 1], pts[n - 2]));

    let mut out = vec![pts[0]];
    for i in 0..n - 1 {
        let p = [ext[i], ext[i + 1], ext[i + 2], ext[i + 3]];
        let mut knots = [0.0; 4];
        for k in 1..4 {
            knots[k] = knots[k - 1] + dist(p[k - 1], p[k]).sqrt();
        }
        // a centripetal segment is never longer than ~1.6x its chord
        let samples = ((2.0 * dist(p[1], p[2]) / step).ceil() as usize).max(1);
        for s in 1..samples {
            out.push(segment_point(p, knots, s as f64 / samples as f64));
        }
        out.push(p[2]);
    }
    out
}

/// Resamples a polyline at uniform arc-length `spacing`, keeping both
/// endpoints. The last gap may be shorter than `spacing`.
pub fn resample_polyline(points: &[Point], spacing: f64) -> Vec<Point> {
    if points.len() < 2 {
        return points.to_vec();
    }
    let mut out = vec![points[0]];
    let mut carried = 0.0; // arc length since the last emitted point
    for w in points.windows(2) {
        let seg = dist(w[0], w[1]);
        if seg <= 0.0 {
            continue;
        }
        let mut along = spacing - carried;
        while along <= seg {
            let f = along / seg;
            out.push(lerp2(w[0], w[1], 1.0 - f, f));
            along += spacing;
        }
        carried = seg - (along - spacing);
    }
    let last = *points.last().unwrap();
    if dist(*out.last().unwrap(), last) > 1e-9 {
        if dist(*out.last().unwrap(), last) < 1e-3 * spacing {
            out.pop();
        }
        out.push(last);
    }
    out
}

#[inline]
fn adjacent8(a: (i64, i64), b: (i64, i64)) -> bool {
    (a.0 - b.0).abs() <= 1 && (a.1 - b.1).abs() <= 1
}

/// Rasterizes the centripetal Catmull-Rom spline through `points` as a thin,
/// 8-connected pixel chain.
pub fn rasterize_curve(points: &[Point], width: usize, height: usize) -> Result<BinaryMask> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("rasterize_curve needs at least two points".into()));
    }
    for p in points {
        let inside = p[0].is_finite()
            && p[1].is_finite()
            && p[0] >= -0.5
            && p[1] >= -0.5
            && p[0] <= width as f64 - 0.5
            && p[1] <= height as f64 - 0.5;
        if !inside {
            return Err(Error::OutOfBounds { x: p[0], y: p[1], width, height });
        }
    }
    let samples = catmull_rom(points, 0.1);
    let mut chain: Vec<(i64, i64)> = Vec::with_capacity(samples.len() / 4);
    for s in samples {
        // clamping keeps the chain connected where the spline overshoots the frame
        let px = (
            (s[0].round() as i64).clamp(0, width as i64 - 1),
            (s[1].round() as i64).clamp(0, height as i64 - 1),
        );
        if chain.last() == Some(&px) {
            continue;
        }
        // drop staircase corners: keep the chain 8-connected but one pixel wide
        while chain.len() >= 2 && adjacent8(chain[chain.len() - 2], px) {
            chain.pop();
        }
        if chain.last() != Some(&px) {
            chain.push(px);
        }
    }
    let mut mask = BinaryMask::zeros(width, height);
    for (x, y) in chain {
        mask.set(x as usize, y as usize, true);
    }
    Ok(mask)
}
