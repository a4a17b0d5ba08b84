use crate::imagecore::{resample_polyline, Point};
use nalgebra::DMatrix;

/// Input points per control point of the smoothing spline.
pub const POINTS_PER_CONTROL: usize = 10;

const DEGREE: usize = 3;

/// Clamped uniform knot vector for `m` control points on `[0, 1]`.
fn knots(m: usize) -> Vec<f64> {
    let interior = m - DEGREE - 1;
    let mut k = vec![0.0; DEGREE + 1];
    k.extend((1..=interior).map(|i| i as f64 / (interior + 1) as f64));
    k.extend([1.0; DEGREE + 1]);
    k
}

/// Non-zero cubic basis values at `t` and the index of the first one.
fn basis(knots: &[f64], m: usize, t: f64) -> (usize, [f64; DEGREE + 1]) {
    let span = if t >= 1.0 {
        m - 1
    } else {
        (DEGREE..m).rev().find(|&s| knots[s] <= t).unwrap_or(DEGREE)
    };
    let mut n = [0.0; DEGREE + 1];
    let mut left = [0.0; DEGREE + 1];
    let mut right = [0.0; DEGREE + 1];
    n[0] = 1.0;
    for j in 1..=DEGREE {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let tmp = if denom == 0.0 { 0.0 } else { n[r] / denom };
            n[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        n[j] = saved;
    }
    (span - DEGREE, n)
}

fn chord_parameters(points: &[Point]) -> Vec<f64> {
    let mut acc = vec![0.0];
    for w in points.windows(2) {
        let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        acc.push(acc.last().unwrap() + d);
    }
    let total = *acc.last().unwrap();
    if total == 0.0 {
        let n = (points.len() - 1).max(1) as f64;
        return (0..points.len()).map(|i| i as f64 / n).collect();
    }
    acc.into_iter().map(|a| a / total).collect()
}

/// Least-squares cubic B-spline fit over chord-length parameters. Returns the
/// control polygon. The clamped knot vector keeps the curve ends close to the
/// first and last points.
pub fn fit_spline(points: &[Point]) -> Vec<Point> {
    let n = points.len();
    assert!(n > DEGREE, "a cubic fit needs at least four points");
    let m = (n / POINTS_PER_CONTROL).max(DEGREE + 1);
    let kv = knots(m);
    let params = chord_parameters(points);
    let mut a = DMatrix::<f64>::zeros(n, m);
    let mut rhs = DMatrix::<f64>::zeros(n, 2);
    for (row, (&t, p)) in params.iter().zip(points).enumerate() {
        let (start, vals) = basis(&kv, m, t);
        for (k, &v) in vals.iter().enumerate() {
            a[(row, start + k)] = v;
        }
        rhs[(row, 0)] = p[0];
        rhs[(row, 1)] = p[1];
    }
    let ata = a.transpose() * &a;
    let atb = a.transpose() * rhs;
    let solved = match ata.clone().cholesky() {
        Some(ch) => ch.solve(&atb),
        None => ata.svd(true, true).solve(&atb, 1e-12).expect("svd with both factors"),
    };
    (0..m).map(|j| [solved[(j, 0)], solved[(j, 1)]]).collect()
}

/// Evaluates the clamped uniform cubic B-spline with control polygon `ctrl` at `t`.
pub fn eval_spline(ctrl: &[Point], t: f64) -> Point {
    let m = ctrl.len();
    let (start, vals) = basis(&knots(m), m, t.clamp(0.0, 1.0));
    let mut p = [0.0, 0.0];
    for (k, v) in vals.iter().enumerate() {
        p[0] += v * ctrl[start + k][0];
        p[1] += v * ctrl[start + k][1];
    }
    p
}

/// Smooths an ordered point list with a least-squares cubic spline and
/// resamples it at 1 px arc-length spacing. Fewer than four points are
/// returned as given.
pub fn smooth_spline(points: &[Point]) -> Vec<Point> {
    if points.len() < DEGREE + 1 {
        return points.to_vec();
    }
    let ctrl = fit_spline(points);
    let length: f64 = points.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).sum();
    let samples = ((length * 4.0).ceil() as usize).max(16);
    let dense: Vec<Point> = (0..=samples).map(|i| eval_spline(&ctrl, i as f64 / samples as f64)).collect();
    resample_polyline(&dense, 1.0)
}
