use super::SynthConfig;
use crate::imagecore::{catmull_rom, Point};
use rand::Rng;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

/// Parameter of the self-crossing of the prolate cycloid with `d = 3r`:
/// the positive root of `t = 3 sin t`.
const CROSSING_T: f64 = 2.278_862_660_075_828;
const MAX_ATTEMPTS: usize = 10_000;

/// Control points of one curve, entry first. The entry lies on the border.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveShape {
    pub control: Vec<Point>,
    /// Unit direction along the border at the entry point.
    pub border_tangent: Point,
    /// Location of the self-crossing, if any.
    pub crossing: Option<Point>,
}

impl CurveShape {
    /// Control points displaced by up to `motion` pixels per coordinate. The
    /// entry slides along the border only. Falls back to the unjittered
    /// points if no valid draw is found.
    pub fn jittered(&self, cfg: &SynthConfig, motion: f64, rng: &mut impl Rng) -> Vec<Point> {
        if motion <= 0.0 {
            return self.control.clone();
        }
        for _ in 0..100 {
            let mut pts = self.control.clone();
            let s = rng.random_range(-motion..=motion);
            pts[0] = [pts[0][0] + s * self.border_tangent[0], pts[0][1] + s * self.border_tangent[1]];
            for p in &mut pts[1..] {
                p[0] += rng.random_range(-motion..=motion);
                p[1] += rng.random_range(-motion..=motion);
            }
            if inside(&catmull_rom(&pts, 0.25), cfg.image_size) {
                return pts;
            }
        }
        self.control.clone()
    }
}

fn inside(points: &[Point], size: usize) -> bool {
    let hi = size as f64 - 1.0;
    points.iter().all(|p| p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= hi && p[1] <= hi)
}

fn border_distance(p: Point, size: usize) -> f64 {
    let hi = size as f64 - 1.0;
    p[0].min(p[1]).min(hi - p[0]).min(hi - p[1])
}

/// Pairs of samples far apart along the curve must stay apart in the plane,
/// except near the crossing.
fn well_separated(dense: &[Point], crossing: Option<Point>, min_gap: f64) -> bool {
    const ARC_GAP: f64 = 30.0;
    let mut arc = vec![0.0; dense.len()];
    for i in 1..dense.len() {
        arc[i] = arc[i - 1] + (dense[i][0] - dense[i - 1][0]).hypot(dense[i][1] - dense[i - 1][1]);
    }
    let near_crossing = |p: Point| crossing.is_some_and(|c| (p[0] - c[0]).hypot(p[1] - c[1]) < 2.0 * min_gap);
    for i in 0..dense.len() {
        if near_crossing(dense[i]) {
            continue;
        }
        for j in i + 1..dense.len() {
            if arc[j] - arc[i] < ARC_GAP || near_crossing(dense[j]) {
                continue;
            }
            if (dense[i][0] - dense[j][0]).hypot(dense[i][1] - dense[j][1]) < min_gap {
                return false;
            }
        }
    }
    true
}

/// Random entry point on the border with its inward normal and border tangent.
fn entry(size: usize, rng: &mut impl Rng) -> (Point, f64, Point) {
    let hi = size as f64 - 1.0;
    let along = rng.random_range(0.15..0.85) * hi;
    match rng.random_range(0..4) {
        0 => ([along, 0.0], FRAC_PI_2, [1.0, 0.0]),
        1 => ([along, hi], -FRAC_PI_2, [1.0, 0.0]),
        2 => ([0.0, along], 0.0, [0.0, 1.0]),
        _ => ([hi, along], PI, [0.0, 1.0]),
    }
}

fn open_curve(cfg: &SynthConfig, rng: &mut impl Rng) -> CurveShape {
    let size = cfg.image_size as f64;
    let (start, normal, tangent) = entry(cfg.image_size, rng);
    let k = rng.random_range(cfg.n_control_points[0]..=cfg.n_control_points[1]);
    let length = rng.random_range(0.6..1.0) * size;
    let step = length / (k - 1) as f64;
    let mut heading = normal + rng.random_range(-0.5..0.5);
    let mut control = vec![start];
    for _ in 1..k {
        let p = *control.last().unwrap();
        control.push([p[0] + step * heading.cos(), p[1] + step * heading.sin()]);
        heading += rng.random_range(-0.6..0.6);
    }
    CurveShape { control, border_tangent: tangent, crossing: None }
}

/// One loop of a prolate cycloid, randomly rotated and placed, preceded by a
/// straight run back to the border along the start tangent.
fn loop_curve(cfg: &SynthConfig, rng: &mut impl Rng) -> Option<CurveShape> {
    let size = cfg.image_size as f64;
    let hi = size - 1.0;
    let d = size * rng.random_range(0.18..0.23);
    let r = d / 3.0;
    let lead = rng.random_range(0.6..1.2);
    let tail = rng.random_range(0.8..1.6);
    let (t0, t1) = (-CROSSING_T - lead, CROSSING_T + tail);
    let angle = rng.random_range(0.0..TAU);
    let (s, c) = angle.sin_cos();
    let center = [rng.random_range(0.3..0.7) * hi, rng.random_range(0.3..0.7) * hi];
    let place = |t: f64| {
        let (x, y) = (r * t - d * t.sin(), -d * t.cos());
        [center[0] + c * x - s * y, center[1] + s * x + c * y]
    };
    let n = ((t1 - t0) / 0.35).ceil() as usize;
    let body: Vec<Point> = (0..=n).map(|i| place(t0 + (t1 - t0) * i as f64 / n as f64)).collect();
    let crossing = place(CROSSING_T);

    // walk back from the first body point to the border
    let p0 = body[0];
    let dir = [p0[0] - body[1][0], p0[1] - body[1][1]];
    let norm = dir[0].hypot(dir[1]);
    let dir = [dir[0] / norm, dir[1] / norm];
    let mut reach = f64::INFINITY;
    for (p, v) in [(p0[0], dir[0]), (p0[1], dir[1])] {
        if v < -1e-9 {
            reach = reach.min(-p / v);
        } else if v > 1e-9 {
            reach = reach.min((hi - p) / v);
        }
    }
    if !reach.is_finite() || reach < 2.0 {
        return None;
    }
    let border = [p0[0] + reach * dir[0], p0[1] + reach * dir[1]];
    let border = [border[0].clamp(0.0, hi), border[1].clamp(0.0, hi)];
    let tangent = if border[0] <= 1e-9 || border[0] >= hi - 1e-9 { [0.0, 1.0] } else { [1.0, 0.0] };
    let pieces = (reach / (0.2 * size)).ceil().max(1.0) as usize;
    let mut control: Vec<Point> = (0..pieces)
        .map(|i| {
            let f = reach * (1.0 - i as f64 / pieces as f64);
            [p0[0] + f * dir[0], p0[1] + f * dir[1]]
        })
        .collect();
    control[0] = border;
    control.extend(body);
    Some(CurveShape { control, border_tangent: tangent, crossing: Some(crossing) })
}

/// Draws curves until one satisfies the placement constraints: all samples
/// inside the frame, the tip well away from the border, and distinct parts
/// of the curve kept apart.
pub fn random_curve(cfg: &SynthConfig, with_loop: bool, rng: &mut impl Rng) -> CurveShape {
    let size = cfg.image_size;
    let tip_margin = (0.12 * size as f64).max(8.0);
    let min_gap = (0.08 * size as f64).clamp(6.0, 10.0);
    let mut last = None;
    for _ in 0..MAX_ATTEMPTS {
        let shape = if with_loop { loop_curve(cfg, rng) } else { Some(open_curve(cfg, rng)) };
        let Some(shape) = shape else { continue };
        let dense = catmull_rom(&shape.control, 0.25);
        let tip = *shape.control.last().unwrap();
        if inside(&dense, size)
            && border_distance(tip, size) >= tip_margin
            && well_separated(&dense, shape.crossing, min_gap)
        {
            return shape;
        }
        last = Some(shape);
    }
    log::warn!("curve constraints not met after {MAX_ATTEMPTS} attempts; using the last draw");
    last.unwrap_or_else(|| open_curve(cfg, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cycloid_crossing_parameter() {
        assert!((CROSSING_T - 3.0 * CROSSING_T.sin()).abs() < 1e-12);
    }

    #[test]
    fn curves_start_on_the_border_and_end_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for size in [64, 128] {
            let cfg = SynthConfig { image_size: size, ..Default::default() };
            for with_loop in [false, true] {
                for _ in 0..20 {
                    let s = random_curve(&cfg, with_loop, &mut rng);
                    assert!(border_distance(s.control[0], size) < 1e-9);
                    assert!(border_distance(*s.control.last().unwrap(), size) >= 8.0);
                    assert!(inside(&catmull_rom(&s.control, 0.25), size));
                    assert_eq!(s.crossing.is_some(), with_loop);
                }
            }
        }
    }

    #[test]
    fn jitter_is_bounded_and_keeps_entry_on_border() {
        let cfg = SynthConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let s = random_curve(&cfg, false, &mut rng);
        for _ in 0..20 {
            let j = s.jittered(&cfg, 1.5, &mut rng);
            assert!(border_distance(j[0], 64) < 1e-9);
            for (a, b) in j.iter().zip(&s.control) {
                assert!((a[0] - b[0]).abs() <= 1.5 + 1e-12 && (a[1] - b[1]).abs() <= 1.5 + 1e-12);
            }
        }
    }
}
