//! Comparison of extracted centerlines with ground truth.

use crate::centerline::Centerline;
use crate::imagecore::{BinaryMask, PixelSpacing, Point};
use serde::{Deserialize, Serialize};

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Euclidean distance between the two tips, `None` if either centerline is empty.
pub fn tip_distance(gt: &Centerline, seg: &Centerline) -> Option<f64> {
    Some(dist(gt.tip()?, seg.tip()?))
}

/// Mean over the points of `a` of the distance to the nearest point of `b`.
/// Directional; `None` if either side is empty.
pub fn centerline_distance(a: &Centerline, b: &Centerline) -> Option<f64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let total: f64 =
        a.points.iter().map(|&p| b.points.iter().map(|&q| dist(p, q)).fold(f64::INFINITY, f64::min)).sum();
    Some(total / a.points.len() as f64)
}

/// `2|A∩B| / (|A|+|B|)`, defined as 1 for two empty masks.
pub fn dice_coefficient(a: &BinaryMask, b: &BinaryMask) -> f64 {
    assert_eq!((a.width, a.height), (b.width, b.height), "dice_coefficient dimension mismatch");
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        inter += (x & y) as usize;
        na += x as usize;
        nb += y as usize;
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}

/// A distance in pixels and millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    pub px: f64,
    pub mm: f64,
}

impl Distance {
    pub fn new(px: f64, spacing: PixelSpacing) -> Self {
        Self { px, mm: spacing.to_mm(px) }
    }
}

/// Evaluation of one frame. Distances are absent for failed extractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub sequence: String,
    pub frame: usize,
    pub tip_error: Option<Distance>,
    pub dist_gt_to_seg: Option<Distance>,
    pub dist_seg_to_gt: Option<Distance>,
    pub success: bool,
}

impl FrameResult {
    pub fn evaluate(sequence: &str, frame: usize, gt: &Centerline, seg: &Centerline, spacing: PixelSpacing) -> Self {
        let wrap = |v: Option<f64>| v.map(|px| Distance::new(px, spacing));
        let success = !seg.is_empty() && !gt.is_empty();
        Self {
            sequence: sequence.to_string(),
            frame,
            tip_error: wrap(tip_distance(gt, seg)),
            dist_gt_to_seg: wrap(centerline_distance(gt, seg)),
            dist_seg_to_gt: wrap(centerline_distance(seg, gt)),
            success,
        }
    }
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Median of a sample (mean of the two middle values for even counts).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        Some(Self {
            median: median(values)?,
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TipPrecision {
    /// `(sequence, std in px)` for every sequence with at least two successful frames.
    pub per_sequence: Vec<(String, f64)>,
    /// Sequences left out because they have fewer than two successful frames.
    pub excluded: Vec<String>,
    pub summary: Option<Summary>,
}

/// Per-sequence population standard deviation of the tip error, with summary
/// statistics across sequences. Sequences appear in first-seen order.
pub fn tip_precision(results: &[FrameResult]) -> TipPrecision {
    let mut order: Vec<&str> = Vec::new();
    for r in results {
        if !order.contains(&r.sequence.as_str()) {
            order.push(&r.sequence);
        }
    }
    let mut per_sequence = Vec::new();
    let mut excluded = Vec::new();
    for seq in order {
        let errors: Vec<f64> =
            results.iter().filter(|r| r.sequence == seq).filter_map(|r| r.tip_error.map(|d| d.px)).collect();
        if errors.len() < 2 {
            log::warn!("sequence {seq} has fewer than two evaluated frames; left out of tip precision");
            excluded.push(seq.to_string());
        } else {
            per_sequence.push((seq.to_string(), population_std(&errors)));
        }
    }
    let stds: Vec<f64> = per_sequence.iter().map(|(_, s)| *s).collect();
    TipPrecision { summary: Summary::of(&stds), per_sequence, excluded }
}

/// Aggregate over frames; failed frames are counted, not averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub frames: usize,
    pub failures: usize,
    pub mm_per_pixel: f64,
    pub threshold_mm: f64,
    pub tip_error_px: Option<Summary>,
    pub tip_error_mm: Option<Summary>,
    pub gt_to_seg_px: Option<Summary>,
    pub gt_to_seg_mm: Option<Summary>,
    pub seg_to_gt_px: Option<Summary>,
    pub seg_to_gt_mm: Option<Summary>,
    /// Percentage of successful frames whose mean of both centerline distance
    /// directions is at most `threshold_mm`.
    pub percent_under_threshold: Option<f64>,
    pub tip_precision: TipPrecision,
}

/// Symmetric centerline error of a frame: the mean of both directions.
pub fn symmetric_distance(r: &FrameResult) -> Option<Distance> {
    let (a, b) = (r.dist_gt_to_seg?, r.dist_seg_to_gt?);
    Some(Distance { px: 0.5 * (a.px + b.px), mm: 0.5 * (a.mm + b.mm) })
}

pub fn summarize(results: &[FrameResult], spacing: PixelSpacing, threshold_mm: f64) -> EvaluationSummary {
    let pick = |f: &dyn Fn(&FrameResult) -> Option<Distance>, mm: bool| -> Option<Summary> {
        let v: Vec<f64> = results.iter().filter_map(f).map(|d| if mm { d.mm } else { d.px }).collect();
        Summary::of(&v)
    };
    let sym: Vec<f64> = results.iter().filter_map(symmetric_distance).map(|d| d.mm).collect();
    let under = (!sym.is_empty())
        .then(|| 100.0 * sym.iter().filter(|&&v| v <= threshold_mm).count() as f64 / sym.len() as f64);
    EvaluationSummary {
        frames: results.len(),
        failures: results.iter().filter(|r| !r.success).count(),
        mm_per_pixel: spacing.mm_per_pixel(),
        threshold_mm,
        tip_error_px: pick(&|r| r.tip_error, false),
        tip_error_mm: pick(&|r| r.tip_error, true),
        gt_to_seg_px: pick(&|r| r.dist_gt_to_seg, false),
        gt_to_seg_mm: pick(&|r| r.dist_gt_to_seg, true),
        seg_to_gt_px: pick(&|r| r.dist_seg_to_gt, false),
        seg_to_gt_mm: pick(&|r| r.dist_seg_to_gt, true),
        percent_under_threshold: under,
        tip_precision: tip_precision(results),
    }
}

/// One CSV row per frame.
pub fn write_report_csv(results: &[FrameResult]) -> crate::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sequence", "frame", "tip_px", "tip_mm", "gt2seg_px", "gt2seg_mm", "seg2gt_px", "seg2gt_mm", "success"])
        .map_err(csv_err)?;
    let num = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in results {
        w.write_record([
            r.sequence.clone(),
            r.frame.to_string(),
            num(r.tip_error.map(|d| d.px)),
            num(r.tip_error.map(|d| d.mm)),
            num(r.dist_gt_to_seg.map(|d| d.px)),
            num(r.dist_gt_to_seg.map(|d| d.mm)),
            num(r.dist_seg_to_gt.map(|d| d.px)),
            num(r.dist_seg_to_gt.map(|d| d.mm)),
            r.success.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))
}

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::other(e))
}
