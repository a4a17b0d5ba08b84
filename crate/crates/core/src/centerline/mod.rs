//! Centerline extraction from a probability map.
//!
//! The map is thresholded and thinned; the skeleton is cut into branches at
//! junction pixels. Branches are then linked in two rounds (a tight and a
//! loose distance threshold): close branches are re-paired into the longest
//! chains, and self-crossings are rewired to follow the direction through the
//! crossing. Long side branches are folded into the main chain as out-and-back
//! detours; short ones are dropped. The longest chain is smoothed with a cubic
//! spline and oriented so it starts at the tip, the end farthest from the
//! image border.

mod branches;
mod link;
mod smooth;
mod thin;

pub use branches::{extract_branches, find_connections, pixel_distance, Branch, BranchGraph, Connection, Pixel};
pub use link::{close_remaining, link_longest, merge_loops, TANGENT_WINDOW};
pub use smooth::{eval_spline, fit_spline, smooth_spline, POINTS_PER_CONTROL};
pub use thin::{remove_staircase, skeletonize, threshold};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::imagecore::{save_rgb, Image, Point, ProbabilityMap};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractParams {
    /// Probability threshold.
    pub alpha: f64,
    /// Connection distance of the first linking round, in pixels.
    pub d_max: f64,
    /// Connection distance of the second linking round, in pixels.
    pub d_max2: f64,
    /// Minimum along-branch length of a loop and of a kept side branch, in pixels.
    pub b_min: usize,
}

impl Default for ExtractParams {
    fn default() -> Self {
        Self { alpha: 0.01, d_max: 5.0, d_max2: 20.0, b_min: 30 }
    }
}

impl ExtractParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.d_max > 0.0 && self.d_max <= self.d_max2 && self.d_max2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < d_max <= d_max2, got {} and {}",
                self.d_max, self.d_max2
            )));
        }
        if self.b_min == 0 {
            return Err(Error::InvalidArgument("b_min must be positive".into()));
        }
        Ok(())
    }
}

/// An ordered centerline starting at the tip. An empty point list marks a
/// failed extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CenterlineFile", into = "CenterlineFile")]
pub struct Centerline {
    pub width: usize,
    pub height: usize,
    pub points: Vec<Point>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CenterlineFile {
    width: usize,
    height: usize,
    tip_index: usize,
    success: bool,
    points: Vec<Point>,
}

impl From<Centerline> for CenterlineFile {
    fn from(c: Centerline) -> Self {
        Self { width: c.width, height: c.height, tip_index: 0, success: !c.points.is_empty(), points: c.points }
    }
}

impl TryFrom<CenterlineFile> for Centerline {
    type Error = String;

    fn try_from(f: CenterlineFile) -> std::result::Result<Self, String> {
        if f.tip_index != 0 {
            return Err(format!("tip_index must be 0, got {}", f.tip_index));
        }
        if f.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err("non-finite centerline coordinate".into());
        }
        Ok(Centerline { width: f.width, height: f.height, points: f.points })
    }
}

impl Centerline {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, points: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn tip(&self) -> Option<Point> {
        self.points.first().copied()
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Distance from a pixel to the nearest image border.
pub fn border_distance(p: Point, width: usize, height: usize) -> f64 {
    p[0].min(p[1]).min(width as f64 - 1.0 - p[0]).min(height as f64 - 1.0 - p[1])
}

/// Orients `chain` so it starts at the tip: the end farther from the border,
/// ties broken by larger row, then larger column.
pub fn orient_tip_first(chain: &mut [Point], width: usize, height: usize) {
    let (Some(&a), Some(&b)) = (chain.first(), chain.last()) else {
        return;
    };
    let key = |p: Point| (border_distance(p, width, height), p[1], p[0]);
    let (ka, kb) = (key(a), key(b));
    let b_wins = kb.0 > ka.0 || (kb.0 == ka.0 && (kb.1 > ka.1 || (kb.1 == ka.1 && kb.2 > ka.2)));
    if b_wins {
        chain.reverse();
    }
}

/// Branch graph after both linking rounds and side-branch closing.
pub fn link_branches(graph: &BranchGraph, params: &ExtractParams) -> BranchGraph {
    let mut g = graph.clone();
    for d in [params.d_max, params.d_max2] {
        g = find_connections(&g, d);
        g = link_longest(&g);
        g = merge_loops(&g, d, params.b_min);
    }
    close_remaining(&g, params.b_min as f64)
}

/// Runs the full extraction. An empty threshold mask or a final chain shorter
/// than four pixels gives an empty centerline.
pub fn extract_centerline(pm: &ProbabilityMap, params: &ExtractParams) -> Result<Centerline> {
    params.validate()?;
    let (w, h) = (pm.width, pm.height);
    let mask = threshold(pm, params.alpha);
    if mask.is_empty() {
        return Ok(Centerline::empty(w, h));
    }
    let skel = remove_staircase(&skeletonize(&mask));
    let graph = link_branches(&extract_branches(&skel)?, params);
    let Some(k) = link::longest_index(&graph.branches) else {
        return Ok(Centerline::empty(w, h));
    };
    let mut chain: Vec<Point> = graph.branches[k].pixels.iter().map(|p| [p[0] as f64, p[1] as f64]).collect();
    if chain.len() < 4 {
        return Ok(Centerline::empty(w, h));
    }
    orient_tip_first(&mut chain, w, h);
    Ok(Centerline { width: w, height: h, points: smooth_spline(&chain) })
}

/// RGB rendering of `frame` with the centerline drawn from red at the tip to
/// blue at the tail.
pub fn render_overlay(frame: &Image, centerline: &Centerline) -> Vec<u8> {
    let mut rgb: Vec<u8> =
        frame.data.iter().flat_map(|&v| [(v.clamp(0.0, 1.0) * 255.0).round() as u8; 3]).collect();
    let n = centerline.points.len();
    for (i, p) in centerline.points.iter().enumerate() {
        let (x, y) = (p[0].round(), p[1].round());
        if x < 0.0 || y < 0.0 || x >= frame.width as f64 || y >= frame.height as f64 {
            continue;
        }
        let f = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
        let o = 3 * (y as usize * frame.width + x as usize);
        rgb[o..o + 3].copy_from_slice(&[(255.0 * (1.0 - f)).round() as u8, 0, (255.0 * f).round() as u8]);
    }
    rgb
}

pub fn save_overlay(frame: &Image, centerline: &Centerline, path: &Path) -> Result<()> {
    save_rgb(frame.width, frame.height, render_overlay(frame, centerline), path)
}
