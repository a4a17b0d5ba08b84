use super::branches::{closest_pair, pixel_distance, Branch, BranchGraph, Pixel};
use std::collections::HashMap;

/// Number of pixels used to estimate a chain's direction at an end.
pub const TANGENT_WINDOW: usize = 5;

const TIE: f64 = 1e-9;

/// Arc length along each arm used to judge the direction at a loop crossing.
const ARM_LENGTH: f64 = 10.0;

/// Direction of the last `TANGENT_WINDOW` pixels of `chain`, oriented along
/// the chain, from a least-squares line fit.
pub(crate) fn end_tangent(chain: &[Pixel]) -> Option<[f64; 2]> {
    let n = chain.len().min(TANGENT_WINDOW);
    if n < 2 {
        return None;
    }
    let window = &chain[chain.len() - n..];
    let mx = window.iter().map(|p| p[0] as f64).sum::<f64>() / n as f64;
    let my = window.iter().map(|p| p[1] as f64).sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in window {
        let (dx, dy) = (p[0] as f64 - mx, p[1] as f64 - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // principal axis of the 2x2 scatter matrix
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let mut dir = [theta.cos(), theta.sin()];
    let first = window[0];
    let last = window[n - 1];
    let along = [(last[0] - first[0]) as f64, (last[1] - first[1]) as f64];
    if dir[0] * along[0] + dir[1] * along[1] < 0.0 {
        dir = [-dir[0], -dir[1]];
    }
    Some(dir)
}

fn start_tangent(chain: &[Pixel]) -> Option<[f64; 2]> {
    let n = chain.len().min(TANGENT_WINDOW);
    let rev: Vec<Pixel> = chain[..n].iter().rev().copied().collect();
    end_tangent(&rev).map(|d| [-d[0], -d[1]])
}

fn angle(a: [f64; 2], b: [f64; 2]) -> f64 {
    let na = a[0].hypot(a[1]);
    let nb = b[0].hypot(b[1]);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    ((a[0] * b[0] + a[1] * b[1]) / (na * nb)).clamp(-1.0, 1.0).acos()
}

/// Turning angle when `head` is followed by `tail`, including the gap step.
pub(crate) fn join_turn(head: &[Pixel], tail: &[Pixel]) -> f64 {
    let (Some(&p), Some(&q)) = (head.last(), tail.first()) else {
        return 0.0;
    };
    let gap = [(q[0] - p[0]) as f64, (q[1] - p[1]) as f64];
    let gap_is_step = gap[0].abs() <= 1.0 && gap[1].abs() <= 1.0;
    match (end_tangent(head), start_tangent(tail)) {
        (Some(a), Some(b)) if gap_is_step => angle(a, b),
        (Some(a), Some(b)) => angle(a, gap) + angle(gap, b),
        (Some(a), None) => angle(a, gap),
        (None, Some(b)) => angle(gap, b),
        (None, None) => 0.0,
    }
}

fn arc(p: &[Pixel]) -> f64 {
    p.windows(2).map(|w| pixel_distance(w[0], w[1])).sum()
}

// Arms leaving pixel `i`: toward the start (excluding `i`) and toward the end
// (including `i`). A connection at the last pixel leaves one arm only.
fn arms(b: &[Pixel], i: usize) -> (Vec<Pixel>, Vec<Pixel>) {
    if i + 1 == b.len() && b.len() > 1 {
        return (b.iter().rev().copied().collect(), Vec::new());
    }
    (b[..i].iter().rev().copied().collect(), b[i..].to_vec())
}

// Moves a mid-chain connection to a chain end lying within `d` of `q`.
fn snap(b: &[Pixel], i: usize, q: Pixel, d: f64) -> usize {
    if i == 0 || i + 1 == b.len() {
        return i;
    }
    let last = b.len() - 1;
    let (d0, d1) = (pixel_distance(b[0], q), pixel_distance(b[last], q));
    match (d0 <= d, d1 <= d) {
        (true, true) if d1 < d0 => last,
        (true, _) => 0,
        (false, true) => last,
        (false, false) => i,
    }
}

fn joined(out: &[Pixel], into: &[Pixel]) -> Vec<Pixel> {
    out.iter().rev().chain(into).copied().collect()
}

struct Candidate {
    chains: Vec<Vec<Pixel>>,
    longest: f64,
    turn: f64,
}

impl Candidate {
    fn new(chains: Vec<Vec<Pixel>>, joins: &[(Vec<Pixel>, Vec<Pixel>)]) -> Self {
        let chains: Vec<Vec<Pixel>> = chains.into_iter().filter(|c| !c.is_empty()).collect();
        let (k, longest) = chains
            .iter()
            .enumerate()
            .map(|(k, c)| (k, arc(c)))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 + TIE { cur } else { best });
        let turn = joins.get(k).map_or(0.0, |(out, into)| {
            if out.is_empty() || into.is_empty() {
                0.0
            } else {
                let head: Vec<Pixel> = out.iter().rev().copied().collect();
                join_turn(&head, into)
            }
        });
        Self { chains, longest, turn }
    }
}

/// Splits the two branches of every connection at the connection pixels and
/// re-pairs the arms so the longest resulting chain is as long as possible.
/// Ties go to the smaller turning angle at the join. Connections are visited
/// once each, closest first.
pub fn link_longest(graph: &BranchGraph) -> BranchGraph {
    let mut branches: Vec<Option<Vec<Pixel>>> = graph.branches.iter().map(|b| Some(b.pixels.clone())).collect();
    let mut order: Vec<usize> = (0..graph.connections.len()).collect();
    order.sort_by(|&x, &y| {
        let (a, b) = (&graph.connections[x], &graph.connections[y]);
        a.distance.total_cmp(&b.distance).then((a.branch_a, a.branch_b).cmp(&(b.branch_a, b.branch_b)))
    });
    let d = if graph.max_distance > 0.0 { graph.max_distance } else { f64::INFINITY };
    let mut owner = pixel_owners(&branches);
    for k in order {
        let c = graph.connections[k];
        let pa = graph.branches[c.branch_a].pixels[c.index_a];
        let pb = graph.branches[c.branch_b].pixels[c.index_b];
        let (ba, ia) = owner[&pa];
        let (bb, ib) = owner[&pb];
        if ba == bb {
            continue;
        }
        let a = branches[ba].take().expect("live branch");
        let b = branches[bb].take().expect("live branch");
        let ia = snap(&a, ia, pb, d);
        let ib = snap(&b, ib, a[ia], d);
        let (a1, a2) = arms(&a, ia);
        let (b1, b2) = arms(&b, ib);
        let keep = Candidate::new(vec![a.clone(), b.clone()], &[]);
        let p1 = Candidate::new(
            vec![joined(&a1, &b1), joined(&a2, &b2)],
            &[(a1.clone(), b1.clone()), (a2.clone(), b2.clone())],
        );
        let p2 = Candidate::new(vec![joined(&a1, &b2), joined(&a2, &b1)], &[(a1, b2), (a2, b1)]);
        let mut best = keep;
        for cand in [p1, p2] {
            let better = cand.longest > best.longest + TIE
                || ((cand.longest - best.longest).abs() <= TIE && cand.turn < best.turn - TIE);
            if better {
                best = cand;
            }
        }
        let mut slots = [ba, bb].into_iter();
        for chain in best.chains {
            branches[slots.next().expect("at most two chains")] = Some(chain);
        }
        owner = pixel_owners(&branches);
    }
    let mut out = graph.clone();
    out.branches = branches.into_iter().flatten().map(Branch::new).collect();
    out.connections.clear();
    out
}

fn pixel_owners(branches: &[Option<Vec<Pixel>>]) -> HashMap<Pixel, (usize, usize)> {
    let mut m = HashMap::new();
    for (b, chain) in branches.iter().enumerate() {
        for (i, &p) in chain.iter().flatten().enumerate() {
            m.insert(p, (b, i));
        }
    }
    m
}

// Closest pixel pair (i < j) of one chain that is at least `b_min` apart along
// the chain, within `d`, and away from already handled crossings.
fn loop_candidate(chain: &[Pixel], d: f64, b_min: usize, crossings: &[[f64; 2]]) -> Option<(usize, usize)> {
    let d2 = d * d;
    let mut best: Option<(usize, usize, i64)> = None;
    for i in 0..chain.len() {
        for j in i + b_min..chain.len() {
            let (p, q) = (chain[i], chain[j]);
            let dx = (p[0] - q[0]) as i64;
            let dy = (p[1] - q[1]) as i64;
            let dist2 = dx * dx + dy * dy;
            if dist2 as f64 > d2 || best.is_some_and(|(_, _, bd)| dist2 >= bd) {
                continue;
            }
            let mid = [(p[0] + q[0]) as f64 / 2.0, (p[1] + q[1]) as f64 / 2.0];
            if crossings.iter().any(|c| (c[0] - mid[0]).hypot(c[1] - mid[1]) <= d) {
                continue;
            }
            best = Some((i, j, dist2));
        }
    }
    best.map(|(i, j, _)| (i, j))
}

// Outward direction from the crossing `mid` to the pixel `ARM_LENGTH` along an
// arm, or to its far end if the arm is shorter. A single pixel has none.
fn arm_direction(pixels: &mut dyn Iterator<Item = &Pixel>, mid: [f64; 2]) -> Option<[f64; 2]> {
    let mut prev: Option<Pixel> = None;
    let mut walked = 0.0;
    let mut last = None;
    for &px in pixels {
        if let Some(q) = prev {
            walked += pixel_distance(q, px);
        }
        prev = Some(px);
        last = Some(px);
        if walked >= ARM_LENGTH {
            break;
        }
    }
    if walked == 0.0 {
        return None;
    }
    last.map(|px| [px[0] as f64 - mid[0], px[1] as f64 - mid[1]])
}

// Deviation from passing straight through the crossing between an arriving
// and a leaving arm, both given as outward directions.
fn straightness(arrive: Option<[f64; 2]>, leave: Option<[f64; 2]>) -> f64 {
    match (arrive, leave) {
        (Some(a), Some(b)) => std::f64::consts::PI - angle(a, b),
        _ => 0.0,
    }
}

/// Detects loops (two pixels within `d` that are at least `b_min` pixels apart
/// along their branch) and rewires the loop segment in whichever direction
/// passes most nearly straight through the crossing, judged from chords
/// `ARM_LENGTH` pixels along each of the four arms. Handled crossings are
/// recorded in the graph.
pub fn merge_loops(graph: &BranchGraph, d: f64, b_min: usize) -> BranchGraph {
    assert!(d > 0.0 && b_min > 0, "loop parameters must be positive");
    let mut out = graph.clone();
    for k in 0..out.branches.len() {
        while let Some((i, j)) = loop_candidate(&out.branches[k].pixels, d, b_min, &out.crossings) {
            let chain = &out.branches[k].pixels;
            let (s0, s1, s2) = (&chain[..=i], &chain[i + 1..j], &chain[j..]);
            let (p, q) = (chain[i], chain[j]);
            let mid = [(p[0] + q[0]) as f64 / 2.0, (p[1] + q[1]) as f64 / 2.0];
            let arm = |pixels: &mut dyn Iterator<Item = &Pixel>| arm_direction(pixels, mid);
            let a = arm(&mut s0.iter().rev());
            let b = arm(&mut s1.iter());
            let c = arm(&mut s1.iter().rev());
            let e = arm(&mut s2.iter());
            let forward = straightness(a, b) + straightness(c, e);
            let backward = straightness(a, c) + straightness(b, e);
            out.crossings.push(mid);
            if backward < forward - TIE {
                let r1: Vec<Pixel> = s1.iter().rev().copied().collect();
                let rewired: Vec<Pixel> = s0.iter().chain(&r1).chain(s2).copied().collect();
                out.branches[k].pixels = rewired;
            }
        }
    }
    out
}

/// Folds side branches into the longest branch. A side branch within the
/// graph's connection distance of the main branch is traversed out and back
/// from its closest main pixel if it is at least `b_min` long, otherwise
/// discarded. Branches farther away are left alone.
pub fn close_remaining(graph: &BranchGraph, b_min: f64) -> BranchGraph {
    let mut out = graph.clone();
    out.connections.clear();
    let Some(main_idx) = longest_index(&graph.branches) else {
        return out;
    };
    let reach = graph.max_distance.max(1.5);
    let mut main = graph.branches[main_idx].pixels.clone();
    let mut rest = Vec::new();
    for (k, side) in graph.branches.iter().enumerate() {
        if k == main_idx {
            continue;
        }
        let Some((im, _, dist)) = closest_pair(&Branch::new(main.clone()), side) else {
            continue;
        };
        if dist > reach {
            rest.push(side.clone());
            continue;
        }
        if side.arc_length() < b_min {
            continue;
        }
        let from_start = pixel_distance(side.pixels[0], main[im]) <= pixel_distance(*side.pixels.last().unwrap(), main[im]);
        let out_leg: Vec<Pixel> =
            if from_start { side.pixels.clone() } else { side.pixels.iter().rev().copied().collect() };
        let mut detour = out_leg.clone();
        detour.extend(out_leg.iter().rev().skip(1));
        detour.push(main[im]);
        let tail = main.split_off(im + 1);
        main.extend(detour);
        main.extend(tail);
    }
    let mut branches = vec![Branch::new(main)];
    branches.extend(rest);
    out.branches = branches;
    out
}

pub(crate) fn longest_index(branches: &[Branch]) -> Option<usize> {
    branches
        .iter()
        .enumerate()
        .map(|(k, b)| (k, b.arc_length(), b.len()))
        .fold(None, |best: Option<(usize, f64, usize)>, cur| match best {
            Some(b) if !(cur.1 > b.1 + TIE || ((cur.1 - b.1).abs() <= TIE && cur.2 > b.2)) => Some(b),
            _ => Some(cur),
        })
        .map(|(k, _, _)| k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::centerline::branches::find_connections;

    fn seg(x0: i32, x1: i32, y: i32) -> Branch {
        let px = if x0 <= x1 { (x0..=x1).map(|x| [x, y]).collect() } else { (x1..=x0).rev().map(|x| [x, y]).collect() };
        Branch::new(px)
    }

    fn vseg(x: i32, y0: i32, y1: i32) -> Branch {
        Branch::new((y0..=y1).map(|y| [x, y]).collect())
    }

    // pixels of a digital circle traversal starting at angle `start` and covering `sweep` radians
    fn arc_pixels(cx: f64, cy: f64, r: f64, start: f64, sweep: f64) -> Vec<Pixel> {
        let steps = (sweep.abs() * r * 4.0) as usize;
        let mut out: Vec<Pixel> = Vec::new();
        for s in 0..=steps {
            let t = start + sweep * s as f64 / steps as f64;
            let p = [(cx + r * t.cos()).round() as i32, (cy + r * t.sin()).round() as i32];
            if out.last() != Some(&p) {
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn collinear_gap_is_bridged() {
        let g = find_connections(&BranchGraph::from_branches(vec![seg(0, 10, 5), seg(14, 30, 5)]), 5.0);
        let linked = link_longest(&g);
        assert_eq!(linked.branches.len(), 1);
        assert_eq!(linked.branches[0].len(), 28);
        assert_eq!(linked.sorted_pixels(), g.sorted_pixels());
    }

    #[test]
    fn t_junction_keeps_longest_pairing() {
        // bar from x=0..=40 at y=0 (junction near x=10), stem going down from (10, 2)
        let bar = seg(0, 40, 0);
        let stem = vseg(10, 2, 40);
        let g = find_connections(&BranchGraph::from_branches(vec![bar, stem]), 5.0);
        let linked = link_longest(&g);
        assert_eq!(linked.sorted_pixels(), g.sorted_pixels());
        // enumerate pairings: right arm (30 px) + stem (38 px) beats bar (40 px) and left arm + stem
        let mut lens: Vec<usize> = linked.branches.iter().map(Branch::len).collect();
        lens.sort();
        assert_eq!(lens, vec![10, 31 + 39]);
        let longest = linked.branches.iter().max_by_key(|b| b.len()).unwrap();
        assert!(longest.pixels.contains(&[40, 0]) && longest.pixels.contains(&[10, 40]));
    }

    #[test]
    fn short_stem_leaves_bar_intact() {
        let g = find_connections(&BranchGraph::from_branches(vec![seg(0, 40, 0), vseg(20, 2, 8)]), 5.0);
        let linked = link_longest(&g);
        assert!(linked.branches.contains(&seg(0, 40, 0)));
    }

    #[test]
    fn no_connections_change_nothing() {
        let g = BranchGraph::from_branches(vec![seg(0, 10, 0), seg(0, 10, 30)]);
        assert_eq!(link_longest(&find_connections(&g, 5.0)).branches, g.branches);
    }

    #[test]
    fn straight_branch_has_no_loop() {
        let g = BranchGraph::from_branches(vec![seg(0, 80, 3)]);
        let m = merge_loops(&g, 5.0, 30);
        assert_eq!(m.branches, g.branches);
        assert!(m.crossings.is_empty());
    }

    #[test]
    fn nearly_closed_circle_is_one_traversal() {
        let r = 100.0 / (2.0 * std::f64::consts::PI);
        let px = arc_pixels(30.0, 30.0, r, 0.0, 2.0 * std::f64::consts::PI - 2.0 / r);
        let g = BranchGraph::from_branches(vec![Branch::new(px.clone())]);
        let m = merge_loops(&g, 5.0, 30);
        assert_eq!(m.branches.len(), 1);
        assert_eq!(m.crossings.len(), 1);
        assert_eq!(m.sorted_pixels(), g.sorted_pixels());
        assert_eq!(m.branches[0].pixels, px);
    }

    #[test]
    fn small_hairpin_is_not_a_loop() {
        let mut px: Vec<Pixel> = (0..5).map(|x| [x, 0]).collect();
        px.extend((0..5).rev().map(|x| [x, 2]));
        px.insert(5, [5, 1]);
        let g = BranchGraph::from_branches(vec![Branch::new(px)]);
        assert!(merge_loops(&g, 5.0, 30).crossings.is_empty());
    }

    // prolate cycloid x = 4t - 12 sin t, y = -12 cos t; self-crossing at t = ±2.279
    fn cycloid_loop() -> (Vec<Pixel>, usize, usize) {
        let mut px: Vec<Pixel> = Vec::new();
        let mut ts = Vec::new();
        for s in 0..=4000 {
            let t = -4.5 + 9.0 * s as f64 / 4000.0;
            let p = [(40.0 + 4.0 * t - 12.0 * t.sin()).round() as i32, (16.0 - 12.0 * t.cos()).round() as i32];
            if px.last() != Some(&p) {
                px.push(p);
                ts.push(t);
            }
        }
        let nearest = |target: f64| (0..ts.len()).min_by(|&a, &b| (ts[a] - target).abs().total_cmp(&(ts[b] - target).abs())).unwrap();
        (px, nearest(-2.279), nearest(2.279))
    }

    #[test]
    fn loop_traversed_backwards_is_flipped() {
        let (good, i, j) = cycloid_loop();
        let mut bad = good.clone();
        bad[i + 1..j].reverse();
        let turning = |c: &[Pixel]| -> f64 {
            (0..c.len().saturating_sub(10)).map(|k| join_turn(&c[k..k + 5], &c[k + 5..k + 10])).sum()
        };
        let g = BranchGraph::from_branches(vec![Branch::new(bad.clone())]);
        let m = merge_loops(&g, 5.0, 30);
        assert_eq!(m.sorted_pixels(), g.sorted_pixels());
        assert_eq!(m.crossings.len(), 1);
        let fixed = turning(&m.branches[0].pixels);
        assert!(fixed < turning(&bad) - 1.0, "{fixed} vs {}", turning(&bad));
        assert!((fixed - turning(&good)).abs() < 2.0, "fixed {fixed} good {}", turning(&good));
        // the correct traversal is left alone
        let g = BranchGraph::from_branches(vec![Branch::new(good.clone())]);
        assert_eq!(merge_loops(&g, 5.0, 30).branches[0].pixels, good);
    }

    #[test]
    fn spur_is_dropped_and_long_side_branch_detoured() {
        let main = seg(0, 100, 50);
        let spur = vseg(30, 52, 56);
        let side = vseg(70, 52, 92);
        let g = find_connections(&BranchGraph::from_branches(vec![main.clone(), spur, side.clone()]), 20.0);
        let closed = close_remaining(&g, 30.0);
        assert_eq!(closed.branches.len(), 1);
        let traversal = closed.branches[0].arc_length();
        let expected = main.arc_length() + 2.0 * side.arc_length();
        assert!((traversal - expected).abs() <= 4.0, "{traversal} vs {expected}");
        assert!(!closed.branches[0].pixels.contains(&[30, 54]));
    }

    #[test]
    fn lone_chain_is_unchanged() {
        let g = BranchGraph::from_branches(vec![seg(0, 50, 0)]);
        assert_eq!(close_remaining(&g, 30.0).branches, g.branches);
    }
}
