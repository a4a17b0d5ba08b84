use crate::error::{Error, Result};
use crate::imagecore::BinaryMask;

/// Integer pixel coordinate `[x, y]`.
pub type Pixel = [i32; 2];

/// An ordered chain of skeleton pixels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Branch {
    pub pixels: Vec<Pixel>,
}

impl Branch {
    pub fn new(pixels: Vec<Pixel>) -> Self {
        Self { pixels }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Sum of Euclidean steps between consecutive pixels.
    pub fn arc_length(&self) -> f64 {
        self.pixels.windows(2).map(|w| pixel_distance(w[0], w[1])).sum()
    }

    pub fn reversed(&self) -> Self {
        Self { pixels: self.pixels.iter().rev().copied().collect() }
    }
}

/// The closest pixel pair between two distinct branches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Connection {
    pub branch_a: usize,
    pub index_a: usize,
    pub branch_b: usize,
    pub index_b: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BranchGraph {
    pub branches: Vec<Branch>,
    pub connections: Vec<Connection>,
    /// Distance threshold the connections were computed with.
    pub max_distance: f64,
    /// Crossing locations already rewired by loop merging.
    pub crossings: Vec<[f64; 2]>,
}

impl BranchGraph {
    pub fn from_branches(branches: Vec<Branch>) -> Self {
        Self { branches, ..Default::default() }
    }

    pub fn pixel_count(&self) -> usize {
        self.branches.iter().map(Branch::len).sum()
    }

    /// Every branch pixel, sorted; equal for graphs that only re-wire pixels.
    pub fn sorted_pixels(&self) -> Vec<Pixel> {
        let mut all: Vec<Pixel> = self.branches.iter().flat_map(|b| b.pixels.iter().copied()).collect();
        all.sort_unstable();
        all
    }
}

pub fn pixel_distance(a: Pixel, b: Pixel) -> f64 {
    let dx = (a[0] - b[0]) as f64;
    let dy = (a[1] - b[1]) as f64;
    (dx * dx + dy * dy).sqrt()
}

const NEIGHBORS: [(i32, i32); 8] = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)];

/// Splits a thin skeleton into branches. Pixels with three or more skeleton
/// neighbors are junctions and belong to no branch; the remaining pixels form
/// maximal chains, isolated pixels becoming single-pixel branches.
pub fn extract_branches(skel: &BinaryMask) -> Result<BranchGraph> {
    let (w, h) = (skel.width as i32, skel.height as i32);
    let on = |x: i32, y: i32| x >= 0 && y >= 0 && x < w && y < h && skel.data[(y * w + x) as usize] == 1;
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            if on(x, y) && on(x + 1, y) && on(x, y + 1) && on(x + 1, y + 1) {
                return Err(Error::NotThin { x: x as usize, y: y as usize });
            }
        }
    }
    let degree = |x: i32, y: i32| NEIGHBORS.iter().filter(|(dx, dy)| on(x + dx, y + dy)).count();
    let idx = |x: i32, y: i32| (y * w + x) as usize;
    // 0 = background or junction, 1 = unvisited chain pixel, 2 = visited
    let mut state = vec![0u8; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            if on(x, y) && degree(x, y) <= 2 {
                state[idx(x, y)] = 1;
            }
        }
    }
    let chain_neighbors = |state: &[u8], p: Pixel| -> Vec<Pixel> {
        NEIGHBORS
            .iter()
            .map(|(dx, dy)| [p[0] + dx, p[1] + dy])
            .filter(|q| q[0] >= 0 && q[1] >= 0 && q[0] < w && q[1] < h && state[idx(q[0], q[1])] != 0)
            .collect()
    };
    let walk = |state: &mut Vec<u8>, start: Pixel| -> Branch {
        let mut pixels = vec![start];
        state[idx(start[0], start[1])] = 2;
        let mut cur = start;
        loop {
            let next = chain_neighbors(state, cur).into_iter().find(|q| state[idx(q[0], q[1])] == 1);
            match next {
                Some(q) => {
                    state[idx(q[0], q[1])] = 2;
                    pixels.push(q);
                    cur = q;
                }
                None => break,
            }
        }
        Branch::new(pixels)
    };
    let mut branches = Vec::new();
    // open chains start at pixels with at most one chain neighbor
    for y in 0..h {
        for x in 0..w {
            if state[idx(x, y)] == 1 && chain_neighbors(&state, [x, y]).len() <= 1 {
                branches.push(walk(&mut state, [x, y]));
            }
        }
    }
    // what is left are closed cycles
    for y in 0..h {
        for x in 0..w {
            if state[idx(x, y)] == 1 {
                branches.push(walk(&mut state, [x, y]));
            }
        }
    }
    Ok(BranchGraph::from_branches(branches))
}

/// Closest pixel pair of two branches: `(index_a, index_b, distance)`.
pub(crate) fn closest_pair(a: &Branch, b: &Branch) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, i64)> = None;
    for (i, p) in a.pixels.iter().enumerate() {
        for (j, q) in b.pixels.iter().enumerate() {
            let dx = (p[0] - q[0]) as i64;
            let dy = (p[1] - q[1]) as i64;
            let d2 = dx * dx + dy * dy;
            if best.is_none_or(|(_, _, bd)| d2 < bd) {
                best = Some((i, j, d2));
            }
        }
    }
    best.map(|(i, j, d2)| (i, j, (d2 as f64).sqrt()))
}

/// Records, for every branch pair whose closest pixels are within `d`, that
/// closest pair as the pair's single connection.
pub fn find_connections(graph: &BranchGraph, d: f64) -> BranchGraph {
    assert!(d > 0.0, "connection distance must be positive");
    let mut out = graph.clone();
    out.connections.clear();
    out.max_distance = d;
    let bb: Vec<[i32; 4]> = graph.branches.iter().map(bounding_box).collect();
    for a in 0..graph.branches.len() {
        for b in a + 1..graph.branches.len() {
            if box_gap(bb[a], bb[b]) > d {
                continue;
            }
            if let Some((ia, ib, dist)) = closest_pair(&graph.branches[a], &graph.branches[b]) {
                if dist <= d {
                    out.connections.push(Connection { branch_a: a, index_a: ia, branch_b: b, index_b: ib, distance: dist });
                }
            }
        }
    }
    out
}

fn bounding_box(b: &Branch) -> [i32; 4] {
    b.pixels.iter().fold([i32::MAX, i32::MAX, i32::MIN, i32::MIN], |acc, p| {
        [acc[0].min(p[0]), acc[1].min(p[1]), acc[2].max(p[0]), acc[3].max(p[1])]
    })
}

fn box_gap(a: [i32; 4], b: [i32; 4]) -> f64 {
    let gx = (b[0] - a[2]).max(a[0] - b[2]).max(0) as f64;
    let gy = (b[1] - a[3]).max(a[1] - b[3]).max(0) as f64;
    (gx * gx + gy * gy).sqrt()
}
