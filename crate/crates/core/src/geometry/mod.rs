//! Cantor-interval bookkeeping: the nested intervals of the middle-third
//! construction, their removed gaps, the middle halves of those gaps, the
//! enlarged covers, and axis-parallel cubes in the plane and above.
//!
//! All endpoints are exact rationals with denominator dividing `4 * 3^K`,
//! so partition identities and cube membership are decided exactly.

pub mod dyadic;

use std::collections::BTreeMap;

use num::traits::Zero;

use crate::error::{Result, WorkbenchError};
use crate::rat::{format_rat, pow3_inv, rat, ratio, to_f64, Rat};

pub use dyadic::{
    deep_embedded_family, overlap_count, refined_deep_family, DeepEmbeddingParams, DyadicCube,
    DyadicGrid,
};

/// Closed interval `[left, right]` with `left < right`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    pub left: Rat,
    pub right: Rat,
}

impl Interval {
    pub fn new(left: Rat, right: Rat) -> Self {
        assert!(left < right, "interval endpoints out of order");
        Interval { left, right }
    }

    pub fn length(&self) -> Rat {
        &self.right - &self.left
    }

    pub fn center(&self) -> Rat {
        (&self.left + &self.right) / ratio(2)
    }

    pub fn contains(&self, x: &Rat) -> bool {
        &self.left <= x && x <= &self.right
    }
}

/// Axis-parallel cube: a center point and a side length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cube {
    pub center: Vec<Rat>,
    pub side: Rat,
}

impl Cube {
    pub fn new(center: Vec<Rat>, side: Rat) -> Self {
        assert!(side > Rat::zero(), "cube side must be positive");
        Cube { center, side }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Closed membership, exact.
    pub fn contains(&self, p: &[Rat]) -> bool {
        debug_assert_eq!(p.len(), self.dim());
        let half = &self.side / ratio(2);
        self.center.iter().zip(p).all(|(c, x)| {
            let d = if x >= c { x - c } else { c - x };
            d <= half
        })
    }

    /// Dilation about the center by a rational factor.
    pub fn dilate(&self, factor: &Rat) -> Cube {
        Cube {
            center: self.center.clone(),
            side: &self.side * factor,
        }
    }

    /// `true` when `self` is contained in `other` (closed cubes).
    pub fn subset_of(&self, other: &Cube) -> bool {
        let h = &self.side / ratio(2);
        let oh = &other.side / ratio(2);
        self.center.iter().zip(&other.center).all(|(c, oc)| {
            let lo = c - &h;
            let hi = c + &h;
            lo >= oc - &oh && hi <= oc + &oh
        })
    }

    pub fn side_f64(&self) -> f64 {
        to_f64(&self.side)
    }

    pub fn center_f64(&self) -> Vec<f64> {
        self.center.iter().map(to_f64).collect()
    }

    /// Lebesgue volume `side^dim` in f64.
    pub fn volume_f64(&self) -> f64 {
        self.side_f64().powi(self.dim() as i32)
    }

    /// Distance from `self` to the boundary of an enclosing cube, exact.
    /// Returns `None` when `self` is not contained in `outer`.
    pub fn dist_to_boundary(&self, outer: &Cube) -> Option<Rat> {
        if !self.subset_of(outer) {
            return None;
        }
        let h = &self.side / ratio(2);
        let oh = &outer.side / ratio(2);
        let mut best: Option<Rat> = None;
        for (c, oc) in self.center.iter().zip(&outer.center) {
            let left = (c - &h) - (oc - &oh);
            let right = (oc + &oh) - (c + &h);
            for d in [left, right] {
                if best.as_ref().map_or(true, |b| &d < b) {
                    best = Some(d);
                }
            }
        }
        best
    }
}

/// Float prefilter for closed-cube membership with exact fallback in a
/// narrow boundary margin.  Points whose f64 image is clearly inside or
/// clearly outside are decided in f64; anything within the margin goes
/// through the exact rational test.
pub struct Screen {
    lo: Vec<f64>,
    hi: Vec<f64>,
    eps: Vec<f64>,
    cube: Cube,
}

impl Screen {
    pub fn new(cube: &Cube) -> Screen {
        let half = &cube.side / ratio(2);
        let mut lo = Vec::with_capacity(cube.dim());
        let mut hi = Vec::with_capacity(cube.dim());
        let mut eps = Vec::with_capacity(cube.dim());
        for c in &cube.center {
            let l = to_f64(&(c - &half));
            let h = to_f64(&(c + &half));
            lo.push(l);
            hi.push(h);
            eps.push(1e-12 * l.abs().max(h.abs()).max(1.0));
        }
        Screen {
            lo,
            hi,
            eps,
            cube: cube.clone(),
        }
    }

    #[inline]
    pub fn contains(&self, loc: &[Rat], loc_f64: &[f64]) -> bool {
        let mut ambiguous = false;
        for d in 0..self.lo.len() {
            let x = loc_f64[d];
            if x < self.lo[d] - self.eps[d] || x > self.hi[d] + self.eps[d] {
                return false;
            }
            if x < self.lo[d] + self.eps[d] || x > self.hi[d] - self.eps[d] {
                ambiguous = true;
            }
        }
        if ambiguous {
            self.cube.contains(loc)
        } else {
            true
        }
    }
}

/// The square `I x [-|I|/2, |I|/2]` sitting over an interval, embedded as a
/// cube centered on the first axis when `dim > 2`.
pub fn hat_square(interval: &Interval, dim: usize) -> Cube {
    assert!(dim >= 2);
    let mut center = vec![Rat::zero(); dim];
    center[0] = interval.center();
    Cube::new(center, interval.length())
}

/// The full middle-third data for one depth-`N` construction.
///
/// * `intervals[(k, j)]` — the closed interval `I_j^k`, `|I_j^k| = 3^-k`,
///   for `0 <= k <= N + 1`, `1 <= j <= 2^k`.
/// * `gaps[(k, i)]` — the open middle third removed from `I_i^k`, for
///   `0 <= k <= N - 1` kept through level `N` for convenience.
/// * `halves[(k, i)]` — the middle half of the gap (closed), sharing its
///   center; length `3^-(k+1) / 2`.
/// * `enlargements[(k, j)]` — the minimal closed cover `L_j^k` of the atoms
///   split off the points of `I_j^k`; it sticks out past `I_j^k` on each
///   side by a quarter of the adjacent gap, and only where a gap exists.
#[derive(Debug, Clone)]
pub struct CantorHierarchy {
    pub depth: u32,
    pub intervals: BTreeMap<(u32, u32), Interval>,
    pub gaps: BTreeMap<(u32, u32), Interval>,
    pub halves: BTreeMap<(u32, u32), Interval>,
    pub enlargements: BTreeMap<(u32, u32), Interval>,
}

/// Desk-scale cap on the construction depth.
pub const MAX_DEPTH: u32 = 14;

pub fn cantor_hierarchy(depth: u32) -> Result<CantorHierarchy> {
    if depth < 1 || depth > MAX_DEPTH {
        return Err(WorkbenchError::Bounds(format!(
            "depth N = {depth} outside 1..={MAX_DEPTH}"
        )));
    }

    let mut intervals = BTreeMap::new();
    intervals.insert((0u32, 1u32), Interval::new(ratio(0), ratio(1)));

    let mut gaps = BTreeMap::new();
    for k in 0..=depth {
        for j in 1..=(1u32 << k) {
            let parent = intervals[&(k, j)].clone();
            let third = pow3_inv(k + 1);
            let a = &parent.left + &third;
            let b = &parent.right - &third;
            intervals.insert((k + 1, 2 * j - 1), Interval::new(parent.left.clone(), a.clone()));
            intervals.insert((k + 1, 2 * j), Interval::new(b.clone(), parent.right.clone()));
            if k <= depth.saturating_sub(1) {
                gaps.insert((k, j), Interval::new(a, b));
            }
        }
    }
    // Gaps above level N-1 are not used by any measure; drop them.
    gaps.retain(|(k, _), _| *k < depth);

    let mut halves = BTreeMap::new();
    for ((k, i), g) in &gaps {
        let quarter = g.length() / ratio(4);
        halves.insert(
            (*k, *i),
            Interval::new(&g.left + &quarter, &g.right - &quarter),
        );
    }

    // Gap endpoint -> gap length, for adjacency lookups.
    let mut by_right: BTreeMap<Rat, Rat> = BTreeMap::new();
    let mut by_left: BTreeMap<Rat, Rat> = BTreeMap::new();
    for g in gaps.values() {
        by_right.insert(g.right.clone(), g.length());
        by_left.insert(g.left.clone(), g.length());
    }

    let mut enlargements = BTreeMap::new();
    for ((k, j), iv) in &intervals {
        if *k > depth {
            continue;
        }
        // The gap adjacent on the left has its right endpoint at iv.left;
        // boundary intervals have no gap on the outer side.
        let left_ext = by_right.get(&iv.left).map(|g| g / ratio(4));
        let right_ext = by_left.get(&iv.right).map(|g| g / ratio(4));
        let left = match left_ext {
            Some(e) => &iv.left - e,
            None => iv.left.clone(),
        };
        let right = match right_ext {
            Some(e) => &iv.right + e,
            None => iv.right.clone(),
        };
        enlargements.insert((*k, *j), Interval::new(left, right));
    }

    Ok(CantorHierarchy {
        depth,
        intervals,
        gaps,
        halves,
        enlargements,
    })
}

impl CantorHierarchy {
    pub fn interval(&self, k: u32, j: u32) -> &Interval {
        &self.intervals[&(k, j)]
    }

    pub fn gap(&self, k: u32, i: u32) -> &Interval {
        &self.gaps[&(k, i)]
    }

    pub fn half(&self, k: u32, i: u32) -> &Interval {
        &self.halves[&(k, i)]
    }

    pub fn enlargement(&self, k: u32, j: u32) -> &Interval {
        &self.enlargements[&(k, j)]
    }

    /// Gap center `c_i^k` (equals the center of `I_i^k`).
    pub fn gap_center(&self, k: u32, i: u32) -> Rat {
        self.gaps[&(k, i)].center()
    }

    /// Half-height `1/(4 * 3^(k+1))` of the atom quadruple over gap level `k`.
    pub fn gap_offset(k: u32) -> Rat {
        pow3_inv(k + 1) / ratio(4)
    }

    /// All gap indices `(k, i)` with `k <= N - 1`, sorted.
    pub fn gap_indices(&self) -> Vec<(u32, u32)> {
        self.gaps.keys().copied().collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        fn dump(map: &BTreeMap<(u32, u32), Interval>) -> Vec<serde_json::Value> {
            map.iter()
                .map(|((k, j), iv)| {
                    serde_json::json!({
                        "k": k,
                        "j": j,
                        "left": format_rat(&iv.left),
                        "right": format_rat(&iv.right),
                    })
                })
                .collect()
        }
        serde_json::json!({
            "N": self.depth,
            "intervals": dump(&self.intervals),
            "gaps": dump(&self.gaps),
            "halves": dump(&self.halves),
            "enlargements": dump(&self.enlargements),
        })
    }
}

/// The canonical testing family: hat squares over all `I`, `L`, `G`, `H`
/// intervals plus the unit square itself.
pub fn canonical_family(hier: &CantorHierarchy, dim: usize) -> Vec<(String, Cube)> {
    let mut out = Vec::new();
    out.push((
        "unit".to_string(),
        hat_square(&Interval::new(ratio(0), ratio(1)), dim),
    ));
    for ((k, j), iv) in &hier.intervals {
        if *k > hier.depth {
            continue;
        }
        out.push((format!("I({k},{j})"), hat_square(iv, dim)));
    }
    for ((k, j), iv) in &hier.enlargements {
        out.push((format!("L({k},{j})"), hat_square(iv, dim)));
    }
    for ((k, i), iv) in &hier.gaps {
        out.push((format!("G({k},{i})"), hat_square(iv, dim)));
    }
    for ((k, i), iv) in &hier.halves {
        out.push((format!("H({k},{i})"), hat_square(iv, dim)));
    }
    out
}

/// Dyadic squares of the grid anchored at the unit hat square, to `depth`
/// levels, embedded with all trailing coordinates centered at zero so that
/// planar and embedded runs see identical geometry.
pub fn dyadic_family(depth: u32, dim: usize) -> Vec<(String, Cube)> {
    let mut out = Vec::new();
    for level in 0..=depth {
        let n = 1u32 << level;
        let side = rat(1, n as i64);
        let half = &side / ratio(2);
        for ix in 0..n {
            for iy in 0..n {
                let cx = rat(ix as i64, n as i64) + &half;
                let cy = rat(iy as i64, n as i64) - rat(1, 2) + &half;
                let mut center = vec![Rat::zero(); dim];
                center[0] = cx;
                center[1] = cy;
                out.push((format!("D({level},{ix},{iy})"), Cube::new(center, side.clone())));
            }
        }
    }
    out
}
