//! Dyadic grids, deeply embedded subcube families, and overlap counting.
//!
//! A cube `J` is `(r, eps)`-deeply embedded in `K` when `J` is a grid
//! descendant of `K` with `l(J) <= 2^-r l(K)` and
//! `dist(J, dK) >= (1/2) l(J)^eps l(K)^(1-eps)`.  With `eps` rational the
//! distance comparison is decided exactly by clearing the fractional powers
//! to integer exponents.

use num::traits::Zero;

use crate::error::{Result, WorkbenchError};
use crate::rat::{rat, ratio, Rat};

use super::Cube;

/// Parameters of deep embedding: scale gap `r`, boundary exponent `eps`
/// (rational in (0,1]), expansion factor `gamma > 1`, overlap bound `beta`.
#[derive(Debug, Clone)]
pub struct DeepEmbeddingParams {
    pub r: u32,
    pub eps: Rat,
    pub gamma: Rat,
    pub beta: usize,
}

impl Default for DeepEmbeddingParams {
    fn default() -> Self {
        DeepEmbeddingParams {
            r: 3,
            eps: rat(1, 2),
            gamma: ratio(2),
            beta: 16,
        }
    }
}

/// A cube of the dyadic grid generated by an anchor cube: `level` counts
/// halvings below the anchor (negative levels are ancestors) and `idx` the
/// lattice position at that level relative to the anchor's lower corner.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DyadicCube {
    pub level: i32,
    pub idx: Vec<i64>,
}

/// The grid generated by a base cube: every `DyadicCube` resolves to real
/// coordinates through this.
#[derive(Debug, Clone)]
pub struct DyadicGrid {
    /// Lower corner of the level-0 cube.
    pub origin: Vec<Rat>,
    /// Side of the level-0 cube.
    pub base: Rat,
}

impl DyadicGrid {
    pub fn new(origin: Vec<Rat>, base: Rat) -> Self {
        assert!(base > Rat::zero());
        DyadicGrid { origin, base }
    }

    /// Grid over the unit hat square `[0,1] x [-1/2,1/2]`, embedded with
    /// trailing coordinates anchored at `-1/2` as well.
    pub fn unit_hat(dim: usize) -> Self {
        let mut origin = vec![rat(-1, 2); dim];
        origin[0] = ratio(0);
        DyadicGrid::new(origin, ratio(1))
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn side(&self, level: i32) -> Rat {
        if level >= 0 {
            &self.base / ratio(1i64 << level)
        } else {
            &self.base * ratio(1i64 << (-level))
        }
    }

    pub fn cube(&self, dc: &DyadicCube) -> Cube {
        let side = self.side(dc.level);
        let half = &side / ratio(2);
        let center = self
            .origin
            .iter()
            .zip(&dc.idx)
            .map(|(o, i)| o + &side * ratio(*i) + &half)
            .collect();
        Cube::new(center, side)
    }

    /// Locate a cube in the grid; alignment error when it is not a grid cube.
    pub fn locate(&self, cube: &Cube) -> Result<DyadicCube> {
        // side = base / 2^level (level may be negative)
        let ratio_side = &cube.side / &self.base;
        let mut level = 0i32;
        let mut s = ratio_side.clone();
        let one = ratio(1);
        while s < one {
            s = &s * ratio(2);
            level += 1;
            if level > 62 {
                return Err(WorkbenchError::Alignment(format!(
                    "side ratio {ratio_side} too small"
                )));
            }
        }
        while s > one {
            s = &s / ratio(2);
            level -= 1;
            if level < -62 {
                return Err(WorkbenchError::Alignment(format!(
                    "side ratio {ratio_side} too large"
                )));
            }
        }
        if s != one {
            return Err(WorkbenchError::Alignment(format!(
                "side ratio {ratio_side} is not a power of two"
            )));
        }
        let side = self.side(level);
        let half = &side / ratio(2);
        let mut idx = Vec::with_capacity(self.dim());
        for (o, c) in self.origin.iter().zip(&cube.center) {
            let t = (c - &half - o) / &side;
            if !t.is_integer() {
                return Err(WorkbenchError::Alignment(format!(
                    "corner offset {t} is not integral"
                )));
            }
            let i = t.to_integer();
            idx.push(i64::try_from(i).map_err(|_| {
                WorkbenchError::Alignment("grid index out of range".into())
            })?);
        }
        Ok(DyadicCube { level, idx })
    }

    pub fn children(&self, dc: &DyadicCube) -> Vec<DyadicCube> {
        let dim = dc.idx.len();
        let mut out = Vec::with_capacity(1 << dim);
        for mask in 0..(1u32 << dim) {
            let idx = dc
                .idx
                .iter()
                .enumerate()
                .map(|(d, i)| 2 * i + ((mask >> d) & 1) as i64)
                .collect();
            out.push(DyadicCube {
                level: dc.level + 1,
                idx,
            });
        }
        out
    }

    pub fn parent(&self, dc: &DyadicCube) -> DyadicCube {
        DyadicCube {
            level: dc.level - 1,
            idx: dc.idx.iter().map(|i| i.div_euclid(2)).collect(),
        }
    }

    pub fn ancestor(&self, dc: &DyadicCube, generations: u32) -> DyadicCube {
        let mut cur = dc.clone();
        for _ in 0..generations {
            cur = self.parent(&cur);
        }
        cur
    }
}

/// Exact test of `dist(J, dK) >= (1/2) l(J)^eps l(K)^(1-eps)` for rational
/// `eps = p/q`: both sides are nonnegative, so raise to the `q`-th power.
fn boundary_clearance_ok(dist: &Rat, lj: &Rat, lk: &Rat, eps: &Rat) -> bool {
    let p = eps.numer();
    let q = eps.denom();
    let p: u32 = p.try_into().expect("eps numerator fits u32");
    let q: u32 = q.try_into().expect("eps denominator fits u32");
    assert!(p <= q && q > 0, "eps must lie in (0, 1]");
    // dist^q >= (1/2)^q * lj^p * lk^(q-p)
    let lhs = crate::rat::rat_pow(dist, q);
    let rhs = crate::rat::rat_pow(&rat(1, 2), q)
        * crate::rat::rat_pow(lj, p)
        * crate::rat::rat_pow(lk, q - p);
    lhs >= rhs
}

/// Whether `J` is `(r, eps)`-deeply embedded in `K` (both grid cubes).
pub fn is_deeply_embedded(
    grid: &DyadicGrid,
    j: &DyadicCube,
    k: &DyadicCube,
    params: &DeepEmbeddingParams,
) -> bool {
    if j.level < k.level + params.r as i32 {
        return false;
    }
    let jc = grid.cube(j);
    let kc = grid.cube(k);
    match jc.dist_to_boundary(&kc) {
        Some(d) => boundary_clearance_ok(&d, &jc.side, &kc.side, &params.eps),
        None => false,
    }
}

/// Maximal `(r, eps)`-deeply embedded grid subcubes of `K`, enumerated down
/// to `max_rel_depth` levels below `K`.  Maximality: a cube is emitted when
/// it is deeply embedded and none of its proper grid ancestors inside `K` is.
pub fn deep_embedded_family(
    grid: &DyadicGrid,
    k: &DyadicCube,
    params: &DeepEmbeddingParams,
    max_rel_depth: u32,
) -> Vec<DyadicCube> {
    let mut out = Vec::new();
    let mut stack = vec![k.clone()];
    while let Some(cur) = stack.pop() {
        if cur.level > k.level && is_deeply_embedded(grid, &cur, k, params) {
            out.push(cur);
            continue;
        }
        if (cur.level - k.level) as u32 >= max_rel_depth {
            continue;
        }
        let mut kids = grid.children(&cur);
        // Deterministic order: children sorted by index.
        kids.sort_by(|a, b| a.idx.cmp(&b.idx));
        for kid in kids.into_iter().rev() {
            stack.push(kid);
        }
    }
    out.sort_by(|a, b| (a.level, &a.idx).cmp(&(b.level, &b.idx)));
    out
}

/// The level-`l` refinement: members of the deep family of the `(l-1)`-th
/// ancestor of `K` that land inside some member of the deep family of `K`
/// itself.  `l = 0` is the identity convention and returns the base family.
pub fn refined_deep_family(
    grid: &DyadicGrid,
    k: &DyadicCube,
    l: u32,
    params: &DeepEmbeddingParams,
    max_rel_depth: u32,
) -> Vec<DyadicCube> {
    let base = deep_embedded_family(grid, k, params, max_rel_depth);
    if l == 0 {
        return base;
    }
    let anc = grid.ancestor(k, l - 1);
    let candidates = deep_embedded_family(grid, &anc, params, max_rel_depth + (l - 1));
    let base_cubes: Vec<Cube> = base.iter().map(|c| grid.cube(c)).collect();
    candidates
        .into_iter()
        .filter(|j| {
            let jc = grid.cube(j);
            base_cubes.iter().any(|b| jc.subset_of(b))
        })
        .collect()
}

/// Max over sample points of the number of gamma-dilated cubes covering the
/// point.  Samples: the supplied extra points (atom locations) plus a 64x64
/// uniform lattice in the first two coordinates of `window` (trailing
/// coordinates pinned to the window center).
pub fn overlap_count(cubes: &[Cube], gamma: &Rat, window: &Cube, extra: &[Vec<Rat>]) -> usize {
    let screens: Vec<super::Screen> = cubes
        .iter()
        .map(|c| super::Screen::new(&c.dilate(gamma)))
        .collect();
    let mut best = 0usize;
    let mut check = |p: &[Rat]| {
        let pf = crate::rat::point_f64(p);
        let hits = screens.iter().filter(|s| s.contains(p, &pf)).count();
        if hits > best {
            best = hits;
        }
    };
    for p in extra {
        check(p);
    }
    let side = &window.side;
    let half = side / ratio(2);
    let n = 64i64;
    let ny = if window.dim() >= 2 { n } else { 1 };
    for ix in 0..n {
        for iy in 0..ny {
            let mut p = window.center.clone();
            // offset in (-1/2, 1/2) * side, strictly interior lattice
            p[0] = &window.center[0] - &half + side * rat(2 * ix + 1, 2 * n);
            if p.len() > 1 {
                p[1] = &window.center[1] - &half + side * rat(2 * iy + 1, 2 * n);
            }
            check(&p);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::ratio;

    fn unit_grid() -> (DyadicGrid, DyadicCube) {
        let grid = DyadicGrid::new(vec![ratio(0), ratio(0)], ratio(1));
        let root = DyadicCube {
            level: 0,
            idx: vec![0, 0],
        };
        (grid, root)
    }

    /// Brute-force oracle: enumerate every grid cube to the depth limit,
    /// keep the deeply embedded ones, and drop any with a deeply embedded
    /// proper ancestor.  Independent of the recursive implementation.
    fn brute_force_family(
        grid: &DyadicGrid,
        k: &DyadicCube,
        params: &DeepEmbeddingParams,
        depth: u32,
    ) -> Vec<DyadicCube> {
        let mut all = Vec::new();
        let mut frontier = vec![k.clone()];
        for _ in 0..depth {
            let mut next = Vec::new();
            for c in &frontier {
                next.extend(grid.children(c));
            }
            all.extend(next.iter().cloned());
            frontier = next;
        }
        let mut hits: Vec<DyadicCube> = all
            .into_iter()
            .filter(|j| is_deeply_embedded(grid, j, k, params))
            .collect();
        hits.retain(|j| {
            let mut anc = grid.parent(j);
            while anc.level > k.level {
                if is_deeply_embedded(grid, &anc, k, params) {
                    return false;
                }
                anc = grid.parent(&anc);
            }
            true
        });
        hits.sort_by(|a, b| (a.level, &a.idx).cmp(&(b.level, &b.idx)));
        hits
    }

    #[test]
    fn unit_square_r1_eps1_counts() {
        let (grid, root) = unit_grid();
        let params = DeepEmbeddingParams {
            r: 1,
            eps: ratio(1),
            gamma: ratio(2),
            beta: 16,
        };
        // Depth 1: every child touches the boundary -> empty.
        let fam = deep_embedded_family(&grid, &root, &params, 1);
        assert!(fam.is_empty());
        // Depth 2: exactly the four central grandchildren qualify.
        let fam = deep_embedded_family(&grid, &root, &params, 2);
        assert_eq!(fam.len(), 4);
        for j in &fam {
            assert_eq!(j.level, 2);
            assert!(j.idx.iter().all(|i| *i == 1 || *i == 2));
        }
    }

    #[test]
    fn matches_brute_force_enumeration() {
        let (grid, root) = unit_grid();
        for (r, eps) in [(1u32, ratio(1)), (1, rat(1, 2)), (2, rat(1, 2)), (3, rat(3, 4))] {
            let params = DeepEmbeddingParams {
                r,
                eps,
                gamma: ratio(2),
                beta: 16,
            };
            let fast = deep_embedded_family(&grid, &root, &params, 6);
            let slow = brute_force_family(&grid, &root, &params, 6);
            assert_eq!(fast, slow, "r={r}");
        }
    }

    #[test]
    fn family_is_pairwise_disjoint() {
        let (grid, root) = unit_grid();
        for r in [1u32, 2, 3] {
            let params = DeepEmbeddingParams {
                r,
                eps: rat(1, 2),
                gamma: ratio(2),
                beta: 16,
            };
            let fam = deep_embedded_family(&grid, &root, &params, 6);
            for (a, c1) in fam.iter().enumerate() {
                for c2 in fam.iter().skip(a + 1) {
                    let q1 = grid.cube(c1);
                    let q2 = grid.cube(c2);
                    // Disjoint interiors: some axis separates the open cubes.
                    let separated = q1
                        .center
                        .iter()
                        .zip(&q2.center)
                        .any(|(x, y)| {
                            let d = if x >= y { x - y } else { y - x };
                            d >= (&q1.side + &q2.side) / ratio(2)
                        });
                    assert!(separated, "cubes overlap");
                }
            }
        }
    }

    #[test]
    fn too_large_r_gives_empty_family() {
        let (grid, root) = unit_grid();
        let params = DeepEmbeddingParams {
            r: 7,
            eps: rat(1, 2),
            gamma: ratio(2),
            beta: 16,
        };
        assert!(deep_embedded_family(&grid, &root, &params, 6).is_empty());
    }

    #[test]
    fn refined_level_zero_is_base_family() {
        let (grid, root) = unit_grid();
        let params = DeepEmbeddingParams::default();
        let base = deep_embedded_family(&grid, &root, &params, 6);
        let refined = refined_deep_family(&grid, &root, 0, &params, 6);
        assert_eq!(base, refined);
    }

    #[test]
    fn refined_members_lie_in_base_members() {
        let (grid, root) = unit_grid();
        // Work below the root so ancestors exist.
        let k = DyadicCube {
            level: 2,
            idx: vec![1, 1],
        };
        let params = DeepEmbeddingParams {
            r: 1,
            eps: rat(1, 2),
            gamma: ratio(2),
            beta: 16,
        };
        let base = deep_embedded_family(&grid, &k, &params, 5);
        for l in 1..=2u32 {
            let refined = refined_deep_family(&grid, &k, l, &params, 5);
            for j in &refined {
                let jc = grid.cube(j);
                assert!(base.iter().any(|b| jc.subset_of(&grid.cube(b))));
            }
        }
    }

    #[test]
    fn overlap_counts_simple_cases() {
        let unit = Cube::new(vec![rat(1, 2), ratio(0)], ratio(1));
        let a = Cube::new(vec![rat(1, 4), ratio(0)], rat(1, 4));
        let b = Cube::new(vec![rat(3, 4), ratio(0)], rat(1, 4));
        assert_eq!(overlap_count(&[a.clone(), b], &ratio(1), &unit, &[]), 1);
        assert_eq!(
            overlap_count(&[a.clone(), a.clone()], &ratio(1), &unit, &[]),
            2
        );
    }

    #[test]
    fn locate_round_trip_and_alignment_error() {
        let (grid, _) = unit_grid();
        let dc = DyadicCube {
            level: 3,
            idx: vec![5, 2],
        };
        let cube = grid.cube(&dc);
        assert_eq!(grid.locate(&cube).unwrap(), dc);

        let skew = Cube::new(vec![rat(1, 3), rat(1, 3)], rat(1, 8));
        assert!(matches!(
            grid.locate(&skew),
            Err(WorkbenchError::Alignment(_))
        ));
    }
}
