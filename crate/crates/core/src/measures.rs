//! Atomic measures of the counterexample construction.
//!
//! Five families are built over a depth-`N` middle-third hierarchy:
//!
//! * `omega_line` — the discrete Cantor approximation on the line:
//!   `2^(N+1)` point masses of weight `2^-(N-1)/4` at the centers of the
//!   level-`(N+1)` intervals.
//! * `omega_hat` — its planar spreading: four atoms of mass `2^-(N+2)` per
//!   gap `G_i^k`, `k <= N-1`, at `(c_i^k +- q_k, +- q_k)` with
//!   `q_k = 1/(4*3^(k+1))`; total mass `1 - 2^-N`.
//! * `sigma_dot_hat` — one axis atom of mass `s(k)` at each gap center.
//! * `sigma_hat` / `sigma_hat_plus` / `sigma_hat_minus` — two atoms (or the
//!   one-sided halves) of mass `s(k)` at `(z_i^k, +- h_k)`, where `z_i^k`
//!   is the root of the first Riesz component along the gap's middle half.
//!
//! Locations are exact rationals; only masses live in `f64`.

use std::collections::{BTreeMap, BTreeSet};

use num::traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WorkbenchError};
use crate::geometry::{CantorHierarchy, Cube, Screen};
use crate::kahan::KahanSum;
use crate::rat::{format_rat, parse_rat, rat, rat_pow, rat_sqrt_below, ratio, to_f64, Rat};

#[derive(Debug, Clone)]
pub struct Atom {
    pub loc: Vec<Rat>,
    pub loc_f64: Vec<f64>,
    pub mass: f64,
}

impl Atom {
    fn new(loc: Vec<Rat>, mass: f64) -> Self {
        let loc_f64 = loc.iter().map(to_f64).collect();
        Atom { loc, loc_f64, mass }
    }
}

/// A finite positive combination of point masses in `R^dim`.
///
/// Atoms are kept sorted by location; duplicate locations merge their
/// masses on construction, so every instance is a canonical representative
/// and summation order is deterministic.
#[derive(Debug, Clone)]
pub struct AtomicMeasure {
    pub dim: usize,
    pub atoms: Vec<Atom>,
}

impl AtomicMeasure {
    pub fn new(dim: usize, raw: Vec<(Vec<Rat>, f64)>) -> Self {
        let mut merged: BTreeMap<Vec<Rat>, f64> = BTreeMap::new();
        for (loc, mass) in raw {
            assert_eq!(loc.len(), dim, "atom dimension mismatch");
            assert!(mass > 0.0, "atom masses must be positive");
            *merged.entry(loc).or_insert(0.0) += mass;
        }
        let atoms = merged
            .into_iter()
            .map(|(loc, mass)| Atom::new(loc, mass))
            .collect();
        AtomicMeasure { dim, atoms }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        KahanSum::sum_iter(self.atoms.iter().map(|a| a.mass))
    }

    /// Atoms lying in the closed cube, decided exactly (boundary atoms
    /// included; the float screen only prunes clear cases).
    pub fn restrict(&self, cube: &Cube) -> AtomicMeasure {
        let screen = Screen::new(cube);
        let atoms = self
            .atoms
            .iter()
            .filter(|a| screen.contains(&a.loc, &a.loc_f64))
            .cloned()
            .collect();
        AtomicMeasure {
            dim: self.dim,
            atoms,
        }
    }

    /// Indices of atoms inside the closed cube.
    pub fn indices_in(&self, cube: &Cube) -> Vec<usize> {
        let screen = Screen::new(cube);
        self.atoms
            .iter()
            .enumerate()
            .filter(|(_, a)| screen.contains(&a.loc, &a.loc_f64))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn mass_in(&self, cube: &Cube) -> f64 {
        let screen = Screen::new(cube);
        KahanSum::sum_iter(
            self.atoms
                .iter()
                .filter(|a| screen.contains(&a.loc, &a.loc_f64))
                .map(|a| a.mass),
        )
    }

    /// Mirror image across `x_axis = 0` for the given coordinate.
    pub fn reflected(&self, axis: usize) -> AtomicMeasure {
        let raw = self
            .atoms
            .iter()
            .map(|a| {
                let mut loc = a.loc.clone();
                loc[axis] = -&loc[axis];
                (loc, a.mass)
            })
            .collect();
        AtomicMeasure::new(self.dim, raw)
    }

    /// Exact equality of atom locations and bitwise equality of masses.
    pub fn same_atoms(&self, other: &AtomicMeasure) -> bool {
        self.dim == other.dim
            && self.len() == other.len()
            && self
                .atoms
                .iter()
                .zip(&other.atoms)
                .all(|(a, b)| a.loc == b.loc && a.mass == b.mass)
    }

    /// Sum of two measures over the same space.
    pub fn merge(&self, other: &AtomicMeasure) -> AtomicMeasure {
        assert_eq!(self.dim, other.dim);
        let raw = self
            .atoms
            .iter()
            .chain(&other.atoms)
            .map(|a| (a.loc.clone(), a.mass))
            .collect();
        AtomicMeasure::new(self.dim, raw)
    }

    /// Every mass scaled by `t > 0`.
    pub fn scaled(&self, t: f64) -> AtomicMeasure {
        assert!(t > 0.0);
        let raw = self
            .atoms
            .iter()
            .map(|a| (a.loc.clone(), a.mass * t))
            .collect();
        AtomicMeasure::new(self.dim, raw)
    }

    pub fn masses(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.mass).collect()
    }

    /// Flat coordinate buffer (`len * dim`), for kernel-heavy loops.
    pub fn flat_coords(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.dim);
        for a in &self.atoms {
            out.extend_from_slice(&a.loc_f64);
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(MeasureJson::from(self)).expect("measure to json")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<AtomicMeasure> {
        let mj: MeasureJson = serde_json::from_value(v.clone())?;
        mj.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct AtomJson {
    x: Vec<String>,
    mass: f64,
}

#[derive(Serialize, Deserialize)]
struct MeasureJson {
    dim: usize,
    atoms: Vec<AtomJson>,
}

impl From<&AtomicMeasure> for MeasureJson {
    fn from(m: &AtomicMeasure) -> Self {
        MeasureJson {
            dim: m.dim,
            atoms: m
                .atoms
                .iter()
                .map(|a| AtomJson {
                    x: a.loc.iter().map(format_rat).collect(),
                    mass: a.mass,
                })
                .collect(),
        }
    }
}

impl TryFrom<MeasureJson> for AtomicMeasure {
    type Error = WorkbenchError;

    fn try_from(mj: MeasureJson) -> Result<AtomicMeasure> {
        let mut raw = Vec::with_capacity(mj.atoms.len());
        for a in mj.atoms {
            let mut loc = Vec::with_capacity(a.x.len());
            for s in &a.x {
                loc.push(
                    parse_rat(s)
                        .ok_or_else(|| WorkbenchError::Parse(format!("bad rational '{s}'")))?,
                );
            }
            raw.push((loc, a.mass));
        }
        Ok(AtomicMeasure::new(mj.dim, raw))
    }
}

/// How the level-`k` mass is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MassRule {
    /// `s(k) = (2/9)^k`, the planar rule; always used when `alpha = 1`.
    PlanarAlpha1,
    /// `s(k) = (1/3)^(k(3-2a)) * (1/3)^k` as printed for general `alpha`
    /// in dimension two.  Does not reduce to the planar rule at `alpha = 1`;
    /// kept as a separate switch on purpose.
    PrintedGeneral,
    /// Override hook: `s(k) = base^k`.
    Geometric { base: f64 },
}

impl MassRule {
    pub fn mass(&self, alpha: f64, k: u32) -> f64 {
        match self {
            MassRule::PlanarAlpha1 => to_f64(&rat_pow(&rat(2, 9), k)),
            MassRule::PrintedGeneral => {
                let exponent = -(k as f64) * (4.0 - 2.0 * alpha);
                3f64.powf(exponent)
            }
            MassRule::Geometric { base } => base.powi(k as i32),
        }
    }
}

/// Weight scheme: fractional order, ambient dimension, mass rule, and the
/// rational factor scaling the vertical atom offsets (1 except in the
/// steep regime `n-1 < alpha < n`, where slopes must stay below
/// `sqrt(n - alpha)`).
#[derive(Debug, Clone)]
pub struct WeightScheme {
    pub alpha: f64,
    pub dim: usize,
    pub mass_rule: MassRule,
    pub offset_scale: Rat,
}

impl WeightScheme {
    /// The planar `alpha = 1`, `n = 2` scheme.
    pub fn planar() -> Self {
        WeightScheme {
            alpha: 1.0,
            dim: 2,
            mass_rule: MassRule::PlanarAlpha1,
            offset_scale: ratio(1),
        }
    }

    pub fn mass(&self, k: u32) -> f64 {
        self.mass_rule.mass(self.alpha, k)
    }

    /// Vertical offset `offset_scale / (4 * 3^(k+1))`, exact.
    pub fn vertical_offset(&self, k: u32) -> Rat {
        &self.offset_scale * CantorHierarchy::gap_offset(k)
    }

    /// Largest admissible atom-pair slope: `offset_scale` (which is 1 in the
    /// flat regime and a rational just below `sqrt(n - alpha)` otherwise).
    pub fn slope_bound(&self) -> Rat {
        if self.offset_scale > ratio(1) {
            self.offset_scale.clone()
        } else {
            ratio(1)
        }
    }
}

/// Scheme for general `(alpha, n)`:
/// * `alpha = n - 1` — the planar construction embedded in `span{e1, e2}`;
/// * `alpha < n - 1` — planar geometry, printed general masses;
/// * `n - 1 < alpha < n` — vertical offsets multiplied by a rational just
///   below `sqrt(n - alpha) < 1` so all slopes respect the steeper cone.
pub fn general_scheme(alpha: f64, n: usize) -> Result<WeightScheme> {
    if n < 2 {
        return Err(WorkbenchError::Domain(format!("dimension n = {n} < 2")));
    }
    if !(0.0..).contains(&alpha) || alpha >= n as f64 {
        return Err(WorkbenchError::Domain(format!(
            "alpha = {alpha} outside [0, {n})"
        )));
    }
    let boundary = (n - 1) as f64;
    if (alpha - boundary).abs() < 1e-12 {
        return Ok(WeightScheme {
            alpha,
            dim: n,
            mass_rule: MassRule::PlanarAlpha1,
            offset_scale: ratio(1),
        });
    }
    let offset_scale = if alpha > boundary {
        let gap = Rat::from_float(n as f64 - alpha)
            .ok_or_else(|| WorkbenchError::Domain("alpha not finite".into()))?;
        rat_sqrt_below(&gap)
    } else {
        ratio(1)
    };
    Ok(WeightScheme {
        alpha,
        dim: n,
        mass_rule: MassRule::PrintedGeneral,
        offset_scale,
    })
}

fn embed(mut xy: Vec<Rat>, dim: usize) -> Vec<Rat> {
    while xy.len() < dim {
        xy.push(Rat::zero());
    }
    xy
}

/// Discrete approximation of the Cantor measure on the line: atoms of mass
/// `2^-(N+1)` at the level-`(N+1)` interval centers.  Total mass one.
pub fn build_omega_line(hier: &CantorHierarchy) -> AtomicMeasure {
    let n = hier.depth;
    let m = (2f64).powi(-(n as i32) - 1);
    let raw = (1..=(1u32 << (n + 1)))
        .map(|j| (vec![hier.interval(n + 1, j).center()], m))
        .collect();
    AtomicMeasure::new(1, raw)
}

/// The planar spreading: four atoms of mass `2^-(N+2)` per gap, at
/// `(c +- q_k, +- scale * q_k)`.
pub fn build_omega_hat(hier: &CantorHierarchy, scheme: &WeightScheme) -> AtomicMeasure {
    let n = hier.depth;
    let m = (2f64).powi(-(n as i32) - 2);
    let mut raw = Vec::new();
    for (k, i) in hier.gap_indices() {
        let c = hier.gap_center(k, i);
        let q = CantorHierarchy::gap_offset(k);
        let h = scheme.vertical_offset(k);
        for sx in [1i64, -1] {
            for sy in [1i64, -1] {
                let x = &c + &q * ratio(sx);
                let y = &h * ratio(sy);
                raw.push((embed(vec![x, y], scheme.dim), m));
            }
        }
    }
    AtomicMeasure::new(scheme.dim, raw)
}

/// One axis atom of mass `s(k)` at each gap center.
pub fn build_sigma_dot_hat(hier: &CantorHierarchy, scheme: &WeightScheme) -> AtomicMeasure {
    let raw = hier
        .gap_indices()
        .into_iter()
        .map(|(k, i)| {
            let c = hier.gap_center(k, i);
            (embed(vec![c, Rat::zero()], scheme.dim), scheme.mass(k))
        })
        .collect();
    AtomicMeasure::new(scheme.dim, raw)
}

/// Which side of the axis `sigma_hat` keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaSide {
    Both,
    Plus,
    Minus,
}

/// Two atoms (or the one-sided half) of mass `s(k)` at `(z_i^k, +- h_k)`.
/// Every zero must lie strictly inside its gap's middle half.
pub fn build_sigma_hat(
    hier: &CantorHierarchy,
    zeros: &BTreeMap<(u32, u32), Rat>,
    scheme: &WeightScheme,
    side: SigmaSide,
) -> Result<AtomicMeasure> {
    let mut raw = Vec::new();
    for (k, i) in hier.gap_indices() {
        let z = zeros.get(&(k, i)).ok_or_else(|| {
            WorkbenchError::Domain(format!("missing zero for gap (k={k}, i={i})"))
        })?;
        let half = hier.half(k, i);
        if !(z > &half.left && z < &half.right) {
            return Err(WorkbenchError::Domain(format!(
                "zero {} for gap (k={k}, i={i}) is outside the open middle half",
                to_f64(z)
            )));
        }
        let h = scheme.vertical_offset(k);
        let s = scheme.mass(k);
        if side != SigmaSide::Minus {
            raw.push((embed(vec![z.clone(), h.clone()], scheme.dim), s));
        }
        if side != SigmaSide::Plus {
            raw.push((embed(vec![z.clone(), -&h], scheme.dim), s));
        }
    }
    Ok(AtomicMeasure::new(scheme.dim, raw))
}

/// All atom pairs `y, z` with `y1 != z1` and `|y2 - z2| > bound * |y1 - z1|`.
/// A fast float prefilter handles the bulk; near-boundary pairs are decided
/// exactly on the rationals.
pub fn check_slope_property(mu: &AtomicMeasure, bound: &Rat) -> Vec<(usize, usize)> {
    assert!(mu.dim >= 2, "slope check needs a planar measure");
    let b = to_f64(bound);
    let mut violations = Vec::new();
    for i in 0..mu.len() {
        for j in (i + 1)..mu.len() {
            let a = &mu.atoms[i];
            let c = &mu.atoms[j];
            let dx = (a.loc_f64[0] - c.loc_f64[0]).abs();
            let dy = (a.loc_f64[1] - c.loc_f64[1]).abs();
            if dx == 0.0 && a.loc[0] == c.loc[0] {
                continue;
            }
            let rhs = b * dx;
            if dy <= rhs * (1.0 - 1e-12) {
                continue;
            }
            // Near the boundary or beyond: decide exactly.
            let dx_r = (&a.loc[0] - &c.loc[0]).abs();
            if dx_r.is_zero() {
                continue;
            }
            let dy_r = (&a.loc[1] - &c.loc[1]).abs();
            if dy_r > bound * &dx_r {
                violations.push((i, j));
            }
        }
    }
    violations
}

/// Locations shared by two measures, exactly.
pub fn common_support(a: &AtomicMeasure, b: &AtomicMeasure) -> Vec<Vec<Rat>> {
    let set: BTreeSet<&[Rat]> = a.atoms.iter().map(|at| at.loc.as_slice()).collect();
    b.atoms
        .iter()
        .filter(|at| set.contains(at.loc.as_slice()))
        .map(|at| at.loc.clone())
        .collect()
}
