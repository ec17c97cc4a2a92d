//! Exact evaluation of Poisson integrals, Muckenhoupt constants, energies,
//! Haar-tail norms, and the pivotal/energy condition sums over atomic
//! measures.
//!
//! Two Poisson integrals appear:
//!
//! * standard:    `P^a(Q, mu)  = sum m (l(Q) / (l(Q) + |x - c_Q|)^(n+1-a))`
//! * reproducing: `Pr^a(Q, mu) = sum m (l(Q) / (l(Q) + |x - c_Q|)^2)^(n-a)`
//!
//! For `n - 1 <= a < n` the standard integral is dominated by the
//! reproducing one, with equality at `a = n - 1`; the order reverses below.
//! Muckenhoupt constants use the reproducing kernel with a hole; energy and
//! pivotal sums use the standard kernel.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, WorkbenchError};
use crate::geometry::{
    overlap_count, refined_deep_family, Cube, DeepEmbeddingParams, DyadicCube, DyadicGrid, Screen,
};
use crate::kahan::KahanSum;
use crate::measures::AtomicMeasure;
use crate::rat::Rat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoissonKind {
    Standard,
    Reproducing,
}

/// Precomputed kernel data for one cube; the planar case `n + 1 - a = 2`
/// (and `n - a = 1`) skips `powf` entirely.
struct PoissonTerm {
    ell: f64,
    kind: PoissonKind,
    exponent: f64,
    fast: bool,
}

impl PoissonTerm {
    fn new(q: &Cube, dim: usize, alpha: f64, kind: PoissonKind) -> Self {
        let n = dim as f64;
        let exponent = match kind {
            PoissonKind::Standard => n + 1.0 - alpha,
            PoissonKind::Reproducing => n - alpha,
        };
        let fast = match kind {
            PoissonKind::Standard => (exponent - 2.0).abs() < 1e-15,
            PoissonKind::Reproducing => (exponent - 1.0).abs() < 1e-15,
        };
        PoissonTerm {
            ell: q.side_f64(),
            kind,
            exponent,
            fast,
        }
    }

    #[inline]
    fn eval(&self, dist: f64) -> f64 {
        let s = self.ell + dist;
        match self.kind {
            PoissonKind::Standard => {
                if self.fast {
                    self.ell / (s * s)
                } else {
                    self.ell / s.powf(self.exponent)
                }
            }
            PoissonKind::Reproducing => {
                let base = self.ell / (s * s);
                if self.fast {
                    base
                } else {
                    base.powf(self.exponent)
                }
            }
        }
    }
}

#[inline]
fn dist_to(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Poisson integral of `mu` on `Q`, optionally skipping atoms inside a
/// closed hole cube.  The sum is exact over atoms in a fixed order.
pub fn poisson(q: &Cube, mu: &AtomicMeasure, alpha: f64, kind: PoissonKind, hole: Option<&Cube>) -> f64 {
    let term = PoissonTerm::new(q, mu.dim, alpha, kind);
    let cq = q.center_f64();
    let hole_screen = hole.map(Screen::new);
    let mut acc = KahanSum::new();
    for atom in &mu.atoms {
        if let Some(h) = &hole_screen {
            if h.contains(&atom.loc, &atom.loc_f64) {
                continue;
            }
        }
        acc.add(atom.mass * term.eval(dist_to(&atom.loc_f64, &cq)));
    }
    acc.value()
}

/// Poisson integral of the restriction of `mu` to `inside` minus a hole:
/// atoms must lie in `inside` (closed) and outside `hole` (closed).
pub fn poisson_tail_in(
    q: &Cube,
    mu: &AtomicMeasure,
    alpha: f64,
    kind: PoissonKind,
    inside: &Cube,
    hole: Option<&Cube>,
) -> f64 {
    let term = PoissonTerm::new(q, mu.dim, alpha, kind);
    let cq = q.center_f64();
    let inside_screen = Screen::new(inside);
    let hole_screen = hole.map(Screen::new);
    let mut acc = KahanSum::new();
    for atom in &mu.atoms {
        if !inside_screen.contains(&atom.loc, &atom.loc_f64) {
            continue;
        }
        if let Some(h) = &hole_screen {
            if h.contains(&atom.loc, &atom.loc_f64) {
                continue;
            }
        }
        acc.add(atom.mass * term.eval(dist_to(&atom.loc_f64, &cq)));
    }
    acc.value()
}

/// One-tailed Muckenhoupt quantity on a single cube:
/// `Pr^a(Q, 1_{Q^c} sigma) |Q|_omega / |Q|^(1 - a/n)`.
pub fn a2_one_tailed(sigma: &AtomicMeasure, omega: &AtomicMeasure, q: &Cube, alpha: f64) -> f64 {
    let n = sigma.dim as f64;
    let term = PoissonTerm::new(q, sigma.dim, alpha, PoissonKind::Reproducing);
    let screen = Screen::new(q);
    let cq = q.center_f64();
    let mut acc = KahanSum::new();
    for atom in &sigma.atoms {
        if screen.contains(&atom.loc, &atom.loc_f64) {
            continue;
        }
        acc.add(atom.mass * term.eval(dist_to(&atom.loc_f64, &cq)));
    }
    let omega_mass = omega.mass_in(q);
    let vol = q.volume_f64();
    acc.value() * omega_mass / vol.powf(1.0 - alpha / n)
}

/// One-tailed quantity with membership supplied by a precomputed index:
/// `tail_in` lists (ascending) the atoms of the tail measure inside `Q`,
/// `mass_in` the atoms of the mass measure inside `Q`.
fn a2_one_tailed_indexed_inner(
    tail_mu: &AtomicMeasure,
    mass_mu: &AtomicMeasure,
    q: &Cube,
    alpha: f64,
    tail_in: &[usize],
    mass_in: &[usize],
) -> f64 {
    let n = tail_mu.dim as f64;
    let term = PoissonTerm::new(q, tail_mu.dim, alpha, PoissonKind::Reproducing);
    let cq = q.center_f64();
    let mut acc = KahanSum::new();
    let mut skip = tail_in.iter().peekable();
    for (i, atom) in tail_mu.atoms.iter().enumerate() {
        if let Some(&&next) = skip.peek() {
            if next == i {
                skip.next();
                continue;
            }
        }
        acc.add(atom.mass * term.eval(dist_to(&atom.loc_f64, &cq)));
    }
    let mass = KahanSum::sum_iter(mass_in.iter().map(|&i| mass_mu.atoms[i].mass));
    let vol = q.volume_f64();
    acc.value() * mass / vol.powf(1.0 - alpha / n)
}

/// Supremum of the one-tailed quantity over an indexed family
/// (`Pr^a(Q, 1_{Q^c} sigma) |Q|_omega / ...`).
pub fn a2_sweep_indexed(
    sigma: &AtomicMeasure,
    omega: &AtomicMeasure,
    index: &crate::riesz::FamilyIndex,
    alpha: f64,
) -> Result<(f64, String)> {
    if index.cubes.is_empty() {
        return Err(WorkbenchError::EmptyFamily);
    }
    let scored: Vec<f64> = (0..index.cubes.len())
        .into_par_iter()
        .map(|ci| {
            a2_one_tailed_indexed_inner(
                sigma,
                omega,
                &index.cubes[ci],
                alpha,
                &index.sigma_idx[ci],
                &index.omega_idx[ci],
            )
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (ci, v) in scored.iter().enumerate() {
        if *v > best.0 {
            best = (*v, ci);
        }
    }
    Ok((best.0, index.tags[best.1].clone()))
}

/// Dual sweep: `Pr^a(Q, 1_{Q^c} omega) |Q|_sigma / ...`.
pub fn a2_sweep_indexed_dual(
    sigma: &AtomicMeasure,
    omega: &AtomicMeasure,
    index: &crate::riesz::FamilyIndex,
    alpha: f64,
) -> Result<(f64, String)> {
    if index.cubes.is_empty() {
        return Err(WorkbenchError::EmptyFamily);
    }
    let scored: Vec<f64> = (0..index.cubes.len())
        .into_par_iter()
        .map(|ci| {
            a2_one_tailed_indexed_inner(
                omega,
                sigma,
                &index.cubes[ci],
                alpha,
                &index.omega_idx[ci],
                &index.sigma_idx[ci],
            )
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (ci, v) in scored.iter().enumerate() {
        if *v > best.0 {
            best = (*v, ci);
        }
    }
    Ok((best.0, index.tags[best.1].clone()))
}

/// Classical (no-tail) Muckenhoupt quantity `|Q|_omega |Q|_sigma /
/// |Q|^(2(1 - a/n))`; meaningful when the measures share no point masses.
pub fn a2_classical(sigma: &AtomicMeasure, omega: &AtomicMeasure, q: &Cube, alpha: f64) -> f64 {
    let n = sigma.dim as f64;
    let vol = q.volume_f64();
    omega.mass_in(q) * sigma.mass_in(q) / vol.powf(2.0 * (1.0 - alpha / n))
}

/// Supremum of the one-tailed quantity over a tagged family.
pub fn a2_sweep(
    sigma: &AtomicMeasure,
    omega: &AtomicMeasure,
    family: &[(String, Cube)],
    alpha: f64,
) -> Result<(f64, String)> {
    if family.is_empty() {
        return Err(WorkbenchError::EmptyFamily);
    }
    let scored: Vec<(f64, &str)> = family
        .par_iter()
        .map(|(tag, q)| (a2_one_tailed(sigma, omega, q, alpha), tag.as_str()))
        .collect();
    let mut best = (f64::NEG_INFINITY, "");
    for (v, t) in scored {
        if v > best.0 {
            best = (v, t);
        }
    }
    Ok((best.0, best.1.to_string()))
}

/// Normalized self-energy `E(J, mu)^2 = (2/|J|_mu^2) sum_{a,b} m_a m_b
/// (|x_a - x_b| / l(J))^2` over atoms in the closed cube `J`; zero-mass
/// cubes contribute zero by convention.
pub fn energy_e2(j: &Cube, mu: &AtomicMeasure) -> f64 {
    let idx = mu.indices_in(j);
    if idx.is_empty() {
        return 0.0;
    }
    let mass = KahanSum::sum_iter(idx.iter().map(|&i| mu.atoms[i].mass));
    if mass == 0.0 {
        return 0.0;
    }
    let ell = j.side_f64();
    let mut acc = KahanSum::new();
    for (pos, &a) in idx.iter().enumerate() {
        for &b in idx.iter().skip(pos + 1) {
            let d2: f64 = mu.atoms[a]
                .loc_f64
                .iter()
                .zip(&mu.atoms[b].loc_f64)
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            // ordered pairs count twice
            acc.add(2.0 * mu.atoms[a].mass * mu.atoms[b].mass * d2);
        }
    }
    2.0 * acc.value() / (mass * mass * ell * ell)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaarMode {
    /// Sum of coordinate variances.
    Vector,
    /// Variance of one coordinate (0-based).
    Coordinate(usize),
}

/// Haar-tail norm `|| P_M^mu x ||^2`: for an atomic measure the dyadic
/// averages stabilize at atom values, so the projection telescopes to
/// `x - E_M^mu x` on the atoms in `M` and the norm is the mu-variance of
/// the position over `M`.
pub fn haar_tail_norm(m: &Cube, mu: &AtomicMeasure, mode: HaarMode) -> f64 {
    let idx = mu.indices_in(m);
    if idx.is_empty() {
        return 0.0;
    }
    let mass = KahanSum::sum_iter(idx.iter().map(|&i| mu.atoms[i].mass));
    if mass == 0.0 {
        return 0.0;
    }
    let coords: Vec<usize> = match mode {
        HaarMode::Vector => (0..mu.dim).collect(),
        HaarMode::Coordinate(c) => vec![c],
    };
    let mut total = KahanSum::new();
    for c in coords {
        let mean = KahanSum::sum_iter(
            idx.iter()
                .map(|&i| mu.atoms[i].mass * mu.atoms[i].loc_f64[c]),
        ) / mass;
        for &i in &idx {
            let d = mu.atoms[i].loc_f64[c] - mean;
            total.add(mu.atoms[i].mass * d * d);
        }
    }
    total.value()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConditionKind {
    PivotalFwd,
    PivotalBwd,
    EnergyFwd,
    EnergyBwd,
    StrongEnergy,
    DeepEnergy,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionSum {
    pub kind: ConditionKind,
    pub value: f64,
    pub normalized: f64,
    pub pieces: usize,
    pub witness: Vec<String>,
}

/// Pivotal / energy condition sum over a disjoint decomposition of `I`.
///
/// * pivotal:  `sum_r P^a(I_r, 1_{I \ gamma I_r} src)^2 |I_r|_tgt`
/// * energy:   `sum_r (P^a(I_r, 1_{I \ gamma I_r} src) / l(I_r))^2 ||P_{I_r}^tgt x||^2`
/// * strong:   full tail `1_I src`, same energy factor
///
/// Forward kinds read `(src, tgt) = (sigma, omega)`; backward kinds swap.
/// The normalized value divides by `|I|_src`.  Overlap kinds verify the
/// `beta`-bounded overlap of the `gamma`-expansions first.
pub fn condition_sum(
    sigma: &AtomicMeasure,
    omega: &AtomicMeasure,
    i_cube: &Cube,
    decomposition: &[(String, Cube)],
    kind: ConditionKind,
    alpha: f64,
    gamma: &Rat,
    beta: usize,
) -> Result<ConditionSum> {
    let (src, tgt) = match kind {
        ConditionKind::PivotalFwd | ConditionKind::EnergyFwd | ConditionKind::StrongEnergy => {
            (sigma, omega)
        }
        ConditionKind::PivotalBwd | ConditionKind::EnergyBwd => (omega, sigma),
        ConditionKind::DeepEnergy => {
            return Err(WorkbenchError::Domain(
                "deep energy is computed by deep_energy over a dyadic partition".into(),
            ))
        }
    };

    let overlap_kind = !matches!(kind, ConditionKind::StrongEnergy);
    if overlap_kind {
        let cubes: Vec<Cube> = decomposition.iter().map(|(_, c)| c.clone()).collect();
        let sample_extra: Vec<Vec<Rat>> = src
            .atoms
            .iter()
            .chain(tgt.atoms.iter())
            .filter(|a| i_cube.contains(&a.loc))
            .map(|a| a.loc.clone())
            .collect();
        let observed = overlap_count(&cubes, gamma, i_cube, &sample_extra);
        if observed > beta {
            return Err(WorkbenchError::OverlapViolation { observed, beta });
        }
    }

    let terms: Vec<f64> = decomposition
        .par_iter()
        .map(|(_, ir)| {
            let hole = ir.dilate(gamma);
            let p = match kind {
                ConditionKind::StrongEnergy => {
                    poisson_tail_in(ir, src, alpha, PoissonKind::Standard, i_cube, None)
                }
                _ => poisson_tail_in(ir, src, alpha, PoissonKind::Standard, i_cube, Some(&hole)),
            };
            match kind {
                ConditionKind::PivotalFwd | ConditionKind::PivotalBwd => p * p * tgt.mass_in(ir),
                _ => {
                    let ell = ir.side_f64();
                    (p / ell) * (p / ell) * haar_tail_norm(ir, tgt, HaarMode::Vector)
                }
            }
        })
        .collect();
    let value = KahanSum::sum_iter(terms.into_iter());
    let src_mass = src.mass_in(i_cube);
    let normalized = if src_mass > 0.0 { value / src_mass } else { 0.0 };
    Ok(ConditionSum {
        kind,
        value,
        normalized,
        pieces: decomposition.len(),
        witness: decomposition.iter().map(|(t, _)| t.clone()).collect(),
    })
}

/// Deep energy over a dyadic partition of `I`: for each refinement level
/// `l <= l_max` sum the energy terms over the refined deep families of the
/// partition cubes, take the max over `l`, and normalize by `|I|_sigma`.
#[allow(clippy::too_many_arguments)]
pub fn deep_energy(
    sigma: &AtomicMeasure,
    omega: &AtomicMeasure,
    grid: &DyadicGrid,
    i_cube: &DyadicCube,
    partition: &[DyadicCube],
    l_max: u32,
    params: &DeepEmbeddingParams,
    alpha: f64,
    enum_depth: u32,
) -> Result<f64> {
    let i_real = grid.cube(i_cube);
    let src_mass = sigma.mass_in(&i_real);
    if src_mass == 0.0 {
        return Ok(0.0);
    }
    let mut best = 0.0f64;
    for l in 0..=l_max {
        let mut acc = KahanSum::new();
        for ir in partition {
            let fam = refined_deep_family(grid, ir, l, params, enum_depth);
            for m in fam {
                let mc = grid.cube(&m);
                let hole = mc.dilate(&params.gamma);
                let p = poisson_tail_in(&mc, sigma, alpha, PoissonKind::Standard, &i_real, Some(&hole));
                let ell = mc.side_f64();
                acc.add((p / ell) * (p / ell) * haar_tail_norm(&mc, omega, HaarMode::Vector));
            }
        }
        best = best.max(acc.value());
    }
    Ok(best / src_mass)
}

#[derive(Debug, Clone, Serialize)]
pub struct MaximalTestingEntry {
    pub tag: String,
    pub sigma_mass: f64,
    pub integral: f64,
    /// `integral / sigma_mass`; `None` with a note when the cube carries no
    /// sigma mass.
    pub ratio: Option<f64>,
    pub note: Option<String>,
    /// Sup over omega atoms of the maximal-function value.
    pub sup_maximal: f64,
}

/// Per-cube maximal-testing report: for each target cube `T` of the family,
/// the fractional maximal function `M(1_T sigma)(x) = sup_{C in family,
/// x in C} sigma(C cap T)/|C|^(1-a/n)` is evaluated at every omega atom,
/// and the report carries `int M(1_T sigma)^2 d omega / sigma(T)`.
pub fn maximal_testing(
    sigma: &AtomicMeasure,
    omega: &AtomicMeasure,
    family: &[(String, Cube)],
    alpha: f64,
) -> Vec<MaximalTestingEntry> {
    let m = family.len();
    let n = sigma.dim as f64;
    // sigma mass per cube.
    let sigma_mass: Vec<f64> = family
        .par_iter()
        .map(|(_, c)| sigma.mass_in(c))
        .collect();
    let areas: Vec<f64> = family
        .iter()
        .map(|(_, c)| c.volume_f64().powf(1.0 - alpha / n))
        .collect();
    // Pairwise relation: 0 disjoint-ish, 1 = C subset T, 2 = T subset C.
    // The family is a forest (nested or disjoint), so intersections reduce
    // to the smaller cube; anything else contributes zero mass.
    let rel: Vec<Vec<u8>> = family
        .par_iter()
        .map(|(_, c)| {
            family
                .iter()
                .map(|(_, t)| {
                    if c.subset_of(t) {
                        1
                    } else if t.subset_of(c) {
                        2
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect();
    // Per omega atom: which cubes contain it.
    let screens: Vec<Screen> = family.iter().map(|(_, c)| Screen::new(c)).collect();
    let containing: Vec<Vec<usize>> = omega
        .atoms
        .par_iter()
        .map(|a| {
            (0..m)
                .filter(|&ci| screens[ci].contains(&a.loc, &a.loc_f64))
                .collect()
        })
        .collect();

    (0..m)
        .into_par_iter()
        .map(|ti| {
            let mut acc = KahanSum::new();
            let mut sup = 0.0f64;
            for (ai, atom) in omega.atoms.iter().enumerate() {
                let mut best = 0.0f64;
                for &ci in &containing[ai] {
                    let inter = match rel[ci][ti] {
                        1 => sigma_mass[ci],
                        2 => sigma_mass[ti],
                        _ => 0.0,
                    };
                    let avg = inter / areas[ci];
                    if avg > best {
                        best = avg;
                    }
                }
                sup = sup.max(best);
                acc.add(atom.mass * best * best);
            }
            let integral = acc.value();
            let (ratio, note) = if sigma_mass[ti] > 0.0 {
                (Some(integral / sigma_mass[ti]), None)
            } else {
                (None, Some("skipped: zero sigma mass".to_string()))
            };
            MaximalTestingEntry {
                tag: family[ti].0.clone(),
                sigma_mass: sigma_mass[ti],
                integral,
                ratio,
                note,
                sup_maximal: sup,
            }
        })
        .collect()
}
