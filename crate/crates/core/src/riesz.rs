//! Riesz-transform evaluation on atomic measures: the field of the spread
//! Cantor measure, its zeros along the middle halves, blow-up diagnostics,
//! testing constants, exact finite-rank operator norms, and the
//! energy-reversal inequality check.

use std::collections::BTreeMap;

use num::traits::Signed;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, WorkbenchError};
use crate::geometry::{CantorHierarchy, Cube};
use crate::kahan::KahanSum;
use crate::kernels::{
    Component, KernelSpec, LocalizationSpec, LocalizedEvaluator, SectorConfig,
    SINGULARITY_THRESHOLD,
};
use crate::measures::{AtomicMeasure, WeightScheme};
use crate::rat::{pow3_inv, rat, ratio, to_f64, Rat};

/// Flat-buffer view of a measure for kernel-heavy summation.
pub struct FieldEvaluator<'a> {
    pub mu: &'a AtomicMeasure,
    coords: Vec<f64>,
    masses: Vec<f64>,
    dim: usize,
    alpha: f64,
}

impl<'a> FieldEvaluator<'a> {
    pub fn new(mu: &'a AtomicMeasure, alpha: f64) -> Self {
        FieldEvaluator {
            mu,
            coords: mu.flat_coords(),
            masses: mu.masses(),
            dim: mu.dim,
            alpha,
        }
    }

    /// `sum_a m_a K_c(x - y_a)` for the 1-based component `c`; no guard.
    pub fn component_at(&self, c: usize, x: &[f64]) -> f64 {
        let dim = self.dim;
        let exponent = (dim as f64 + 1.0 - self.alpha) / 2.0;
        let fast = (exponent - 1.0).abs() < 1e-15;
        let mut acc = KahanSum::new();
        for (a, m) in self.masses.iter().enumerate() {
            let base = a * dim;
            let mut rho = 0.0;
            for d in 0..dim {
                let w = x[d] - self.coords[base + d];
                rho += w * w;
            }
            let wc = x[c - 1] - self.coords[base + c - 1];
            let denom = if fast { rho } else { rho.powf(exponent) };
            acc.add(m * wc / denom);
        }
        acc.value()
    }

    pub fn vector_at(&self, x: &[f64]) -> Vec<f64> {
        (1..=self.dim).map(|c| self.component_at(c, x)).collect()
    }

    pub fn min_dist(&self, x: &[f64]) -> f64 {
        let dim = self.dim;
        let mut best = f64::INFINITY;
        for a in 0..self.masses.len() {
            let base = a * dim;
            let mut rho = 0.0;
            for d in 0..dim {
                let w = x[d] - self.coords[base + d];
                rho += w * w;
            }
            best = best.min(rho);
        }
        best.sqrt()
    }
}

/// Guarded pointwise evaluation `(R mu)(x)`, all components.
pub fn riesz_at(mu: &AtomicMeasure, spec: &KernelSpec, x: &[f64]) -> Result<Vec<f64>> {
    let ev = FieldEvaluator::new(mu, spec.alpha);
    if ev.min_dist(x) <= SINGULARITY_THRESHOLD {
        return Err(WorkbenchError::Singularity {
            threshold: SINGULARITY_THRESHOLD,
        });
    }
    match spec.component {
        Component::Index(c) => Ok(vec![ev.component_at(c, x)]),
        Component::Vector => Ok(ev.vector_at(x)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Top,
    Bottom,
}

#[derive(Debug, Clone, Serialize)]
pub struct ZeroRecord {
    pub k: u32,
    pub i: u32,
    pub z_f64: f64,
    pub residual: f64,
    pub iters: u32,
    #[serde(skip)]
    pub z: Rat,
}

pub type ZeroTable = BTreeMap<(u32, u32), ZeroRecord>;

fn edge_point(scheme: &WeightScheme, k: u32, x1: f64, edge: Edge, dim: usize) -> Vec<f64> {
    let h = to_f64(&scheme.vertical_offset(k));
    let mut p = vec![0.0; dim];
    p[0] = x1;
    p[1] = match edge {
        Edge::Top => h,
        Edge::Bottom => -h,
    };
    p
}

/// Root of `x1 -> R_1(omega)(x1, +-h_k)` on the middle half of gap `(k,i)`
/// by bisection on exact rational midpoints.  The residual tolerance is
/// scale-relative: `|F(z)| <= tol (3/2)^k`, matching the field's dynamic
/// range at level `k`.
pub fn find_zero(
    hier: &CantorHierarchy,
    omega: &AtomicMeasure,
    scheme: &WeightScheme,
    k: u32,
    i: u32,
    tol: f64,
    edge: Edge,
) -> Result<ZeroRecord> {
    let ev = FieldEvaluator::new(omega, scheme.alpha);
    let dim = omega.dim;
    let half = hier.half(k, i);
    let f = |x: &Rat| {
        let p = edge_point(scheme, k, to_f64(x), edge, dim);
        ev.component_at(1, &p)
    };

    let len = half.length();
    let tol_scaled = tol * 1.5f64.powi(k as i32);
    let mut eps = &len * rat(1, 1_000_000_000);
    let (mut lo, mut hi) = loop {
        let lo = &half.left + &eps;
        let hi = &half.right - &eps;
        if f(&lo) > 0.0 && f(&hi) < 0.0 {
            break (lo, hi);
        }
        eps /= ratio(16);
        if eps < &len * rat(1, 1) / ratio(1i64 << 62) {
            return Err(WorkbenchError::MonotonicityViolation {
                lo: to_f64(&(&half.left + &eps)),
                hi: to_f64(&(&half.right - &eps)),
            });
        }
    };

    for iter in 1..=200u32 {
        let mid = (&lo + &hi) / ratio(2);
        let fm = f(&mid);
        if fm.abs() <= tol_scaled {
            return Ok(ZeroRecord {
                k,
                i,
                z_f64: to_f64(&mid),
                residual: fm.abs(),
                iters: iter,
                z: mid,
            });
        }
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(WorkbenchError::Convergence {
        iters: 200,
        lower: f(&lo),
        upper: f(&hi),
    })
}

/// All zeros for gaps `k <= N-1`, top edge, in parallel.
pub fn compute_zeros(
    hier: &CantorHierarchy,
    omega: &AtomicMeasure,
    scheme: &WeightScheme,
    tol: f64,
) -> Result<ZeroTable> {
    let gaps = hier.gap_indices();
    let records: Vec<Result<ZeroRecord>> = gaps
        .par_iter()
        .map(|(k, i)| find_zero(hier, omega, scheme, *k, *i, tol, Edge::Top))
        .collect();
    let mut table = BTreeMap::new();
    for r in records {
        let rec = r?;
        table.insert((rec.k, rec.i), rec);
    }
    Ok(table)
}

pub fn zero_map(table: &ZeroTable) -> BTreeMap<(u32, u32), Rat> {
    table
        .iter()
        .map(|(key, rec)| (*key, rec.z.clone()))
        .collect()
}

/// Strict decrease of the first component along `samples` interior points
/// of the gap's middle half (top edge).
pub fn monotone_certify(
    hier: &CantorHierarchy,
    omega: &AtomicMeasure,
    scheme: &WeightScheme,
    k: u32,
    i: u32,
    samples: usize,
) -> bool {
    assert!(samples >= 2);
    let ev = FieldEvaluator::new(omega, scheme.alpha);
    let half = hier.half(k, i);
    let mut prev = f64::INFINITY;
    for s in 1..=samples {
        let x = &half.left + half.length() * rat(s as i64, samples as i64 + 1);
        let p = edge_point(scheme, k, to_f64(&x), Edge::Top, omega.dim);
        let v = ev.component_at(1, &p);
        if v >= prev {
            return false;
        }
        prev = v;
    }
    true
}

/// Sum of the pointwise x1-derivative of the planar kernel over every atom
/// except the four corner atoms of the gap's middle-half square, evaluated
/// at `(x1, h_k)`.  Each admissible term is negative by the slope property;
/// corner atoms are handled separately by the pairing argument.
pub fn axis_derivative_noncorner_sum(
    hier: &CantorHierarchy,
    omega: &AtomicMeasure,
    scheme: &WeightScheme,
    k: u32,
    i: u32,
    x1: &Rat,
) -> f64 {
    let half = hier.half(k, i);
    let hk = scheme.vertical_offset(k);
    let x = [to_f64(x1), to_f64(&hk)];
    let mut acc = KahanSum::new();
    for atom in &omega.atoms {
        let corner = (atom.loc[0] == half.left || atom.loc[0] == half.right)
            && atom.loc[1].abs() == hk;
        if corner {
            continue;
        }
        let dx = x[0] - atom.loc_f64[0];
        let dy = x[1] - atom.loc_f64[1];
        let rho = dx * dx + dy * dy;
        acc.add(atom.mass * (dy * dy - dx * dx) / (rho * rho));
    }
    acc.value()
}

/// `F(u_1^k - c 3^-k, h_k) / (3/2)^k`: the normalized field value just
/// left of the leftmost middle half at level `k`.
pub fn blowup_check(
    hier: &CantorHierarchy,
    omega: &AtomicMeasure,
    scheme: &WeightScheme,
    k: u32,
    c: f64,
) -> Result<f64> {
    if !(c > 0.0 && c <= 0.1) {
        return Err(WorkbenchError::Bounds(format!("c = {c} outside (0, 0.1]")));
    }
    let offset = Rat::from_float(c).unwrap() * pow3_inv(k);
    let x1 = &hier.half(k, 1).left - &offset;
    let ev = FieldEvaluator::new(omega, scheme.alpha);
    let p = edge_point(scheme, k, to_f64(&x1), Edge::Top, omega.dim);
    Ok(ev.component_at(1, &p) / 1.5f64.powi(k as i32))
}

/// Mirror of [`blowup_check`]: just right of the rightmost middle half.
pub fn blowup_check_mirrored(
    hier: &CantorHierarchy,
    omega: &AtomicMeasure,
    scheme: &WeightScheme,
    k: u32,
    c: f64,
) -> Result<f64> {
    if !(c > 0.0 && c <= 0.1) {
        return Err(WorkbenchError::Bounds(format!("c = {c} outside (0, 0.1]")));
    }
    let offset = Rat::from_float(c).unwrap() * pow3_inv(k);
    let x1 = &hier.half(k, 1 << k).right + &offset;
    let ev = FieldEvaluator::new(omega, scheme.alpha);
    let p = edge_point(scheme, k, to_f64(&x1), Edge::Top, omega.dim);
    Ok(ev.component_at(1, &p) / 1.5f64.powi(k as i32))
}

#[derive(Debug, Clone, Serialize)]
pub struct R2Entry {
    pub k: u32,
    pub i: u32,
    pub value: f64,
    /// `value / (2^-N 3^k)`.
    pub ratio: f64,
}

/// Second component of the field at every zero, with the ratio to the
/// predicted scale `2^-N 3^k`.
pub fn r2_at_zeros(
    hier: &CantorHierarchy,
    omega: &AtomicMeasure,
    scheme: &WeightScheme,
    zeros: &ZeroTable,
) -> Vec<R2Entry> {
    let ev = FieldEvaluator::new(omega, scheme.alpha);
    let n = hier.depth;
    zeros
        .values()
        .map(|rec| {
            let p = edge_point(scheme, rec.k, rec.z_f64, Edge::Top, omega.dim);
            let value = ev.component_at(2, &p);
            let scale = (2f64).powi(-(n as i32)) * 3f64.powi(rec.k as i32);
            R2Entry {
                k: rec.k,
                i: rec.i,
                value,
                ratio: value / scale,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Testing constant on one cube:
/// `sqrt( (1/|Q|_src) sum_{x in tgt cap Q} m_x sum_c | sum_{y in src cap Q}
/// m_y K_c(x - y) |^2 )`, with `(src, tgt) = (sigma, omega)` forward and the
/// roles swapped backward.  `None` when the source gives `Q` zero mass.
pub fn testing_constant(
    sigma: &AtomicMeasure,
    omega: &AtomicMeasure,
    q: &Cube,
    spec: &KernelSpec,
    direction: Direction,
) -> Option<f64> {
    let (src, tgt) = match direction {
        Direction::Forward => (sigma, omega),
        Direction::Backward => (omega, sigma),
    };
    let src_idx = src.indices_in(q);
    let tgt_idx = tgt.indices_in(q);
    testing_constant_indexed(src, tgt, &src_idx, &tgt_idx, spec)
}

fn testing_constant_indexed(
    src: &AtomicMeasure,
    tgt: &AtomicMeasure,
    src_idx: &[usize],
    tgt_idx: &[usize],
    spec: &KernelSpec,
) -> Option<f64> {
    if src_idx.is_empty() {
        return None;
    }
    let src_mass = KahanSum::sum_iter(src_idx.iter().map(|&b| src.atoms[b].mass));
    if src_mass <= 0.0 {
        return None;
    }
    let components: Vec<usize> = match spec.component {
        Component::Index(c) => vec![c],
        Component::Vector => (1..=spec.n).collect(),
    };
    let dim = src.dim;
    let mut outer = KahanSum::new();
    for &a in tgt_idx {
        let xa = &tgt.atoms[a].loc_f64;
        let mut sq = 0.0f64;
        for &c in &components {
            let mut inner = KahanSum::new();
            for &b in src_idx {
                let yb = &src.atoms[b].loc_f64;
                let mut w = [0.0f64; 3];
                for d in 0..dim {
                    w[d] = xa[d] - yb[d];
                }
                inner.add(src.atoms[b].mass * spec.component_raw(&w[..dim], c));
            }
            let v = inner.value();
            sq += v * v;
        }
        outer.add(tgt.atoms[a].mass * sq);
    }
    Some((outer.value() / src_mass).sqrt())
}

/// Precomputed atom-membership index for a cube family, so repeated sweeps
/// share the exact membership work.  Atom order inside a measure is sorted
/// by location, so the first coordinate admits a binary-search prefilter.
pub struct FamilyIndex {
    pub tags: Vec<String>,
    pub cubes: Vec<Cube>,
    pub sigma_idx: Vec<Vec<usize>>,
    pub omega_idx: Vec<Vec<usize>>,
}

fn indices_in_sorted(mu: &AtomicMeasure, cube: &Cube) -> Vec<usize> {
    let half = &cube.side / ratio(2);
    let lo = &cube.center[0] - &half;
    let hi = &cube.center[0] + &half;
    let n = mu.len();
    let screen = crate::geometry::Screen::new(cube);
    let start = mu.atoms.partition_point(|a| a.loc[0] < lo);
    let mut out = Vec::new();
    for idx in start..n {
        let a = &mu.atoms[idx];
        if a.loc[0] > hi {
            break;
        }
        if screen.contains(&a.loc, &a.loc_f64) {
            out.push(idx);
        }
    }
    out
}

pub fn index_family(
    sigma: &AtomicMeasure,
    omega: &AtomicMeasure,
    family: &[(String, Cube)],
) -> FamilyIndex {
    let pairs: Vec<(Vec<usize>, Vec<usize>)> = family
        .par_iter()
        .map(|(_, c)| (indices_in_sorted(sigma, c), indices_in_sorted(omega, c)))
        .collect();
    let (sigma_idx, omega_idx) = pairs.into_iter().unzip();
    FamilyIndex {
        tags: family.iter().map(|(t, _)| t.clone()).collect(),
        cubes: family.iter().map(|(_, c)| c.clone()).collect(),
        sigma_idx,
        omega_idx,
    }
}

/// Supremum of the testing constant over an indexed family.
pub fn testing_sweep(
    sigma: &AtomicMeasure,
    omega: &AtomicMeasure,
    index: &FamilyIndex,
    spec: &KernelSpec,
    direction: Direction,
) -> Result<(f64, String)> {
    if index.cubes.is_empty() {
        return Err(WorkbenchError::EmptyFamily);
    }
    let scored: Vec<Option<f64>> = (0..index.cubes.len())
        .into_par_iter()
        .map(|ci| {
            let (src, tgt, src_idx, tgt_idx) = match direction {
                Direction::Forward => (sigma, omega, &index.sigma_idx[ci], &index.omega_idx[ci]),
                Direction::Backward => (omega, sigma, &index.omega_idx[ci], &index.sigma_idx[ci]),
            };
            testing_constant_indexed(src, tgt, src_idx, tgt_idx, spec)
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, String::new());
    for (ci, v) in scored.into_iter().enumerate() {
        if let Some(v) = v {
            if v > best.0 {
                best = (v, index.tags[ci].clone());
            }
        }
    }
    if best.1.is_empty() {
        return Err(WorkbenchError::EmptyFamily);
    }
    Ok(best)
}

/// The finite-rank realization of the two-weight operator: row block `c`
/// holds `sqrt(m_a) K_c(x_a - y_b) sqrt(m_b)` over omega atoms `a` and
/// sigma atoms `b`; its spectral norm is the `L^2(sigma) -> L^2(omega)`
/// norm of the (vector) transform restricted to these weights.
pub struct OperatorMatrix {
    pub rows: usize,
    pub cols: usize,
    pub components: usize,
    pub data: Vec<f64>,
}

impl OperatorMatrix {
    pub fn entry(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn transpose(&self) -> OperatorMatrix {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        OperatorMatrix {
            rows: self.cols,
            cols: self.rows,
            components: 1,
            data,
        }
    }

    fn matvec(&self, v: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(r, o)| {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = KahanSum::new();
            for (a, b) in row.iter().zip(v) {
                acc.add(a * b);
            }
            *o = acc.value();
        });
    }

    fn matvec_t(&self, u: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(c, o)| {
            let mut acc = KahanSum::new();
            for r in 0..self.rows {
                acc.add(self.data[r * self.cols + c] * u[r]);
            }
            *o = acc.value();
        });
    }
}

pub fn operator_matrix(
    sigma: &AtomicMeasure,
    omega: &AtomicMeasure,
    spec: &KernelSpec,
) -> Result<OperatorMatrix> {
    let components: Vec<usize> = match spec.component {
        Component::Index(c) => vec![c],
        Component::Vector => (1..=spec.n).collect(),
    };
    let nsig = sigma.len();
    let nom = omega.len();
    let rows = components.len() * nom;
    let dim = sigma.dim;
    let sig_coords = sigma.flat_coords();
    let sig_mass: Vec<f64> = sigma.masses().iter().map(|m| m.sqrt()).collect();
    let om_coords = omega.flat_coords();
    let om_mass: Vec<f64> = omega.masses().iter().map(|m| m.sqrt()).collect();

    let mut data = vec![0.0f64; rows * nsig];
    let min_dist2 = data
        .par_chunks_mut(nsig)
        .enumerate()
        .map(|(r, row)| {
            let comp = components[r / nom];
            let a = r % nom;
            let mut min_rho = f64::INFINITY;
            for b in 0..nsig {
                let mut rho = 0.0;
                let mut wc = 0.0;
                for d in 0..dim {
                    let w = om_coords[a * dim + d] - sig_coords[b * dim + d];
                    rho += w * w;
                    if d == comp - 1 {
                        wc = w;
                    }
                }
                min_rho = min_rho.min(rho);
                let exponent = (dim as f64 + 1.0 - spec.alpha) / 2.0;
                let denom = if (exponent - 1.0).abs() < 1e-15 {
                    rho
                } else {
                    rho.powf(exponent)
                };
                row[b] = om_mass[a] * wc / denom * sig_mass[b];
            }
            min_rho
        })
        .reduce(|| f64::INFINITY, f64::min);
    if min_dist2.sqrt() <= SINGULARITY_THRESHOLD {
        return Err(WorkbenchError::Singularity {
            threshold: SINGULARITY_THRESHOLD,
        });
    }
    Ok(OperatorMatrix {
        rows,
        cols: nsig,
        components: components.len(),
        data,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NormEstimate {
    pub norm: f64,
    pub iters: usize,
}

const POWER_ITER_CAP: usize = 100_000;

fn power_iteration_from(m: &OperatorMatrix, seed: &[f64], tol: f64) -> Result<NormEstimate> {
    let mut v = seed.to_vec();
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = norm(&v);
    for x in v.iter_mut() {
        *x /= nv;
    }
    let mut u = vec![0.0; m.rows];
    let mut w = vec![0.0; m.cols];
    let mut sigma_prev = 0.0f64;
    let mut delta_prev = f64::INFINITY;
    let mut stable = 0usize;
    for iter in 1..=POWER_ITER_CAP {
        m.matvec(&v, &mut u);
        let sigma = norm(&u);
        if sigma == 0.0 {
            return Ok(NormEstimate { norm: 0.0, iters: iter });
        }
        m.matvec_t(&u, &mut w);
        let wn = norm(&w);
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
        // The increments decay geometrically with ratio (s2/s1)^2; project
        // the remaining error through that ratio so a small step near a
        // slow mode does not stop the iteration early.
        let delta = (sigma - sigma_prev).abs();
        let converged = if delta == 0.0 {
            true
        } else if delta <= tol * sigma && delta_prev.is_finite() && delta < delta_prev {
            let r = delta / delta_prev;
            delta * r / (1.0 - r) <= tol * sigma
        } else {
            false
        };
        if converged {
            stable += 1;
            if stable >= 3 {
                return Ok(NormEstimate { norm: sigma, iters: iter });
            }
        } else {
            stable = 0;
        }
        delta_prev = delta;
        sigma_prev = sigma;
    }
    Err(WorkbenchError::Convergence {
        iters: POWER_ITER_CAP,
        lower: sigma_prev,
        upper: sigma_prev * (1.0 + 1e3 * tol),
    })
}

/// Spectral norm by power iteration on the normal operator, to relative
/// tolerance `tol`.  Deterministic: the all-ones seed plus one tilted seed
/// (guarding against a seed orthogonal to the top singular space under the
/// mirror symmetry of the weights); the larger estimate is returned.
pub fn operator_norm(m: &OperatorMatrix, tol: f64) -> Result<NormEstimate> {
    let ones = vec![1.0; m.cols];
    let tilted: Vec<f64> = (0..m.cols)
        .map(|i| 1.0 + 0.001 * ((i + 1) as f64).sin())
        .collect();
    let a = power_iteration_from(m, &ones, tol)?;
    let b = power_iteration_from(m, &tilted, tol)?;
    Ok(if a.norm >= b.norm { a } else { b })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReversalReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub sup_twisted_sq: f64,
    pub sup_pair: (usize, usize),
    pub a2_term: f64,
    pub i_sigma_mass: f64,
}

/// Energy-reversal inequality check on a cube `I` with a localization
/// family: the forward overlap-energy sum on the left, and on the right
/// `(sup_{i,j} T(Theta_i T_J Theta_j)^2 + beta A2) |I|_sigma`, the twisted
/// testing constants computed exactly on atoms over the cube `I`.
#[allow(clippy::too_many_arguments)]
pub fn reversal_check(
    sigma: &AtomicMeasure,
    omega: &AtomicMeasure,
    i_cube: &Cube,
    loc: &LocalizationSpec,
    spec: &KernelSpec,
    cfg: &SectorConfig,
    gamma: &Rat,
    beta: usize,
    a2_value: f64,
) -> Result<ReversalReport> {
    use crate::functionals::{haar_tail_norm, poisson_tail_in, HaarMode, PoissonKind};

    let alpha = spec.alpha;
    let mut lhs = KahanSum::new();
    for j_cube in &loc.cubes {
        let hole = j_cube.dilate(gamma);
        let p = poisson_tail_in(j_cube, sigma, alpha, PoissonKind::Standard, i_cube, Some(&hole));
        let ell = j_cube.side_f64();
        lhs.add((p / ell) * (p / ell) * haar_tail_norm(j_cube, omega, HaarMode::Vector));
    }
    let lhs = lhs.value();

    let i_sigma_mass = sigma.mass_in(i_cube);
    if i_sigma_mass <= 0.0 {
        return Err(WorkbenchError::Domain("sigma gives I zero mass".into()));
    }

    // Twisted testing on I: omega atoms (with their containing cube) against
    // sigma atoms, all restricted to I.
    let ev = LocalizedEvaluator::new(loc, spec, cfg);
    let omega_in: Vec<(usize, usize)> = omega
        .atoms
        .iter()
        .enumerate()
        .filter(|(_, a)| i_cube.contains(&a.loc))
        .filter_map(|(ai, a)| ev.cube_of(&a.loc).map(|k| (ai, k)))
        .collect();
    let sigma_in: Vec<usize> = sigma.indices_in(i_cube);

    let m = cfg.rotations;
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .collect();
    let scored: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut outer = KahanSum::new();
            for &(ai, k) in &omega_in {
                let x = &omega.atoms[ai].loc_f64;
                let mut comps = vec![KahanSum::new(); spec.n];
                for &bi in &sigma_in {
                    let y = &sigma.atoms[bi].loc_f64;
                    let kv = ev.eval_in_cube(k, i, j, x, y);
                    for (acc, v) in comps.iter_mut().zip(kv) {
                        acc.add(sigma.atoms[bi].mass * v);
                    }
                }
                let sq: f64 = comps.iter().map(|a| a.value() * a.value()).sum();
                outer.add(omega.atoms[ai].mass * sq);
            }
            outer.value() / i_sigma_mass
        })
        .collect();

    let mut sup_twisted_sq = 0.0f64;
    let mut sup_pair = (0usize, 0usize);
    for (idx, v) in scored.iter().enumerate() {
        if *v > sup_twisted_sq {
            sup_twisted_sq = *v;
            sup_pair = pairs[idx];
        }
    }

    let a2_term = beta as f64 * a2_value;
    let rhs = (sup_twisted_sq + a2_term) * i_sigma_mass;
    Ok(ReversalReport {
        lhs,
        rhs,
        ratio: if rhs > 0.0 { lhs / rhs } else { f64::INFINITY },
        sup_twisted_sq,
        sup_pair,
        a2_term,
        i_sigma_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cantor_hierarchy, hat_square, Interval};
    use crate::measures::{
        build_omega_hat, build_sigma_hat, general_scheme, SigmaSide, WeightScheme,
    };
    use crate::rat::rat;

    fn setup(n: u32) -> (CantorHierarchy, WeightScheme, AtomicMeasure) {
        let h = cantor_hierarchy(n).unwrap();
        let s = WeightScheme::planar();
        let omega = build_omega_hat(&h, &s);
        (h, s, omega)
    }

    #[test]
    fn field_single_atom_by_hand() {
        let mu = AtomicMeasure::new(2, vec![(vec![ratio(0), ratio(0)], 2.0)]);
        let spec = KernelSpec::riesz(1.0, 2);
        let v = riesz_at(&mu, &spec, &[3.0, 4.0]).unwrap();
        // K(w) = w/|w|^2 at w = (3,4): (3/25, 4/25), times mass 2.
        assert!((v[0] - 6.0 / 25.0).abs() < 1e-15);
        assert!((v[1] - 8.0 / 25.0).abs() < 1e-15);
    }

    #[test]
    fn field_vanishes_at_symmetry_center() {
        let (_, s, omega) = setup(6);
        let h0 = to_f64(&s.vertical_offset(0));
        let v = riesz_at(&omega, &KernelSpec::riesz(1.0, 2), &[0.5, h0]).unwrap();
        assert!(v[0].abs() < 1e-12, "R1 at the center: {}", v[0]);
    }

    #[test]
    fn field_parity_under_vertical_reflection() {
        let (_, _, omega) = setup(5);
        let spec = KernelSpec::riesz(1.0, 2);
        for (x1, x2) in [(0.41, 0.07), (0.55, 0.2), (0.1, 0.035)] {
            let up = riesz_at(&omega, &spec, &[x1, x2]).unwrap();
            let dn = riesz_at(&omega, &spec, &[x1, -x2]).unwrap();
            assert!((up[0] - dn[0]).abs() < 1e-12);
            assert!((up[1] + dn[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn singularity_guard_near_atom() {
        let (_, _, omega) = setup(2);
        let spec = KernelSpec::riesz(1.0, 2);
        let at = omega.atoms[0].loc_f64.clone();
        assert!(matches!(
            riesz_at(&omega, &spec, &at),
            Err(WorkbenchError::Singularity { .. })
        ));
    }

    #[test]
    fn zero_at_half_center_by_symmetry() {
        let (h, s, omega) = setup(5);
        let rec = find_zero(&h, &omega, &s, 0, 1, 1e-10, Edge::Top).unwrap();
        assert!((rec.z_f64 - 0.5).abs() < 1e-10);
        assert!(rec.residual <= 1e-10);
        assert!(rec.z > h.half(0, 1).left && rec.z < h.half(0, 1).right);
    }

    #[test]
    fn zeros_top_bottom_agree() {
        let (h, s, omega) = setup(5);
        for (k, i) in [(1u32, 2u32), (2, 3), (3, 5)] {
            let top = find_zero(&h, &omega, &s, k, i, 1e-10, Edge::Top).unwrap();
            let bottom = find_zero(&h, &omega, &s, k, i, 1e-10, Edge::Bottom).unwrap();
            assert!(
                (top.z_f64 - bottom.z_f64).abs() <= 1e-10,
                "k={k} i={i}: {} vs {}",
                top.z_f64,
                bottom.z_f64
            );
        }
    }

    #[test]
    fn zero_table_complete_and_interior() {
        let (h, s, omega) = setup(6);
        let table = compute_zeros(&h, &omega, &s, 1e-10).unwrap();
        assert_eq!(table.len(), (1 << 6) - 1);
        for ((k, i), rec) in &table {
            let half = h.half(*k, *i);
            assert!(rec.z > half.left && rec.z < half.right);
            assert!(rec.residual <= 1e-10 * 1.5f64.powi(*k as i32));
        }
    }

    #[test]
    fn monotone_on_middle_halves() {
        let (h, s, omega) = setup(5);
        for (k, i) in h.gap_indices() {
            assert!(monotone_certify(&h, &omega, &s, k, i, 64), "k={k} i={i}");
        }
        assert!(monotone_certify(&h, &omega, &s, 0, 1, 2));
    }

    #[test]
    fn noncorner_derivative_terms_negative_at_midpoint() {
        let (h, s, omega) = setup(5);
        for (k, i) in [(0u32, 1u32), (2, 2), (4, 7)] {
            let c = h.gap_center(k, i);
            let v = axis_derivative_noncorner_sum(&h, &omega, &s, k, i, &c);
            assert!(v < 0.0, "k={k} i={i}: {v}");
        }
    }

    #[test]
    fn exact_derivative_of_corner_pairing() {
        // d/dt (1/t + t/(t^2 + A^2)) = -(2 t^4 + A^2 t^2 + A^4) /
        // (t^2 (t^2 + A^2)^2): negative for every t != 0.  Checked against
        // central differences of the pair sum.
        let a = 0.35f64;
        let f = |t: f64| 1.0 / t + t / (t * t + a * a);
        let d = |t: f64| {
            let t2 = t * t;
            let a2 = a * a;
            -(2.0 * t2 * t2 + a2 * t2 + a2 * a2) / (t2 * (t2 + a2) * (t2 + a2))
        };
        for t in [0.1f64, 0.5, 1.0, 2.0] {
            let h = 1e-6;
            let fd = (f(t + h) - f(t - h)) / (2.0 * h);
            assert!((fd - d(t)).abs() < 1e-6);
            assert!(d(t) < 0.0);
        }
    }

    #[test]
    fn blowup_rejects_bad_offset() {
        let (h, s, omega) = setup(3);
        assert!(blowup_check(&h, &omega, &s, 0, 0.0).is_err());
        assert!(blowup_check(&h, &omega, &s, 0, 0.2).is_err());
    }

    #[test]
    fn blowup_mirror_antisymmetry() {
        let (h, s, omega) = setup(6);
        for k in 0..6u32 {
            let left = blowup_check(&h, &omega, &s, k, 0.01).unwrap();
            let right = blowup_check_mirrored(&h, &omega, &s, k, 0.01).unwrap();
            assert!(
                (left + right).abs() <= 1e-9 * left.abs().max(right.abs()),
                "k={k}: {left} vs {right}"
            );
        }
    }

    #[test]
    fn testing_single_atom_pair_by_hand() {
        let sigma = AtomicMeasure::new(2, vec![(vec![ratio(0), ratio(0)], 4.0)]);
        let omega = AtomicMeasure::new(2, vec![(vec![ratio(1), ratio(0)], 9.0)]);
        let q = Cube::new(vec![rat(1, 2), ratio(0)], ratio(4));
        let spec = KernelSpec::riesz(1.0, 2);
        // forward: (1/4) * 9 * |4 K(1,0)|^2 summed over components
        // = (9/4) * 16 * (1 + 0) = 36, sqrt = 6.
        let v = testing_constant(&sigma, &omega, &q, &spec, Direction::Forward).unwrap();
        assert!((v - 6.0).abs() < 1e-12);
        // backward equals forward with roles exchanged.
        let b = testing_constant(&sigma, &omega, &q, &spec, Direction::Backward).unwrap();
        let f = testing_constant(&omega, &sigma, &q, &spec, Direction::Forward).unwrap();
        assert_eq!(b, f);
    }

    #[test]
    fn testing_skips_zero_source() {
        let sigma = AtomicMeasure::new(2, vec![(vec![ratio(10), ratio(0)], 1.0)]);
        let omega = AtomicMeasure::new(2, vec![(vec![ratio(0), ratio(0)], 1.0)]);
        let q = Cube::new(vec![ratio(0), ratio(0)], ratio(1));
        let spec = KernelSpec::riesz(1.0, 2);
        assert!(testing_constant(&sigma, &omega, &q, &spec, Direction::Forward).is_none());
    }

    #[test]
    fn operator_norm_rank_one() {
        let s = 4.0;
        let w = 9.0;
        let d = 2.0;
        let sigma = AtomicMeasure::new(2, vec![(vec![ratio(0), ratio(0)], s)]);
        let omega = AtomicMeasure::new(2, vec![(vec![ratio(2), ratio(0)], w)]);
        let spec = KernelSpec::riesz(1.0, 2);
        let m = operator_matrix(&sigma, &omega, &spec).unwrap();
        let est = operator_norm(&m, 1e-10).unwrap();
        // |K(d, 0)| = 1/d; norm = sqrt(s w) / d.
        let expect = (s * w).sqrt() / d;
        assert!((est.norm - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn operator_norm_matches_transpose() {
        let (h, s, omega) = setup(4);
        let zeros = compute_zeros(&h, &omega, &s, 1e-10).unwrap();
        let sigma = build_sigma_hat(&h, &zero_map(&zeros), &s, SigmaSide::Both).unwrap();
        let spec = KernelSpec::riesz(1.0, 2);
        let m = operator_matrix(&sigma, &omega, &spec).unwrap();
        let a = operator_norm(&m, 1e-9).unwrap();
        let b = operator_norm(&m.transpose(), 1e-9).unwrap();
        assert!(
            (a.norm - b.norm).abs() <= 1e-6 * a.norm,
            "{} vs {}",
            a.norm,
            b.norm
        );
    }

    #[test]
    fn embedded_third_component_vanishes() {
        let h = cantor_hierarchy(3).unwrap();
        let s3 = general_scheme(2.0, 3).unwrap();
        let omega = build_omega_hat(&h, &s3);
        let zeros = compute_zeros(&h, &omega, &s3, 1e-10).unwrap();
        let sigma = build_sigma_hat(&h, &zero_map(&zeros), &s3, SigmaSide::Both).unwrap();
        let spec = KernelSpec::riesz(2.0, 3);
        let ev = FieldEvaluator::new(&omega, 2.0);
        for a in &sigma.atoms {
            let v = ev.component_at(3, &a.loc_f64);
            assert_eq!(v, 0.0);
        }
        let ev = FieldEvaluator::new(&sigma, 2.0);
        for a in &omega.atoms {
            let v = ev.component_at(3, &a.loc_f64);
            assert_eq!(v, 0.0);
        }
        let m = operator_matrix(&sigma, &omega, &spec).unwrap();
        assert_eq!(m.components, 3);
    }

    #[test]
    fn reversal_zero_when_omega_atoms_isolated() {
        // One omega atom per localization cube: every variance term is zero.
        let sigma = AtomicMeasure::new(
            2,
            vec![
                (vec![rat(1, 2), ratio(0)], 1.0),
            ],
        );
        let omega = AtomicMeasure::new(
            2,
            vec![
                (vec![rat(1, 8), ratio(0)], 1.0),
                (vec![rat(7, 8), ratio(0)], 1.0),
            ],
        );
        let i_cube = Cube::new(vec![rat(1, 2), ratio(0)], ratio(1));
        let cubes = vec![
            Cube::new(vec![rat(1, 8), ratio(0)], rat(1, 16)),
            Cube::new(vec![rat(7, 8), ratio(0)], rat(1, 16)),
        ];
        let loc = LocalizationSpec::identity(cubes);
        let spec = KernelSpec::riesz(1.0, 2);
        let cfg = SectorConfig::default();
        let rep = reversal_check(
            &sigma, &omega, &i_cube, &loc, &spec, &cfg, &ratio(2), 16, 1.0,
        )
        .unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert!(rep.rhs > 0.0);
    }

    #[test]
    fn reversal_ratio_invariant_under_sigma_scaling() {
        let (h, s, omega) = setup(4);
        let zeros = compute_zeros(&h, &omega, &s, 1e-10).unwrap();
        let sigma = build_sigma_hat(&h, &zero_map(&zeros), &s, SigmaSide::Plus).unwrap();
        let i_cube = hat_square(&Interval::new(ratio(0), ratio(1)), 2);
        let cubes: Vec<Cube> = h
            .gap_indices()
            .into_iter()
            .map(|(k, i)| hat_square(h.half(k, i), 2))
            .collect();
        let loc = LocalizationSpec::identity(cubes);
        let spec = KernelSpec::riesz(1.0, 2);
        let cfg = SectorConfig::default();
        let a2 = 0.37; // arbitrary positive stand-in, scaled consistently
        let base = reversal_check(
            &sigma, &omega, &i_cube, &loc, &spec, &cfg, &ratio(2), 16, a2,
        )
        .unwrap();
        let t = 3.0;
        let scaled = reversal_check(
            &sigma.scaled(t),
            &omega,
            &i_cube,
            &loc,
            &spec,
            &cfg,
            &ratio(2),
            16,
            a2 * t,
        )
        .unwrap();
        assert!((scaled.lhs - t * t * base.lhs).abs() <= 1e-10 * scaled.lhs.abs());
        assert!((scaled.rhs - t * t * base.rhs).abs() <= 1e-10 * scaled.rhs.abs());
        assert!((scaled.ratio - base.ratio).abs() <= 1e-10 * base.ratio.abs());
    }
}
