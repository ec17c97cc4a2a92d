//! Localized and twisted-localized kernels.
//!
//! Given pairwise disjoint cubes `J_k` inside a cube `I`, the localized
//! kernel is `sum_k 1_{J_k}(x) K(x - y) phi_{J_k}(y)` where `phi_{J_k}` is
//! the sector bump scaled to the cube.  The twisted variant pre-rotates the
//! kernel argument about the cube center and post-rotates the bump:
//! `sum_k 1_{J_k}(x) K(Theta_i^J x - y) phi_J((Theta_j^J)^-1 y)`.
//! These kernels satisfy size and y-smoothness bounds of one-sided
//! Calderon-Zygmund type; nothing is claimed (or certified) in `x`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::geometry::Cube;
use crate::rat::Rat;

use super::sector::{bump_eval, SectorConfig};
use super::KernelSpec;

/// How the x-side localization factor is realized: the indicator of the
/// cube (the form used everywhere here), or the sector bump in `x` as an
/// alternate mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XWindow {
    #[default]
    Indicator,
    Bump,
}

/// A family of pairwise disjoint subcubes with per-cube pre/post rotation
/// indices (uniform rotations are the common case).
#[derive(Debug, Clone)]
pub struct LocalizationSpec {
    pub cubes: Vec<Cube>,
    pub pre: Vec<usize>,
    pub post: Vec<usize>,
    pub x_window: XWindow,
}

impl LocalizationSpec {
    pub fn identity(cubes: Vec<Cube>) -> Self {
        let n = cubes.len();
        LocalizationSpec {
            cubes,
            pre: vec![0; n],
            post: vec![0; n],
            x_window: XWindow::Indicator,
        }
    }

    pub fn with_rotations(cubes: Vec<Cube>, pre: usize, post: usize) -> Self {
        let n = cubes.len();
        LocalizationSpec {
            cubes,
            pre: vec![pre; n],
            post: vec![post; n],
            x_window: XWindow::Indicator,
        }
    }
}

/// Precomputed f64 geometry for kernel-heavy loops; cube membership stays
/// exact through [`LocalizedEvaluator::cube_of`].
pub struct LocalizedEvaluator<'a> {
    pub loc: &'a LocalizationSpec,
    pub spec: &'a KernelSpec,
    pub cfg: &'a SectorConfig,
    centers: Vec<Vec<f64>>,
    sides: Vec<f64>,
}

impl<'a> LocalizedEvaluator<'a> {
    pub fn new(loc: &'a LocalizationSpec, spec: &'a KernelSpec, cfg: &'a SectorConfig) -> Self {
        let centers = loc.cubes.iter().map(|c| c.center_f64()).collect();
        let sides = loc.cubes.iter().map(|c| c.side_f64()).collect();
        LocalizedEvaluator {
            loc,
            spec,
            cfg,
            centers,
            sides,
        }
    }

    /// Index of the (unique, cubes disjoint) cube containing `x`; exact.
    pub fn cube_of(&self, x: &[Rat]) -> Option<usize> {
        self.loc.cubes.iter().position(|c| c.contains(x))
    }

    /// Scaled bump factor `phi^j((y - c_J)/l(J))` for cube `k`.
    fn bump_factor(&self, k: usize, j: usize, y: &[f64]) -> f64 {
        let side = self.sides[k];
        let v: Vec<f64> = y
            .iter()
            .zip(&self.centers[k])
            .map(|(a, c)| (a - c) / side)
            .collect();
        bump_eval(self.cfg, j, &v).0
    }

    /// Twisted kernel restricted to cube `k`, with pre-rotation index `i`
    /// applied to the kernel argument about the cube center and the bump
    /// taken along rotation `j`.  Returns all vector components.
    pub fn eval_in_cube(&self, k: usize, i: usize, j: usize, x: &[f64], y: &[f64]) -> Vec<f64> {
        let phi = self.bump_factor(k, j, y);
        if phi == 0.0 {
            return vec![0.0; self.spec.n];
        }
        let rot = self.cfg.rotation(i);
        let xr = rot.apply_about(&self.centers[k], x);
        let w: Vec<f64> = xr.iter().zip(y).map(|(a, b)| a - b).collect();
        self.spec
            .vector_raw(&w)
            .into_iter()
            .map(|v| v * phi)
            .collect()
    }

    /// Full twisted kernel at `(x, y)` with uniform rotation indices,
    /// using exact cube membership for the indicator window.
    pub fn eval(&self, i: usize, j: usize, x: &[Rat], x_f64: &[f64], y: &[f64]) -> Vec<f64> {
        match self.loc.x_window {
            XWindow::Indicator => match self.cube_of(x) {
                Some(k) => self.eval_in_cube(k, i, j, x_f64, y),
                None => vec![0.0; self.spec.n],
            },
            XWindow::Bump => {
                // Alternate mode: the x-side indicator replaced by the
                // post-rotation sector bump; contributions may stack.
                let mut acc = vec![0.0; self.spec.n];
                for k in 0..self.loc.cubes.len() {
                    let wx = self.bump_factor(k, i, x_f64);
                    if wx == 0.0 {
                        continue;
                    }
                    for (a, v) in acc.iter_mut().zip(self.eval_in_cube(k, i, j, x_f64, y)) {
                        *a += wx * v;
                    }
                }
                acc
            }
        }
    }
}

/// Localized kernel (identity rotations) at `(x, y)`.
pub fn localized_kernel_eval(
    loc: &LocalizationSpec,
    spec: &KernelSpec,
    cfg: &SectorConfig,
    x: &[Rat],
    x_f64: &[f64],
    y: &[f64],
) -> Vec<f64> {
    LocalizedEvaluator::new(loc, spec, cfg).eval(0, 0, x, x_f64, y)
}

/// Twisted localized kernel with post-rotation `i` and pre-rotation `j`.
pub fn twisted_kernel_eval(
    loc: &LocalizationSpec,
    spec: &KernelSpec,
    cfg: &SectorConfig,
    i: usize,
    j: usize,
    x: &[Rat],
    x_f64: &[f64],
    y: &[f64],
) -> Vec<f64> {
    LocalizedEvaluator::new(loc, spec, cfg).eval(i, j, x, x_f64, y)
}

#[derive(Debug, Clone, Serialize)]
pub struct CzEntry {
    pub estimate: String,
    pub samples: usize,
    pub max_ratio: f64,
    pub argmax: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct CzReport {
    /// Size and y-derivative estimates only; the kernels do not satisfy
    /// x-smoothness and no x entry is reported.
    pub entries: Vec<CzEntry>,
}

#[derive(Debug, Clone, Copy)]
pub struct SamplePlan {
    pub samples: usize,
    pub seed: u64,
    pub fd_step_rel: f64,
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan {
            samples: 10_000,
            seed: 0,
            fd_step_rel: 1e-6,
        }
    }
}

/// Empirical one-sided Calderon-Zygmund certification of a twisted
/// localization: samples `(x, y)` with `x` in a cube of the family and `y`
/// in the (scaled) bump support, reporting the suprema of
/// `|K| |x-y|^(n-alpha)`, `|grad_y K| |x-y|^(n+1-alpha)` and
/// `|grad2_y K| |x-y|^(n+2-alpha)`, all normalized by the kernel CZ norm.
/// Gradients are central finite differences with step `fd_step_rel |x-y|`.
pub fn one_sided_cz_certify(
    loc: &LocalizationSpec,
    spec: &KernelSpec,
    cfg: &SectorConfig,
    i: usize,
    j: usize,
    plan: &SamplePlan,
) -> CzReport {
    let ev = LocalizedEvaluator::new(loc, spec, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let n = spec.n;
    let a = spec.alpha;
    let mut best: [(f64, Vec<f64>, Vec<f64>); 3] = [
        (0.0, vec![], vec![]),
        (0.0, vec![], vec![]),
        (0.0, vec![], vec![]),
    ];

    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut accepted = 0usize;
    let mut tries = 0usize;
    while accepted < plan.samples && tries < plan.samples * 50 {
        tries += 1;
        let k = rng.gen_range(0..loc.cubes.len());
        let side = ev.sides[k];
        let c = &ev.centers[k];
        // x uniform in the cube J_k.
        let x: Vec<f64> = c
            .iter()
            .map(|ci| ci + side * rng.gen_range(-0.5..0.5))
            .collect();
        // y in the scaled bump support: radius past the core cube, angle
        // within the expanded aperture around the pre-rotation axis.
        let radius = side * rng.gen_range(cfg.gamma / cfg.rho * 0.5..cfg.gamma * 1.6);
        let ang_off = rng.gen_range(-cfg.rho * cfg.theta..cfg.rho * cfg.theta);
        let axis_ang = 2.0 * std::f64::consts::PI * (j % cfg.rotations) as f64
            / cfg.rotations as f64;
        let ang = axis_ang + ang_off;
        let mut y = c.clone();
        y[0] += radius * ang.cos();
        y[1] += radius * ang.sin();

        let kval = ev.eval_in_cube(k, i, j, &x, &y);
        if norm(&kval) == 0.0 {
            continue;
        }
        accepted += 1;

        let dxy = norm(&x.iter().zip(&y).map(|(p, q)| p - q).collect::<Vec<_>>());
        let r0 = norm(&kval) * dxy.powf(n as f64 - a) / spec.cz_norm;
        if r0 > best[0].0 {
            best[0] = (r0, x.clone(), y.clone());
        }

        let h = plan.fd_step_rel * dxy;
        // First y-derivatives, all components stacked.
        let mut grad_sq = 0.0f64;
        let mut hess_max = 0.0f64;
        let f0 = kval;
        for d in 0..n.min(y.len()) {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[d] += h;
            ym[d] -= h;
            let fp = ev.eval_in_cube(k, i, j, &x, &yp);
            let fm = ev.eval_in_cube(k, i, j, &x, &ym);
            for c in 0..fp.len() {
                let g = (fp[c] - fm[c]) / (2.0 * h);
                grad_sq += g * g;
                let h2 = (fp[c] - 2.0 * f0[c] + fm[c]) / (h * h);
                hess_max = hess_max.max(h2.abs());
            }
        }
        let r1 = grad_sq.sqrt() * dxy.powf(n as f64 + 1.0 - a) / spec.cz_norm;
        if r1 > best[1].0 {
            best[1] = (r1, x.clone(), y.clone());
        }
        let r2 = hess_max * dxy.powf(n as f64 + 2.0 - a) / spec.cz_norm;
        if r2 > best[2].0 {
            best[2] = (r2, x, y);
        }
    }

    let names = ["size", "grad_y_1", "grad_y_2"];
    let entries = names
        .iter()
        .zip(best)
        .map(|(name, (ratio, x, y))| CzEntry {
            estimate: name.to_string(),
            samples: accepted,
            max_ratio: ratio,
            argmax: serde_json::json!({ "x": x, "y": y }),
        })
        .collect();
    CzReport { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::{rat, ratio};

    fn simple_loc() -> LocalizationSpec {
        let cubes = vec![
            Cube::new(vec![rat(1, 4), ratio(0)], rat(1, 8)),
            Cube::new(vec![rat(3, 4), ratio(0)], rat(1, 8)),
        ];
        LocalizationSpec::identity(cubes)
    }

    #[test]
    fn vanishes_off_cubes() {
        let loc = simple_loc();
        let spec = KernelSpec::riesz(1.0, 2);
        let cfg = SectorConfig::default();
        let x = vec![rat(1, 2), ratio(0)];
        let v = localized_kernel_eval(&loc, &spec, &cfg, &x, &[0.5, 0.0], &[10.0, 0.0]);
        assert!(v.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn vanishes_inside_bump_core() {
        let loc = simple_loc();
        let spec = KernelSpec::riesz(1.0, 2);
        let cfg = SectorConfig::default();
        let x = vec![rat(1, 4), ratio(0)];
        // y close to the cube center: inside the (gamma/rho)-core.
        let y = [0.25 + 0.01, 0.0];
        let v = localized_kernel_eval(&loc, &spec, &cfg, &x, &[0.25, 0.0], &y);
        assert!(v.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn plateau_equals_plain_kernel() {
        let loc = simple_loc();
        let spec = KernelSpec::riesz(1.0, 2);
        let cfg = SectorConfig::default();
        let x = vec![rat(1, 4), ratio(0)];
        let xf = [0.25, 0.0];
        // y deep along the axis from the first cube: phi = 1.
        let y = [0.25 + 10.0 * 0.125, 0.0];
        let v = localized_kernel_eval(&loc, &spec, &cfg, &x, &xf, &y);
        let w = [xf[0] - y[0], xf[1] - y[1]];
        let plain = spec.vector_raw(&w);
        for (a, b) in v.iter().zip(&plain) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_rotations_match_localized() {
        let loc = simple_loc();
        let spec = KernelSpec::riesz(1.0, 2);
        let cfg = SectorConfig::default();
        let x = vec![rat(1, 4), ratio(0)];
        let xf = [0.25, 0.0];
        let y = [1.9, 0.3];
        let a = localized_kernel_eval(&loc, &spec, &cfg, &x, &xf, &y);
        let b = twisted_kernel_eval(&loc, &spec, &cfg, 0, 0, &x, &xf, &y);
        assert_eq!(a, b);
    }

    #[test]
    fn rotation_preserves_center_distance() {
        let cfg = SectorConfig::default();
        let c = [0.25, 0.0];
        let x = [0.27, 0.03];
        for i in 0..cfg.rotations {
            let xr = cfg.rotation(i).apply_about(&c, &x);
            let d0: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            let d1: f64 = xr.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            assert!((d0 - d1).abs() < 1e-15);
        }
    }

    #[test]
    fn half_turn_twice_is_identity() {
        let loc = simple_loc();
        let spec = KernelSpec::riesz(1.0, 2);
        let cfg = SectorConfig::with_theta(std::f64::consts::PI / 4.0);
        // With M rotations, index M/2 is the half turn; applying it twice
        // composes to the identity on the kernel argument.
        let m = cfg.rotations;
        assert_eq!(m % 2, 0);
        let x = vec![rat(1, 4), ratio(0)];
        let xf = [0.25, 0.0];
        let y = [1.7, 0.2];
        let ev = LocalizedEvaluator::new(&loc, &spec, &cfg);
        let half = cfg.rotation(m / 2);
        let twice = half.apply_about(&[0.25, 0.0], &half.apply_about(&[0.25, 0.0], &xf));
        for (a, b) in twice.iter().zip(&xf) {
            assert!((a - b).abs() < 1e-13);
        }
        let direct = ev.eval(0, 0, &x, &xf, &y);
        let via = ev.eval_in_cube(0, 0, 0, &twice, &y);
        for (a, b) in direct.iter().zip(&via) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_riesz_size_ratio_at_most_one() {
        // Without localization the component-kernel size ratio is exactly
        // |w_i| / |w| <= 1 before the CZ normalization.
        let spec = KernelSpec::riesz(1.0, 2);
        for w in [[0.3, 0.4], [1.0, 0.0], [-2.0, 5.0]] {
            let v = spec.vector_raw(&w);
            let r: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (i, k) in v.iter().enumerate() {
                let ratio = k.abs() * r.powf(2.0 - 1.0);
                assert!(ratio <= 1.0 + 1e-12, "component {i}");
            }
        }
    }

    #[test]
    fn certification_runs_and_reports_three_estimates() {
        let loc = simple_loc();
        let spec = KernelSpec::riesz(1.0, 2);
        let cfg = SectorConfig::default();
        let plan = SamplePlan {
            samples: 500,
            seed: 7,
            fd_step_rel: 1e-6,
        };
        let rep = one_sided_cz_certify(&loc, &spec, &cfg, 2, 3, &plan);
        assert_eq!(rep.entries.len(), 3);
        let names: Vec<&str> = rep.entries.iter().map(|e| e.estimate.as_str()).collect();
        assert_eq!(names, ["size", "grad_y_1", "grad_y_2"]);
        assert!(rep.entries.iter().all(|e| e.estimate != "grad_x_1"));
        for e in &rep.entries {
            assert!(e.max_ratio.is_finite());
            assert!(e.max_ratio > 0.0);
        }
    }

    #[test]
    fn certification_deterministic_for_fixed_seed() {
        let loc = simple_loc();
        let spec = KernelSpec::riesz(1.0, 2);
        let cfg = SectorConfig::default();
        let plan = SamplePlan {
            samples: 200,
            seed: 42,
            fd_step_rel: 1e-6,
        };
        let a = one_sided_cz_certify(&loc, &spec, &cfg, 1, 2, &plan);
        let b = one_sided_cz_certify(&loc, &spec, &cfg, 1, 2, &plan);
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert_eq!(x.max_ratio, y.max_ratio);
        }
    }
}
