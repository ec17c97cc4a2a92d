//! Fractional Riesz kernels and their certified pointwise properties.
//!
//! The vector kernel of order `alpha` in `R^n` is `w / |w|^(n+1-alpha)`;
//! component `i` is `w_i |w|^(alpha-n-1)`.  At `alpha = 1`, `n = 2` the two
//! components are the real and imaginary parts of the Cauchy kernel `1/z`.

pub mod localized;
pub mod sector;

use crate::error::{Result, WorkbenchError};

pub use localized::{
    localized_kernel_eval, one_sided_cz_certify, twisted_kernel_eval, CzReport, LocalizationSpec,
    LocalizedEvaluator, SamplePlan, XWindow,
};
pub use sector::{bump_eval, Rotation2, SectorConfig};

/// Distances below this are treated as on-diagonal; the counterexample
/// pipeline keeps supports disjoint, so the guard never fires there.
pub const SINGULARITY_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Index(usize),
    Vector,
}

/// A fractional Riesz kernel: order, ambient dimension, component
/// selection, optional hard radial truncation, and the Calderon-Zygmund
/// norm bound used to normalize certification ratios.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub alpha: f64,
    pub n: usize,
    pub component: Component,
    /// Hard cutoff `1_[delta, R](|w|)` when present.
    pub truncation: Option<(f64, f64)>,
    pub cz_norm: f64,
}

impl KernelSpec {
    pub fn riesz(alpha: f64, n: usize) -> Self {
        assert!(n >= 1 && alpha >= 0.0 && alpha < n as f64);
        KernelSpec {
            alpha,
            n,
            component: Component::Vector,
            truncation: None,
            // |K_i| <= |w|^(alpha-n) and |grad K_i| <= (n+2-alpha)|w|^(alpha-n-1),
            // so this constant dominates both displayed bounds.
            cz_norm: n as f64 + 2.0 - alpha,
        }
    }

    pub fn riesz_component(alpha: f64, n: usize, index: usize) -> Self {
        assert!(index >= 1 && index <= n, "component index is 1-based");
        KernelSpec {
            component: Component::Index(index),
            ..KernelSpec::riesz(alpha, n)
        }
    }

    pub fn truncated(mut self, delta: f64, r: f64) -> Self {
        assert!(delta < r, "truncation requires delta < R");
        self.truncation = Some((delta, r));
        self
    }

    /// Kernel exponent `alpha - n - 1` applied to `|w|`.
    #[inline]
    pub fn radial_exponent(&self) -> f64 {
        self.alpha - self.n as f64 - 1.0
    }

    #[inline]
    fn truncation_factor(&self, r: f64) -> f64 {
        match self.truncation {
            Some((lo, hi)) if r < lo || r > hi => 0.0,
            _ => 1.0,
        }
    }

    /// Component `index` (1-based) at displacement `w`, no singularity guard.
    #[inline]
    pub fn component_raw(&self, w: &[f64], index: usize) -> f64 {
        let r2: f64 = w.iter().map(|x| x * x).sum();
        let r = r2.sqrt();
        let scale = if self.alpha == 1.0 && self.n == 2 {
            // Cauchy case: |w|^(alpha-n-1) = 1/r^2, avoid powf in hot loops.
            1.0 / r2
        } else {
            r.powf(self.radial_exponent())
        };
        w[index - 1] * scale * self.truncation_factor(r)
    }

    pub fn vector_raw(&self, w: &[f64]) -> Vec<f64> {
        (1..=self.n).map(|i| self.component_raw(w, i)).collect()
    }

    fn guard(&self, w: &[f64]) -> Result<()> {
        let r2: f64 = w.iter().map(|x| x * x).sum();
        if r2.sqrt() <= SINGULARITY_THRESHOLD {
            return Err(WorkbenchError::Singularity {
                threshold: SINGULARITY_THRESHOLD,
            });
        }
        Ok(())
    }

    /// Scalar evaluation of the selected component (vector selection is an
    /// error here; use [`KernelSpec::eval_vector`]).
    pub fn eval(&self, w: &[f64]) -> Result<f64> {
        self.guard(w)?;
        match self.component {
            Component::Index(i) => Ok(self.component_raw(w, i)),
            Component::Vector => Err(WorkbenchError::Domain(
                "vector kernel queried for a scalar value".into(),
            )),
        }
    }

    pub fn eval_vector(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.guard(w)?;
        Ok(self.vector_raw(w))
    }
}

/// Closed-form gradient of the first component at `(u, w)` with
/// `u` along the first axis and `w` the remaining coordinates:
///
/// * `d/du K1 = rho^(-(n+1-a)/2 - 1) (|w|^2 - (n-a) u^2)`
/// * `grad_w K1 = (a-n-1) u w rho^(-(n+1-a)/2 - 1)`
///
/// where `rho = u^2 + |w|^2`.
pub fn riesz_grad_first_component(
    spec: &KernelSpec,
    u: f64,
    w: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let w2: f64 = w.iter().map(|x| x * x).sum();
    let rho = u * u + w2;
    if rho.sqrt() <= SINGULARITY_THRESHOLD {
        return Err(WorkbenchError::Singularity {
            threshold: SINGULARITY_THRESHOLD,
        });
    }
    let a = spec.alpha;
    let n = spec.n as f64;
    let outer = rho.powf(-(n + 1.0 - a) / 2.0 - 1.0);
    let du = outer * (w2 - (n - a) * u * u);
    let dw = w.iter().map(|x| (a - n - 1.0) * u * x * outer).collect();
    Ok((du, dw))
}

/// Normalized difference quotient of the negated first component along a
/// sector-admissible pair: `[-(K1(xi) - K1(eta)) / (xi_1 - eta_1)]` divided
/// by `|xi|^(alpha-n-1)`.  Admissibility: both points in the unit truncated
/// sector of `cfg` and `|xi~ - eta~| <= tan(theta) |xi_1 - eta_1|`.
pub fn positive_gradient_ratio(
    spec: &KernelSpec,
    cfg: &sector::SectorConfig,
    xi: &[f64],
    eta: &[f64],
) -> Result<f64> {
    if !cfg.in_unit_sector(xi) || !cfg.in_unit_sector(eta) {
        return Err(WorkbenchError::Domain(
            "points must lie in the unit truncated sector".into(),
        ));
    }
    let d1 = xi[0] - eta[0];
    if d1 == 0.0 {
        return Err(WorkbenchError::Domain(
            "first coordinates must differ".into(),
        ));
    }
    let dperp: f64 = xi[1..]
        .iter()
        .zip(&eta[1..])
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if dperp > cfg.lambda() * d1.abs() * (1.0 + 1e-12) {
        return Err(WorkbenchError::Domain(
            "pair exceeds the sector aperture".into(),
        ));
    }
    let k1 = |p: &[f64]| {
        let r2: f64 = p.iter().map(|x| x * x).sum();
        p[0] * r2.sqrt().powf(spec.radial_exponent())
    };
    let quotient = -(k1(xi) - k1(eta)) / d1;
    let norm_xi: f64 = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(quotient / norm_xi.powf(spec.radial_exponent()))
}

/// Strong-ellipticity witness: for a sign pattern `m` the coefficient
/// vector `lambda = m / sqrt(n)` gives `|sum_j lambda_j K_j(x, x + t u)| =
/// t^(alpha-n) |lambda . u|`, and `|lambda . u| >= 1/sqrt(n)` on the closed
/// n-ant.  Returns `(lambda, |lambda . u|)`.
pub fn strong_ellipticity_witness(
    spec: &KernelSpec,
    m: &[i8],
    u: &[f64],
) -> Result<(Vec<f64>, f64)> {
    if m.len() != spec.n || u.len() != spec.n {
        return Err(WorkbenchError::Domain("dimension mismatch".into()));
    }
    if m.iter().any(|s| *s != 1 && *s != -1) {
        return Err(WorkbenchError::Domain("sign pattern must be +-1".into()));
    }
    if m.iter().zip(u).any(|(s, x)| (*s as f64) * x < 0.0) {
        return Err(WorkbenchError::Domain(
            "direction must lie in the closed n-ant of the sign pattern".into(),
        ));
    }
    let norm: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(WorkbenchError::Domain("direction must be a unit vector".into()));
    }
    let root_n = (spec.n as f64).sqrt();
    let lambda: Vec<f64> = m.iter().map(|s| *s as f64 / root_n).collect();
    let dot: f64 = lambda.iter().zip(u).map(|(l, x)| l * x).sum();
    Ok((lambda, dot.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cauchy_axis_values() {
        let k = KernelSpec::riesz(1.0, 2);
        assert_eq!(k.vector_raw(&[1.0, 0.0]), vec![1.0, 0.0]);
        assert_eq!(k.vector_raw(&[0.0, 1.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn axis_scaling_matches_homogeneity() {
        for (alpha, n) in [(1.0, 2usize), (0.5, 2), (2.0, 3), (1.25, 3)] {
            let k = KernelSpec::riesz_component(alpha, n, 1);
            for t in [0.25f64, 1.0, 3.0, 10.0] {
                let mut w = vec![0.0; n];
                w[0] = t;
                let got = k.eval(&w).unwrap();
                let expect = t.powf(alpha - n as f64);
                assert!((got - expect).abs() <= 1e-12 * expect.abs());
            }
        }
    }

    #[test]
    fn antisymmetry_and_homogeneity() {
        let k = KernelSpec::riesz(1.5, 3);
        let w = [0.3, -0.7, 0.2];
        let neg: Vec<f64> = w.iter().map(|x| -x).collect();
        let kw = k.vector_raw(&w);
        let kn = k.vector_raw(&neg);
        for (a, b) in kw.iter().zip(&kn) {
            assert!((a + b).abs() < 1e-15);
        }
        for t in [0.5f64, 2.0, 7.5] {
            let tw: Vec<f64> = w.iter().map(|x| t * x).collect();
            let kt = k.vector_raw(&tw);
            let scale = t.powf(k.alpha - k.n as f64);
            for (a, b) in kt.iter().zip(&kw) {
                assert!((a - b * scale).abs() <= 1e-12 * (b * scale).abs().max(1e-300));
            }
        }
    }

    #[test]
    fn truncation_hard_cutoff() {
        let k = KernelSpec::riesz_component(1.0, 2, 1).truncated(0.5, 2.0);
        assert_eq!(k.eval(&[0.25, 0.0]).unwrap(), 0.0);
        assert_eq!(k.eval(&[3.0, 0.0]).unwrap(), 0.0);
        assert!(k.eval(&[1.0, 0.0]).unwrap() > 0.0);
    }

    #[test]
    fn singularity_guard() {
        let k = KernelSpec::riesz_component(1.0, 2, 1);
        assert!(matches!(
            k.eval(&[1e-15, 0.0]),
            Err(WorkbenchError::Singularity { .. })
        ));
    }

    #[test]
    fn gradient_closed_forms() {
        let spec = KernelSpec::riesz(1.0, 2);
        // On the axis: d/du K1 = -(n - a) u^(a-n-1).
        let (du, dw) = riesz_grad_first_component(&spec, 2.0, &[0.0]).unwrap();
        assert!((du - (-1.0) * 2f64.powf(-2.0)).abs() < 1e-15);
        assert_eq!(dw, vec![0.0]);

        // Sign flip exactly at |w| = sqrt(n - a) u.
        let spec3 = KernelSpec::riesz(1.5, 3);
        let edge = (3.0f64 - 1.5).sqrt();
        let u = 0.8;
        let (below, _) = riesz_grad_first_component(&spec3, u, &[edge * u * 0.999, 0.0]).unwrap();
        let (above, _) = riesz_grad_first_component(&spec3, u, &[edge * u * 1.001, 0.0]).unwrap();
        assert!(below < 0.0 && above > 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let h = 1e-6;
        for (alpha, n) in [(1.0, 2usize), (0.7, 2), (2.0, 3)] {
            let spec = KernelSpec::riesz(alpha, n);
            let k1 = |p: &[f64]| {
                let r2: f64 = p.iter().map(|x| x * x).sum();
                p[0] * r2.sqrt().powf(spec.radial_exponent())
            };
            let pts: Vec<Vec<f64>> = match n {
                2 => vec![vec![0.5, 0.2], vec![2.0, -1.0], vec![0.1, 0.1], vec![5.0, 3.0]],
                _ => vec![vec![0.5, 0.2, -0.3], vec![2.0, -1.0, 0.7]],
            };
            for p in pts {
                let (du, dw) = riesz_grad_first_component(&spec, p[0], &p[1..]).unwrap();
                let mut plus = p.clone();
                let mut minus = p.clone();
                plus[0] += h;
                minus[0] -= h;
                let fd = (k1(&plus) - k1(&minus)) / (2.0 * h);
                assert!((fd - du).abs() < 1e-6, "du fd={fd} closed={du}");
                for j in 1..p.len() {
                    let mut plus = p.clone();
                    let mut minus = p.clone();
                    plus[j] += h;
                    minus[j] -= h;
                    let fd = (k1(&plus) - k1(&minus)) / (2.0 * h);
                    assert!((fd - dw[j - 1]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn pgp_axis_example() {
        let spec = KernelSpec::riesz(1.0, 2);
        let cfg = SectorConfig::with_lambda(0.2);
        let r = positive_gradient_ratio(&spec, &cfg, &[2.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pgp_rejects_out_of_sector() {
        let spec = KernelSpec::riesz(1.0, 2);
        let cfg = SectorConfig::with_lambda(0.2);
        assert!(positive_gradient_ratio(&spec, &cfg, &[0.1, 0.0], &[2.0, 0.0]).is_err());
        assert!(positive_gradient_ratio(&spec, &cfg, &[2.0, 0.3], &[2.0, -0.29]).is_err());
    }

    #[test]
    fn pgp_limit_matches_gradient() {
        let spec = KernelSpec::riesz(1.0, 2);
        let cfg = SectorConfig::with_lambda(0.2);
        let xi = [3.0, 0.4];
        let eta = [3.0 - 1e-7, 0.4];
        let ratio = positive_gradient_ratio(&spec, &cfg, &xi, &eta).unwrap();
        let (du, _) = riesz_grad_first_component(&spec, xi[0], &xi[1..]).unwrap();
        let norm: f64 = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        let expect = -du / norm.powf(spec.radial_exponent());
        assert!(expect > 0.0);
        assert!((ratio - expect).abs() < 1e-5 * expect);
    }

    #[test]
    fn ellipticity_witness_values() {
        let spec = KernelSpec::riesz(1.0, 2);
        let s = 1.0 / 2f64.sqrt();
        let (lambda, v) = strong_ellipticity_witness(&spec, &[1, 1], &[s, s]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert!((lambda[0] - s).abs() < 1e-15);

        // Boundary direction e1.
        let (_, v) = strong_ellipticity_witness(&spec, &[1, 1], &[1.0, 0.0]).unwrap();
        assert!((v - s).abs() < 1e-12);

        assert!(strong_ellipticity_witness(&spec, &[1, 1], &[-s, s]).is_err());
    }

    #[test]
    fn ellipticity_infimum_is_corner_value() {
        // Brute-force the infimum of |lambda . u| over the closed quadrant:
        // the minimum sits at the corners and equals 1/sqrt(n).
        let spec = KernelSpec::riesz(1.0, 2);
        let mut min = f64::INFINITY;
        for t in 0..=1000 {
            let phi = std::f64::consts::FRAC_PI_2 * t as f64 / 1000.0;
            let u = [phi.cos(), phi.sin()];
            let (_, v) = strong_ellipticity_witness(&spec, &[1, 1], &u).unwrap();
            min = min.min(v);
        }
        assert!(min >= 1.0 / 2f64.sqrt() - 1e-9);
        assert!((min - 1.0 / 2f64.sqrt()).abs() < 1e-6);
    }
}
