//! Truncated sectors, rotation families, and the sector bump function.
//!
//! The unit truncated sector of separation `gamma` and aperture `theta` is
//! the set of `y` outside the cube `gamma Q` (`Q` the unit cube at the
//! origin) whose direction lies within `theta` of the positive first axis.
//! The bump equals one there, vanishes off the `rho`-expansion (inside
//! `(gamma/rho) Q` or beyond angle `rho theta`), and transitions through a
//! C^2 quintic ramp in the cube gauge and in angular distance.

use std::f64::consts::PI;

/// Rotation acting on the first two coordinates (identity elsewhere).
#[derive(Debug, Clone, Copy)]
pub struct Rotation2 {
    pub cos: f64,
    pub sin: f64,
}

impl Rotation2 {
    pub fn from_angle(angle: f64) -> Self {
        Rotation2 {
            cos: angle.cos(),
            sin: angle.sin(),
        }
    }

    pub fn identity() -> Self {
        Rotation2 { cos: 1.0, sin: 0.0 }
    }

    pub fn inverse(&self) -> Self {
        Rotation2 {
            cos: self.cos,
            sin: -self.sin,
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        out[0] = self.cos * v[0] - self.sin * v[1];
        out[1] = self.sin * v[0] + self.cos * v[1];
        out
    }

    /// Rotation about a center point: `c + R (x - c)`.
    pub fn apply_about(&self, c: &[f64], x: &[f64]) -> Vec<f64> {
        let shifted: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
        let mut rotated = self.apply(&shifted);
        for (r, b) in rotated.iter_mut().zip(c) {
            *r += b;
        }
        rotated
    }

    /// Unit axis direction `R e1`.
    pub fn axis(&self, dim: usize) -> Vec<f64> {
        let mut a = vec![0.0; dim];
        a[0] = self.cos;
        a[1] = self.sin;
        a
    }
}

/// Sector geometry: aperture `theta` (`lambda = tan theta`), separation
/// `gamma > 1`, expansion `1 < rho < gamma`, the number of rotations
/// covering the sphere of directions, and the certified bound on
/// `|y| |grad phi(y)|`.
#[derive(Debug, Clone)]
pub struct SectorConfig {
    pub theta: f64,
    pub gamma: f64,
    pub rho: f64,
    pub rotations: usize,
    pub c_phi: f64,
}

impl Default for SectorConfig {
    fn default() -> Self {
        SectorConfig::with_theta(PI / 8.0)
    }
}

impl SectorConfig {
    /// Aperture `theta`, with `M = ceil(2 pi / theta)` equally spaced
    /// rotations (covering needs only `pi / M <= theta`).
    pub fn with_theta(theta: f64) -> Self {
        assert!(theta > 0.0 && theta < PI / 2.0);
        let rotations = (2.0 * PI / theta).ceil() as usize;
        SectorConfig {
            theta,
            gamma: 2.0,
            rho: 1.5,
            rotations,
            c_phi: 24.0,
        }
    }

    /// Aperture chosen by its tangent.
    pub fn with_lambda(lambda: f64) -> Self {
        SectorConfig::with_theta(lambda.atan())
    }

    pub fn lambda(&self) -> f64 {
        self.theta.tan()
    }

    pub fn rotation(&self, j: usize) -> Rotation2 {
        let angle = 2.0 * PI * (j % self.rotations) as f64 / self.rotations as f64;
        Rotation2::from_angle(angle)
    }

    /// Membership in the unit truncated sector (axis `e1`): outside the
    /// cube `gamma Q` and within angle `theta` of the axis.
    pub fn in_unit_sector(&self, y: &[f64]) -> bool {
        let gauge = 2.0 * y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gauge < self.gamma {
            return false;
        }
        let norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return false;
        }
        let cos = y[0] / norm;
        cos >= self.theta.cos()
    }

    /// Sampled assertion that the rotated sectors cover all directions:
    /// every unit vector lies within `theta` of some rotation axis.
    pub fn covers_directions(&self, samples: usize) -> bool {
        (0..samples).all(|t| {
            let phi = 2.0 * PI * t as f64 / samples as f64;
            let u = [phi.cos(), phi.sin()];
            (0..self.rotations).any(|j| {
                let a = self.rotation(j).axis(2);
                let dot = a[0] * u[0] + a[1] * u[1];
                dot >= self.theta.cos() - 1e-12
            })
        })
    }
}

/// C^2 quintic ramp: 0 below 0, 1 above 1.
#[inline]
fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

#[inline]
fn smoothstep_deriv(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        30.0 * t * t * (t - 1.0) * (t - 1.0)
    }
}

/// Bump value and gradient for rotation index `j` at a point `y` in the
/// unit-scale frame.  The value is one on the truncated sector of axis
/// `Theta_j e1`, zero inside `(gamma/rho) Q` and beyond angle `rho theta`.
pub fn bump_eval(cfg: &SectorConfig, j: usize, y: &[f64]) -> (f64, Vec<f64>) {
    let dim = y.len();
    let norm2: f64 = y.iter().map(|v| v * v).sum();
    let norm = norm2.sqrt();
    if norm == 0.0 {
        return (0.0, vec![0.0; dim]);
    }

    // Radial factor in the cube gauge q(y) = 2 max |y_i|.
    let (mut arg, mut gauge) = (0usize, 0.0f64);
    for (i, v) in y.iter().enumerate() {
        if v.abs() > gauge {
            gauge = v.abs();
            arg = i;
        }
    }
    let q = 2.0 * gauge;
    let q_lo = cfg.gamma / cfg.rho;
    let width_r = cfg.gamma - q_lo;
    let tr = (q - q_lo) / width_r;
    let radial = smoothstep(tr);
    let radial_d = smoothstep_deriv(tr) / width_r; // d(radial)/dq

    // Angular factor in the angle to the rotated axis.
    let axis = cfg.rotation(j).axis(dim);
    let dot: f64 = axis.iter().zip(y).map(|(a, v)| a * v).sum();
    let cos = (dot / norm).clamp(-1.0, 1.0);
    let psi = cos.acos();
    let width_a = (cfg.rho - 1.0) * cfg.theta;
    let ta = (psi - cfg.theta) / width_a;
    let angular = 1.0 - smoothstep(ta);
    let angular_d = -smoothstep_deriv(ta) / width_a; // d(angular)/dpsi

    let value = radial * angular;

    let mut grad = vec![0.0; dim];
    if radial_d != 0.0 {
        // grad q = 2 sign(y_arg) e_arg, a.e.
        grad[arg] += radial_d * 2.0 * y[arg].signum() * angular;
    }
    if angular_d != 0.0 {
        let sin = (1.0 - cos * cos).sqrt();
        if sin > 1e-12 {
            // grad psi = (cos * y/|y| - axis) / (|y| sin)
            for i in 0..dim {
                let gpsi = (cos * y[i] / norm - axis[i]) / (norm * sin);
                grad[i] += radial * angular_d * gpsi;
            }
        }
    }
    (value, grad)
}
