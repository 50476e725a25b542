//! Points in polar form, uniform directions and a few sphere/ball identities.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// A unit vector in R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction(Vec<f64>);

impl Direction {
    /// Normalizes `v`; fails for the zero vector or non-finite input.
    pub fn from_vec(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::InvalidParameter("direction must have d >= 1".into()));
        }
        let norm = scaled_norm(&v);
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Domain(format!("cannot normalize vector with norm {norm}")));
        }
        Ok(Self(v.into_iter().map(|c| c / norm).collect()))
    }

    /// First canonical basis vector e_1 in R^d.
    pub fn axis(d: usize) -> Self {
        let mut v = vec![0.0; d.max(1)];
        v[0] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }
}

/// A state x = r * theta, stored in polar form so that radii near the top of
/// the f64 range (which occur for heavy-tailed and tiny-exponent targets) do
/// not overflow when squared.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarPoint {
    pub radius: f64,
    pub direction: Direction,
}

impl PolarPoint {
    pub fn new(radius: f64, direction: Direction) -> Self {
        Self { radius, direction }
    }

    pub fn from_cartesian(x: &[f64]) -> Result<Self> {
        let radius = scaled_norm(x);
        if !radius.is_finite() {
            return Err(Error::NonFinite("cartesian point".into()));
        }
        if radius == 0.0 {
            // The direction at the origin is arbitrary.
            return Ok(Self::new(0.0, Direction::axis(x.len())));
        }
        Ok(Self::new(radius, Direction::from_vec(x.to_vec())?))
    }

    pub fn dim(&self) -> usize {
        self.direction.dim()
    }

    pub fn to_cartesian(&self) -> Vec<f64> {
        self.direction.0.iter().map(|c| c * self.radius).collect()
    }

    /// Euclidean distance, computed without forming the Cartesian points.
    pub fn distance(&self, other: &PolarPoint) -> f64 {
        let cos = self.direction.dot(other.direction.coords()).clamp(-1.0, 1.0);
        let (a, b) = (self.radius, other.radius);
        let d2 = (a - b).powi(2) + 2.0 * a * b * (1.0 - cos);
        d2.max(0.0).sqrt()
    }
}

/// Overflow-safe Euclidean norm.
pub fn scaled_norm(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * v.iter().map(|c| (c / scale).powi(2)).sum::<f64>().sqrt()
}

/// Uniform draw from the unit sphere S^{d-1} via normalized Gaussians.
pub fn sample_unit_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Direction {
    assert!(d >= 1, "sphere dimension must be at least 1");
    if d == 1 {
        return Direction(vec![if rng.random::<bool>() { 1.0 } else { -1.0 }]);
    }
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return Direction(v.into_iter().map(|c| c / norm).collect());
        }
    }
}

/// log of the surface area of S^{d-1}.
pub fn ln_surface_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    std::f64::consts::LN_2 + h * std::f64::consts::PI.ln() - ln_gamma(h)
}

/// Surface area omega_d = 2 pi^{d/2} / Gamma(d/2) of S^{d-1}.
pub fn surface_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => ln_surface_area(d).exp(),
    }
}

/// Inverse-CDF radius for the uniform distribution on the ball B(kappa) in R^d.
pub fn ball_radius_from_uniform(d: usize, kappa: f64, u: f64) -> f64 {
    u.powf(1.0 / d as f64) * kappa
}

/// The integral of u^{1/p} over [0, 1], i.e. p / (p + 1).
pub fn power_integral(p: f64) -> Result<f64> {
    if p == -1.0 || !p.is_finite() || p == 0.0 {
        return Err(Error::Domain(format!("power_integral undefined at p = {p}")));
    }
    Ok(p / (p + 1.0))
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Estimates the surface integral of `f` over S^{d-1} from `n` uniform directions.
pub fn sphere_integral_mc<F, R>(f: F, d: usize, n: usize, rng: &mut R) -> Result<McEstimate>
where
    F: Fn(&Direction) -> f64,
    R: Rng + ?Sized,
{
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two directions".into()));
    }
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..n {
        let theta = sample_unit_sphere(d, rng);
        let v = f(&theta);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("integrand at sample {i}")));
        }
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let omega = surface_area(d);
    let var = m2 / (n - 1) as f64;
    Ok(McEstimate {
        value: omega * mean,
        std_error: omega * (var / n as f64).sqrt(),
    })
}
