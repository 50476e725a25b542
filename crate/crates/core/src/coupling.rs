//! Shared-randomness couplings of two transitions, empirical contraction
//! ratios and the large-radius sharpness probes.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Direction, PolarPoint};
use crate::kernels::{radial_update, threshold_from_uniform};
use crate::quad::integrate;
use crate::rng::{open_unit, RngStream};
use crate::targets::{Family, Target, DEFAULT_REJECTION_CAP};

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPair {
    pub x: PolarPoint,
    pub y: PolarPoint,
}

impl CoupledPair {
    pub fn new(x: PolarPoint, y: PolarPoint) -> Self {
        Self { x, y }
    }

    /// x = r_x * theta, y = r_y * theta.
    pub fn on_ray(r_x: f64, r_y: f64, theta: Direction) -> Self {
        Self::new(PolarPoint::new(r_x, theta.clone()), PolarPoint::new(r_y, theta))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionEstimate {
    pub empirical_rate: f64,
    pub std_error: f64,
    pub theoretical_rate: f64,
    pub pair: CoupledPair,
}

/// The proven Wasserstein contraction rate for the families that have one.
pub fn theoretical_contraction_rate(target: &Target) -> Result<f64> {
    let k = target.k();
    let d = target.d() as f64;
    match target.family() {
        Family::Dk { .. } => Ok(k / (k + 1.0)),
        Family::StdT { m } => {
            if *m < 1.0 {
                return Err(Error::Hypothesis(format!("contraction rate needs m >= 1, got {m}")));
            }
            Ok(d * (d + m) / ((d + 1.0) * (d + m - 1.0)))
        }
        Family::ParetoShell { m, .. } => {
            if *m < 1.0 || k < 1.0 {
                return Err(Error::Hypothesis(format!(
                    "contraction rate needs m >= 1 and k >= 1, got m = {m}, k = {k}"
                )));
            }
            Ok(k * (k + m) / ((k + 1.0) * (k + m - 1.0)))
        }
        _ => Err(Error::UnsupportedFamily(format!(
            "no contraction theorem for {}",
            target.name()
        ))),
    }
}

/// Both transitions driven by the same (u1, theta, u2).
pub fn coupled_step_with(
    target: &Target,
    x: &PolarPoint,
    y: &PolarPoint,
    u1: f64,
    theta: &Direction,
    u2: f64,
) -> Result<(PolarPoint, PolarPoint)> {
    let tx = threshold_from_uniform(target, x, u1)?;
    let ty = threshold_from_uniform(target, y, u1)?;
    let rx = radial_update(target, tx, theta, u2)?;
    let ry = radial_update(target, ty, theta, u2)?;
    Ok((PolarPoint::new(rx, theta.clone()), PolarPoint::new(ry, theta.clone())))
}

pub fn coupled_step<R: Rng + ?Sized>(
    target: &Target,
    x: &PolarPoint,
    y: &PolarPoint,
    rng: &mut R,
) -> Result<(PolarPoint, PolarPoint)> {
    let u1 = open_unit(rng);
    let (theta, _) = target.draw_direction(rng, DEFAULT_REJECTION_CAP)?;
    let u2 = open_unit(rng);
    coupled_step_with(target, x, y, u1, &theta, u2)
}

/// New radii of a coupled step for a rotationally invariant target. Both
/// points move to the same direction, so |x' - y'| = |r_x' - r_y'| and the
/// direction itself need not be drawn.
fn coupled_radii<R: Rng + ?Sized>(target: &Target, x: &PolarPoint, y: &PolarPoint, rng: &mut R) -> Result<(f64, f64)> {
    let u1 = open_unit(rng);
    let u2 = open_unit(rng);
    let axis = &x.direction;
    let tx = threshold_from_uniform(target, x, u1)?;
    let ty = threshold_from_uniform(target, y, u1)?;
    Ok((
        target.radial_update_ln(tx, axis, u2)?.exp(),
        target.radial_update_ln(ty, axis, u2)?.exp(),
    ))
}

fn mean_and_se(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Monte Carlo estimate of E|X' - Y'| / |x - y| under the coupling.
pub fn contraction_ratio<R: Rng + ?Sized>(
    target: &Target,
    pair: &CoupledPair,
    n: usize,
    rng: &mut R,
) -> Result<ContractionEstimate> {
    let theoretical_rate = theoretical_contraction_rate(target)?;
    let dist = pair.x.distance(&pair.y);
    if dist == 0.0 {
        return Err(Error::DegeneratePair);
    }
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two coupled steps".into()));
    }
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let (rx, ry) = coupled_radii(target, &pair.x, &pair.y, rng)?;
        let ratio = (rx - ry).abs() / dist;
        sum += ratio;
        sum_sq += ratio * ratio;
    }
    let (empirical_rate, std_error) = mean_and_se(sum, sum_sq, n);
    Ok(ContractionEstimate {
        empirical_rate,
        std_error,
        theoretical_rate,
        pair: pair.clone(),
    })
}

/// All ordered pairs (r_i, r_j), i < j with r_i != r_j, on the ray through e_1.
pub fn ray_pairs(d: usize, radii: &[f64]) -> Vec<CoupledPair> {
    let theta = Direction::axis(d);
    let mut out = Vec::new();
    for (i, &a) in radii.iter().enumerate() {
        for &b in &radii[i + 1..] {
            if a != b {
                out.push(CoupledPair::on_ray(a, b, theta.clone()));
            }
        }
    }
    out
}

/// Contraction ratios for a grid of pairs, evaluated in parallel with stream
/// i of `seed` for pair i. Results are in grid order.
pub fn contraction_grid(target: &Target, pairs: &[CoupledPair], n: usize, seed: u64) -> Vec<Result<ContractionEstimate>> {
    pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| contraction_ratio(target, p, n, &mut RngStream::new(seed, i as u64)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpnessEstimate {
    pub r: f64,
    /// |E|X'| - E|Y'|| / (r/2) from shared-randomness Monte Carlo.
    pub mc_value: f64,
    pub std_error: f64,
    /// The same quantity from one-dimensional quadrature, where available.
    pub quadrature: Option<f64>,
    pub theoretical_rate: Option<f64>,
}

/// E|X'| for one USS step of the standard multivariate t from a point of
/// norm rho: d/(d+1) times the integral over u in (0, 1) of
/// sqrt(u^{-2/(d+m)}(rho^2 + m) - m). The substitution u = w^{d+m} removes
/// the endpoint singularity.
pub fn std_t_mean_norm(d: usize, m: f64, rho: f64) -> Result<f64> {
    let df = d as f64;
    let p = df + m;
    let a = rho * rho + m;
    let f = |w: f64| w.powf(p - 2.0) * (a - m * w * w).max(0.0).sqrt();
    let v = integrate(f, 0.0, 1.0, 1e-14, 0.0)?;
    Ok(df / (df + 1.0) * p * v)
}

/// Probes the Dobrushin coefficient with x = r theta0 and y = (r/2) theta0.
pub fn sharpness_probe<R: Rng + ?Sized>(
    target: &Target,
    r: f64,
    theta0: &Direction,
    n: usize,
    rng: &mut R,
) -> Result<SharpnessEstimate> {
    let quad = |m: f64| -> Result<f64> {
        let d = target.d();
        Ok((std_t_mean_norm(d, m, r)? - std_t_mean_norm(d, m, r / 2.0)?) / (r / 2.0))
    };
    let quadrature = match target.family() {
        Family::StdT { m } => Some(quad(*m)?),
        Family::ParetoShell { .. } => None,
        _ => {
            return Err(Error::UnsupportedFamily(format!(
                "sharpness probe is defined for std_t and pareto_shell, not {}",
                target.name()
            )))
        }
    };
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two coupled steps".into()));
    }
    let x = PolarPoint::new(r, theta0.clone());
    let y = PolarPoint::new(r / 2.0, theta0.clone());
    for p in [&x, &y] {
        if target.log_factor1(p)? == f64::NEG_INFINITY {
            return Err(Error::OutOfSupport { radius: p.radius });
        }
    }
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let (rx, ry) = coupled_radii(target, &x, &y, rng)?;
        let v = (rx - ry) / (r / 2.0);
        sum += v;
        sum_sq += v * v;
    }
    let (mean, std_error) = mean_and_se(sum, sum_sq, n);
    Ok(SharpnessEstimate {
        r,
        mc_value: mean.abs(),
        std_error,
        quadrature,
        theoretical_rate: theoretical_contraction_rate(target).ok(),
    })
}
