use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{ln_surface_area, sphere_integral_mc, surface_area, Direction, McEstimate};
use crate::rng::RngStream;
use crate::targets::{ln_expm1, Family, Target};

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    ClosedForm(String),
    /// Closed form up to a sphere-integral constant estimated by Monte Carlo.
    MonteCarlo { samples: usize, std_error: f64 },
}

/// A generalized level-set function t -> l(t), stored as a function of log t.
#[derive(Clone)]
pub struct LevelSetFn {
    eval_log: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// log of the right end of supp(l).
    pub log_t_max: f64,
    /// lim_{t -> 0} l(t).
    pub sup_ell: f64,
    pub provenance: Provenance,
}

impl fmt::Debug for LevelSetFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevelSetFn")
            .field("log_t_max", &self.log_t_max)
            .field("sup_ell", &self.sup_ell)
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl LevelSetFn {
    /// `eval_log` is only called with log t < log_t_max.
    pub fn new(
        eval_log: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        log_t_max: f64,
        sup_ell: f64,
        provenance: Provenance,
    ) -> Self {
        Self {
            eval_log,
            log_t_max,
            sup_ell,
            provenance,
        }
    }

    /// l(t) = -log t on (0, 1).
    pub fn neg_log() -> Self {
        Self::new(Arc::new(|lt: f64| -lt), 0.0, f64::INFINITY, Provenance::ClosedForm("neg_log".into()))
    }

    pub fn eval_log(&self, log_t: f64) -> f64 {
        if log_t >= self.log_t_max {
            0.0
        } else if log_t == f64::NEG_INFINITY {
            self.sup_ell
        } else {
            (self.eval_log)(log_t)
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            self.sup_ell
        } else {
            self.eval_log(t.ln())
        }
    }

    pub fn t_max(&self) -> f64 {
        self.log_t_max.exp()
    }
}

pub const DEFAULT_CONSTANT_SAMPLES: usize = 1_000_000;

/// The level-set function of the k-polar factorization of `target`. Sphere
/// integrals without a closed form are estimated with a fixed-seed stream.
pub fn level_set_closed_form(target: &Target) -> Result<LevelSetFn> {
    level_set_closed_form_with(target, DEFAULT_CONSTANT_SAMPLES, &mut RngStream::new(0, 0))
}

pub fn level_set_closed_form_with<R: Rng + ?Sized>(target: &Target, n: usize, rng: &mut R) -> Result<LevelSetFn> {
    let d = target.d();
    let k = target.k();
    let omega = surface_area(d);
    let name = target.name().to_string();
    match target.family().clone() {
        Family::Dk { phi } | Family::RotInv { phi, .. } => {
            let m = match target.family() {
                Family::RotInv { m, .. } => *m,
                _ => 1.0,
            };
            let sup_ell = if phi.kappa().is_finite() {
                omega / k * phi.kappa().powf(k / m)
            } else {
                f64::INFINITY
            };
            let log_t_max = -phi.inf_phi();
            let f = move |lt: f64| match phi.inverse_extended(-lt) {
                Ok(r) => omega / k * r.powf(k / m),
                Err(_) => f64::NAN,
            };
            Ok(LevelSetFn::new(Arc::new(f), log_t_max, sup_ell, Provenance::ClosedForm(name)))
        }
        Family::RotAsym { m, chi, .. } => {
            let a = k / m;
            let (integral, provenance) = match chi.sphere_integral_inverse_power(a, d) {
                Some(v) => (v, Provenance::ClosedForm(name)),
                None => {
                    let est = sphere_integral_mc(|th: &Direction| chi.eval(th).powf(-a), d, n, rng)?;
                    (
                        est.value,
                        Provenance::MonteCarlo {
                            samples: n,
                            std_error: est.std_error / k,
                        },
                    )
                }
            };
            let c = integral / k;
            let f = move |lt: f64| c * (-lt).powf(a);
            Ok(LevelSetFn::new(Arc::new(f), 0.0, f64::INFINITY, provenance))
        }
        Family::StdT { m } => {
            let df = d as f64;
            let ln_c = ln_surface_area(d) + 0.5 * df * m.ln() - df.ln();
            let f = move |lt: f64| (ln_c + 0.5 * df * ln_expm1(-2.0 * lt / (df + m))).exp();
            Ok(LevelSetFn::new(Arc::new(f), 0.0, f64::INFINITY, Provenance::ClosedForm(name)))
        }
        Family::ParetoShell { m, eps } => {
            let log_t_max = -(k + m) * eps.ln();
            let f = move |lt: f64| omega / k * ((-k * lt / (k + m)).exp() - eps.powf(k));
            Ok(LevelSetFn::new(Arc::new(f), log_t_max, f64::INFINITY, Provenance::ClosedForm(name)))
        }
    }
}

/// Monte Carlo estimate of l(t) = integral of eta0 * 1(eta1 > t): the sphere
/// average of the radial integral of r^{k-1} over the slice along theta.
pub fn level_set_mc<R: Rng + ?Sized>(target: &Target, log_t: f64, n: usize, rng: &mut R) -> Result<McEstimate> {
    let probe = Direction::axis(target.d());
    if log_t >= target.sup_log_factor1(&probe) {
        return Ok(McEstimate {
            value: 0.0,
            std_error: 0.0,
        });
    }
    let k = target.k();
    let radial = |th: &Direction| match target.ln_slice_bounds(log_t, th) {
        Ok((lo, hi)) => ((k * hi).exp() - (k * lo).exp()) / k,
        Err(Error::EmptySlice { .. }) => 0.0,
        Err(_) => f64::NAN,
    };
    sphere_integral_mc(radial, target.d(), n, rng)
}
