//! The exact k-PSS transition: threshold draw, inverse-CDF radial draw on the
//! slice, direction draw, and chain runners.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Direction, PolarPoint};
use crate::rng::open_unit;
use crate::targets::{Target, DEFAULT_REJECTION_CAP};

/// Internals of one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord {
    pub log_t: f64,
    pub r_new: f64,
    pub theta_new: Direction,
    pub x_new: PolarPoint,
    /// Direction proposals consumed (always 1 for rotationally invariant targets).
    pub proposals: usize,
}

/// log t = log u1 + log eta1(x) for a given u1 in (0, 1].
pub fn threshold_from_uniform(target: &Target, x: &PolarPoint, u1: f64) -> Result<f64> {
    if x.radius == 0.0 {
        return Err(Error::Origin);
    }
    let f1 = target.log_factor1(x)?;
    if f1 == f64::NEG_INFINITY {
        return Err(Error::OutOfSupport { radius: x.radius });
    }
    Ok(u1.ln() + f1)
}

pub fn draw_threshold<R: Rng + ?Sized>(target: &Target, x: &PolarPoint, rng: &mut R) -> Result<f64> {
    threshold_from_uniform(target, x, open_unit(rng))
}

pub fn radial_update(target: &Target, log_t: f64, theta: &Direction, u2: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u2) {
        return Err(Error::Domain(format!("u2 must lie in [0, 1], got {u2}")));
    }
    Ok(target.radial_update_ln(log_t, theta, u2)?.exp())
}

pub fn direction_update<R: Rng + ?Sized>(target: &Target, rng: &mut R) -> Result<Direction> {
    Ok(target.draw_direction(rng, DEFAULT_REJECTION_CAP)?.0)
}

/// One transition with the randomness supplied explicitly.
pub fn step_with(target: &Target, x: &PolarPoint, u1: f64, theta: Direction, u2: f64) -> Result<TransitionRecord> {
    let log_t = threshold_from_uniform(target, x, u1)?;
    let r_new = radial_update(target, log_t, &theta, u2)?;
    Ok(TransitionRecord {
        log_t,
        r_new,
        theta_new: theta.clone(),
        x_new: PolarPoint::new(r_new, theta),
        proposals: 1,
    })
}

pub fn step<R: Rng + ?Sized>(target: &Target, x: &PolarPoint, rng: &mut R) -> Result<TransitionRecord> {
    step_capped(target, x, rng, DEFAULT_REJECTION_CAP)
}

fn step_capped<R: Rng + ?Sized>(target: &Target, x: &PolarPoint, rng: &mut R, cap: usize) -> Result<TransitionRecord> {
    let log_t = draw_threshold(target, x, rng)?;
    let (theta, proposals) = target.draw_direction(rng, cap)?;
    let ln_r = target.radial_update_ln(log_t, &theta, open_unit(rng))?;
    let r_new = ln_r.exp();
    Ok(TransitionRecord {
        log_t,
        r_new,
        theta_new: theta.clone(),
        x_new: PolarPoint::new(r_new, theta),
        proposals,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// An exact draw from the target.
    Stationary,
    Point(PolarPoint),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    /// Total number of transitions, burn-in included.
    pub n_steps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub init: Init,
    pub rejection_cap: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_steps: 0,
            burn_in: 0,
            thinning: 1,
            init: Init::Stationary,
            rejection_cap: DEFAULT_REJECTION_CAP,
        }
    }
}

impl ChainConfig {
    pub fn new(n_steps: usize, burn_in: usize, thinning: usize) -> Self {
        Self {
            n_steps,
            burn_in,
            thinning,
            ..Self::default()
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.thinning == 0 {
            return Err(Error::InvalidParameter("thinning must be at least 1".into()));
        }
        if self.burn_in > self.n_steps {
            return Err(Error::InvalidParameter(format!(
                "burn-in {} exceeds the number of steps {}",
                self.burn_in, self.n_steps
            )));
        }
        Ok(())
    }

    fn records(&self, i: usize) -> bool {
        i > self.burn_in && (i - self.burn_in - 1).is_multiple_of(self.thinning)
    }

    fn expected_len(&self) -> usize {
        (self.n_steps - self.burn_in).div_ceil(self.thinning)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub series: Vec<f64>,
    pub final_state: PolarPoint,
    pub stationary_start: bool,
    pub direction_proposals: u64,
}

/// Runs `config.n_steps` transitions and records `summary` of the states
/// after burn-in, with thinning.
pub fn run_chain<F, R>(target: &Target, config: &ChainConfig, mut summary: F, rng: &mut R) -> Result<ChainOutput>
where
    F: FnMut(&PolarPoint) -> f64,
    R: Rng + ?Sized,
{
    config.validate()?;
    let (mut x, stationary_start) = match &config.init {
        Init::Stationary => (target.stationary_draw(rng)?, true),
        Init::Point(p) => (p.clone(), false),
    };
    let mut series = Vec::with_capacity(config.expected_len());
    let mut proposals = 0u64;
    for i in 1..=config.n_steps {
        let rec = step_capped(target, &x, rng, config.rejection_cap)?;
        proposals += rec.proposals as u64;
        x = rec.x_new;
        if config.records(i) {
            series.push(summary(&x));
        }
    }
    Ok(ChainOutput {
        series,
        final_state: x,
        stationary_start,
        direction_proposals: proposals,
    })
}

/// Summaries that depend on the state only through its norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadialSummary {
    Norm,
    LogNorm,
}

impl RadialSummary {
    pub fn apply_ln(self, ln_r: f64) -> f64 {
        match self {
            Self::Norm => ln_r.exp(),
            Self::LogNorm => ln_r,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialChainOutput {
    pub series: Vec<f64>,
    pub final_ln_radius: f64,
    pub stationary_start: bool,
}

/// The norm process of the chain for a rotationally invariant target. For
/// such targets the radial update ignores the direction, so |X_n| is itself a
/// Markov chain and can be simulated without drawing directions. Radii are
/// carried on the log scale.
pub fn run_radial_chain<R: Rng + ?Sized>(
    target: &Target,
    config: &ChainConfig,
    summary: RadialSummary,
    rng: &mut R,
) -> Result<RadialChainOutput> {
    config.validate()?;
    if !target.is_rotation_invariant() {
        return Err(Error::UnsupportedFamily(format!(
            "{} is not rotationally invariant",
            target.name()
        )));
    }
    let axis = Direction::axis(target.d());
    let (mut ln_r, stationary_start) = match &config.init {
        Init::Stationary => (target.stationary_ln_radius(rng)?, true),
        Init::Point(p) => {
            if p.radius == 0.0 {
                return Err(Error::Origin);
            }
            (p.radius.ln(), false)
        }
    };
    if target.log_factor1_ln(ln_r, &axis) == f64::NEG_INFINITY {
        return Err(Error::OutOfSupport { radius: ln_r.exp() });
    }
    let mut series = Vec::with_capacity(config.expected_len());
    for i in 1..=config.n_steps {
        let log_t = open_unit(rng).ln() + target.log_factor1_ln(ln_r, &axis);
        ln_r = target.radial_update_ln(log_t, &axis, open_unit(rng))?;
        if config.records(i) {
            series.push(summary.apply_ln(ln_r));
        }
    }
    Ok(RadialChainOutput {
        series,
        final_ln_radius: ln_r,
        stationary_start,
    })
}
