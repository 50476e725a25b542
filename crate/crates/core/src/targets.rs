//! The five target families with tractable slices, their k-polar
//! factorizations eta = eta0 * eta1 with eta0(x) = |x|^{k-d}, slice
//! boundaries, radial stationary laws and exact stationary draws.
//!
//! Radii are handled on the log scale internally. Some configurations (tiny
//! exponents m, heavy tails) put typical radii within a few orders of
//! magnitude of f64::MAX.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::geometry::{sample_unit_sphere, surface_area, Direction, PolarPoint};
use crate::phi::PhiSpec;
use crate::quad::integrate;
use crate::rng::open_unit;

pub const DEFAULT_REJECTION_CAP: usize = 1_000_000;

pub type DirectionFn = Arc<dyn Fn(&Direction) -> f64 + Send + Sync>;

/// The angular factor chi of a rotationally asymmetric target
/// |x|^{k-d} exp(-chi(x/|x|) |x|^m).
#[derive(Clone)]
pub enum Chi {
    Constant(f64),
    /// scale * (theta^T P theta)^exponent with P symmetric positive definite.
    QuadraticForm {
        precision: DMatrix<f64>,
        scale: f64,
        exponent: f64,
    },
    Custom { label: String, f: DirectionFn },
}

impl fmt::Debug for Chi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::QuadraticForm {
                precision,
                scale,
                exponent,
            } => write!(
                f,
                "QuadraticForm {{ precision: {:?}, scale: {scale}, exponent: {exponent} }}",
                precision.as_slice()
            ),
            Self::Custom { label, .. } => write!(f, "Custom({label:?})"),
        }
    }
}

fn validate_spd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::InvalidParameter(format!("{name} must be a non-empty square matrix")));
    }
    let scale = m.amax();
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidParameter(format!("{name} must be symmetric")));
    }
    if m.iter().any(|v| !v.is_finite()) || m.clone().cholesky().is_none() {
        return Err(Error::InvalidParameter(format!("{name} must be positive definite")));
    }
    Ok(())
}

impl Chi {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("chi constant must be positive, got {c}")));
        }
        Ok(Self::Constant(c))
    }

    /// chi(theta) = theta^T Sigma^{-1} theta / 2, the angular factor of a
    /// centered Gaussian with covariance Sigma when m = 2.
    pub fn gaussian(sigma: DMatrix<f64>) -> Result<Self> {
        validate_spd(&sigma, "covariance")?;
        let precision = sigma.cholesky().expect("validated").inverse();
        let precision = 0.5 * (&precision + precision.transpose());
        Ok(Self::QuadraticForm {
            precision,
            scale: 0.5,
            exponent: 1.0,
        })
    }

    pub fn quadratic_form(precision: DMatrix<f64>, scale: f64, exponent: f64) -> Result<Self> {
        validate_spd(&precision, "precision")?;
        if !(scale > 0.0 && scale.is_finite() && exponent > 0.0 && exponent.is_finite()) {
            return Err(Error::InvalidParameter(
                "quadratic chi needs positive finite scale and exponent".into(),
            ));
        }
        Ok(Self::QuadraticForm {
            precision,
            scale,
            exponent,
        })
    }

    pub fn custom(label: impl Into<String>, f: DirectionFn) -> Self {
        Self::Custom {
            label: label.into(),
            f,
        }
    }

    pub fn eval(&self, theta: &Direction) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::QuadraticForm {
                precision,
                scale,
                exponent,
            } => {
                let th = theta.coords();
                let n = th.len();
                let mut q = 0.0;
                for j in 0..n {
                    let mut row = 0.0;
                    for i in 0..n {
                        row += precision[(i, j)] * th[i];
                    }
                    q += row * th[j];
                }
                scale * q.powf(*exponent)
            }
            Self::Custom { f, .. } => f(theta),
        }
    }

    /// A certified lower bound on the sphere, when one is known in closed form.
    pub fn lower_bound(&self) -> Option<f64> {
        match self {
            Self::Constant(c) => Some(*c),
            Self::QuadraticForm {
                precision,
                scale,
                exponent,
            } => {
                let eig = precision.clone().symmetric_eigen();
                Some(scale * eig.eigenvalues.min().powf(*exponent))
            }
            Self::Custom { .. } => None,
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Self::QuadraticForm { precision, .. } => Some(precision.nrows()),
            _ => None,
        }
    }

    /// The exact value of the sphere integral of chi^{-a} over S^{d-1}, when
    /// it is available in closed form.
    pub fn sphere_integral_inverse_power(&self, a: f64, d: usize) -> Option<f64> {
        let omega = surface_area(d);
        match self {
            Self::Constant(c) => Some(omega * c.powf(-a)),
            Self::QuadraticForm {
                precision,
                scale,
                exponent,
            } => {
                let n = precision.nrows();
                let diag = precision[(0, 0)];
                let isotropic = (0..n).all(|i| {
                    (0..n).all(|j| {
                        let want = if i == j { diag } else { 0.0 };
                        (precision[(i, j)] - want).abs() <= 1e-15 * diag.abs()
                    })
                });
                let q_power = exponent * a;
                let base = scale.powf(-a);
                if isotropic {
                    Some(base * omega * diag.powf(-q_power))
                } else if (q_power - d as f64 / 2.0).abs() <= 1e-12 * q_power {
                    // The sphere integral of (theta^T P theta)^{-d/2} equals
                    // omega_d / sqrt(det P).
                    Some(base * omega / precision.determinant().sqrt())
                } else {
                    None
                }
            }
            Self::Custom { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    /// |x|^{k-d} exp(-phi(|x|)) on the open ball of radius kappa.
    Dk { phi: PhiSpec },
    /// |x|^{k-d} exp(-phi(|x|^m)) with sup phi = infinity.
    RotInv { m: f64, phi: PhiSpec },
    /// |x|^{k-d} exp(-chi(x/|x|) |x|^m).
    RotAsym { m: f64, chi: Chi, chi_min: f64 },
    /// (1 + |x|^2/m)^{-(d+m)/2}, sampled with k = d.
    StdT { m: f64 },
    /// |x|^{-(d+m)} on |x| >= eps.
    ParetoShell { m: f64, eps: f64 },
}

#[derive(Debug, Clone)]
pub struct Target {
    d: usize,
    k: f64,
    family: Family,
    /// Numeric radial law, built on first use and shared between clones.
    radial: Arc<OnceLock<Result<RadialNormalizer>>>,
}

fn check_dk(d: usize, k: f64) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("k must be positive and finite, got {k}")));
    }
    Ok(())
}

fn check_m(m: f64) -> Result<()> {
    if m > 0.0 && m.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("m must be positive and finite, got {m}")))
    }
}

/// ln(1 + e^y) without overflow.
fn softplus(y: f64) -> f64 {
    if y > 35.0 {
        y + (-y).exp().ln_1p()
    } else {
        y.exp().ln_1p()
    }
}

/// ln(e^x - 1) for x > 0 without overflow.
pub(crate) fn ln_expm1(x: f64) -> f64 {
    if x > 35.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

impl Target {
    pub fn dk(d: usize, k: f64, phi: PhiSpec) -> Result<Self> {
        check_dk(d, k)?;
        Ok(Self {
            d,
            k,
            family: Family::Dk { phi },
            radial: Arc::default(),
        })
    }

    pub fn rot_inv(d: usize, k: f64, m: f64, phi: PhiSpec) -> Result<Self> {
        check_dk(d, k)?;
        check_m(m)?;
        if phi.sup_phi() != f64::INFINITY {
            return Err(Error::InvalidParameter(
                "rotation-invariant family needs sup phi = infinity".into(),
            ));
        }
        Ok(Self {
            d,
            k,
            family: Family::RotInv { m, phi },
            radial: Arc::default(),
        })
    }

    /// `chi_min` defaults to the closed-form lower bound of `chi` if it has one.
    pub fn rot_asym(d: usize, k: f64, m: f64, chi: Chi, chi_min: Option<f64>) -> Result<Self> {
        check_dk(d, k)?;
        check_m(m)?;
        if let Some(n) = chi.dim() {
            if n != d {
                return Err(Error::DimensionMismatch { expected: d, got: n });
            }
        }
        let chi_min = match chi_min.or_else(|| chi.lower_bound()) {
            Some(c) if c > 0.0 && c.is_finite() => c,
            Some(c) => {
                return Err(Error::InvalidParameter(format!("chi_min must be positive, got {c}")))
            }
            None => {
                return Err(Error::InvalidParameter(
                    "custom chi requires an explicit chi_min".into(),
                ))
            }
        };
        Ok(Self {
            d,
            k,
            family: Family::RotAsym { m, chi, chi_min },
            radial: Arc::default(),
        })
    }

    pub fn std_t(d: usize, m: f64) -> Result<Self> {
        check_dk(d, d as f64)?;
        check_m(m)?;
        Ok(Self {
            d,
            k: d as f64,
            family: Family::StdT { m },
            radial: Arc::default(),
        })
    }

    pub fn pareto_shell(d: usize, k: f64, m: f64, eps: f64) -> Result<Self> {
        check_dk(d, k)?;
        check_m(m)?;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
        }
        Ok(Self {
            d,
            k,
            family: Family::ParetoShell { m, eps },
            radial: Arc::default(),
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            Family::Dk { .. } => "dk",
            Family::RotInv { .. } => "rot_inv",
            Family::RotAsym { .. } => "rot_asym",
            Family::StdT { .. } => "std_t",
            Family::ParetoShell { .. } => "pareto_shell",
        }
    }

    pub fn is_rotation_invariant(&self) -> bool {
        !matches!(self.family, Family::RotAsym { .. })
    }

    /// (phi, m) for the families whose radial factor is exp(-phi(r^m)).
    pub(crate) fn radial_potential(&self) -> Option<(&PhiSpec, f64)> {
        match &self.family {
            Family::Dk { phi } => Some((phi, 1.0)),
            Family::RotInv { m, phi } => Some((phi, *m)),
            _ => None,
        }
    }

    fn check_point(&self, x: &PolarPoint) -> Result<()> {
        if x.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.dim(),
            });
        }
        if !x.radius.is_finite() || x.radius < 0.0 {
            return Err(Error::NonFinite(format!("radius {}", x.radius)));
        }
        Ok(())
    }

    /// log eta0(x) = (k - d) log |x|.
    pub fn log_factor0(&self, x: &PolarPoint) -> Result<f64> {
        self.check_point(x)?;
        let e = self.k - self.d as f64;
        if e == 0.0 {
            return Ok(0.0);
        }
        if x.radius == 0.0 {
            return if e < 0.0 { Err(Error::Origin) } else { Ok(f64::NEG_INFINITY) };
        }
        Ok(e * x.radius.ln())
    }

    /// log eta1(x); minus infinity outside the support.
    pub fn log_factor1(&self, x: &PolarPoint) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.log_factor1_ln(x.radius.ln(), &x.direction))
    }

    pub fn log_density(&self, x: &PolarPoint) -> Result<f64> {
        let f1 = self.log_factor1(x)?;
        if f1 == f64::NEG_INFINITY {
            return Ok(f1);
        }
        Ok(self.log_factor0(x)? + f1)
    }

    /// log eta1 at the point exp(ln_r) * theta.
    pub fn log_factor1_ln(&self, ln_r: f64, theta: &Direction) -> f64 {
        let k = self.k;
        match &self.family {
            Family::Dk { phi } | Family::RotInv { phi, .. } => {
                let m = self.radial_potential().map_or(1.0, |p| p.1);
                let u = (m * ln_r).exp();
                if u >= phi.kappa() {
                    f64::NEG_INFINITY
                } else if u <= 0.0 {
                    -phi.inf_phi()
                } else {
                    -phi.eval(u)
                }
            }
            Family::RotAsym { m, chi, .. } => -chi.eval(theta) * (m * ln_r).exp(),
            Family::StdT { m } => -0.5 * (self.d as f64 + m) * softplus(2.0 * ln_r - m.ln()),
            Family::ParetoShell { m, eps } => {
                if ln_r < eps.ln() {
                    f64::NEG_INFINITY
                } else {
                    -(k + m) * ln_r
                }
            }
        }
    }

    /// Supremum of log eta1 along the ray through theta.
    pub fn sup_log_factor1(&self, _theta: &Direction) -> f64 {
        match &self.family {
            Family::Dk { phi } | Family::RotInv { phi, .. } => -phi.inf_phi(),
            Family::RotAsym { .. } | Family::StdT { .. } => 0.0,
            Family::ParetoShell { m, eps } => -(self.k + m) * eps.ln(),
        }
    }

    /// (ln r_lo, ln r_hi) of the radial slice {r : log eta1(r theta) > log_t}.
    pub fn ln_slice_bounds(&self, log_t: f64, theta: &Direction) -> Result<(f64, f64)> {
        if log_t.is_nan() {
            return Err(Error::NonFinite("log threshold".into()));
        }
        if log_t >= self.sup_log_factor1(theta) {
            return Err(Error::EmptySlice { log_t });
        }
        let s = -log_t;
        match &self.family {
            Family::Dk { phi } | Family::RotInv { phi, .. } => {
                let m = self.radial_potential().map_or(1.0, |p| p.1);
                let r = phi.inverse_extended(s)?;
                Ok((f64::NEG_INFINITY, r.ln() / m))
            }
            Family::RotAsym { m, chi, .. } => {
                Ok((f64::NEG_INFINITY, (s.ln() - chi.eval(theta).ln()) / m))
            }
            Family::StdT { m } => {
                let x = 2.0 * s / (self.d as f64 + m);
                Ok((f64::NEG_INFINITY, 0.5 * (m.ln() + ln_expm1(x))))
            }
            Family::ParetoShell { m, eps } => Ok((eps.ln(), s / (self.k + m))),
        }
    }

    /// The radial slice interval (r_lo, r_hi) at threshold log_t along theta.
    pub fn slice_boundary(&self, log_t: f64, theta: &Direction) -> Result<(f64, f64)> {
        let (lo, hi) = self.ln_slice_bounds(log_t, theta)?;
        Ok((lo.exp(), hi.exp()))
    }

    /// ln of the inverse-CDF draw from r^{k-1} restricted to the slice.
    pub fn radial_update_ln(&self, log_t: f64, theta: &Direction, u2: f64) -> Result<f64> {
        let (lo, hi) = self.ln_slice_bounds(log_t, theta)?;
        let k = self.k;
        if lo == f64::NEG_INFINITY {
            return Ok(hi + u2.ln() / k);
        }
        let r_k = log_add_exp(u2.ln() + k * hi, (-u2).ln_1p() + k * lo);
        Ok((r_k / k).clamp(lo, hi))
    }

    /// Draws theta for the X-update: uniform for rotationally invariant
    /// families, density proportional to chi^{-k/m} otherwise. Returns the
    /// direction and the number of proposals used.
    pub fn draw_direction<R: Rng + ?Sized>(&self, rng: &mut R, cap: usize) -> Result<(Direction, usize)> {
        let Family::RotAsym { m, chi, chi_min } = &self.family else {
            return Ok((sample_unit_sphere(self.d, rng), 1));
        };
        let power = self.k / m;
        for n in 1..=cap {
            let theta = sample_unit_sphere(self.d, rng);
            let c = chi.eval(&theta);
            let acc = (chi_min / c).powf(power);
            if !(acc <= 1.0 + 1e-12) {
                return Err(Error::Hypothesis(format!(
                    "chi = {c} falls below chi_min = {chi_min}"
                )));
            }
            if rng.random::<f64>() < acc {
                return Ok((theta, n));
            }
        }
        Err(Error::RejectionBudget(cap))
    }

    /// CDF of |X| under the normalized target.
    pub fn radial_stationary_cdf(&self, r: f64) -> Result<f64> {
        if r.is_nan() || r < 0.0 {
            return Err(Error::Domain(format!("radius must be non-negative, got {r}")));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        if r == f64::INFINITY {
            return match self.family {
                Family::RotAsym { .. } => Err(Error::NotAvailable("radial CDF of rot_asym".into())),
                _ => Ok(1.0),
            };
        }
        match &self.family {
            Family::ParetoShell { m, eps } => Ok(if r < *eps { 0.0 } else { 1.0 - (eps / r).powf(*m) }),
            Family::StdT { m } => {
                let w = 1.0 / (1.0 + m / (r * r));
                Ok(beta_reg(self.d as f64 / 2.0, m / 2.0, w))
            }
            Family::Dk { .. } | Family::RotInv { .. } => {
                let (phi, m) = self.radial_potential().expect("potential family");
                if let Some((c, p)) = phi.power_law() {
                    let a = self.k / m;
                    let w = c * (p * m * r.ln()).exp();
                    return Ok(gamma_lr(a / p, w));
                }
                self.normalizer()?.cdf_ln(r.ln())
            }
            Family::RotAsym { .. } => Err(Error::NotAvailable("radial CDF of rot_asym".into())),
        }
    }

    fn normalizer(&self) -> Result<&RadialNormalizer> {
        let (phi, m) = self
            .radial_potential()
            .ok_or_else(|| Error::UnsupportedFamily(format!("{} has no radial potential", self.name())))?;
        self.radial
            .get_or_init(|| RadialNormalizer::new(phi, m, self.k))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// ln |X| for an exact draw from the radial marginal of a rotationally
    /// invariant target.
    pub fn stationary_ln_radius<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let k = self.k;
        match &self.family {
            Family::ParetoShell { m, eps } => Ok(eps.ln() - open_unit(rng).ln() / m),
            Family::StdT { m } => {
                let num = ChiSquared::new(self.d as f64).expect("valid dof");
                let den = ChiSquared::new(*m).expect("valid dof");
                let (a, b) = (positive_draw(&num, rng), positive_draw(&den, rng));
                Ok(0.5 * (m.ln() + a.ln() - b.ln()))
            }
            Family::Dk { .. } | Family::RotInv { .. } => {
                let (phi, m) = self.radial_potential().expect("potential family");
                if let Some((c, p)) = phi.power_law() {
                    let g = Gamma::new(k / m / p, 1.0)
                        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
                    let w = positive_draw(&g, rng);
                    return Ok((w.ln() - c.ln()) / (p * m));
                }
                self.normalizer()?.inverse_cdf_ln(open_unit(rng))
            }
            Family::RotAsym { .. } => Err(Error::UnsupportedFamily(
                "rot_asym has no direction-free radial law".into(),
            )),
        }
    }

    /// An exact draw from the normalized target.
    pub fn stationary_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PolarPoint> {
        if let Family::RotAsym { m, chi, .. } = &self.family {
            let (theta, _) = self.draw_direction(rng, DEFAULT_REJECTION_CAP)?;
            let g = Gamma::new(self.k / m, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let w = positive_draw(&g, rng);
            let ln_r = (w.ln() - chi.eval(&theta).ln()) / m;
            return Ok(PolarPoint::new(ln_r.exp(), theta));
        }
        let ln_r = self.stationary_ln_radius(rng)?;
        let theta = sample_unit_sphere(self.d, rng);
        Ok(PolarPoint::new(ln_r.exp(), theta))
    }
}

fn positive_draw<D: Distribution<f64>, R: Rng + ?Sized>(dist: &D, rng: &mut R) -> f64 {
    loop {
        let v = dist.sample(rng);
        if v > 0.0 {
            return v;
        }
    }
}

/// Radial law of a potential family on the scale v = m ln r, where the
/// density is proportional to exp(psi(v)) with psi(v) = (k/m) v - phi(e^v).
/// The mass is tabulated on panels once; CDF values and inverses integrate
/// within a single panel.
#[derive(Debug)]
pub(crate) struct RadialNormalizer {
    phi: PhiSpec,
    a: f64,
    m: f64,
    ln_kappa: f64,
    peak: f64,
    peak_value: f64,
    /// Panel edges spanning the region within 60 nats of the mode.
    edges: Vec<f64>,
    /// Normalized mass to the left of each edge.
    cum: Vec<f64>,
    total: f64,
}

const QUAD_TOL: f64 = 1e-13;
const PANELS: usize = 128;

impl RadialNormalizer {
    pub(crate) fn new(phi: &PhiSpec, m: f64, k: f64) -> Result<Self> {
        let ln_kappa = phi.kappa().ln();
        let mut this = Self {
            phi: phi.clone(),
            a: k / m,
            m,
            ln_kappa,
            peak: 0.0,
            peak_value: 0.0,
            edges: Vec::new(),
            cum: Vec::new(),
            total: 0.0,
        };
        // Golden-section search for the mode of the concave log-density.
        let (mut a, mut b) = (-700.0, ln_kappa.min(700.0));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
        let (mut fc, mut fd) = (this.psi(c), this.psi(d));
        for _ in 0..200 {
            if b - a <= 1e-12 * (1.0 + a.abs().max(b.abs())) {
                break;
            }
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = this.psi(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = this.psi(d);
            }
        }
        this.peak = 0.5 * (a + b);
        this.peak_value = this.psi(this.peak);
        if !this.peak_value.is_finite() {
            return Err(Error::NonFinite("mode of the radial density".into()));
        }
        let drop = this.peak_value - 60.0;
        let mut step = 1.0;
        while this.psi(this.peak - step) > drop {
            step *= 2.0;
        }
        let lo = this.peak - step;
        step = 1.0;
        let hi = loop {
            let v = this.peak + step;
            if v >= ln_kappa {
                break ln_kappa;
            }
            if this.psi(v) <= drop {
                break v;
            }
            step *= 2.0;
        };
        // Edges on both sides of the mode, with the mode itself an edge.
        let left = ((this.peak - lo) / (hi - lo) * PANELS as f64).round().clamp(1.0, (PANELS - 1) as f64) as usize;
        let mut edges: Vec<f64> = (0..=left)
            .map(|i| lo + (this.peak - lo) * i as f64 / left as f64)
            .collect();
        let right = PANELS - left;
        edges.extend((1..=right).map(|i| this.peak + (hi - this.peak) * i as f64 / right as f64));
        let mut cum = vec![0.0];
        for w in edges.windows(2) {
            let last = *cum.last().expect("non-empty");
            cum.push(last + this.mass(w[0], w[1])?);
        }
        let total = *cum.last().expect("non-empty");
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::NonFinite("radial normalizing constant".into()));
        }
        for c in cum.iter_mut() {
            *c /= total;
        }
        this.edges = edges;
        this.cum = cum;
        this.total = total;
        Ok(this)
    }

    fn psi(&self, v: f64) -> f64 {
        if v >= self.ln_kappa {
            return f64::NEG_INFINITY;
        }
        let u = v.exp();
        let p = if u <= 0.0 { self.phi.inf_phi() } else { self.phi.eval(u) };
        if p.is_nan() {
            return f64::NEG_INFINITY;
        }
        self.a * v - p
    }

    /// Unnormalized mass on [lo, hi], relative to the density at the mode.
    fn mass(&self, lo: f64, hi: f64) -> Result<f64> {
        let f = |v: f64| (self.psi(v) - self.peak_value).exp();
        integrate(f, lo, hi, QUAD_TOL, 0.0)
    }

    fn panel(&self, v: f64) -> usize {
        self.edges.partition_point(|e| *e <= v).saturating_sub(1).min(self.edges.len() - 2)
    }

    fn cdf_v(&self, v: f64) -> Result<f64> {
        let lo = self.edges[0];
        let hi = *self.edges.last().expect("non-empty");
        if v <= lo {
            return Ok(0.0);
        }
        if v >= hi {
            return Ok(1.0);
        }
        let i = self.panel(v);
        Ok((self.cum[i] + self.mass(self.edges[i], v)? / self.total).clamp(0.0, 1.0))
    }

    /// CDF at r = exp(ln_r).
    pub(crate) fn cdf_ln(&self, ln_r: f64) -> Result<f64> {
        self.cdf_v(self.m * ln_r)
    }

    /// Safeguarded Newton iteration inside the panel holding u.
    pub(crate) fn inverse_cdf_ln(&self, u: f64) -> Result<f64> {
        let i = self.cum.partition_point(|c| *c <= u).saturating_sub(1).min(self.edges.len() - 2);
        let (mut a, mut b) = (self.edges[i], self.edges[i + 1]);
        let mut v = 0.5 * (a + b);
        for _ in 0..100 {
            let f = self.cdf_v(v)? - u;
            if f == 0.0 {
                break;
            }
            if f < 0.0 {
                a = v;
            } else {
                b = v;
            }
            let dens = (self.psi(v) - self.peak_value).exp() / self.total;
            let newton = v - f / dens;
            let next = if dens > 0.0 && newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
            if (next - v).abs() <= 1e-15 * (1.0 + v.abs()) || b - a <= 1e-15 * (1.0 + v.abs()) {
                v = next;
                break;
            }
            v = next;
        }
        Ok(v / self.m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use approx::assert_relative_eq;
    use std::f64::consts::{LN_2, PI};

    fn at(d: usize, r: f64) -> PolarPoint {
        PolarPoint::new(r, Direction::axis(d))
    }

    fn all_families() -> Vec<Target> {
        vec![
            Target::dk(3, 1.5, PhiSpec::linear(1.0).unwrap().with_kappa(4.0).unwrap()).unwrap(),
            Target::rot_inv(4, 2.0, 0.5, PhiSpec::exp_minus_one(0.3).unwrap()).unwrap(),
            Target::rot_asym(
                3,
                2.0,
                1.5,
                Chi::gaussian(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0, 9.0])))
                    .unwrap(),
                None,
            )
            .unwrap(),
            Target::std_t(5, 3.0).unwrap(),
            Target::pareto_shell(3, 1.0, 2.0, 0.7).unwrap(),
        ]
    }

    #[test]
    fn log_density_examples() {
        let t = Target::std_t(2, 2.0).unwrap();
        assert_eq!(t.log_density(&at(2, 0.0)).unwrap(), 0.0);
        let p = Target::pareto_shell(3, 1.0, 2.0, 1.0).unwrap();
        assert_relative_eq!(p.log_density(&at(3, 2.0)).unwrap(), -5.0 * LN_2, max_relative = 1e-14);
        let dk = Target::dk(2, 1.0, PhiSpec::linear(1.0).unwrap()).unwrap();
        assert_relative_eq!(dk.log_density(&at(2, 1.0)).unwrap(), -1.0);
        assert_eq!(dk.log_density(&at(2, 0.0)), Err(Error::Origin));
    }

    #[test]
    fn log_factor1_examples() {
        let p = Target::pareto_shell(3, 1.0, 2.0, 1.0).unwrap();
        assert_relative_eq!(p.log_factor1(&at(3, 2.0)).unwrap(), -3.0 * LN_2, max_relative = 1e-14);
        assert_eq!(p.log_factor1(&at(3, 0.5)).unwrap(), f64::NEG_INFINITY);
        let ra = Target::rot_asym(2, 1.0, 2.0, Chi::constant(3.0).unwrap(), None).unwrap();
        assert!(ra.log_factor1(&at(2, 1e-9)).unwrap().abs() < 1e-15);
        let dk = Target::dk(2, 1.0, PhiSpec::linear(1.0).unwrap().with_kappa(2.0).unwrap()).unwrap();
        assert_eq!(dk.log_factor1(&at(2, 2.0)).unwrap(), f64::NEG_INFINITY);
        assert_eq!(
            dk.log_factor1(&at(3, 1.0)),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        );
    }

    #[test]
    fn slice_boundary_examples() {
        let t = Target::std_t(2, 2.0).unwrap();
        let th = Direction::axis(2);
        let (lo, hi) = t.slice_boundary(0.25f64.ln(), &th).unwrap();
        assert_eq!(lo, 0.0);
        assert_relative_eq!(hi, 2f64.sqrt(), max_relative = 1e-14);
        assert!(matches!(t.slice_boundary(0.0, &th), Err(Error::EmptySlice { .. })));
        let p = Target::pareto_shell(2, 1.0, 2.0, 1.0).unwrap();
        assert!(matches!(p.slice_boundary(0.0, &th), Err(Error::EmptySlice { .. })));
        let (lo, hi) = p.slice_boundary(-3.0 * LN_2, &th).unwrap();
        assert_relative_eq!(lo, 1.0);
        assert_relative_eq!(hi, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn radial_update_examples() {
        let th = Direction::axis(3);
        let p = Target::pareto_shell(3, 1.0, 2.0, 1.0).unwrap();
        let log_t = -3.0 * 3f64.ln();
        assert_relative_eq!(p.radial_update_ln(log_t, &th, 0.0).unwrap().exp(), 1.0);
        assert_relative_eq!(p.radial_update_ln(log_t, &th, 1.0).unwrap().exp(), 3.0, max_relative = 1e-14);
        let dk = Target::dk(3, 1.0, PhiSpec::linear(1.0).unwrap()).unwrap();
        assert_relative_eq!(dk.radial_update_ln(-2.0, &th, 0.5).unwrap().exp(), 1.0, max_relative = 1e-15);
        let t = Target::std_t(2, 2.0).unwrap();
        let r = t.radial_update_ln(0.25f64.ln(), &Direction::axis(2), 0.25).unwrap().exp();
        assert_relative_eq!(r, 0.5 * 2f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn factorization_identity() {
        let mut rng = RngStream::new(1, 0);
        for t in all_families() {
            for _ in 0..1000 {
                let r = (8.0 * rng.random::<f64>() - 3.0).exp();
                let x = PolarPoint::new(r, sample_unit_sphere(t.d(), &mut rng));
                let f1 = t.log_factor1(&x).unwrap();
                if f1 == f64::NEG_INFINITY {
                    assert_eq!(t.log_density(&x).unwrap(), f64::NEG_INFINITY);
                    continue;
                }
                let lhs = t.log_density(&x).unwrap();
                let rhs = t.log_factor0(&x).unwrap() + f1;
                assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()), "{}", t.name());
            }
        }
    }

    #[test]
    fn explicit_densities_match_factorization() {
        // Each density written out directly, independent of the factor code.
        let mut rng = RngStream::new(2, 0);
        let fams = all_families();
        for _ in 0..200 {
            let r: f64 = 0.8 + 3.0 * rng.random::<f64>();
            let th = sample_unit_sphere(3, &mut rng);
            let x = PolarPoint::new(r, th.clone());
            let dk = (1.5 - 3.0) * r.ln() - r;
            let want = if r < 4.0 { dk } else { f64::NEG_INFINITY };
            assert_relative_eq!(fams[0].log_density(&x).unwrap(), want, max_relative = 1e-12);
            let c = th.coords();
            let chi = 0.5 * (c[0] * c[0] + c[1] * c[1] / 4.0 + c[2] * c[2] / 9.0);
            let ra = (2.0 - 3.0) * r.ln() - chi * r.powf(1.5);
            assert_relative_eq!(fams[2].log_density(&x).unwrap(), ra, max_relative = 1e-12);
            let pareto = if r >= 0.7 { -(3.0 + 2.0) * r.ln() } else { f64::NEG_INFINITY };
            assert_relative_eq!(fams[4].log_density(&x).unwrap(), pareto, max_relative = 1e-12);
            let x5 = PolarPoint::new(r, sample_unit_sphere(5, &mut rng));
            let st = -(5.0 + 3.0) / 2.0 * (1.0 + r * r / 3.0).ln();
            assert_relative_eq!(fams[3].log_density(&x5).unwrap(), st, max_relative = 1e-12);
        }
    }

    #[test]
    fn slice_matches_indicator() {
        let mut rng = RngStream::new(3, 0);
        for t in all_families() {
            for _ in 0..1000 {
                let th = sample_unit_sphere(t.d(), &mut rng);
                let log_t = t.sup_log_factor1(&th) - 6.0 * rng.random::<f64>() - 1e-6;
                let (lo, hi) = t.slice_boundary(log_t, &th).unwrap();
                let r = (6.0 * rng.random::<f64>() - 2.0).exp();
                let inside = r > lo && r < hi;
                let above = t.log_factor1(&PolarPoint::new(r, th.clone())).unwrap() > log_t;
                if (r - lo).abs() > 1e-9 * r && (r - hi).abs() > 1e-9 * r {
                    assert_eq!(inside, above, "{} r={r} lo={lo} hi={hi}", t.name());
                }
            }
        }
    }

    #[test]
    fn radial_cdf_examples() {
        let p = Target::pareto_shell(3, 1.0, 2.0, 1.0).unwrap();
        assert_eq!(p.radial_stationary_cdf(1.0).unwrap(), 0.0);
        assert_relative_eq!(p.radial_stationary_cdf(2.0).unwrap(), 0.75);
        let dk = Target::dk(2, 1.0, PhiSpec::linear(1.0).unwrap()).unwrap();
        assert_eq!(dk.radial_stationary_cdf(f64::INFINITY).unwrap(), 1.0);
        let ra = &all_families()[2];
        assert!(matches!(ra.radial_stationary_cdf(1.0), Err(Error::NotAvailable(_))));
    }

    #[test]
    fn radial_cdf_is_monotone() {
        for t in all_families().into_iter().filter(|t| t.is_rotation_invariant()) {
            let mut prev = 0.0;
            for i in 0..200 {
                let r = (-4.0 + 0.05 * i as f64).exp();
                let c = t.radial_stationary_cdf(r).unwrap();
                assert!(c >= prev - 1e-12 && (0.0..=1.0).contains(&c), "{}", t.name());
                prev = c;
            }
            assert!(prev > 0.999, "{} {prev}", t.name());
        }
    }

    #[test]
    fn std_t_cdf_matches_angle_quadrature() {
        // r = sqrt(m) tan(a) turns the radial density into sin^{d-1} cos^{m-1}.
        for (d, m) in [(3usize, 3.0f64), (2, 2.0), (10, 1.5)] {
            let t = Target::std_t(d, m).unwrap();
            let f = |a: f64| a.sin().powi(d as i32 - 1) * a.cos().powf(m - 1.0);
            let total = integrate(f, 0.0, PI / 2.0, 1e-13, 0.0).unwrap();
            for r in [0.1, 1.0, 2.5, 10.0] {
                let want = integrate(f, 0.0, (r / m.sqrt()).atan(), 1e-13, 0.0).unwrap() / total;
                assert_relative_eq!(t.radial_stationary_cdf(r).unwrap(), want, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn generic_cdf_matches_gamma_law() {
        // The quadrature route against the closed-form Gamma CDF for a
        // potential expressed through a custom closure.
        let phi = PhiSpec::custom(
            "two r squared",
            Arc::new(|u: f64| 2.0 * u * u),
            None,
            f64::INFINITY,
            0.0,
            f64::INFINITY,
        )
        .unwrap();
        let generic = Target::rot_inv(4, 3.0, 0.5, phi).unwrap();
        let closed = Target::rot_inv(4, 3.0, 0.5, PhiSpec::power(2.0, 2.0).unwrap()).unwrap();
        for r in [0.01, 0.3, 1.0, 2.0, 5.0] {
            let a = generic.radial_stationary_cdf(r).unwrap();
            let b = closed.radial_stationary_cdf(r).unwrap();
            assert!((a - b).abs() < 1e-10, "r={r}: {a} vs {b}");
        }
        // Dk on a finite ball, linear potential: the truncated Gamma(k) law.
        let dk = Target::dk(3, 2.0, PhiSpec::linear(1.0).unwrap().with_kappa(1.5).unwrap()).unwrap();
        for r in [0.2, 0.7, 1.4] {
            let want = gamma_lr(2.0, r) / gamma_lr(2.0, 1.5);
            assert_relative_eq!(dk.radial_stationary_cdf(r).unwrap(), want, max_relative = 1e-10);
        }
        assert_eq!(dk.radial_stationary_cdf(1.6).unwrap(), 1.0);
    }

    #[test]
    fn tabulated_inverse_round_trips() {
        let phi = PhiSpec::exp_minus_one(0.7).unwrap();
        let norm = RadialNormalizer::new(&phi, 0.5, 2.0).unwrap();
        for u in [1e-9, 0.003, 0.25, 0.5, 0.9, 1.0 - 1e-9] {
            let ln_r = norm.inverse_cdf_ln(u).unwrap();
            assert!((norm.cdf_ln(ln_r).unwrap() - u).abs() < 1e-12, "u={u}");
        }
    }

    #[test]
    fn level_set_constant_quadratic() {
        let chi = Chi::gaussian(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0]))).unwrap();
        assert_relative_eq!(chi.lower_bound().unwrap(), 0.125, max_relative = 1e-12);
        // a = 1 = d/2 is the exact case; P = diag(1, 1/4), det = 1/4.
        let exact = chi.sphere_integral_inverse_power(1.0, 2).unwrap();
        let mut rng = RngStream::new(4, 0);
        let mc = crate::geometry::sphere_integral_mc(|th| chi.eval(th).recip(), 2, 400_000, &mut rng).unwrap();
        assert!((mc.value - exact).abs() < 4.0 * mc.std_error, "{} vs {exact}", mc.value);
        assert_relative_eq!(exact, 2.0 * 2.0 * PI / 0.5, max_relative = 1e-12);
        assert!(chi.sphere_integral_inverse_power(0.7, 2).is_none());
        let c = Chi::constant(4.0).unwrap();
        assert_relative_eq!(c.sphere_integral_inverse_power(2.0, 2).unwrap(), 2.0 * PI / 16.0);
    }

    #[test]
    fn invalid_constructions() {
        assert!(Target::std_t(0, 2.0).is_err());
        assert!(Target::pareto_shell(3, 1.0, 2.0, 0.0).is_err());
        assert!(Target::rot_inv(3, 1.0, 1.0, PhiSpec::linear(1.0).unwrap().with_kappa(2.0).unwrap()).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(Chi::gaussian(bad).is_err());
        let chi = Chi::custom("c", Arc::new(|_| 1.0));
        assert!(Target::rot_asym(2, 1.0, 1.0, chi, None).is_err());
        let chi3 = Chi::gaussian(DMatrix::identity(3, 3)).unwrap();
        assert!(matches!(
            Target::rot_asym(2, 1.0, 1.0, chi3, None),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejection_detects_bad_lower_bound() {
        let chi = Chi::custom("half", Arc::new(|_| 0.5));
        let t = Target::rot_asym(2, 1.0, 1.0, chi, Some(1.0)).unwrap();
        let mut rng = RngStream::new(5, 0);
        assert!(matches!(t.draw_direction(&mut rng, 10), Err(Error::Hypothesis(_))));
        let chi = Chi::custom("tiny", Arc::new(|_| 1.0));
        let t = Target::rot_asym(2, 1.0, 1.0, chi, Some(1e-9)).unwrap();
        assert_eq!(t.draw_direction(&mut rng, 3), Err(Error::RejectionBudget(3)));
    }
}
