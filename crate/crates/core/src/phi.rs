//! Strictly increasing convex potentials phi on (0, kappa) together with their
//! inverse and the extended inverse that saturates at kappa.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum PhiForm {
    /// alpha * r
    Linear { alpha: f64 },
    /// scale * r^exponent with exponent >= 1
    Power { scale: f64, exponent: f64 },
    /// exp(alpha * r) - 1
    ExpMinusOne { alpha: f64 },
    /// Caller-supplied potential; `inverse` is an optional closed form.
    Custom {
        label: String,
        eval: ScalarFn,
        inverse: Option<ScalarFn>,
    },
}

impl fmt::Debug for PhiForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear { alpha } => write!(f, "Linear {{ alpha: {alpha} }}"),
            Self::Power { scale, exponent } => {
                write!(f, "Power {{ scale: {scale}, exponent: {exponent} }}")
            }
            Self::ExpMinusOne { alpha } => write!(f, "ExpMinusOne {{ alpha: {alpha} }}"),
            Self::Custom { label, inverse, .. } => write!(
                f,
                "Custom {{ label: {label:?}, closed_form_inverse: {} }}",
                inverse.is_some()
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhiSpec {
    form: PhiForm,
    kappa: f64,
    inf_phi: f64,
    sup_phi: f64,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

impl PhiSpec {
    pub fn linear(alpha: f64) -> Result<Self> {
        check_positive("alpha", alpha)?;
        Ok(Self {
            form: PhiForm::Linear { alpha },
            kappa: f64::INFINITY,
            inf_phi: 0.0,
            sup_phi: f64::INFINITY,
        })
    }

    pub fn power(scale: f64, exponent: f64) -> Result<Self> {
        check_positive("scale", scale)?;
        if !(exponent >= 1.0 && exponent.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "power potential needs exponent >= 1 for convexity, got {exponent}"
            )));
        }
        Ok(Self {
            form: PhiForm::Power { scale, exponent },
            kappa: f64::INFINITY,
            inf_phi: 0.0,
            sup_phi: f64::INFINITY,
        })
    }

    pub fn quadratic() -> Self {
        Self::power(1.0, 2.0).expect("valid constants")
    }

    pub fn exp_minus_one(alpha: f64) -> Result<Self> {
        check_positive("alpha", alpha)?;
        Ok(Self {
            form: PhiForm::ExpMinusOne { alpha },
            kappa: f64::INFINITY,
            inf_phi: 0.0,
            sup_phi: f64::INFINITY,
        })
    }

    /// A caller-supplied potential. `inf_phi` and `sup_phi` are its limits at
    /// 0 and at kappa; they are trusted, not verified.
    pub fn custom(
        label: impl Into<String>,
        eval: ScalarFn,
        inverse: Option<ScalarFn>,
        kappa: f64,
        inf_phi: f64,
        sup_phi: f64,
    ) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
        }
        if !(inf_phi < sup_phi) || inf_phi.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "need inf_phi < sup_phi, got {inf_phi} and {sup_phi}"
            )));
        }
        if kappa.is_infinite() && sup_phi.is_finite() {
            return Err(Error::InvalidParameter(
                "a strictly increasing convex potential on (0, inf) is unbounded".into(),
            ));
        }
        Ok(Self {
            form: PhiForm::Custom {
                label: label.into(),
                eval,
                inverse,
            },
            kappa,
            inf_phi,
            sup_phi,
        })
    }

    /// Restricts a built-in potential to (0, kappa).
    pub fn with_kappa(mut self, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
        }
        if matches!(self.form, PhiForm::Custom { .. }) {
            return Err(Error::InvalidParameter(
                "custom potentials take kappa at construction".into(),
            ));
        }
        self.kappa = kappa;
        self.sup_phi = if kappa.is_finite() {
            self.eval(kappa)
        } else {
            f64::INFINITY
        };
        Ok(self)
    }

    pub fn form(&self) -> &PhiForm {
        &self.form
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn inf_phi(&self) -> f64 {
        self.inf_phi
    }

    pub fn sup_phi(&self) -> f64 {
        self.sup_phi
    }

    /// phi(r); callers keep r inside (0, kappa).
    pub fn eval(&self, r: f64) -> f64 {
        match &self.form {
            PhiForm::Linear { alpha } => alpha * r,
            PhiForm::Power { scale, exponent } => scale * r.powf(*exponent),
            PhiForm::ExpMinusOne { alpha } => (alpha * r).exp_m1(),
            PhiForm::Custom { eval, .. } => eval(r),
        }
    }

    fn closed_form_inverse(&self, s: f64) -> Option<f64> {
        match &self.form {
            PhiForm::Linear { alpha } => Some(s / alpha),
            PhiForm::Power { scale, exponent } => Some((s / scale).powf(1.0 / exponent)),
            PhiForm::ExpMinusOne { alpha } => Some(s.ln_1p() / alpha),
            PhiForm::Custom { inverse, .. } => inverse.as_ref().map(|f| f(s)),
        }
    }

    fn check_image(&self, s: f64) -> Result<()> {
        if s > self.inf_phi && s < self.sup_phi {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "phi inverse needs s in ({}, {}), got {s}",
                self.inf_phi, self.sup_phi
            )))
        }
    }

    /// phi^{-1}(s) for s in (inf phi, sup phi), using the closed form if the
    /// potential has one.
    pub fn inverse(&self, s: f64) -> Result<f64> {
        self.check_image(s)?;
        match self.closed_form_inverse(s) {
            Some(r) => Ok(r.min(self.kappa)),
            None => self.bisect(s),
        }
    }

    /// phi^{-1}(s) by bisection only, ignoring any closed form.
    pub fn inverse_bisection(&self, s: f64) -> Result<f64> {
        self.check_image(s)?;
        self.bisect(s)
    }

    /// The inverse extended to (inf phi, inf): saturates at kappa once s
    /// reaches sup phi.
    pub fn inverse_extended(&self, s: f64) -> Result<f64> {
        if !(s > self.inf_phi) {
            return Err(Error::Domain(format!(
                "extended phi inverse needs s > {}, got {s}",
                self.inf_phi
            )));
        }
        if s >= self.sup_phi {
            if self.kappa.is_finite() {
                return Ok(self.kappa);
            }
            return Err(Error::Domain(format!("s = {s} is not finite")));
        }
        self.inverse(s)
    }

    fn bisect(&self, s: f64) -> Result<f64> {
        let mut lo = 0.0_f64;
        let mut hi = if self.kappa.is_finite() {
            self.kappa
        } else {
            let mut hi = 1.0_f64;
            while self.eval(hi) < s {
                lo = hi;
                hi *= 2.0;
                if !hi.is_finite() {
                    return Err(Error::NonFinite(format!("no bracket for phi inverse at {s}")));
                }
            }
            hi
        };
        for _ in 0..4096 {
            let mid = if lo > 0.0 && hi / lo > 4.0 {
                (lo * hi).sqrt()
            } else {
                0.5 * (lo + hi)
            };
            if mid <= lo || mid >= hi {
                break;
            }
            let v = self.eval(mid);
            if v.is_nan() {
                return Err(Error::NonFinite(format!("phi({mid})")));
            }
            if v < s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(if lo == 0.0 { hi } else { 0.5 * (lo + hi) })
    }

    /// (scale, exponent) if phi(u) = scale * u^exponent on (0, inf). Under
    /// such a potential the variable phi(U) of the stationary radial law is
    /// Gamma distributed.
    pub fn power_law(&self) -> Option<(f64, f64)> {
        if self.kappa.is_finite() {
            return None;
        }
        match self.form {
            PhiForm::Linear { alpha } => Some((alpha, 1.0)),
            PhiForm::Power { scale, exponent } => Some((scale, exponent)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Plain bisection on an increasing function, used as an oracle.
    fn oracle_inverse(f: impl Fn(f64) -> f64, s: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < s {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(PhiSpec::linear(1.0).unwrap().inverse(2.0).unwrap(), 2.0);
        let sq = PhiSpec::quadratic();
        let oracle = oracle_inverse(|r| r * r, 4.0, 0.0, 10.0);
        assert_relative_eq!(oracle, 2.0, max_relative = 1e-12);
        assert_relative_eq!(sq.inverse(4.0).unwrap(), oracle, max_relative = 1e-12);
        assert_relative_eq!(sq.inverse_bisection(4.0).unwrap(), oracle, max_relative = 1e-12);
        let e = PhiSpec::exp_minus_one(1.0).unwrap();
        let s = std::f64::consts::E - 1.0;
        let oracle = oracle_inverse(|r: f64| r.exp() - 1.0, s, 0.0, 10.0);
        assert_relative_eq!(oracle, 1.0, max_relative = 1e-12);
        assert_relative_eq!(e.inverse(s).unwrap(), oracle, max_relative = 1e-12);
        assert_relative_eq!(e.inverse_bisection(s).unwrap(), oracle, max_relative = 1e-12);
    }

    #[test]
    fn inverse_domain_errors() {
        let phi = PhiSpec::linear(1.0).unwrap().with_kappa(1.0).unwrap();
        assert!(matches!(phi.inverse(2.0), Err(Error::Domain(_))));
        assert!(matches!(phi.inverse(0.0), Err(Error::Domain(_))));
        assert!(matches!(phi.inverse_extended(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn extended_inverse_examples() {
        let phi = PhiSpec::linear(1.0).unwrap().with_kappa(1.0).unwrap();
        assert_eq!(phi.inverse_extended(2.0).unwrap(), 1.0);
        assert_eq!(phi.inverse_extended(0.5).unwrap(), 0.5);
        let phi = PhiSpec::linear(2.0).unwrap();
        assert_relative_eq!(phi.inverse_extended(3.0).unwrap(), 1.5);
    }

    #[test]
    fn custom_without_closed_form_uses_bisection() {
        let phi = PhiSpec::custom(
            "cubic",
            Arc::new(|r: f64| r.powi(3) + r),
            None,
            f64::INFINITY,
            0.0,
            f64::INFINITY,
        )
        .unwrap();
        let r = phi.inverse(10.0).unwrap();
        assert!((phi.eval(r) - 10.0).abs() <= 1e-10 * 10.0);
        assert_relative_eq!(r, 2.0, max_relative = 1e-12);
    }

    fn phi_strategy() -> impl Strategy<Value = PhiSpec> {
        let kappa = prop_oneof![Just(f64::INFINITY), 0.2f64..20.0];
        (0usize..3, 0.1f64..5.0, kappa).prop_map(|(kind, a, kappa)| {
            let phi = match kind {
                0 => PhiSpec::linear(a).unwrap(),
                1 => PhiSpec::power(a, 2.0).unwrap(),
                _ => PhiSpec::exp_minus_one(a).unwrap(),
            };
            phi.with_kappa(kappa).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn increasing_and_convex(phi in phi_strategy(), a in 0.0f64..1.0, b in 0.0f64..1.0, lam in 0.01f64..0.99) {
            let top = if phi.kappa().is_finite() { phi.kappa() } else { 10.0 };
            let (r1, r2) = (a.min(b) * top, a.max(b) * top);
            prop_assume!(r1 > 1e-6 && r2 - r1 > 1e-6);
            prop_assert!(phi.eval(r1) < phi.eval(r2));
            let mid = lam * r1 + (1.0 - lam) * r2;
            let chord = lam * phi.eval(r1) + (1.0 - lam) * phi.eval(r2);
            prop_assert!(phi.eval(mid) <= chord + 1e-9 * (1.0 + chord.abs()));
        }

        #[test]
        fn inverse_round_trip(phi in phi_strategy(), a in 1e-3f64..0.999) {
            let top = if phi.kappa().is_finite() { phi.kappa() } else { 30.0 };
            let r = a * top;
            let s = phi.eval(r);
            prop_assume!(s > phi.inf_phi() && s < phi.sup_phi());
            let back = phi.inverse(s).unwrap();
            prop_assert!((back - r).abs() <= 1e-10 * r, "{} vs {}", back, r);
            let back = phi.inverse_bisection(s).unwrap();
            prop_assert!((back - r).abs() <= 1e-10 * r, "{} vs {}", back, r);
        }

        #[test]
        fn non_expansion(phi in phi_strategy(), a in 1e-4f64..0.9999, b in 1e-4f64..0.9999, v in 0.0f64..20.0) {
            let top = if phi.kappa().is_finite() { phi.kappa() } else { 10.0 };
            let (r, rt) = (a * top, b * top);
            let lhs = (phi.inverse_extended(phi.eval(r) + v).unwrap()
                - phi.inverse_extended(phi.eval(rt) + v).unwrap()).abs();
            prop_assert!(lhs <= (r - rt).abs() + 1e-12, "{} > {}", lhs, (r - rt).abs());
        }

        #[test]
        fn extended_inverse_is_monotone(phi in phi_strategy(), s1 in 1e-6f64..50.0, s2 in 1e-6f64..50.0) {
            let (lo, hi) = (s1.min(s2), s1.max(s2));
            prop_assert!(phi.inverse_extended(lo).unwrap() <= phi.inverse_extended(hi).unwrap());
        }
    }
}
