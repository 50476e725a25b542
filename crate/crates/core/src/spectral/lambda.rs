use std::sync::Arc;

use crate::error::{Error, Result};
use crate::phi::PhiSpec;
use crate::spectral::level_set::LevelSetFn;
use crate::targets::Target;

pub const DEFAULT_GRID_SIZE: usize = 400;
const GRID_MIN_OFFSET: f64 = 1e-3;
const GRID_MAX_OFFSET: f64 = 1e3;
const MARGIN: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaVerdict {
    Member,
    NotMember,
    Inconclusive,
}

impl LambdaVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Member => "member",
            Self::NotMember => "not_member",
            Self::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaCheck {
    pub verdict: LambdaVerdict,
    /// Largest concavity violation relative to 1 + |h|.
    pub max_violation: f64,
}

/// Grid check of the concavity of h(s) = l(exp(-s))^{1/p} on
/// s > -log t_max, which characterizes membership in Lambda_p. Grid points
/// sit at geometrically spaced offsets in [1e-3, 1e3] from the left end.
pub fn lambda_k_check(ell: &LevelSetFn, p: f64, grid_size: usize) -> Result<LambdaCheck> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p must be positive, got {p}")));
    }
    if grid_size < 3 {
        return Err(Error::InvalidParameter("grid needs at least three points".into()));
    }
    let s0 = -ell.log_t_max;
    if !s0.is_finite() {
        return Err(Error::Domain(format!("support end log t_max = {} is not finite", ell.log_t_max)));
    }
    let ratio = (GRID_MAX_OFFSET / GRID_MIN_OFFSET).powf(1.0 / (grid_size - 1) as f64);
    let s: Vec<f64> = (0..grid_size)
        .map(|i| s0 + GRID_MIN_OFFSET * ratio.powi(i as i32))
        .collect();
    let mut h = Vec::with_capacity(grid_size);
    for &si in &s {
        let v = ell.eval_log(-si);
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("l(exp(-{si})) = {v} leaves the support")));
        }
        h.push(v.powf(1.0 / p));
    }
    let mut verdict = LambdaVerdict::Member;
    let mut max_violation = f64::NEG_INFINITY;
    for i in 1..grid_size - 1 {
        let w = (s[i] - s[i - 1]) / (s[i + 1] - s[i - 1]);
        let chord = (1.0 - w) * h[i - 1] + w * h[i + 1];
        let scale = 1.0 + h[i].abs();
        let violation = chord - h[i];
        let tol = 1e-9 * scale;
        max_violation = max_violation.max(violation / scale);
        if violation > MARGIN * tol {
            verdict = LambdaVerdict::NotMember;
        } else if violation > tol && verdict == LambdaVerdict::Member {
            verdict = LambdaVerdict::Inconclusive;
        }
    }
    Ok(LambdaCheck { verdict, max_violation })
}

/// Bisection for the smallest p with l in Lambda_p, assuming membership at
/// `hi` and non-membership at `lo`. Inconclusive grid checks count as
/// non-membership.
pub fn smallest_admissible_p(ell: &LevelSetFn, lo: f64, hi: f64, tol: f64, grid_size: usize) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("need lo < hi, got {lo} and {hi}")));
    }
    if lambda_k_check(ell, hi, grid_size)?.verdict != LambdaVerdict::Member {
        return Err(Error::NotInLambdaK { k: hi });
    }
    if lambda_k_check(ell, lo, grid_size)?.verdict == LambdaVerdict::Member {
        return Ok(lo);
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if lambda_k_check(ell, mid, grid_size)?.verdict == LambdaVerdict::Member {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Solves l(exp(-s)) = y for s by bisection; l(exp(-s)) increases in s.
fn solve_level(ell: &LevelSetFn, y: f64) -> f64 {
    let s0 = -ell.log_t_max;
    if y <= 0.0 {
        return s0;
    }
    if y >= ell.sup_ell {
        return f64::INFINITY;
    }
    let g = |s: f64| ell.eval_log(-s);
    let mut step = 1.0;
    let mut lo = s0;
    let mut hi = s0 + step;
    while g(hi) < y {
        lo = hi;
        step *= 2.0;
        hi = s0 + step;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The one-dimensional target |x|^{k-1} exp(-phi(|x|)) on (-kappa, kappa)
/// whose level-set function under the k-polar factorization equals `ell`:
/// kappa = ((k/2) sup l)^{1/k} and phi(r) = -log l^{-1}((2/k) r^k).
pub fn construct_matching_dk(ell: &LevelSetFn, k: f64) -> Result<Target> {
    if lambda_k_check(ell, k, DEFAULT_GRID_SIZE)?.verdict != LambdaVerdict::Member {
        return Err(Error::NotInLambdaK { k });
    }
    let kappa = (k / 2.0 * ell.sup_ell).powf(1.0 / k);
    let inf_phi = -ell.log_t_max;
    let (e1, e2) = (ell.clone(), ell.clone());
    let eval = Arc::new(move |r: f64| solve_level(&e1, 2.0 / k * r.powf(k)));
    let inverse = Arc::new(move |s: f64| (k / 2.0 * e2.eval_log(-s)).powf(1.0 / k));
    let phi = PhiSpec::custom("matched", eval, Some(inverse), kappa, inf_phi, f64::INFINITY)?;
    Target::dk(1, k, phi)
}

/// Largest relative deviation between `ell` and the level-set function
/// (2/k) phi^{-1}(-log t)^k of a matched one-dimensional target, evaluated on
/// `n_points` thresholds with phi inverted by bisection.
pub fn verify_matching(ell: &LevelSetFn, target: &Target, n_points: usize) -> Result<f64> {
    let Some((phi, _)) = target.radial_potential() else {
        return Err(Error::UnsupportedFamily(target.name().into()));
    };
    if target.d() != 1 || n_points < 2 {
        return Err(Error::InvalidParameter("need a one-dimensional target and two points".into()));
    }
    let k = target.k();
    let ratio = (1e4f64).powf(1.0 / (n_points - 1) as f64);
    let mut worst = 0.0_f64;
    for i in 0..n_points {
        let s = 1e-2 * ratio.powi(i as i32);
        let lt = ell.log_t_max - s;
        let want = ell.eval_log(lt);
        let r = phi.inverse_bisection(-lt)?;
        let got = 2.0 / k * r.powf(k);
        worst = worst.max(((got - want) / want).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::level_set::{level_set_closed_form, Provenance};
    use crate::targets::Chi;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn power_ell(c: f64, a: f64) -> LevelSetFn {
        LevelSetFn::new(
            Arc::new(move |lt: f64| c * (-lt).powf(a)),
            0.0,
            f64::INFINITY,
            Provenance::ClosedForm("power".into()),
        )
    }

    #[test]
    fn power_law_boundary() {
        let ell = power_ell(2.3, 1.5);
        for p in [1.5, 2.0, 3.0] {
            assert_eq!(lambda_k_check(&ell, p, 200).unwrap().verdict, LambdaVerdict::Member, "p={p}");
        }
        for p in [1.2, 1.4, 0.9 * 1.5] {
            assert_eq!(lambda_k_check(&ell, p, 200).unwrap().verdict, LambdaVerdict::NotMember, "p={p}");
        }
        let b = smallest_admissible_p(&ell, 0.5, 4.0, 1e-3, 200).unwrap();
        assert!((b - 1.5).abs() < 2e-3, "{b}");
    }

    #[test]
    fn membership_is_monotone_in_p() {
        let phi = crate::phi::PhiSpec::exp_minus_one(0.5).unwrap();
        let ell = level_set_closed_form(&Target::rot_inv(3, 2.0, 1.0, phi).unwrap()).unwrap();
        let mut seen = false;
        for i in 1..60 {
            let p = 0.1 * i as f64;
            let member = lambda_k_check(&ell, p, 200).unwrap().verdict == LambdaVerdict::Member;
            assert!(!(seen && !member), "membership lost at p={p}");
            seen |= member;
        }
        assert!(seen);
        assert_eq!(lambda_k_check(&ell, 1.9, 200).unwrap().verdict, LambdaVerdict::NotMember);
        assert_eq!(lambda_k_check(&ell, 2.0, 200).unwrap().verdict, LambdaVerdict::Member);
    }

    #[test]
    fn neg_log_round_trip() {
        let ell = LevelSetFn::neg_log();
        let t = construct_matching_dk(&ell, 1.0).unwrap();
        let crate::targets::Family::Dk { phi } = t.family() else { panic!() };
        assert_eq!(phi.kappa(), f64::INFINITY);
        // phi(r) = 2r
        for r in [0.1, 1.0, 7.5] {
            assert_relative_eq!(phi.eval(r), 2.0 * r, max_relative = 1e-12);
        }
        assert!(verify_matching(&ell, &t, 50).unwrap() <= 1e-8);
    }

    #[test]
    fn finite_sup_gives_finite_kappa() {
        // l(t) = 3 (1 - t) on (0, 1): sup l = 3.
        let ell = LevelSetFn::new(
            Arc::new(|lt: f64| -3.0 * lt.exp_m1()),
            0.0,
            3.0,
            Provenance::ClosedForm("affine".into()),
        );
        let t = construct_matching_dk(&ell, 2.0).unwrap();
        let crate::targets::Family::Dk { phi } = t.family() else { panic!() };
        assert_relative_eq!(phi.kappa(), 3f64.sqrt(), max_relative = 1e-14);
        assert!(verify_matching(&ell, &t, 50).unwrap() <= 1e-8);
    }

    #[test]
    fn rot_asym_round_trip_and_rejection() {
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 9.0, 2.0]));
        let ra = Target::rot_asym(4, 2.0, 1.0, Chi::gaussian(sigma).unwrap(), None).unwrap();
        let ell = level_set_closed_form(&ra).unwrap();
        assert!(matches!(ell.provenance, Provenance::ClosedForm(_)));
        let t = construct_matching_dk(&ell, 2.0).unwrap();
        assert!(verify_matching(&ell, &t, 50).unwrap() <= 1e-8);
        assert_eq!(construct_matching_dk(&ell, 1.0).unwrap_err(), Error::NotInLambdaK { k: 1.0 });
    }

    #[test]
    fn grid_outside_support_is_an_error() {
        let ell = LevelSetFn::new(
            Arc::new(|lt: f64| if lt > -1.0 { 0.0 } else { -lt - 1.0 }),
            0.0,
            f64::INFINITY,
            Provenance::ClosedForm("shifted".into()),
        );
        assert!(matches!(lambda_k_check(&ell, 1.0, 50), Err(Error::Domain(_))));
    }
}
