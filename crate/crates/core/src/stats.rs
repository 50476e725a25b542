//! Goodness-of-fit tests used to validate samplers.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

impl TestResult {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value > level
    }
}

/// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^{j-1} exp(-2 j^2 lambda^2).
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// p-value for a KS distance `d` at effective sample size `n`, with the
/// Stephens small-sample correction.
fn ks_p_value(d: f64, n: f64) -> f64 {
    let sn = n.sqrt();
    kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("NaN in sample".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> Result<TestResult> {
    if xs.is_empty() {
        return Err(Error::InvalidParameter("empty sample".into()));
    }
    let v = sorted(xs)?;
    let n = v.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(TestResult {
        statistic: d,
        p_value: ks_p_value(d, n),
    })
}

pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<TestResult> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::InvalidParameter("empty sample".into()));
    }
    let (a, b) = (sorted(xs)?, sorted(ys)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(TestResult {
        statistic: d,
        p_value: ks_p_value(d, na * nb / (na + nb)),
    })
}

/// Pearson chi-square goodness of fit of `observed` counts against cell
/// probabilities `expected` (renormalized to sum to one).
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<TestResult> {
    if observed.len() != expected.len() {
        return Err(Error::DimensionMismatch {
            expected: expected.len(),
            got: observed.len(),
        });
    }
    if observed.len() < 2 {
        return Err(Error::InvalidParameter("need at least two cells".into()));
    }
    let total_p: f64 = expected.iter().sum();
    if expected.iter().any(|p| !(*p > 0.0)) || !total_p.is_finite() {
        return Err(Error::InvalidParameter("cell probabilities must be positive".into()));
    }
    let n: u64 = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &p)| {
            let e = n as f64 * p / total_p;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).expect("positive dof");
    Ok(TestResult {
        statistic: stat,
        p_value: dist.sf(stat),
    })
}
