use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub const MIN_SERIES_LEN: usize = 100;
/// Above this theoretical gap the 2/(tau+1) heuristic is known to overshoot.
pub const HEURISTIC_WARNING_LEVEL: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IatEstimate {
    pub tau: f64,
    pub n_used: usize,
    pub truncation_lag: usize,
}

/// Empirical autocorrelations rho(0..n) via zero-padded FFT, using the
/// biased (1/n) autocovariance.
pub fn autocorrelation(series: &[f64]) -> Result<Vec<f64>> {
    let n = series.len();
    if n < 2 {
        return Err(Error::SeriesTooShort { len: n, min: 2 });
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("series value".into()));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re;
    if !(c0 > 0.0) || c0 <= 1e-300 * size as f64 {
        return Err(Error::DegenerateSeries);
    }
    Ok(buf[..n].iter().map(|c| c.re / c0).collect())
}

/// Integrated autocorrelation time 1 + 2 sum_{l=1}^{L} rho(l), with L from
/// the initial monotone positive sequence rule on the pair sums
/// rho(2j) + rho(2j+1).
pub fn iat_estimate(series: &[f64]) -> Result<IatEstimate> {
    let n = series.len();
    if n < MIN_SERIES_LEN {
        return Err(Error::SeriesTooShort {
            len: n,
            min: MIN_SERIES_LEN,
        });
    }
    let rho = autocorrelation(series)?;
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut last = 0;
    let mut j = 0;
    while 2 * j + 1 < n {
        let g = (rho[2 * j] + rho[2 * j + 1]).min(prev);
        if g <= 0.0 {
            break;
        }
        sum += g;
        prev = g;
        last = j;
        j += 1;
    }
    Ok(IatEstimate {
        tau: (2.0 * sum - 1.0).max(1.0),
        n_used: n,
        truncation_lag: 2 * last + 1,
    })
}

/// The gap heuristic 2 / (tau + 1).
pub fn empirical_gap(series: &[f64]) -> Result<f64> {
    Ok(2.0 / (iat_estimate(series)?.tau + 1.0))
}

pub fn heuristic_warning(theory_bound: f64) -> bool {
    theory_bound > HEURISTIC_WARNING_LEVEL
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn ar1(rho: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, 0);
        let mut x: f64 = rng.sample::<f64, _>(StandardNormal) / (1.0 - rho * rho).sqrt();
        (0..n)
            .map(|_| {
                x = rho * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect()
    }

    #[test]
    fn fft_matches_direct_autocorrelation() {
        let xs = ar1(0.5, 500, 1);
        let rho = autocorrelation(&xs).unwrap();
        let mean = xs.iter().sum::<f64>() / 500.0;
        let c = |l: usize| (0..500 - l).map(|i| (xs[i] - mean) * (xs[i + l] - mean)).sum::<f64>();
        for l in [0, 1, 2, 10, 499] {
            assert!((rho[l] - c(l) / c(0)).abs() < 1e-12);
        }
    }

    #[test]
    fn iid_series() {
        let xs = ar1(0.0, 100_000, 2);
        let est = iat_estimate(&xs).unwrap();
        assert!((est.tau - 1.0).abs() < 0.05, "{est:?}");
        assert!((empirical_gap(&xs).unwrap() - 1.0).abs() < 0.03);
    }

    #[test]
    fn ar1_series() {
        let xs = ar1(0.9, 1_000_000, 3);
        let est = iat_estimate(&xs).unwrap();
        assert!((est.tau - 19.0).abs() < 1.9, "{est:?}");
        assert!((empirical_gap(&xs).unwrap() - 0.1).abs() < 0.01);
        assert!(est.truncation_lag > 10);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(iat_estimate(&[1.0; 500]), Err(Error::DegenerateSeries));
        assert_eq!(
            iat_estimate(&[1.0; 50]),
            Err(Error::SeriesTooShort { len: 50, min: 100 })
        );
        assert!(heuristic_warning(0.5));
        assert!(!heuristic_warning(0.1));
    }
}
