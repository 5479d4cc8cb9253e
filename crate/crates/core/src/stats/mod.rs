//! Statistical toolkit for ensemble verification: moment estimators with
//! standard errors, Kolmogorov–Smirnov tests, martingale drift checks and
//! log-log convergence fits.

mod ensemble;

pub use ensemble::{
    par_paths, run_ensemble, with_one_retry, EnsembleReport, RetryOutcome, MAX_FAILURE_FRACTION,
};

use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Real};

/// Asymptotic Kolmogorov–Smirnov coefficient for the 1% level.
pub const KS_C_01: f64 = 1.628;

/// Minimum sample size for which the asymptotic KS critical value is used.
pub const KS_MIN_SAMPLES: usize = 100;

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanEstimate<T> {
    pub mean: T,
    /// Sample variance of the underlying draws.
    pub variance: T,
    pub std_error: T,
    pub n: usize,
}

impl<T: Real> MeanEstimate<T> {
    pub fn from_samples(xs: &[T]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: T::nan(),
                variance: T::nan(),
                std_error: T::nan(),
                n,
            };
        }
        let nf = T::of_usize(n);
        let mean = compensated_sum(xs.iter().copied()) / nf;
        let variance = if n > 1 {
            compensated_sum(xs.iter().map(|&x| (x - mean) * (x - mean))) / T::of_usize(n - 1)
        } else {
            T::zero()
        };
        Self {
            mean,
            variance,
            std_error: (variance / nf).sqrt(),
            n,
        }
    }

    /// Estimate of the variance of `xs`, with the standard error of the
    /// sample variance taken from the fourth central moment.
    pub fn variance_of(xs: &[T]) -> Self {
        let n = xs.len();
        let base = Self::from_samples(xs);
        if n < 2 {
            return Self {
                mean: base.variance,
                ..base
            };
        }
        let nf = T::of_usize(n);
        let m = base.mean;
        let m4 = compensated_sum(xs.iter().map(|&x| (x - m).powi(4))) / nf;
        let s2 = base.variance;
        let spread = (m4 - s2 * s2).max(T::zero());
        Self {
            mean: s2,
            variance: spread,
            std_error: (spread / nf).sqrt(),
            n,
        }
    }

    /// `|mean - target| <= k * std_error`.
    pub fn within(&self, target: T, k: T) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }

    pub fn z_score(&self, target: T) -> T {
        (self.mean - target) / self.std_error
    }

    /// Difference of two independent estimates.
    pub fn minus(&self, other: &Self) -> Self {
        Self {
            mean: self.mean - other.mean,
            variance: self.variance + other.variance,
            std_error: (self.std_error * self.std_error + other.std_error * other.std_error).sqrt(),
            n: self.n.min(other.n),
        }
    }
}

/// Standard normal CDF.
pub fn normal_cdf<T: Real>(x: T) -> T {
    T::of(0.5 * erfc(-x.to_f64_lossy() / std::f64::consts::SQRT_2))
}

/// Result of a Kolmogorov–Smirnov test at the 1% level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult<T> {
    pub statistic: T,
    pub critical: T,
    pub n: usize,
    pub m: usize,
}

impl<T: Real> KsResult<T> {
    pub fn rejects(&self) -> bool {
        self.statistic > self.critical
    }
}

fn sorted<T: Real>(xs: &[T]) -> Result<Vec<T>> {
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::Statistics("sample contains NaN".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered"));
    Ok(v)
}

/// Sup-distance between the empirical CDFs of `a` and `b`.
pub fn ks_distance<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Statistics("empty sample".into()));
    }
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (n, m) = (a.len(), b.len());
    let (nf, mf) = (T::of_usize(n), T::of_usize(m));
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = T::zero();
    while i < n && j < m {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        let gap = (T::of_usize(i) / nf - T::of_usize(j) / mf).abs();
        d = d.max(gap);
    }
    Ok(d)
}

/// Two-sample KS statistic with the asymptotic 1% critical value
/// `c(0.01) sqrt((n + m) / (n m))`.
pub fn ks_two_sample<T: Real>(a: &[T], b: &[T]) -> Result<KsResult<T>> {
    let (n, m) = (a.len(), b.len());
    if n < KS_MIN_SAMPLES || m < KS_MIN_SAMPLES {
        return Err(Error::Statistics(format!(
            "KS needs at least {KS_MIN_SAMPLES} samples per side, got {n} and {m}"
        )));
    }
    let statistic = ks_distance(a, b)?;
    let (nf, mf) = (T::of_usize(n), T::of_usize(m));
    Ok(KsResult {
        statistic,
        critical: T::of(KS_C_01) * ((nf + mf) / (nf * mf)).sqrt(),
        n,
        m,
    })
}

/// One-sample KS test against a continuous reference CDF.
pub fn ks_one_sample<T: Real, F: Fn(T) -> T>(xs: &[T], cdf: F) -> Result<KsResult<T>> {
    let n = xs.len();
    if n < KS_MIN_SAMPLES {
        return Err(Error::Statistics(format!(
            "KS needs at least {KS_MIN_SAMPLES} samples, got {n}"
        )));
    }
    let xs = sorted(xs)?;
    let nf = T::of_usize(n);
    let statistic = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (T::of_usize(i + 1) / nf - f).max(f - T::of_usize(i) / nf)
        })
        .fold(T::zero(), T::max);
    Ok(KsResult {
        statistic,
        critical: T::of(KS_C_01) / nf.sqrt(),
        n,
        m: 0,
    })
}

/// Pearson correlation and its approximate standard error
/// `sqrt((1 - r²) / (n - 2))`.
pub fn pearson_correlation<T: Real>(a: &[T], b: &[T]) -> Result<(T, T)> {
    if a.len() != b.len() || a.len() < 3 {
        return Err(Error::Statistics(
            "correlation needs two equal samples of size >= 3".into(),
        ));
    }
    let ea = MeanEstimate::from_samples(a);
    let eb = MeanEstimate::from_samples(b);
    let n = a.len();
    let cov = compensated_sum(
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (x - ea.mean) * (y - eb.mean)),
    ) / T::of_usize(n - 1);
    let r = cov / (ea.variance * eb.variance).sqrt();
    let se = ((T::one() - r * r) / T::of_usize(n - 2)).sqrt();
    Ok((r, se))
}

/// Ensemble mean of `X_t - X_s` for every `(s, t)` index pair.
pub fn martingale_drift<T: Real>(
    paths: &[Vec<T>],
    pairs: &[(usize, usize)],
) -> Result<Vec<MeanEstimate<T>>> {
    pairs
        .iter()
        .map(|&(s, t)| {
            if s >= t {
                return Err(Error::Statistics(format!(
                    "drift pair needs s < t, got ({s}, {t})"
                )));
            }
            let incs = paths
                .iter()
                .map(|p| {
                    p.get(t)
                        .zip(p.get(s))
                        .map(|(&xt, &xs)| xt - xs)
                        .ok_or_else(|| Error::Statistics(format!("path shorter than index {t}")))
                })
                .collect::<Result<Vec<T>>>()?;
            Ok(MeanEstimate::from_samples(&incs))
        })
        .collect()
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderFit<T> {
    pub slope: T,
    pub intercept: T,
    /// Half-width of the 95% confidence interval on the slope.
    pub slope_ci95: T,
    pub n: usize,
}

pub fn convergence_order_fit<T: Real>(xs: &[T], ys: &[T]) -> Result<OrderFit<T>> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Statistics(
            "order fit needs at least 3 paired points".into(),
        ));
    }
    if xs
        .iter()
        .chain(ys)
        .any(|&v| !(v > T::zero()) || !v.is_finite())
    {
        return Err(Error::Statistics(
            "order fit needs positive finite inputs".into(),
        ));
    }
    let lx: Vec<T> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<T> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len();
    let nf = T::of_usize(n);
    let mx = compensated_sum(lx.iter().copied()) / nf;
    let my = compensated_sum(ly.iter().copied()) / nf;
    let sxx = compensated_sum(lx.iter().map(|&x| (x - mx) * (x - mx)));
    let sxy = compensated_sum(lx.iter().zip(&ly).map(|(&x, &y)| (x - mx) * (y - my)));
    if !(sxx > T::zero()) {
        return Err(Error::Statistics(
            "order fit needs distinct abscissae".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr = compensated_sum(
        lx.iter()
            .zip(&ly)
            .map(|(&x, &y)| (y - intercept - slope * x).powi(2)),
    );
    let dof = (n - 2) as f64;
    let se = (ssr / T::of(dof) / sxx).sqrt();
    let tq = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Statistics(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(OrderFit {
        slope,
        intercept,
        slope_ci95: T::of(tq) * se,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{standard_normal, RngStream};
    use proptest::prelude::*;

    fn normals(seed: u64, n: usize, shift: f64) -> Vec<f64> {
        let mut r = RngStream::new(seed, 0).rng();
        (0..n)
            .map(|_| standard_normal::<f64, _>(&mut r) + shift)
            .collect()
    }

    #[test]
    fn constant_sample_has_zero_spread() {
        let e = MeanEstimate::from_samples(&[2.5; 50]);
        assert_eq!((e.mean, e.variance, e.std_error), (2.5, 0.0, 0.0));
    }

    #[test]
    fn ks_identical_samples_is_zero() {
        let a = normals(1, 500, 0.0);
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn ks_requires_hundred_samples() {
        assert!(ks_two_sample(&[0.0; 99], &[0.0; 200]).is_err());
    }

    #[test]
    fn ks_level_is_respected() {
        // Null hypothesis true: rejection rate should sit near 1%.
        let rejections = (0..1_000u64)
            .filter(|&k| {
                let a = normals(2 * k + 10, 10_000, 0.0);
                let b = normals(2 * k + 11, 10_000, 0.0);
                ks_two_sample(&a, &b).unwrap().rejects()
            })
            .count();
        // 1% of 1000 with a generous binomial margin.
        assert!(rejections <= 20, "rejections = {rejections}");
    }

    #[test]
    fn ks_detects_unit_shift() {
        let a = normals(3, 10_000, 0.0);
        let b = normals(4, 10_000, 1.0);
        let r = ks_two_sample(&a, &b).unwrap();
        assert!(r.rejects());
        // Population distance is Phi(1/2) - Phi(-1/2) = 0.3829.
        assert!((r.statistic - 0.3829).abs() < 0.03, "{r:?}");
    }

    #[test]
    fn order_fit_recovers_exact_power_law() {
        let xs = [1e-1, 1e-2, 1e-3, 1e-4];
        let ys: Vec<f64> = xs.iter().map(|x| 3.7 * x).collect();
        let fit = convergence_order_fit(&xs, &ys).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-6);
        assert!(fit.slope_ci95 < 1e-6);
        assert!(convergence_order_fit(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(convergence_order_fit(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0]).is_err());
    }

    #[test]
    fn drift_of_constant_series_is_zero() {
        let paths = vec![vec![1.0, 1.0, 1.0]; 10];
        let d = martingale_drift(&paths, &[(0, 2)]).unwrap();
        assert_eq!(d[0].mean, 0.0);
        assert!(martingale_drift(&paths, &[(2, 1)]).is_err());
    }

    #[test]
    fn variance_estimate_of_normals() {
        let xs = normals(9, 20_000, 0.0);
        let v = MeanEstimate::variance_of(&xs);
        assert!(v.within(1.0, 3.0), "{v:?}");
        // Gaussian: SE of the sample variance is about sqrt(2/n).
        assert!((v.std_error - (2.0f64 / 20_000.0).sqrt()).abs() < 2e-3);
    }

    proptest! {
        #[test]
        fn mean_is_order_independent(mut xs in proptest::collection::vec(-1e6f64..1e6, 2..400), seed in 0u64..1000) {
            let before = MeanEstimate::from_samples(&xs);
            // deterministic shuffle
            let mut r = RngStream::new(seed, 0).rng();
            use rand::seq::SliceRandom;
            xs.shuffle(&mut r);
            let after = MeanEstimate::from_samples(&xs);
            prop_assert!((before.mean - after.mean).abs() <= 1e-10 * (1.0 + before.mean.abs()));
            prop_assert!((before.variance - after.variance).abs() <= 1e-10 * (1.0 + before.variance));
        }

        #[test]
        fn ks_distance_is_symmetric_and_bounded(a in proptest::collection::vec(-5f64..5.0, 1..60),
                                                b in proptest::collection::vec(-5f64..5.0, 1..60)) {
            let d1 = ks_distance(&a, &b).unwrap();
            let d2 = ks_distance(&b, &a).unwrap();
            prop_assert!((d1 - d2).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&d1));
        }
    }
}
