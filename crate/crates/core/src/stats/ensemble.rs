use std::io::{self, Write};

use rayon::prelude::*;

use super::{KsResult, MeanEstimate, OrderFit};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sde::RngStream;

/// Maximum tolerated fraction of failed trajectories.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

/// Run `f` on streams `base.offset(0..n)` in parallel; results come back in
/// stream order regardless of scheduling.
pub fn par_paths<R, F>(n: usize, base: RngStream, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(RngStream) -> R + Sync + Send,
{
    (0..n as u64)
        .into_par_iter()
        .map(|k| f(base.offset(k)))
        .collect()
}

/// Per-time ensemble statistics over independent trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleReport<T> {
    pub times: Vec<T>,
    pub stats: Vec<MeanEstimate<T>>,
    pub requested: usize,
    /// `(stream_id, message)` for every trajectory that failed.
    pub failures: Vec<(u64, String)>,
    pub valid: bool,
    pub ks: Option<KsResult<T>>,
    pub fit: Option<OrderFit<T>>,
}

impl<T: Real> EnsembleReport<T> {
    pub fn n_used(&self) -> usize {
        self.requested - self.failures.len()
    }

    pub fn at(&self, k: usize) -> &MeanEstimate<T> {
        &self.stats[k]
    }

    pub fn last(&self) -> &MeanEstimate<T> {
        self.stats.last().expect("report has at least one time")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "# ensemble report: requested={} failures={} valid={}",
            self.requested,
            self.failures.len(),
            self.valid
        )?;
        writeln!(
            w,
            "# columns: t (time units), mean, variance (sample), std_error = sqrt(variance/n), n"
        )?;
        if let Some(ks) = &self.ks {
            writeln!(
                w,
                "# ks_statistic={} ks_critical_1pct={}",
                ks.statistic, ks.critical
            )?;
        }
        if let Some(fit) = &self.fit {
            writeln!(w, "# fitted_slope={} ci95={}", fit.slope, fit.slope_ci95)?;
        }
        writeln!(w, "t,mean,variance,std_error,n")?;
        for (t, s) in self.times.iter().zip(&self.stats) {
            writeln!(w, "{},{},{},{},{}", t, s.mean, s.variance, s.std_error, s.n)?;
        }
        Ok(())
    }
}

/// Run `n_paths` trajectories on streams `base.offset(0..n_paths)` and reduce
/// them to per-time statistics. Each trajectory returns one value per entry
/// of `times`. Failures are recorded; more than 1% marks the report invalid.
pub fn run_ensemble<T, F>(
    n_paths: usize,
    base: RngStream,
    times: Vec<T>,
    trajectory: F,
) -> EnsembleReport<T>
where
    T: Real,
    F: Fn(RngStream) -> Result<Vec<T>> + Sync + Send,
{
    let expected = times.len();
    let results = par_paths(n_paths, base, |s| {
        trajectory(s).and_then(|v| {
            if v.len() == expected {
                Ok(v)
            } else {
                Err(Error::Statistics(format!(
                    "trajectory returned {} values, expected {expected}",
                    v.len()
                )))
            }
        })
    });

    let mut failures = Vec::new();
    let mut columns: Vec<Vec<T>> = vec![Vec::with_capacity(n_paths); expected];
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => {
                for (col, x) in columns.iter_mut().zip(v) {
                    col.push(x);
                }
            }
            Err(e) => failures.push((base.offset(k as u64).stream_id, e.to_string())),
        }
    }
    let stats = columns
        .iter()
        .map(|c| MeanEstimate::from_samples(c))
        .collect();
    let valid = n_paths > 0 && (failures.len() as f64) <= MAX_FAILURE_FRACTION * n_paths as f64;
    EnsembleReport {
        times,
        stats,
        requested: n_paths,
        failures,
        valid,
        ks: None,
        fit: None,
    }
}

/// Outcome of a stochastic check under the one-retry policy.
#[derive(Clone, Debug, PartialEq)]
pub struct RetryOutcome<R> {
    pub passed: bool,
    /// True when the first attempt failed and a fresh seed was used.
    pub retried: bool,
    pub detail: R,
}

/// Run a seeded stochastic check; on failure run it once more with a fresh
/// seed. Two consecutive failures are reported as a failure.
pub fn with_one_retry<R, F>(seed: u64, check: F) -> RetryOutcome<R>
where
    F: Fn(u64) -> (bool, R),
{
    let (ok, detail) = check(seed);
    if ok {
        return RetryOutcome {
            passed: true,
            retried: false,
            detail,
        };
    }
    let fresh = seed ^ 0xD1B5_4A32_D192_ED03;
    let (ok, detail) = check(fresh);
    RetryOutcome {
        passed: ok,
        retried: true,
        detail,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{brownian_partial_sums, sample_noise, TimeGrid};

    #[test]
    fn constant_observable_has_zero_error() {
        let r = run_ensemble(50, RngStream::new(1, 0), vec![0.0, 1.0], |_| {
            Ok(vec![3.0, 3.0])
        });
        assert!(r.valid);
        assert_eq!(r.last().variance, 0.0);
        assert_eq!(r.last().std_error, 0.0);
    }

    #[test]
    fn brownian_endpoint_moments() {
        let g = TimeGrid::new(0.0, 1e-2, 100).unwrap();
        let r = run_ensemble(10_000, RngStream::new(2, 0), vec![1.0], |s| {
            Ok(vec![*brownian_partial_sums(&sample_noise(g, s))
                .last()
                .unwrap()])
        });
        assert!(r.last().within(0.0, 3.0));
        let std = MeanEstimate {
            mean: r.last().variance,
            variance: 2.0,
            std_error: (2.0f64 / 10_000.0).sqrt(),
            n: 10_000,
        };
        assert!(std.within(1.0, 3.0));
        let se = r.last().std_error;
        assert!((se - (r.last().variance / 10_000.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn failures_are_counted_and_flag_report() {
        let r = run_ensemble(100, RngStream::new(3, 0), vec![0.0], |s| {
            if s.stream_id < 2 {
                Err(Error::MeasureDied)
            } else {
                Ok(vec![1.0])
            }
        });
        assert_eq!(r.failures.len(), 2);
        assert_eq!(r.n_used(), 98);
        assert!(!r.valid);
        let ok = run_ensemble(100, RngStream::new(3, 0), vec![0.0], |s| {
            if s.stream_id == 0 {
                Err(Error::MeasureDied)
            } else {
                Ok(vec![1.0])
            }
        });
        assert!(ok.valid);
    }

    #[test]
    fn report_is_independent_of_scheduling() {
        let g = TimeGrid::new(0.0, 0.1, 10).unwrap();
        let f = |s| Ok(brownian_partial_sums(&sample_noise(g, s)));
        let times: Vec<f64> = g.times().collect();
        let a = run_ensemble(200, RngStream::new(4, 0), times.clone(), f);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let b = pool.install(|| run_ensemble(200, RngStream::new(4, 0), times, f));
        assert_eq!(a, b);
    }

    #[test]
    fn retry_runs_second_seed_only_on_failure() {
        let out = with_one_retry(1, |s| (s == 1, s));
        assert!(out.passed && !out.retried);
        let out = with_one_retry(1, |s| (s != 1, s));
        assert!(out.passed && out.retried);
        let out = with_one_retry(1, |_| (false, ()));
        assert!(!out.passed && out.retried);
    }

    #[test]
    fn csv_has_expected_columns() {
        let r = run_ensemble(3, RngStream::new(1, 0), vec![0.5], |_| Ok(vec![1.0]));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().any(|l| l == "t,mean,variance,std_error,n"));
    }
}
