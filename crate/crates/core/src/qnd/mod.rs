//! Pure QND monitoring of position.
//!
//! The monitored state is the diagonal measure `μ_t` together with the output
//! signal `dS = 2γ μ_t[x] dt + dW`. Two constructions of the same signal law
//! are provided: the observer integrates the measure SDE step by step, the
//! cheater samples the pointer value `x̄ ~ μ0` up front and sets
//! `S_t = 2γ x̄ t + B_t`. The closed-form posterior reweights `μ0` by
//! `exp(αS - α²t/2)` with `α = 2γx`.

pub mod chain;
pub mod kernel;

use std::io::{self, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::measure::GridMeasure;
use crate::scalar::{CompensatedSum, Real};
use crate::sde::{partial_sums, sample_noise_from, uniform01, NoisePath, RngStream, TimeGrid};
use crate::stats::MeanEstimate;

pub use chain::{discrete_chain_step, run_chain, DiscreteChainConfig, MAX_OUTCOMES};
pub use kernel::{hat_rho_residual, kernel_closed_form, KernelSnapshot};

/// `α = 2γx`: pointer value in the units of the statistical formulas.
#[inline]
pub fn alpha_of<T: Real>(gamma: T, x: T) -> T {
    T::of(2.0) * gamma * x
}

/// In `α` units the measure SDE reads as the position one with `γ = ½`.
pub fn alpha_units_gamma<T: Real>() -> T {
    T::of(0.5)
}

/// Discretization of the measure SDE.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum QndScheme {
    /// Log-weight increment `2γ(x-m)dW - 2γ²(x-m)²dt`; weights stay positive.
    #[default]
    Exponential,
    /// Plain Euler step `w ← w(1 + 2γ(x-m)dW)`; nodes driven negative are dropped.
    Linear,
}

impl QndScheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exponential" => Some(Self::Exponential),
            "linear" => Some(Self::Linear),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QndConfig<T> {
    pub gamma: T,
    pub mu0: GridMeasure<T>,
    pub grid: TimeGrid<T>,
    pub rng: RngStream,
}

impl<T: Real> QndConfig<T> {
    pub fn new(gamma: T, mu0: GridMeasure<T>, grid: TimeGrid<T>, rng: RngStream) -> Result<Self> {
        check_gamma(gamma)?;
        if !mu0.is_normalized() {
            return Err(Error::Unnormalized);
        }
        Ok(Self {
            gamma,
            mu0,
            grid,
            rng,
        })
    }

    pub fn cheater(&self) -> Result<(T, SignalPath<T>)> {
        simulate_cheater(&self.mu0, self.grid, self.gamma, self.rng)
    }

    pub fn observer(&self) -> Result<(Vec<GridMeasure<T>>, SignalPath<T>)> {
        simulate_observer(&self.mu0, self.grid, self.gamma, self.rng)
    }
}

pub(crate) fn check_gamma<T: Real>(gamma: T) -> Result<()> {
    if gamma.is_finite() && gamma > T::zero() {
        Ok(())
    } else {
        Err(Error::config(
            "gamma",
            format!("must be finite and positive, got {gamma}"),
        ))
    }
}

/// Which construction produced a signal path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SignalMode<T> {
    /// Pointer value sampled at time zero; `dw` holds the increments of `B`.
    Cheater { xbar: T },
    /// Measure SDE integrated forward; `dw` holds the innovation increments.
    Observer,
}

/// Output signal on a time grid: `s` has `n_steps + 1` values starting at 0,
/// `dw` the `n_steps` driving increments.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalPath<T> {
    pub grid: TimeGrid<T>,
    pub s: Vec<T>,
    pub dw: Vec<T>,
    pub mode: SignalMode<T>,
}

impl<T: Real> SignalPath<T> {
    /// Signal increments `dS_k`.
    pub fn ds(&self) -> Vec<T> {
        self.s.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn end_value(&self) -> T {
        self.s[self.s.len() - 1]
    }

    /// Driving noise as a [`NoisePath`].
    pub fn noise(&self) -> NoisePath<T> {
        NoisePath::new(self.grid, self.dw.clone()).expect("dw length matches grid")
    }
}

/// One step of the measure SDE with its bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct QndStep<T> {
    pub measure: GridMeasure<T>,
    pub ds: T,
    /// `1 - mass` before renormalization.
    pub mass_deficit: T,
}

/// Exponential-scheme step; returns the updated measure and `dS`.
pub fn qnd_step<T: Real>(
    mu: &GridMeasure<T>,
    dw: T,
    dt: T,
    gamma: T,
) -> Result<(GridMeasure<T>, T)> {
    let s = qnd_step_with(mu, dw, dt, gamma, QndScheme::Exponential)?;
    Ok((s.measure, s.ds))
}

pub fn qnd_step_with<T: Real>(
    mu: &GridMeasure<T>,
    dw: T,
    dt: T,
    gamma: T,
    scheme: QndScheme,
) -> Result<QndStep<T>> {
    let m = mu.mean()?;
    let two = T::of(2.0);
    let ds = two * gamma * m * dt + dw;
    let lw: Vec<T> = mu
        .log_weights()
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            if w == T::neg_infinity() {
                return w;
            }
            let c = two * gamma * (mu.x(i) - m);
            match scheme {
                QndScheme::Exponential => w + c * dw - c * c * dt / two,
                QndScheme::Linear => {
                    let f = T::one() + c * dw;
                    if f > T::zero() {
                        w + f.ln()
                    } else {
                        T::neg_infinity()
                    }
                }
            }
        })
        .collect();
    let mut measure = mu.with_log_weights(lw)?;
    let mass_deficit = measure.normalize_in_place()?;
    Ok(QndStep {
        measure,
        ds,
        mass_deficit,
    })
}

/// `μ0` reweighted by `exp(αS - α²t/2)`, `α = 2γx`.
pub fn posterior_closed_form<T: Real>(
    mu0: &GridMeasure<T>,
    s_t: T,
    t: T,
    gamma: T,
) -> Result<GridMeasure<T>> {
    if !(t >= T::zero()) {
        return Err(Error::config("t", format!("must be non-negative, got {t}")));
    }
    let half = T::of(0.5);
    let lw = mu0
        .log_weights()
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let a = alpha_of(gamma, mu0.x(i));
            w + a * s_t - a * a * t * half
        })
        .collect();
    mu0.with_log_weights(lw)?.normalized()
}

/// Draw a pointer value from `μ0`.
pub fn sample_from<T: Real, R: Rng + ?Sized>(mu0: &GridMeasure<T>, rng: &mut R) -> T {
    mu0.x(mu0.quantile_index(uniform01(rng)))
}

/// `S_t = 2γ x̄ t + B_t` with `x̄ ~ μ0`. The pointer value is drawn first,
/// then the Brownian increments, from the same stream.
pub fn simulate_cheater<T: Real>(
    mu0: &GridMeasure<T>,
    grid: TimeGrid<T>,
    gamma: T,
    rng: RngStream,
) -> Result<(T, SignalPath<T>)> {
    if !(gamma >= T::zero()) || !gamma.is_finite() {
        return Err(Error::config(
            "gamma",
            format!("must be finite and non-negative, got {gamma}"),
        ));
    }
    let mut r = rng.rng();
    let xbar = sample_from(mu0, &mut r);
    let noise = sample_noise_from(grid, &mut r);
    Ok((xbar, cheater_path(xbar, &noise, gamma)))
}

/// Cheater-mode signal for a given pointer value and Brownian path.
pub fn cheater_path<T: Real>(xbar: T, noise: &NoisePath<T>, gamma: T) -> SignalPath<T> {
    let grid = *noise.grid();
    let b = partial_sums(noise.increments());
    let drift = alpha_of(gamma, xbar);
    let s = b
        .iter()
        .enumerate()
        .map(|(k, &bk)| drift * grid.elapsed(k) + bk)
        .collect();
    SignalPath {
        grid,
        s,
        dw: noise.increments().to_vec(),
        mode: SignalMode::Cheater { xbar },
    }
}

/// Observer-mode run keeping every intermediate measure.
pub fn simulate_observer<T: Real>(
    mu0: &GridMeasure<T>,
    grid: TimeGrid<T>,
    gamma: T,
    rng: RngStream,
) -> Result<(Vec<GridMeasure<T>>, SignalPath<T>)> {
    let noise = sample_noise_from(grid, &mut rng.rng());
    let mut measures = Vec::with_capacity(grid.n_steps() + 1);
    let (_, path) = observe(mu0, &noise, gamma, QndScheme::Exponential, |_, mu, _| {
        measures.push(mu.clone())
    })?;
    Ok((measures, path))
}

/// Integrate the measure SDE along the innovation increments in `noise`,
/// handing `(k, μ_{t_k}, S_{t_k})` to `visit`. Returns the final measure and
/// the observer-mode signal path.
pub fn observe<T, F>(
    mu0: &GridMeasure<T>,
    noise: &NoisePath<T>,
    gamma: T,
    scheme: QndScheme,
    mut visit: F,
) -> Result<(GridMeasure<T>, SignalPath<T>)>
where
    T: Real,
    F: FnMut(usize, &GridMeasure<T>, T),
{
    check_gamma(gamma)?;
    let grid = *noise.grid();
    let mut mu = mu0.clone();
    let mut s = Vec::with_capacity(noise.len() + 1);
    let mut acc = T::zero();
    s.push(acc);
    visit(0, &mu, acc);
    for (k, &dw) in noise.increments().iter().enumerate() {
        let step = qnd_step_with(&mu, dw, grid.dt(), gamma, scheme).map_err(|e| at_step(k, e))?;
        mu = step.measure;
        acc = acc + step.ds;
        s.push(acc);
        visit(k + 1, &mu, acc);
    }
    let path = SignalPath {
        grid,
        s,
        dw: noise.increments().to_vec(),
        mode: SignalMode::Observer,
    };
    Ok((mu, path))
}

fn at_step(step: usize, e: Error) -> Error {
    match e {
        Error::MeasureDied => Error::Integration {
            step,
            reason: "all mass lost to truncation".into(),
        },
        other => other,
    }
}

/// Standard deviation of `μ_t`.
pub fn collapse_width<T: Real>(mu: &GridMeasure<T>) -> Result<T> {
    Ok(mu.variance()?.max(T::zero()).sqrt())
}

/// `W_{t_k} = S_{t_k} - Σ_{j<k} E[A | H_{t_j}] dt` with the posterior mean of
/// `A = 2γX` taken from the closed form.
pub fn innovation_path<T: Real>(
    path: &SignalPath<T>,
    mu0: &GridMeasure<T>,
    gamma: T,
) -> Result<Vec<T>> {
    let grid = path.grid;
    let mut w = Vec::with_capacity(path.s.len());
    let mut drift = CompensatedSum::new();
    for (k, &s) in path.s.iter().enumerate() {
        w.push(s - drift.value());
        if k < grid.n_steps() {
            let post = posterior_closed_form(mu0, s, grid.elapsed(k), gamma)?;
            drift.add(alpha_of(gamma, post.mean()?) * grid.dt());
        }
    }
    Ok(w)
}

/// Posterior variance of `A` computed two ways.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionalVariance<T> {
    /// `E[A²|H] - E[A|H]²`.
    pub direct: T,
    /// `∫∫ (α-β)²/2 dμ_t(α) dμ_t(β)`.
    pub pairwise: T,
}

impl<T: Real> ConditionalVariance<T> {
    pub fn value(&self) -> T {
        self.direct
    }

    pub fn discrepancy(&self) -> T {
        (self.direct - self.pairwise).abs()
    }
}

/// Conditional variance of `A` given `S_t`; `μ0` is in `α` units.
pub fn conditional_variance<T: Real>(
    mu0: &GridMeasure<T>,
    s_t: T,
    t: T,
) -> Result<ConditionalVariance<T>> {
    let post = posterior_closed_form(mu0, s_t, t, alpha_units_gamma())?;
    let m1 = post.mean()?;
    let m2 = post.moment_fn(|a| a * a)?;
    let masses = post.masses();
    let support: Vec<(T, T)> = masses
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > T::zero())
        .map(|(i, &m)| (post.x(i), m))
        .collect();
    let mut pair = CompensatedSum::new();
    for &(a, ma) in &support {
        for &(b, mb) in &support {
            pair.add(ma * mb * (a - b) * (a - b));
        }
    }
    Ok(ConditionalVariance {
        direct: m2 - m1 * m1,
        pairwise: pair.value() / T::of(2.0),
    })
}

/// Monte-Carlo estimates of both sides of
/// `E[f(A, S_{t_1..t_k})] = E[f(A, B_{t_1..t_k}) exp(A B_t - A²t/2)]`, with `t`
/// the last time. Both sides use the same draws of `(A, B)`; `μ0` is in `α`
/// units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GirsanovEstimate<T> {
    pub lhs: MeanEstimate<T>,
    pub rhs: MeanEstimate<T>,
    /// Paired difference `lhs - rhs` with its own standard error.
    pub difference: MeanEstimate<T>,
}

pub fn girsanov_check<T, F>(
    f: F,
    mu0: &GridMeasure<T>,
    times: &[T],
    n_samples: usize,
    rng: RngStream,
) -> Result<GirsanovEstimate<T>>
where
    T: Real,
    F: Fn(T, &[T]) -> T + Sync,
{
    if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) || !(times[0] > T::zero()) {
        return Err(Error::config(
            "times",
            "must be positive and strictly increasing",
        ));
    }
    if n_samples < 2 {
        return Err(Error::config("n_samples", "need at least 2 samples"));
    }
    let t_end = times[times.len() - 1];
    let half = T::of(0.5);
    let pairs: Vec<(T, T)> = crate::stats::par_paths(n_samples, rng, |stream| {
        let mut r = stream.rng();
        let a = sample_from(mu0, &mut r);
        let mut b = Vec::with_capacity(times.len());
        let mut prev = T::zero();
        let mut acc = T::zero();
        for &t in times {
            acc = acc + (t - prev).sqrt() * crate::sde::standard_normal::<T, _>(&mut r);
            b.push(acc);
            prev = t;
        }
        let s: Vec<T> = b.iter().zip(times).map(|(&bk, &t)| bk + a * t).collect();
        let weight = (a * acc - a * a * t_end * half).exp();
        (f(a, &s), f(a, &b) * weight)
    });
    let lhs: Vec<T> = pairs.iter().map(|p| p.0).collect();
    let rhs: Vec<T> = pairs.iter().map(|p| p.1).collect();
    let diff: Vec<T> = pairs.iter().map(|p| p.0 - p.1).collect();
    Ok(GirsanovEstimate {
        lhs: MeanEstimate::from_samples(&lhs),
        rhs: MeanEstimate::from_samples(&rhs),
        difference: MeanEstimate::from_samples(&diff),
    })
}

/// One row of the trajectory CSV.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRow<T> {
    pub t: T,
    pub s: T,
    pub w: T,
    pub post_mean: T,
    pub post_var: T,
}

/// Per-step signal, innovation and posterior moments (position units),
/// computed identically for either mode.
pub fn trajectory_rows<T: Real>(
    path: &SignalPath<T>,
    mu0: &GridMeasure<T>,
    gamma: T,
) -> Result<Vec<TrajectoryRow<T>>> {
    let w = innovation_path(path, mu0, gamma)?;
    path.s
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let t = path.grid.time(k);
            let post = posterior_closed_form(mu0, s, path.grid.elapsed(k), gamma)?;
            Ok(TrajectoryRow {
                t,
                s,
                w: w[k],
                post_mean: post.mean()?,
                post_var: post.variance()?,
            })
        })
        .collect()
}

pub fn write_trajectory_csv<T: Real, W: Write>(
    mut out: W,
    path: &SignalPath<T>,
    rows: &[TrajectoryRow<T>],
) -> io::Result<()> {
    if let SignalMode::Cheater { xbar } = path.mode {
        writeln!(out, "# xbar={xbar}")?;
    }
    writeln!(out, "t,S,W,post_mean,post_var")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.t, r.s, r.w, r.post_mean, r.post_var
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::sample_noise;
    use crate::stats::pearson_correlation;
    use proptest::prelude::*;

    fn pair() -> GridMeasure<f64> {
        GridMeasure::<f64>::symmetric_pair(1.0).unwrap()
    }

    #[test]
    fn point_mass_is_a_fixed_point() {
        let mu = GridMeasure::<f64>::point_mass(-1.0, 0.1, 21, 7).unwrap();
        let x0 = mu.x(7);
        let (next, ds) = qnd_step(&mu, 0.3, 1e-3, 2.0).unwrap();
        assert!((next.masses()[7] - 1.0).abs() < 1e-12);
        assert!((ds - (2.0 * 2.0 * x0 * 1e-3 + 0.3)).abs() < 1e-12);
    }

    #[test]
    fn positive_noise_favours_positive_atom() {
        let (next, _) = qnd_step(&pair(), 0.01, 1e-4, 0.5).unwrap();
        assert!(next.masses()[1] > 0.5);
    }

    #[test]
    fn closed_form_is_identity_at_time_zero() {
        let mu = GridMeasure::<f64>::gaussian(-3.0, 0.1, 61, 0.2, 0.5).unwrap();
        let post = posterior_closed_form(&mu, 0.0, 0.0, 1.3).unwrap();
        for (a, b) in mu.masses().iter().zip(post.masses()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn two_atom_posterior_mean_is_tanh() {
        for &(s, t) in &[(0.0, 1.0), (0.7, 0.3), (-2.5, 4.0), (12.0, 50.0)] {
            let post = posterior_closed_form(&pair(), s, t, 0.5).unwrap();
            let mean_a = alpha_of(0.5, post.mean().unwrap());
            assert!((mean_a - f64::tanh(s)).abs() < 1e-13, "S={s}");
        }
    }

    #[test]
    fn gaussian_prior_precision_adds() {
        let mu = GridMeasure::<f64>::gaussian(-8.0, 0.01, 1601, 0.0, 1.0).unwrap();
        let post = posterior_closed_form(&mu, 0.0, 1.0, 0.5).unwrap();
        assert!((post.variance().unwrap() - 0.5).abs() < 1e-6);
        assert!(post.mean().unwrap().abs() < 1e-12);
    }

    #[test]
    fn gaussian_collapse_width_matches_conjugacy() {
        let mu = GridMeasure::<f64>::gaussian(-6.0, 0.002, 6001, 0.0, 1.0).unwrap();
        for &(gamma, t) in &[(1.0, 1.0), (0.5, 3.0), (2.0, 0.25)] {
            let post = posterior_closed_form(&mu, 0.4, t, gamma).unwrap();
            let w = collapse_width(&post).unwrap();
            let expected: f64 = 1.0 / (1.0 + 4.0 * gamma * gamma * t);
            assert!((w * w - expected).abs() < 1e-6, "γ={gamma} t={t}");
        }
        assert_eq!(
            collapse_width(&GridMeasure::<f64>::point_mass(0.0, 1.0, 3, 1).unwrap()).unwrap(),
            0.0
        );
    }

    #[test]
    fn exponential_observer_matches_closed_form() {
        let grid = TimeGrid::<f64>::new(0.0, 1e-3, 1000).unwrap();
        let noise = sample_noise(grid, RngStream::new(11, 0));
        let mu0 = GridMeasure::<f64>::gaussian(-3.0, 0.05, 121, 0.0, 1.0).unwrap();
        let (end, path) = observe(&mu0, &noise, 0.8, QndScheme::Exponential, |_, _, _| ()).unwrap();
        let closed = posterior_closed_form(&mu0, path.end_value(), 1.0, 0.8).unwrap();
        let err = end
            .masses()
            .iter()
            .zip(closed.masses())
            .fold(0.0f64, |e, (a, b)| e.max((a - b).abs()));
        assert!(err < 1e-10, "err = {err}");
    }

    #[test]
    fn cheater_with_zero_gamma_is_brownian() {
        let grid = TimeGrid::<f64>::new(0.0, 0.1, 10).unwrap();
        let (_, path) = simulate_cheater(&pair(), grid, 0.0, RngStream::new(1, 2)).unwrap();
        let b = partial_sums(&path.dw);
        assert_eq!(path.s, b);
    }

    #[test]
    fn point_mass_cheater_minus_drift_has_unit_variance() {
        let mu0 = GridMeasure::<f64>::point_mass(0.0, 0.5, 5, 3).unwrap();
        let grid = TimeGrid::<f64>::new(0.0, 0.1, 10).unwrap();
        let samples: Vec<f64> = crate::stats::par_paths(10_000, RngStream::new(5, 0), |r| {
            let (x, p) = simulate_cheater(&mu0, grid, 1.5, r).unwrap();
            p.end_value() - 2.0 * 1.5 * x * 1.0
        });
        let v = MeanEstimate::variance_of(&samples);
        assert!(v.within(1.0, 3.0), "{v:?}");
    }

    #[test]
    fn long_time_sign_inference_never_errs() {
        let grid = TimeGrid::<f64>::new(0.0, 100.0, 1).unwrap();
        let wrong: usize = crate::stats::par_paths(10_000, RngStream::new(6, 0), |r| {
            let (x, p) = simulate_cheater(&pair(), grid, 0.5, r).unwrap();
            usize::from((p.end_value() / 100.0).signum() != x.signum())
        })
        .into_iter()
        .sum();
        assert_eq!(wrong, 0);
    }

    #[test]
    fn point_mass_innovation_equals_brownian_path() {
        let mu0 = GridMeasure::<f64>::point_mass(-1.0, 0.5, 5, 4).unwrap();
        let grid = TimeGrid::<f64>::new(0.0, 0.01, 100).unwrap();
        let (_, path) = simulate_cheater(&mu0, grid, 0.7, RngStream::new(2, 0)).unwrap();
        let w = innovation_path(&path, &mu0, 0.7).unwrap();
        let b = partial_sums(&path.dw);
        for (a, b) in w.iter().zip(b) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn innovation_has_brownian_moments() {
        let grid = TimeGrid::<f64>::new(0.0, 0.01, 100).unwrap();
        let runs: Vec<(f64, f64)> = crate::stats::par_paths(10_000, RngStream::new(9, 0), |r| {
            let (_, p) = simulate_cheater(&pair(), grid, 0.5, r).unwrap();
            let w = innovation_path(&p, &pair(), 0.5).unwrap();
            (w[50], w[100])
        });
        let end: Vec<f64> = runs.iter().map(|r| r.1).collect();
        let first: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let second: Vec<f64> = runs.iter().map(|r| r.1 - r.0).collect();
        assert!(MeanEstimate::from_samples(&end).within(0.0, 3.0));
        assert!(MeanEstimate::variance_of(&end).within(1.0, 3.0));
        let (rho, se) = pearson_correlation(&first, &second).unwrap();
        assert!(rho.abs() <= 3.0 * se, "rho = {rho}");
    }

    #[test]
    fn conditional_variance_edge_cases() {
        let cv = conditional_variance(&pair(), 0.0, 0.0).unwrap();
        assert!((cv.value() - 1.0).abs() < 1e-14);
        assert!(cv.discrepancy() < 1e-12);
        let dirac = GridMeasure::<f64>::point_mass(-1.0, 1.0, 3, 2).unwrap();
        for &(s, t) in &[(0.0, 0.0), (3.0, 2.0)] {
            let cv = conditional_variance(&dirac, s, t).unwrap();
            assert!(cv.value().abs() < 1e-14 && cv.pairwise == 0.0);
        }
    }

    #[test]
    fn girsanov_trivial_functional_is_one() {
        let est =
            girsanov_check(|_, _| 1.0, &pair(), &[1.0], 20_000, RngStream::new(3, 0)).unwrap();
        assert_eq!(est.lhs.mean, 1.0);
        assert!(est.rhs.within(1.0, 3.0), "{:?}", est.rhs);
    }

    #[test]
    fn girsanov_sign_indicator_is_half() {
        let f = |_: f64, s: &[f64]| if s[0] > 0.0 { 1.0 } else { 0.0 };
        let est = girsanov_check(f, &pair(), &[1.0], 20_000, RngStream::new(4, 0)).unwrap();
        assert!(
            est.lhs.within(0.5, 3.0) && est.rhs.within(0.5, 3.0),
            "{est:?}"
        );
    }

    #[test]
    fn trajectory_csv_has_header_and_xbar() {
        let grid = TimeGrid::<f64>::new(0.0, 0.1, 3).unwrap();
        let (_, path) = simulate_cheater(&pair(), grid, 0.5, RngStream::new(1, 1)).unwrap();
        let rows = trajectory_rows(&path, &pair(), 0.5).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &path, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# xbar="));
        assert_eq!(lines[1], "t,S,W,post_mean,post_var");
        assert_eq!(lines.len(), 2 + 4);
    }

    #[test]
    fn rejects_bad_gamma() {
        let grid = TimeGrid::<f64>::new(0.0, 0.1, 3).unwrap();
        assert!(QndConfig::new(0.0, pair(), grid, RngStream::new(0, 0)).is_err());
        assert!(QndConfig::new(f64::NAN, pair(), grid, RngStream::new(0, 0)).is_err());
    }

    proptest! {
        #[test]
        fn step_keeps_normalization(dw in -0.5f64..0.5, gamma in 0.1f64..5.0, mean in -1.0f64..1.0) {
            let mu = GridMeasure::<f64>::gaussian(-3.0, 0.1, 61, mean, 0.6).unwrap();
            for scheme in [QndScheme::Exponential, QndScheme::Linear] {
                let s = qnd_step_with(&mu, dw * 0.03, 1e-3, gamma, scheme).unwrap();
                let total: f64 = s.measure.masses().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-10);
            }
        }

        #[test]
        fn linear_step_preserves_mass_before_renormalization(dw in -0.01f64..0.01, mean in -1.0f64..1.0) {
            let mu = GridMeasure::<f64>::gaussian(-3.0, 0.1, 61, mean, 0.6).unwrap();
            let s = qnd_step_with(&mu, dw, 1e-4, 1.0, QndScheme::Linear).unwrap();
            prop_assert!(s.mass_deficit.abs() < 1e-12);
        }

        #[test]
        fn conditional_variance_formulas_agree(s in -5.0f64..5.0, t in 0.0f64..20.0) {
            let mu = GridMeasure::<f64>::gaussian(-3.0, 0.1, 61, 0.3, 1.0).unwrap();
            let cv = conditional_variance(&mu, s, t).unwrap();
            prop_assert!(cv.discrepancy() < 1e-10);
        }
    }
}
