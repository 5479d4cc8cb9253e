//! Probability measures on a truncated uniform 1-D grid.
//!
//! Weights are stored as logarithms of the density with respect to the
//! grid spacing: the mass of node `i` is `exp(log_weights[i]) * dx`. Posterior
//! reweightings of the form `exp(αS - α²t/2)` overflow double precision long
//! before the measure itself becomes degenerate, so every update happens in
//! the log domain and normalization is a log-sum-exp shift.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, CompensatedSum, Real};

/// Relative tolerance of the normalization invariant.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// Discretized probability measure on `x_i = x_min + i dx`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMeasure<T> {
    x_min: T,
    dx: T,
    log_weights: Vec<T>,
    normalized: bool,
}

/// Result of [`GridMeasure::renormalize`].
#[derive(Clone, Debug, PartialEq)]
pub struct Renormalized<T> {
    pub measure: GridMeasure<T>,
    /// `1 - mass` before the shift.
    pub mass_deficit: T,
}

impl<T: Real> GridMeasure<T> {
    /// Unnormalized measure from raw log-weights.
    pub fn from_log_weights(x_min: T, dx: T, log_weights: Vec<T>) -> Result<Self> {
        if !(dx > T::zero()) || !dx.is_finite() {
            return Err(Error::InvalidMeasure(format!(
                "dx must be positive, got {dx}"
            )));
        }
        if !x_min.is_finite() {
            return Err(Error::InvalidMeasure("x_min must be finite".into()));
        }
        if log_weights.len() < 2 {
            return Err(Error::InvalidMeasure("grid needs at least 2 points".into()));
        }
        if let Some(bad) = log_weights
            .iter()
            .find(|w| w.is_nan() || **w == T::infinity())
        {
            return Err(Error::InvalidMeasure(format!(
                "log-weight {bad} is not allowed"
            )));
        }
        Ok(Self {
            x_min,
            dx,
            log_weights,
            normalized: false,
        })
    }

    /// Normalized measure with log-density `log_density(x)` (up to a constant).
    pub fn from_log_density<F: Fn(T) -> T>(
        x_min: T,
        dx: T,
        n_points: usize,
        log_density: F,
    ) -> Result<Self> {
        let lw = (0..n_points)
            .map(|i| log_density(x_min + T::of_usize(i) * dx))
            .collect();
        Self::from_log_weights(x_min, dx, lw)?.normalized()
    }

    /// Normalized measure with density proportional to `density(x) >= 0`.
    pub fn from_density<F: Fn(T) -> T>(
        x_min: T,
        dx: T,
        n_points: usize,
        density: F,
    ) -> Result<Self> {
        Self::from_log_density(x_min, dx, n_points, |x| {
            let d = density(x);
            if d > T::zero() {
                d.ln()
            } else {
                T::neg_infinity()
            }
        })
    }

    /// Discretized `N(mean, sd²)`.
    pub fn gaussian(x_min: T, dx: T, n_points: usize, mean: T, sd: T) -> Result<Self> {
        if !(sd > T::zero()) {
            return Err(Error::InvalidMeasure(format!(
                "sd must be positive, got {sd}"
            )));
        }
        let two = T::of(2.0);
        Self::from_log_density(x_min, dx, n_points, |x| {
            -(x - mean).powi(2) / (two * sd * sd)
        })
    }

    /// Atoms `(node, mass)`; masses are renormalized.
    pub fn atoms(x_min: T, dx: T, n_points: usize, atoms: &[(usize, T)]) -> Result<Self> {
        let mut lw = vec![T::neg_infinity(); n_points];
        for &(node, mass) in atoms {
            if node >= n_points || !(mass > T::zero()) {
                return Err(Error::InvalidMeasure(format!("bad atom ({node}, {mass})")));
            }
            lw[node] = log_sum(lw[node], (mass / dx).ln());
        }
        Self::from_log_weights(x_min, dx, lw)?.normalized()
    }

    /// Dirac mass on grid node `node`.
    pub fn point_mass(x_min: T, dx: T, n_points: usize, node: usize) -> Result<Self> {
        Self::atoms(x_min, dx, n_points, &[(node, T::one())])
    }

    /// `½δ_{-a} + ½δ_{+a}` on the two-node grid `{-a, +a}`.
    pub fn symmetric_pair(a: T) -> Result<Self> {
        Self::two_point(-a, a, T::of(0.5))
    }

    /// `(1-p)δ_lo + pδ_hi` on the two-node grid `{lo, hi}`.
    pub fn two_point(lo: T, hi: T, p_hi: T) -> Result<Self> {
        if !(hi > lo) || !(p_hi > T::zero() && p_hi < T::one()) {
            return Err(Error::InvalidMeasure(
                "two_point needs lo < hi and 0 < p < 1".into(),
            ));
        }
        Self::atoms(lo, hi - lo, 2, &[(0, T::one() - p_hi), (1, p_hi)])
    }

    /// Same grid, new log-weights, unnormalized.
    pub fn with_log_weights(&self, log_weights: Vec<T>) -> Result<Self> {
        if log_weights.len() != self.log_weights.len() {
            return Err(Error::InvalidMeasure("log-weight length mismatch".into()));
        }
        Self::from_log_weights(self.x_min, self.dx, log_weights)
    }

    pub fn x_min(&self) -> T {
        self.x_min
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn n_points(&self) -> usize {
        self.log_weights.len()
    }

    pub fn x_max(&self) -> T {
        self.x(self.n_points() - 1)
    }

    #[inline]
    pub fn x(&self, i: usize) -> T {
        self.x_min + T::of_usize(i) * self.dx
    }

    pub fn xs(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.n_points()).map(move |i| self.x(i))
    }

    pub fn log_weights(&self) -> &[T] {
        &self.log_weights
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Density `exp(log_weight)` at node `i`.
    pub fn density(&self, i: usize) -> T {
        self.log_weights[i].exp()
    }

    /// Node masses `exp(log_weight) dx`.
    pub fn masses(&self) -> Vec<T> {
        let ldx = self.dx.ln();
        self.log_weights.iter().map(|&w| (w + ldx).exp()).collect()
    }

    /// Index of the heaviest node.
    pub fn mode_index(&self) -> usize {
        self.log_weights
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |best, (i, &w)| {
                if w > best.1 {
                    (i, w)
                } else {
                    best
                }
            })
            .0
    }

    /// Inverse-CDF lookup: smallest node whose cumulative mass exceeds `u`.
    pub fn quantile_index(&self, u: T) -> usize {
        let mut acc = T::zero();
        let mut last = 0;
        for (i, m) in self.masses().into_iter().enumerate() {
            if m > T::zero() {
                acc = acc + m;
                last = i;
                if u < acc {
                    return i;
                }
            }
        }
        last
    }

    /// Shift log-weights by their log-sum-exp so the total mass is one.
    pub fn renormalize(&self) -> Result<Renormalized<T>> {
        let mut measure = self.clone();
        let mass_deficit = measure.normalize_in_place()?;
        Ok(Renormalized {
            measure,
            mass_deficit,
        })
    }

    /// Consuming form of [`renormalize`](Self::renormalize).
    pub fn normalized(mut self) -> Result<Self> {
        self.normalize_in_place()?;
        Ok(self)
    }

    /// Normalize in place; returns the mass deficit `1 - mass` before the shift.
    pub fn normalize_in_place(&mut self) -> Result<T> {
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(T::neg_infinity(), T::max);
        if max == T::neg_infinity() {
            return Err(Error::MeasureDied);
        }
        let s = compensated_sum(self.log_weights.iter().map(|&w| (w - max).exp()));
        let log_mass = max + (s * self.dx).ln();
        for w in &mut self.log_weights {
            *w = *w - log_mass;
        }
        self.normalized = true;
        Ok(T::one() - log_mass.exp())
    }

    fn require_normalized(&self) -> Result<()> {
        if self.normalized {
            Ok(())
        } else {
            Err(Error::Unnormalized)
        }
    }

    /// `μ[φ] = Σ_i exp(lw_i) φ(x_i) dx` for a plain closure.
    pub fn moment_fn<F: Fn(T) -> T>(&self, phi: F) -> Result<T> {
        self.require_normalized()?;
        let ldx = self.dx.ln();
        let mut acc = CompensatedSum::new();
        for (i, &w) in self.log_weights.iter().enumerate() {
            if w != T::neg_infinity() {
                acc.add((w + ldx).exp() * phi(self.x(i)));
            }
        }
        Ok(acc.value())
    }

    pub fn moment(&self, phi: &TestFunction<T>) -> Result<T> {
        self.moment_fn(|x| phi.eval(x))
    }

    /// `μ[xφ] - μ[x] μ[φ]`, computed in centered form.
    pub fn connected_moment_x(&self, phi: &TestFunction<T>) -> Result<T> {
        self.connected_moment_x_fn(|x| phi.eval(x))
    }

    pub fn connected_moment_x_fn<F: Fn(T) -> T>(&self, phi: F) -> Result<T> {
        let mean_x = self.mean()?;
        let mean_phi = self.moment_fn(&phi)?;
        self.moment_fn(|x| (x - mean_x) * (phi(x) - mean_phi))
    }

    pub fn mean(&self) -> Result<T> {
        self.moment_fn(|x| x)
    }

    pub fn variance(&self) -> Result<T> {
        let m = self.mean()?;
        self.moment_fn(|x| (x - m) * (x - m))
    }

    /// Serialize as `x,weight` rows with linear-domain node masses summing to one.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "# grid measure: x_min={} dx={} n_points={}",
            self.x_min,
            self.dx,
            self.n_points()
        )?;
        writeln!(
            w,
            "# columns: x (length units), weight (node mass, sums to 1)"
        )?;
        writeln!(w, "x,weight")?;
        for (x, m) in self.xs().zip(self.masses()) {
            writeln!(w, "{x},{m}")?;
        }
        Ok(())
    }
}

fn log_sum<T: Real>(a: T, b: T) -> T {
    crate::scalar::log_add_exp(a, b)
}

/// Labelled test function `φ: ℝ → ℝ` used for moments `μ[φ]`.
#[derive(Clone)]
pub struct TestFunction<T> {
    label: String,
    eval: Arc<dyn Fn(T) -> T + Send + Sync>,
}

impl<T: Real> TestFunction<T> {
    pub fn new(label: impl Into<String>, f: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            eval: Arc::new(f),
        }
    }

    /// Register `f`, rejecting it if it is not finite on every node of `grid`.
    pub fn checked(
        label: impl Into<String>,
        f: impl Fn(T) -> T + Send + Sync + 'static,
        grid: &GridMeasure<T>,
    ) -> Result<Self> {
        let tf = Self::new(label, f);
        tf.check_bounded_on(grid)?;
        Ok(tf)
    }

    pub fn check_bounded_on(&self, grid: &GridMeasure<T>) -> Result<()> {
        match grid.xs().find(|&x| !self.eval(x).is_finite()) {
            Some(x) => Err(Error::config(
                self.label.clone(),
                format!("test function is not finite at x = {x}"),
            )),
            None => Ok(()),
        }
    }

    pub fn identity() -> Self {
        Self::new("x", |x| x)
    }

    pub fn constant(c: T) -> Self {
        Self::new(format!("{c}"), move |_| c)
    }

    pub fn power(k: i32) -> Self {
        Self::new(format!("x^{k}"), move |x: T| x.powi(k))
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        (self.eval)(x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl<T> fmt::Debug for TestFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("label", &self.label)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn std_normal() -> GridMeasure<f64> {
        GridMeasure::gaussian(-8.0, 1e-2, 1601, 0.0, 1.0).unwrap()
    }

    #[test]
    fn total_mass_is_one() {
        let mu = std_normal();
        assert!((mu.moment(&TestFunction::constant(1.0)).unwrap() - 1.0).abs() < 1e-10);
        let total: f64 = mu.masses().iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gaussian_second_moment() {
        let mu = std_normal();
        let m2 = mu.moment(&TestFunction::power(2)).unwrap();
        assert!((m2 - 1.0).abs() < 1e-6, "m2 = {m2}");
    }

    #[test]
    fn dirac_evaluates_test_function() {
        let mu = GridMeasure::point_mass(-1.0, 0.1, 21, 13).unwrap();
        let phi = TestFunction::new("cos", f64::cos);
        let x = mu.x(13);
        assert!((mu.moment(&phi).unwrap() - x.cos()).abs() < 1e-14);
        assert!(mu.connected_moment_x(&phi).unwrap().abs() < 1e-14);
        assert_eq!(mu.variance().unwrap(), 0.0);
    }

    #[test]
    fn connected_moment_of_constant_vanishes() {
        let mu = GridMeasure::<f64>::gaussian(-5.0, 0.05, 201, 0.3, 0.7).unwrap();
        let c = mu.connected_moment_x(&TestFunction::constant(4.2)).unwrap();
        assert!(c.abs() <= 1e-12);
    }

    #[test]
    fn connected_moment_with_x_is_variance() {
        let mu = GridMeasure::<f64>::gaussian(-6.0, 0.01, 1201, 0.5, 0.8).unwrap();
        let v = mu.connected_moment_x(&TestFunction::identity()).unwrap();
        assert!((v - 0.64).abs() < 1e-8, "v = {v}");
    }

    #[test]
    fn unnormalized_moment_is_rejected() {
        let mu = GridMeasure::from_log_weights(0.0, 1.0, vec![0.0, 1.0]).unwrap();
        assert_eq!(mu.mean(), Err(Error::Unnormalized));
    }

    #[test]
    fn rejects_nan_and_positive_infinity() {
        assert!(GridMeasure::from_log_weights(0.0, 1.0, vec![0.0, f64::NAN]).is_err());
        assert!(GridMeasure::from_log_weights(0.0, 1.0, vec![0.0, f64::INFINITY]).is_err());
        assert!(GridMeasure::from_log_weights(0.0, 1.0, vec![0.0]).is_err());
        assert!(GridMeasure::from_log_weights(0.0, 0.0, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn uniform_log_weights_shift_to_zero() {
        let mu = GridMeasure::from_log_weights(0.0, 0.1, vec![-3.25; 10]).unwrap();
        let r = mu.renormalize().unwrap();
        assert!(r.measure.log_weights().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn renormalize_restores_linear_weights() {
        let lw = vec![(0.2f64 * 1e3).ln(), (0.8f64 * 1e3).ln()];
        let r = GridMeasure::from_log_weights(0.0, 1.0, lw)
            .unwrap()
            .renormalize()
            .unwrap();
        let m = r.measure.masses();
        assert!((m[0] - 0.2).abs() < 1e-14 && (m[1] - 0.8).abs() < 1e-14);
        assert!((r.mass_deficit - (1.0 - 1e3)).abs() < 1e-9);
    }

    #[test]
    fn dead_measure_is_reported() {
        let mu = GridMeasure::from_log_weights(0.0, 1.0, vec![f64::NEG_INFINITY; 3]).unwrap();
        assert_eq!(mu.renormalize(), Err(Error::MeasureDied));
    }

    // Posterior weights exp(αS - α²t/2) for α = 0, 1, ..., 50 at t = 10 and
    // S = 47.3 * 10 (a path with true α close to 47.3). Expected node masses
    // computed with 60-digit arithmetic (mpmath) in the linear domain.
    #[test]
    fn extreme_posterior_weights_match_extended_precision() {
        let t = 10.0f64;
        let s = 473.0f64;
        let lw: Vec<f64> = (0..=50)
            .map(|a| a as f64 * s - (a * a) as f64 * t / 2.0)
            .collect();
        let mu = GridMeasure::from_log_weights(0.0, 1.0, lw)
            .unwrap()
            .normalized()
            .unwrap();
        let m = mu.masses();
        let expected = [
            (45usize, 4.4987381297042719e-12),
            (46, 0.00029538700675331448),
            (47, 0.88053625704964173),
            (48, 0.11916762374792006),
            (49, 7.3219118594873859e-7),
        ];
        for (i, e) in expected {
            assert!((m[i] - e).abs() <= 1e-8 * e, "node {i}: {} vs {e}", m[i]);
        }
        assert!(m.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn quantile_index_skips_empty_nodes() {
        let mu = GridMeasure::atoms(0.0, 1.0, 5, &[(1, 0.25), (3, 0.75)]).unwrap();
        assert_eq!(mu.quantile_index(0.0), 1);
        assert_eq!(mu.quantile_index(0.2), 1);
        assert_eq!(mu.quantile_index(0.3), 3);
        assert_eq!(mu.quantile_index(1.0), 3);
    }

    #[test]
    fn csv_rows_sum_to_one() {
        let mu = GridMeasure::symmetric_pair(1.0).unwrap();
        let mut buf = Vec::new();
        mu.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], "x,weight");
        let total: f64 = rows[1..]
            .iter()
            .map(|r| r.split(',').nth(1).unwrap().parse::<f64>().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn test_function_registration_checks_finiteness() {
        let grid = GridMeasure::gaussian(-1.0, 0.5, 5, 0.0, 1.0).unwrap();
        assert!(TestFunction::checked("1/x", |x: f64| 1.0 / x, &grid).is_err());
        assert!(TestFunction::checked("x^2", |x: f64| x * x, &grid).is_ok());
    }

    fn arb_measure() -> impl Strategy<Value = GridMeasure<f64>> {
        proptest::collection::vec(-30.0f64..30.0, 2..40).prop_map(|lw| {
            GridMeasure::from_log_weights(-1.0, 0.1, lw)
                .unwrap()
                .normalized()
                .unwrap()
        })
    }

    proptest! {
        #[test]
        fn renormalize_is_idempotent(mu in arb_measure()) {
            let again = mu.renormalize().unwrap();
            prop_assert!(again.mass_deficit.abs() < 1e-12);
            for (a, b) in mu.log_weights().iter().zip(again.measure.log_weights()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn moment_is_linear(mu in arb_measure(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let f = |x: f64| x.sin();
            let g = |x: f64| x * x;
            let lhs = mu.moment_fn(|x| a * f(x) + b * g(x)).unwrap();
            let rhs = a * mu.moment_fn(f).unwrap() + b * mu.moment_fn(g).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn connected_moment_ignores_constant_shift(mu in arb_measure(), c in -100.0f64..100.0) {
            let base = mu.connected_moment_x_fn(|x| x.cos()).unwrap();
            let shifted = mu.connected_moment_x_fn(|x| x.cos() + c).unwrap();
            prop_assert!((base - shifted).abs() <= 1e-12);
        }
    }
}
