//! Monitoring in competition with dissipative dynamics.
//!
//! A Lindbladian quadratic in momentum acts on functions of position through
//! the diffusion generator `D_st φ = ½V²φ'' + Uφ'`, so the diagonal measure
//! obeys
//!
//! ```text
//! d μ_t[φ] = μ_t[D_st φ] dt + 2γ μ_t[xφ]^c dW_t.
//! ```
//!
//! The quantum Laplacian `-(D/2)[P,[P,·]]` is the case `U = 0`, `V = √D`.

pub mod separated;
pub mod sweep;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::GridMeasure;
use crate::qnd::{check_gamma, qnd_step_with, QndScheme, QndStep};
use crate::scalar::Real;
use crate::sde::{sample_noise_from, NoisePath, RngStream, TimeGrid};

pub use separated::{separated_kernel, separated_residual};
pub use sweep::{
    strong_limit_sweep, GammaResult, MomentObservable, Polynomial, Reference, SweepConfig,
    SweepReport,
};

type RealFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Known closed-form transition laws of the target SDE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnalyticKind<T> {
    /// `dY = √D dB`.
    QuantumLaplacian {
        d: T,
    },
    /// `dY = -k Y dt + σ dB`.
    OrnsteinUhlenbeck {
        k: T,
        sigma: T,
    },
    General,
}

/// Drift `U` and diffusion amplitude `V` with their derivatives.
#[derive(Clone)]
pub struct LindbladSpec<T> {
    u: RealFn<T>,
    v: RealFn<T>,
    du: RealFn<T>,
    dv: RealFn<T>,
    ddv: RealFn<T>,
    kind: AnalyticKind<T>,
}

impl<T: Real> LindbladSpec<T> {
    pub fn new(
        u: impl Fn(T) -> T + Send + Sync + 'static,
        v: impl Fn(T) -> T + Send + Sync + 'static,
        du: impl Fn(T) -> T + Send + Sync + 'static,
        dv: impl Fn(T) -> T + Send + Sync + 'static,
        ddv: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            u: Arc::new(u),
            v: Arc::new(v),
            du: Arc::new(du),
            dv: Arc::new(dv),
            ddv: Arc::new(ddv),
            kind: AnalyticKind::General,
        }
    }

    pub fn quantum_laplacian(d: T) -> Result<Self> {
        if !(d >= T::zero()) || !d.is_finite() {
            return Err(Error::config(
                "D",
                format!("must be finite and non-negative, got {d}"),
            ));
        }
        let amp = d.sqrt();
        let mut s = Self::new(
            |_| T::zero(),
            move |_| amp,
            |_| T::zero(),
            |_| T::zero(),
            |_| T::zero(),
        );
        s.kind = AnalyticKind::QuantumLaplacian { d };
        Ok(s)
    }

    pub fn ornstein_uhlenbeck(k: T, sigma: T) -> Result<Self> {
        if !(sigma >= T::zero()) || !k.is_finite() || !sigma.is_finite() {
            return Err(Error::config(
                "sigma",
                "OU parameters must be finite with sigma >= 0",
            ));
        }
        let mut s = Self::new(
            move |x| -k * x,
            move |_| sigma,
            move |_| -k,
            |_| T::zero(),
            |_| T::zero(),
        );
        s.kind = AnalyticKind::OrnsteinUhlenbeck { k, sigma };
        Ok(s)
    }

    pub fn kind(&self) -> AnalyticKind<T> {
        self.kind
    }

    pub fn u(&self, x: T) -> T {
        (self.u)(x)
    }

    pub fn v(&self, x: T) -> T {
        (self.v)(x)
    }

    pub fn du(&self, x: T) -> T {
        (self.du)(x)
    }

    pub fn dv(&self, x: T) -> T {
        (self.dv)(x)
    }

    pub fn ddv(&self, x: T) -> T {
        (self.ddv)(x)
    }

    /// `(D_st φ)(x) = ½V(x)²φ''(x) + U(x)φ'(x)`.
    pub fn generator_at(&self, x: T, dphi: T, ddphi: T) -> T {
        let v = self.v(x);
        T::of(0.5) * v * v * ddphi + self.u(x) * dphi
    }

    /// No internal dynamics on this grid: `U ≡ 0` and `V ≡ 0`.
    pub fn is_trivial_on(&self, mu: &GridMeasure<T>) -> bool {
        mu.xs()
            .all(|x| self.u(x) == T::zero() && self.v(x) == T::zero())
    }

    /// All evaluators finite and `V >= 0` on every node.
    pub fn validate_on(&self, mu: &GridMeasure<T>) -> Result<()> {
        for x in mu.xs() {
            let vals = [self.u(x), self.v(x), self.du(x), self.dv(x), self.ddv(x)];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(
                    "lindblad",
                    format!("coefficients not finite at x = {x}"),
                ));
            }
            if self.v(x) < T::zero() {
                return Err(Error::config(
                    "lindblad.V",
                    format!("negative amplitude at x = {x}"),
                ));
            }
        }
        Ok(())
    }
}

impl<T: fmt::Debug> fmt::Debug for LindbladSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LindbladSpec")
            .field("kind", &self.kind)
            .finish()
    }
}

/// Central-difference diffusion generator on a uniform grid with reflecting
/// ends. The backward operator `B` acts on test functions; the forward
/// operator on densities is its transpose, so the two are exactly adjoint and
/// the forward action conserves `Σ μ_i dx`.
#[derive(Clone, Debug, PartialEq)]
pub struct FokkerPlanck<T> {
    dx: T,
    /// `½V²` at the nodes.
    a: Vec<T>,
    u: Vec<T>,
}

impl<T: Real> FokkerPlanck<T> {
    pub fn new(spec: &LindbladSpec<T>, mu: &GridMeasure<T>) -> Result<Self> {
        spec.validate_on(mu)?;
        let half = T::of(0.5);
        let a: Vec<T> = mu.xs().map(|x| half * spec.v(x) * spec.v(x)).collect();
        let u: Vec<T> = mu.xs().map(|x| spec.u(x)).collect();
        let dx = mu.dx();
        let two = T::of(2.0);
        for (i, (&ai, &ui)) in a.iter().zip(&u).enumerate() {
            if ui.abs() * dx > two * ai {
                return Err(Error::Stability(format!(
                    "cell Péclet number |U|dx/(V²) = {} exceeds 1 at x = {}; refine dx",
                    ui.abs() * dx / (two * ai),
                    mu.x(i)
                )));
            }
        }
        Ok(Self { dx, a, u })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// Explicit Euler needs `max V² dt / dx² <= ½`.
    pub fn check_stability(&self, dt: T) -> Result<()> {
        let two = T::of(2.0);
        let worst = self.a.iter().copied().fold(T::zero(), T::max) * two * dt / (self.dx * self.dx);
        if worst > T::of(0.5) {
            return Err(Error::config(
                "dt",
                format!(
                    "V²dt/dx² = {worst} exceeds the stability bound 1/2; reduce dt or coarsen dx"
                ),
            ));
        }
        Ok(())
    }

    /// Row `i` of `B` as `(left, diag, right)`.
    #[inline]
    fn row(&self, i: usize) -> (T, T, T) {
        let dx2 = self.dx * self.dx;
        let two = T::of(2.0);
        let n = self.n();
        let a = self.a[i] / dx2;
        if i == 0 {
            (T::zero(), -two * a, two * a)
        } else if i == n - 1 {
            (two * a, -two * a, T::zero())
        } else {
            let c = self.u[i] / (two * self.dx);
            (a - c, -two * a, a + c)
        }
    }

    /// `(D_st φ)_i` on test-function values.
    pub fn backward(&self, phi: &[T]) -> Vec<T> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let (l, d, r) = self.row(i);
                let left = if i > 0 { l * phi[i - 1] } else { T::zero() };
                let right = if i + 1 < n { r * phi[i + 1] } else { T::zero() };
                left + d * phi[i] + right
            })
            .collect()
    }

    /// Transposed action on densities: `½(V²μ)'' - (Uμ)'` in the interior.
    pub fn forward(&self, mu: &[T]) -> Vec<T> {
        let n = self.n();
        let mut out = vec![T::zero(); n];
        for j in 0..n {
            let (l, d, r) = self.row(j);
            out[j] = out[j] + d * mu[j];
            if j > 0 {
                out[j - 1] = out[j - 1] + l * mu[j];
            }
            if j + 1 < n {
                out[j + 1] = out[j + 1] + r * mu[j];
            }
        }
        out
    }
}

/// Operator-split stepper: explicit generator step, then the exponential
/// monitoring step of the pure QND case.
#[derive(Clone, Debug)]
pub struct MonitoredDiffusion<T> {
    pub gamma: T,
    pub dt: T,
    pub scheme: QndScheme,
    generator: Option<FokkerPlanck<T>>,
}

impl<T: Real> MonitoredDiffusion<T> {
    /// Build for the grid of `mu`; fails on a stability or Péclet violation.
    pub fn new(spec: &LindbladSpec<T>, gamma: T, dt: T, mu: &GridMeasure<T>) -> Result<Self> {
        if !(gamma >= T::zero()) || !gamma.is_finite() {
            return Err(Error::config(
                "gamma",
                format!("must be finite and non-negative, got {gamma}"),
            ));
        }
        if !(dt > T::zero()) {
            return Err(Error::config("dt", "must be positive"));
        }
        let generator = if spec.is_trivial_on(mu) {
            spec.validate_on(mu)?;
            None
        } else {
            let fp = FokkerPlanck::new(spec, mu)?;
            fp.check_stability(dt)?;
            Some(fp)
        };
        Ok(Self {
            gamma,
            dt,
            scheme: QndScheme::Exponential,
            generator,
        })
    }

    pub fn generator(&self) -> Option<&FokkerPlanck<T>> {
        self.generator.as_ref()
    }

    /// `μ ← μ + dt D_st* μ`, evaluated on the shifted linear density.
    pub fn generator_step(&self, mu: &GridMeasure<T>) -> Result<GridMeasure<T>> {
        let Some(fp) = &self.generator else {
            return Ok(mu.clone());
        };
        let max = mu
            .log_weights()
            .iter()
            .copied()
            .fold(T::neg_infinity(), T::max);
        if max == T::neg_infinity() {
            return Err(Error::MeasureDied);
        }
        let p: Vec<T> = mu.log_weights().iter().map(|&w| (w - max).exp()).collect();
        let flow = fp.forward(&p);
        let lw = p
            .iter()
            .zip(&flow)
            .map(|(&pi, &fi)| {
                let q = pi + self.dt * fi;
                if q > T::zero() {
                    q.ln() + max
                } else {
                    T::neg_infinity()
                }
            })
            .collect();
        mu.with_log_weights(lw)?.normalized()
    }

    /// One full step; `ds = 2γ μ[x] dt + dW` is taken after the generator step.
    pub fn step(&self, mu: &GridMeasure<T>, dw: T) -> Result<QndStep<T>> {
        let drifted = self.generator_step(mu)?;
        if self.gamma == T::zero() {
            return Ok(QndStep {
                ds: dw,
                measure: drifted,
                mass_deficit: T::zero(),
            });
        }
        qnd_step_with(&drifted, dw, self.dt, self.gamma, self.scheme)
    }

    /// Integrate along `noise`, visiting `(k, μ_{t_k}, S_{t_k})`.
    pub fn run<F>(
        &self,
        mu0: &GridMeasure<T>,
        noise: &NoisePath<T>,
        mut visit: F,
    ) -> Result<GridMeasure<T>>
    where
        F: FnMut(usize, &GridMeasure<T>, T),
    {
        let mut mu = mu0.clone();
        let mut s = T::zero();
        visit(0, &mu, s);
        for (k, &dw) in noise.increments().iter().enumerate() {
            let step = self.step(&mu, dw).map_err(|e| match e {
                Error::MeasureDied => Error::Integration {
                    step: k,
                    reason: "all mass lost to truncation".into(),
                },
                other => other,
            })?;
            mu = step.measure;
            s = s + step.ds;
            visit(k + 1, &mu, s);
        }
        Ok(mu)
    }
}

/// Internal dynamics of a monitored-diffusion run.
#[derive(Clone, Debug)]
pub enum DiffusionModel<T> {
    QuantumLaplacian { d: T },
    General(LindbladSpec<T>),
}

impl<T: Real> DiffusionModel<T> {
    pub fn spec(&self) -> Result<LindbladSpec<T>> {
        match self {
            Self::QuantumLaplacian { d } => LindbladSpec::quantum_laplacian(*d),
            Self::General(s) => Ok(s.clone()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MonitoredDiffusionConfig<T> {
    pub model: DiffusionModel<T>,
    pub gamma: T,
    pub mu0: GridMeasure<T>,
    pub grid: TimeGrid<T>,
    pub rng: RngStream,
}

impl<T: Real> MonitoredDiffusionConfig<T> {
    pub fn stepper(&self) -> Result<MonitoredDiffusion<T>> {
        check_gamma(self.gamma)?;
        MonitoredDiffusion::new(&self.model.spec()?, self.gamma, self.grid.dt(), &self.mu0)
    }

    /// Run one trajectory, keeping `(S, μ)` at every step.
    pub fn simulate(&self) -> Result<(Vec<T>, Vec<GridMeasure<T>>)> {
        let stepper = self.stepper()?;
        let noise = sample_noise_from(self.grid, &mut self.rng.rng());
        let mut s = Vec::with_capacity(noise.len() + 1);
        let mut ms = Vec::with_capacity(noise.len() + 1);
        stepper.run(&self.mu0, &noise, |_, mu, sk| {
            s.push(sk);
            ms.push(mu.clone());
        })?;
        Ok((s, ms))
    }
}

/// Single monitored-diffusion step for a prepared stepper.
pub fn monitored_diffusion_step<T: Real>(
    mu: &GridMeasure<T>,
    stepper: &MonitoredDiffusion<T>,
    dw: T,
) -> Result<(GridMeasure<T>, T)> {
    let s = stepper.step(mu, dw)?;
    Ok((s.measure, s.ds))
}

/// Euler–Maruyama path of `dY = U(Y)dt + V(Y)dB`, `n_steps + 1` values.
pub fn classical_sde_oracle<T: Real>(
    spec: &LindbladSpec<T>,
    y0: T,
    grid: TimeGrid<T>,
    rng: RngStream,
) -> Vec<T> {
    let noise = sample_noise_from(grid, &mut rng.rng());
    classical_sde_path(spec, y0, &noise)
}

pub fn classical_sde_path<T: Real>(spec: &LindbladSpec<T>, y0: T, noise: &NoisePath<T>) -> Vec<T> {
    let dt = noise.grid().dt();
    let mut y = y0;
    let mut out = Vec::with_capacity(noise.len() + 1);
    out.push(y);
    for &dw in noise.increments() {
        y = y + spec.u(y) * dt + spec.v(y) * dw;
        out.push(y);
    }
    out
}

/// Posterior variance of the Gaussian filter for `dY = √D dB` observed
/// through `dS = 2γY dt + dW`: `dP/dt = D - 4γ²P²`.
pub fn kalman_bucy_variance<T: Real>(p0: T, d: T, gamma: T, t: T) -> T {
    if d == T::zero() {
        return p0 / (T::one() + T::of(4.0) * gamma * gamma * p0 * t);
    }
    let p_inf = d.sqrt() / (T::of(2.0) * gamma);
    let th = (T::of(4.0) * gamma * gamma * p_inf * t).tanh();
    p_inf * (p0 + p_inf * th) / (p_inf + p0 * th)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qnd::qnd_step;
    use crate::sde::sample_noise;
    use crate::stats::{par_paths, MeanEstimate};
    use proptest::prelude::*;

    fn grid_measure() -> GridMeasure<f64> {
        GridMeasure::<f64>::gaussian(-4.0, 0.05, 161, 0.2, 0.6).unwrap()
    }

    #[test]
    fn backward_on_square_is_constant_d() {
        let mu = grid_measure();
        let fp = FokkerPlanck::new(&LindbladSpec::quantum_laplacian(1.7).unwrap(), &mu).unwrap();
        let phi: Vec<f64> = mu.xs().map(|x| x * x).collect();
        let b = fp.backward(&phi);
        for v in &b[1..b.len() - 1] {
            assert!((v - 1.7).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn backward_on_identity_is_ou_drift() {
        let mu = grid_measure();
        let fp =
            FokkerPlanck::new(&LindbladSpec::ornstein_uhlenbeck(1.0, 1.0).unwrap(), &mu).unwrap();
        let phi: Vec<f64> = mu.xs().collect();
        let b = fp.backward(&phi);
        for (i, v) in b.iter().enumerate().take(b.len() - 1).skip(1) {
            assert!((v + mu.x(i)).abs() < 1e-10);
        }
    }

    #[test]
    fn stability_and_peclet_violations_are_reported() {
        let mu = grid_measure();
        let lap = LindbladSpec::quantum_laplacian(1.0).unwrap();
        assert!(MonitoredDiffusion::new(&lap, 1.0, 2e-3, &mu).is_err());
        assert!(MonitoredDiffusion::new(&lap, 1.0, 1e-3, &mu).is_ok());
        let steep = LindbladSpec::ornstein_uhlenbeck(100.0, 0.1).unwrap();
        assert!(matches!(
            FokkerPlanck::new(&steep, &mu),
            Err(Error::Stability(_))
        ));
    }

    #[test]
    fn zero_diffusion_is_exactly_the_qnd_step() {
        let mu = grid_measure();
        let st = MonitoredDiffusion::new(
            &LindbladSpec::quantum_laplacian(0.0).unwrap(),
            1.3,
            1e-3,
            &mu,
        )
        .unwrap();
        let (a, ds_a) = monitored_diffusion_step(&mu, &st, 0.02).unwrap();
        let (b, ds_b) = qnd_step(&mu, 0.02, 1e-3, 1.3).unwrap();
        assert_eq!(a.log_weights(), b.log_weights());
        assert_eq!(ds_a, ds_b);
    }

    #[test]
    fn unmonitored_heat_flow_grows_variance_by_dt() {
        let mu0 = GridMeasure::<f64>::gaussian(-6.0, 0.02, 601, 0.0, 0.5).unwrap();
        let d = 1.0;
        let st = MonitoredDiffusion::new(
            &LindbladSpec::quantum_laplacian(d).unwrap(),
            0.0,
            1e-4,
            &mu0,
        )
        .unwrap();
        let noise = sample_noise(
            TimeGrid::<f64>::new(0.0, 1e-4, 10_000).unwrap(),
            RngStream::new(0, 0),
        );
        let end = st.run(&mu0, &noise, |_, _, _| ()).unwrap();
        let v = end.variance().unwrap();
        assert!((v - (0.25 + d)).abs() < 0.01 * (0.25 + d), "v = {v}");
    }

    #[test]
    fn gaussian_posterior_variance_follows_riccati() {
        let (d, gamma, p0): (f64, f64, f64) = (1.0, 2.0, 0.25 * 0.25);
        let mu0 = GridMeasure::<f64>::gaussian(-4.0, 0.02, 401, 0.0, p0.sqrt()).unwrap();
        let dt = 1e-4;
        let st = MonitoredDiffusion::new(
            &LindbladSpec::quantum_laplacian(d).unwrap(),
            gamma,
            dt,
            &mu0,
        )
        .unwrap();
        let noise = sample_noise(
            TimeGrid::<f64>::new(0.0, dt, 3000).unwrap(),
            RngStream::new(4, 0),
        );
        let end = st.run(&mu0, &noise, |_, _, _| ()).unwrap();
        let expected = kalman_bucy_variance(p0, d, gamma, 0.3);
        let v = end.variance().unwrap();
        assert!((v - expected).abs() < 0.02 * expected, "{v} vs {expected}");
    }

    #[test]
    fn posterior_mean_is_a_martingale_without_drift() {
        let mu0 = GridMeasure::<f64>::gaussian(-4.0, 0.05, 161, 0.3, 0.5).unwrap();
        let grid = TimeGrid::<f64>::new(0.0, 1e-3, 300).unwrap();
        let st = MonitoredDiffusion::new(
            &LindbladSpec::quantum_laplacian(1.0).unwrap(),
            2.0,
            1e-3,
            &mu0,
        )
        .unwrap();
        let means: Vec<f64> = par_paths(2000, RngStream::new(8, 0), |r| {
            let noise = sample_noise(grid, r);
            st.run(&mu0, &noise, |_, _, _| ()).unwrap().mean().unwrap()
        });
        let est = MeanEstimate::from_samples(&means);
        assert!(est.within(mu0.mean().unwrap(), 3.0), "{est:?}");
    }

    #[test]
    fn oracle_reproduces_brownian_and_ou_moments() {
        let grid = TimeGrid::<f64>::new(0.0, 1e-2, 100).unwrap();
        let bm = LindbladSpec::ornstein_uhlenbeck(0.0, 1.0).unwrap();
        let ends: Vec<f64> = par_paths(10_000, RngStream::new(1, 0), |r| {
            *classical_sde_oracle(&bm, 0.0, grid, r).last().unwrap()
        });
        assert!(MeanEstimate::variance_of(&ends).within(1.0, 3.0));

        let grid = TimeGrid::<f64>::new(0.0, 1e-3, 1000).unwrap();
        let ou = LindbladSpec::ornstein_uhlenbeck(1.0, 1.0).unwrap();
        let ends: Vec<f64> = par_paths(10_000, RngStream::new(2, 0), |r| {
            *classical_sde_oracle(&ou, 1.0, grid, r).last().unwrap()
        });
        let e = (-1.0f64).exp();
        assert!(MeanEstimate::from_samples(&ends).within(e, 3.0));
        assert!(MeanEstimate::variance_of(&ends).within((1.0 - e * e) / 2.0, 3.0));
    }

    #[test]
    fn laplacian_target_variance_is_dt() {
        // Generator (D/2)∂² gives Var(Y_t) = Dt.
        let d = 2.0;
        let grid = TimeGrid::<f64>::new(0.0, 1e-2, 50).unwrap();
        let spec = LindbladSpec::quantum_laplacian(d).unwrap();
        let ends: Vec<f64> = par_paths(10_000, RngStream::new(3, 0), |r| {
            *classical_sde_oracle(&spec, 0.0, grid, r).last().unwrap()
        });
        assert!(MeanEstimate::variance_of(&ends).within(d * 0.5, 3.0));
    }

    fn arb_spec() -> impl Strategy<Value = (f64, f64, f64)> {
        (-1.5f64..1.5, 0.8f64..1.5, 0.0f64..0.5)
    }

    proptest! {
        #[test]
        fn forward_and_backward_are_adjoint((k, s, c) in arb_spec(), seed in 0u64..1000) {
            let mu = GridMeasure::<f64>::gaussian(-3.0, 0.05, 121, 0.0, 1.0).unwrap();
            let spec = LindbladSpec::<f64>::new(move |x| -k * x + c, move |x| s + 0.1 * x.sin(), move |_| -k, move |x| 0.1 * x.cos(), move |x| -0.1 * x.sin());
            let fp = FokkerPlanck::new(&spec, &mu).unwrap();
            let mut r = RngStream::new(seed, 0).rng();
            let dens: Vec<f64> = (0..121).map(|_| crate::sde::uniform01::<f64, _>(&mut r)).collect();
            let phi: Vec<f64> = (0..121).map(|_| crate::sde::uniform01::<f64, _>(&mut r) - 0.5).collect();
            let lhs: f64 = fp.forward(&dens).iter().zip(&phi).map(|(a, b)| a * b).sum();
            let rhs: f64 = dens.iter().zip(fp.backward(&phi)).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
            let mass: f64 = fp.forward(&dens).iter().sum::<f64>() * 0.05;
            prop_assert!(mass.abs() < 1e-10);
        }
    }
}
