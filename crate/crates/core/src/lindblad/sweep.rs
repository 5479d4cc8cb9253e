//! Strong-monitoring sweeps: ensemble estimates of `E[f(μ_t[φ_1], ...)]` at
//! increasing `γ`, against the classical reference `E_{μ0}[f(φ_1(Y_t), ...)]`.
//!
//! Every `γ` reuses the same stream ids, so the sweep compares the same
//! innovation paths at different monitoring strengths.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::lindblad::{classical_sde_path, AnalyticKind, LindbladSpec, MonitoredDiffusion};
use crate::measure::{GridMeasure, TestFunction};
use crate::qnd::sample_from;
use crate::scalar::{CompensatedSum, Real};
use crate::sde::{sample_noise_from, RngStream, TimeGrid};
use crate::stats::{par_paths, MeanEstimate, MAX_FAILURE_FRACTION};

pub const MAX_DEGREE: u32 = 4;
pub const MAX_MOMENTS: usize = 3;

/// Polynomial `Σ c · m_1^{p_1} m_2^{p_2} m_3^{p_3}` of total degree <= 4.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial<T> {
    n_vars: usize,
    terms: Vec<(T, [u32; MAX_MOMENTS])>,
}

impl<T: Real> Polynomial<T> {
    pub fn new(n_vars: usize, terms: Vec<(T, [u32; MAX_MOMENTS])>) -> Result<Self> {
        if n_vars == 0 || n_vars > MAX_MOMENTS {
            return Err(Error::config(
                "observable",
                format!("1..={MAX_MOMENTS} moments allowed, got {n_vars}"),
            ));
        }
        for (_, p) in &terms {
            if p.iter().sum::<u32>() > MAX_DEGREE {
                return Err(Error::config(
                    "observable",
                    format!("degree above {MAX_DEGREE}"),
                ));
            }
            if p[n_vars..].iter().any(|&e| e != 0) {
                return Err(Error::config(
                    "observable",
                    "term uses a moment that is not defined",
                ));
            }
        }
        Ok(Self { n_vars, terms })
    }

    /// `m_1`.
    pub fn identity() -> Self {
        Self::new(1, vec![(T::one(), [1, 0, 0])]).expect("valid")
    }

    /// `m_1²`.
    pub fn square() -> Self {
        Self::new(1, vec![(T::one(), [2, 0, 0])]).expect("valid")
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn eval(&self, m: &[T]) -> T {
        self.terms
            .iter()
            .map(|(c, p)| {
                p.iter()
                    .zip(m)
                    .fold(*c, |acc, (&e, &v)| acc * v.powi(e as i32))
            })
            .fold(T::zero(), |a, b| a + b)
    }
}

/// `F(μ) = f(μ[φ_1], ..., μ[φ_n])`.
#[derive(Clone, Debug)]
pub struct MomentObservable<T> {
    pub label: String,
    pub phis: Vec<TestFunction<T>>,
    pub f: Polynomial<T>,
}

impl<T: Real> MomentObservable<T> {
    pub fn new(
        label: impl Into<String>,
        phis: Vec<TestFunction<T>>,
        f: Polynomial<T>,
    ) -> Result<Self> {
        if phis.len() != f.n_vars() {
            return Err(Error::config(
                "observable",
                "number of test functions differs from polynomial arity",
            ));
        }
        Ok(Self {
            label: label.into(),
            phis,
            f,
        })
    }

    /// `μ[φ]` for a single test function.
    pub fn moment(label: impl Into<String>, phi: TestFunction<T>) -> Self {
        Self::new(label, vec![phi], Polynomial::identity()).expect("valid")
    }

    /// `μ[φ]²`.
    pub fn squared_moment(label: impl Into<String>, phi: TestFunction<T>) -> Self {
        Self::new(label, vec![phi], Polynomial::square()).expect("valid")
    }

    pub fn on_measure(&self, mu: &GridMeasure<T>) -> Result<T> {
        let m = self
            .phis
            .iter()
            .map(|p| mu.moment(p))
            .collect::<Result<Vec<T>>>()?;
        Ok(self.f.eval(&m))
    }

    /// `f^φ(y) = f(φ_1(y), ...)`, the value on a Dirac mass.
    pub fn on_point(&self, y: T) -> T {
        let m: Vec<T> = self.phis.iter().map(|p| p.eval(y)).collect();
        self.f.eval(&m)
    }
}

/// Limit value of an observable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reference<T> {
    /// Quadrature against a closed-form Gaussian transition law.
    Quadrature(T),
    /// Monte-Carlo estimate from the classical SDE.
    MonteCarlo(MeanEstimate<T>),
}

impl<T: Real> Reference<T> {
    pub fn value(&self) -> T {
        match self {
            Self::Quadrature(v) => *v,
            Self::MonteCarlo(e) => e.mean,
        }
    }

    pub fn std_error(&self) -> T {
        match self {
            Self::Quadrature(_) => T::zero(),
            Self::MonteCarlo(e) => e.std_error,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepConfig<T> {
    pub spec: LindbladSpec<T>,
    pub mu0: GridMeasure<T>,
    pub dt: T,
    pub t_eval: T,
    pub gammas: Vec<T>,
    pub observables: Vec<MomentObservable<T>>,
    pub n_paths: usize,
    pub base: RngStream,
    /// Paths for the Monte-Carlo reference when no closed form is known.
    pub reference_paths: usize,
}

/// Ensemble results at one `γ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaResult<T> {
    pub gamma: T,
    pub estimates: Vec<MeanEstimate<T>>,
    /// Per observable, per successful path, in stream order.
    pub samples: Vec<Vec<T>>,
    /// `E[μ_t[x²] - μ_t[x]²]`.
    pub proxy: MeanEstimate<T>,
    pub proxy_samples: Vec<T>,
    /// Stream ids of the successful paths.
    pub streams: Vec<u64>,
    pub failures: Vec<(u64, String)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport<T> {
    pub labels: Vec<String>,
    pub references: Vec<Reference<T>>,
    pub per_gamma: Vec<GammaResult<T>>,
}

impl<T: Real> SweepReport<T> {
    /// `|estimate - reference|` for observable `obs`, one entry per `γ`.
    pub fn abs_errors(&self, obs: usize) -> Vec<T> {
        let r = self.references[obs].value();
        self.per_gamma
            .iter()
            .map(|g| (g.estimates[obs].mean - r).abs())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "gamma,observable,estimate,std_err,reference,abs_error")?;
        for g in &self.per_gamma {
            for (i, label) in self.labels.iter().enumerate() {
                let e = &g.estimates[i];
                let r = self.references[i].value();
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    g.gamma,
                    label,
                    e.mean,
                    e.std_error,
                    r,
                    (e.mean - r).abs()
                )?;
            }
            let p = &g.proxy;
            writeln!(
                w,
                "{},proxy_var_x,{},{},0,{}",
                g.gamma,
                p.mean,
                p.std_error,
                p.mean.abs()
            )?;
        }
        Ok(())
    }
}

fn check_sweep<T: Real>(cfg: &SweepConfig<T>) -> Result<usize> {
    if cfg.gammas.is_empty() || cfg.gammas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config(
            "gammas",
            "must be a non-empty increasing list",
        ));
    }
    if cfg.gammas[0] < T::zero() {
        return Err(Error::config("gammas", "must be non-negative"));
    }
    if cfg.n_paths < 2 {
        return Err(Error::config("n_paths", "need at least 2 paths"));
    }
    if !cfg.mu0.is_normalized() {
        return Err(Error::Unnormalized);
    }
    for o in &cfg.observables {
        for p in &o.phis {
            p.check_bounded_on(&cfg.mu0)?;
        }
    }
    let n = (cfg.t_eval / cfg.dt).round().to_usize().unwrap_or(0);
    if n == 0 || ((T::of_usize(n) * cfg.dt - cfg.t_eval).abs() > T::of(1e-9) * cfg.t_eval) {
        return Err(Error::config("t_eval", "must be a positive multiple of dt"));
    }
    Ok(n)
}

/// `E[g(m + s Z)]`, `Z ~ N(0,1)`, by composite Simpson on `[-10, 10]`.
fn gaussian_expectation<T: Real, G: Fn(T) -> T>(m: T, s: T, g: G) -> T {
    if s == T::zero() {
        return g(m);
    }
    let n = 4000usize;
    let h = T::of(20.0) / T::of_usize(n);
    let norm = T::one() / (T::TAU()).sqrt();
    let mut acc = CompensatedSum::new();
    for i in 0..=n {
        let z = T::of(-10.0) + T::of_usize(i) * h;
        let w = if i == 0 || i == n {
            T::one()
        } else if i % 2 == 1 {
            T::of(4.0)
        } else {
            T::of(2.0)
        };
        acc.add(w * g(m + s * z) * (-(z * z) / T::of(2.0)).exp());
    }
    acc.value() * h / T::of(3.0) * norm
}

fn transition<T: Real>(kind: AnalyticKind<T>, y0: T, t: T) -> Option<(T, T)> {
    match kind {
        AnalyticKind::QuantumLaplacian { d } => Some((y0, (d * t).sqrt())),
        AnalyticKind::OrnsteinUhlenbeck { k, sigma } => {
            let var = if k == T::zero() {
                sigma * sigma * t
            } else {
                sigma * sigma * (T::one() - (-T::of(2.0) * k * t).exp()) / (T::of(2.0) * k)
            };
            Some((y0 * (-k * t).exp(), var.sqrt()))
        }
        AnalyticKind::General => None,
    }
}

/// Reference values `E_{μ0}[f^φ(Y_t)]` for every observable.
pub fn reference_values<T: Real>(
    cfg: &SweepConfig<T>,
    n_steps: usize,
) -> Result<Vec<Reference<T>>> {
    let kind = cfg.spec.kind();
    if transition(kind, T::zero(), cfg.t_eval).is_some() {
        let masses = cfg.mu0.masses();
        return Ok(cfg
            .observables
            .iter()
            .map(|o| {
                let mut acc = CompensatedSum::new();
                for (i, &w) in masses.iter().enumerate() {
                    if w > T::zero() {
                        let (m, s) =
                            transition(kind, cfg.mu0.x(i), cfg.t_eval).expect("closed form");
                        acc.add(w * gaussian_expectation(m, s, |y| o.on_point(y)));
                    }
                }
                Reference::Quadrature(acc.value())
            })
            .collect());
    }
    let grid = TimeGrid::new(T::zero(), cfg.dt, n_steps)?;
    let ends: Vec<T> = par_paths(
        cfg.reference_paths.max(2),
        cfg.base.family(0x5EED),
        |stream| {
            let mut r = stream.rng();
            let y0 = sample_from(&cfg.mu0, &mut r);
            let noise = sample_noise_from(grid, &mut r);
            *classical_sde_path(&cfg.spec, y0, &noise)
                .last()
                .expect("non-empty")
        },
    );
    Ok(cfg
        .observables
        .iter()
        .map(|o| {
            let v: Vec<T> = ends.iter().map(|&y| o.on_point(y)).collect();
            Reference::MonteCarlo(MeanEstimate::from_samples(&v))
        })
        .collect())
}

type PathValues<T> = (Vec<T>, T);

/// Run the sweep. Paths lost to truncation are recorded; more than 1% lost
/// at any `γ` is an error.
pub fn strong_limit_sweep<T: Real>(cfg: &SweepConfig<T>) -> Result<SweepReport<T>> {
    let n_steps = check_sweep(cfg)?;
    let references = reference_values(cfg, n_steps)?;
    let grid = TimeGrid::new(T::zero(), cfg.dt, n_steps)?;
    let mut per_gamma = Vec::with_capacity(cfg.gammas.len());
    for &gamma in &cfg.gammas {
        let stepper = MonitoredDiffusion::new(&cfg.spec, gamma, cfg.dt, &cfg.mu0)?;
        let runs: Vec<Result<PathValues<T>>> = par_paths(cfg.n_paths, cfg.base, |stream| {
            let noise = sample_noise_from(grid, &mut stream.rng());
            let end = stepper.run(&cfg.mu0, &noise, |_, _, _| ())?;
            let vals = cfg
                .observables
                .iter()
                .map(|o| o.on_measure(&end))
                .collect::<Result<Vec<T>>>()?;
            Ok((vals, end.variance()?))
        });
        let mut samples = vec![Vec::with_capacity(cfg.n_paths); cfg.observables.len()];
        let mut proxy_samples = Vec::with_capacity(cfg.n_paths);
        let mut streams = Vec::with_capacity(cfg.n_paths);
        let mut failures = Vec::new();
        for (k, r) in runs.into_iter().enumerate() {
            let id = cfg.base.offset(k as u64).stream_id;
            match r {
                Ok((vals, var)) => {
                    for (s, v) in samples.iter_mut().zip(vals) {
                        s.push(v);
                    }
                    proxy_samples.push(var);
                    streams.push(id);
                }
                Err(e) if e.is_numerical() => failures.push((id, e.to_string())),
                Err(e) => return Err(e),
            }
        }
        if failures.len() as f64 > MAX_FAILURE_FRACTION * cfg.n_paths as f64 {
            return Err(Error::Statistics(format!(
                "{} of {} paths failed at gamma = {gamma}",
                failures.len(),
                cfg.n_paths
            )));
        }
        per_gamma.push(GammaResult {
            gamma,
            estimates: samples
                .iter()
                .map(|s| MeanEstimate::from_samples(s))
                .collect(),
            samples,
            proxy: MeanEstimate::from_samples(&proxy_samples),
            proxy_samples,
            streams,
            failures,
        });
    }
    Ok(SweepReport {
        labels: cfg.observables.iter().map(|o| o.label.clone()).collect(),
        references,
        per_gamma,
    })
}
