//! Fixed-step stochastic integration substrate.
//!
//! Every simulation in the crate draws its Brownian increments from an
//! [`RngStream`]: a `(seed, stream_id)` pair mapped onto an independent
//! ChaCha keystream. Generation is counter based, so trajectory `k` of an
//! ensemble never depends on how many other trajectories were generated
//! before it, or on which thread produced them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Generator type handed out by [`RngStream::rng`].
pub type StreamRng = ChaCha8Rng;

/// Uniform time grid `t_k = t0 + k dt`, `k = 0..=n_steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid<T> {
    t0: T,
    dt: T,
    n_steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t0: T, dt: T, n_steps: usize) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidGrid(format!("t0 must be finite, got {t0}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("n_steps must be at least 1".into()));
        }
        Ok(Self { t0, dt, n_steps })
    }

    /// Grid starting at zero that reaches `horizon` in `n_steps` steps.
    pub fn over(horizon: T, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidGrid("n_steps must be at least 1".into()));
        }
        Self::new(T::zero(), horizon / T::of_usize(n_steps), n_steps)
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// `t_k`, computed from `k` directly so no rounding accumulates.
    #[inline]
    pub fn time(&self, k: usize) -> T {
        self.t0 + T::of_usize(k) * self.dt
    }

    /// Elapsed time since `t0` at node `k`.
    #[inline]
    pub fn elapsed(&self, k: usize) -> T {
        T::of_usize(k) * self.dt
    }

    pub fn end(&self) -> T {
        self.time(self.n_steps)
    }

    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        (0..=self.n_steps).map(move |k| self.time(k))
    }

    /// Grid with `factor` times larger steps covering the same interval.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_steps.is_multiple_of(factor) {
            return Err(Error::InvalidGrid(format!(
                "cannot coarsen {} steps by a factor {factor}",
                self.n_steps
            )));
        }
        Self::new(
            self.t0,
            self.dt * T::of_usize(factor),
            self.n_steps / factor,
        )
    }

    /// Node index closest to time `t`.
    pub fn index_of(&self, t: T) -> Option<usize> {
        let k = ((t - self.t0) / self.dt).round().to_usize()?;
        (k <= self.n_steps).then_some(k)
    }
}

/// Identifies one reproducible random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub const fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Stream `offset` places further along the same seed.
    pub fn offset(&self, offset: u64) -> Self {
        Self::new(self.seed, self.stream_id.wrapping_add(offset))
    }

    /// Same stream id under a different seed family, used to separate
    /// ensembles that must not share noise.
    pub fn family(&self, tag: u64) -> Self {
        Self::new(
            self.seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15),
            self.stream_id,
        )
    }
}

#[inline]
pub fn standard_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::of(rng.sample::<f64, _>(StandardNormal))
}

#[inline]
pub fn uniform01<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::of(rng.random::<f64>())
}

/// Brownian increments on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePath<T> {
    grid: TimeGrid<T>,
    increments: Vec<T>,
}

impl<T: Real> NoisePath<T> {
    pub fn new(grid: TimeGrid<T>, increments: Vec<T>) -> Result<Self> {
        if increments.len() != grid.n_steps() {
            return Err(Error::InvalidGrid(format!(
                "expected {} increments, got {}",
                grid.n_steps(),
                increments.len()
            )));
        }
        Ok(Self { grid, increments })
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn increments(&self) -> &[T] {
        &self.increments
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// Sum consecutive blocks of `factor` increments (same Brownian path,
    /// coarser grid).
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let increments = self
            .increments
            .chunks(factor)
            .map(|c| c.iter().copied().fold(T::zero(), |a, b| a + b))
            .collect();
        Self::new(grid, increments)
    }
}

/// Gaussian increments of variance `dt`, deterministic in `rng`.
pub fn sample_noise<T: Real>(grid: TimeGrid<T>, rng: RngStream) -> NoisePath<T> {
    sample_noise_from(grid, &mut rng.rng())
}

/// As [`sample_noise`], continuing an already-positioned generator.
pub fn sample_noise_from<T: Real, R: Rng + ?Sized>(grid: TimeGrid<T>, rng: &mut R) -> NoisePath<T> {
    let scale = grid.dt().sqrt();
    let increments = (0..grid.n_steps())
        .map(|_| scale * standard_normal::<T, _>(rng))
        .collect();
    NoisePath { grid, increments }
}

/// Two-point increments `±sqrt(dt)`: `dW² = dt` holds exactly on every step.
/// Matches Gaussian increments in mean and variance (weak Euler scheme).
pub fn sample_rademacher_noise<T: Real>(grid: TimeGrid<T>, rng: RngStream) -> NoisePath<T> {
    let mut r = rng.rng();
    let scale = grid.dt().sqrt();
    let increments = (0..grid.n_steps())
        .map(|_| if r.random::<bool>() { scale } else { -scale })
        .collect();
    NoisePath { grid, increments }
}

/// `B_{t_k} = Σ_{j<k} dW_j`, with `B_{t_0} = 0`.
pub fn brownian_partial_sums<T: Real>(path: &NoisePath<T>) -> Vec<T> {
    partial_sums(path.increments())
}

/// Running sums starting from zero; `n` increments give `n + 1` values.
pub fn partial_sums<T: Real>(increments: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut acc = T::zero();
    out.push(acc);
    for &dw in increments {
        acc = acc + dw;
        out.push(acc);
    }
    out
}

/// A system advanced by one fixed Euler–Maruyama step per noise increment.
pub trait EulerMaruyama<T: Real> {
    type State: Clone;

    fn step(&self, state: &Self::State, t: T, dt: T, dw: T) -> Result<Self::State>;
}

/// Integrate along `path`, handing every visited state (including the
/// initial one) to `visit`. Returns the final state.
pub fn integrate_with<T, S, F>(
    system: &S,
    init: S::State,
    path: &NoisePath<T>,
    mut visit: F,
) -> Result<S::State>
where
    T: Real,
    S: EulerMaruyama<T>,
    F: FnMut(usize, &S::State),
{
    let grid = *path.grid();
    let mut state = init;
    visit(0, &state);
    for (k, &dw) in path.increments().iter().enumerate() {
        state = system.step(&state, grid.time(k), grid.dt(), dw)?;
        visit(k + 1, &state);
    }
    Ok(state)
}

/// Integrate along `path` and keep the whole trajectory.
pub fn integrate<T, S>(system: &S, init: S::State, path: &NoisePath<T>) -> Result<Vec<S::State>>
where
    T: Real,
    S: EulerMaruyama<T>,
{
    let mut out = Vec::with_capacity(path.len() + 1);
    integrate_with(system, init, path, |_, s| out.push(s.clone()))?;
    Ok(out)
}
