//! Un-normalized density-matrix kernel `ρ̂_t(x, y)` in the pointer basis.
//!
//! Off-diagonal entries decay like `exp(-γ²t(x²+y²))` and underflow long
//! before the diagonal does, so entries are kept as log-magnitude and phase.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::measure::GridMeasure;
use crate::scalar::{CompensatedSum, Real};

/// Square kernel on the grid `x_i = x_min + i dx` (same axis for `y`).
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSnapshot<T> {
    x_min: T,
    dx: T,
    n: usize,
    log_mag: Vec<T>,
    phase: Vec<T>,
    pub time: T,
}

impl<T: Real> KernelSnapshot<T> {
    /// Pure state `ρ(x, y) = ψ(x) ψ(y)*` with `ψ(x) = exp(log_mag(x) + i phase(x))`.
    pub fn pure_state<F: Fn(T) -> (T, T)>(x_min: T, dx: T, n: usize, psi: F) -> Result<Self> {
        if n < 2 || !(dx > T::zero()) {
            return Err(Error::InvalidGrid("kernel needs n >= 2 and dx > 0".into()));
        }
        let vals: Vec<(T, T)> = (0..n).map(|i| psi(x_min + T::of_usize(i) * dx)).collect();
        let mut log_mag = Vec::with_capacity(n * n);
        let mut phase = Vec::with_capacity(n * n);
        for &(lx, px) in &vals {
            for &(ly, py) in &vals {
                log_mag.push(lx + ly);
                phase.push(px - py);
            }
        }
        Ok(Self {
            x_min,
            dx,
            n,
            log_mag,
            phase,
            time: T::zero(),
        })
    }

    /// Kernel from row-major log-magnitudes and phases.
    pub fn from_parts(
        x_min: T,
        dx: T,
        n: usize,
        log_mag: Vec<T>,
        phase: Vec<T>,
        time: T,
    ) -> Result<Self> {
        if n < 2 || !(dx > T::zero()) || log_mag.len() != n * n || phase.len() != n * n {
            return Err(Error::InvalidGrid(
                "kernel parts do not form an n x n grid".into(),
            ));
        }
        Ok(Self {
            x_min,
            dx,
            n,
            log_mag,
            phase,
            time,
        })
    }

    /// Pure state with real amplitude `sqrt` of the density of `mu`.
    pub fn from_measure(mu: &GridMeasure<T>) -> Result<Self> {
        let half = T::of(0.5);
        let lw = mu.log_weights().to_vec();
        let x0 = mu.x_min();
        let dx = mu.dx();
        Self::pure_state(x0, dx, mu.n_points(), |x| {
            let i = ((x - x0) / dx).round().to_usize().unwrap_or(0);
            (lw[i] * half, T::zero())
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x(&self, i: usize) -> T {
        self.x_min + T::of_usize(i) * self.dx
    }

    pub fn log_magnitude(&self, i: usize, j: usize) -> T {
        self.log_mag[i * self.n + j]
    }

    pub fn phase(&self, i: usize, j: usize) -> T {
        self.phase[i * self.n + j]
    }

    pub fn value(&self, i: usize, j: usize) -> Complex<T> {
        Complex::from_polar(self.log_magnitude(i, j).exp(), self.phase(i, j))
    }

    /// Largest `|ρ(x,y) - conj ρ(y,x)|`, relative to the largest entry.
    pub fn hermiticity_defect(&self) -> T {
        let scale = self.log_mag.iter().copied().fold(T::neg_infinity(), T::max);
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in 0..=i {
                let a = self.value_scaled(i, j, scale);
                let b = self.value_scaled(j, i, scale).conj();
                worst = worst.max((a - b).norm());
            }
        }
        worst
    }

    fn value_scaled(&self, i: usize, j: usize, log_scale: T) -> Complex<T> {
        Complex::from_polar(
            (self.log_magnitude(i, j) - log_scale).exp(),
            self.phase(i, j),
        )
    }

    /// `log ∫ ρ(x, x) dx`.
    pub fn log_trace(&self) -> T {
        let diag: Vec<T> = (0..self.n).map(|i| self.log_magnitude(i, i)).collect();
        let max = diag.iter().copied().fold(T::neg_infinity(), T::max);
        if max == T::neg_infinity() {
            return max;
        }
        let s: CompensatedSum<T> = diag.iter().map(|&d| (d - max).exp()).collect();
        max + (s.value() * self.dx).ln()
    }

    /// Normalized diagonal `ρ(x, x) dx / Z`.
    pub fn diagonal_measure(&self) -> Result<GridMeasure<T>> {
        let lw = (0..self.n).map(|i| self.log_magnitude(i, i)).collect();
        GridMeasure::from_log_weights(self.x_min, self.dx, lw)?.normalized()
    }
}

/// `ρ̂_t(x,y) = ρ0(x,y) exp(-γ²t(x²+y²) + γ(x+y)S_t)` and `log Z_t`, where
/// `Z_t = ∫ dμ0(x) exp(-2γ²tx² + 2γxS_t)` with `μ0` the normalized diagonal of
/// `ρ0` (so `Z_0 = 1`).
pub fn kernel_closed_form<T: Real>(
    rho0: &KernelSnapshot<T>,
    s_t: T,
    t: T,
    gamma: T,
) -> Result<(KernelSnapshot<T>, T)> {
    if !(t >= T::zero()) {
        return Err(Error::config("t", format!("must be non-negative, got {t}")));
    }
    let mut out = rho0.clone();
    let n = rho0.n;
    let g2t = gamma * gamma * t;
    for i in 0..n {
        let x = rho0.x(i);
        for j in 0..n {
            let y = rho0.x(j);
            let k = i * n + j;
            out.log_mag[k] = rho0.log_mag[k] - g2t * (x * x + y * y) + gamma * (x + y) * s_t;
        }
    }
    out.time = rho0.time + t;
    let log_z = out.log_trace() - rho0.log_trace();
    Ok((out, log_z))
}

/// Accumulated residual of the linear kernel SDE
/// `dρ̂ = -(γ²/2)(x-y)²ρ̂ dt + γ(x+y)ρ̂ dS` when the closed form is evaluated
/// along the piecewise-constant signal with increments `ds`:
/// `sup_{x,y} |ρ̂_T - ρ̂_0 - Σ_k RHS_k|`. With `dS² = dt` on every step it
/// decays at first order in `dt`.
pub fn hat_rho_residual<T: Real>(rho0: &KernelSnapshot<T>, ds: &[T], dt: T, gamma: T) -> Result<T> {
    let n = rho0.n;
    let half = T::of(0.5);
    let g2 = gamma * gamma;
    let mut worst = T::zero();
    for i in 0..n {
        let x = rho0.x(i);
        for j in 0..n {
            let y = rho0.x(j);
            let mag0 = rho0.log_magnitude(i, j).exp();
            if mag0 == T::zero() {
                continue;
            }
            // Work with the real ratio ρ̂_t / ρ0; the phase never changes.
            let ratio = |s: T, t: T| (-g2 * t * (x * x + y * y) + gamma * (x + y) * s).exp();
            let mut rhs = CompensatedSum::new();
            let mut s = T::zero();
            for (k, &d) in ds.iter().enumerate() {
                let r = ratio(s, T::of_usize(k) * dt);
                rhs.add(-g2 * half * (x - y) * (x - y) * r * dt + gamma * (x + y) * r * d);
                s = s + d;
            }
            let end = ratio(s, T::of_usize(ds.len()) * dt);
            let resid = (end - T::one() - rhs.value()).abs() * mag0;
            worst = worst.max(resid);
        }
    }
    Ok(worst)
}
