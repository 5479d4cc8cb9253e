//! Separated solutions of the monitored quantum-Laplacian kernel equation
//!
//! ```text
//! dρ = (D/2)(∂x+∂y)²ρ dt - (γ²/2)(x-y)²ρ dt + γ(x+y-2⟨X⟩)ρ dW,
//! ```
//!
//! of the form `ρ_t(x,y) = σ0((x-y)/2) exp(-(γ²/2)(x-y)²t) μ̃_t((x+y)/2)`,
//! where `μ̃_t` is the density of the diagonal measure.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::lindblad::{LindbladSpec, MonitoredDiffusion};
use crate::measure::GridMeasure;
use crate::qnd::KernelSnapshot;
use crate::scalar::{log_add_exp, Real};
use crate::sde::{sample_rademacher_noise, RngStream, TimeGrid};
use crate::stats::par_paths;

fn check_sigma0<T: Real>(sigma0: &dyn Fn(T) -> Complex<T>) -> Result<()> {
    let s = sigma0(T::zero());
    if (s - Complex::new(T::one(), T::zero())).norm() > T::of(1e-12) {
        return Err(Error::config(
            "sigma0",
            format!("sigma0(0) must be 1, got {s}"),
        ));
    }
    Ok(())
}

/// Assemble the separated kernel at time `t` on the grid of `mu_t`. When
/// `(x+y)/2` falls between nodes the density is interpolated linearly.
pub fn separated_kernel<T: Real>(
    sigma0: &dyn Fn(T) -> Complex<T>,
    mu_t: &GridMeasure<T>,
    gamma: T,
    t: T,
) -> Result<KernelSnapshot<T>> {
    check_sigma0(sigma0)?;
    let n = mu_t.n_points();
    let lw = mu_t.log_weights();
    let half = T::of(0.5);
    let ln2 = T::LN_2();
    let mut log_mag = Vec::with_capacity(n * n);
    let mut phase = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let u = (mu_t.x(i) - mu_t.x(j)) * half;
            let s = sigma0(u);
            let centre = if (i + j) % 2 == 0 {
                lw[(i + j) / 2]
            } else {
                log_add_exp(lw[(i + j) / 2], lw[(i + j) / 2 + 1]) - ln2
            };
            let diff = mu_t.x(i) - mu_t.x(j);
            log_mag.push(s.norm().ln() - half * gamma * gamma * diff * diff * t + centre);
            phase.push(s.arg());
        }
    }
    KernelSnapshot::from_parts(mu_t.x_min(), mu_t.dx(), n, log_mag, phase, t)
}

/// Accumulated residual `sup |ρ_T - ρ_0 - Σ_k RHS_k|` of the kernel equation
/// for the separated kernel assembled along `(μ̃_{t_k}, dW_k)`. Only entries
/// whose centre `(x+y)/2` is a grid node at distance >= 2 from the boundary
/// are used, so the discrete `(∂x+∂y)²` coincides with the second difference
/// of `μ̃` applied by the diffusion step.
pub fn separated_residual<T: Real>(
    sigma0: &dyn Fn(T) -> Complex<T>,
    measures: &[GridMeasure<T>],
    dws: &[T],
    dt: T,
    gamma: T,
    d: T,
) -> Result<T> {
    check_sigma0(sigma0)?;
    if measures.len() != dws.len() + 1 || measures.is_empty() {
        return Err(Error::config(
            "measures",
            "need one more measure than increments",
        ));
    }
    let mu0 = &measures[0];
    let n = mu0.n_points();
    if n < 5 {
        return Err(Error::InvalidGrid("need at least 5 nodes".into()));
    }
    let dx = mu0.dx();
    let two = T::of(2.0);
    let half = T::of(0.5);
    let g2 = gamma * gamma;
    // Entries indexed by centre node l and half-offset h (x - y = 2h dx).
    let entries: Vec<(usize, usize)> = (2..n - 2)
        .flat_map(|l| (0..=l.min(n - 1 - l)).map(move |h| (l, h)))
        .collect();
    let gauss = |h: usize, t: T| {
        let sep = two * T::of_usize(h) * dx;
        (-half * g2 * sep * sep * t).exp()
    };
    let densities =
        |mu: &GridMeasure<T>| -> Vec<T> { mu.log_weights().iter().map(|w| w.exp()).collect() };
    let mut acc = vec![T::zero(); entries.len()];
    for (k, &dw) in dws.iter().enumerate() {
        let mu = &measures[k];
        let p = densities(mu);
        let m = mu.mean()?;
        let t = T::of_usize(k) * dt;
        for (e, &(l, h)) in entries.iter().enumerate() {
            let g = gauss(h, t);
            let sep = two * T::of_usize(h) * dx;
            let lap = (p[l + 1] - two * p[l] + p[l - 1]) / (dx * dx);
            let x = mu.x(l);
            acc[e] = acc[e] + half * d * g * lap * dt - half * g2 * sep * sep * g * p[l] * dt
                + gamma * (two * x - two * m) * g * p[l] * dw;
        }
    }
    let p0 = densities(mu0);
    let pn = densities(&measures[dws.len()]);
    let t_end = T::of_usize(dws.len()) * dt;
    let mut worst = T::zero();
    for (e, &(l, h)) in entries.iter().enumerate() {
        let u = T::of_usize(h) * dx;
        let amp = sigma0(u).norm().max(sigma0(-u).norm());
        let r = gauss(h, t_end) * pn[l] - p0[l] - acc[e];
        worst = worst.max(r.abs() * amp);
    }
    Ok(worst)
}

/// RMS over `n_paths` of the separated-kernel residual for the monitored
/// quantum Laplacian, driven by `±√dt` innovations (so `dW² = dt` exactly),
/// for each step size in `dts`.
#[allow(clippy::too_many_arguments)]
pub fn separated_residual_study<T: Real>(
    sigma0: &(dyn Fn(T) -> Complex<T> + Sync),
    mu0: &GridMeasure<T>,
    d: T,
    gamma: T,
    horizon: T,
    dts: &[T],
    n_paths: usize,
    base: RngStream,
) -> Result<Vec<T>> {
    let spec = LindbladSpec::quantum_laplacian(d)?;
    dts.iter()
        .map(|&dt| {
            let n_steps = (horizon / dt).round().to_usize().unwrap_or(0);
            let grid = TimeGrid::new(T::zero(), dt, n_steps)?;
            let stepper = MonitoredDiffusion::new(&spec, gamma, dt, mu0)?;
            let sq: Vec<Result<T>> = par_paths(n_paths, base, |stream| {
                let noise = sample_rademacher_noise(grid, stream);
                let mut ms = Vec::with_capacity(n_steps + 1);
                stepper.run(mu0, &noise, |_, mu, _| ms.push(mu.clone()))?;
                let r = separated_residual(sigma0, &ms, noise.increments(), dt, gamma, d)?;
                Ok(r * r)
            });
            let mut total = T::zero();
            for r in sq {
                total = total + r?;
            }
            Ok((total / T::of_usize(n_paths)).sqrt())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::convergence_order_fit;

    fn sigma0(u: f64) -> Complex<f64> {
        Complex::from_polar((-u * u / 2.0).exp(), 0.7 * u)
    }

    #[test]
    fn diagonal_is_the_measure_density() {
        let mu = GridMeasure::<f64>::gaussian(-2.0, 0.1, 41, 0.3, 0.5).unwrap();
        let k = separated_kernel(&sigma0, &mu, 2.0, 0.4).unwrap();
        for i in 0..41 {
            assert!((k.value(i, i).re - mu.density(i)).abs() < 1e-12);
        }
        assert!(k.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn sigma0_must_be_normalized() {
        let mu = GridMeasure::<f64>::gaussian(-2.0, 0.1, 41, 0.3, 0.5).unwrap();
        let bad = |u: f64| Complex::new(2.0 + u, 0.0);
        assert!(separated_kernel(&bad, &mu, 1.0, 0.0).is_err());
    }

    #[test]
    fn residual_decays_at_first_order() {
        let mu0 = GridMeasure::<f64>::gaussian(-3.0, 0.1, 61, 0.0, 0.5).unwrap();
        let dts = [4e-3, 2e-3, 1e-3, 5e-4];
        let rms = separated_residual_study(
            &sigma0,
            &mu0,
            1.0,
            1.0,
            0.4,
            &dts,
            16,
            RngStream::new(21, 0),
        )
        .unwrap();
        assert!(rms.windows(2).all(|w| w[1] < w[0]), "{rms:?}");
        let fit = convergence_order_fit(&dts, &rms).unwrap();
        assert!(fit.slope >= 0.8, "slope {} {rms:?}", fit.slope);
    }
}
