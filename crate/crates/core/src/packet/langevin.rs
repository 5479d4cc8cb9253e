//! The Langevin limit `dx = v dt`, `dv = -(1/m)V'(x) dt + √ε dW` and its
//! comparison with the packet SDE under the double scaling `ω → ∞`,
//! `ℓ → 0`, `ε = ω³ℓ²` fixed.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::packet::{
    a_infinity, packet_dispersions, packet_step, GaussianPacket, PhysicalScales, Potential,
};
use crate::scalar::Real;
use crate::sde::{sample_noise, NoisePath, RngStream, TimeGrid};
use crate::stats::{ks_two_sample, par_paths, MeanEstimate};

/// Semi-explicit Euler step: the position moves with the pre-step velocity.
pub fn langevin_step<T: Real>(
    x: T,
    v: T,
    pot: &Potential<T>,
    m: T,
    eps: T,
    dt: T,
    dw: T,
) -> (T, T) {
    (x + v * dt, v - pot.d1(x) / m * dt + eps.sqrt() * dw)
}

/// `(t, x, v)` along the whole noise path.
pub fn langevin_trajectory<T: Real>(
    x0: T,
    v0: T,
    pot: &Potential<T>,
    m: T,
    eps: T,
    noise: &NoisePath<T>,
) -> Vec<(T, T, T)> {
    let grid = noise.grid();
    let mut out = Vec::with_capacity(noise.len() + 1);
    let (mut x, mut v) = (x0, v0);
    out.push((grid.time(0), x, v));
    for (k, &dw) in noise.increments().iter().enumerate() {
        (x, v) = langevin_step(x, v, pot, m, eps, grid.dt(), dw);
        out.push((grid.time(k + 1), x, v));
    }
    out
}

/// `x_t = x0 cos Ωt + (√ε/Ω) Σ_{s<t} sin(Ω(t-s)) dW_s` at every grid time,
/// with `v0 = 0`. The convolution is carried as two running sums.
pub fn langevin_harmonic_exact<T: Real>(
    x0: T,
    big_omega: T,
    eps: T,
    path: &NoisePath<T>,
) -> Result<Vec<T>> {
    if !(big_omega > T::zero()) {
        return Err(Error::config("big_omega", "must be positive"));
    }
    let grid = path.grid();
    let amp = eps.sqrt() / big_omega;
    let (mut c, mut s) = (T::zero(), T::zero());
    let mut out = Vec::with_capacity(path.len() + 1);
    for k in 0..=path.len() {
        let t = grid.elapsed(k);
        let (sn, cs) = (big_omega * t).sin_cos();
        out.push(x0 * cs + amp * (sn * c - cs * s));
        if k < path.len() {
            let dw = path.increments()[k];
            c = c + dw * cs;
            s = s + dw * sn;
        }
    }
    Ok(out)
}

/// `(ε/Ω²)(2Ωt - sin 2Ωt)/(4Ω)`; a series is used for small `Ωt`.
pub fn variance_closed_form<T: Real>(t: T, big_omega: T, eps: T) -> T {
    let u = T::of(2.0) * big_omega * t;
    let core = if u.abs() < T::of(1e-2) {
        let u3 = u * u * u;
        u3 / T::of(6.0) - u3 * u * u / T::of(120.0) + u3 * u3 * u / T::of(5040.0)
    } else {
        u - u.sin()
    };
    eps / (big_omega * big_omega) * core / (T::of(4.0) * big_omega)
}

/// Long-time form `εt/(2Ω²)`.
pub fn variance_long_time<T: Real>(t: T, big_omega: T, eps: T) -> T {
    eps * t / (T::of(2.0) * big_omega * big_omega)
}

/// Short-time form `εt³/3`, exact for a free particle.
pub fn variance_short_time<T: Real>(t: T, eps: T) -> T {
    eps * t * t * t / T::of(3.0)
}

pub fn write_langevin_csv<T: Real, W: Write>(mut w: W, rows: &[(T, T, T)]) -> io::Result<()> {
    writeln!(w, "t,x,v")?;
    for (t, x, v) in rows {
        writeln!(w, "{t},{x},{v}")?;
    }
    Ok(())
}

/// How `ℓ` follows `ω` in the study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EllMode<T> {
    /// `ℓ² = ε/ω³`.
    FixedEps,
    /// Negative control: `ℓ` held fixed, so `ε = ω³ℓ²` grows.
    FixedEll(T),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoubleScalingConfig<T> {
    pub big_omega: T,
    pub eps: T,
    pub horizon: T,
    pub n_paths: usize,
    pub x0: T,
    pub v0: T,
    /// Step size in units of `1/ω`; at most `1e-2`.
    pub dt_omega: T,
    pub ell_mode: EllMode<T>,
    pub base: RngStream,
}

impl<T: Real> DoubleScalingConfig<T> {
    pub fn new(big_omega: T, eps: T, horizon: T, n_paths: usize, base: RngStream) -> Self {
        Self {
            big_omega,
            eps,
            horizon,
            n_paths,
            x0: T::of(2.0),
            v0: T::zero(),
            dt_omega: T::of(1e-2),
            ell_mode: EllMode::FixedEps,
            base,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoubleScalingRow<T> {
    pub omega: T,
    pub ell: T,
    pub sigma_x: T,
    pub expected_sigma_x: T,
    /// KS distance between packet and Langevin endpoints driven by the same noise.
    pub ks_matched: T,
    /// KS distance against a Langevin ensemble on independent streams.
    pub ks_independent: T,
    pub ks_critical: T,
    pub sup_diff: MeanEstimate<T>,
    pub sup_diff_max: T,
    /// Steps at which the smooth / cubic validity flags failed, over all paths.
    pub flag_failures: (usize, usize),
}

impl<T: Real> DoubleScalingRow<T> {
    pub fn write_csv<W: Write>(rows: &[Self], mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "omega,ell,sigma_x,expected_sigma_x,ks_matched,ks_independent,ks_critical,sup_diff_mean,sup_diff_se,sup_diff_max,flag_smooth_failures,flag_cubic_failures"
        )?;
        for r in rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.omega,
                r.ell,
                r.sigma_x,
                r.expected_sigma_x,
                r.ks_matched,
                r.ks_independent,
                r.ks_critical,
                r.sup_diff.mean,
                r.sup_diff.std_error,
                r.sup_diff_max,
                r.flag_failures.0,
                r.flag_failures.1
            )?;
        }
        Ok(())
    }
}

/// Packet SDE versus its Langevin limit for each `ω`. Both start from
/// `(x0, v0)`, the packet at `a = a_∞`.
pub fn double_scaling_study<T: Real>(
    cfg: &DoubleScalingConfig<T>,
    omegas: &[T],
) -> Result<Vec<DoubleScalingRow<T>>> {
    if cfg.dt_omega > T::of(1e-2) * (T::one() + T::of(1e-12)) || !(cfg.dt_omega > T::zero()) {
        return Err(Error::config(
            "dt",
            format!("dt = {}/ω exceeds 1e-2/ω", cfg.dt_omega),
        ));
    }
    if !(cfg.horizon > T::zero()) || !(cfg.eps >= T::zero()) {
        return Err(Error::config(
            "horizon",
            "horizon must be positive and eps non-negative",
        ));
    }
    let pot = Potential::harmonic(T::one(), cfg.big_omega);
    omegas
        .iter()
        .map(|&omega| {
            let ell = match cfg.ell_mode {
                EllMode::FixedEps => (cfg.eps / omega.powi(3)).sqrt(),
                EllMode::FixedEll(l) => l,
            };
            let scales = PhysicalScales::from_omega_ell(omega, ell)?;
            let eps = scales.eps();
            let dt = cfg.dt_omega / omega;
            let n_steps = (cfg.horizon / dt).ceil().to_usize().unwrap_or(0);
            let grid = TimeGrid::new(T::zero(), cfg.horizon / T::of_usize(n_steps), n_steps)?;
            let p0 = GaussianPacket::new(a_infinity(&scales, cfg.big_omega), cfg.x0, cfg.v0)?;

            let paths: Vec<Result<(T, T, T, (usize, usize))>> =
                par_paths(cfg.n_paths, cfg.base, |stream| {
                    let noise = sample_noise(grid, stream);
                    let (mut p, mut x, mut v) = (p0, cfg.x0, cfg.v0);
                    let mut sup = T::zero();
                    let mut bad = (0usize, 0usize);
                    for (k, &dw) in noise.increments().iter().enumerate() {
                        let (next, flags) =
                            packet_step(&p, &pot, &scales, grid.dt(), dw).map_err(|e| match e {
                                Error::Integration { reason, .. } => {
                                    Error::Integration { step: k, reason }
                                }
                                other => other,
                            })?;
                        bad.0 += usize::from(!flags.smooth);
                        bad.1 += usize::from(!flags.cubic);
                        p = next;
                        (x, v) = langevin_step(x, v, &pot, T::one(), eps, grid.dt(), dw);
                        sup = sup.max((p.xbar - x).abs());
                    }
                    Ok((p.xbar, x, sup, bad))
                });
            let mut packet_end = Vec::with_capacity(cfg.n_paths);
            let mut matched_end = Vec::with_capacity(cfg.n_paths);
            let mut sups = Vec::with_capacity(cfg.n_paths);
            let mut bad = (0usize, 0usize);
            for r in paths {
                let (xp, xl, s, b) = r?;
                packet_end.push(xp);
                matched_end.push(xl);
                sups.push(s);
                bad.0 += b.0;
                bad.1 += b.1;
            }
            let independent: Vec<T> = par_paths(cfg.n_paths, cfg.base.family(0x1D), |stream| {
                let noise = sample_noise(grid, stream);
                langevin_trajectory(cfg.x0, cfg.v0, &pot, T::one(), eps, &noise)
                    .last()
                    .map(|r| r.1)
                    .unwrap_or(cfg.x0)
            });
            let ks_m = ks_two_sample(&packet_end, &matched_end)?;
            let ks_i = ks_two_sample(&packet_end, &independent)?;
            Ok(DoubleScalingRow {
                omega,
                ell,
                sigma_x: packet_dispersions(&p0, &scales).sigma_x,
                expected_sigma_x: T::of(2f64.powf(-0.25)) * ell,
                ks_matched: ks_m.statistic,
                ks_independent: ks_i.statistic,
                ks_critical: ks_i.critical,
                sup_diff_max: sups.iter().copied().fold(T::zero(), T::max),
                sup_diff: MeanEstimate::from_samples(&sups),
                flag_failures: bad,
            })
        })
        .collect()
}
