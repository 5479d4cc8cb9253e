//! Monitored Gaussian wave packets.
//!
//! The un-normalized wave function `φ_t(x) = exp(-a_t(x - x̄_t)² + i k̄_t x + …)`
//! stays Gaussian for potentials that are locally quadratic; the complex width
//! `a` collapses on the time scale `1/ω` to a fixed point `a_∞`, while the
//! mean position and velocity follow a stochastic Newton equation.

pub mod langevin;

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use langevin::{
    double_scaling_study, langevin_harmonic_exact, langevin_step, langevin_trajectory,
    variance_closed_form, variance_long_time, variance_short_time, write_langevin_csv,
    DoubleScalingConfig, DoubleScalingRow, EllMode,
};

/// Mass, Planck constant and monitoring rate, with the derived scales
/// `ℓ⁴ = ħ/(mγ²)`, `ω² = ħγ²/m`, `ε = (ħγ/m)² = ω³ℓ²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalScales<T> {
    pub m: T,
    pub hbar: T,
    pub gamma: T,
}

impl<T: Real> PhysicalScales<T> {
    pub fn new(m: T, hbar: T, gamma: T) -> Result<Self> {
        for (key, v) in [("m", m), ("hbar", hbar), ("gamma", gamma)] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::config(
                    key,
                    format!("must be finite and positive, got {v}"),
                ));
            }
        }
        Ok(Self { m, hbar, gamma })
    }

    /// Unit mass with `γ = √ω/ℓ` and `ħ = ωℓ²`.
    pub fn from_omega_ell(omega: T, ell: T) -> Result<Self> {
        if !(omega > T::zero()) || !(ell > T::zero()) {
            return Err(Error::config("omega", "omega and ell must be positive"));
        }
        Self::new(T::one(), omega * ell * ell, omega.sqrt() / ell)
    }

    pub fn ell(&self) -> T {
        (self.hbar / (self.m * self.gamma * self.gamma))
            .sqrt()
            .sqrt()
    }

    pub fn omega(&self) -> T {
        (self.hbar * self.gamma * self.gamma / self.m).sqrt()
    }

    pub fn eps(&self) -> T {
        let r = self.hbar * self.gamma / self.m;
        r * r
    }

    /// `ħ/m`.
    pub fn hbar_over_m(&self) -> T {
        self.hbar / self.m
    }
}

type RealFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// External potential with derivatives up to third order.
#[derive(Clone)]
pub enum Potential<T> {
    Free,
    /// `½ m Ω² x²`.
    Harmonic {
        m: T,
        big_omega: T,
    },
    Smooth {
        v: RealFn<T>,
        dv: RealFn<T>,
        ddv: RealFn<T>,
        dddv: RealFn<T>,
    },
}

impl<T: Real> Potential<T> {
    pub fn harmonic(m: T, big_omega: T) -> Self {
        Self::Harmonic { m, big_omega }
    }

    pub fn smooth(
        v: impl Fn(T) -> T + Send + Sync + 'static,
        dv: impl Fn(T) -> T + Send + Sync + 'static,
        ddv: impl Fn(T) -> T + Send + Sync + 'static,
        dddv: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self::Smooth {
            v: Arc::new(v),
            dv: Arc::new(dv),
            ddv: Arc::new(ddv),
            dddv: Arc::new(dddv),
        }
    }

    /// `½ m Ω² x² + λ x⁴`.
    pub fn anharmonic(m: T, big_omega: T, lambda: T) -> Self {
        let k = m * big_omega * big_omega;
        let half = T::of(0.5);
        Self::smooth(
            move |x| half * k * x * x + lambda * x.powi(4),
            move |x| k * x + T::of(4.0) * lambda * x.powi(3),
            move |x| k + T::of(12.0) * lambda * x * x,
            move |x| T::of(24.0) * lambda * x,
        )
    }

    pub fn value(&self, x: T) -> T {
        match self {
            Self::Free => T::zero(),
            Self::Harmonic { m, big_omega } => T::of(0.5) * *m * *big_omega * *big_omega * x * x,
            Self::Smooth { v, .. } => v(x),
        }
    }

    pub fn d1(&self, x: T) -> T {
        match self {
            Self::Free => T::zero(),
            Self::Harmonic { m, big_omega } => *m * *big_omega * *big_omega * x,
            Self::Smooth { dv, .. } => dv(x),
        }
    }

    pub fn d2(&self, x: T) -> T {
        match self {
            Self::Free => T::zero(),
            Self::Harmonic { m, big_omega } => *m * *big_omega * *big_omega,
            Self::Smooth { ddv, .. } => ddv(x),
        }
    }

    pub fn d3(&self, x: T) -> T {
        match self {
            Self::Free | Self::Harmonic { .. } => T::zero(),
            Self::Smooth { dddv, .. } => dddv(x),
        }
    }

    /// Finite evaluators at every point of `xs`.
    pub fn check_finite_on(&self, xs: impl IntoIterator<Item = T>) -> Result<()> {
        for x in xs {
            if ![self.value(x), self.d1(x), self.d2(x), self.d3(x)]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(Error::config("potential", format!("not finite at x = {x}")));
            }
        }
        Ok(())
    }
}

impl<T: fmt::Debug> fmt::Debug for Potential<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Free => f.write_str("Free"),
            Self::Harmonic { m, big_omega } => f
                .debug_struct("Harmonic")
                .field("m", m)
                .field("big_omega", big_omega)
                .finish(),
            Self::Smooth { .. } => f.write_str("Smooth"),
        }
    }
}

/// Width parameter, mean position and mean velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianPacket<T> {
    pub a: Complex<T>,
    pub xbar: T,
    pub vbar: T,
}

impl<T: Real> GaussianPacket<T> {
    pub fn new(a: Complex<T>, xbar: T, vbar: T) -> Result<Self> {
        if !(a.re > T::zero()) {
            return Err(Error::config(
                "a",
                format!("Re(a) must be positive, got {a}"),
            ));
        }
        Ok(Self { a, xbar, vbar })
    }

    /// Mean wave vector `k̄ = m v̄ / ħ`.
    pub fn kbar(&self, scales: &PhysicalScales<T>) -> T {
        scales.m * self.vbar / scales.hbar
    }
}

/// Fixed point of the width drift for a constant curvature `V''`:
/// `a² = (m / 2iħ)(γ² + iV''/2ħ)`, principal branch.
pub fn a_infinity_at<T: Real>(scales: &PhysicalScales<T>, curvature: T) -> Complex<T> {
    let i = Complex::new(T::zero(), T::one());
    let two = T::of(2.0);
    let rhs = (Complex::new(scales.gamma * scales.gamma, T::zero())
        + i * curvature / (two * scales.hbar))
        / (i * two * scales.hbar_over_m());
    rhs.sqrt()
}

/// Fixed point for `V = ½mΩ²x²`: `a∞ = ((1/2iℓ⁴)(1 + iΩ²/2ω²))^{1/2}`.
pub fn a_infinity<T: Real>(scales: &PhysicalScales<T>, big_omega: T) -> Complex<T> {
    a_infinity_at(scales, scales.m * big_omega * big_omega)
}

/// The harmonic closed form with `Ω²/ω²` in place of `Ω²/2ω²`. It agrees
/// with [`a_infinity`] at `Ω = 0` only and is not a fixed point otherwise.
pub fn a_infinity_displayed<T: Real>(ell: T, omega: T, big_omega: T) -> Complex<T> {
    let i = Complex::new(T::zero(), T::one());
    let r = big_omega / omega;
    let l4 = ell.powi(4);
    ((Complex::new(T::one(), T::zero()) + i * r * r) / (i * T::of(2.0) * l4)).sqrt()
}

/// `γ² - 2i(ħ/m)a² + (i/2ħ)V''`.
pub fn a_drift<T: Real>(a: Complex<T>, scales: &PhysicalScales<T>, curvature: T) -> Complex<T> {
    let i = Complex::new(T::zero(), T::one());
    let two = T::of(2.0);
    Complex::new(scales.gamma * scales.gamma, T::zero()) - i * two * scales.hbar_over_m() * a * a
        + i * curvature / (two * scales.hbar)
}

/// Harmonic drift in `(ω, ℓ)` units: `ℓ⁻²(1 - 2iℓ⁴a² + iΩ²/2ω²)ω`.
pub fn a_drift_omega_ell<T: Real>(a: Complex<T>, omega: T, ell: T, big_omega: T) -> Complex<T> {
    let i = Complex::new(T::zero(), T::one());
    let two = T::of(2.0);
    let r = big_omega / omega;
    (Complex::new(T::one(), T::zero()) - i * two * ell.powi(4) * a * a + i * r * r / two) * omega
        / (ell * ell)
}

/// Noise amplitudes `(x, v)` of the packet SDE, both driven by the same `dW`:
/// `γ/(2a^R)` and `-γħa^I/(m a^R)`.
pub fn noise_coefficients<T: Real>(a: Complex<T>, scales: &PhysicalScales<T>) -> (T, T) {
    let g = scales.gamma;
    (
        g / (T::of(2.0) * a.re),
        -g * scales.hbar_over_m() * a.im / a.re,
    )
}

/// The same amplitudes in `(ω, ℓ)` units: `√ω/(2ℓa^R)` and `-ℓω^{3/2} a^I/a^R`.
pub fn noise_coefficients_omega_ell<T: Real>(a: Complex<T>, omega: T, ell: T) -> (T, T) {
    (
        omega.sqrt() / (T::of(2.0) * ell * a.re),
        -ell * omega.powf(T::of(1.5)) * a.im / a.re,
    )
}

/// Advisory validity of the locally quadratic approximation at `x̄`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Validity {
    /// `|V''| < 0.1 ħγ²`.
    pub smooth: bool,
    /// `ℓ|V'''| < 0.1|V''|`, or `V''' = 0`.
    pub cubic: bool,
}

pub fn validity_at<T: Real>(pot: &Potential<T>, scales: &PhysicalScales<T>, x: T) -> Validity {
    let d2 = pot.d2(x);
    let d3 = pot.d3(x);
    let tenth = T::of(0.1);
    Validity {
        smooth: d2.abs() < tenth * scales.hbar * scales.gamma * scales.gamma,
        cubic: d3 == T::zero() || scales.ell() * d3.abs() < tenth * d2.abs(),
    }
}

/// Euler–Maruyama step of `(a, x̄, v̄)`; flags are evaluated at the pre-step
/// mean position.
pub fn packet_step<T: Real>(
    p: &GaussianPacket<T>,
    pot: &Potential<T>,
    scales: &PhysicalScales<T>,
    dt: T,
    dw: T,
) -> Result<(GaussianPacket<T>, Validity)> {
    let flags = validity_at(pot, scales, p.xbar);
    let (nx, nv) = noise_coefficients(p.a, scales);
    let a = p.a + a_drift(p.a, scales, pot.d2(p.xbar)) * dt;
    if !(a.re > T::zero()) || !a.im.is_finite() {
        return Err(Error::Integration {
            step: 0,
            reason: format!(
                "Re(a) = {} after step; dt too large for the collapse rate",
                a.re
            ),
        });
    }
    let next = GaussianPacket {
        a,
        xbar: p.xbar + p.vbar * dt + nx * dw,
        vbar: p.vbar - pot.d1(p.xbar) / scales.m * dt + nv * dw,
    };
    Ok((next, flags))
}

/// Position and velocity dispersions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dispersions<T> {
    /// `2^{1/4}/√(4a^R)`, equal to `2^{-1/4}ℓ` at `a∞` (Ω = 0).
    pub sigma_x: T,
    /// `2^{-3/4}(ħ/m)|a|/√(a^R)`, equal to `2^{-3/4}ωℓ` at `a∞` (Ω = 0).
    pub sigma_v: T,
    /// Standard deviation of `|ψ|² ∝ exp(-2a^R(x-x̄)²)`.
    pub raw_sigma_x: T,
    /// Standard deviation of `(ħ/m)k` under `|ψ̂(k)|²`.
    pub raw_sigma_v: T,
}

pub fn packet_dispersions<T: Real>(
    p: &GaussianPacket<T>,
    scales: &PhysicalScales<T>,
) -> Dispersions<T> {
    let raw_x = (T::one() / (T::of(4.0) * p.a.re)).sqrt();
    let raw_v = scales.hbar_over_m() * p.a.norm() / p.a.re.sqrt();
    Dispersions {
        sigma_x: T::of(2.0f64.powf(0.25)) * raw_x,
        sigma_v: T::of(2.0f64.powf(-0.75)) * raw_v,
        raw_sigma_x: raw_x,
        raw_sigma_v: raw_v,
    }
}

/// One packet trajectory sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PacketRow<T> {
    pub t: T,
    pub packet: GaussianPacket<T>,
    pub sigma_x: T,
    pub flags: Validity,
}

/// Integrate the packet SDE along `dws`. Returns every state and the number
/// of steps at which each validity flag failed.
pub fn packet_trajectory<T: Real>(
    p0: GaussianPacket<T>,
    pot: &Potential<T>,
    scales: &PhysicalScales<T>,
    t0: T,
    dt: T,
    dws: &[T],
) -> Result<(Vec<PacketRow<T>>, (usize, usize))> {
    let mut rows = Vec::with_capacity(dws.len() + 1);
    let mut p = p0;
    let mut bad = (0usize, 0usize);
    for (k, &dw) in dws.iter().enumerate() {
        let (next, flags) = packet_step(&p, pot, scales, dt, dw).map_err(|e| match e {
            Error::Integration { reason, .. } => Error::Integration { step: k, reason },
            other => other,
        })?;
        bad.0 += usize::from(!flags.smooth);
        bad.1 += usize::from(!flags.cubic);
        rows.push(PacketRow {
            t: t0 + T::of_usize(k) * dt,
            packet: p,
            sigma_x: packet_dispersions(&p, scales).sigma_x,
            flags,
        });
        p = next;
    }
    rows.push(PacketRow {
        t: t0 + T::of_usize(dws.len()) * dt,
        packet: p,
        sigma_x: packet_dispersions(&p, scales).sigma_x,
        flags: validity_at(pot, scales, p.xbar),
    });
    Ok((rows, bad))
}

pub fn write_packet_csv<T: Real, W: Write>(mut w: W, rows: &[PacketRow<T>]) -> io::Result<()> {
    writeln!(w, "t,xbar,vbar,re_a,im_a,sigma_x,flag_smooth,flag_cubic")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.packet.xbar,
            r.packet.vbar,
            r.packet.a.re,
            r.packet.a.im,
            r.sigma_x,
            u8::from(r.flags.smooth),
            u8::from(r.flags.cubic)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> PhysicalScales<f64> {
        PhysicalScales::<f64>::from_omega_ell(1.0, 1.0).unwrap()
    }

    #[test]
    fn scale_identities() {
        let s = PhysicalScales::<f64>::new(1.7, 0.3, 2.9).unwrap();
        let (l, w) = (s.ell(), s.omega());
        assert!((l.powi(4) * s.m * s.gamma * s.gamma - s.hbar).abs() < 1e-12);
        assert!((w * w * s.m - s.hbar * s.gamma * s.gamma).abs() < 1e-12);
        assert!((s.eps() - w.powi(3) * l * l).abs() < 1e-12 * s.eps());
        assert!((w / (l * l) - s.gamma * s.gamma).abs() < 1e-12);
        let t = PhysicalScales::<f64>::from_omega_ell(30.0, 0.05).unwrap();
        assert!((t.omega() - 30.0).abs() < 1e-12 && (t.ell() - 0.05).abs() < 1e-14);
    }

    #[test]
    fn a_infinity_free_value() {
        let a = a_infinity(&unit(), 0.0);
        assert!((a - Complex::new(0.5, -0.5)).norm() < 1e-12);
        assert!((a_infinity_displayed(1.0, 1.0, 0.0) - a).norm() < 1e-12);
    }

    #[test]
    fn displayed_form_at_equal_frequencies() {
        let a = a_infinity_displayed(1.0f64, 1.0, 1.0);
        assert!(
            (a.re - 0.7769).abs() < 1e-4 && (a.im + 0.3218).abs() < 1e-4,
            "{a}"
        );
        let exact = Complex::from_polar(2f64.powf(-0.25), -std::f64::consts::PI / 8.0);
        assert!((a - exact).norm() < 1e-12);
    }

    #[test]
    fn fixed_point_residuals_vanish() {
        for (w, l, big) in [
            (1.0f64, 1.0, 0.0),
            (1.0, 1.0, 0.1),
            (10.0, 0.3, 1.0),
            (100.0, 0.01, 1.0),
        ] {
            let s = PhysicalScales::<f64>::from_omega_ell(w, l).unwrap();
            let a = a_infinity(&s, big);
            let scale = s.gamma * s.gamma;
            assert!(a_drift(a, &s, big * big).norm() <= 1e-12 * scale.max(1.0));
            assert!(a_drift_omega_ell(a, w, l, big).norm() <= 1e-12 * scale.max(1.0));
            assert!(a.re > 0.0);
        }
        // The displayed variant is off the fixed point once Ω ≠ 0.
        let a = a_infinity_displayed(1.0, 1.0, 0.5);
        assert!(a_drift(a, &unit(), 0.25).norm() > 1e-3);
    }

    #[test]
    fn coefficient_forms_agree() {
        for (w, l, big) in [(2.0f64, 0.7, 0.3), (50.0, 0.02, 1.0)] {
            let s = PhysicalScales::<f64>::from_omega_ell(w, l).unwrap();
            let a = Complex::new(0.8, -0.3) / (l * l);
            let d1 = a_drift(a, &s, big * big);
            let d2 = a_drift_omega_ell(a, w, l, big);
            assert!((d1 - d2).norm() <= 1e-12 * d1.norm());
            let (x1, v1) = noise_coefficients(a, &s);
            let (x2, v2) = noise_coefficients_omega_ell(a, w, l);
            assert!((x1 - x2).abs() <= 1e-12 * x1.abs() && (v1 - v2).abs() <= 1e-12 * v1.abs());
        }
    }

    #[test]
    fn free_packet_at_fixed_point_is_transported() {
        let s = unit();
        let p = GaussianPacket::<f64>::new(a_infinity(&s, 0.0), 0.3, 1.5).unwrap();
        let (q, _) = packet_step(&p, &Potential::Free, &s, 1e-3, 0.0).unwrap();
        assert!((q.a - p.a).norm() < 1e-12);
        assert!((q.xbar - (0.3 + 1.5e-3)).abs() < 1e-15);
        assert_eq!(q.vbar, 1.5);
    }

    #[test]
    fn collapse_transient_decays_within_five_collapse_times() {
        let omega = 4.0f64;
        let s = PhysicalScales::<f64>::from_omega_ell(omega, 0.5).unwrap();
        let ainf = a_infinity(&s, 0.0);
        let mut p = GaussianPacket::<f64>::new(ainf * 0.1, 0.0, 0.0).unwrap();
        let dt = 1e-4 / omega;
        let n = (5.0 / omega / dt).round() as usize;
        for _ in 0..n {
            p = packet_step(&p, &Potential::Free, &s, dt, 0.0).unwrap().0;
        }
        assert!((p.a - ainf).norm() < 0.05 * ainf.norm());
    }

    #[test]
    fn dispersions_follow_width_convention() {
        let s = unit();
        let p = GaussianPacket::<f64>::new(a_infinity(&s, 0.0), 0.0, 0.0).unwrap();
        let d = packet_dispersions(&p, &s);
        assert!((d.sigma_x - 2f64.powf(-0.25)).abs() < 1e-12);
        assert!((d.sigma_v - 2f64.powf(-0.75)).abs() < 1e-12);
        assert!((d.raw_sigma_x - 2f64.powf(-0.5)).abs() < 1e-12);
        let s2 = PhysicalScales::<f64>::from_omega_ell(7.0, 0.4).unwrap();
        let p2 = GaussianPacket::<f64>::new(a_infinity(&s2, 0.0), 0.0, 0.0).unwrap();
        let d2 = packet_dispersions(&p2, &s2);
        assert!((d2.sigma_v / d2.sigma_x - 7.0 / 2f64.sqrt()).abs() < 1e-12);
        let wide =
            GaussianPacket::<f64>::new(Complex::new(2.0 * p.a.re, p.a.im), 0.0, 0.0).unwrap();
        assert!((packet_dispersions(&wide, &s).sigma_x - d.sigma_x / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn noise_at_fixed_point() {
        let (w, l) = (9.0f64, 0.2);
        let s = PhysicalScales::<f64>::from_omega_ell(w, l).unwrap();
        let (nx, nv) = noise_coefficients(a_infinity(&s, 0.0), &s);
        assert!((nx - w.sqrt() * l).abs() < 1e-12);
        assert!((nv - s.eps().sqrt()).abs() < 1e-12);
    }

    #[test]
    fn validity_flags() {
        let s = PhysicalScales::<f64>::from_omega_ell(100.0, 0.01).unwrap();
        let pot = Potential::<f64>::anharmonic(1.0, 1.0, 0.1);
        let v = validity_at(&pot, &s, 0.5);
        assert!(v.smooth && v.cubic);
        let rough = PhysicalScales::<f64>::from_omega_ell(0.5, 1.0).unwrap();
        assert!(!validity_at(&Potential::<f64>::harmonic(1.0, 1.0), &rough, 0.0).smooth);
        assert!(validity_at(&Potential::<f64>::harmonic(1.0, 1.0), &rough, 0.0).cubic);
    }

    #[test]
    fn non_normalizable_packet_is_rejected() {
        assert!(GaussianPacket::<f64>::new(Complex::new(0.0, 1.0), 0.0, 0.0).is_err());
        let s = unit();
        let p = GaussianPacket::<f64>::new(Complex::new(1.0, -10.0), 0.0, 0.0).unwrap();
        // Re of the drift is γ² + 4(ħ/m)a^R a^I < 0 here; a unit step overshoots.
        assert!(packet_step(&p, &Potential::Free, &s, 1.0, 0.0).is_err());
    }

    #[test]
    fn packet_csv_columns() {
        let s = unit();
        let p = GaussianPacket::<f64>::new(a_infinity(&s, 1.0), 1.0, 0.0).unwrap();
        let (rows, _) = packet_trajectory(
            p,
            &Potential::<f64>::harmonic(1.0, 1.0),
            &s,
            0.0,
            1e-2,
            &[0.0, 0.1],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_packet_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "t,xbar,vbar,re_a,im_a,sigma_x,flag_smooth,flag_cubic"
        );
        assert_eq!(text.lines().count(), 4);
    }
}
