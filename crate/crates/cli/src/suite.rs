//! Acceptance criteria A1–A14. Each check is a pure function of a seed; a
//! failing check is retried once with a fresh seed.

use std::fmt::Write as _;
use std::io::Write as _;
use std::time::Instant;

use num_complex::Complex;
use qmon_core::lindblad::{strong_limit_sweep, LindbladSpec, MomentObservable, SweepConfig};
use qmon_core::packet::{
    a_drift, a_drift_omega_ell, a_infinity, a_infinity_displayed, double_scaling_study,
    langevin_harmonic_exact, langevin_step, langevin_trajectory, variance_closed_form,
    variance_long_time, variance_short_time, DoubleScalingConfig, DoubleScalingRow, PhysicalScales,
    Potential,
};
use qmon_core::qnd::{
    conditional_variance, girsanov_check, innovation_path, observe, posterior_closed_form,
    run_chain, sample_from, simulate_cheater, DiscreteChainConfig, QndScheme,
};
use qmon_core::sde::{sample_noise, standard_normal};
use qmon_core::stats::{
    convergence_order_fit, ks_two_sample, par_paths, pearson_correlation, with_one_retry,
    MeanEstimate,
};
use qmon_core::{GridMeasure, RngStream, TestFunction, TimeGrid};

use crate::error::CliResult;
use crate::experiments::Out;
use crate::manifest::{execute, replay, Manifest, RunRequest};

/// Outcome of one attempt.
#[derive(Clone, Debug, Default)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
    pub csv: Option<String>,
}

impl Check {
    fn error(e: impl std::fmt::Display) -> Self {
        Self {
            passed: false,
            detail: format!("error: {e}"),
            csv: None,
        }
    }
}

type CheckFn = fn(u64) -> Check;

pub const CRITERIA: [(&str, &str, CheckFn); 14] = [
    ("A1", "posterior oracle equivalence", a1),
    ("A2", "filtration equivalence in law", a2),
    ("A3", "Girsanov identity", a3),
    ("A4", "innovation is Brownian", a4),
    ("A5", "conditional-variance decay", a5),
    ("A6", "discrete-chain exchangeability and frequencies", a6),
    ("A7", "strong-measurement diffusion limit", a7),
    ("A8", "Lindblad to classical OU", a8),
    ("A9", "separated kernel residual", a9),
    ("A10", "a_inf fixed point", a10),
    ("A11", "Langevin variance law", a11),
    ("A12", "Euler vs exact harmonic solution", a12),
    ("A13", "double-scaling convergence", a13),
    ("A14", "determinism from manifest", a14),
];

#[derive(Clone, Debug)]
pub struct CriterionOutcome {
    pub id: &'static str,
    pub title: &'static str,
    pub passed: bool,
    pub retried: bool,
    pub detail: String,
    pub csv: Option<String>,
    pub seconds: f64,
}

impl CriterionOutcome {
    /// One-line summary, e.g. `A3   PASS  Girsanov identity: ...`.
    pub fn line(&self) -> String {
        format!(
            "{:<4} {}{}  {} ({:.1}s): {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            if self.retried { " (retried)" } else { "" },
            self.title,
            self.seconds,
            self.detail
        )
    }
}

fn criterion_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn run_criterion(id: &str, seed: u64) -> Option<CriterionOutcome> {
    let (index, &(id, title, f)) = CRITERIA.iter().enumerate().find(|(_, c)| c.0 == id)?;
    let start = Instant::now();
    let r = with_one_retry(criterion_seed(seed, index), |s| {
        let c = f(s);
        (c.passed, c)
    });
    Some(CriterionOutcome {
        id,
        title,
        passed: r.passed,
        retried: r.retried,
        detail: r.detail.detail,
        csv: r.detail.csv,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_suite(ids: &[String], seed: u64, print: bool) -> Vec<CriterionOutcome> {
    ids.iter()
        .filter_map(|id| {
            let r = run_criterion(id, seed)?;
            if print {
                println!("{}", r.line());
            }
            Some(r)
        })
        .collect()
}

pub(crate) fn write_outputs(results: &[CriterionOutcome], out: &mut Out) -> CliResult<()> {
    out.csv("suite.csv", |w| {
        writeln!(w, "criterion,passed,retried,detail")?;
        for r in results {
            writeln!(
                w,
                "{},{},{},\"{}\"",
                r.id,
                r.passed,
                r.retried,
                r.detail.replace('"', "'")
            )?;
        }
        Ok(())
    })?;
    for r in results {
        if let Some(csv) = &r.csv {
            out.csv(&format!("{}.csv", r.id), |w| w.write_all(csv.as_bytes()))?;
        }
    }
    Ok(())
}

macro_rules! tryc {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return Check::error(e),
        }
    };
}

fn rms(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

/// Sup over steps and nodes of the node-mass gap between the integrated
/// observer measure and the closed-form posterior for the same signal.
fn observer_vs_closed_form(
    mu0: &GridMeasure<f64>,
    noise: &qmon_core::NoisePath<f64>,
    gamma: f64,
    scheme: QndScheme,
) -> qmon_core::Result<f64> {
    let grid = *noise.grid();
    let mut worst = 0.0f64;
    let mut err = None;
    observe(
        mu0,
        noise,
        gamma,
        scheme,
        |k, mu, s| match posterior_closed_form(mu0, s, grid.elapsed(k), gamma) {
            Ok(c) => {
                for (a, b) in mu.masses().iter().zip(c.masses()) {
                    worst = worst.max((a - b).abs());
                }
            }
            Err(e) => err = Some(e),
        },
    )?;
    err.map_or(Ok(worst), Err)
}

fn a1(seed: u64) -> Check {
    let gamma = 0.5;
    let mu0 = tryc!(GridMeasure::<f64>::two_point(-1.0, 1.0, 0.3));
    let fine = tryc!(TimeGrid::<f64>::new(0.0, 5e-5, 20_000));
    let n_paths = 8;
    // Per path: exponential step at dt and dt/2, linear-domain step at dt and dt/2.
    let errs: Vec<qmon_core::Result<[f64; 4]>> = par_paths(n_paths, RngStream::new(seed, 0), |s| {
        let noise = sample_noise(fine, s);
        let coarse = noise.coarsen(2)?;
        Ok([
            observer_vs_closed_form(&mu0, &coarse, gamma, QndScheme::Exponential)?,
            observer_vs_closed_form(&mu0, &noise, gamma, QndScheme::Exponential)?,
            observer_vs_closed_form(&mu0, &coarse, gamma, QndScheme::Linear)?,
            observer_vs_closed_form(&mu0, &noise, gamma, QndScheme::Linear)?,
        ])
    });
    let errs = tryc!(errs.into_iter().collect::<qmon_core::Result<Vec<_>>>());
    let col = |j: usize| errs.iter().map(|e| e[j]).collect::<Vec<_>>();
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let (e1, e2) = (max(&col(0)), max(&col(1)));
    let (l1, l2) = (col(2), col(3));
    let (r1, r2) = (rms(&l1), rms(&l2));
    // The exponential step is exact for this prior up to rounding, so the
    // dt dependence is read off the linear-domain step.
    let passed = e1 <= 5e-3 && e2 <= 5e-3 && r2 < r1;
    Check {
        passed,
        detail: format!(
            "log-domain step: max sup error {e1:.1e} at dt=1e-4, {e2:.1e} at dt=5e-5 (<= 5e-3); linear-domain step: rms {r1:.2e} -> {r2:.2e} when dt is halved (max {:.2e} -> {:.2e})",
            max(&l1),
            max(&l2)
        ),
        csv: Some(format!(
            "scheme,dt,rms_sup_error,max_sup_error\nexponential,1e-4,{},{e1}\nexponential,5e-5,{},{e2}\nlinear,1e-4,{r1},{}\nlinear,5e-5,{r2},{}\n",
            rms(&col(0)),
            rms(&col(1)),
            max(&l1),
            max(&l2)
        )),
    }
}

fn a2(seed: u64) -> Check {
    let gamma = 0.5;
    let n = 10_000;
    let mu0 = tryc!(GridMeasure::<f64>::symmetric_pair(1.0));
    let grid = tryc!(TimeGrid::<f64>::new(0.0, 1e-3, 1000));
    let base = RngStream::new(seed, 0);
    let cheater: Vec<qmon_core::Result<f64>> = par_paths(n, base.family(1), |s| {
        simulate_cheater(&mu0, grid, gamma, s).map(|(_, p)| p.end_value())
    });
    let observer: Vec<qmon_core::Result<f64>> = par_paths(n, base.family(2), |s| {
        let noise = sample_noise(grid, s);
        observe(&mu0, &noise, gamma, QndScheme::Exponential, |_, _, _| ())
            .map(|(_, p)| p.end_value())
    });
    let c = tryc!(cheater.into_iter().collect::<qmon_core::Result<Vec<_>>>());
    let o = tryc!(observer.into_iter().collect::<qmon_core::Result<Vec<_>>>());
    let ks = tryc!(ks_two_sample(&c, &o));
    Check {
        passed: !ks.rejects(),
        detail: format!(
            "KS {:.4} vs 1% critical {:.4}, N = {n} each",
            ks.statistic, ks.critical
        ),
        csv: Some(format!(
            "statistic,critical,n,m\n{},{},{},{}\n",
            ks.statistic, ks.critical, ks.n, ks.m
        )),
    }
}

fn a3(seed: u64) -> Check {
    let mu0 = tryc!(GridMeasure::<f64>::symmetric_pair(1.0));
    let est = tryc!(girsanov_check(
        |a, s: &[f64]| a * s[0],
        &mu0,
        &[1.0],
        100_000,
        RngStream::new(seed, 0)
    ));
    let passed =
        est.lhs.within(1.0, 3.0) && est.rhs.within(1.0, 3.0) && est.difference.within(0.0, 3.0);
    Check {
        passed,
        detail: format!(
            "lhs {:.4} ± {:.4}, rhs {:.4} ± {:.4}, paired difference {:.4} ± {:.4}",
            est.lhs.mean,
            est.lhs.std_error,
            est.rhs.mean,
            est.rhs.std_error,
            est.difference.mean,
            est.difference.std_error
        ),
        csv: Some(format!(
            "quantity,mean,std_error\nlhs,{},{}\nrhs,{},{}\ndifference,{},{}\n",
            est.lhs.mean,
            est.lhs.std_error,
            est.rhs.mean,
            est.rhs.std_error,
            est.difference.mean,
            est.difference.std_error
        )),
    }
}

fn a4(seed: u64) -> Check {
    let gamma = 0.5;
    let mu0 = tryc!(GridMeasure::<f64>::symmetric_pair(1.0));
    let grid = tryc!(TimeGrid::<f64>::new(0.0, 1e-3, 1000));
    let runs: Vec<qmon_core::Result<(f64, f64)>> =
        par_paths(10_000, RngStream::new(seed, 0), |s| {
            let (_, p) = simulate_cheater(&mu0, grid, gamma, s)?;
            let w = innovation_path(&p, &mu0, gamma)?;
            Ok((w[500], w[1000]))
        });
    let runs = tryc!(runs.into_iter().collect::<qmon_core::Result<Vec<_>>>());
    let end: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let first: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let second: Vec<f64> = runs.iter().map(|r| r.1 - r.0).collect();
    let mean = MeanEstimate::from_samples(&end);
    let var = MeanEstimate::variance_of(&end);
    let (rho, se) = tryc!(pearson_correlation(&first, &second));
    let passed = mean.within(0.0, 3.0) && var.within(1.0, 3.0) && rho.abs() <= 3.0 * se;
    Check {
        passed,
        detail: format!(
            "E[W_1] {:.4} ± {:.4}, Var[W_1] {:.4} ± {:.4}, corr(W_.5, W_1 - W_.5) {rho:.4} ± {se:.4}",
            mean.mean, mean.std_error, var.mean, var.std_error
        ),
        csv: Some(format!(
            "quantity,value,std_error\nmean_w1,{},{}\nvar_w1,{},{}\nincrement_corr,{rho},{se}\n",
            mean.mean, mean.std_error, var.mean, var.std_error
        )),
    }
}

fn a5(seed: u64) -> Check {
    let mu0 = tryc!(GridMeasure::<f64>::symmetric_pair(1.0));
    let times = [1.0, 4.0, 16.0];
    let samples: Vec<qmon_core::Result<([f64; 3], f64)>> =
        par_paths(10_000, RngStream::new(seed, 0), |s| {
            let mut r = s.rng();
            let a = sample_from(&mu0, &mut r);
            let (mut b, mut prev) = (0.0, 0.0f64);
            let mut out = [0.0; 3];
            let mut gap = 0.0f64;
            for (k, &t) in times.iter().enumerate() {
                b += (t - prev).sqrt() * standard_normal::<f64, _>(&mut r);
                prev = t;
                let cv = conditional_variance(&mu0, a * t + b, t)?;
                out[k] = cv.value();
                gap = gap.max(cv.discrepancy());
            }
            Ok((out, gap))
        });
    let samples = tryc!(samples.into_iter().collect::<qmon_core::Result<Vec<_>>>());
    let means: Vec<MeanEstimate<f64>> = (0..3)
        .map(|k| MeanEstimate::from_samples(&samples.iter().map(|s| s.0[k]).collect::<Vec<_>>()))
        .collect();
    let m: Vec<f64> = means.iter().map(|e| e.mean).collect();
    let gap = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    let passed = strictly_decreasing(&m) && m[2] < 1e-3;
    let mut csv = String::from("t,mean_conditional_variance,std_error\n");
    for (t, e) in times.iter().zip(&means) {
        let _ = writeln!(csv, "{t},{},{}", e.mean, e.std_error);
    }
    Check {
        passed,
        detail: format!(
            "E[Var(A|S_t)] at t=1,4,16: {:.4e}, {:.4e}, {:.4e} (< 1e-3 at 16); direct vs pairwise formula gap {gap:.1e}",
            m[0], m[1], m[2]
        ),
        csv: Some(csv),
    }
}

fn a6(seed: u64) -> Check {
    let base = RngStream::new(seed, 0);
    let p = |i: usize, a: f64| if i == 1 { 0.5 + 0.3 * a } else { 0.5 - 0.3 * a };
    let pair = tryc!(GridMeasure::<f64>::symmetric_pair(1.0));
    let cfg3 = tryc!(DiscreteChainConfig::new(2, p, pair.clone(), 3));
    let n = 100_000;
    let codes: Vec<qmon_core::Result<usize>> = par_paths(n, base.family(1), |r| {
        run_chain(&cfg3, r).map(|(_, o)| o[0] * 4 + o[1] * 2 + o[2])
    });
    let codes = tryc!(codes.into_iter().collect::<qmon_core::Result<Vec<_>>>());
    let freq = |code: usize| codes.iter().filter(|&&c| c == code).count() as f64 / n as f64;
    let perms = [freq(0b110), freq(0b101), freq(0b011)];
    let mut exch = true;
    let mut worst_z = 0.0f64;
    for (x, y) in [
        (perms[0], perms[1]),
        (perms[1], perms[2]),
        (perms[0], perms[2]),
    ] {
        let se = ((x * (1.0 - x) + y * (1.0 - y)) / n as f64).sqrt();
        worst_z = worst_z.max((x - y).abs() / se);
        exch &= (x - y).abs() <= 3.0 * se;
    }
    let rounds = 10_000;
    let dirac = tryc!(GridMeasure::<f64>::point_mass(-1.0, 1.0, 3, 2));
    let (_, o) = tryc!(run_chain(
        &tryc!(DiscreteChainConfig::new(2, p, dirac, rounds)),
        base.family(2)
    ));
    let f_dirac = o.iter().filter(|&&i| i == 1).count() as f64 / rounds as f64;
    let band = |q: f64| 3.0 * (q * (1.0 - q) / rounds as f64).sqrt();
    let dirac_ok = (f_dirac - 0.8).abs() <= band(0.8);
    // Mixture prior: frequencies follow the outcome law of the value the
    // posterior settles on.
    let (post, o) = tryc!(run_chain(
        &tryc!(DiscreteChainConfig::new(2, p, pair, rounds)),
        base.family(3)
    ));
    let alpha = post.x(post.mode_index());
    let q = p(1, alpha);
    let f_mix = o.iter().filter(|&&i| i == 1).count() as f64 / rounds as f64;
    let mix_ok = (f_mix - q).abs() <= band(q);
    Check {
        passed: exch && dirac_ok && mix_ok,
        detail: format!(
            "permuted frequencies {:.4}/{:.4}/{:.4} (max z {worst_z:.2}); Dirac S_n(1)/n {f_dirac:.4} vs 0.8; mixture {f_mix:.4} vs p(1|{alpha}) = {q}",
            perms[0], perms[1], perms[2]
        ),
        csv: Some(format!(
            "quantity,value,target\nfreq_110,{},\nfreq_101,{},\nfreq_011,{},\ndirac_freq_1,{f_dirac},0.8\nmixture_freq_1,{f_mix},{q}\n",
            perms[0], perms[1], perms[2]
        )),
    }
}

fn a7(seed: u64) -> Check {
    let mu0 = tryc!(GridMeasure::<f64>::gaussian(-6.0, 0.05, 241, 0.0, 0.5));
    let cfg = SweepConfig {
        spec: tryc!(LindbladSpec::quantum_laplacian(1.0)),
        mu0,
        dt: 1e-3,
        t_eval: 0.5,
        gammas: vec![2.0, 5.0, 10.0],
        observables: vec![
            MomentObservable::moment("x2", TestFunction::power(2)),
            MomentObservable::squared_moment("mean_sq", TestFunction::identity()),
        ],
        n_paths: 2000,
        base: RngStream::new(seed, 0),
        reference_paths: 0,
    };
    let rep = tryc!(strong_limit_sweep(&cfg));
    let reference = rep.references[0].value();
    let linear_ok = rep
        .per_gamma
        .iter()
        .all(|g| g.estimates[0].within(reference, 3.0));
    let err = rep.abs_errors(1);
    let proxy: Vec<f64> = rep.per_gamma.iter().map(|g| g.proxy.mean).collect();
    let passed = linear_ok
        && strictly_decreasing(&err)
        && strictly_decreasing(&proxy)
        && proxy[2] < 0.25 * proxy[0];
    let x2_err: Vec<String> = rep
        .per_gamma
        .iter()
        .map(|g| format!("{:.4}", (g.estimates[0].mean - reference).abs()))
        .collect();
    let mut csv = Vec::new();
    let _ = rep.write_csv(&mut csv);
    Check {
        passed,
        detail: format!(
            "E[mu_t[x^2]] {} vs {reference:.4} (3 SE, gaps {}); |E[mu_t[x]^2] - E[Y_t^2]| {:.4}, {:.4}, {:.4}; proxy {:.4}, {:.4}, {:.4} (ratio {:.3} < 0.25)",
            rep.per_gamma
                .iter()
                .map(|g| format!("{:.4}±{:.4}", g.estimates[0].mean, g.estimates[0].std_error))
                .collect::<Vec<_>>()
                .join("/"),
            x2_err.join(", "),
            err[0],
            err[1],
            err[2],
            proxy[0],
            proxy[1],
            proxy[2],
            proxy[2] / proxy[0]
        ),
        csv: String::from_utf8(csv).ok(),
    }
}

fn a8(seed: u64) -> Check {
    // Point mass at x0 = 1 on [-4, 5].
    let mu0 = tryc!(GridMeasure::<f64>::point_mass(-4.0, 0.05, 181, 100));
    let x0 = mu0.x(100);
    let cfg = SweepConfig {
        spec: tryc!(LindbladSpec::ornstein_uhlenbeck(1.0, 1.0)),
        mu0,
        dt: 1e-3,
        t_eval: 1.0,
        gammas: vec![2.0, 5.0, 10.0],
        observables: vec![MomentObservable::moment("x", TestFunction::identity())],
        n_paths: 2000,
        base: RngStream::new(seed, 0),
        reference_paths: 0,
    };
    let rep = tryc!(strong_limit_sweep(&cfg));
    let e = (-1.0f64).exp();
    let mean_target = x0 * e;
    let var_target = (1.0 - e * e) / 2.0;
    let mut spread_err = Vec::new();
    let mut corrected = Vec::new();
    let mut csv = String::from(
        "gamma,mean,mean_se,mean_target,spread,corrected_spread,spread_target,proxy\n",
    );
    for g in &rep.per_gamma {
        let v = MeanEstimate::variance_of(&g.samples[0]).mean;
        spread_err.push((v - var_target).abs());
        corrected.push(v + g.proxy.mean);
        let _ = writeln!(
            csv,
            "{},{},{},{mean_target},{v},{},{var_target},{}",
            g.gamma,
            g.estimates[0].mean,
            g.estimates[0].std_error,
            v + g.proxy.mean,
            g.proxy.mean
        );
    }
    let mean_errs: Vec<f64> = rep
        .per_gamma
        .iter()
        .map(|g| (g.estimates[0].mean - mean_target).abs() / mean_target)
        .collect();
    let mean_err = mean_errs[2];
    let corrected_ok = corrected
        .iter()
        .all(|c| (c - var_target).abs() <= 0.1 * var_target);
    let passed = mean_err <= 0.1 && strictly_decreasing(&spread_err) && corrected_ok;
    Check {
        passed,
        detail: format!(
            "mean error {:.1}%, {:.1}%, {:.1}% (<= 10% at gamma=10); spread error {:.4}, {:.4}, {:.4}; corrected spread {:.4}, {:.4}, {:.4} vs {var_target:.4}",
            100.0 * mean_errs[0],
            100.0 * mean_errs[1],
            100.0 * mean_err,
            spread_err[0],
            spread_err[1],
            spread_err[2],
            corrected[0],
            corrected[1],
            corrected[2]
        ),
        csv: Some(csv),
    }
}

fn sigma0(u: f64) -> Complex<f64> {
    Complex::from_polar((-u * u / 2.0).exp(), 0.7 * u)
}

fn a9(seed: u64) -> Check {
    let mu0 = tryc!(GridMeasure::<f64>::gaussian(-3.0, 0.1, 61, 0.0, 0.5));
    let dts = [4e-3, 2e-3, 1e-3, 5e-4];
    let rms = tryc!(qmon_core::lindblad::separated::separated_residual_study(
        &sigma0,
        &mu0,
        1.0,
        1.0,
        0.4,
        &dts,
        16,
        RngStream::new(seed, 0)
    ));
    let fit = tryc!(convergence_order_fit(&dts, &rms));
    let mut csv = String::from("dt,rms_residual\n");
    for (d, r) in dts.iter().zip(&rms) {
        let _ = writeln!(csv, "{d},{r}");
    }
    Check {
        passed: strictly_decreasing(&rms) && fit.slope >= 0.8,
        detail: format!(
            "rms residual {} ; fitted order {:.2} ± {:.2} (>= 0.8)",
            rms.iter()
                .map(|r| format!("{r:.2e}"))
                .collect::<Vec<_>>()
                .join(", "),
            fit.slope,
            fit.slope_ci95
        ),
        csv: Some(csv),
    }
}

fn a10(_seed: u64) -> Check {
    let mut worst = 0.0f64;
    let mut worst_value = 0.0f64;
    let mut csv = String::from("omega,ell,big_omega,re_a,im_a,residual\n");
    for (w, l) in [(1.0, 1.0), (10.0, 0.3), (100.0, 0.05)] {
        let s = tryc!(PhysicalScales::<f64>::from_omega_ell(w, l));
        for big in [0.0, w / 10.0] {
            let a = a_infinity(&s, big);
            let g2 = s.gamma * s.gamma;
            let r = (a_drift(a, &s, s.m * big * big).norm() / g2)
                .max(a_drift_omega_ell(a, w, l, big).norm() / g2);
            worst = worst.max(r);
            let _ = writeln!(csv, "{w},{l},{big},{},{},{r}", a.re, a.im);
            if big == 0.0 {
                worst_value = worst_value.max((a * l * l - Complex::new(0.5, -0.5)).norm());
            }
        }
    }
    let shown = a_infinity_displayed(1.0, 1.0, 1.0);
    let s1 = tryc!(PhysicalScales::<f64>::from_omega_ell(1.0, 1.0));
    let shown_residual = a_drift(shown, &s1, 1.0).norm();
    Check {
        passed: worst <= 1e-12 && worst_value <= 1e-12,
        detail: format!(
            "max drift residual {worst:.1e} (relative to gamma^2), |a_inf l^2 - (1/2 - i/2)| {worst_value:.1e}; displayed form at Omega = omega {:.4}{:+.4}i has residual {shown_residual:.3}",
            shown.re, shown.im
        ),
        csv: Some(csv),
    }
}

fn a11(seed: u64) -> Check {
    let (big, eps, x0) = (1.0, 1.0, 2.0);
    let dt = 5e-4;
    let grid = tryc!(TimeGrid::<f64>::new(0.0, dt, 20_000));
    let targets = [0.1, 1.0, std::f64::consts::PI, 10.0];
    let idx: Vec<usize> = targets.iter().map(|t| (t / dt).round() as usize).collect();
    let pot = Potential::harmonic(1.0, big);
    let samples: Vec<Vec<f64>> = par_paths(10_000, RngStream::new(seed, 0), |s| {
        let noise = sample_noise(grid, s);
        let (mut x, mut v) = (x0, 0.0);
        let mut out = Vec::with_capacity(idx.len());
        let mut next = 0;
        for (k, &dw) in noise.increments().iter().enumerate() {
            if next < idx.len() && idx[next] == k {
                out.push(x);
                next += 1;
            }
            (x, v) = langevin_step(x, v, &pot, 1.0, eps, dt, dw);
        }
        if next < idx.len() {
            out.push(x);
        }
        out
    });
    let mut ok = true;
    let mut parts = Vec::new();
    let mut csv = String::from("t,sample_variance,std_error,closed_form\n");
    for (j, &k) in idx.iter().enumerate() {
        let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
        let v = MeanEstimate::variance_of(&col);
        let t = grid.time(k);
        let c = variance_closed_form(t, big, eps);
        ok &= v.within(c, 3.0);
        parts.push(format!(
            "t={t:.4}: {:.4}±{:.4} vs {c:.4}",
            v.mean, v.std_error
        ));
        let _ = writeln!(csv, "{t},{},{},{c}", v.mean, v.std_error);
    }
    let short = variance_closed_form(0.01, big, eps) / variance_short_time(0.01, eps);
    let long = variance_closed_form(100.0, big, eps) / variance_long_time(100.0, big, eps);
    ok &= (short - 1.0).abs() <= 1e-3 && (long - 1.0).abs() <= 1e-2;
    Check {
        passed: ok,
        detail: format!(
            "{}; ratio to eps t^3/3 at Omega t = 0.01: {short:.6}; to eps t/2Omega^2 at Omega t = 100: {long:.5}",
            parts.join(", ")
        ),
        csv: Some(csv),
    }
}

fn a12(seed: u64) -> Check {
    let pot = Potential::harmonic(1.0, 1.0);
    let fine = tryc!(TimeGrid::<f64>::new(0.0, 1e-4, 62_900));
    let factors = [100usize, 10, 1];
    let two_pi = 2.0 * std::f64::consts::PI;
    let per_path: Vec<qmon_core::Result<Vec<f64>>> = par_paths(8, RngStream::new(seed, 0), |s| {
        let noise = sample_noise(fine, s);
        factors
            .iter()
            .map(|&f| {
                let coarse = noise.coarsen(f)?;
                let exact = langevin_harmonic_exact(2.0, 1.0, 1.0, &coarse)?;
                let euler = langevin_trajectory(2.0, 0.0, &pot, 1.0, 1.0, &coarse);
                Ok(exact
                    .iter()
                    .zip(&euler)
                    .filter(|(_, e)| e.0 <= two_pi)
                    .map(|(a, b)| (a - b.1).abs())
                    .fold(0.0, f64::max))
            })
            .collect()
    });
    let per_path = tryc!(per_path.into_iter().collect::<qmon_core::Result<Vec<_>>>());
    let rms_e: Vec<f64> = (0..factors.len())
        .map(|j| rms(&per_path.iter().map(|p| p[j]).collect::<Vec<_>>()))
        .collect();
    let worst_fine = per_path.iter().map(|p| p[2]).fold(0.0, f64::max);
    let dts: Vec<f64> = factors.iter().map(|&f| f as f64 * 1e-4).collect();
    let fit = tryc!(convergence_order_fit(&dts, &rms_e));
    let mut csv = String::from("dt,rms_sup_error\n");
    for (d, e) in dts.iter().zip(&rms_e) {
        let _ = writeln!(csv, "{d},{e}");
    }
    Check {
        passed: worst_fine <= 1e-2 && fit.slope >= 0.5,
        detail: format!(
            "max sup error {worst_fine:.2e} at dt=1e-4 (<= 1e-2); rms {:.2e}, {:.2e}, {:.2e}; order {:.2} (>= 0.5)",
            rms_e[0], rms_e[1], rms_e[2], fit.slope
        ),
        csv: Some(csv),
    }
}

fn a13(seed: u64) -> Check {
    let cfg = DoubleScalingConfig::<f64>::new(1.0, 1.0, 1.0, 2000, RngStream::new(seed, 0));
    let rows = tryc!(double_scaling_study(&cfg, &[10.0, 30.0, 100.0]));
    let ks: Vec<f64> = rows.iter().map(|r| r.ks_matched).collect();
    let width_ok = rows
        .iter()
        .all(|r| (r.sigma_x - r.expected_sigma_x).abs() <= 0.01 * r.expected_sigma_x);
    let mut csv = Vec::new();
    let _ = DoubleScalingRow::write_csv(&rows, &mut csv);
    Check {
        passed: strictly_decreasing(&ks) && width_ok,
        detail: format!(
            "matched-noise KS {}; independent-ensemble KS {} (1% critical {:.4}); sigma_x {}",
            ks.iter()
                .map(|k| format!("{k:.4}"))
                .collect::<Vec<_>>()
                .join(" > "),
            rows.iter()
                .map(|r| format!("{:.4}", r.ks_independent))
                .collect::<Vec<_>>()
                .join(", "),
            rows[0].ks_critical,
            rows.iter()
                .map(|r| format!("{:.2e}", r.sigma_x))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        csv: String::from_utf8(csv).ok(),
    }
}

/// Small configs covering every experiment kind, including a suite run of
/// the cheap criteria.
pub const SMOKE_CONFIGS: [&str; 10] = [
    "experiment = \"qnd-observer\"\nn_paths = 20\n[qnd]\ngamma = 0.5\n[measure]\nkind = \"two-point\"\nlo = -1.0\nhi = 1.0\np_hi = 0.3\n[time]\ndt = 0.01\nt_end = 1.0\n",
    "experiment = \"qnd-cheater\"\nn_paths = 20\n[qnd]\ngamma = 0.5\n[measure]\nkind = \"gaussian\"\nx_min = -3.0\ndx = 0.1\nn = 61\nmean = 0.0\nsd = 1.0\n[time]\ndt = 0.01\nt_end = 0.5\n",
    "experiment = \"qnd-discrete\"\nn_paths = 10\n[discrete]\nintercepts = [0.5, 0.5]\nslopes = [-0.3, 0.3]\nrounds = 50\n[measure]\nkind = \"two-point\"\nlo = -1.0\nhi = 1.0\np_hi = 0.5\n",
    "experiment = \"diffusion\"\nn_paths = 4\n[diffusion]\nd = 1.0\ngamma = 2.0\n[measure]\nkind = \"gaussian\"\nx_min = -4.0\ndx = 0.1\nn = 81\nmean = 0.0\nsd = 0.5\n[time]\ndt = 0.001\nt_end = 0.05\n",
    "experiment = \"lindblad-sde\"\nn_paths = 20\n[lindblad]\nmodel = \"ou\"\nk = 1.0\nsigma = 1.0\ngammas = [1.0, 4.0]\n[measure]\nkind = \"point-mass\"\nx_min = -3.0\ndx = 0.1\nn = 71\nnode = 40\n[time]\ndt = 0.001\nt_end = 0.1\n",
    "experiment = \"packet\"\nn_paths = 4\n[packet]\nomega = 10.0\nell = 0.1\nbig_omega = 1.0\nx0 = 1.0\n[time]\ndt = 0.001\nt_end = 0.5\n",
    "experiment = \"langevin\"\nn_paths = 50\n[langevin]\nbig_omega = 1.0\neps = 1.0\nx0 = 2.0\n[time]\ndt = 0.001\nt_end = 1.0\n",
    "experiment = \"double-scaling\"\nn_paths = 100\n[double_scaling]\nomegas = [10.0]\nhorizon = 0.2\n",
    "experiment = \"girsanov\"\nn_paths = 1000\n[girsanov]\nfunctional = \"a-times-s\"\ntimes = [0.5, 1.0]\n[measure]\nkind = \"two-point\"\nlo = -1.0\nhi = 1.0\np_hi = 0.5\n",
    "experiment = \"verify-suite\"\n[suite]\ncriteria = [\"A3\", \"A5\", \"A10\", \"A12\"]\n",
];

fn a14(seed: u64) -> Check {
    let dir = tryc!(tempfile::tempdir());
    let mut identical = 0;
    let mut problems = Vec::new();
    let mut tamper_caught = true;
    let mut csv = String::from("experiment,files,replay_identical,tamper_detected\n");
    for (i, text) in SMOKE_CONFIGS.iter().enumerate() {
        let run_dir = dir.path().join(format!("run{i}"));
        let run = tryc!(execute(&RunRequest {
            config_text: text.to_string(),
            seed: Some(seed),
            out: Some(run_dir.clone()),
            threads: None,
            quiet: true,
        }));
        // Replay on a single worker: results must not depend on scheduling.
        let rep = tryc!(replay(
            &run_dir,
            Some(&dir.path().join(format!("replay{i}"))),
            Some(1)
        ));
        if rep.identical() {
            identical += 1;
        } else {
            problems.push(format!(
                "{}: {}",
                run.manifest.experiment,
                rep.mismatches.join("; ")
            ));
        }
        let mut m = tryc!(Manifest::load(&run_dir));
        m.seed = m.seed.wrapping_add(1);
        tryc!(m.write(&run_dir));
        let tampered = tryc!(replay(
            &run_dir,
            Some(&dir.path().join(format!("tamper{i}"))),
            None
        ));
        tamper_caught &= !tampered.identical();
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            run.manifest.experiment,
            run.manifest.outputs.len(),
            rep.identical(),
            !tampered.identical()
        );
    }
    Check {
        passed: identical == SMOKE_CONFIGS.len() && tamper_caught,
        detail: format!(
            "{identical}/{} runs (every experiment kind plus a suite subset) replay bitwise-identically on 1 thread; edited seed detected: {tamper_caught}{}",
            SMOKE_CONFIGS.len(),
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join(" | ")) }
        ),
        csv: Some(csv),
    }
}
