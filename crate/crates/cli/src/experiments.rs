//! Experiment execution. Every experiment writes its CSVs into one directory
//! and reports the file names it produced.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use num_complex::Complex;
use qmon_core::lindblad::{
    strong_limit_sweep, LindbladSpec, MomentObservable, MonitoredDiffusion, SweepConfig,
};
use qmon_core::packet::{
    a_infinity_at, double_scaling_study, langevin_trajectory, packet_trajectory,
    variance_closed_form, variance_short_time, write_langevin_csv, write_packet_csv,
    DoubleScalingConfig, DoubleScalingRow, GaussianPacket, Potential,
};
use qmon_core::qnd::{
    discrete_chain_step, girsanov_check, observe, simulate_cheater, trajectory_rows,
    write_trajectory_csv, DiscreteChainConfig,
};
use qmon_core::sde::sample_noise;
use qmon_core::stats::{par_paths, run_ensemble, MeanEstimate};
use qmon_core::{GridMeasure, RngStream, TestFunction};

use crate::config::{
    DiffusionParams, DiscreteParams, DoubleScalingParams, Experiment, ExperimentConfig, Functional,
    GirsanovParams, LangevinParams, LindbladParams, PacketParams, QndParams,
};
use crate::error::CliResult;
use crate::suite;

/// Files written by a run and, for the suite, how many criteria failed.
#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    pub files: Vec<String>,
    pub failed_criteria: usize,
}

pub(crate) struct Out<'a> {
    dir: &'a Path,
    header: String,
    files: Vec<String>,
}

impl<'a> Out<'a> {
    pub(crate) fn new(dir: &'a Path, header: String) -> Self {
        Self {
            dir,
            header,
            files: Vec::new(),
        }
    }

    /// Buffer the CSV, prefix the run header, write it in one go.
    pub(crate) fn csv<F>(&mut self, name: &str, body: F) -> CliResult<()>
    where
        F: FnOnce(&mut Vec<u8>) -> io::Result<()>,
    {
        let mut buf = Vec::new();
        writeln!(buf, "# {}", self.header)?;
        body(&mut buf)?;
        fs::write(self.dir.join(name), buf)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Run `cfg` into `dir`. With `echo`, suite runs print one line per criterion.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path, echo: bool) -> CliResult<RunOutcome> {
    fs::create_dir_all(dir)?;
    let base = RngStream::new(cfg.seed, 0);
    let mut out = Out::new(
        dir,
        format!("qmon {} seed={}", cfg.experiment.name(), cfg.seed),
    );
    let mut failed = 0;
    match &cfg.experiment {
        Experiment::QndObserver(p) => qnd_observer(p, cfg.n_paths, base, &mut out)?,
        Experiment::QndCheater(p) => qnd_cheater(p, cfg.n_paths, base, &mut out)?,
        Experiment::QndDiscrete(p) => qnd_discrete(p, cfg.n_paths, base, &mut out)?,
        Experiment::Diffusion(p) => diffusion(p, cfg.n_paths, base, &mut out)?,
        Experiment::LindbladSde(p) => lindblad_sde(p, cfg.n_paths, base, &mut out)?,
        Experiment::Packet(p) => packet(p, cfg.n_paths, base, &mut out)?,
        Experiment::Langevin(p) => langevin(p, cfg.n_paths, base, &mut out)?,
        Experiment::DoubleScaling(p) => double_scaling(p, cfg.n_paths, base, &mut out)?,
        Experiment::Girsanov(p) => girsanov(p, cfg.n_paths, base, &mut out)?,
        Experiment::VerifySuite(p) => {
            let results = suite::run_suite(&p.criteria, cfg.seed, echo);
            failed = results.iter().filter(|r| !r.passed).count();
            suite::write_outputs(&results, &mut out)?;
        }
    }
    Ok(RunOutcome {
        files: out.files,
        failed_criteria: failed,
    })
}

fn measure_csv(out: &mut Out, name: &str, mu: &GridMeasure<f64>) -> CliResult<()> {
    out.csv(name, |w| mu.write_csv(w))
}

fn qnd_observer(p: &QndParams, n_paths: usize, base: RngStream, out: &mut Out) -> CliResult<()> {
    let noise = sample_noise(p.grid, base);
    let (end, path) = observe(&p.mu0, &noise, p.gamma, p.scheme, |_, _, _| ())?;
    let rows = trajectory_rows(&path, &p.mu0, p.gamma)?;
    out.csv("trajectory.csv", |w| {
        writeln!(
            w,
            "# columns: t, S (signal), W (innovation), posterior mean and variance of x given S_t"
        )?;
        write_trajectory_csv(w, &path, &rows)
    })?;
    measure_csv(out, "final_measure.csv", &end)?;
    if n_paths > 1 {
        let ends = par_paths(n_paths, base, |s| -> qmon_core::Result<(f64, f64, f64)> {
            let noise = sample_noise(p.grid, s);
            let (mu, path) = observe(&p.mu0, &noise, p.gamma, p.scheme, |_, _, _| ())?;
            Ok((path.end_value(), mu.mean()?, mu.variance()?))
        });
        let ends = ends.into_iter().collect::<qmon_core::Result<Vec<_>>>()?;
        out.csv("endpoints.csv", |w| {
            writeln!(w, "path,S_end,post_mean,post_var")?;
            for (i, (s, m, v)) in ends.iter().enumerate() {
                writeln!(w, "{i},{s},{m},{v}")?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn qnd_cheater(p: &QndParams, n_paths: usize, base: RngStream, out: &mut Out) -> CliResult<()> {
    let (_, path) = simulate_cheater(&p.mu0, p.grid, p.gamma, base)?;
    let rows = trajectory_rows(&path, &p.mu0, p.gamma)?;
    out.csv("trajectory.csv", |w| write_trajectory_csv(w, &path, &rows))?;
    if n_paths > 1 {
        let ends = par_paths(n_paths, base, |s| {
            simulate_cheater(&p.mu0, p.grid, p.gamma, s).map(|(x, path)| (x, path.end_value()))
        });
        let ends = ends.into_iter().collect::<qmon_core::Result<Vec<_>>>()?;
        out.csv("endpoints.csv", |w| {
            writeln!(w, "path,xbar,S_end")?;
            for (i, (x, s)) in ends.iter().enumerate() {
                writeln!(w, "{i},{x},{s}")?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn qnd_discrete(
    p: &DiscreteParams,
    n_paths: usize,
    base: RngStream,
    out: &mut Out,
) -> CliResult<()> {
    let k = p.intercepts.len();
    let cfg = DiscreteChainConfig::new(
        k,
        |i, a| p.intercepts[i] + p.slopes[i] * a,
        p.mu0.clone(),
        p.rounds,
    )?;
    let mut rng = base.rng();
    let mut mu = p.mu0.clone();
    let mut rows = Vec::with_capacity(p.rounds);
    for n in 0..p.rounds {
        let (next, i) = discrete_chain_step(&mu, &cfg, &mut rng)?;
        mu = next;
        rows.push((n + 1, i, mu.mean()?));
    }
    out.csv("outcomes.csv", |w| {
        writeln!(
            w,
            "# columns: round (1-based), outcome (0-based), posterior mean of alpha"
        )?;
        writeln!(w, "round,outcome,post_mean")?;
        for (n, i, m) in &rows {
            writeln!(w, "{n},{i},{m}")?;
        }
        Ok(())
    })?;
    measure_csv(out, "final_measure.csv", &mu)?;
    if n_paths > 1 {
        let counts = par_paths(n_paths, base, |s| {
            qmon_core::qnd::run_chain(&cfg, s).map(|(_, o)| {
                let mut c = vec![0usize; k];
                for i in o {
                    c[i] += 1;
                }
                c
            })
        });
        let counts = counts.into_iter().collect::<qmon_core::Result<Vec<_>>>()?;
        out.csv("counts.csv", |w| {
            let cols: Vec<String> = (0..k).map(|i| format!("count_{i}")).collect();
            writeln!(w, "path,{}", cols.join(","))?;
            for (j, c) in counts.iter().enumerate() {
                let c: Vec<String> = c.iter().map(|x| x.to_string()).collect();
                writeln!(w, "{j},{}", c.join(","))?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn stride(n_steps: usize) -> usize {
    n_steps.div_ceil(1000).max(1)
}

fn diffusion(p: &DiffusionParams, n_paths: usize, base: RngStream, out: &mut Out) -> CliResult<()> {
    let spec = LindbladSpec::quantum_laplacian(p.d)?;
    let stepper = MonitoredDiffusion::new(&spec, p.gamma, p.grid.dt(), &p.mu0)?;
    let noise = sample_noise(p.grid, base);
    let mut rows = Vec::with_capacity(noise.len() + 1);
    let mut err = None;
    let end = stepper.run(&p.mu0, &noise, |k, mu, s| {
        match (mu.mean(), mu.variance()) {
            (Ok(m), Ok(v)) => rows.push((p.grid.time(k), s, m, v)),
            (Err(e), _) | (_, Err(e)) => err = Some(e),
        }
    })?;
    if let Some(e) = err {
        return Err(e.into());
    }
    out.csv("trajectory.csv", |w| {
        writeln!(
            w,
            "# columns: t, S (signal), mean and variance of the measure"
        )?;
        writeln!(w, "t,S,mean,variance")?;
        for (t, s, m, v) in &rows {
            writeln!(w, "{t},{s},{m},{v}")?;
        }
        Ok(())
    })?;
    measure_csv(out, "final_measure.csv", &end)?;
    if n_paths > 1 {
        let every = stride(p.grid.n_steps());
        let times: Vec<f64> = (0..=p.grid.n_steps())
            .step_by(every)
            .map(|k| p.grid.time(k))
            .collect();
        let report = run_ensemble(n_paths, base, times, |s| {
            let noise = sample_noise(p.grid, s);
            let mut v = Vec::new();
            let mut err = None;
            stepper.run(&p.mu0, &noise, |k, mu, _| {
                if k % every == 0 {
                    match mu.variance() {
                        Ok(x) => v.push(x),
                        Err(e) => err = Some(e),
                    }
                }
            })?;
            err.map_or(Ok(v), Err)
        });
        out.csv("ensemble.csv", |w| {
            writeln!(w, "# observable: variance of the monitored measure")?;
            report.write_csv(w)
        })?;
    }
    Ok(())
}

fn lindblad_sde(
    p: &LindbladParams,
    n_paths: usize,
    base: RngStream,
    out: &mut Out,
) -> CliResult<()> {
    let cfg = SweepConfig {
        spec: p.spec.clone(),
        mu0: p.mu0.clone(),
        dt: p.grid.dt(),
        t_eval: p.grid.end(),
        gammas: p.gammas.clone(),
        observables: vec![
            MomentObservable::moment("x", TestFunction::identity()),
            MomentObservable::moment("x2", TestFunction::power(2)),
            MomentObservable::squared_moment("mean_sq", TestFunction::identity()),
        ],
        n_paths,
        base,
        reference_paths: p.reference_paths,
    };
    let report = strong_limit_sweep(&cfg)?;
    out.csv("sweep.csv", |w| report.write_csv(w))?;
    out.csv("spread.csv", |w| {
        writeln!(
            w,
            "# spread = Var over paths of mu_t[x]; corrected = spread + E[proxy]"
        )?;
        writeln!(w, "gamma,spread,spread_se,proxy,corrected")?;
        for g in &report.per_gamma {
            let v = MeanEstimate::variance_of(&g.samples[0]);
            writeln!(
                w,
                "{},{},{},{},{}",
                g.gamma,
                v.mean,
                v.std_error,
                g.proxy.mean,
                v.mean + g.proxy.mean
            )?;
        }
        Ok(())
    })
}

fn initial_packet(p: &PacketParams) -> CliResult<GaussianPacket<f64>> {
    let a = match p.a {
        Some((re, im)) => Complex::new(re, im),
        None => a_infinity_at(&p.scales, p.potential.d2(p.x0)),
    };
    Ok(GaussianPacket::new(a, p.x0, p.v0)?)
}

fn packet(p: &PacketParams, n_paths: usize, base: RngStream, out: &mut Out) -> CliResult<()> {
    let p0 = initial_packet(p)?;
    let noise = sample_noise(p.grid, base);
    let (rows, bad) = packet_trajectory(
        p0,
        &p.potential,
        &p.scales,
        0.0,
        p.grid.dt(),
        noise.increments(),
    )?;
    out.csv("packet.csv", |w| {
        writeln!(
            w,
            "# omega={} ell={} big_omega={} smooth_flag_failures={} cubic_flag_failures={}",
            p.scales.omega(),
            p.scales.ell(),
            p.big_omega,
            bad.0,
            bad.1
        )?;
        write_packet_csv(w, &rows)
    })?;
    if n_paths > 1 {
        let ends = par_paths(n_paths, base, |s| {
            let noise = sample_noise(p.grid, s);
            packet_trajectory(
                p0,
                &p.potential,
                &p.scales,
                0.0,
                p.grid.dt(),
                noise.increments(),
            )
            .map(|(r, _)| {
                r.last()
                    .map(|r| (r.packet.xbar, r.packet.vbar))
                    .unwrap_or((p.x0, p.v0))
            })
        });
        let ends = ends.into_iter().collect::<qmon_core::Result<Vec<_>>>()?;
        out.csv("endpoints.csv", |w| {
            writeln!(w, "path,xbar,vbar")?;
            for (i, (x, v)) in ends.iter().enumerate() {
                writeln!(w, "{i},{x},{v}")?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn langevin(p: &LangevinParams, n_paths: usize, base: RngStream, out: &mut Out) -> CliResult<()> {
    let noise = sample_noise(p.grid, base);
    let rows = langevin_trajectory(p.x0, p.v0, &p.potential, p.m, p.eps, &noise);
    out.csv("trajectory.csv", |w| {
        writeln!(
            w,
            "# big_omega={} eps={} m={} x0={} v0={}",
            p.big_omega, p.eps, p.m, p.x0, p.v0
        )?;
        write_langevin_csv(w, &rows)
    })?;
    if n_paths > 1 {
        let every = p.record_every;
        let times: Vec<f64> = (0..=p.grid.n_steps())
            .step_by(every)
            .map(|k| p.grid.time(k))
            .collect();
        let report = run_ensemble(n_paths, base, times.clone(), |s| {
            let noise = sample_noise(p.grid, s);
            Ok(
                langevin_trajectory(p.x0, p.v0, &p.potential, p.m, p.eps, &noise)
                    .into_iter()
                    .step_by(every)
                    .map(|r| r.1)
                    .collect(),
            )
        });
        out.csv("ensemble.csv", |w| report.write_csv(w))?;
        let closed = |t: f64| match p.potential {
            Potential::Harmonic { .. } => Some(variance_closed_form(t, p.big_omega, p.eps)),
            Potential::Free => Some(variance_short_time(t, p.eps)),
            Potential::Smooth { .. } => None,
        };
        out.csv("variance_law.csv", |w| {
            writeln!(
                w,
                "# sample variance of x_t with its standard error against the closed form"
            )?;
            writeln!(w, "t,variance,variance_se,closed_form")?;
            for (t, s) in times.iter().zip(&report.stats) {
                let se = variance_se(s);
                match closed(*t) {
                    Some(c) => writeln!(w, "{t},{},{se},{c}", s.variance)?,
                    None => writeln!(w, "{t},{},{se},", s.variance)?,
                }
            }
            Ok(())
        })?;
    }
    Ok(())
}

/// Normal-theory standard error of a sample variance.
fn variance_se(s: &MeanEstimate<f64>) -> f64 {
    if s.n < 2 {
        return f64::NAN;
    }
    s.variance * (2.0 / (s.n as f64 - 1.0)).sqrt()
}

fn double_scaling(
    p: &DoubleScalingParams,
    n_paths: usize,
    base: RngStream,
    out: &mut Out,
) -> CliResult<()> {
    let mut cfg = DoubleScalingConfig::new(p.big_omega, p.eps, p.horizon, n_paths, base);
    cfg.x0 = p.x0;
    cfg.v0 = p.v0;
    cfg.dt_omega = p.dt_omega;
    cfg.ell_mode = p.ell_mode;
    let rows = double_scaling_study(&cfg, &p.omegas)?;
    out.csv("double_scaling.csv", |w| {
        DoubleScalingRow::write_csv(&rows, w)
    })
}

fn girsanov(p: &GirsanovParams, n_paths: usize, base: RngStream, out: &mut Out) -> CliResult<()> {
    let f = p.functional;
    let est = girsanov_check(
        move |a: f64, s: &[f64]| {
            let last = s[s.len() - 1];
            match f {
                Functional::ATimesS => a * last,
                Functional::Indicator => f64::from(u8::from(last > 0.0)),
                Functional::One => 1.0,
            }
        },
        &p.mu0,
        &p.times,
        n_paths,
        base,
    )?;
    out.csv("girsanov.csv", |w| {
        writeln!(
            w,
            "# lhs = E[f(A,S)], rhs = E[f(A,B) exp(A B_t - A^2 t/2)], paired draws"
        )?;
        writeln!(w, "quantity,mean,std_error,n")?;
        for (name, e) in [
            ("lhs", est.lhs),
            ("rhs", est.rhs),
            ("difference", est.difference),
        ] {
            writeln!(w, "{name},{},{},{}", e.mean, e.std_error, e.n)?;
        }
        Ok(())
    })
}
