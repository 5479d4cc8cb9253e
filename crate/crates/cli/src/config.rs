//! Experiment configuration.
//!
//! Configs are TOML: top-level `experiment`, `seed`, `n_paths`, `output`, and
//! one table per parameter group (`[time]`, `[measure]`, `[qnd]`, ...). Every
//! value is checked, and core objects are built, before anything runs; unknown
//! keys are rejected so typos do not silently fall back to defaults.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::path::PathBuf;

use qmon_core::lindblad::LindbladSpec;
use qmon_core::packet::{EllMode, PhysicalScales, Potential};
use qmon_core::qnd::QndScheme;
use qmon_core::{GridMeasure, TimeGrid};
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 20_240_611;

pub const EXPERIMENTS: [&str; 10] = [
    "qnd-observer",
    "qnd-cheater",
    "qnd-discrete",
    "diffusion",
    "lindblad-sde",
    "packet",
    "langevin",
    "double-scaling",
    "girsanov",
    "verify-suite",
];

/// Typed access to one TOML table, remembering which keys were read.
pub struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    used: RefCell<BTreeSet<String>>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'static str) -> CliResult<Self> {
        let table = if name.is_empty() {
            Some(root)
        } else {
            match root.get(name) {
                None => None,
                Some(Value::Table(t)) => Some(t),
                Some(_) => return Err(CliError::config(name, "must be a table")),
            }
        };
        Ok(Self {
            name,
            table,
            used: RefCell::new(BTreeSet::new()),
        })
    }

    pub fn path(&self, key: &str) -> String {
        if self.name.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.name)
        }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.used.borrow_mut().insert(key.to_string());
        self.table.and_then(|t| t.get(key))
    }

    fn missing(&self, key: &str) -> CliError {
        CliError::config(self.path(key), "missing required key")
    }

    fn as_f64(&self, key: &str, v: &Value) -> CliResult<f64> {
        let x = match v {
            Value::Float(f) => *f,
            Value::Integer(i) => *i as f64,
            _ => return Err(CliError::config(self.path(key), "expected a number")),
        };
        if !x.is_finite() {
            return Err(CliError::config(self.path(key), "must be finite"));
        }
        Ok(x)
    }

    pub fn f64(&self, key: &str) -> CliResult<f64> {
        let v = self.get(key).ok_or_else(|| self.missing(key))?;
        self.as_f64(key, v)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> CliResult<f64> {
        self.get(key).map_or(Ok(default), |v| self.as_f64(key, v))
    }

    pub fn opt_f64(&self, key: &str) -> CliResult<Option<f64>> {
        self.get(key).map(|v| self.as_f64(key, v)).transpose()
    }

    pub fn positive(&self, key: &str) -> CliResult<f64> {
        let x = self.f64(key)?;
        if x > 0.0 {
            Ok(x)
        } else {
            Err(CliError::config(
                self.path(key),
                format!("must be positive, got {x}"),
            ))
        }
    }

    pub fn positive_or(&self, key: &str, default: f64) -> CliResult<f64> {
        let x = self.f64_or(key, default)?;
        if x > 0.0 {
            Ok(x)
        } else {
            Err(CliError::config(
                self.path(key),
                format!("must be positive, got {x}"),
            ))
        }
    }

    fn as_u64(&self, key: &str, v: &Value) -> CliResult<u64> {
        match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            _ => Err(CliError::config(
                self.path(key),
                "expected a non-negative integer",
            )),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> CliResult<u64> {
        self.get(key).map_or(Ok(default), |v| self.as_u64(key, v))
    }

    pub fn usize(&self, key: &str) -> CliResult<usize> {
        let v = self.get(key).ok_or_else(|| self.missing(key))?;
        Ok(self.as_u64(key, v)? as usize)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> CliResult<usize> {
        Ok(self.u64_or(key, default as u64)? as usize)
    }

    pub fn str(&self, key: &str) -> CliResult<&'a str> {
        match self.get(key) {
            Some(Value::String(s)) => Ok(s),
            Some(_) => Err(CliError::config(self.path(key), "expected a string")),
            None => Err(self.missing(key)),
        }
    }

    pub fn str_or(&self, key: &str, default: &'a str) -> CliResult<&'a str> {
        match self.get(key) {
            None => Ok(default),
            Some(_) => self.str(key),
        }
    }

    pub fn f64_list(&self, key: &str) -> CliResult<Vec<f64>> {
        match self.get(key) {
            Some(Value::Array(a)) => a.iter().map(|v| self.as_f64(key, v)).collect(),
            Some(_) => Err(CliError::config(
                self.path(key),
                "expected an array of numbers",
            )),
            None => Err(self.missing(key)),
        }
    }

    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> CliResult<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(_) => self.f64_list(key),
        }
    }

    pub fn str_list_or(&self, key: &str, default: &[&str]) -> CliResult<Vec<String>> {
        match self.get(key) {
            None => Ok(default.iter().map(|s| s.to_string()).collect()),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(CliError::config(
                        self.path(key),
                        "expected an array of strings",
                    )),
                })
                .collect(),
            Some(_) => Err(CliError::config(
                self.path(key),
                "expected an array of strings",
            )),
        }
    }

    pub fn usize_list(&self, key: &str) -> CliResult<Vec<usize>> {
        match self.get(key) {
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| Ok(self.as_u64(key, v)? as usize))
                .collect(),
            Some(_) => Err(CliError::config(
                self.path(key),
                "expected an array of integers",
            )),
            None => Err(self.missing(key)),
        }
    }

    /// Reject keys that were never read.
    pub fn finish(&self) -> CliResult<()> {
        let Some(t) = self.table else { return Ok(()) };
        let used = self.used.borrow();
        for (k, v) in t {
            if self.name.is_empty() && matches!(v, Value::Table(_)) {
                continue;
            }
            if !used.contains(k) {
                return Err(CliError::config(self.path(k), "unknown key"));
            }
        }
        Ok(())
    }
}

fn core_key(key: &str) -> impl Fn(qmon_core::Error) -> CliError + '_ {
    move |e| match e {
        qmon_core::Error::Config { key: k, reason } => {
            CliError::config(format!("{key}.{k}"), reason)
        }
        other => CliError::config(key, other.to_string()),
    }
}

/// `dt` and `t_end` from `[time]`.
pub fn time_grid(s: &Section) -> CliResult<TimeGrid<f64>> {
    let dt = s.positive("dt")?;
    let t_end = s.positive("t_end")?;
    let ratio = t_end / dt;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * ratio.max(1.0) || n < 1.0 {
        return Err(CliError::config(
            s.path("t_end"),
            "must be a positive multiple of dt",
        ));
    }
    TimeGrid::new(0.0, dt, n as usize).map_err(core_key("time"))
}

/// Initial measure from `[measure]`.
pub fn measure(s: &Section) -> CliResult<GridMeasure<f64>> {
    let kind = s.str("kind")?;
    let built = match kind {
        "gaussian" => GridMeasure::gaussian(
            s.f64("x_min")?,
            s.positive("dx")?,
            s.usize("n")?,
            s.f64("mean")?,
            s.positive("sd")?,
        ),
        "two-point" => GridMeasure::two_point(s.f64("lo")?, s.f64("hi")?, s.f64("p_hi")?),
        "point-mass" => GridMeasure::point_mass(
            s.f64("x_min")?,
            s.positive("dx")?,
            s.usize("n")?,
            s.usize("node")?,
        ),
        "atoms" => {
            let nodes = s.usize_list("nodes")?;
            let masses = s.f64_list("masses")?;
            if nodes.len() != masses.len() {
                return Err(CliError::config(
                    s.path("masses"),
                    "needs one mass per node",
                ));
            }
            let atoms: Vec<(usize, f64)> = nodes.into_iter().zip(masses).collect();
            GridMeasure::atoms(s.f64("x_min")?, s.positive("dx")?, s.usize("n")?, &atoms)
        }
        other => {
            return Err(CliError::config(
                s.path("kind"),
                format!("unknown measure `{other}` (gaussian | two-point | point-mass | atoms)"),
            ))
        }
    };
    built.map_err(core_key("measure"))
}

#[derive(Clone, Debug)]
pub struct QndParams {
    pub gamma: f64,
    pub scheme: QndScheme,
    pub mu0: GridMeasure<f64>,
    pub grid: TimeGrid<f64>,
}

#[derive(Clone, Debug)]
pub struct DiscreteParams {
    pub intercepts: Vec<f64>,
    pub slopes: Vec<f64>,
    pub rounds: usize,
    pub mu0: GridMeasure<f64>,
}

#[derive(Clone, Debug)]
pub struct DiffusionParams {
    pub d: f64,
    pub gamma: f64,
    pub mu0: GridMeasure<f64>,
    pub grid: TimeGrid<f64>,
}

#[derive(Clone, Debug)]
pub struct LindbladParams {
    pub spec: LindbladSpec<f64>,
    pub gammas: Vec<f64>,
    pub reference_paths: usize,
    pub mu0: GridMeasure<f64>,
    pub grid: TimeGrid<f64>,
}

#[derive(Clone, Debug)]
pub struct PacketParams {
    pub scales: PhysicalScales<f64>,
    pub big_omega: f64,
    pub potential: Potential<f64>,
    pub a: Option<(f64, f64)>,
    pub x0: f64,
    pub v0: f64,
    pub grid: TimeGrid<f64>,
}

#[derive(Clone, Debug)]
pub struct LangevinParams {
    pub potential: Potential<f64>,
    pub big_omega: f64,
    pub eps: f64,
    pub m: f64,
    pub x0: f64,
    pub v0: f64,
    pub grid: TimeGrid<f64>,
    pub record_every: usize,
}

#[derive(Clone, Debug)]
pub struct DoubleScalingParams {
    pub big_omega: f64,
    pub eps: f64,
    pub omegas: Vec<f64>,
    pub horizon: f64,
    pub x0: f64,
    pub v0: f64,
    pub dt_omega: f64,
    pub ell_mode: EllMode<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Functional {
    /// `A · S_t` at the last time.
    ATimesS,
    /// `1{S_t > 0}` at the last time.
    Indicator,
    One,
}

#[derive(Clone, Debug)]
pub struct GirsanovParams {
    pub functional: Functional,
    pub times: Vec<f64>,
    pub mu0: GridMeasure<f64>,
}

#[derive(Clone, Debug)]
pub struct SuiteParams {
    pub criteria: Vec<String>,
}

#[derive(Clone, Debug)]
pub enum Experiment {
    QndObserver(QndParams),
    QndCheater(QndParams),
    QndDiscrete(DiscreteParams),
    Diffusion(DiffusionParams),
    LindbladSde(LindbladParams),
    Packet(PacketParams),
    Langevin(LangevinParams),
    DoubleScaling(DoubleScalingParams),
    Girsanov(GirsanovParams),
    VerifySuite(SuiteParams),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Self::QndObserver(_) => "qnd-observer",
            Self::QndCheater(_) => "qnd-cheater",
            Self::QndDiscrete(_) => "qnd-discrete",
            Self::Diffusion(_) => "diffusion",
            Self::LindbladSde(_) => "lindblad-sde",
            Self::Packet(_) => "packet",
            Self::Langevin(_) => "langevin",
            Self::DoubleScaling(_) => "double-scaling",
            Self::Girsanov(_) => "girsanov",
            Self::VerifySuite(_) => "verify-suite",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub n_paths: usize,
    pub output: Option<PathBuf>,
    /// The TOML text this config was parsed from.
    pub source: String,
}

fn qnd(root: &Table, observer: bool) -> CliResult<(QndParams, Vec<Section<'_>>)> {
    let q = Section::new(root, "qnd")?;
    let m = Section::new(root, "measure")?;
    let t = Section::new(root, "time")?;
    let gamma = q.positive("gamma")?;
    let scheme = if observer {
        let name = q.str_or("scheme", "exponential")?;
        QndScheme::parse(name)
            .ok_or_else(|| CliError::config(q.path("scheme"), "expected exponential | linear"))?
    } else {
        QndScheme::Exponential
    };
    let p = QndParams {
        gamma,
        scheme,
        mu0: measure(&m)?,
        grid: time_grid(&t)?,
    };
    Ok((p, vec![q, m, t]))
}

fn potential(s: &Section, m: f64, big_omega: f64) -> CliResult<Potential<f64>> {
    let lambda = s.f64_or("lambda", 0.0)?;
    Ok(if lambda != 0.0 {
        Potential::anharmonic(m, big_omega, lambda)
    } else if big_omega != 0.0 {
        Potential::harmonic(m, big_omega)
    } else {
        Potential::Free
    })
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::config("<file>", e.message().to_string()))?;
        let top = Section::new(&root, "")?;
        let kind = top.str("experiment")?;
        let seed = top.u64_or("seed", DEFAULT_SEED)?;
        let n_paths = top.usize_or("n_paths", 1)?;
        if n_paths == 0 {
            return Err(CliError::config("n_paths", "must be at least 1"));
        }
        let output = match top.get("output") {
            None => None,
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => return Err(CliError::config("output", "expected a path string")),
        };
        let (experiment, sections) = match kind {
            "qnd-observer" => {
                let (p, s) = qnd(&root, true)?;
                (Experiment::QndObserver(p), s)
            }
            "qnd-cheater" => {
                let (p, s) = qnd(&root, false)?;
                (Experiment::QndCheater(p), s)
            }
            "qnd-discrete" => {
                let d = Section::new(&root, "discrete")?;
                let m = Section::new(&root, "measure")?;
                let intercepts = d.f64_list("intercepts")?;
                let slopes = d.f64_list_or("slopes", &vec![0.0; intercepts.len()])?;
                if slopes.len() != intercepts.len() {
                    return Err(CliError::config(
                        d.path("slopes"),
                        "needs one slope per outcome",
                    ));
                }
                let p = DiscreteParams {
                    intercepts,
                    slopes,
                    rounds: d.usize("rounds")?,
                    mu0: measure(&m)?,
                };
                (Experiment::QndDiscrete(p), vec![d, m])
            }
            "diffusion" => {
                let d = Section::new(&root, "diffusion")?;
                let m = Section::new(&root, "measure")?;
                let t = Section::new(&root, "time")?;
                let gamma = d.f64("gamma")?;
                if gamma < 0.0 {
                    return Err(CliError::config(d.path("gamma"), "must be non-negative"));
                }
                let p = DiffusionParams {
                    d: d.positive("d")?,
                    gamma,
                    mu0: measure(&m)?,
                    grid: time_grid(&t)?,
                };
                (Experiment::Diffusion(p), vec![d, m, t])
            }
            "lindblad-sde" => {
                let l = Section::new(&root, "lindblad")?;
                let m = Section::new(&root, "measure")?;
                let t = Section::new(&root, "time")?;
                let spec = match l.str("model")? {
                    "quantum-laplacian" => LindbladSpec::quantum_laplacian(l.positive("d")?),
                    "ou" => {
                        LindbladSpec::ornstein_uhlenbeck(l.positive("k")?, l.positive("sigma")?)
                    }
                    other => {
                        return Err(CliError::config(
                            l.path("model"),
                            format!("unknown model `{other}` (quantum-laplacian | ou)"),
                        ))
                    }
                }
                .map_err(core_key("lindblad"))?;
                let gammas = l.f64_list("gammas")?;
                if gammas.is_empty() || gammas.iter().any(|g| *g < 0.0) {
                    return Err(CliError::config(
                        l.path("gammas"),
                        "need non-negative rates",
                    ));
                }
                let p = LindbladParams {
                    spec,
                    gammas,
                    reference_paths: l.usize_or("reference_paths", 0)?,
                    mu0: measure(&m)?,
                    grid: time_grid(&t)?,
                };
                (Experiment::LindbladSde(p), vec![l, m, t])
            }
            "packet" => {
                let s = Section::new(&root, "packet")?;
                let t = Section::new(&root, "time")?;
                let scales =
                    PhysicalScales::from_omega_ell(s.positive("omega")?, s.positive("ell")?)
                        .map_err(core_key("packet"))?;
                let big_omega = s.f64_or("big_omega", 0.0)?;
                let a = match (s.opt_f64("a_re")?, s.opt_f64("a_im")?) {
                    (Some(re), im) if re > 0.0 => Some((re, im.unwrap_or(0.0))),
                    (Some(_), _) => {
                        return Err(CliError::config(s.path("a_re"), "must be positive"))
                    }
                    (None, Some(_)) => {
                        return Err(CliError::config(s.path("a_re"), "required with a_im"))
                    }
                    (None, None) => None,
                };
                let p = PacketParams {
                    potential: potential(&s, scales.m, big_omega)?,
                    scales,
                    big_omega,
                    a,
                    x0: s.f64_or("x0", 0.0)?,
                    v0: s.f64_or("v0", 0.0)?,
                    grid: time_grid(&t)?,
                };
                (Experiment::Packet(p), vec![s, t])
            }
            "langevin" => {
                let s = Section::new(&root, "langevin")?;
                let t = Section::new(&root, "time")?;
                let m = s.positive_or("m", 1.0)?;
                let big_omega = s.f64_or("big_omega", 0.0)?;
                let eps = s.f64("eps")?;
                if eps < 0.0 {
                    return Err(CliError::config(s.path("eps"), "must be non-negative"));
                }
                let grid = time_grid(&t)?;
                let auto = grid.n_steps().div_ceil(1000).max(1);
                let record_every = s.usize_or("record_every", auto)?;
                if record_every == 0 || grid.n_steps() % record_every != 0 {
                    return Err(CliError::config(
                        s.path("record_every"),
                        "must divide the number of steps",
                    ));
                }
                let p = LangevinParams {
                    potential: potential(&s, m, big_omega)?,
                    big_omega,
                    eps,
                    m,
                    x0: s.f64_or("x0", 0.0)?,
                    v0: s.f64_or("v0", 0.0)?,
                    grid,
                    record_every,
                };
                (Experiment::Langevin(p), vec![s, t])
            }
            "double-scaling" => {
                let s = Section::new(&root, "double_scaling")?;
                let omegas = s.f64_list("omegas")?;
                if omegas.is_empty() || omegas.iter().any(|w| *w <= 0.0) {
                    return Err(CliError::config(
                        s.path("omegas"),
                        "need positive frequencies",
                    ));
                }
                let dt_omega = s.positive_or("dt_omega", 1e-2)?;
                if dt_omega > 1e-2 {
                    return Err(CliError::config(
                        s.path("dt_omega"),
                        "dt must be at most 1e-2/omega",
                    ));
                }
                let p = DoubleScalingParams {
                    big_omega: s.f64_or("big_omega", 1.0)?,
                    eps: s.positive_or("eps", 1.0)?,
                    omegas,
                    horizon: s.positive_or("horizon", 1.0)?,
                    x0: s.f64_or("x0", 2.0)?,
                    v0: s.f64_or("v0", 0.0)?,
                    dt_omega,
                    ell_mode: match s.opt_f64("fixed_ell")? {
                        Some(l) if l > 0.0 => EllMode::FixedEll(l),
                        Some(_) => {
                            return Err(CliError::config(s.path("fixed_ell"), "must be positive"))
                        }
                        None => EllMode::FixedEps,
                    },
                };
                (Experiment::DoubleScaling(p), vec![s])
            }
            "girsanov" => {
                let g = Section::new(&root, "girsanov")?;
                let m = Section::new(&root, "measure")?;
                let functional = match g.str_or("functional", "a-times-s")? {
                    "a-times-s" => Functional::ATimesS,
                    "indicator" => Functional::Indicator,
                    "one" => Functional::One,
                    other => {
                        return Err(CliError::config(
                            g.path("functional"),
                            format!("unknown functional `{other}` (a-times-s | indicator | one)"),
                        ))
                    }
                };
                let times = g.f64_list_or("times", &[1.0])?;
                if times.is_empty() || times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(CliError::config(
                        g.path("times"),
                        "must be positive and increasing",
                    ));
                }
                let p = GirsanovParams {
                    functional,
                    times,
                    mu0: measure(&m)?,
                };
                (Experiment::Girsanov(p), vec![g, m])
            }
            "verify-suite" => {
                let s = Section::new(&root, "suite")?;
                let all: Vec<&str> = crate::suite::CRITERIA.iter().map(|c| c.0).collect();
                let criteria = s.str_list_or("criteria", &all)?;
                if let Some(bad) = criteria.iter().find(|c| !all.contains(&c.as_str())) {
                    return Err(CliError::config(
                        s.path("criteria"),
                        format!("unknown criterion `{bad}`"),
                    ));
                }
                (Experiment::VerifySuite(SuiteParams { criteria }), vec![s])
            }
            other => {
                return Err(CliError::config(
                    "experiment",
                    format!(
                        "unknown experiment `{other}` (one of {})",
                        EXPERIMENTS.join(", ")
                    ),
                ))
            }
        };
        for s in &sections {
            s.finish()?;
        }
        top.finish()?;
        let allowed: BTreeSet<&str> = sections.iter().map(|s| s.name).collect();
        for (k, v) in &root {
            if matches!(v, Value::Table(_)) && !allowed.contains(k.as_str()) {
                return Err(CliError::config(k, format!("section not used by `{kind}`")));
            }
        }
        Ok(Self {
            experiment,
            seed,
            n_paths,
            output,
            source: text.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const QND: &str = r#"
experiment = "qnd-observer"
seed = 7
[qnd]
gamma = 0.5
[measure]
kind = "two-point"
lo = -1.0
hi = 1.0
p_hi = 0.5
[time]
dt = 0.01
t_end = 1.0
"#;

    #[test]
    fn parses_qnd_config() {
        let c = ExperimentConfig::parse(QND).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.n_paths, 1);
        match c.experiment {
            Experiment::QndObserver(p) => {
                assert_eq!(p.gamma, 0.5);
                assert_eq!(p.grid.n_steps(), 100);
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn missing_gamma_is_named() {
        let text = QND.replace("gamma = 0.5", "");
        let e = ExperimentConfig::parse(&text).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("qnd.gamma"), "{e}");
    }

    #[test]
    fn typos_and_bad_values_are_rejected() {
        let e = ExperimentConfig::parse(&QND.replace("gamma = 0.5", "gamma = 0.5\ngama = 1"))
            .unwrap_err();
        assert!(e.to_string().contains("qnd.gama"));
        let e = ExperimentConfig::parse(&QND.replace("gamma = 0.5", "gamma = -1")).unwrap_err();
        assert!(e.to_string().contains("qnd.gamma"));
        let e = ExperimentConfig::parse(&QND.replace("t_end = 1.0", "t_end = 1.005")).unwrap_err();
        assert!(e.to_string().contains("time.t_end"));
        let e = ExperimentConfig::parse(&QND.replace("p_hi = 0.5", "p_hi = 1.5")).unwrap_err();
        assert!(e.to_string().contains("measure"));
        let e = ExperimentConfig::parse(&format!("{QND}\n[langevin]\neps = 1\n")).unwrap_err();
        assert!(e.to_string().contains("langevin"));
        let e = ExperimentConfig::parse("experiment = \"nope\"").unwrap_err();
        assert!(e.to_string().contains("experiment"));
    }

    #[test]
    fn double_scaling_step_bound() {
        let text =
            "experiment = \"double-scaling\"\n[double_scaling]\nomegas = [10.0]\ndt_omega = 0.05\n";
        let e = ExperimentConfig::parse(text).unwrap_err();
        assert!(e.to_string().contains("double_scaling.dt_omega"));
    }
}
