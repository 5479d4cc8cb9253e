//! Repeated QND measurements in discrete time.
//!
//! Each round samples an outcome `i` with probability `∫ dμ_n(α) p(i|α)` and
//! updates `μ` by Bayes' rule. Outcomes are numbered from 0.

use rand::Rng;

use crate::error::{Error, Result};
use crate::measure::GridMeasure;
use crate::scalar::{compensated_sum, Real};
use crate::sde::{uniform01, RngStream};

/// Largest supported outcome alphabet.
pub const MAX_OUTCOMES: usize = 16;

/// Outcome table `p(i|α)` tabulated on the grid of `mu0`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteChainConfig<T> {
    k: usize,
    /// `table[node * k + i] = p(i | α_node)`.
    table: Vec<T>,
    pub mu0: GridMeasure<T>,
    pub n_rounds: usize,
}

impl<T: Real> DiscreteChainConfig<T> {
    /// Tabulate `p(i, α)` for `i in 0..k` at every grid node of `mu0`.
    pub fn new<F: Fn(usize, T) -> T>(
        k: usize,
        p: F,
        mu0: GridMeasure<T>,
        n_rounds: usize,
    ) -> Result<Self> {
        if k == 0 || k > MAX_OUTCOMES {
            return Err(Error::config(
                "outcomes",
                format!("need 1..={MAX_OUTCOMES} outcomes, got {k}"),
            ));
        }
        if !mu0.is_normalized() {
            return Err(Error::Unnormalized);
        }
        let tol = T::of(1e-12);
        let mut table = Vec::with_capacity(k * mu0.n_points());
        for (node, alpha) in mu0.xs().enumerate() {
            let row: Vec<T> = (0..k).map(|i| p(i, alpha)).collect();
            if let Some(bad) = row.iter().find(|v| !(**v >= T::zero()) || !v.is_finite()) {
                return Err(Error::config(
                    "outcome_probabilities",
                    format!("p = {bad} at node {node} is not a probability"),
                ));
            }
            let total = compensated_sum(row.iter().copied());
            if (total - T::one()).abs() > tol {
                return Err(Error::config(
                    "outcome_probabilities",
                    format!("probabilities at α = {alpha} sum to {total}"),
                ));
            }
            table.extend(row);
        }
        for i in 0..k {
            if (0..mu0.n_points()).all(|node| table[node * k + i] == T::zero()) {
                return Err(Error::config(
                    "outcome_probabilities",
                    format!("outcome {i} has zero probability for every α"),
                ));
            }
        }
        Ok(Self {
            k,
            table,
            mu0,
            n_rounds,
        })
    }

    pub fn outcomes(&self) -> usize {
        self.k
    }

    pub fn p(&self, i: usize, node: usize) -> T {
        self.table[node * self.k + i]
    }
}

/// One round: sample an outcome from the predictive law and condition on it.
pub fn discrete_chain_step<T: Real, R: Rng + ?Sized>(
    mu: &GridMeasure<T>,
    cfg: &DiscreteChainConfig<T>,
    rng: &mut R,
) -> Result<(GridMeasure<T>, usize)> {
    if mu.n_points() != cfg.mu0.n_points() {
        return Err(Error::InvalidMeasure(
            "measure grid differs from the outcome table".into(),
        ));
    }
    let masses = mu.masses();
    let predictive: Vec<T> = (0..cfg.k)
        .map(|i| compensated_sum(masses.iter().enumerate().map(|(n, &m)| m * cfg.p(i, n))))
        .collect();
    let u = uniform01::<T, _>(rng) * compensated_sum(predictive.iter().copied());
    let mut acc = T::zero();
    let mut outcome = cfg.k - 1;
    for (i, &q) in predictive.iter().enumerate() {
        acc = acc + q;
        if u < acc && q > T::zero() {
            outcome = i;
            break;
        }
    }
    let lw = mu
        .log_weights()
        .iter()
        .enumerate()
        .map(|(n, &w)| {
            let p = cfg.p(outcome, n);
            if p > T::zero() {
                w + p.ln()
            } else {
                T::neg_infinity()
            }
        })
        .collect();
    Ok((mu.with_log_weights(lw)?.normalized()?, outcome))
}

/// Run `cfg.n_rounds` rounds from `cfg.mu0`; returns the final measure and the
/// outcome sequence.
pub fn run_chain<T: Real>(
    cfg: &DiscreteChainConfig<T>,
    rng: RngStream,
) -> Result<(GridMeasure<T>, Vec<usize>)> {
    let mut r = rng.rng();
    let mut mu = cfg.mu0.clone();
    let mut outcomes = Vec::with_capacity(cfg.n_rounds);
    for _ in 0..cfg.n_rounds {
        let (next, i) = discrete_chain_step(&mu, cfg, &mut r)?;
        mu = next;
        outcomes.push(i);
    }
    Ok((mu, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::par_paths;

    fn informative(mu0: GridMeasure<f64>, n: usize) -> DiscreteChainConfig<f64> {
        DiscreteChainConfig::new(
            2,
            |i, a| if i == 1 { 0.5 + 0.3 * a } else { 0.5 - 0.3 * a },
            mu0,
            n,
        )
        .unwrap()
    }

    #[test]
    fn uninformative_outcomes_leave_measure_alone() {
        let mu0 = GridMeasure::<f64>::gaussian(-1.0, 0.1, 21, 0.0, 0.5).unwrap();
        let cfg = DiscreteChainConfig::new(3, |_, _| 1.0 / 3.0, mu0.clone(), 50).unwrap();
        let (end, outcomes) = run_chain(&cfg, RngStream::new(1, 0)).unwrap();
        for (a, b) in end.masses().iter().zip(mu0.masses()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(outcomes.iter().all(|&i| i < 3));
    }

    #[test]
    fn dirac_frequencies_follow_outcome_law() {
        let mu0 = GridMeasure::<f64>::point_mass(-1.0, 1.0, 3, 2).unwrap();
        let n = 10_000;
        let (_, outcomes) = run_chain(&informative(mu0, n), RngStream::new(2, 0)).unwrap();
        let p = 0.8;
        let freq = outcomes.iter().filter(|&&i| i == 1).count() as f64 / n as f64;
        assert!(
            (freq - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt(),
            "freq {freq}"
        );
    }

    #[test]
    fn sequence_probabilities_are_exchangeable() {
        let mu0 = GridMeasure::<f64>::symmetric_pair(1.0).unwrap();
        let cfg = informative(mu0, 3);
        let n = 100_000;
        let codes: Vec<usize> = par_paths(n, RngStream::new(3, 0), |r| {
            let (_, o) = run_chain(&cfg, r).unwrap();
            o[0] * 4 + o[1] * 2 + o[2]
        });
        let freq = |code: usize| codes.iter().filter(|&&c| c == code).count() as f64 / n as f64;
        let (a, b, c) = (freq(0b110), freq(0b101), freq(0b011));
        for (x, y) in [(a, b), (b, c), (a, c)] {
            let se = ((x * (1.0 - x) + y * (1.0 - y)) / n as f64).sqrt();
            assert!((x - y).abs() <= 3.0 * se, "{a} {b} {c}");
        }
    }

    #[test]
    fn table_validation() {
        let mu0 = GridMeasure::<f64>::symmetric_pair(1.0).unwrap();
        assert!(DiscreteChainConfig::new(2, |_, _| 0.4, mu0.clone(), 1).is_err());
        assert!(
            DiscreteChainConfig::new(2, |i, _| if i == 0 { 1.0 } else { 0.0 }, mu0.clone(), 1)
                .is_err()
        );
        assert!(DiscreteChainConfig::new(17, |_, _| 1.0 / 17.0, mu0.clone(), 1).is_err());
        assert!(
            DiscreteChainConfig::new(2, |i, _| if i == 0 { 1.5 } else { -0.5 }, mu0, 1).is_err()
        );
    }
}
