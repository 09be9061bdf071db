//! Experiment drivers behind the sweep and table subcommands.

use aoi_core::analytic::variance_sweep_prediction;
use aoi_core::montecarlo::{estimate_expected_age, lemma1_check, Lemma1Report, MonteCarloError};
use aoi_core::stats::{linear_fit, LinearFit};
use aoi_core::{EnsembleEstimate, InterUpdateDistribution, Network};

/// The three laws mapped onto the links of a 3-hop chain.
pub fn table2_laws() -> [InterUpdateDistribution; 3] {
    [
        InterUpdateDistribution::Rayleigh { scale: 1.0 },
        InterUpdateDistribution::ChiSquare { k: 1 },
        InterUpdateDistribution::Beta { alpha: 2.0, beta: 3.0 },
    ]
}

/// All six assignments of the three laws to links (0,1), (1,2), (2,3).
pub fn table2_permutations() -> Vec<[InterUpdateDistribution; 3]> {
    let [r, c, b] = table2_laws();
    vec![[r, c, b], [r, b, c], [c, r, b], [c, b, r], [b, c, r], [b, r, c]]
}

#[derive(Debug, Clone)]
pub struct Table2Row {
    pub links: [InterUpdateDistribution; 3],
    pub estimate: EnsembleEstimate,
    pub predicted: f64,
}

pub fn reproduce_table2(horizon: f64, iterations: usize, seed: u64, threads: usize) -> Result<Vec<Table2Row>, MonteCarloError> {
    table2_permutations()
        .into_iter()
        .map(|links| {
            let net = Network::chain(&links);
            let estimate = estimate_expected_age(&net, 3, horizon, iterations, seed, threads)?;
            let predicted = links.iter().map(|d| d.age_contribution()).sum();
            Ok(Table2Row { links, estimate, predicted })
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    /// Hop count or variance, depending on the sweep.
    pub x: f64,
    pub estimate: EnsembleEstimate,
    pub predicted: f64,
}

/// Simulated age fitted against the sweep variable.
pub fn fit(rows: &[SweepRow]) -> LinearFit {
    let xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.estimate.mean).collect();
    linear_fit(&xs, &ys)
}

/// End-user age of `n`-hop chains of identical links for `n = 1..=n_max`.
pub fn sweep_hops(
    dist: &InterUpdateDistribution,
    n_max: usize,
    horizon: f64,
    iterations: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<SweepRow>, MonteCarloError> {
    if dist.is_arithmetic() {
        return Err(MonteCarloError::ArithmeticLaw(dist.name()));
    }
    (1..=n_max)
        .map(|n| {
            let net = Network::chain(&vec![*dist; n]);
            let estimate = estimate_expected_age(&net, n, horizon, iterations, seed, threads)?;
            Ok(SweepRow { x: n as f64, estimate, predicted: n as f64 * dist.age_contribution() })
        })
        .collect()
}

/// End-user age of a `hops`-hop chain of unit-mean uniform links, one row per
/// variance in `grid`.
pub fn sweep_variance(
    grid: &[f64],
    hops: usize,
    horizon: f64,
    iterations: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<SweepRow>, SweepError> {
    grid.iter()
        .map(|&v| {
            if !(v > 0.0 && v <= 1.0 / 3.0) {
                return Err(SweepError::Variance(v));
            }
            let dist = InterUpdateDistribution::unit_mean_uniform(v).map_err(|_| SweepError::Variance(v))?;
            let net = Network::chain(&vec![dist; hops]);
            let estimate = estimate_expected_age(&net, hops, horizon, iterations, seed, threads)?;
            let predicted = variance_sweep_prediction(v, hops).map_err(|_| SweepError::Variance(v))?;
            Ok(SweepRow { x: v, estimate, predicted })
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("variance {0} outside (0, 1/3]")]
    Variance(f64),
    #[error(transparent)]
    MonteCarlo(#[from] MonteCarloError),
}

pub fn lemma1_sweep(
    first: &InterUpdateDistribution,
    second: &InterUpdateDistribution,
    t_grid: &[f64],
    iterations: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<Lemma1Report>, MonteCarloError> {
    t_grid.iter().map(|&t| lemma1_check(first, second, t, iterations, seed, threads)).collect()
}
