//! Ensemble and time-average age estimators.
//!
//! Iteration `k` of a run always uses seed `mix_seed(master, k)` and results
//! are reduced in iteration order, so an estimate is bit-identical whatever
//! the thread count.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::distributions::InterUpdateDistribution;
use crate::engine::{age_at, Engine};
use crate::oracle::backward_recurrence_epochs;
use crate::rng::{mix_seed, RngStream};
use crate::stats::summarize;
use crate::topology::{Network, NodeId, SOURCE};

/// Horizon used as a stand-in for `t -> inf`.
pub const DEFAULT_HORIZON: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonteCarloError {
    #[error("need at least 2 iterations, got {0}")]
    TooFewIterations(usize),
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("node {node} is not in a network of {node_count} nodes")]
    UnknownNode { node: NodeId, node_count: usize },
    #[error("{0} is arithmetic; its limiting expected age is undefined")]
    ArithmeticLaw(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci95_half_width: f64,
    pub iterations: usize,
    pub horizon: f64,
    pub master_seed: u64,
}

impl EnsembleEstimate {
    fn from_samples(samples: &[f64], horizon: f64, master_seed: u64) -> Self {
        let s = summarize(samples);
        Self {
            mean: s.mean,
            std_error: s.std_error,
            ci95_half_width: 1.96 * s.std_error,
            iterations: samples.len(),
            horizon,
            master_seed,
        }
    }

    /// `|mean - target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.std_error
    }
}

/// Evaluates `f(k)` for `k in 0..iterations` on `parallelism` threads and
/// returns the results in index order. `parallelism <= 1` runs inline.
pub fn parallel_map<F>(iterations: usize, parallelism: usize, f: F) -> Result<Vec<f64>, MonteCarloError>
where
    F: Fn(u64) -> f64 + Sync + Send,
{
    if parallelism <= 1 {
        return Ok((0..iterations as u64).map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| MonteCarloError::ThreadPool(e.to_string()))?;
    Ok(pool.install(|| (0..iterations as u64).into_par_iter().map(f).collect()))
}

fn check_run(net: &Network, node: NodeId, horizon: f64) -> Result<(), MonteCarloError> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(MonteCarloError::InvalidHorizon(horizon));
    }
    if !net.contains(node) {
        return Err(MonteCarloError::UnknownNode { node, node_count: net.node_count() });
    }
    Ok(())
}

/// Mean of `X_node(horizon)` over independent runs.
pub fn estimate_expected_age(
    net: &Network,
    node: NodeId,
    horizon: f64,
    iterations: usize,
    master_seed: u64,
    parallelism: usize,
) -> Result<EnsembleEstimate, MonteCarloError> {
    check_run(net, node, horizon)?;
    if iterations < 2 {
        return Err(MonteCarloError::TooFewIterations(iterations));
    }
    let samples = parallel_map(iterations, parallelism, |k| age_at(net, horizon, mix_seed(master_seed, k), node))?;
    Ok(EnsembleEstimate::from_samples(&samples, horizon, master_seed))
}

/// `(1/T) * integral_0^T X_node(tau) dtau` along one run, integrated exactly
/// over the piecewise-linear sawtooth.
pub fn estimate_time_average(net: &Network, node: NodeId, horizon: f64, seed: u64) -> Result<f64, MonteCarloError> {
    check_run(net, node, horizon)?;
    if node == SOURCE {
        return Ok(0.0);
    }
    // area under tau - u between a and b
    let segment = |a: f64, b: f64, u: f64| (b - a) * (0.5 * (a + b) - u);
    let mut area = 0.0;
    let mut since = 0.0;
    let mut generation = 0.0;
    let mut engine = Engine::with_seed(net, seed);
    engine.run_until(horizon, |a| {
        if a.to == node && a.current != a.previous {
            area += segment(since, a.time, generation);
            since = a.time;
            generation = a.current;
        }
    });
    area += segment(since, horizon, generation);
    Ok(area / horizon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma1Report {
    pub t: f64,
    pub iterations: usize,
    /// Monte Carlo mean of `A01(t - A12(t))`.
    pub estimate: f64,
    pub std_error: f64,
    /// Long-run mean backward recurrence time of the first link.
    pub analytic_limit: f64,
    pub abs_gap: f64,
}

/// Epochs of a renewal process up to `limit`, drawn into `buf`.
fn renewal_epochs(dist: &InterUpdateDistribution, rng: &mut RngStream, limit: f64, buf: &mut Vec<f64>) {
    buf.clear();
    let sampler = dist.sampler();
    let mut t = sampler.sample(rng);
    while t <= limit {
        buf.push(t);
        t += sampler.sample(rng);
    }
}

/// Checks numerically that evaluating the first link's backward recurrence
/// at the time rewound by the second link's one still converges to the first
/// link's own long-run mean.
///
/// Per iteration the two renewal processes are independent streams of the
/// iteration seed (stream 0 for the first link, stream 1 for the second).
pub fn lemma1_check(
    first: &InterUpdateDistribution,
    second: &InterUpdateDistribution,
    t: f64,
    iterations: usize,
    master_seed: u64,
    parallelism: usize,
) -> Result<Lemma1Report, MonteCarloError> {
    for d in [first, second] {
        if d.is_arithmetic() {
            return Err(MonteCarloError::ArithmeticLaw(d.name()));
        }
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(MonteCarloError::InvalidHorizon(t));
    }
    if iterations < 2 {
        return Err(MonteCarloError::TooFewIterations(iterations));
    }
    let samples = parallel_map(iterations, parallelism, |k| {
        let seed = mix_seed(master_seed, k);
        let mut buf = Vec::new();
        renewal_epochs(second, &mut RngStream::substream(seed, 1), t, &mut buf);
        // t - A12(t), taken as the epoch itself to avoid rounding
        let rewound = buf.last().copied().unwrap_or(0.0);
        renewal_epochs(first, &mut RngStream::substream(seed, 0), rewound, &mut buf);
        backward_recurrence_epochs(&buf, rewound)
    })?;
    let s = summarize(&samples);
    let analytic_limit = first.age_contribution();
    Ok(Lemma1Report {
        t,
        iterations,
        estimate: s.mean,
        std_error: s.std_error,
        analytic_limit,
        abs_gap: (s.mean - analytic_limit).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::InterUpdateDistribution as D;

    #[test]
    fn constant_link_is_deterministic() {
        let net = Network::chain(&[D::constant(0.5).unwrap()]);
        let est = estimate_expected_age(&net, 1, 1000.25, 50, 1, 1).unwrap();
        assert_eq!(est.mean, 0.25);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.ci95_half_width, 0.0);
    }

    #[test]
    fn two_hop_poisson() {
        let e = D::exponential(1.0).unwrap();
        let net = Network::chain(&[e, e]);
        let est = estimate_expected_age(&net, 2, 1000.0, 10_000, 3, 1).unwrap();
        assert!((est.mean - 2.0).abs() < 0.1, "{est:?}");
        assert!((est.ci95_half_width - 1.96 * est.std_error).abs() < 1e-15);
        assert!(est.mean >= 0.0 && est.mean <= 1000.0);
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let net = Network::chain(&[D::rayleigh(1.0).unwrap(), D::beta(2.0, 3.0).unwrap()]);
        let a = estimate_expected_age(&net, 2, 100.0, 200, 9, 1).unwrap();
        let b = estimate_expected_age(&net, 2, 100.0, 200, 9, 4).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn argument_errors() {
        let net = Network::chain(&[D::rayleigh(1.0).unwrap()]);
        assert_eq!(estimate_expected_age(&net, 1, 10.0, 1, 0, 1), Err(MonteCarloError::TooFewIterations(1)));
        assert_eq!(estimate_expected_age(&net, 1, -1.0, 10, 0, 1), Err(MonteCarloError::InvalidHorizon(-1.0)));
        assert!(matches!(estimate_expected_age(&net, 5, 10.0, 10, 0, 1), Err(MonteCarloError::UnknownNode { .. })));
        let c = D::constant(1.0).unwrap();
        assert!(matches!(lemma1_check(&c, &c, 10.0, 10, 0, 1), Err(MonteCarloError::ArithmeticLaw(_))));
    }

    #[test]
    fn time_average_constant() {
        for (d, m) in [(0.5, 2000.0), (0.4, 250.0), (1.0, 7.0)] {
            let net = Network::chain(&[D::constant(d).unwrap()]);
            let avg = estimate_time_average(&net, 1, m * d, 0).unwrap();
            assert!((avg - d / 2.0).abs() < 1e-9, "d = {d}: {avg}");
        }
    }

    #[test]
    fn time_average_source_is_zero() {
        let net = Network::chain(&[D::uniform(0.0, 2.0).unwrap()]);
        assert_eq!(estimate_time_average(&net, 0, 100.0, 1).unwrap(), 0.0);
    }

    #[test]
    fn time_average_uniform_one_hop() {
        let net = Network::chain(&[D::uniform(0.0, 2.0).unwrap()]);
        let avg = estimate_time_average(&net, 1, 1e5, 77).unwrap();
        assert!((avg - 2.0 / 3.0).abs() < 0.01, "{avg}");
    }

    #[test]
    fn time_average_matches_sampled_integral() {
        // midpoint rule on a fine grid as an independent check
        let net = Network::chain(&[D::rayleigh(1.0).unwrap(), D::uniform(0.0, 2.0).unwrap()]);
        let horizon = 40.0;
        let n = 400_000;
        let h = horizon / n as f64;
        let times: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
        let rows = crate::engine::age_trajectory(&net, horizon, 12, &times).unwrap();
        let riemann = rows.iter().map(|r| r[2]).sum::<f64>() * h / horizon;
        let exact = estimate_time_average(&net, 2, horizon, 12).unwrap();
        assert!((riemann - exact).abs() < 1e-3, "{riemann} vs {exact}");
    }

    #[test]
    fn rewound_recurrence_exponential_pair() {
        let e = D::exponential(1.0).unwrap();
        let r = lemma1_check(&e, &e, 1000.0, 100_000, 5, 1).unwrap();
        assert_eq!(r.analytic_limit, 1.0);
        assert!(r.abs_gap < 0.02, "{r:?}");
    }

    #[test]
    fn rewound_recurrence_uniform_pair() {
        let u = D::uniform(0.0, 2.0).unwrap();
        let r = lemma1_check(&u, &u, 1000.0, 20_000, 6, 1).unwrap();
        assert!((r.estimate - 2.0 / 3.0).abs() < 5.0 * r.std_error, "{r:?}");
    }
}
