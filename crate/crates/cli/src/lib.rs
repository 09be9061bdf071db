//! Command-line front end: reads network configs, runs experiments and writes
//! CSV or JSON. Every command is a pure function of its arguments and seed.

pub mod experiments;

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use aoi_core::analytic::{node_expected_age, AnalyticError};
use aoi_core::engine::{
    age_trajectory, read_trajectory_csv, simulate, simulate_recorded, write_trajectory_csv, Engine, Replay,
};
use aoi_core::montecarlo::{estimate_expected_age, estimate_time_average, MonteCarloError, DEFAULT_HORIZON};
use aoi_core::oracle::{recursive_age, GeneralOracle};
use aoi_core::rng::mix_seed;
use aoi_core::{InterUpdateDistribution, LinkTrajectory, Network, NodeId};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_SEED: u64 = 42;
/// Largest engine/oracle disagreement accepted by `oracle-check`.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Config(_) | CliError::Io(_) | CliError::Csv(_) => 2,
        }
    }
}

fn config<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "aoi", version, about = "Age of information in multi-hop cache-updating networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form long-run expected age per node (tree networks only), as JSON lines
    Analytic {
        #[arg(long)]
        net: PathBuf,
        /// Nodes to report; all nodes when omitted
        #[arg(long)]
        node: Vec<NodeId>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One seeded run: ages of every node at the horizon, as JSON
    Simulate {
        #[arg(long)]
        net: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Also dump every link's renewal epochs to this CSV file
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
    /// Ensemble average of one node's age at the horizon, as a JSON record
    Estimate {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        node: NodeId,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        ensemble: EnsembleArgs,
    },
    /// Exact time average of one node's age along a single run, as JSON
    TimeAverage {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        node: NodeId,
        #[command(flatten)]
        run: RunArgs,
    },
    /// The six link assignments of Rayleigh(1), ChiSquare(1), Beta(2,3) on a 3-hop chain, as CSV
    ReproduceTable2 {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// Use the full 2e5 iterations per row
        #[arg(long, conflicts_with = "iters")]
        full_scale: bool,
    },
    /// Age against hop count for chains of identical links, as CSV
    SweepHops {
        #[arg(long, default_value = r#"{"kind":"uniform","a":0.0,"b":2.0}"#)]
        dist: String,
        #[arg(long, default_value_t = 10)]
        n_max: usize,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        ensemble: EnsembleArgs,
    },
    /// Age against variance for unit-mean uniform links, as CSV
    SweepVariance {
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.15,0.2,0.25,0.3")]
        v_grid: Vec<f64>,
        #[arg(long, default_value_t = 4)]
        hops: usize,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        ensemble: EnsembleArgs,
    },
    /// Compares engine ages with the backward-recurrence oracle
    OracleCheck {
        #[arg(long)]
        net: PathBuf,
        /// Number of seeded runs
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        /// Replay this trajectory CSV instead of running seeds
        #[arg(long)]
        trajectories: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Convergence of the rewound backward recurrence time, as CSV
    Lemma1 {
        #[arg(long, default_value = r#"{"kind":"uniform","a":0.0,"b":2.0}"#)]
        dist01: String,
        #[arg(long, default_value = r#"{"kind":"rayleigh","scale":1.0}"#)]
        dist12: String,
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
        t_grid: Vec<f64>,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        ensemble: EnsembleArgs,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    pub horizon: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output file; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    /// Worker threads; defaults to AOI_THREADS, then to the number of cores
    #[arg(long, env = "AOI_THREADS")]
    pub threads: Option<usize>,
}

impl EnsembleArgs {
    fn threads(&self) -> usize {
        self.threads
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }
}

pub fn load_network(path: &Path) -> Result<Network, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Network::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn parse_dist(text: &str) -> Result<InterUpdateDistribution, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(format!("distribution {text}: {e}")))
}

/// Short digest of the canonical network JSON.
pub fn config_hash(net: &Network) -> String {
    let canonical = serde_json::to_string(net).expect("network serializes");
    hex::encode(&Sha256::digest(canonical.as_bytes())[..8])
}

fn check_horizon(horizon: f64) -> Result<(), CliError> {
    if horizon.is_finite() && horizon > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("horizon must be positive, got {horizon}")))
    }
}

fn check_node(net: &Network, node: NodeId) -> Result<(), CliError> {
    if net.contains(node) {
        Ok(())
    } else {
        Err(CliError::Config(format!("node {node} not in network of {} nodes", net.node_count())))
    }
}

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn json_line<T: Serialize>(buf: &mut Vec<u8>, value: &T) {
    serde_json::to_writer(&mut *buf, value).expect("serializable");
    buf.push(b'\n');
}

fn mc_error(e: MonteCarloError) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Serialize)]
struct EstimateRecord<'a> {
    config_hash: &'a str,
    node: NodeId,
    #[serde(rename = "T")]
    horizon: f64,
    iterations: usize,
    mean: f64,
    std_error: f64,
    ci95: f64,
}

/// Runs a parsed command, writing its artifact to `--out` or stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analytic { net, node, out } => {
            let net = load_network(&net)?;
            let nodes = if node.is_empty() { (0..net.node_count()).collect() } else { node };
            let mut buf = Vec::new();
            for n in nodes {
                let prediction = node_expected_age(&net, n).map_err(|e| match e {
                    AnalyticError::Topology(t) => config(t),
                    other => config(other),
                })?;
                json_line(&mut buf, &prediction);
            }
            emit(&out, &buf)
        }
        Command::Simulate { net, run, trajectories } => {
            let net = load_network(&net)?;
            check_horizon(run.horizon)?;
            let snap = if trajectories.is_some() {
                simulate_recorded(&net, run.horizon, run.seed)
            } else {
                simulate(&net, run.horizon, run.seed)
            };
            if let (Some(path), Some(trajs)) = (&trajectories, &snap.trajectories) {
                write_trajectory_csv(trajs, fs::File::create(path)?)?;
            }
            #[derive(Serialize)]
            struct Snapshot<'a> {
                time: f64,
                seed: u64,
                ages: &'a [f64],
            }
            let mut buf = Vec::new();
            json_line(&mut buf, &Snapshot { time: snap.time, seed: run.seed, ages: &snap.ages });
            emit(&run.out, &buf)
        }
        Command::Estimate { net, node, run, ensemble } => {
            let net = load_network(&net)?;
            check_node(&net, node)?;
            let est = estimate_expected_age(&net, node, run.horizon, ensemble.iters, run.seed, ensemble.threads())
                .map_err(mc_error)?;
            let hash = config_hash(&net);
            let mut buf = Vec::new();
            json_line(
                &mut buf,
                &EstimateRecord {
                    config_hash: &hash,
                    node,
                    horizon: est.horizon,
                    iterations: est.iterations,
                    mean: est.mean,
                    std_error: est.std_error,
                    ci95: est.ci95_half_width,
                },
            );
            emit(&run.out, &buf)
        }
        Command::TimeAverage { net, node, run } => {
            let net = load_network(&net)?;
            check_node(&net, node)?;
            let avg = estimate_time_average(&net, node, run.horizon, run.seed).map_err(mc_error)?;
            #[derive(Serialize)]
            struct Record<'a> {
                config_hash: &'a str,
                node: NodeId,
                #[serde(rename = "T")]
                horizon: f64,
                seed: u64,
                time_average: f64,
            }
            let hash = config_hash(&net);
            let mut buf = Vec::new();
            json_line(&mut buf, &Record { config_hash: &hash, node, horizon: run.horizon, seed: run.seed, time_average: avg });
            emit(&run.out, &buf)
        }
        Command::ReproduceTable2 { run, ensemble, full_scale } => {
            let iters = if full_scale { 200_000 } else { ensemble.iters };
            let rows = experiments::reproduce_table2(run.horizon, iters, run.seed, ensemble.threads()).map_err(mc_error)?;
            let mut w = csv_writer();
            w.write_record(["link_01", "link_12", "link_23", "mean", "std_error", "ci95", "predicted"])?;
            for r in &rows {
                let mut rec: Vec<String> = r.links.iter().map(|d| d.name()).collect();
                rec.extend([r.estimate.mean, r.estimate.std_error, r.estimate.ci95_half_width, r.predicted].map(fmt));
                w.write_record(&rec)?;
            }
            emit(&run.out, &finish(w)?)
        }
        Command::SweepHops { dist, n_max, run, ensemble } => {
            let dist = parse_dist(&dist)?;
            if n_max == 0 {
                return Err(CliError::Config("n-max must be at least 1".into()));
            }
            let rows = experiments::sweep_hops(&dist, n_max, run.horizon, ensemble.iters, run.seed, ensemble.threads())
                .map_err(mc_error)?;
            emit(&run.out, &sweep_csv("n", &rows)?)?;
            report_fit("n", &rows);
            Ok(())
        }
        Command::SweepVariance { v_grid, hops, run, ensemble } => {
            if v_grid.is_empty() || hops == 0 {
                return Err(CliError::Config("need a nonempty v-grid and hops >= 1".into()));
            }
            let rows = experiments::sweep_variance(&v_grid, hops, run.horizon, ensemble.iters, run.seed, ensemble.threads())
                .map_err(config)?;
            emit(&run.out, &sweep_csv("v", &rows)?)?;
            report_fit("v", &rows);
            Ok(())
        }
        Command::OracleCheck { net, seeds, trajectories, run } => {
            let net = load_network(&net)?;
            check_horizon(run.horizon)?;
            let report = match trajectories {
                Some(path) => {
                    let file = fs::File::open(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                    let trajs = read_trajectory_csv(&net, file).map_err(config)?;
                    oracle_check_replay(&net, &trajs, run.horizon)?
                }
                None => oracle_check_seeds(&net, seeds, run.horizon, run.seed),
            };
            emit(&run.out, report.text.as_bytes())?;
            if report.passed() {
                Ok(())
            } else {
                Err(CliError::CheckFailed(format!(
                    "{} of {} runs exceed {ORACLE_TOLERANCE:e} (max gap {:e})",
                    report.failures, report.runs, report.max_gap
                )))
            }
        }
        Command::Lemma1 { dist01, dist12, t_grid, run, ensemble } => {
            let first = parse_dist(&dist01)?;
            let second = parse_dist(&dist12)?;
            if t_grid.is_empty() {
                return Err(CliError::Config("t-grid must be nonempty".into()));
            }
            let reports = experiments::lemma1_sweep(&first, &second, &t_grid, ensemble.iters, run.seed, ensemble.threads())
                .map_err(mc_error)?;
            let mut w = csv_writer();
            w.write_record(["t", "estimate", "std_error", "limit", "gap"])?;
            for r in reports {
                w.write_record([r.t, r.estimate, r.std_error, r.analytic_limit, r.abs_gap].map(fmt))?;
            }
            emit(&run.out, &finish(w)?)
        }
    }
}

/// Shortest decimal that reads back to the same `f64`.
fn fmt(x: f64) -> String {
    format!("{x}")
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, CliError> {
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

fn sweep_csv(x_name: &str, rows: &[experiments::SweepRow]) -> Result<Vec<u8>, CliError> {
    let mut w = csv_writer();
    w.write_record([x_name, "mean", "std_error", "ci95", "predicted"])?;
    for r in rows {
        w.write_record([r.x, r.estimate.mean, r.estimate.std_error, r.estimate.ci95_half_width, r.predicted].map(fmt))?;
    }
    finish(w)
}

fn report_fit(x_name: &str, rows: &[experiments::SweepRow]) {
    if rows.len() > 2 {
        let f = experiments::fit(rows);
        eprintln!(
            "fit over {x_name}: slope {:.5} (se {:.5}), intercept {:.5} (se {:.5})",
            f.slope, f.slope_se, f.intercept, f.intercept_se
        );
    }
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub runs: usize,
    pub failures: usize,
    pub max_gap: f64,
    pub text: String,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Largest |engine - oracle| over all nodes at the given times. Trees are
/// checked against both the path segment sum and the general recursion.
pub fn oracle_gap(net: &Network, trajs: &[LinkTrajectory], times: &[f64], engine_ages: &[Vec<f64>]) -> Result<f64, CliError> {
    let mut oracle = GeneralOracle::new(net, trajs).map_err(config)?;
    let paths: Option<Vec<Vec<&LinkTrajectory>>> = net.is_tree().then(|| {
        (0..net.node_count())
            .map(|n| net.path_to_source(n).unwrap().into_iter().map(|id| &trajs[id]).collect())
            .collect()
    });
    let mut gap: f64 = 0.0;
    for (&t, ages) in times.iter().zip(engine_ages) {
        for node in 0..net.node_count() {
            gap = gap.max((oracle.age(node, t) - ages[node]).abs());
            if let Some(paths) = &paths {
                gap = gap.max((recursive_age(&paths[node], t) - ages[node]).abs());
            }
        }
    }
    Ok(gap)
}

fn check_times(horizon: f64) -> [f64; 3] {
    [horizon / 4.0, horizon / 2.0, horizon]
}

pub fn oracle_check_seeds(net: &Network, seeds: usize, horizon: f64, master_seed: u64) -> OracleReport {
    let times = check_times(horizon);
    let mut report = OracleReport { runs: 0, failures: 0, max_gap: 0.0, text: String::new() };
    for k in 0..seeds as u64 {
        let seed = mix_seed(master_seed, k);
        let snap = simulate_recorded(net, horizon, seed);
        let trajs = snap.trajectories.expect("recorded");
        let ages = age_trajectory(net, horizon, seed, &times).expect("check times lie in [0, T]");
        let gap = oracle_gap(net, &trajs, &times, &ages).expect("engine trajectories are well formed");
        report.record(&format!("seed {seed}"), gap);
    }
    report.finish();
    report
}

pub fn oracle_check_replay(net: &Network, trajs: &[LinkTrajectory], horizon: f64) -> Result<OracleReport, CliError> {
    let times = check_times(horizon);
    let mut engine = Engine::new(net, Replay::new(net, trajs).map_err(config)?);
    let ages: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| {
            engine.advance_to(t);
            engine.ages()
        })
        .collect();
    let gap = oracle_gap(net, trajs, &times, &ages)?;
    let mut report = OracleReport { runs: 0, failures: 0, max_gap: 0.0, text: String::new() };
    report.record("replay", gap);
    report.finish();
    Ok(report)
}

impl OracleReport {
    fn record(&mut self, label: &str, gap: f64) {
        let ok = gap <= ORACLE_TOLERANCE;
        self.runs += 1;
        self.max_gap = self.max_gap.max(gap);
        if !ok {
            self.failures += 1;
        }
        let _ = writeln!(self.text, "{label}: max gap {gap:e} {}", if ok { "ok" } else { "FAIL" });
    }

    fn finish(&mut self) {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(self.text, "{verdict}: {} runs, {} failures, max gap {:e}", self.runs, self.failures, self.max_gap);
    }
}
