//! Experiment runner: configuration, paired multi-seed runs, artifacts.
//!
//! An experiment runs every configured algorithm on every seed. For seed
//! `s` the environment is built with seed `s` and the policy (projection
//! matrix, uniform sampler) with a seed derived from `s`, so all algorithms
//! of one seed share the same context and noise streams.

mod output;
mod validation;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use output::{emit_csv, emit_summary, parse_csv, records_to_csv, CsvRow, CSV_HEADER};
pub use validation::{
    coverage_experiment, coverage_experiment_scaled, kaban_experiment, kaban_rows_to_csv,
    oracle_constants, oracle_theory, CoverageReport, KabanRow, OracleConstants, SeedCoverage,
};

use crate::environment::{make_env, ContextSpec, EnvSpec, Environment, NoiseSpec, RoundRecord};
use crate::error::{Error, Result};
use crate::estimator::DEFAULT_REFRESH_INTERVAL;
use crate::policies::{run_policy, BetaMode, Cbrap, LinUcb, PolicyConfig, RunOutput, Uniform};
use crate::projection::{ProjectionKind, ProjectionMatrix};
use crate::seed::{derive_seed, TAG_POLICY};
use crate::theory::{regret_bound, success_probability};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    CbrapSg,
    CbrapRs,
    CbrapRsSparse,
    Linucb,
    Uniform,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::CbrapSg => "cbrap-sg",
            Algo::CbrapRs => "cbrap-rs",
            Algo::CbrapRsSparse => "cbrap-rs-sparse",
            Algo::Linucb => "linucb",
            Algo::Uniform => "uniform",
        }
    }

    pub fn projection_kind(self) -> Option<ProjectionKind> {
        match self {
            Algo::CbrapSg => Some(ProjectionKind::StandardGaussian),
            Algo::CbrapRs => Some(ProjectionKind::RandomSignDense),
            Algo::CbrapRsSparse => Some(ProjectionKind::RandomSignSparse),
            Algo::Linucb | Algo::Uniform => None,
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cbrap-sg" => Ok(Algo::CbrapSg),
            "cbrap-rs" => Ok(Algo::CbrapRs),
            "cbrap-rs-sparse" => Ok(Algo::CbrapRsSparse),
            "linucb" => Ok(Algo::Linucb),
            "uniform" => Ok(Algo::Uniform),
            other => Err(Error::config(
                "algo",
                format!("unknown algorithm `{other}` (expected cbrap-sg, cbrap-rs, cbrap-rs-sparse, linucb or uniform)"),
            )),
        }
    }
}

fn default_beta() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.05
}
fn default_warmup() -> usize {
    10
}
fn default_refresh() -> Option<usize> {
    Some(DEFAULT_REFRESH_INTERVAL)
}

/// Everything needed to reproduce an experiment. Loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Environment template; its `seed` is replaced by each experiment seed.
    pub env: EnvSpec,
    pub algos: Vec<Algo>,
    /// Reduced dimension for the CBRAP variants.
    pub m: usize,
    /// Horizon.
    #[serde(rename = "t")]
    pub horizon: usize,
    /// Exploration width in fixed mode.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Use the theory width with oracle constants instead of a fixed beta.
    #[serde(default)]
    pub adaptive_beta: bool,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Accepted for compatibility and ignored.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub seeds: Vec<u64>,
    /// Output directory for CSV files and `summary.json`.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Rounds excluded from latency summaries.
    #[serde(default = "default_warmup")]
    pub warmup_rounds: usize,
    /// Write measured `elapsed_ns` into CSVs (otherwise 0, keeping files reproducible).
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default = "default_refresh")]
    pub refresh_interval: Option<usize>,
    /// When set, also run the coverage experiment over this many seeds.
    #[serde(default)]
    pub coverage_seeds: Option<usize>,
    /// Test hook: use a random orthogonal matrix for every CBRAP variant (requires `m == n`).
    #[serde(default)]
    pub orthogonal_test_projection: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: EnvSpec::new(100, 10, ContextSpec::GaussianUnit, NoiseSpec::Gaussian { r: 0.1 }, 0),
            algos: vec![Algo::CbrapSg],
            m: 10,
            horizon: 1000,
            beta: default_beta(),
            adaptive_beta: false,
            lambda: default_lambda(),
            delta: default_delta(),
            alpha: None,
            seeds: vec![0],
            out: None,
            warmup_rounds: default_warmup(),
            record_timing: false,
            refresh_interval: default_refresh(),
            coverage_seeds: None,
            orthogonal_test_projection: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.env.n == 0 {
            return Err(Error::config("n", "must be >= 1"));
        }
        if self.env.k == 0 {
            return Err(Error::config("k", "must be >= 1"));
        }
        if self.m == 0 || self.m > self.env.n {
            return Err(Error::config("m", format!("must be in 1..={} (n)", self.env.n)));
        }
        if self.horizon == 0 {
            return Err(Error::config("t", "must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if self.algos.is_empty() {
            return Err(Error::config("algos", "at least one algorithm is required"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", "must be positive"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta", "must lie in (0, 1)"));
        }
        if self.orthogonal_test_projection && self.m != self.env.n {
            return Err(Error::config("orthogonal_test_projection", "requires m == n"));
        }
        Ok(())
    }
}

/// Aggregated results of one algorithm across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoSummary {
    pub algo: Algo,
    /// Cumulative regret after each round, one curve per seed.
    pub regret_curves: Vec<Vec<f64>>,
    pub final_regret_mean: f64,
    pub final_regret_std: f64,
    /// Mean per-round policy time after the warm-up rounds.
    pub mean_latency_ns: f64,
    /// Theory bound per seed (CBRAP variants only).
    pub regret_bound: Option<Vec<f64>>,
    pub success_probability: Option<Vec<f64>>,
    pub context_digests: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub seeds: Vec<u64>,
    pub horizon: usize,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub algos: Vec<AlgoSummary>,
    /// Coverage rate of the confidence sets, when enabled.
    pub coverage_rate: Option<f64>,
    /// Whether every algorithm saw identical context streams on each seed.
    pub paired: bool,
}

impl ExperimentSummary {
    pub fn algo(&self, algo: Algo) -> Option<&AlgoSummary> {
        self.algos.iter().find(|a| a.algo == algo)
    }
}

/// Result of one algorithm on one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub algo: Algo,
    pub seed: u64,
    pub output: RunOutput,
    pub regret_bound: Option<f64>,
    pub success_probability: Option<f64>,
}

/// Seed used for the policy-side randomness of experiment seed `seed`.
pub fn policy_seed(seed: u64) -> u64 {
    derive_seed(seed, TAG_POLICY)
}

/// Run one algorithm on one seed.
pub fn run_single(cfg: &ExperimentConfig, algo: Algo, seed: u64) -> Result<SeedRun> {
    let mut spec = cfg.env.clone();
    spec.seed = seed;
    let env = make_env(&spec)?;
    if let Some(rounds) = env.max_rounds() {
        if rounds < cfg.horizon {
            return Err(Error::config(
                "t",
                format!("replay data has {rounds} rounds, horizon is {}", cfg.horizon),
            ));
        }
    }
    run_on_env(cfg, algo, &env)
}

/// Run one algorithm on a prepared environment.
pub fn run_on_env(cfg: &ExperimentConfig, algo: Algo, env: &Environment) -> Result<SeedRun> {
    let pseed = policy_seed(env.seed());
    let r = env.noise().sub_gaussian_scale();
    let keep_scores = false;
    let (output, bound, success) = match algo {
        Algo::Uniform => {
            let mut p = Uniform::new(pseed);
            (run_policy(env, &mut p, cfg.horizon, keep_scores)?, None, None)
        }
        Algo::Linucb => {
            let beta_mode = if cfg.adaptive_beta {
                let c = oracle_constants(env, None, cfg.horizon)?;
                BetaMode::Adaptive {
                    theory: oracle_theory(&c, r, cfg.lambda, cfg.delta, env.n(), cfg.horizon),
                }
            } else {
                BetaMode::Fixed { beta: cfg.beta }
            };
            let mut p = LinUcb::new(env.n(), cfg.lambda, beta_mode, cfg.refresh_interval)?;
            (run_policy(env, &mut p, cfg.horizon, keep_scores)?, None, None)
        }
        Algo::CbrapSg | Algo::CbrapRs | Algo::CbrapRsSparse => {
            let kind = algo.projection_kind().expect("cbrap variant");
            let projection = if cfg.orthogonal_test_projection {
                ProjectionMatrix::random_orthogonal(env.n(), pseed)?
            } else {
                ProjectionMatrix::build(kind, cfg.m, env.n(), pseed)?
            };
            let oracle = oracle_constants(env, Some(&projection), cfg.horizon)?;
            let theory = oracle_theory(&oracle, r, cfg.lambda, cfg.delta, cfg.m, cfg.horizon);
            let beta_mode = if cfg.adaptive_beta {
                BetaMode::Adaptive { theory }
            } else {
                BetaMode::Fixed { beta: cfg.beta }
            };
            let pcfg = PolicyConfig {
                beta_mode,
                lambda: cfg.lambda,
                kind,
                m: cfg.m,
                seed: pseed,
                refresh_interval: cfg.refresh_interval,
            };
            let mut p = Cbrap::with_projection(&pcfg, projection)?;
            let out = run_policy(env, &mut p, cfg.horizon, keep_scores)?;
            (
                out,
                Some(regret_bound(&theory, cfg.m, cfg.horizon)),
                Some(success_probability(&theory, cfg.m, cfg.horizon)),
            )
        }
    };
    Ok(SeedRun {
        algo,
        seed: env.seed(),
        output,
        regret_bound: bound,
        success_probability: success,
    })
}

/// CSV file name for `(algo, seed)`.
pub fn csv_name(algo: Algo, seed: u64) -> String {
    format!("{}-seed{}.csv", algo.name(), seed)
}

/// Run every `(seed, algo)` pair, write artifacts when `cfg.out` is set, and summarize.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    if cfg.alpha.is_some() {
        log::warn!("`alpha` is accepted but has no effect on any policy");
    }
    let runs: Vec<Vec<SeedRun>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            cfg.algos
                .iter()
                .map(|&algo| run_single(cfg, algo, seed))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for run in runs.iter().flatten() {
            let path = dir.join(csv_name(run.algo, run.seed));
            emit_csv(&run.output.records, &path, cfg.record_timing)?;
        }
    }

    let paired = runs.iter().all(|per_seed| {
        per_seed
            .windows(2)
            .all(|w| w[0].output.context_digest == w[1].output.context_digest)
    });

    let algos = cfg
        .algos
        .iter()
        .enumerate()
        .map(|(i, &algo)| summarize(algo, runs.iter().map(|s| &s[i]), cfg.warmup_rounds))
        .collect();

    let coverage_rate = match cfg.coverage_seeds {
        Some(count) => Some(coverage_experiment(cfg, count)?.rate),
        None => None,
    };

    let summary = ExperimentSummary {
        seeds: cfg.seeds.clone(),
        horizon: cfg.horizon,
        m: cfg.m,
        n: cfg.env.n,
        k: cfg.env.k,
        algos,
        coverage_rate,
        paired,
    };
    if let Some(dir) = &cfg.out {
        emit_summary(&summary, &dir.join("summary.json"))?;
    }
    Ok(summary)
}

/// Running sums of instant regret.
pub fn regret_curve(records: &[RoundRecord]) -> Vec<f64> {
    records
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r.instant_regret;
            Some(*acc)
        })
        .collect()
}

/// Mean `elapsed_ns` over rounds after the first `warmup`.
pub fn mean_latency(records: &[RoundRecord], warmup: usize) -> f64 {
    let tail = records.get(warmup.min(records.len())..).unwrap_or(&[]);
    let tail = if tail.is_empty() { records } else { tail };
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().map(|r| r.elapsed_ns as f64).sum::<f64>() / tail.len() as f64
}

fn summarize<'a>(algo: Algo, runs: impl Iterator<Item = &'a SeedRun>, warmup: usize) -> AlgoSummary {
    let runs: Vec<&SeedRun> = runs.collect();
    let curves: Vec<Vec<f64>> = runs.iter().map(|r| regret_curve(&r.output.records)).collect();
    let finals: Vec<f64> = curves.iter().map(|c| c.last().copied().unwrap_or(0.0)).collect();
    let count = finals.len() as f64;
    let mean = finals.iter().sum::<f64>() / count;
    let std = if finals.len() > 1 {
        (finals.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (count - 1.0)).sqrt()
    } else {
        0.0
    };
    let latency = runs
        .iter()
        .map(|r| mean_latency(&r.output.records, warmup))
        .sum::<f64>()
        / count;
    let bounds: Option<Vec<f64>> = runs.iter().map(|r| r.regret_bound).collect();
    let success: Option<Vec<f64>> = runs.iter().map(|r| r.success_probability).collect();
    AlgoSummary {
        algo,
        regret_curves: curves,
        final_regret_mean: mean,
        final_regret_std: std,
        mean_latency_ns: latency,
        regret_bound: bounds,
        success_probability: success,
        context_digests: runs.iter().map(|r| r.output.context_digest).collect(),
    }
}

/// Process exit code for an error: 1 for configuration and input
/// problems, 2 for I/O failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => 2,
        _ => 1,
    }
}

/// Exit code for a validation experiment whose bound was violated in strict mode.
pub const EXIT_BOUND_VIOLATION: i32 = 3;
