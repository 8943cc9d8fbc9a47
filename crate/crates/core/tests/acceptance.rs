//! Acceptance suite. Every criterion runs inside one test so timing-sensitive
//! checks never share the machine with other tests from this binary, and each
//! prints a single PASS/FAIL line.

use std::io::Write;
use std::time::{Duration, Instant};

use cbrap::context::ContextVector;
use cbrap::environment::{make_env, ContextSpec, EnvSpec, NoiseSpec};
use cbrap::estimator::RidgeState;
use cbrap::harness::{
    coverage_experiment, kaban_experiment, mean_latency, run_experiment, run_on_env, run_single,
    Algo, ExperimentConfig,
};
use cbrap::policies::{run_policy, BetaMode, Cbrap, LinUcb, PolicyConfig};
use cbrap::projection::{ProjectionKind, ProjectionMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(
    results: &mut Vec<(String, bool)>,
    name: &str,
    limit: Option<Duration>,
    f: impl FnOnce() -> Outcome,
) {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed < l);
    let pass = out.pass && in_time;
    let limit_text = limit.map(|l| format!(" (limit {l:?})")).unwrap_or_default();
    let line = format!(
        "{} {name}: {} [{elapsed:.2?}{limit_text}]\n",
        if pass { "PASS" } else { "FAIL" },
        out.detail
    );
    // written past the test harness's capture so the lines always show
    let _ = std::io::stderr().write_all(line.as_bytes());
    results.push((name.to_string(), pass));
}

/// Three binomial standard deviations at rate `p` over `n` trials.
fn binomial_slack(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

fn orthogonal_equivalence() -> Outcome {
    let (n, k, horizon) = (16, 5, 500);
    let mut worst_ucb: f64 = 0.0;
    let mut mismatched = 0;
    for seed in 0..20u64 {
        let spec = EnvSpec::new(n, k, ContextSpec::GaussianUnit, NoiseSpec::Gaussian { r: 0.1 }, seed);
        let env = make_env(&spec).unwrap();
        let beta = BetaMode::Fixed { beta: 1.0 };
        let cfg = PolicyConfig::new(ProjectionKind::StandardGaussian, n, beta, seed);
        let q = ProjectionMatrix::random_orthogonal(n, seed ^ 0xABCD).unwrap();
        let mut cbrap = Cbrap::with_projection(&cfg, q).unwrap();
        let mut lin = LinUcb::new(n, 1.0, beta, None).unwrap();
        let a = run_policy(&env, &mut cbrap, horizon, true).unwrap();
        let b = run_policy(&env, &mut lin, horizon, true).unwrap();
        if a.chosen_arms() != b.chosen_arms() {
            mismatched += 1;
        }
        for (ra, rb) in a.scores.unwrap().iter().zip(b.scores.unwrap().iter()) {
            for (sa, sb) in ra.iter().zip(rb) {
                worst_ucb = worst_ucb.max((sa.ucb - sb.ucb).abs());
            }
        }
    }
    Outcome {
        pass: mismatched == 0 && worst_ucb <= 1e-9,
        detail: format!("{mismatched}/20 seeds with differing arms, max |ucb diff| = {worst_ucb:.2e}"),
    }
}

/// Solve `A x = rhs` by Gaussian elimination with partial pivoting.
fn solve(a: &[f64], rhs: &[f64], m: usize) -> Vec<f64> {
    let mut aug: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row = a[i * m..(i + 1) * m].to_vec();
            row.push(rhs[i]);
            row
        })
        .collect();
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
            .unwrap();
        aug.swap(col, piv);
        for r in col + 1..m {
            let f = aug[r][col] / aug[col][col];
            for c in col..=m {
                aug[r][c] -= f * aug[col][c];
            }
        }
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|j| aug[i][j] * x[j]).sum();
        x[i] = (aug[i][m] - s) / aug[i][i];
    }
    x
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn estimator_oracle() -> Outcome {
    let mut worst_est: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    let mut worst_drift: f64 = 0.0;
    for m in [2usize, 5, 20] {
        let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
        let mut state = RidgeState::new(m, 1.0).unwrap();
        // independent record of A and b
        let mut a = vec![0.0; m * m];
        for i in 0..m {
            a[i * m + i] = 1.0;
        }
        let mut b = vec![0.0; m];
        for _ in 0..1000 {
            let z: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let reward: f64 = rng.random_range(-1.0..1.0);
            for i in 0..m {
                for j in 0..m {
                    a[i * m + j] += z[i] * z[j];
                }
                b[i] += reward * z[i];
            }
            state.update(&ContextVector::dense(z).unwrap(), reward).unwrap();

            // A · A_inv against the identity, every round
            let (sa, si) = (state.a(), state.a_inv());
            for i in 0..m {
                for j in 0..m {
                    let s: f64 = (0..m).map(|k| sa[i * m + k] * si[k * m + j]).sum();
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst_drift = worst_drift.max((s - target).abs());
                }
            }
        }
        let theta = solve(&a, &b, m);
        for (x, y) in state.estimate().iter().zip(&theta) {
            worst_est = worst_est.max(rel_err(*x, *y));
        }
        for _ in 0..20 {
            let q: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = solve(&a, &q, m);
            let direct = q.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>().sqrt();
            let got = state.weighted_norm(&ContextVector::dense(q).unwrap()).unwrap();
            worst_norm = worst_norm.max(rel_err(got, direct));
        }
    }
    Outcome {
        pass: worst_est <= 1e-8 && worst_norm <= 1e-8 && worst_drift <= 1e-6,
        detail: format!(
            "estimate rel err {worst_est:.2e}, weighted_norm rel err {worst_norm:.2e}, max |A·A⁻¹ − I| {worst_drift:.2e}"
        ),
    }
}

fn kaban_grid() -> Outcome {
    let rows = kaban_experiment(&[8, 32, 128], &[0.25, 0.5, 0.75, 1.0], 100_000, 128, 7).unwrap();
    let violated: Vec<String> = rows
        .iter()
        .filter(|r| r.violated)
        .map(|r| format!("(m={}, eps1={}: {} > {})", r.m, r.eps1, r.rate, r.allowed))
        .collect();
    let tightest = rows
        .iter()
        .filter(|r| r.bound < 1.0)
        .map(|r| r.rate / r.bound)
        .fold(0.0f64, f64::max);
    Outcome {
        pass: rows.len() == 12 && violated.is_empty(),
        detail: format!(
            "{} cells, violations {:?}, max rate/bound on non-vacuous cells {tightest:.3}",
            rows.len(),
            violated
        ),
    }
}

fn coverage_config() -> ExperimentConfig {
    ExperimentConfig {
        env: EnvSpec::new(200, 10, ContextSpec::GaussianUnit, NoiseSpec::Gaussian { r: 0.1 }, 0),
        algos: vec![Algo::CbrapSg],
        m: 20,
        horizon: 1000,
        delta: 0.05,
        seeds: vec![0],
        ..ExperimentConfig::default()
    }
}

fn regret_quality() -> Outcome {
    let (horizon, window) = (2000, 200);
    let mut passed = 0;
    let mut ratios = Vec::new();
    for seed in 0..12u64 {
        let cfg = ExperimentConfig {
            env: EnvSpec::new(
                500,
                10,
                ContextSpec::Prototypes { jitter: 0.2 },
                NoiseSpec::Gaussian { r: 0.1 },
                seed,
            ),
            algos: vec![Algo::CbrapSg, Algo::Uniform],
            m: 25,
            horizon,
            beta: 1.0,
            seeds: vec![seed],
            ..ExperimentConfig::default()
        };
        let c = run_single(&cfg, Algo::CbrapSg, seed).unwrap().output;
        let u = run_single(&cfg, Algo::Uniform, seed).unwrap().output;
        let first: f64 = c.records[..window].iter().map(|r| r.instant_regret).sum();
        let last: f64 = c.records[horizon - window..].iter().map(|r| r.instant_regret).sum();
        let vs_uniform = c.cumulative_regret() / u.cumulative_regret();
        let ok = vs_uniform <= 0.5 && last <= 0.25 * first;
        passed += ok as usize;
        ratios.push(format!("{vs_uniform:.2}/{:.2}", last / first));
    }
    Outcome {
        pass: passed >= 10,
        detail: format!("{passed}/12 seeds pass (regret/uniform, last/first window: {})", ratios.join(" ")),
    }
}

fn performance() -> Outcome {
    let cfg = ExperimentConfig {
        env: EnvSpec::new(2000, 10, ContextSpec::SparseUniform { nnz: 20 }, NoiseSpec::Gaussian { r: 0.1 }, 0),
        algos: vec![Algo::CbrapSg, Algo::Linucb],
        m: 20,
        horizon: 2000,
        // a dense 2000×2000 re-inversion per 512 rounds would dominate the
        // baseline; the drift probe still guards it
        refresh_interval: None,
        seeds: vec![0],
        ..ExperimentConfig::default()
    };
    let env = make_env(&cfg.env).unwrap();
    let start = Instant::now();
    let c = run_on_env(&cfg, Algo::CbrapSg, &env).unwrap();
    let cbrap_wall = start.elapsed();
    let l = run_on_env(&cfg, Algo::Linucb, &env).unwrap();
    let lc = mean_latency(&c.output.records, cfg.warmup_rounds);
    let ll = mean_latency(&l.output.records, cfg.warmup_rounds);
    let positive = c.output.records.iter().all(|r| r.elapsed_ns > 0);
    Outcome {
        pass: lc < ll && cbrap_wall < Duration::from_secs(10) && positive,
        detail: format!(
            "cbrap {lc:.0} ns/round vs linucb {ll:.0} ns/round, cbrap run {cbrap_wall:.2?}"
        ),
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let base = ExperimentConfig {
        env: EnvSpec::new(60, 6, ContextSpec::SparseUniform { nnz: 8 }, NoiseSpec::Gaussian { r: 0.1 }, 0),
        algos: vec![Algo::CbrapSg, Algo::CbrapRs, Algo::CbrapRsSparse, Algo::Linucb, Algo::Uniform],
        m: 12,
        horizon: 300,
        seeds: vec![3, 4, 5],
        adaptive_beta: true,
        ..ExperimentConfig::default()
    };
    let config_path = dir.path().join("experiment.toml");
    std::fs::write(&config_path, base.to_toml_string().unwrap()).unwrap();

    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let mut cfg = ExperimentConfig::load(&config_path).unwrap();
        cfg.out = Some(dir.path().join(run));
        run_experiment(&cfg).unwrap();
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path().join(run))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
            .collect();
        files.sort();
        outputs.push(files);
    }
    let count = outputs[0].len();
    Outcome {
        pass: count == 15 && outputs[0] == outputs[1],
        detail: format!("{count} CSV files compared byte for byte"),
    }
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    let _ = std::io::stderr().write_all(b"\n");
    check(&mut results, "1 orthogonal equivalence", Some(Duration::from_secs(5)), orthogonal_equivalence);
    check(&mut results, "2 estimator oracle", Some(Duration::from_secs(5)), estimator_oracle);
    check(&mut results, "3 kaban tail bound", Some(Duration::from_secs(60)), kaban_grid);

    // criteria 4 and 5 share one set of runs
    let start = Instant::now();
    let seeds = 200;
    let report = coverage_experiment(&coverage_config(), seeds).unwrap();
    let shared = start.elapsed();
    check(&mut results, "4 confidence set coverage", Some(Duration::from_secs(120)), || {
        let floor = 0.95 - binomial_slack(0.95, seeds);
        Outcome {
            pass: report.rate >= floor && shared < Duration::from_secs(120),
            detail: format!(
                "coverage {:.3} over {seeds} seeds, floor {floor:.3}, shared runtime {shared:.2?}",
                report.rate
            ),
        }
    });
    check(&mut results, "5 regret bound dominance", None, || {
        let p = report.mean_success_probability();
        let floor = p - binomial_slack(p, seeds);
        let worst = report
            .seeds
            .iter()
            .map(|s| s.cumulative_regret / s.regret_bound)
            .fold(0.0f64, f64::max);
        Outcome {
            pass: report.bound_hold_rate() >= floor,
            detail: format!(
                "bound holds on {:.3} of seeds, success probability {p:.3}, floor {floor:.3}, max regret/bound {worst:.2e}",
                report.bound_hold_rate()
            ),
        }
    });

    check(&mut results, "6 regret quality", None, regret_quality);
    check(&mut results, "7 performance", None, performance);
    check(&mut results, "8 determinism", None, determinism);

    let failed: Vec<&str> = results.iter().filter(|(_, p)| !p).map(|(n, _)| n.as_str()).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
