//! Empirical checks of the confidence-set and projection-distortion guarantees.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::{dot, ContextVector};
use crate::environment::{make_env, Environment};
use crate::error::{Error, Result};
use crate::policies::{BetaMode, Cbrap, Policy, PolicyConfig};
use crate::projection::{kaban_failure_bound, ProjectionKind, ProjectionMatrix};
use crate::seed::{derive_seed, mix64};
use crate::theory::{
    beta_schedule, confidence_distance, regret_bound, success_probability, TheoryParams,
};

use super::ExperimentConfig;

/// Theory constants measured from the hidden ground truth of a synthetic run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConstants {
    /// `max |⟨Mx, Mθ*⟩ − ⟨x, θ*⟩|` over every context in the horizon.
    pub eps: f64,
    /// `eps / (max‖x‖ · ‖θ*‖)`.
    pub eps1: f64,
    /// `max ‖Mx‖`.
    pub l: f64,
    /// `‖Mθ*‖`.
    pub s: f64,
    /// `max |⟨x, θ*⟩|`.
    pub b: f64,
    pub max_context_norm: f64,
}

/// Scan every context of rounds `1..=horizon`. With `projection = None` the
/// identity map is used (ambient-space learner).
pub fn oracle_constants(
    env: &Environment,
    projection: Option<&ProjectionMatrix>,
    horizon: usize,
) -> Result<OracleConstants> {
    let theta = ContextVector::Dense(env.theta_star().to_vec());
    let theta_norm = theta.norm();
    let zeta = match projection {
        Some(p) => p.project(&theta)?.to_dense(),
        None => env.theta_star().to_vec(),
    };
    let mut c = OracleConstants {
        eps: 0.0,
        eps1: 0.0,
        l: 0.0,
        s: dot(&zeta, &zeta).sqrt(),
        b: 0.0,
        max_context_norm: 0.0,
    };
    let mut z = vec![0.0; zeta.len()];
    for t in 1..=horizon {
        for x in env.draw_round(t)? {
            let exact = x.dot_dense(env.theta_star());
            let approx = match projection {
                Some(p) => {
                    p.project_into(&x, &mut z)?;
                    c.l = c.l.max(dot(&z, &z).sqrt());
                    dot(&z, &zeta)
                }
                None => {
                    c.l = c.l.max(x.norm());
                    exact
                }
            };
            c.eps = c.eps.max((approx - exact).abs());
            c.b = c.b.max(exact.abs());
            c.max_context_norm = c.max_context_norm.max(x.norm());
        }
    }
    let scale = c.max_context_norm * theta_norm;
    c.eps1 = if scale > 0.0 { c.eps / scale } else { 0.0 };
    Ok(c)
}

/// Assemble theory parameters from oracle constants.
pub fn oracle_theory(
    c: &OracleConstants,
    r: f64,
    lambda: f64,
    delta: f64,
    m: usize,
    horizon: usize,
) -> TheoryParams {
    TheoryParams {
        r,
        s: c.s,
        l: c.l,
        b: c.b,
        lambda,
        delta,
        eps: c.eps,
        eps1: c.eps1,
        gamma: 0.0,
    }
    .with_derived_gamma(m, horizon)
}

/// Outcome of one coverage run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedCoverage {
    pub seed: u64,
    /// Whether `ζ = Mθ*` stayed inside every confidence set `C_0 … C_T`.
    pub covered: bool,
    /// First number of absorbed observations whose set excluded `ζ`.
    pub first_violation: Option<usize>,
    /// Largest `‖ζ − μ̂_t‖_{A_t} / β_t` seen over the horizon.
    pub worst_ratio: f64,
    pub cumulative_regret: f64,
    pub regret_bound: f64,
    pub success_probability: f64,
    pub theory: TheoryParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub rate: f64,
    pub width_scale: f64,
    pub seeds: Vec<SeedCoverage>,
    /// `t → number of seeds whose first violation happened at t`.
    pub first_violation_histogram: BTreeMap<usize, usize>,
}

impl CoverageReport {
    /// Fraction of seeds whose final regret is within the theory bound.
    pub fn bound_hold_rate(&self) -> f64 {
        let held = self
            .seeds
            .iter()
            .filter(|s| s.cumulative_regret <= s.regret_bound)
            .count();
        held as f64 / self.seeds.len() as f64
    }

    pub fn mean_success_probability(&self) -> f64 {
        self.seeds.iter().map(|s| s.success_probability).sum::<f64>() / self.seeds.len() as f64
    }
}

/// Coverage of the projected parameter by the confidence ellipsoids over
/// `num_seeds` consecutive seeds starting at `cfg.seeds[0]`.
pub fn coverage_experiment(cfg: &ExperimentConfig, num_seeds: usize) -> Result<CoverageReport> {
    coverage_experiment_scaled(cfg, num_seeds, 1.0)
}

/// As [`coverage_experiment`], with the membership radius multiplied by `width_scale`.
pub fn coverage_experiment_scaled(
    cfg: &ExperimentConfig,
    num_seeds: usize,
    width_scale: f64,
) -> Result<CoverageReport> {
    cfg.validate()?;
    if num_seeds < 100 {
        return Err(Error::config("num_seeds", "coverage needs at least 100 seeds"));
    }
    if !(width_scale > 0.0) {
        return Err(Error::config("width_scale", "must be positive"));
    }
    if matches!(cfg.env.context, crate::environment::ContextSpec::Replay { .. }) {
        return Err(Error::Unsupported(
            "coverage needs a synthetic environment with a known parameter".into(),
        ));
    }
    let kind = cfg
        .algos
        .iter()
        .find_map(|a| a.projection_kind())
        .unwrap_or(ProjectionKind::StandardGaussian);
    let base = cfg.seeds[0];
    let seeds: Vec<u64> = (0..num_seeds as u64).map(|i| base.wrapping_add(i)).collect();
    let results = seeds
        .par_iter()
        .map(|&seed| coverage_single(cfg, kind, seed, width_scale))
        .collect::<Result<Vec<_>>>()?;

    let mut histogram = BTreeMap::new();
    for r in &results {
        if let Some(t) = r.first_violation {
            *histogram.entry(t).or_insert(0) += 1;
        }
    }
    let covered = results.iter().filter(|r| r.covered).count();
    Ok(CoverageReport {
        rate: covered as f64 / results.len() as f64,
        width_scale,
        seeds: results,
        first_violation_histogram: histogram,
    })
}

fn coverage_single(
    cfg: &ExperimentConfig,
    kind: ProjectionKind,
    seed: u64,
    width_scale: f64,
) -> Result<SeedCoverage> {
    let mut spec = cfg.env.clone();
    spec.seed = seed;
    let env = make_env(&spec)?;
    let horizon = cfg.horizon;
    let m = cfg.m;
    let projection = ProjectionMatrix::build(kind, m, env.n(), derive_seed(seed, crate::seed::TAG_POLICY))?;
    let oracle = oracle_constants(&env, Some(&projection), horizon)?;
    let theory = oracle_theory(
        &oracle,
        env.noise().sub_gaussian_scale(),
        cfg.lambda,
        cfg.delta,
        m,
        horizon,
    );
    let zeta = projection
        .project(&ContextVector::Dense(env.theta_star().to_vec()))?
        .to_dense();

    let pcfg = PolicyConfig {
        beta_mode: BetaMode::Adaptive { theory },
        lambda: cfg.lambda,
        kind,
        m,
        seed,
        refresh_interval: cfg.refresh_interval,
    };
    let mut policy = Cbrap::with_projection(&pcfg, projection)?;

    let mut first_violation = None;
    let mut worst_ratio: f64 = 0.0;
    let mut check = |state: &crate::estimator::RidgeState| -> Result<()> {
        let radius = width_scale * beta_schedule(&theory, m, state.t());
        let dist = confidence_distance(state, &zeta)?;
        worst_ratio = worst_ratio.max(dist / radius);
        if dist > radius && first_violation.is_none() {
            first_violation = Some(state.t());
        }
        Ok(())
    };

    let mut regret = 0.0;
    for t in 1..=horizon {
        let contexts = env.draw_round(t)?;
        let decision = policy.choose(&contexts)?;
        // the state now holds exactly t − 1 observations
        check(policy.state())?;
        let reward = env.realize_reward(&contexts[decision.arm], t)?;
        policy.observe(reward)?;
        regret += env.instant_regret(&contexts, decision.arm)?;
    }
    policy.absorb_pending()?;
    check(policy.state())?;

    Ok(SeedCoverage {
        seed,
        covered: first_violation.is_none(),
        first_violation,
        worst_ratio,
        cumulative_regret: regret,
        regret_bound: regret_bound(&theory, m, horizon),
        success_probability: success_probability(&theory, m, horizon),
        theory,
    })
}

/// One `(m, ε₁)` cell of the distortion tail experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KabanRow {
    pub m: usize,
    pub eps1: f64,
    pub trials: usize,
    pub exceedances: usize,
    pub rate: f64,
    pub bound: f64,
    /// Allowed rate: the bound, plus three binomial standard deviations when the bound is below 1e-3.
    pub allowed: f64,
    pub violated: bool,
}

/// Empirical rate of `inner_product_error > ε₁` for fresh Gaussian matrices
/// and random unit `(x, θ)` pairs in `n` dimensions, against `2·exp(−mε₁²/8)`.
pub fn kaban_experiment(
    m_list: &[usize],
    eps1_list: &[f64],
    trials: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<KabanRow>> {
    if trials < 10_000 {
        return Err(Error::config("trials", "must be at least 10000"));
    }
    if m_list.is_empty() || eps1_list.is_empty() {
        return Err(Error::config("m_list", "grid must be non-empty"));
    }
    if let Some(&bad) = m_list.iter().find(|&&m| m == 0 || m > n) {
        return Err(Error::config("m_list", format!("m={bad} must be in 1..={n}")));
    }
    if let Some(bad) = eps1_list.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::config("eps1_list", format!("eps1={bad} must be positive")));
    }

    let per_m = m_list
        .par_iter()
        .map(|&m| -> Result<Vec<f64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, m as u64));
            (0..trials)
                .map(|i| {
                    let mseed = mix64(derive_seed(seed, m as u64) ^ (i as u64).wrapping_mul(0x9E37_79B9));
                    let p = ProjectionMatrix::build(ProjectionKind::StandardGaussian, m, n, mseed)?;
                    let x = ContextVector::random_unit(&mut rng, n);
                    let th = ContextVector::random_unit(&mut rng, n);
                    p.inner_product_error(&x, &th)
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (&m, errors) in m_list.iter().zip(&per_m) {
        for &eps1 in eps1_list {
            let exceedances = errors.iter().filter(|e| **e > eps1).count();
            let rate = exceedances as f64 / trials as f64;
            let bound = kaban_failure_bound(m, eps1);
            let allowed = if bound < 1e-3 {
                bound + 3.0 * (bound * (1.0 - bound) / trials as f64).sqrt()
            } else {
                bound
            };
            rows.push(KabanRow {
                m,
                eps1,
                trials,
                exceedances,
                rate,
                bound,
                allowed,
                violated: rate > allowed,
            });
        }
    }
    Ok(rows)
}

pub fn kaban_rows_to_csv(rows: &[KabanRow]) -> String {
    let mut out = String::from("m,eps1,trials,exceedances,rate,bound,allowed,violated\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.m, r.eps1, r.trials, r.exceedances, r.rate, r.bound, r.allowed, r.violated
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{ContextSpec, EnvSpec, NoiseSpec};
    use crate::harness::Algo;

    fn small_cfg(noise: NoiseSpec) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.env = EnvSpec::new(30, 4, ContextSpec::GaussianUnit, noise, 0);
        cfg.m = 30;
        cfg.horizon = 60;
        cfg.algos = vec![Algo::CbrapSg];
        cfg.seeds = vec![500];
        cfg
    }

    #[test]
    fn oracle_constants_identity_has_no_distortion() {
        let env = make_env(&EnvSpec::new(10, 3, ContextSpec::GaussianUnit, NoiseSpec::None, 1)).unwrap();
        let c = oracle_constants(&env, None, 20).unwrap();
        assert_eq!(c.eps, 0.0);
        assert!((c.s - 1.0).abs() < 1e-12);
        assert!(c.l <= 1.0 + 1e-12);
        let id = ProjectionMatrix::identity(10).unwrap();
        let ci = oracle_constants(&env, Some(&id), 20).unwrap();
        assert!(ci.eps < 1e-12);
    }

    #[test]
    fn noiseless_coverage_is_full() {
        let report = coverage_experiment(&small_cfg(NoiseSpec::None), 100).unwrap();
        assert_eq!(report.rate, 1.0);
        assert!(report.first_violation_histogram.is_empty());
    }

    #[test]
    fn coverage_rejects_replay_and_few_seeds() {
        let cfg = small_cfg(NoiseSpec::None);
        assert!(matches!(coverage_experiment(&cfg, 10), Err(Error::Config { .. })));
        let mut replay = cfg.clone();
        replay.env.context = ContextSpec::Replay { path: "x.csv".into() };
        assert!(matches!(coverage_experiment(&replay, 100), Err(Error::Unsupported(_))));
    }

    #[test]
    fn kaban_vacuous_and_monotone() {
        let rows = kaban_experiment(&[4, 16, 64], &[0.25, 1.0], 10_000, 64, 3).unwrap();
        for r in &rows {
            assert!(!r.violated, "{r:?}");
            if r.bound >= 1.0 {
                assert!(r.rate <= 1.0);
            }
        }
        let at = |m: usize| rows.iter().find(|r| r.m == m && r.eps1 == 0.25).unwrap().rate;
        assert!(at(4) > at(16) && at(16) > at(64));
        assert!(kaban_experiment(&[4], &[0.5], 100, 8, 0).is_err());
        assert!(kaban_experiment(&[9], &[0.5], 10_000, 8, 0).is_err());
    }
}
