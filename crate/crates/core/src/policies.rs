//! Arm-selection policies and the round loop that drives them.
//!
//! [`Cbrap`] projects every context with a fixed random matrix and runs a
//! ridge-regression UCB rule in the reduced space. [`LinUcb`] is the same
//! rule applied to the raw contexts, and [`Uniform`] picks arms at random.
//!
//! Both UCB policies follow the same per-round schedule: at the start of
//! round `t > 1` the estimator absorbs round `t − 1`'s chosen feature and
//! reward, then every arm is scored with `⟨θ̂, z⟩ + β‖z‖_{A⁻¹}` and the
//! highest score wins, ties going to the lowest arm index.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::ContextVector;
use crate::environment::{Environment, RoundRecord};
use crate::error::{Error, Result};
use crate::estimator::{RidgeState, DEFAULT_REFRESH_INTERVAL};
use crate::projection::{ProjectionKind, ProjectionMatrix};
use crate::theory::{beta_schedule, TheoryParams};

/// Exploration width schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum BetaMode {
    Fixed { beta: f64 },
    /// Width `β_{t−1}(δ)` from [`beta_schedule`] at round `t`.
    Adaptive { theory: TheoryParams },
}

impl BetaMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            BetaMode::Fixed { beta } if !(*beta > 0.0 && beta.is_finite()) => {
                Err(Error::config("beta", format!("must be positive, got {beta}")))
            }
            BetaMode::Adaptive { theory } => theory.validate(),
            _ => Ok(()),
        }
    }

    /// Width used when the estimator has absorbed `updates` observations.
    pub fn width(&self, dim: usize, updates: usize) -> f64 {
        match self {
            BetaMode::Fixed { beta } => *beta,
            BetaMode::Adaptive { theory } => beta_schedule(theory, dim, updates),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub beta_mode: BetaMode,
    pub lambda: f64,
    pub kind: ProjectionKind,
    pub m: usize,
    pub seed: u64,
    pub refresh_interval: Option<usize>,
}

impl PolicyConfig {
    pub fn new(kind: ProjectionKind, m: usize, beta_mode: BetaMode, seed: u64) -> Self {
        PolicyConfig {
            beta_mode,
            lambda: 1.0,
            kind,
            m,
            seed,
            refresh_interval: Some(DEFAULT_REFRESH_INTERVAL),
        }
    }
}

/// Score components for one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmScore {
    pub arm: usize,
    /// Predicted reward `⟨θ̂, z⟩`.
    pub r_hat: f64,
    /// Exploration bonus `β‖z‖_{A⁻¹}`.
    pub v: f64,
    pub ucb: f64,
}

/// A policy's choice for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub arm: usize,
    /// Per-arm scores; empty for policies that do not score arms.
    pub scores: Vec<ArmScore>,
}

impl Decision {
    /// Chosen arm's ucb minus the best competing ucb.
    pub fn ucb_gap(&self) -> f64 {
        let Some(chosen) = self.scores.get(self.arm) else {
            return 0.0;
        };
        self.scores
            .iter()
            .filter(|s| s.arm != self.arm)
            .map(|s| chosen.ucb - s.ucb)
            .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.min(g))))
            .unwrap_or(0.0)
    }
}

/// Relative tolerance under which two scores count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Index of the maximum, lowest index on ties.
///
/// Values within `TIE_TOLERANCE · max(1, |max|)` of the maximum are ties, so
/// scores that are equal in exact arithmetic (every arm in round 1, say) do
/// not get ranked by rounding noise. NaN never wins.
pub fn argmax_lowest(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let values: Vec<f64> = values.into_iter().collect();
    let best = values
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))?;
    let floor = best - TIE_TOLERANCE * best.abs().max(1.0);
    values.iter().position(|&v| v >= floor)
}

/// Score all arms against the current estimator and pick the UCB maximizer.
pub fn cbrap_select(
    state: &RidgeState,
    contexts: &[ContextVector],
    beta: f64,
) -> Result<(usize, Vec<ArmScore>)> {
    let theta = state.estimate();
    select_with_estimate(state, &theta, contexts, beta)
}

fn select_with_estimate(
    state: &RidgeState,
    theta: &[f64],
    contexts: &[ContextVector],
    beta: f64,
) -> Result<(usize, Vec<ArmScore>)> {
    if contexts.is_empty() {
        return Err(Error::InvalidInput("no arms to choose from".into()));
    }
    let scores = contexts
        .iter()
        .enumerate()
        .map(|(arm, z)| {
            if z.dim() != state.m() {
                return Err(Error::dim(state.m(), z.dim()));
            }
            let r_hat = z.dot_dense(theta);
            let v = beta * state.weighted_norm(z)?;
            Ok(ArmScore {
                arm,
                r_hat,
                v,
                ucb: r_hat + v,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let arm = argmax_lowest(scores.iter().map(|s| s.ucb)).expect("non-empty");
    Ok((arm, scores))
}

/// Something that picks arms and learns from the chosen arm's reward.
pub trait Policy {
    fn name(&self) -> &str;

    /// Choose an arm given this round's contexts.
    fn choose(&mut self, contexts: &[ContextVector]) -> Result<Decision>;

    /// Reward of the arm returned by the last [`Policy::choose`].
    fn observe(&mut self, reward: f64) -> Result<()>;
}

/// Shared ridge-UCB machinery with the deferred update schedule.
#[derive(Debug, Clone)]
struct UcbCore {
    state: RidgeState,
    beta_mode: BetaMode,
    /// Chosen feature of the last round and its reward, once observed.
    pending: Option<(ContextVector, Option<f64>)>,
    round: usize,
}

impl UcbCore {
    fn new(dim: usize, lambda: f64, beta_mode: BetaMode, refresh: Option<usize>) -> Result<Self> {
        beta_mode.validate()?;
        Ok(UcbCore {
            state: RidgeState::new(dim, lambda)?.with_refresh_interval(refresh),
            beta_mode,
            pending: None,
            round: 0,
        })
    }

    fn decide(&mut self, mut features: Vec<ContextVector>) -> Result<Decision> {
        self.round += 1;
        if self.round > 1 {
            match self.pending.take() {
                Some((z, Some(reward))) => self.state.update(&z, reward)?,
                _ => {
                    return Err(Error::InvalidInput(
                        "choose called before the previous reward was observed".into(),
                    ))
                }
            }
        }
        let beta = self.beta_mode.width(self.state.m(), self.state.t());
        let theta = self.state.estimate();
        let (arm, scores) = select_with_estimate(&self.state, &theta, &features, beta)?;
        self.pending = Some((features.swap_remove(arm), None));
        Ok(Decision { arm, scores })
    }

    /// Apply the last observed round now instead of at the next `decide`.
    fn absorb_pending(&mut self) -> Result<()> {
        match self.pending.take() {
            Some((z, Some(reward))) => self.state.update(&z, reward),
            Some(unobserved) => {
                self.pending = Some(unobserved);
                Err(Error::InvalidInput("last choice has no observed reward".into()))
            }
            None => Ok(()),
        }
    }

    fn observe(&mut self, reward: f64) -> Result<()> {
        if !reward.is_finite() {
            return Err(Error::InvalidInput(format!("reward must be finite, got {reward}")));
        }
        match &mut self.pending {
            Some((_, slot @ None)) => {
                *slot = Some(reward);
                Ok(())
            }
            _ => Err(Error::InvalidInput("observe called without a pending choice".into())),
        }
    }
}

/// UCB on randomly projected contexts.
#[derive(Debug, Clone)]
pub struct Cbrap {
    projection: ProjectionMatrix,
    core: UcbCore,
    name: String,
}

impl Cbrap {
    /// Draws the projection matrix once for the whole run.
    pub fn new(cfg: &PolicyConfig, n: usize) -> Result<Self> {
        let projection = ProjectionMatrix::build(cfg.kind, cfg.m, n, cfg.seed)?;
        Self::with_projection(cfg, projection)
    }

    /// Use a caller-supplied matrix (for example a test hook).
    pub fn with_projection(cfg: &PolicyConfig, projection: ProjectionMatrix) -> Result<Self> {
        if !(cfg.lambda > 0.0) {
            return Err(Error::config("lambda", "must be positive"));
        }
        let name = match projection.kind() {
            Some(ProjectionKind::StandardGaussian) => "cbrap-sg",
            Some(ProjectionKind::RandomSignDense) => "cbrap-rs",
            Some(ProjectionKind::RandomSignSparse) => "cbrap-rs-sparse",
            None => "cbrap",
        };
        Ok(Cbrap {
            core: UcbCore::new(projection.m(), cfg.lambda, cfg.beta_mode, cfg.refresh_interval)?,
            projection,
            name: name.to_string(),
        })
    }

    pub fn projection(&self) -> &ProjectionMatrix {
        &self.projection
    }

    pub fn state(&self) -> &RidgeState {
        &self.core.state
    }

    /// Fold the last observed reward into the estimator, so the state
    /// reflects every completed round. Further `choose` calls start a new
    /// round without a deferred update.
    pub fn absorb_pending(&mut self) -> Result<()> {
        self.core.absorb_pending()?;
        self.core.round = 0;
        Ok(())
    }
}

impl Policy for Cbrap {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose(&mut self, contexts: &[ContextVector]) -> Result<Decision> {
        let projected = contexts
            .iter()
            .map(|x| self.projection.project(x))
            .collect::<Result<Vec<_>>>()?;
        self.core.decide(projected)
    }

    fn observe(&mut self, reward: f64) -> Result<()> {
        self.core.observe(reward)
    }
}

/// Ridge-UCB directly on the `n`-dimensional contexts.
#[derive(Debug, Clone)]
pub struct LinUcb {
    core: UcbCore,
}

impl LinUcb {
    pub fn new(n: usize, lambda: f64, beta_mode: BetaMode, refresh: Option<usize>) -> Result<Self> {
        Ok(LinUcb {
            core: UcbCore::new(n, lambda, beta_mode, refresh)?,
        })
    }

    pub fn state(&self) -> &RidgeState {
        &self.core.state
    }
}

impl Policy for LinUcb {
    fn name(&self) -> &str {
        "linucb"
    }

    fn choose(&mut self, contexts: &[ContextVector]) -> Result<Decision> {
        self.core.decide(contexts.to_vec())
    }

    fn observe(&mut self, reward: f64) -> Result<()> {
        self.core.observe(reward)
    }
}

/// Uniformly random arm choice.
#[derive(Debug, Clone)]
pub struct Uniform {
    rng: ChaCha8Rng,
}

impl Uniform {
    pub fn new(seed: u64) -> Self {
        Uniform {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for Uniform {
    fn name(&self) -> &str {
        "uniform"
    }

    fn choose(&mut self, contexts: &[ContextVector]) -> Result<Decision> {
        if contexts.is_empty() {
            return Err(Error::InvalidInput("no arms to choose from".into()));
        }
        Ok(Decision {
            arm: self.rng.random_range(0..contexts.len()),
            scores: Vec::new(),
        })
    }

    fn observe(&mut self, _reward: f64) -> Result<()> {
        Ok(())
    }
}

/// Output of [`run_policy`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<RoundRecord>,
    /// Hash of every context the run was shown, for pairing checks.
    pub context_digest: u64,
    /// Per-round arm scores, when requested.
    pub scores: Option<Vec<Vec<ArmScore>>>,
}

impl RunOutput {
    pub fn cumulative_regret(&self) -> f64 {
        self.records.iter().map(|r| r.instant_regret).sum()
    }

    pub fn chosen_arms(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.chosen).collect()
    }
}

fn hash_contexts(hasher: &mut DefaultHasher, t: usize, contexts: &[ContextVector]) {
    t.hash(hasher);
    for x in contexts {
        x.dim().hash(hasher);
        for (i, v) in x.entries() {
            if v != 0.0 {
                i.hash(hasher);
                v.to_bits().hash(hasher);
            }
        }
    }
}

/// Drive `policy` through rounds `1..=horizon` of `env`.
pub fn run_policy<P: Policy + ?Sized>(
    env: &Environment,
    policy: &mut P,
    horizon: usize,
    keep_scores: bool,
) -> Result<RunOutput> {
    if horizon == 0 {
        return Err(Error::config("t", "horizon must be >= 1"));
    }
    let mut records = Vec::with_capacity(horizon);
    let mut all_scores = keep_scores.then(|| Vec::with_capacity(horizon));
    let mut hasher = DefaultHasher::new();
    for t in 1..=horizon {
        let contexts = env.draw_round(t)?;
        hash_contexts(&mut hasher, t, &contexts);

        let start = Instant::now();
        let decision = policy.choose(&contexts)?;
        let mut elapsed = start.elapsed();

        let reward = env.realize_reward(&contexts[decision.arm], t)?;
        let start = Instant::now();
        policy.observe(reward)?;
        elapsed += start.elapsed();

        records.push(RoundRecord {
            t,
            chosen: decision.arm,
            reward,
            instant_regret: env.instant_regret(&contexts, decision.arm)?,
            ucb_gap: decision.ucb_gap(),
            // clamp sub-resolution readings to the 1 ns clock tick
            elapsed_ns: (elapsed.as_nanos() as u64).max(1),
        });
        if let Some(s) = all_scores.as_mut() {
            s.push(decision.scores);
        }
    }
    Ok(RunOutput {
        records,
        context_digest: hasher.finish(),
        scores: all_scores,
    })
}

/// Run CBRAP (projection drawn from `cfg`) for `horizon` rounds.
pub fn cbrap_run(env: &Environment, cfg: &PolicyConfig, horizon: usize) -> Result<Vec<RoundRecord>> {
    let mut policy = Cbrap::new(cfg, env.n())?;
    Ok(run_policy(env, &mut policy, horizon, false)?.records)
}

/// Run LinUCB on the raw contexts for `horizon` rounds.
pub fn linucb_run(
    env: &Environment,
    lambda: f64,
    beta_mode: BetaMode,
    horizon: usize,
) -> Result<Vec<RoundRecord>> {
    let mut policy = LinUcb::new(env.n(), lambda, beta_mode, Some(DEFAULT_REFRESH_INTERVAL))?;
    Ok(run_policy(env, &mut policy, horizon, false)?.records)
}

/// Run the uniform baseline for `horizon` rounds.
pub fn uniform_run(env: &Environment, seed: u64, horizon: usize) -> Result<Vec<RoundRecord>> {
    let mut policy = Uniform::new(seed);
    Ok(run_policy(env, &mut policy, horizon, false)?.records)
}
