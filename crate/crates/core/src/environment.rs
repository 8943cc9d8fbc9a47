//! Synthetic linear-payoff environments and context replay.
//!
//! Rewards follow `π = ⟨x, θ*⟩ + η_t`. Contexts for round `t` are a pure
//! function of `(seed, t)` and the noise `η_t` is a pure function of
//! `(seed, t)`, independent of which arm is played, so every policy run on
//! the same environment sees identical context and noise streams.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::context::{dot, ContextVector};
use crate::error::{Error, Result};
use crate::seed::{stream, TAG_CONTEXT, TAG_NOISE, TAG_PROTOTYPE, TAG_THETA};

/// How per-round contexts are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ContextSpec {
    /// Independent uniform directions on the unit sphere.
    GaussianUnit,
    /// `nnz` uniformly placed nonzeros with uniform(−1, 1) values, unit-normalized.
    SparseUniform { nnz: usize },
    /// One fixed prototype per arm with evenly spaced mean rewards, perturbed
    /// each round by isotropic jitter and renormalized.
    Prototypes { jitter: f64 },
    /// Rows of a context CSV file.
    Replay { path: PathBuf },
}

/// Reward noise law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSpec {
    None,
    Gaussian { r: f64 },
    BoundedUniform { half_width: f64 },
}

impl NoiseSpec {
    /// Sub-Gaussian scale of the noise.
    pub fn sub_gaussian_scale(&self) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Gaussian { r } => r,
            // bounded in [−w, w] ⇒ w-sub-Gaussian (Hoeffding's lemma)
            NoiseSpec::BoundedUniform { half_width } => half_width,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = self.sub_gaussian_scale();
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::config("noise", format!("scale must be finite and >= 0, got {v}")));
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Gaussian { r } => r * rng.sample::<f64, _>(StandardNormal),
            NoiseSpec::BoundedUniform { half_width } => {
                if half_width == 0.0 {
                    0.0
                } else {
                    rng.random_range(-half_width..half_width)
                }
            }
        }
    }
}

fn default_theta_norm() -> f64 {
    1.0
}

/// Structured description of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub n: usize,
    pub k: usize,
    pub context: ContextSpec,
    pub noise: NoiseSpec,
    #[serde(default = "default_theta_norm")]
    pub theta_norm: f64,
    /// Clip realized rewards to `[0, 1]`. Breaks linearity; demonstration only.
    #[serde(default)]
    pub clip_rewards: bool,
    #[serde(default)]
    pub seed: u64,
}

impl EnvSpec {
    pub fn new(n: usize, k: usize, context: ContextSpec, noise: NoiseSpec, seed: u64) -> Self {
        EnvSpec {
            n,
            k,
            context,
            noise,
            theta_norm: 1.0,
            clip_rewards: false,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
enum Source {
    GaussianUnit,
    SparseUniform(usize),
    Prototypes { protos: Vec<Vec<f64>>, jitter: f64 },
    Replay(Arc<ContextDataset>),
}

/// An instantiated environment. Immutable; all draws are pure functions of `(seed, t)`.
#[derive(Debug, Clone)]
pub struct Environment {
    n: usize,
    k: usize,
    seed: u64,
    noise: NoiseSpec,
    clip_rewards: bool,
    theta_star: Vec<f64>,
    source: Source,
}

/// Build an environment from its spec. Replay specs load their CSV file.
pub fn make_env(spec: &EnvSpec) -> Result<Environment> {
    let dataset = match &spec.context {
        ContextSpec::Replay { path } => Some(Arc::new(ContextDataset::load(path)?)),
        _ => None,
    };
    Environment::build(spec, dataset)
}

impl Environment {
    /// Build a replay environment around an in-memory dataset.
    pub fn with_dataset(spec: &EnvSpec, dataset: ContextDataset) -> Result<Self> {
        Self::build(spec, Some(Arc::new(dataset)))
    }

    fn build(spec: &EnvSpec, dataset: Option<Arc<ContextDataset>>) -> Result<Self> {
        if spec.n == 0 {
            return Err(Error::config("n", "must be >= 1"));
        }
        if spec.k == 0 {
            return Err(Error::config("k", "must be >= 1"));
        }
        if !(spec.theta_norm >= 0.0 && spec.theta_norm.is_finite()) {
            return Err(Error::config("theta_norm", "must be finite and >= 0"));
        }
        spec.noise.validate()?;

        let mut rng = stream(spec.seed, TAG_THETA, 0);
        let unit = ContextVector::random_unit(&mut rng, spec.n).to_dense();
        let theta_star: Vec<f64> = unit.iter().map(|v| v * spec.theta_norm).collect();

        let source = match &spec.context {
            ContextSpec::GaussianUnit => Source::GaussianUnit,
            ContextSpec::SparseUniform { nnz } => {
                if *nnz == 0 || *nnz > spec.n {
                    return Err(Error::config("context.nnz", format!("must be in 1..={}", spec.n)));
                }
                Source::SparseUniform(*nnz)
            }
            ContextSpec::Prototypes { jitter } => {
                if !(*jitter >= 0.0 && jitter.is_finite()) {
                    return Err(Error::config("context.jitter", "must be finite and >= 0"));
                }
                Source::Prototypes {
                    protos: prototypes(spec.seed, spec.n, spec.k, &unit),
                    jitter: *jitter,
                }
            }
            ContextSpec::Replay { .. } => {
                let ds = dataset.ok_or_else(|| Error::config("context", "replay dataset missing"))?;
                if ds.dim != spec.n {
                    return Err(Error::config(
                        "n",
                        format!("replay file has dim={}, config has n={}", ds.dim, spec.n),
                    ));
                }
                if ds.arms != spec.k {
                    return Err(Error::config(
                        "k",
                        format!("replay file has arms={}, config has k={}", ds.arms, spec.k),
                    ));
                }
                Source::Replay(ds)
            }
        };

        Ok(Environment {
            n: spec.n,
            k: spec.k,
            seed: spec.seed,
            noise: spec.noise,
            clip_rewards: spec.clip_rewards,
            theta_star,
            source,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise(&self) -> NoiseSpec {
        self.noise
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn is_replay(&self) -> bool {
        matches!(self.source, Source::Replay(_))
    }

    /// Number of rounds available, if finite.
    pub fn max_rounds(&self) -> Option<usize> {
        match &self.source {
            Source::Replay(ds) => Some(ds.rounds()),
            _ => None,
        }
    }

    /// The `K` contexts revealed at round `t` (1-based).
    pub fn draw_round(&self, t: usize) -> Result<Vec<ContextVector>> {
        if t == 0 {
            return Err(Error::InvalidInput("rounds are numbered from 1".into()));
        }
        let n = self.n;
        let mut rng = stream(self.seed, TAG_CONTEXT, t as u64);
        match &self.source {
            Source::GaussianUnit => Ok((0..self.k)
                .map(|_| ContextVector::random_unit(&mut rng, n))
                .collect()),
            Source::SparseUniform(nnz) => {
                let values = Uniform::new(-1.0, 1.0).expect("valid range");
                (0..self.k)
                    .map(|_| {
                        let mut idx = rand::seq::index::sample(&mut rng, n, *nnz).into_vec();
                        idx.sort_unstable();
                        let mut vals: Vec<f64> = idx.iter().map(|_| values.sample(&mut rng)).collect();
                        let norm = dot(&vals, &vals).sqrt();
                        if norm > 0.0 {
                            vals.iter_mut().for_each(|v| *v /= norm);
                        }
                        ContextVector::sparse(n, idx, vals)
                    })
                    .collect()
            }
            Source::Prototypes { protos, jitter } => {
                let scale = jitter / (n as f64).sqrt();
                Ok(protos
                    .iter()
                    .map(|p| {
                        let mut v: Vec<f64> = p
                            .iter()
                            .map(|c| c + scale * rng.sample::<f64, _>(StandardNormal))
                            .collect();
                        let norm = dot(&v, &v).sqrt();
                        if norm > 0.0 {
                            v.iter_mut().for_each(|x| *x /= norm);
                        }
                        ContextVector::Dense(v)
                    })
                    .collect())
            }
            Source::Replay(ds) => {
                if t > ds.rounds() {
                    return Err(Error::EndOfData {
                        round: t,
                        available: ds.rounds(),
                    });
                }
                let start = (t - 1) * self.k;
                Ok(ds.rows[start..start + self.k]
                    .iter()
                    .map(|r| ContextVector::Dense(r.clone()))
                    .collect())
            }
        }
    }

    /// `⟨x, θ*⟩`.
    pub fn expected_reward(&self, x: &ContextVector) -> Result<f64> {
        if x.dim() != self.n {
            return Err(Error::dim(self.n, x.dim()));
        }
        Ok(x.dot_dense(&self.theta_star))
    }

    /// `η_t`, shared by every arm at round `t`.
    pub fn noise_at(&self, t: usize) -> f64 {
        let mut rng = stream(self.seed, TAG_NOISE, t as u64);
        self.noise.sample(&mut rng)
    }

    /// `⟨x, θ*⟩ + η_t`, optionally clipped to `[0, 1]`.
    pub fn realize_reward(&self, x: &ContextVector, t: usize) -> Result<f64> {
        let r = self.expected_reward(x)? + self.noise_at(t);
        Ok(if self.clip_rewards { r.clamp(0.0, 1.0) } else { r })
    }

    /// `max_y ⟨x_y, θ*⟩ − ⟨x_chosen, θ*⟩`.
    pub fn instant_regret(&self, contexts: &[ContextVector], chosen: usize) -> Result<f64> {
        if chosen >= contexts.len() {
            return Err(Error::InvalidInput(format!(
                "arm {chosen} out of range for {} arms",
                contexts.len()
            )));
        }
        let means = contexts
            .iter()
            .map(|x| self.expected_reward(x))
            .collect::<Result<Vec<_>>>()?;
        let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok((best - means[chosen]).max(0.0))
    }

    /// Collect rounds `1..=horizon` into a replayable dataset.
    pub fn to_dataset(&self, horizon: usize) -> Result<ContextDataset> {
        let mut rows = Vec::with_capacity(horizon * self.k);
        for t in 1..=horizon {
            rows.extend(self.draw_round(t)?.iter().map(ContextVector::to_dense));
        }
        Ok(ContextDataset {
            dim: self.n,
            arms: self.k,
            rows,
        })
    }
}

fn prototypes(seed: u64, n: usize, k: usize, direction: &[f64]) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, TAG_PROTOTYPE, 0);
    let mut levels: Vec<f64> = if k == 1 {
        vec![0.5]
    } else {
        (0..k).map(|y| 0.1 + 0.8 * y as f64 / (k - 1) as f64).collect()
    };
    levels.shuffle(&mut rng);
    levels
        .into_iter()
        .map(|c| {
            // unit vector orthogonal to the parameter direction
            let ortho = loop {
                let mut u = ContextVector::random_unit(&mut rng, n).to_dense();
                let proj = dot(&u, direction);
                u.iter_mut().zip(direction).for_each(|(a, d)| *a -= proj * d);
                let norm = dot(&u, &u).sqrt();
                if norm > 1e-8 || n == 1 {
                    if norm > 0.0 {
                        u.iter_mut().for_each(|a| *a /= norm);
                    }
                    break u;
                }
            };
            let side = (1.0 - c * c).sqrt();
            direction
                .iter()
                .zip(&ortho)
                .map(|(d, o)| c * d + side * o)
                .collect()
        })
        .collect()
}

/// One round of a policy run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub t: usize,
    pub chosen: usize,
    /// Realized reward of the chosen arm.
    pub reward: f64,
    /// Expected-reward gap to the best arm this round.
    pub instant_regret: f64,
    /// Chosen arm's ucb minus the best competing ucb (0 when not applicable).
    pub ucb_gap: f64,
    /// Wall time of the policy's decision and update work for this round.
    pub elapsed_ns: u64,
}

/// Contexts read from (or written to) the replay CSV format:
/// a `dim=<n>,arms=<K>` header followed by `K` rows per round.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextDataset {
    pub dim: usize,
    pub arms: usize,
    pub rows: Vec<Vec<f64>>,
}

impl ContextDataset {
    pub fn rounds(&self) -> usize {
        self.rows.len() / self.arms
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file), path)
    }

    /// Parse from a reader; `origin` only labels error messages.
    pub fn parse<R: BufRead>(reader: R, origin: &Path) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, l)) => l.map_err(|e| Error::io(origin, e))?,
            None => return Err(perr(1, "missing `dim=<n>,arms=<K>` header".into())),
        };
        let (dim, arms) = parse_header(header.trim_end_matches('\r')).map_err(|m| perr(1, m))?;

        let mut rows = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(origin, e))?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                return Err(perr(lineno, "empty row".into()));
            }
            let row = line
                .split(',')
                .enumerate()
                .map(|(c, field)| {
                    let v: f64 = field
                        .trim()
                        .parse()
                        .map_err(|_| perr(lineno, format!("column {}: `{field}` is not a number", c + 1)))?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(perr(lineno, format!("column {}: non-finite value", c + 1)))
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != dim {
                return Err(Error::InvalidDimension(format!(
                    "{}:{lineno}: row has {} values, header declares dim={dim}",
                    origin.display(),
                    row.len()
                )));
            }
            rows.push(row);
        }
        if rows.len() % arms != 0 {
            return Err(Error::InvalidDimension(format!(
                "{}: {} rows is not a multiple of arms={arms}",
                origin.display(),
                rows.len()
            )));
        }
        Ok(ContextDataset { dim, arms, rows })
    }

    /// Serialize to the CSV format. Values use shortest round-trip formatting.
    pub fn to_csv_string(&self) -> String {
        let mut out = format!("dim={},arms={}\n", self.dim, self.arms);
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv_string().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

fn parse_header(line: &str) -> std::result::Result<(usize, usize), String> {
    let mut dim = None;
    let mut arms = None;
    for part in line.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("malformed header field `{part}`"))?;
        let value: usize = value
            .trim()
            .parse()
            .map_err(|_| format!("header `{key}` is not a positive integer"))?;
        match key.trim() {
            "dim" => dim = Some(value),
            "arms" => arms = Some(value),
            other => return Err(format!("unknown header field `{other}`")),
        }
    }
    match (dim, arms) {
        (Some(d), Some(a)) if d > 0 && a > 0 => Ok((d, a)),
        _ => Err("header must declare positive `dim` and `arms`".into()),
    }
}
