//! Closed-form confidence widths and regret bounds for projected linear bandits.
//!
//! * [`beta_schedule`] is the ellipsoid radius
//!   `β_t(δ) = R√(m·ln((1 + tL²)/δ)) + √λ·S + ε√t`.
//! * [`regret_bound`] evaluates
//!   `2·a·b·m·√T + 2·(a√m + 1)·T·L·S·ε₁` with
//!   `a = √(2·ln(1 + TL²/(λm)))` and
//!   `b = R√(ln(1 + TL²/(λm)) + 2·ln(1/δ)) + √λ·S + B`.
//! * [`success_probability`] is the probability the bound holds,
//!   `max(0, 1 − 2T·exp(−m·ε₁²/8))·(1 − δ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::RidgeState;

/// Constants entering the confidence width and the regret bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    /// Sub-Gaussian scale of the reward noise.
    pub r: f64,
    /// Bound on the norm of the projected parameter.
    pub s: f64,
    /// Bound on the norm of projected contexts.
    pub l: f64,
    /// Bound on `|xᵀθ*|`.
    pub b: f64,
    pub lambda: f64,
    pub delta: f64,
    /// Absolute inner-product distortion.
    pub eps: f64,
    /// Normalized inner-product distortion.
    pub eps1: f64,
    /// Probability that some context violates the `eps` distortion bound.
    pub gamma: f64,
}

impl Default for TheoryParams {
    fn default() -> Self {
        TheoryParams {
            r: 0.1,
            s: 1.0,
            l: 1.0,
            b: 1.0,
            lambda: 1.0,
            delta: 0.05,
            eps: 0.0,
            eps1: 0.0,
            gamma: 0.0,
        }
    }
}

impl TheoryParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("r", self.r),
            ("s", self.s),
            ("l", self.l),
            ("b", self.b),
            ("eps", self.eps),
            ("eps1", self.eps1),
        ];
        for (name, v) in named {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta", "must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("gamma", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Copy with `gamma` set to the union-bound failure probability for `(m, horizon)`.
    pub fn with_derived_gamma(mut self, m: usize, horizon: usize) -> Self {
        self.gamma = derived_gamma(self.eps1, m, horizon);
        self
    }
}

/// `min(1, 2·T·exp(−m·ε₁²/8))`.
pub fn derived_gamma(eps1: f64, m: usize, horizon: usize) -> f64 {
    (2.0 * horizon as f64 * (-(m as f64) * eps1 * eps1 / 8.0).exp()).min(1.0)
}

/// Confidence radius after `t` observations.
pub fn beta_schedule(p: &TheoryParams, m: usize, t: usize) -> f64 {
    let t = t as f64;
    let noise = p.r * (m as f64 * ((1.0 + t * p.l * p.l) / p.delta).ln()).sqrt();
    noise + p.lambda.sqrt() * p.s + p.eps * t.sqrt()
}

/// Whether `mu` lies in `{μ : ‖μ − μ̂‖_A ≤ beta}` for the state's current `A` and `μ̂`.
pub fn in_confidence_set(state: &RidgeState, mu: &[f64], beta: f64) -> Result<bool> {
    Ok(confidence_distance(state, mu)? <= beta)
}

/// `‖mu − μ̂‖_A`.
pub fn confidence_distance(state: &RidgeState, mu: &[f64]) -> Result<f64> {
    if mu.len() != state.m() {
        return Err(Error::dim(state.m(), mu.len()));
    }
    let diff: Vec<f64> = mu
        .iter()
        .zip(state.estimate())
        .map(|(a, b)| a - b)
        .collect();
    state.a_norm(&diff)
}

fn log_term(p: &TheoryParams, m: usize, horizon: usize) -> f64 {
    (1.0 + horizon as f64 * p.l * p.l / (p.lambda * m as f64)).ln()
}

/// `a_{m,T} = √(2·ln(1 + TL²/(λm)))`.
pub fn a_coefficient(p: &TheoryParams, m: usize, horizon: usize) -> f64 {
    (2.0 * log_term(p, m, horizon)).sqrt()
}

/// `b_{m,T} = R√(ln(1 + TL²/(λm)) + 2·ln(1/δ)) + √λ·S + B`.
pub fn b_coefficient(p: &TheoryParams, m: usize, horizon: usize) -> f64 {
    p.r * (log_term(p, m, horizon) + 2.0 * (1.0 / p.delta).ln()).sqrt()
        + p.lambda.sqrt() * p.s
        + p.b
}

/// Upper bound on cumulative regret after `horizon` rounds.
pub fn regret_bound(p: &TheoryParams, m: usize, horizon: usize) -> f64 {
    let a = a_coefficient(p, m, horizon);
    let b = b_coefficient(p, m, horizon);
    let t = horizon as f64;
    let mf = m as f64;
    let sqrt_term = 2.0 * a * b * mf * t.sqrt();
    let distortion_term = 2.0 * (a * mf.sqrt() + 1.0) * t * p.l * p.s * p.eps1;
    (sqrt_term + distortion_term).max(0.0)
}

/// Probability with which [`regret_bound`] holds.
pub fn success_probability(p: &TheoryParams, m: usize, horizon: usize) -> f64 {
    let first = (1.0 - 2.0 * horizon as f64 * (-(m as f64) * p.eps1 * p.eps1 / 8.0).exp()).max(0.0);
    (first * (1.0 - p.delta)).clamp(0.0, 1.0)
}
