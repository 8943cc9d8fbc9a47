//! Linear contextual bandits on randomly projected contexts.
//!
//! High-dimensional arm contexts `x ∈ ℝⁿ` are mapped to `z = Mx ∈ ℝᵐ` by a
//! fixed random matrix, and a ridge-regression UCB rule chooses arms in the
//! reduced space. The crate also evaluates the closed-form confidence width
//! and regret bound for this scheme, and ships an experiment harness that
//! checks them empirically.
//!
//! ```
//! use cbrap::environment::{make_env, ContextSpec, EnvSpec, NoiseSpec};
//! use cbrap::policies::{run_policy, BetaMode, Cbrap, PolicyConfig};
//! use cbrap::projection::ProjectionKind;
//!
//! let env = make_env(&EnvSpec::new(200, 5, ContextSpec::GaussianUnit, NoiseSpec::Gaussian { r: 0.1 }, 7))?;
//! let cfg = PolicyConfig::new(ProjectionKind::StandardGaussian, 10, BetaMode::Fixed { beta: 0.5 }, 1);
//! let mut policy = Cbrap::new(&cfg, env.n())?;
//! let out = run_policy(&env, &mut policy, 100, false)?;
//! assert_eq!(out.records.len(), 100);
//! # Ok::<(), cbrap::Error>(())
//! ```

pub mod context;
pub mod environment;
mod error;
pub mod estimator;
pub mod harness;
pub mod policies;
pub mod projection;
pub mod seed;
pub mod theory;

pub use context::ContextVector;
pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/projection.md")]
    mod projection {}
    #[doc = include_str!("../../../book/src/estimator.md")]
    mod estimator {}
    #[doc = include_str!("../../../book/src/policies.md")]
    mod policies {}
    #[doc = include_str!("../../../book/src/theory.md")]
    mod theory {}
    #[doc = include_str!("../../../book/src/environment.md")]
    mod environment {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
