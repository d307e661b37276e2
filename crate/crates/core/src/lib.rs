//! Contextual multi-armed bandits with similarity (metric) information.
//!
//! The crate bundles:
//!
//! - metric-space primitives: covering/packing numbers, r-nets, doubling
//!   constants, and the near-optimal-set covering oracle ([`space`]);
//! - problem-instance generators with a ground-truth payoff oracle
//!   ([`env`]);
//! - the contextual zooming algorithm over the product similarity space
//!   ([`zooming`]);
//! - reference algorithms: UCB1, EXP3 and the fixed-net uniform algorithm
//!   ([`baselines`]);
//! - the adaptive context-partition meta-algorithm with per-cell bandit
//!   subroutines ([`meta`]);
//! - a bandit over a rooted taxonomy with implicit distances ([`taxonomy`]);
//! - an experiment runner with seeded reproducible runs, regret accounting,
//!   invariant audits and CSV output ([`harness`]).
//!
//! All randomness flows through named, documented streams ([`rng`]) so that a
//! `(config, seed)` pair fully determines every logged byte.

pub mod baselines;
pub mod env;
pub mod error;
pub mod harness;
pub mod meta;
pub mod rng;
pub mod space;
pub mod taxonomy;
pub mod zooming;

pub use error::{Error, Result};
pub use space::{Ball, Metric, SimilaritySpace, SpaceKind};
pub use env::{Arrivals, EnvironmentInstance, Feasibility, NoiseModel, PayoffModel, RoundOutcome};
pub use harness::{audit, run_experiment, AlgorithmSpec, ExperimentConfig, Policy, RunLog};
