//! Problem instances and the ground-truth payoff oracle.
//!
//! An [`EnvironmentInstance`] bundles the context and arm spaces, the
//! feasible pair set, the expected-payoff map (time-invariant or an
//! oblivious per-round table), a context-arrival schedule and the payoff
//! noise rule. Instances are immutable after construction and every
//! generator validates the Lipschitz condition before returning.

pub mod generators;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{unit_uniform, unit_uniform_pair, Stream};
use crate::space::SimilaritySpace;
use crate::taxonomy::Taxonomy;

pub use generators::{
    make_drifting_env, make_needle_instance, make_random_lipschitz, make_sleeping_env,
    GeneratorSpec,
};

/// Which context-arm pairs may be played.
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// Every (context, arm) pair is feasible.
    All,
    /// Per-context sorted arm lists.
    PerContext(Vec<Vec<usize>>),
}

impl Feasibility {
    pub fn is_feasible(&self, context: usize, arm: usize) -> bool {
        match self {
            Feasibility::All => true,
            Feasibility::PerContext(lists) => lists
                .get(context)
                .map(|l| l.binary_search(&arm).is_ok())
                .unwrap_or(false),
        }
    }

    pub fn arms_for(&self, context: usize, n_arms: usize) -> Vec<usize> {
        match self {
            Feasibility::All => (0..n_arms).collect(),
            Feasibility::PerContext(lists) => lists.get(context).cloned().unwrap_or_default(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FeasibilityRepr {
    Tag(String),
    Pairs { pairs: Vec<(usize, usize)> },
}

impl Serialize for Feasibility {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Feasibility::All => FeasibilityRepr::Tag("all".into()).serialize(s),
            Feasibility::PerContext(lists) => {
                let mut pairs = Vec::new();
                for (ctx, arms) in lists.iter().enumerate() {
                    for &a in arms {
                        pairs.push((ctx, a));
                    }
                }
                FeasibilityRepr::Pairs { pairs }.serialize(s)
            }
        }
    }
}

impl<'de> Deserialize<'de> for Feasibility {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match FeasibilityRepr::deserialize(d)? {
            FeasibilityRepr::Tag(t) if t == "all" => Ok(Feasibility::All),
            FeasibilityRepr::Tag(t) => Err(serde::de::Error::custom(format!(
                "unknown feasibility tag {t:?}, expected \"all\""
            ))),
            FeasibilityRepr::Pairs { pairs } => {
                let n_ctx = pairs.iter().map(|p| p.0 + 1).max().unwrap_or(0);
                let mut lists = vec![Vec::new(); n_ctx];
                for (c, a) in pairs {
                    lists[c].push(a);
                }
                for l in &mut lists {
                    l.sort_unstable();
                    l.dedup();
                }
                Ok(Feasibility::PerContext(lists))
            }
        }
    }
}

/// Expected payoffs, indexed by `context * n_arms + arm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PayoffModel {
    /// Time-invariant expected payoffs.
    Static { mu: Vec<f64> },
    /// Oblivious adversarial table, one row per round.
    PerRound { mu: Vec<Vec<f64>> },
}

impl PayoffModel {
    pub fn is_static(&self) -> bool {
        matches!(self, PayoffModel::Static { .. })
    }

    pub fn mu(&self, round: usize, flat: usize) -> f64 {
        match self {
            PayoffModel::Static { mu } => mu[flat],
            PayoffModel::PerRound { mu } => mu[round.min(mu.len() - 1)][flat],
        }
    }
}

/// Context arrival schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Arrivals {
    /// Explicit context per round.
    Sequence { contexts: Vec<usize> },
    /// Cycle through the listed contexts.
    RoundRobin { contexts: Vec<usize> },
    /// `x_t = t` (drifting environments).
    Sequential,
}

impl Arrivals {
    pub fn context_at(&self, t: usize) -> usize {
        match self {
            Arrivals::Sequence { contexts } => contexts[t % contexts.len()],
            Arrivals::RoundRobin { contexts } => contexts[t % contexts.len()],
            Arrivals::Sequential => t,
        }
    }

    /// Contexts that can ever arrive (deduplicated, first-appearance order).
    pub fn support(&self, n_contexts: usize) -> Vec<usize> {
        match self {
            Arrivals::Sequence { contexts } | Arrivals::RoundRobin { contexts } => {
                let mut seen = std::collections::HashSet::new();
                contexts.iter().copied().filter(|&c| seen.insert(c)).collect()
            }
            Arrivals::Sequential => (0..n_contexts).collect(),
        }
    }
}

/// Payoff noise around the expected value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoiseModel {
    /// `payoff ~ Bernoulli(mu)`, the default.
    Bernoulli,
    /// `mu + std * Z` clipped to `[0, 1]`.
    TruncGaussian { std: f64 },
}

/// One realized round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: usize,
    pub context: usize,
    pub arm: usize,
    pub payoff: f64,
}

/// Generator provenance kept for lossless instance round-trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: GeneratorSpec,
    pub seed: u64,
}

/// A fully specified contextual bandit problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentInstance {
    pub context_space: Arc<SimilaritySpace>,
    pub arms_space: Arc<SimilaritySpace>,
    pub feasible: Feasibility,
    pub payoffs: PayoffModel,
    pub arrivals: Arrivals,
    pub noise: NoiseModel,
    /// Algorithm-visible arm taxonomy, when the instance carries one.
    pub taxonomy: Option<Taxonomy>,
    pub provenance: Option<Provenance>,
    product: Arc<SimilaritySpace>,
}

impl EnvironmentInstance {
    pub fn new(
        context_space: Arc<SimilaritySpace>,
        arms_space: Arc<SimilaritySpace>,
        feasible: Feasibility,
        payoffs: PayoffModel,
        arrivals: Arrivals,
        noise: NoiseModel,
    ) -> Result<Self> {
        let product = Arc::new(SimilaritySpace::product(
            context_space.clone(),
            arms_space.clone(),
        ));
        let inst = EnvironmentInstance {
            context_space,
            arms_space,
            feasible,
            payoffs,
            arrivals,
            noise,
            taxonomy: None,
            provenance: None,
            product,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_taxonomy(mut self, taxonomy: Taxonomy) -> Self {
        self.taxonomy = Some(taxonomy);
        self
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn n_contexts(&self) -> usize {
        self.context_space.len()
    }

    pub fn n_arms(&self) -> usize {
        self.arms_space.len()
    }

    /// The similarity space over (context, arm) pairs.
    pub fn product_space(&self) -> &Arc<SimilaritySpace> {
        &self.product
    }

    pub fn flat_index(&self, context: usize, arm: usize) -> usize {
        context * self.n_arms() + arm
    }

    pub fn mu(&self, round: usize, context: usize, arm: usize) -> f64 {
        self.payoffs.mu(round, self.flat_index(context, arm))
    }

    pub fn feasible_arms(&self, context: usize) -> Vec<usize> {
        self.feasible.arms_for(context, self.n_arms())
    }

    /// All feasible pairs as product-space point indices.
    pub fn feasible_pair_points(&self) -> Vec<usize> {
        let n_arms = self.n_arms();
        let mut out = Vec::new();
        for ctx in 0..self.n_contexts() {
            match &self.feasible {
                Feasibility::All => out.extend((0..n_arms).map(|a| ctx * n_arms + a)),
                Feasibility::PerContext(lists) => {
                    if let Some(arms) = lists.get(ctx) {
                        out.extend(arms.iter().map(|&a| ctx * n_arms + a));
                    }
                }
            }
        }
        out
    }

    /// Exhaustive argmax over feasible arms; ties break to the lowest arm
    /// index.
    pub fn best_response(&self, context: usize, round: usize) -> (usize, f64) {
        let mut best_arm = usize::MAX;
        let mut best_mu = f64::NEG_INFINITY;
        for arm in self.feasible_arms(context) {
            let m = self.mu(round, context, arm);
            if m > best_mu {
                best_mu = m;
                best_arm = arm;
            }
        }
        (best_arm, best_mu)
    }

    /// Benchmark arm per context for adversarial tables: the arm maximizing
    /// the payoff summed over the whole horizon, ties to the lowest index.
    /// For static payoffs this coincides with `best_response`.
    pub fn benchmark_arm(&self, context: usize, horizon: usize) -> usize {
        match &self.payoffs {
            PayoffModel::Static { .. } => self.best_response(context, 0).0,
            PayoffModel::PerRound { mu } => {
                let mut best_arm = usize::MAX;
                let mut best_sum = f64::NEG_INFINITY;
                for arm in self.feasible_arms(context) {
                    let flat = self.flat_index(context, arm);
                    let sum: f64 = (0..horizon.min(mu.len())).map(|t| mu[t][flat]).sum();
                    if sum > best_sum {
                        best_sum = sum;
                        best_arm = arm;
                    }
                }
                best_arm
            }
        }
    }

    /// Sample a payoff for the given pair. Deterministic in
    /// `(noise_seed, round)`: the noise stream is counter-addressed by
    /// round, so realizations do not depend on the algorithm's own draws.
    pub fn sample_payoff(
        &self,
        round: usize,
        context: usize,
        arm: usize,
        noise_seed: u64,
    ) -> Result<f64> {
        if !self.feasible.is_feasible(context, arm) {
            return Err(Error::Infeasible { context, arm });
        }
        let mu = self.mu(round, context, arm);
        Ok(match self.noise {
            NoiseModel::Bernoulli => {
                let u = unit_uniform(noise_seed, Stream::EnvNoise, round as u64);
                if u < mu {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseModel::TruncGaussian { std } => {
                let (u1, u2) = unit_uniform_pair(noise_seed, Stream::EnvNoise, round as u64);
                let z = (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                (mu + std * z).clamp(0.0, 1.0)
            }
        })
    }

    fn validate(&self) -> Result<()> {
        // payoffs in range, arrival contexts have a feasible arm
        let n_arms = self.n_arms();
        let pairs = self.feasible_pair_points();
        if pairs.is_empty() {
            return Err(Error::parameter("instance has no feasible pairs"));
        }
        let rounds = match &self.payoffs {
            PayoffModel::Static { .. } => 1,
            PayoffModel::PerRound { mu } => mu.len(),
        };
        for t in 0..rounds {
            for &p in &pairs {
                let m = self.payoffs.mu(t, p);
                if !(0.0..=1.0).contains(&m) {
                    return Err(Error::parameter(format!(
                        "mu out of [0,1] at round {t}, pair {p}: {m}"
                    )));
                }
            }
        }
        for ctx in self.arrivals.support(self.n_contexts()) {
            if ctx >= self.n_contexts() {
                return Err(Error::config(format!("arrival context {ctx} out of range")));
            }
            if self.feasible.arms_for(ctx, n_arms).is_empty() {
                return Err(Error::config(format!(
                    "arrival context {ctx} has no feasible arm"
                )));
            }
        }
        self.validate_lipschitz(0)
    }

    /// Check `|mu(x,y) - mu(x',y')| <= dist((x,y),(x',y'))` over feasible
    /// pairs: exhaustive when there are at most 10^4 feasible pairs,
    /// otherwise on 10^5 sampled pairs (per sampled round for adversarial
    /// tables).
    pub fn validate_lipschitz(&self, sample_seed: u64) -> Result<()> {
        const EPS: f64 = 1e-9;
        let pairs = self.feasible_pair_points();
        let product = self.product_space().clone();
        let rounds: Vec<usize> = match &self.payoffs {
            PayoffModel::Static { .. } => vec![0],
            PayoffModel::PerRound { mu } => {
                if mu.len() <= 20 {
                    (0..mu.len()).collect()
                } else {
                    let step = mu.len() / 20;
                    (0..20).map(|i| i * step).collect()
                }
            }
        };
        let check = |t: usize, a: usize, b: usize| -> Result<()> {
            let d = product.dist(pairs[a], pairs[b]);
            let gap = (self.payoffs.mu(t, pairs[a]) - self.payoffs.mu(t, pairs[b])).abs();
            if gap > d + EPS {
                return Err(Error::Lipschitz(format!(
                    "|mu({}) - mu({})| = {gap} > dist = {d} at round {t}",
                    pairs[a], pairs[b]
                )));
            }
            Ok(())
        };
        let n = pairs.len();
        for &t in &rounds {
            if n <= 10_000 && (rounds.len() == 1 || n <= 2_000) {
                for a in 0..n {
                    for b in (a + 1)..n {
                        check(t, a, b)?;
                    }
                }
            } else {
                let budget = 100_000 / rounds.len() as u64;
                for i in 0..budget {
                    let key = (t as u64) << 32 | i;
                    let a = (unit_uniform(sample_seed, Stream::InstanceGen, 2 * key) * n as f64)
                        as usize;
                    let b = (unit_uniform(sample_seed, Stream::InstanceGen, 2 * key + 1)
                        * n as f64) as usize;
                    check(t, a.min(n - 1), b.min(n - 1))?;
                }
            }
        }
        Ok(())
    }
}

/// Serialized instance form: either explicit tables or generator + seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceFile {
    Generated {
        generator: GeneratorSpec,
        seed: u64,
    },
    Explicit {
        context_space: SimilaritySpace,
        arms_space: SimilaritySpace,
        feasible: Feasibility,
        payoffs: PayoffModel,
        arrivals: Arrivals,
        noise: NoiseModel,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        taxonomy: Option<Taxonomy>,
    },
}

impl EnvironmentInstance {
    pub fn to_file(&self) -> InstanceFile {
        match &self.provenance {
            Some(p) => InstanceFile::Generated {
                generator: p.generator.clone(),
                seed: p.seed,
            },
            None => InstanceFile::Explicit {
                context_space: (*self.context_space).clone(),
                arms_space: (*self.arms_space).clone(),
                feasible: self.feasible.clone(),
                payoffs: self.payoffs.clone(),
                arrivals: self.arrivals.clone(),
                noise: self.noise,
                taxonomy: self.taxonomy.clone(),
            },
        }
    }

    pub fn from_file(file: InstanceFile) -> Result<Self> {
        match file {
            InstanceFile::Generated { generator, seed } => generator.build(seed),
            InstanceFile::Explicit {
                context_space,
                arms_space,
                feasible,
                payoffs,
                arrivals,
                noise,
                taxonomy,
            } => {
                let mut inst = EnvironmentInstance::new(
                    Arc::new(context_space),
                    Arc::new(arms_space),
                    feasible,
                    payoffs,
                    arrivals,
                    noise,
                )?;
                if let Some(t) = taxonomy {
                    inst = inst.with_taxonomy(t);
                }
                Ok(inst)
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(json)?)
    }
}

/// Convenience constructor for tests and small experiments: all pairs
/// feasible, static payoffs given as a `contexts x arms` table.
pub fn instance_from_table(
    context_space: SimilaritySpace,
    arms_space: SimilaritySpace,
    mu: Vec<f64>,
    arrivals: Arrivals,
) -> Result<EnvironmentInstance> {
    EnvironmentInstance::new(
        Arc::new(context_space),
        Arc::new(arms_space),
        Feasibility::All,
        PayoffModel::Static { mu },
        arrivals,
        NoiseModel::Bernoulli,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::SpaceKind;

    fn two_by_two(mu: Vec<f64>) -> EnvironmentInstance {
        instance_from_table(
            SimilaritySpace::line_grid(2, SpaceKind::Context),
            SimilaritySpace::line_grid(2, SpaceKind::Arms),
            mu,
            Arrivals::RoundRobin { contexts: vec![0, 1] },
        )
        .unwrap()
    }

    #[test]
    fn sample_payoff_degenerate_means() {
        let env = two_by_two(vec![1.0, 1.0, 1.0, 1.0]);
        for t in 0..50 {
            assert_eq!(env.sample_payoff(t, 0, 0, 9).unwrap(), 1.0);
        }
        let env = two_by_two(vec![0.0, 0.0, 0.0, 0.0]);
        for t in 0..50 {
            assert_eq!(env.sample_payoff(t, 1, 1, 9).unwrap(), 0.0);
        }
    }

    #[test]
    fn sample_payoff_monte_carlo_mean() {
        let env = two_by_two(vec![0.6, 0.6, 0.6, 0.6]);
        let n = 100_000;
        let sum: f64 = (0..n).map(|t| env.sample_payoff(t, 0, 0, 42).unwrap()).sum();
        let mean = sum / n as f64;
        // 3 sigma for Bernoulli(0.6), n = 1e5: 3 * sqrt(0.24 / 1e5) = 0.0046
        assert!((mean - 0.6).abs() < 0.01, "mean = {mean}");
    }

    #[test]
    fn sample_payoff_rejects_infeasible() {
        let env = EnvironmentInstance::new(
            Arc::new(SimilaritySpace::discrete(2, 0.0, SpaceKind::Context)),
            Arc::new(SimilaritySpace::discrete(2, 1.0, SpaceKind::Arms)),
            Feasibility::PerContext(vec![vec![0], vec![1]]),
            PayoffModel::Static { mu: vec![0.5, 0.0, 0.0, 0.5] },
            Arrivals::RoundRobin { contexts: vec![0, 1] },
            NoiseModel::Bernoulli,
        )
        .unwrap();
        assert!(matches!(
            env.sample_payoff(0, 0, 1, 1),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn best_response_single_arm_and_duplicate_scan() {
        let env = two_by_two(vec![0.2, 0.7, 0.4, 0.4]);
        assert_eq!(env.best_response(0, 0), (1, 0.7));
        // ties break low
        assert_eq!(env.best_response(1, 0), (0, 0.4));
    }

    #[test]
    fn lipschitz_validation_rejects_steep_payoffs() {
        let ctx = SimilaritySpace::line_grid(11, SpaceKind::Context);
        let arms = SimilaritySpace::line_grid(2, SpaceKind::Arms);
        // slope 5 in x violates the product Lipschitz condition
        let mut mu = vec![0.0; 22];
        for x in 0..11 {
            let v = (5.0 * x as f64 / 10.0).min(1.0);
            mu[2 * x] = v;
            mu[2 * x + 1] = v;
        }
        let r = instance_from_table(ctx, arms, mu, Arrivals::Sequential);
        assert!(matches!(r, Err(Error::Lipschitz(_))));
    }

    #[test]
    fn deterministic_noise_stream() {
        let env = two_by_two(vec![0.5, 0.5, 0.5, 0.5]);
        let a: Vec<f64> = (0..100).map(|t| env.sample_payoff(t, 0, 0, 7).unwrap()).collect();
        let b: Vec<f64> = (0..100).map(|t| env.sample_payoff(t, 0, 0, 7).unwrap()).collect();
        assert_eq!(a, b);
        let c: Vec<f64> = (0..100).map(|t| env.sample_payoff(t, 0, 0, 8).unwrap()).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn trunc_gaussian_stays_in_range() {
        let mut env = two_by_two(vec![0.5, 0.5, 0.5, 0.5]);
        env.noise = NoiseModel::TruncGaussian { std: 0.3 };
        for t in 0..10_000 {
            let p = env.sample_payoff(t, 0, 0, 3).unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
    }
}
