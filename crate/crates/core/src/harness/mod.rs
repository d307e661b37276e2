//! Experiment runner: seeded round loop, regret accounting, doubling-trick
//! wrapper, invariant auditing and CSV output.
//!
//! A `(config, seed)` pair fully determines every logged byte: the
//! environment noise is counter-addressed by round, the algorithm draws
//! from its own stream, and instance generation from a third.

mod audit;
mod csvout;
mod policies;

pub use audit::{audit, AuditChecks, AuditReport, AuditSubject, CheckResult};
pub use csvout::{rows_to_csv, write_csv};
pub use policies::build_policy;

use std::path::PathBuf;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvironmentInstance, GeneratorSpec, InstanceFile, PayoffModel};
use crate::error::{Error, Result};
use crate::meta::{MetaRoundTrace, MetaSnapshot, SubroutineKind};
use crate::rng::{stream_rng, Stream};
use crate::taxonomy::TaxRoundTrace;
use crate::zooming::{ZoomRoundTrace, ZoomSnapshot};

/// Common interface every algorithm exposes to the runner:
/// observe the context, choose an arm, receive the payoff.
pub trait Policy: Send {
    fn choose(&mut self, round: usize, context: usize, rng: &mut ChaCha8Rng) -> Result<usize>;
    fn feedback(
        &mut self,
        round: usize,
        context: usize,
        arm: usize,
        payoff: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<()>;
    /// Active balls / nodes / cells backing the policy right now.
    fn structure_size(&self) -> usize {
        1
    }
    fn set_trace(&mut self, _enabled: bool) {}
    fn take_trace(&mut self) -> AlgoTrace {
        AlgoTrace::None
    }
    fn snapshot(&self) -> Option<PolicySnapshot> {
        None
    }
    /// Doubling-phase index per round, for phase-based wrappers.
    fn phases(&self) -> Option<Vec<usize>> {
        None
    }
}

/// Structure events drained from a policy after a traced run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AlgoTrace {
    None,
    Zooming(Vec<ZoomRoundTrace>),
    Meta(Vec<MetaRoundTrace>),
    Taxonomy(Vec<TaxRoundTrace>),
}

/// State export consumed by the `check` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySnapshot {
    Zooming(ZoomSnapshot),
    Meta(MetaSnapshot),
}

/// Algorithm selection plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    /// Contextual zooming over the product similarity space.
    Zooming,
    /// Fixed-net partition with one EXP3 per context cell.
    Uniform,
    /// Context-free EXP3 over the full arm set.
    Exp3,
    /// Context-free UCB1 over the full arm set.
    Ucb1,
    /// Cheating baseline playing the exact best response.
    Oracle,
    /// Adaptive context partition with per-ball subroutines.
    Meta {
        #[serde(default = "default_c_y")]
        c_y: f64,
        #[serde(default)]
        d_y: f64,
        #[serde(default = "default_arm_net_radius")]
        arm_net_radius: f64,
        #[serde(default = "default_subroutine")]
        subroutine: SubroutineKind,
    },
    /// Taxonomy bandit with a fixed quality parameter.
    Taxonomy { q_hat: f64 },
    /// Taxonomy bandit with the quality parameter schedule `1/i` over
    /// doubling phases.
    TaxonomyPhased,
    /// Doubling-trick wrapper: fresh inner instance per phase of 2^i rounds.
    Doubling { inner: Box<AlgorithmSpec> },
}

fn default_c_y() -> f64 {
    1.0
}

fn default_arm_net_radius() -> f64 {
    1.0 / 16.0
}

fn default_subroutine() -> SubroutineKind {
    SubroutineKind::Exp3
}

impl AlgorithmSpec {
    pub fn label(&self) -> String {
        match self {
            AlgorithmSpec::Zooming => "zooming".into(),
            AlgorithmSpec::Uniform => "uniform".into(),
            AlgorithmSpec::Exp3 => "exp3".into(),
            AlgorithmSpec::Ucb1 => "ucb1".into(),
            AlgorithmSpec::Oracle => "oracle".into(),
            AlgorithmSpec::Meta { .. } => "meta".into(),
            AlgorithmSpec::Taxonomy { .. } => "taxonomy".into(),
            AlgorithmSpec::TaxonomyPhased => "taxonomy_phased".into(),
            AlgorithmSpec::Doubling { inner } => format!("doubling_{}", inner.label()),
        }
    }
}

/// Where the environment comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvironmentSpec {
    File { file: PathBuf },
    Generator { generator: GeneratorSpec, seed: u64 },
    Inline { inline: Box<InstanceFile> },
}

impl EnvironmentSpec {
    pub fn resolve(&self) -> Result<Arc<EnvironmentInstance>> {
        let inst = match self {
            EnvironmentSpec::File { file } => {
                let text = std::fs::read_to_string(file).map_err(|e| {
                    Error::config(format!("cannot read instance file {}: {e}", file.display()))
                })?;
                EnvironmentInstance::from_json(&text)?
            }
            EnvironmentSpec::Generator { generator, seed } => generator.build(*seed)?,
            EnvironmentSpec::Inline { inline } => {
                EnvironmentInstance::from_file((**inline).clone())?
            }
        };
        Ok(Arc::new(inst))
    }
}

/// Which audits to run after each seeded run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditOptions {
    #[serde(default)]
    pub invariants: bool,
    #[serde(default)]
    pub concentration: bool,
    #[serde(default)]
    pub surrogates: bool,
}

impl AuditOptions {
    pub fn all() -> Self {
        AuditOptions {
            invariants: true,
            concentration: true,
            surrogates: true,
        }
    }

    pub fn any(&self) -> bool {
        self.invariants || self.concentration || self.surrogates
    }
}

/// A complete experiment: one environment, one algorithm, many seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    pub algorithm: AlgorithmSpec,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub audit: AuditOptions,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub write_csv: bool,
    #[serde(default)]
    pub write_snapshot: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("need at least one seed"));
        }
        if let EnvironmentSpec::File { file } = &self.environment {
            if !file.exists() {
                return Err(Error::config(format!(
                    "instance file {} does not exist",
                    file.display()
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

/// One logged round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub round: usize,
    pub context: usize,
    pub arm: usize,
    pub payoff: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
    pub structure_size: usize,
}

/// Full record of one seeded run.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub seed: u64,
    pub horizon: usize,
    pub algorithm: String,
    pub spec: AlgorithmSpec,
    pub rows: Vec<RunRow>,
    pub trace: AlgoTrace,
    pub snapshot: Option<PolicySnapshot>,
    /// Doubling-phase index per round, when the policy is phase-based.
    pub phases: Option<Vec<usize>>,
    pub total_regret: f64,
}

impl RunLog {
    pub fn cumulative_regret(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.cum_regret).collect()
    }

    pub fn average_regret(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.total_regret / self.rows.len() as f64
        }
    }
}

/// Per-context benchmark payoffs: the context-specific best arm for static
/// payoffs, or the arm maximizing the horizon-summed payoff for oblivious
/// adversarial tables.
pub struct Benchmark {
    env: Arc<EnvironmentInstance>,
    arm_per_context: Vec<usize>,
}

impl Benchmark {
    pub fn new(env: &Arc<EnvironmentInstance>, horizon: usize) -> Self {
        let arm_per_context = (0..env.n_contexts())
            .map(|ctx| {
                if env.feasible_arms(ctx).is_empty() {
                    usize::MAX
                } else {
                    env.benchmark_arm(ctx, horizon)
                }
            })
            .collect();
        Benchmark {
            env: env.clone(),
            arm_per_context,
        }
    }

    pub fn mu_star(&self, round: usize, context: usize) -> f64 {
        match &self.env.payoffs {
            PayoffModel::Static { .. } => self.env.best_response(context, round).1,
            PayoffModel::PerRound { .. } => {
                let arm = self.arm_per_context[context];
                self.env.mu(round, context, arm)
            }
        }
    }
}

/// Run one `(algorithm, seed)` pair for `horizon` rounds.
pub fn run_experiment(
    env: &Arc<EnvironmentInstance>,
    algorithm: &AlgorithmSpec,
    horizon: usize,
    seed: u64,
    audit_trace: bool,
) -> Result<RunLog> {
    if matches!(env.arrivals, crate::env::Arrivals::Sequential)
        && horizon > env.context_space.len()
    {
        return Err(Error::config(format!(
            "horizon {horizon} exceeds the {}-round context space of a sequential-arrival instance",
            env.context_space.len()
        )));
    }
    let mut policy = build_policy(algorithm, env, horizon)?;
    if audit_trace {
        policy.set_trace(true);
    }
    let mut alg_rng = stream_rng(seed, Stream::Algorithm);
    let bench = Benchmark::new(env, horizon);
    // best-response means are scanned per round; cache them for static
    // payoffs where they never change
    let static_mu_star: Option<Vec<f64>> = match &env.payoffs {
        PayoffModel::Static { .. } => Some(
            (0..env.n_contexts())
                .map(|c| {
                    if env.feasible_arms(c).is_empty() {
                        0.0
                    } else {
                        env.best_response(c, 0).1
                    }
                })
                .collect(),
        ),
        PayoffModel::PerRound { .. } => None,
    };
    let mut rows = Vec::with_capacity(horizon);
    let mut cum = 0.0;
    for t in 0..horizon {
        let context = env.arrivals.context_at(t);
        let arm = policy.choose(t, context, &mut alg_rng)?;
        let payoff = env.sample_payoff(t, context, arm, seed)?;
        policy.feedback(t, context, arm, payoff, &mut alg_rng)?;
        let mu_star = match &static_mu_star {
            Some(tab) => tab[context],
            None => bench.mu_star(t, context),
        };
        let inst = mu_star - env.mu(t, context, arm);
        cum += inst;
        rows.push(RunRow {
            round: t,
            context,
            arm,
            payoff,
            inst_regret: inst,
            cum_regret: cum,
            structure_size: policy.structure_size(),
        });
    }
    let trace = policy.take_trace();
    let snapshot = policy.snapshot();
    let phases = policy.phases();
    Ok(RunLog {
        seed,
        horizon,
        algorithm: algorithm.label(),
        spec: algorithm.clone(),
        rows,
        trace,
        snapshot,
        phases,
        total_regret: cum,
    })
}

/// Recompute the cumulative contextual-regret series from a log against
/// the exact oracle. For drifting instances (`x_t = t`) this is the dynamic
/// regret.
pub fn contextual_regret(log: &RunLog, env: &Arc<EnvironmentInstance>) -> Vec<f64> {
    let bench = Benchmark::new(env, log.horizon);
    let mut cum = 0.0;
    log.rows
        .iter()
        .map(|r| {
            cum += bench.mu_star(r.round, r.context) - env.mu(r.round, r.context, r.arm);
            cum
        })
        .collect()
}

/// Worker-count override honored by [`run_config`].
pub const WORKERS_ENV: &str = "CTXZOOM_WORKERS";
/// Output-directory override honored by [`run_config`].
pub const OUT_DIR_ENV: &str = "CTXZOOM_OUT_DIR";

/// Outcome of one seed within a config run.
pub struct SeedOutcome {
    pub seed: u64,
    pub log: RunLog,
    pub audit: Option<AuditReport>,
    pub csv_path: Option<PathBuf>,
    pub snapshot_path: Option<PathBuf>,
}

/// Run every seed of a config, fanning out across workers. Results are
/// ordered by seed regardless of completion order.
pub fn run_config(config: &ExperimentConfig) -> Result<Vec<SeedOutcome>> {
    config.validate()?;
    let env = config.environment.resolve()?;
    let out_dir: Option<PathBuf> = std::env::var(OUT_DIR_ENV)
        .ok()
        .map(PathBuf::from)
        .or_else(|| config.output_dir.clone());
    if let Some(dir) = &out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let workers = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    let run_all = || -> Vec<Result<SeedOutcome>> {
        let mut seeds = config.seeds.clone();
        seeds.sort_unstable();
        seeds
            .par_iter()
            .map(|&seed| run_one_seed(config, &env, seed, out_dir.as_deref()))
            .collect()
    };
    let outcomes = match workers {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config(format!("worker pool: {e}")))?
            .install(run_all),
        _ => run_all(),
    };
    outcomes.into_iter().collect()
}

fn run_one_seed(
    config: &ExperimentConfig,
    env: &Arc<EnvironmentInstance>,
    seed: u64,
    out_dir: Option<&std::path::Path>,
) -> Result<SeedOutcome> {
    let trace_needed = config.audit.any();
    let log = run_experiment(env, &config.algorithm, config.horizon, seed, trace_needed)?;
    let report = if config.audit.any() {
        Some(audit(
            AuditSubject::Run { env, log: &log },
            AuditChecks {
                invariants: config.audit.invariants,
                concentration: config.audit.concentration,
                surrogates: config.audit.surrogates,
            },
        ))
    } else {
        None
    };
    let mut csv_path = None;
    let mut snapshot_path = None;
    if let Some(dir) = out_dir {
        if config.write_csv {
            let path = dir.join(format!("{}_seed{}.csv", log.algorithm, seed));
            write_csv(&path, &log.rows)?;
            csv_path = Some(path);
        }
        if config.write_snapshot {
            if let Some(snap) = &log.snapshot {
                let path = dir.join(format!("{}_seed{}.snapshot.json", log.algorithm, seed));
                std::fs::write(&path, serde_json::to_string_pretty(snap)?)?;
                snapshot_path = Some(path);
            }
        }
    }
    Ok(SeedOutcome {
        seed,
        log,
        audit: report,
        csv_path,
        snapshot_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::generators::make_tilted_tent;
    use crate::env::{instance_from_table, Arrivals};
    use crate::space::{SimilaritySpace, SpaceKind};

    #[test]
    fn single_round_single_arm_zero_regret() {
        let env = Arc::new(
            instance_from_table(
                SimilaritySpace::line_grid(1, SpaceKind::Context),
                SimilaritySpace::line_grid(1, SpaceKind::Arms),
                vec![0.7],
                Arrivals::RoundRobin { contexts: vec![0] },
            )
            .unwrap(),
        );
        let log = run_experiment(&env, &AlgorithmSpec::Ucb1, 1, 0, false).unwrap();
        assert_eq!(log.total_regret, 0.0);
    }

    #[test]
    fn oracle_policy_has_zero_regret() {
        let env = Arc::new(make_tilted_tent(17).unwrap());
        let log = run_experiment(&env, &AlgorithmSpec::Oracle, 500, 3, false).unwrap();
        assert_eq!(log.total_regret, 0.0);
        assert!(log.rows.iter().all(|r| r.inst_regret == 0.0));
    }

    #[test]
    fn regret_series_matches_recomputation() {
        let env = Arc::new(make_tilted_tent(17).unwrap());
        let log = run_experiment(&env, &AlgorithmSpec::Exp3, 300, 1, false).unwrap();
        let series = contextual_regret(&log, &env);
        for (row, s) in log.rows.iter().zip(&series) {
            assert!((row.cum_regret - s).abs() < 1e-9);
        }
        // nonnegative instantaneous regret under the exact oracle
        assert!(log.rows.iter().all(|r| r.inst_regret >= -1e-12));
    }

    #[test]
    fn constant_mu_gives_zero_regret_series() {
        let env = Arc::new(
            instance_from_table(
                SimilaritySpace::line_grid(3, SpaceKind::Context),
                SimilaritySpace::line_grid(4, SpaceKind::Arms),
                vec![0.5; 12],
                Arrivals::RoundRobin {
                    contexts: vec![0, 1, 2],
                },
            )
            .unwrap(),
        );
        let log = run_experiment(&env, &AlgorithmSpec::Zooming, 200, 0, false).unwrap();
        assert!(log.rows.iter().all(|r| r.inst_regret.abs() < 1e-12));
    }

    #[test]
    fn runs_are_deterministic() {
        let env = Arc::new(make_tilted_tent(17).unwrap());
        for algo in [
            AlgorithmSpec::Zooming,
            AlgorithmSpec::Uniform,
            AlgorithmSpec::Exp3,
        ] {
            let a = run_experiment(&env, &algo, 400, 7, false).unwrap();
            let b = run_experiment(&env, &algo, 400, 7, false).unwrap();
            assert_eq!(a.rows, b.rows, "{}", algo.label());
        }
    }

    #[test]
    fn adversarial_benchmark_matches_brute_force() {
        // 3 contexts, 2 arms, per-round table
        let ctx = SimilaritySpace::discrete(3, 1.0, SpaceKind::Context);
        let arms = SimilaritySpace::discrete(2, 1.0, SpaceKind::Arms);
        let horizon = 50usize;
        let mu: Vec<Vec<f64>> = (0..horizon)
            .map(|t| {
                (0..6)
                    .map(|flat| {
                        let phase = (t * (flat + 2)) % 7;
                        0.1 + 0.1 * phase as f64
                    })
                    .collect()
            })
            .collect();
        let env = EnvironmentInstance::new(
            Arc::new(ctx),
            Arc::new(arms),
            crate::env::Feasibility::All,
            PayoffModel::PerRound { mu: mu.clone() },
            Arrivals::RoundRobin {
                contexts: vec![0, 1, 2],
            },
            crate::env::NoiseModel::Bernoulli,
        )
        .unwrap();
        let env = Arc::new(env);
        for ctx_id in 0..3 {
            // brute force per-context argmax of summed payoffs
            let mut best_arm = 0;
            let mut best_sum = f64::NEG_INFINITY;
            for arm in 0..2 {
                let s: f64 = (0..horizon).map(|t| mu[t][ctx_id * 2 + arm]).sum();
                if s > best_sum {
                    best_sum = s;
                    best_arm = arm;
                }
            }
            assert_eq!(env.benchmark_arm(ctx_id, horizon), best_arm);
        }
        let log = run_experiment(&env, &AlgorithmSpec::Exp3, horizon, 0, false).unwrap();
        let series = contextual_regret(&log, &env);
        assert_eq!(series.len(), horizon);
    }

    #[test]
    fn config_round_trip_and_validation() {
        let json = r#"{
            "environment": {"generator": {"name": "tilted_tent", "grid": 17}, "seed": 0},
            "algorithm": {"name": "zooming"},
            "horizon": 100,
            "seeds": [0, 1]
        }"#;
        let cfg = ExperimentConfig::from_json(json).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.algorithm, AlgorithmSpec::Zooming);
        let bad = ExperimentConfig {
            seeds: vec![],
            ..cfg
        };
        assert!(bad.validate().is_err());
    }
}
