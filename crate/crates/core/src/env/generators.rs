//! Instance generators.
//!
//! Every generator validates its output (metric axioms where applicable and
//! the Lipschitz condition) before returning. Generators are deterministic
//! in their seed and are serializable as [`GeneratorSpec`], which is what
//! instance files store for lossless round-trips.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{
    Arrivals, EnvironmentInstance, Feasibility, NoiseModel, PayoffModel, Provenance,
};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::space::{build_r_net, DriftShape, SimilaritySpace, SpaceKind};
use crate::taxonomy::{balanced_tree, induced_arm_metric, random_tree, Taxonomy};

/// Serializable recipe for a generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// Needle-in-the-haystack family: near-flat payoffs with one slightly
    /// better arm per net context, smoothed to satisfy the Lipschitz bound.
    Needle {
        context_grid: usize,
        arm_grid: usize,
        n_x: usize,
        n_y: usize,
        r: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        assignment: Option<Vec<usize>>,
    },
    /// Context `x_t = t` with a temporal metric bounding per-arm drift.
    Drifting {
        num_arms: usize,
        sigma: f64,
        shape: DriftShape,
        horizon: usize,
    },
    /// Sleeping bandits: contexts are awake sets, context distance is 0.
    Sleeping {
        num_arms: usize,
        mu: Vec<f64>,
        schedule: Vec<Vec<usize>>,
    },
    /// Random sleeping schedule over `horizon` rounds.
    RandomSleeping { num_arms: usize, horizon: usize },
    /// Random max-of-cones Lipschitz payoffs on a 1-D x 1-D grid.
    RandomLipschitz {
        context_grid: usize,
        arm_grid: usize,
        num_peaks: usize,
    },
    /// Benign single-peak instance: per context one best arm along a
    /// slowly moving ridge, payoff falling off at unit slope.
    TiltedTent { grid: usize },
    /// One strong arm plus a far low-payoff arm continuum; the
    /// near-optimal set is a thin slice of the similarity space.
    SinglePeak {
        context_grid: usize,
        bad_arm_grid: usize,
    },
    /// One strong arm among `num_arms` pairwise-dissimilar arms.
    PeakedArms { context_grid: usize, num_arms: usize },
    /// Random rooted taxonomy with hierarchically correlated leaf payoffs.
    RandomTaxonomy { num_leaves: usize, max_degree: usize },
    /// Needle payoffs on the leaves of a balanced binary taxonomy.
    TaxonomyNeedle { n_arms: usize, r: f64 },
}

impl GeneratorSpec {
    pub fn build(&self, seed: u64) -> Result<EnvironmentInstance> {
        let mut rng = stream_rng(seed, Stream::InstanceGen);
        let inst = match self {
            GeneratorSpec::Needle {
                context_grid,
                arm_grid,
                n_x,
                n_y,
                r,
                assignment,
            } => {
                let ctx = Arc::new(SimilaritySpace::line_grid(*context_grid, SpaceKind::Context));
                let arms = Arc::new(SimilaritySpace::line_grid(*arm_grid, SpaceKind::Arms));
                make_needle_instance(ctx, arms, *n_x, *n_y, *r, assignment.clone(), &mut rng)?
            }
            GeneratorSpec::Drifting {
                num_arms,
                sigma,
                shape,
                horizon,
            } => make_drifting_env(*num_arms, *sigma, *shape, *horizon, &mut rng)?,
            GeneratorSpec::Sleeping {
                num_arms,
                mu,
                schedule,
            } => make_sleeping_env(*num_arms, schedule, mu)?,
            GeneratorSpec::RandomSleeping { num_arms, horizon } => {
                let mu: Vec<f64> = (0..*num_arms).map(|_| rng.random_range(0.1..0.9)).collect();
                let schedule: Vec<Vec<usize>> = (0..*horizon)
                    .map(|_| {
                        let mut awake: Vec<usize> = (0..*num_arms)
                            .filter(|_| rng.random_bool(0.6))
                            .collect();
                        if awake.is_empty() {
                            awake.push(rng.random_range(0..*num_arms));
                        }
                        awake
                    })
                    .collect();
                make_sleeping_env(*num_arms, &schedule, &mu)?
            }
            GeneratorSpec::RandomLipschitz {
                context_grid,
                arm_grid,
                num_peaks,
            } => make_random_lipschitz(*context_grid, *arm_grid, *num_peaks, &mut rng)?,
            GeneratorSpec::TiltedTent { grid } => make_tilted_tent(*grid)?,
            GeneratorSpec::SinglePeak {
                context_grid,
                bad_arm_grid,
            } => make_single_peak(*context_grid, *bad_arm_grid)?,
            GeneratorSpec::PeakedArms {
                context_grid,
                num_arms,
            } => make_peaked_arms(*context_grid, *num_arms)?,
            GeneratorSpec::RandomTaxonomy {
                num_leaves,
                max_degree,
            } => make_random_taxonomy(*num_leaves, *max_degree, &mut rng)?,
            GeneratorSpec::TaxonomyNeedle { n_arms, r } => {
                make_taxonomy_needle(*n_arms, *r, &mut rng)?
            }
        };
        Ok(inst.with_provenance(Provenance {
            generator: self.clone(),
            seed,
        }))
    }
}

/// Needle family: take `n_x` points from an `r`-net of the context space
/// and `n_y` from an `r`-net of the arm space, plant one needle arm per net
/// context (payoff `1/2 + r/2` vs `1/2 + r/4` on the other net arms) and
/// smooth everything down to the `1/2` floor at unit slope.
pub fn make_needle_instance(
    context_space: Arc<SimilaritySpace>,
    arms_space: Arc<SimilaritySpace>,
    n_x: usize,
    n_y: usize,
    r: f64,
    assignment: Option<Vec<usize>>,
    rng: &mut ChaCha8Rng,
) -> Result<EnvironmentInstance> {
    if n_x < 1 || n_y < 2 {
        return Err(Error::parameter("needle: need n_x >= 1 and n_y >= 2"));
    }
    if !(0.0..=0.5).contains(&r) || r == 0.0 {
        return Err(Error::parameter("needle: r must lie in (0, 1/2]"));
    }
    let ctx_pts: Vec<usize> = (0..context_space.len()).collect();
    let arm_pts: Vec<usize> = (0..arms_space.len()).collect();
    let net_x = build_r_net(&context_space, &ctx_pts, r);
    let net_y = build_r_net(&arms_space, &arm_pts, r);
    if net_x.len() < n_x {
        return Err(Error::parameter(format!(
            "needle: context r-net has {} points, need {n_x}",
            net_x.len()
        )));
    }
    if net_y.len() < n_y {
        return Err(Error::parameter(format!(
            "needle: arm r-net has {} points, need {n_y}",
            net_y.len()
        )));
    }
    let s_x = &net_x[..n_x];
    let s_y = &net_y[..n_y];
    let assignment = match assignment {
        Some(a) => {
            if a.len() != n_x || a.iter().any(|&j| j >= n_y) {
                return Err(Error::parameter(
                    "needle: assignment must give one arm-net index per net context",
                ));
            }
            a
        }
        None => (0..n_x).map(|_| rng.random_range(0..n_y)).collect(),
    };

    let n_arms = arms_space.len();
    let mut mu = vec![0.5; context_space.len() * n_arms];
    for x in 0..context_space.len() {
        for y in 0..n_arms {
            let mut best: f64 = 0.5;
            for (i, &x0) in s_x.iter().enumerate() {
                let dx = context_space.dist(x, x0);
                for (j, &y0) in s_y.iter().enumerate() {
                    let base = if assignment[i] == j {
                        0.5 + r / 2.0
                    } else {
                        0.5 + r / 4.0
                    };
                    best = best.max(base - dx - arms_space.dist(y, y0));
                }
            }
            mu[x * n_arms + y] = best;
        }
    }
    EnvironmentInstance::new(
        context_space,
        arms_space,
        Feasibility::All,
        PayoffModel::Static { mu },
        Arrivals::RoundRobin {
            contexts: s_x.to_vec(),
        },
        NoiseModel::Bernoulli,
    )
}

/// Sliding envelope enforcing `|mu(t) - mu(s)| <= sigma * sqrt(t - s)` for
/// all `s < t`. Constraints older than `1/sigma^2` rounds are slack because
/// the metric truncates at 1.
struct SqrtEnvelope {
    sigma: f64,
    window: usize,
    upper: VecDeque<(usize, f64)>,
    lower: VecDeque<(usize, f64)>,
}

impl SqrtEnvelope {
    fn new(sigma: f64) -> Self {
        let window = if sigma > 0.0 {
            (1.0 / (sigma * sigma)).ceil() as usize + 1
        } else {
            usize::MAX
        };
        SqrtEnvelope {
            sigma,
            window,
            upper: VecDeque::new(),
            lower: VecDeque::new(),
        }
    }

    fn bounds(&mut self, t: usize) -> (f64, f64) {
        while self
            .upper
            .front()
            .is_some_and(|&(s, _)| t - s > self.window)
        {
            self.upper.pop_front();
        }
        while self
            .lower
            .front()
            .is_some_and(|&(s, _)| t - s > self.window)
        {
            self.lower.pop_front();
        }
        let mut hi = 1.0f64;
        for &(s, v) in &self.upper {
            hi = hi.min(v + self.sigma * ((t - s) as f64).sqrt());
        }
        let mut lo = 0.0f64;
        for &(s, v) in &self.lower {
            lo = lo.max(v - self.sigma * ((t - s) as f64).sqrt());
        }
        (lo, hi)
    }

    fn push(&mut self, t: usize, v: f64) {
        // dominated constraints never attain the envelope again
        while self.upper.back().is_some_and(|&(_, u)| u >= v) {
            self.upper.pop_back();
        }
        self.upper.push_back((t, v));
        while self.lower.back().is_some_and(|&(_, u)| u <= v) {
            self.lower.pop_back();
        }
        self.lower.push_back((t, v));
    }
}

/// Drifting MAB adapter: contexts are the rounds themselves and the context
/// metric bounds per-arm temporal change. Payoffs follow reflected random
/// walks projected onto the declared metric envelope.
pub fn make_drifting_env(
    num_arms: usize,
    sigma: f64,
    shape: DriftShape,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EnvironmentInstance> {
    if num_arms == 0 || horizon == 0 {
        return Err(Error::parameter("drifting: need arms >= 1 and horizon >= 1"));
    }
    if sigma < 0.0 {
        return Err(Error::parameter("drifting: sigma must be >= 0"));
    }
    let mut mu = vec![0.0f64; horizon * num_arms];
    for arm in 0..num_arms {
        match shape {
            DriftShape::Linear => {
                let mut v: f64 = rng.random_range(0.0..1.0);
                for t in 0..horizon {
                    mu[t * num_arms + arm] = v;
                    let step: f64 = rng.random_range(-sigma..=sigma);
                    v += step;
                    // reflect into [0, 1]; folding is 1-Lipschitz so the
                    // per-step bound survives
                    if v < 0.0 {
                        v = -v;
                    }
                    if v > 1.0 {
                        v = 2.0 - v;
                    }
                    v = v.clamp(0.0, 1.0);
                }
            }
            DriftShape::Sqrt => {
                let mut envelope = SqrtEnvelope::new(sigma);
                let mut v: f64 = rng.random_range(0.0..1.0);
                for t in 0..horizon {
                    if t > 0 {
                        let gauss: f64 = {
                            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
                            let u2: f64 = rng.random_range(0.0..1.0);
                            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                        };
                        let step = (gauss * sigma * 0.5).clamp(-sigma, sigma);
                        let (lo, hi) = envelope.bounds(t);
                        v = (v + step).clamp(lo, hi);
                    }
                    envelope.push(t, v);
                    mu[t * num_arms + arm] = v;
                }
            }
        }
    }
    EnvironmentInstance::new(
        Arc::new(SimilaritySpace::drift(horizon, sigma, shape)),
        Arc::new(SimilaritySpace::discrete(num_arms, 1.0, SpaceKind::Arms)),
        Feasibility::All,
        PayoffModel::Static { mu },
        Arrivals::Sequential,
        NoiseModel::Bernoulli,
    )
}

/// Sleeping bandits: contexts are the distinct awake sets (first-appearance
/// order), the context distance is identically 0 and only awake pairs are
/// feasible.
pub fn make_sleeping_env(
    num_arms: usize,
    awake_schedule: &[Vec<usize>],
    mu: &[f64],
) -> Result<EnvironmentInstance> {
    if mu.len() != num_arms {
        return Err(Error::parameter("sleeping: mu must list one value per arm"));
    }
    if awake_schedule.is_empty() {
        return Err(Error::parameter("sleeping: empty schedule"));
    }
    let mut contexts: Vec<Vec<usize>> = Vec::new();
    let mut arrivals = Vec::with_capacity(awake_schedule.len());
    for awake in awake_schedule {
        let mut set: Vec<usize> = awake.clone();
        set.sort_unstable();
        set.dedup();
        if set.is_empty() {
            return Err(Error::parameter("sleeping: empty awake set"));
        }
        if set.iter().any(|&a| a >= num_arms) {
            return Err(Error::parameter("sleeping: awake arm out of range"));
        }
        let ctx = match contexts.iter().position(|c| *c == set) {
            Some(i) => i,
            None => {
                contexts.push(set);
                contexts.len() - 1
            }
        };
        arrivals.push(ctx);
    }
    let n_ctx = contexts.len();
    let mut table = vec![0.0; n_ctx * num_arms];
    for (c, awake) in contexts.iter().enumerate() {
        for &a in awake {
            table[c * num_arms + a] = mu[a];
        }
    }
    EnvironmentInstance::new(
        Arc::new(SimilaritySpace::discrete(n_ctx, 0.0, SpaceKind::Context)),
        Arc::new(SimilaritySpace::discrete(num_arms, 1.0, SpaceKind::Arms)),
        Feasibility::PerContext(contexts),
        PayoffModel::Static { mu: table },
        Arrivals::Sequence { contexts: arrivals },
        NoiseModel::Bernoulli,
    )
}

/// Random Lipschitz payoffs: the max of a few random cones, clamped.
pub fn make_random_lipschitz(
    context_grid: usize,
    arm_grid: usize,
    num_peaks: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EnvironmentInstance> {
    if num_peaks == 0 {
        return Err(Error::parameter("random lipschitz: need at least one peak"));
    }
    let ctx = Arc::new(SimilaritySpace::line_grid(context_grid, SpaceKind::Context));
    let arms = Arc::new(SimilaritySpace::line_grid(arm_grid, SpaceKind::Arms));
    let product = SimilaritySpace::product(ctx.clone(), arms.clone());
    let peaks: Vec<(usize, f64)> = (0..num_peaks)
        .map(|_| {
            (
                rng.random_range(0..product.len()),
                rng.random_range(0.4..0.9),
            )
        })
        .collect();
    let mu: Vec<f64> = (0..product.len())
        .map(|p| {
            let v = peaks
                .iter()
                .map(|&(c, h)| h - product.dist(p, c))
                .fold(f64::NEG_INFINITY, f64::max);
            v.clamp(0.2, 0.95)
        })
        .collect();
    EnvironmentInstance::new(
        ctx,
        arms,
        Feasibility::All,
        PayoffModel::Static { mu },
        Arrivals::RoundRobin {
            contexts: (0..context_grid).collect(),
        },
        NoiseModel::Bernoulli,
    )
}

/// Benign single-peak instance on `grid x grid`: best arm drifts linearly
/// with the context, payoff falls off at unit slope in the arm direction.
pub fn make_tilted_tent(grid: usize) -> Result<EnvironmentInstance> {
    if grid < 2 {
        return Err(Error::parameter("tilted tent: need grid >= 2"));
    }
    let ctx = Arc::new(SimilaritySpace::line_grid(grid, SpaceKind::Context));
    let arms = Arc::new(SimilaritySpace::line_grid(grid, SpaceKind::Arms));
    let coord = |i: usize| i as f64 / (grid - 1) as f64;
    let mut mu = vec![0.0; grid * grid];
    for x in 0..grid {
        let ridge = 0.25 + 0.5 * coord(x);
        for y in 0..grid {
            mu[x * grid + y] = 0.9 - (coord(y) - ridge).abs();
        }
    }
    EnvironmentInstance::new(
        ctx,
        arms,
        Feasibility::All,
        PayoffModel::Static { mu },
        Arrivals::RoundRobin {
            contexts: (0..grid).collect(),
        },
        NoiseModel::Bernoulli,
    )
}

/// One strong arm, `num_arms - 1` weak dissimilar arms: the set of pairs
/// within any moderate badness is a thin slice of the similarity space.
pub fn make_peaked_arms(context_grid: usize, num_arms: usize) -> Result<EnvironmentInstance> {
    if num_arms < 2 || context_grid < 2 {
        return Err(Error::parameter("peaked arms: need >= 2 arms and a context grid"));
    }
    let ctx = Arc::new(SimilaritySpace::line_grid(context_grid, SpaceKind::Context));
    let arms = Arc::new(SimilaritySpace::discrete(num_arms, 1.0, SpaceKind::Arms));
    let coord = |i: usize| i as f64 / (context_grid - 1) as f64;
    let mut mu = vec![0.1; context_grid * num_arms];
    for x in 0..context_grid {
        mu[x * num_arms] = 0.95 - 0.1 * (coord(x) - 0.5).abs();
    }
    EnvironmentInstance::new(
        ctx,
        arms,
        Feasibility::All,
        PayoffModel::Static { mu },
        Arrivals::RoundRobin {
            contexts: (0..context_grid).collect(),
        },
        NoiseModel::Bernoulli,
    )
}

fn taxonomy_instance(tree: Taxonomy, leaf_mu: Vec<f64>) -> Result<EnvironmentInstance> {
    let n = leaf_mu.len();
    let dist = induced_arm_metric(&tree, &leaf_mu);
    let arms = Arc::new(SimilaritySpace::dense(dist, SpaceKind::Arms, 1.0)?);
    let ctx = Arc::new(SimilaritySpace::discrete(1, 0.0, SpaceKind::Context));
    let inst = EnvironmentInstance::new(
        ctx,
        arms,
        Feasibility::All,
        PayoffModel::Static { mu: leaf_mu },
        Arrivals::RoundRobin { contexts: vec![0] },
        NoiseModel::Bernoulli,
    )?;
    debug_assert_eq!(inst.n_arms(), n);
    Ok(inst.with_taxonomy(tree))
}

/// Random taxonomy with hierarchically correlated leaf payoffs: child
/// values deviate from their parent by less at deeper levels, so subtree
/// weight shrinks with depth.
pub fn make_random_taxonomy(
    num_leaves: usize,
    max_degree: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EnvironmentInstance> {
    if num_leaves < 2 || max_degree < 2 {
        return Err(Error::parameter("taxonomy: need >= 2 leaves and degree >= 2"));
    }
    let tree = random_tree(num_leaves, max_degree, rng);
    let mut values = vec![0.0f64; tree.num_nodes()];
    values[tree.root()] = rng.random_range(0.35..0.65);
    let order = tree.topological_order();
    for &v in &order {
        let depth = tree.depth(v);
        for &c in tree.children(v) {
            let spread = 0.4 * 0.55f64.powi(depth as i32);
            values[c] = (values[v] + rng.random_range(-spread..=spread)).clamp(0.02, 0.98);
        }
    }
    let leaf_mu: Vec<f64> = tree.leaves().iter().map(|&l| values[l]).collect();
    taxonomy_instance(tree, leaf_mu)
}

/// Needle payoffs on a balanced binary taxonomy: one leaf pays
/// `1/2 + r/2`, the rest pay `1/2 + r/4`.
pub fn make_taxonomy_needle(n_arms: usize, r: f64, rng: &mut ChaCha8Rng) -> Result<EnvironmentInstance> {
    if n_arms < 2 {
        return Err(Error::parameter("taxonomy needle: need >= 2 arms"));
    }
    if !(0.0..=0.5).contains(&r) || r == 0.0 {
        return Err(Error::parameter("taxonomy needle: r must lie in (0, 1/2]"));
    }
    let tree = balanced_tree(n_arms);
    let needle = rng.random_range(0..n_arms);
    let leaf_mu: Vec<f64> = (0..n_arms)
        .map(|i| if i == needle { 0.5 + r / 2.0 } else { 0.5 + r / 4.0 })
        .collect();
    taxonomy_instance(tree, leaf_mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::DriftShape;

    fn gen_rng(seed: u64) -> ChaCha8Rng {
        stream_rng(seed, Stream::InstanceGen)
    }

    #[test]
    fn needle_two_arm_values() {
        // single net context, two net arms, r = 0.2
        let ctx = Arc::new(SimilaritySpace::line(vec![0.0], SpaceKind::Context));
        let arms = Arc::new(SimilaritySpace::line(vec![0.0, 0.5], SpaceKind::Arms));
        let env = make_needle_instance(ctx, arms, 1, 2, 0.2, Some(vec![0]), &mut gen_rng(0))
            .unwrap();
        assert!((env.mu(0, 0, 0) - 0.6).abs() < 1e-12);
        assert!((env.mu(0, 0, 1) - 0.55).abs() < 1e-12);
        assert_eq!(env.best_response(0, 0), (0, 0.6));
    }

    #[test]
    fn needle_smoothing_floor() {
        let ctx = Arc::new(SimilaritySpace::line_grid(41, SpaceKind::Context));
        let arms = Arc::new(SimilaritySpace::line_grid(41, SpaceKind::Arms));
        let env =
            make_needle_instance(ctx.clone(), arms.clone(), 2, 2, 0.2, None, &mut gen_rng(1))
                .unwrap();
        // any pair at distance >= r/2 from every net pair sits on the floor
        let net_x = build_r_net(&ctx, &(0..41).collect::<Vec<_>>(), 0.2);
        let net_y = build_r_net(&arms, &(0..41).collect::<Vec<_>>(), 0.2);
        let s_x = &net_x[..2];
        let s_y = &net_y[..2];
        let mut floor_checked = 0;
        for x in 0..41 {
            for y in 0..41 {
                let mut min_d = f64::INFINITY;
                for &x0 in s_x {
                    for &y0 in s_y {
                        min_d = min_d.min(ctx.dist(x, x0) + arms.dist(y, y0));
                    }
                }
                if min_d >= 0.1 {
                    assert_eq!(env.mu(0, x, y), 0.5);
                    floor_checked += 1;
                }
            }
        }
        assert!(floor_checked > 0);
    }

    #[test]
    fn needle_net_exactly_one_needle_per_context() {
        let ctx = Arc::new(SimilaritySpace::line_grid(17, SpaceKind::Context));
        let arms = Arc::new(SimilaritySpace::line_grid(17, SpaceKind::Arms));
        let env = make_needle_instance(ctx.clone(), arms, 4, 4, 0.25, None, &mut gen_rng(3))
            .unwrap();
        let Arrivals::RoundRobin { contexts } = &env.arrivals else {
            panic!("needle arrivals should round-robin")
        };
        for &x in contexts {
            let peak = 0.5 + 0.25 / 2.0;
            let hits = (0..env.n_arms())
                .filter(|&y| (env.mu(0, x, y) - peak).abs() < 1e-12)
                .count();
            assert_eq!(hits, 1, "context {x}");
            assert!((env.best_response(x, 0).1 - peak).abs() < 1e-12);
        }
    }

    #[test]
    fn needle_rejects_oversized_nets() {
        let ctx = Arc::new(SimilaritySpace::line(vec![0.0], SpaceKind::Context));
        let arms = Arc::new(SimilaritySpace::line(vec![0.0, 0.5], SpaceKind::Arms));
        assert!(make_needle_instance(ctx, arms, 2, 2, 0.2, None, &mut gen_rng(0)).is_err());
    }

    #[test]
    fn drifting_linear_step_bound() {
        let env = make_drifting_env(3, 0.01, DriftShape::Linear, 2_000, &mut gen_rng(5)).unwrap();
        for arm in 0..3 {
            for t in 0..1_999 {
                let step = (env.mu(0, t + 1, arm) - env.mu(0, t, arm)).abs();
                assert!(step <= 0.01 + 1e-12, "t={t} arm={arm} step={step}");
            }
        }
    }

    #[test]
    fn drifting_sigma_zero_is_time_invariant() {
        let env = make_drifting_env(2, 0.0, DriftShape::Linear, 500, &mut gen_rng(6)).unwrap();
        for arm in 0..2 {
            let v = env.mu(0, 0, arm);
            for t in 0..500 {
                assert_eq!(env.mu(0, t, arm), v);
            }
        }
        let env = make_drifting_env(2, 0.0, DriftShape::Sqrt, 500, &mut gen_rng(7)).unwrap();
        for arm in 0..2 {
            let v = env.mu(0, 0, arm);
            for t in 0..500 {
                assert_eq!(env.mu(0, t, arm), v);
            }
        }
    }

    #[test]
    fn drifting_sqrt_exhaustive_pair_check() {
        let horizon = 1_500;
        let sigma = 0.02;
        let env =
            make_drifting_env(2, sigma, DriftShape::Sqrt, horizon, &mut gen_rng(8)).unwrap();
        for arm in 0..2 {
            for s in 0..horizon {
                for t in (s + 1)..horizon {
                    let bound = (sigma * ((t - s) as f64).sqrt()).min(1.0);
                    let gap = (env.mu(0, t, arm) - env.mu(0, s, arm)).abs();
                    assert!(
                        gap <= bound + 1e-9,
                        "arm={arm} s={s} t={t} gap={gap} bound={bound}"
                    );
                }
            }
        }
    }

    #[test]
    fn sleeping_reduces_to_mab_when_all_awake() {
        let schedule = vec![vec![0, 1, 2]; 10];
        let env = make_sleeping_env(3, &schedule, &[0.2, 0.5, 0.8]).unwrap();
        assert_eq!(env.n_contexts(), 1);
        assert_eq!(env.best_response(0, 0), (2, 0.8));
    }

    #[test]
    fn sleeping_alternating_singletons() {
        let schedule = vec![vec![0], vec![1], vec![0], vec![1]];
        let env = make_sleeping_env(2, &schedule, &[0.3, 0.9]).unwrap();
        assert_eq!(env.n_contexts(), 2);
        for t in 0..4 {
            let ctx = env.arrivals.context_at(t);
            let (arm, _) = env.best_response(ctx, t);
            assert_eq!(arm, t % 2);
        }
    }

    #[test]
    fn sleeping_rejects_empty_awake_set() {
        let schedule = vec![vec![0], vec![]];
        assert!(make_sleeping_env(2, &schedule, &[0.3, 0.9]).is_err());
    }

    #[test]
    fn sleeping_benchmark_matches_per_round_brute_force() {
        let mut rng = gen_rng(11);
        let mu: Vec<f64> = (0..5).map(|_| rng.random_range(0.1..0.9)).collect();
        let schedule: Vec<Vec<usize>> = (0..1_000)
            .map(|_| {
                let mut awake: Vec<usize> = (0..5).filter(|_| rng.random_bool(0.5)).collect();
                if awake.is_empty() {
                    awake.push(rng.random_range(0..5));
                }
                awake
            })
            .collect();
        let env = make_sleeping_env(5, &schedule, &mu).unwrap();
        for (t, awake) in schedule.iter().enumerate() {
            let ctx = env.arrivals.context_at(t);
            let brute = awake
                .iter()
                .map(|&a| mu[a])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((env.best_response(ctx, t).1 - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn generator_round_trip_is_lossless() {
        let spec = GeneratorSpec::Needle {
            context_grid: 17,
            arm_grid: 17,
            n_x: 2,
            n_y: 3,
            r: 0.25,
            assignment: None,
        };
        let env = spec.build(123).unwrap();
        let json = env.to_json().unwrap();
        let back = EnvironmentInstance::from_json(&json).unwrap();
        assert_eq!(env, back);
    }

    #[test]
    fn explicit_round_trip_is_lossless() {
        let env = crate::env::instance_from_table(
            SimilaritySpace::line_grid(3, SpaceKind::Context),
            SimilaritySpace::line_grid(3, SpaceKind::Arms),
            vec![0.5; 9],
            Arrivals::Sequence {
                contexts: vec![0, 2, 1],
            },
        )
        .unwrap();
        let json = env.to_json().unwrap();
        let back = EnvironmentInstance::from_json(&json).unwrap();
        assert_eq!(env, back);
    }

    #[test]
    fn tent_and_peaked_pass_validation() {
        make_tilted_tent(33).unwrap();
        make_peaked_arms(33, 10).unwrap();
        make_random_lipschitz(17, 17, 3, &mut gen_rng(2)).unwrap();
        make_random_taxonomy(31, 3, &mut gen_rng(4)).unwrap();
        make_taxonomy_needle(16, 0.125, &mut gen_rng(5)).unwrap();
    }
}
