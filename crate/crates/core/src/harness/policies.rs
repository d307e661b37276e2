//! Policy adapters wiring the algorithm state machines to the runner.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::baselines::{Exp3State, OraclePolicy, Ucb1State, UniformPolicy};
use crate::env::{EnvironmentInstance, Feasibility};
use crate::error::{Error, Result};
use crate::harness::{AlgoTrace, AlgorithmSpec, Policy, PolicySnapshot};
use crate::meta::{MetaConfig, MetaState};
use crate::taxonomy::{TaxConfig, TaxonomyPolicy};
use crate::zooming::{ZoomConfig, ZoomState};

/// Build a policy for one run. The horizon is clamped to at least 2 for
/// log-based confidence radii.
pub fn build_policy(
    spec: &AlgorithmSpec,
    env: &Arc<EnvironmentInstance>,
    horizon: usize,
) -> Result<Box<dyn Policy>> {
    let h2 = horizon.max(2);
    Ok(match spec {
        AlgorithmSpec::Zooming => {
            let state = ZoomState::new(
                env.context_space.clone(),
                env.arms_space.clone(),
                env.feasible.clone(),
                ZoomConfig::new(h2)?,
            )?;
            Box::new(ZoomingAdapter {
                state,
                feasible_pairs: env.feasible_pair_points(),
                last: None,
            })
        }
        AlgorithmSpec::Uniform => {
            if !matches!(env.feasible, Feasibility::All) {
                return Err(Error::config(
                    "the uniform algorithm requires all pairs feasible",
                ));
            }
            Box::new(UniformAdapter {
                inner: UniformPolicy::new(&env.context_space, &env.arms_space, horizon.max(1))?,
            })
        }
        AlgorithmSpec::Exp3 => {
            require_all_feasible(env, "exp3")?;
            Box::new(Exp3Adapter {
                inner: Exp3State::tuned(env.n_arms(), horizon.max(1))?,
            })
        }
        AlgorithmSpec::Ucb1 => {
            require_all_feasible(env, "ucb1")?;
            Box::new(Ucb1Adapter {
                inner: Ucb1State::new(env.n_arms())?,
            })
        }
        AlgorithmSpec::Oracle => Box::new(OracleAdapter {
            inner: OraclePolicy::new(env.clone()),
        }),
        AlgorithmSpec::Meta {
            c_y,
            d_y,
            arm_net_radius,
            subroutine,
        } => {
            let cfg = MetaConfig {
                horizon: horizon.max(1),
                c_y: *c_y,
                d_y: *d_y,
                arm_net_radius: *arm_net_radius,
                subroutine: *subroutine,
            };
            require_all_feasible(env, "meta")?;
            Box::new(MetaAdapter {
                state: MetaState::new(env.context_space.clone(), &env.arms_space, cfg)?,
                last: None,
            })
        }
        AlgorithmSpec::Taxonomy { q_hat } => {
            let tree = env.taxonomy.clone().ok_or_else(|| {
                Error::config("taxonomy algorithm requires an instance with a taxonomy")
            })?;
            if env.n_contexts() != 1 {
                return Err(Error::config("taxonomy algorithm is context-free"));
            }
            Box::new(TaxonomyAdapter {
                inner: TaxonomyPolicy::new(tree, TaxConfig::new(h2, *q_hat)?),
                last: None,
            })
        }
        AlgorithmSpec::TaxonomyPhased => {
            let env2 = env.clone();
            DoublingPolicy::build(horizon, move |phase, phase_len| {
                let q_hat = 1.0 / phase as f64;
                build_policy(&AlgorithmSpec::Taxonomy { q_hat }, &env2, phase_len)
            })?
        }
        AlgorithmSpec::Doubling { inner } => {
            let env2 = env.clone();
            let inner = (**inner).clone();
            DoublingPolicy::build(horizon, move |_phase, phase_len| {
                build_policy(&inner, &env2, phase_len)
            })?
        }
    })
}

fn require_all_feasible(env: &EnvironmentInstance, what: &str) -> Result<()> {
    match env.feasible {
        Feasibility::All => Ok(()),
        _ => Err(Error::config(format!(
            "{what} plays a fixed arm menu and requires all pairs feasible"
        ))),
    }
}

struct ZoomingAdapter {
    state: ZoomState,
    feasible_pairs: Vec<usize>,
    last: Option<(usize, usize, usize)>,
}

impl Policy for ZoomingAdapter {
    fn choose(&mut self, _round: usize, context: usize, _rng: &mut ChaCha8Rng) -> Result<usize> {
        let (ball, arm) = self.state.select(context)?;
        self.last = Some((ball, context, arm));
        Ok(arm)
    }

    fn feedback(
        &mut self,
        _round: usize,
        context: usize,
        arm: usize,
        payoff: f64,
        _rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let Some((ball, c, a)) = self.last.take() else {
            return Err(Error::Protocol("feedback without a choice".into()));
        };
        if c != context || a != arm {
            return Err(Error::Protocol("feedback pair mismatch".into()));
        }
        self.state.update(ball, context, arm, payoff)
    }

    fn structure_size(&self) -> usize {
        self.state.balls().len()
    }

    fn set_trace(&mut self, enabled: bool) {
        if enabled {
            self.state.enable_trace();
        }
    }

    fn take_trace(&mut self) -> AlgoTrace {
        AlgoTrace::Zooming(self.state.take_trace())
    }

    fn snapshot(&self) -> Option<PolicySnapshot> {
        Some(PolicySnapshot::Zooming(
            self.state.snapshot(self.feasible_pairs.clone()),
        ))
    }
}

struct UniformAdapter {
    inner: UniformPolicy,
}

impl Policy for UniformAdapter {
    fn choose(&mut self, _round: usize, context: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
        self.inner.choose(context, rng)
    }

    fn feedback(
        &mut self,
        _round: usize,
        _context: usize,
        arm: usize,
        payoff: f64,
        _rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        self.inner.feedback(arm, payoff)
    }

    fn structure_size(&self) -> usize {
        self.inner.num_cells()
    }
}

struct Exp3Adapter {
    inner: Exp3State,
}

impl Policy for Exp3Adapter {
    fn choose(&mut self, _round: usize, _context: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
        Ok(self.inner.step(rng))
    }

    fn feedback(
        &mut self,
        _round: usize,
        _context: usize,
        arm: usize,
        payoff: f64,
        _rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        self.inner.feedback(arm, payoff)
    }
}

struct Ucb1Adapter {
    inner: Ucb1State,
}

impl Policy for Ucb1Adapter {
    fn choose(&mut self, _round: usize, _context: usize, _rng: &mut ChaCha8Rng) -> Result<usize> {
        Ok(self.inner.step())
    }

    fn feedback(
        &mut self,
        _round: usize,
        _context: usize,
        arm: usize,
        payoff: f64,
        _rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        self.inner.feedback(arm, payoff)
    }
}

struct OracleAdapter {
    inner: OraclePolicy,
}

impl Policy for OracleAdapter {
    fn choose(&mut self, round: usize, context: usize, _rng: &mut ChaCha8Rng) -> Result<usize> {
        Ok(self.inner.choose(round, context))
    }

    fn feedback(
        &mut self,
        _round: usize,
        _context: usize,
        _arm: usize,
        _payoff: f64,
        _rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        Ok(())
    }
}

struct MetaAdapter {
    state: MetaState,
    last: Option<(usize, usize)>,
}

impl Policy for MetaAdapter {
    fn choose(&mut self, _round: usize, context: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
        let (ball, arm) = self.state.step(context, rng)?;
        self.last = Some((ball, arm));
        Ok(arm)
    }

    fn feedback(
        &mut self,
        _round: usize,
        _context: usize,
        arm: usize,
        payoff: f64,
        _rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let Some((ball, a)) = self.last.take() else {
            return Err(Error::Protocol("feedback without a choice".into()));
        };
        if a != arm {
            return Err(Error::Protocol("feedback arm mismatch".into()));
        }
        self.state.feedback(ball, arm, payoff)
    }

    fn structure_size(&self) -> usize {
        self.state.num_balls()
    }

    fn set_trace(&mut self, enabled: bool) {
        if enabled {
            self.state.enable_trace();
        }
    }

    fn take_trace(&mut self) -> AlgoTrace {
        AlgoTrace::Meta(self.state.take_trace())
    }

    fn snapshot(&self) -> Option<PolicySnapshot> {
        Some(PolicySnapshot::Meta(self.state.snapshot()))
    }
}

struct TaxonomyAdapter {
    inner: TaxonomyPolicy,
    last: Option<(usize, usize)>,
}

impl Policy for TaxonomyAdapter {
    fn choose(&mut self, _round: usize, _context: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
        let (node, leaf) = self.inner.step(rng)?;
        self.last = Some((node, leaf));
        Ok(self
            .inner
            .tree()
            .arm_of_leaf(leaf)
            .expect("descent ends at a leaf"))
    }

    fn feedback(
        &mut self,
        _round: usize,
        _context: usize,
        arm: usize,
        payoff: f64,
        _rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let Some((node, leaf)) = self.last.take() else {
            return Err(Error::Protocol("feedback without a choice".into()));
        };
        if self.inner.tree().leaf_of_arm(arm) != leaf {
            return Err(Error::Protocol("feedback arm mismatch".into()));
        }
        self.inner.feedback(node, leaf, payoff)
    }

    fn structure_size(&self) -> usize {
        self.inner.structure_size()
    }

    fn set_trace(&mut self, enabled: bool) {
        if enabled {
            self.inner.enable_trace();
        }
    }

    fn take_trace(&mut self) -> AlgoTrace {
        AlgoTrace::Taxonomy(self.inner.take_trace())
    }
}

type PhaseFactory = Box<dyn Fn(usize, usize) -> Result<Box<dyn Policy>> + Send>;

/// Doubling-trick wrapper: phase `i` runs a fresh inner instance built for
/// `2^i` rounds; the final phase is truncated to the remaining rounds but
/// its instance keeps the nominal phase horizon.
pub struct DoublingPolicy {
    factory: PhaseFactory,
    inner: Box<dyn Policy>,
    phase: usize,
    rounds_in_phase: usize,
    phase_len: usize,
    phase_log: Vec<usize>,
    trace_enabled: bool,
}

impl DoublingPolicy {
    pub fn build<F>(_horizon: usize, factory: F) -> Result<Box<dyn Policy>>
    where
        F: Fn(usize, usize) -> Result<Box<dyn Policy>> + Send + 'static,
    {
        let inner = factory(1, 2)?;
        Ok(Box::new(DoublingPolicy {
            factory: Box::new(factory),
            inner,
            phase: 1,
            rounds_in_phase: 0,
            phase_len: 2,
            phase_log: Vec::new(),
            trace_enabled: false,
        }))
    }
}

impl Policy for DoublingPolicy {
    fn choose(&mut self, round: usize, context: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
        if self.rounds_in_phase == self.phase_len {
            self.phase += 1;
            self.phase_len = 1usize << self.phase;
            self.rounds_in_phase = 0;
            self.inner = (self.factory)(self.phase, self.phase_len)?;
            if self.trace_enabled {
                self.inner.set_trace(true);
            }
        }
        self.phase_log.push(self.phase);
        self.inner.choose(round, context, rng)
    }

    fn feedback(
        &mut self,
        round: usize,
        context: usize,
        arm: usize,
        payoff: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        self.rounds_in_phase += 1;
        self.inner.feedback(round, context, arm, payoff, rng)
    }

    fn structure_size(&self) -> usize {
        self.inner.structure_size()
    }

    fn set_trace(&mut self, enabled: bool) {
        self.trace_enabled = enabled;
        self.inner.set_trace(enabled);
    }

    fn take_trace(&mut self) -> AlgoTrace {
        // only the final phase's trace is retained
        self.inner.take_trace()
    }

    fn phases(&self) -> Option<Vec<usize>> {
        Some(self.phase_log.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::generators::make_tilted_tent;
    use crate::harness::run_experiment;

    #[test]
    fn doubling_phase_lengths_truncate() {
        let env = Arc::new(make_tilted_tent(9).unwrap());
        let log = run_experiment(
            &env,
            &AlgorithmSpec::Doubling {
                inner: Box::new(AlgorithmSpec::Exp3),
            },
            7,
            0,
            false,
        )
        .unwrap();
        let phases = log.phases.expect("doubling annotates phases");
        assert_eq!(phases, vec![1, 1, 2, 2, 2, 2, 3]);
    }

    #[test]
    fn doubling_first_phase_matches_fixed_horizon_two() {
        let env = Arc::new(make_tilted_tent(9).unwrap());
        let wrapped = run_experiment(
            &env,
            &AlgorithmSpec::Doubling {
                inner: Box::new(AlgorithmSpec::Zooming),
            },
            2,
            11,
            false,
        )
        .unwrap();
        let fixed = run_experiment(&env, &AlgorithmSpec::Zooming, 2, 11, false).unwrap();
        assert_eq!(wrapped.rows, fixed.rows);
    }

    #[test]
    fn taxonomy_requires_taxonomy_instance() {
        let env = Arc::new(make_tilted_tent(9).unwrap());
        assert!(build_policy(&AlgorithmSpec::Taxonomy { q_hat: 0.5 }, &env, 100).is_err());
    }
}
