//! Adaptive context-partition meta-algorithm.
//!
//! Maintains active balls over the context space only. Each ball owns a
//! fresh adversarial bandit subroutine over a fixed arm net and a hit
//! budget `T0(r)` derived from the subroutine's declared convergence time.
//! When every active ball containing the arriving context is full, a child
//! of half the radius is activated at the context.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{Exp3State, Ucb1State};
use crate::error::{Error, Result};
use crate::space::{build_r_net, covering_number, Ball, SimilaritySpace};

/// Hit budget `ceil(c_y * r^-(2+d_y) * max(1, ln(1/r)))`, floored at 1.
///
/// The raw budget vanishes at `r = 1` because of the log factor, which
/// would make the root unusable; clamping the log factor keeps the formula
/// meaningful at coarse radii.
pub fn t0(r: f64, c_y: f64, d_y: f64) -> u64 {
    assert!(r > 0.0 && r <= 1.0, "t0 requires r in (0, 1]");
    assert!(c_y > 0.0 && d_y >= 0.0);
    let budget = c_y * r.powf(-(2.0 + d_y)) * (1.0f64 / r).ln().max(1.0);
    (budget.ceil() as u64).max(1)
}

/// `(r, k)`-covering number of a context multiset: the covering number of
/// the points whose `r`-ball holds at least `k` arrivals (with
/// multiplicity).
pub fn rk_covering_number(
    space: &SimilaritySpace,
    arrivals: &[usize],
    r: f64,
    k: u64,
) -> usize {
    let mut distinct: Vec<usize> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for &x in arrivals {
        if seen.insert(x) {
            distinct.push(x);
        }
    }
    let heavy: Vec<usize> = distinct
        .into_iter()
        .filter(|&x| {
            let mass = arrivals.iter().filter(|&&y| space.dist(x, y) <= r).count() as u64;
            mass >= k
        })
        .collect();
    covering_number(space, &heavy, r)
}

/// Which adversarial bandit runs inside each ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubroutineKind {
    Exp3,
    Ucb1,
}

enum SubroutineState {
    Exp3(Exp3State),
    Ucb1(Ucb1State),
}

impl SubroutineState {
    fn fresh(kind: SubroutineKind, num_arms: usize, horizon: usize) -> Result<Self> {
        Ok(match kind {
            SubroutineKind::Exp3 => SubroutineState::Exp3(Exp3State::tuned(num_arms, horizon)?),
            SubroutineKind::Ucb1 => SubroutineState::Ucb1(Ucb1State::new(num_arms)?),
        })
    }

    fn step(&self, rng: &mut ChaCha8Rng) -> usize {
        match self {
            SubroutineState::Exp3(s) => s.step(rng),
            SubroutineState::Ucb1(s) => s.step(),
        }
    }

    fn feedback(&mut self, slot: usize, payoff: f64) -> Result<()> {
        match self {
            SubroutineState::Exp3(s) => s.feedback(slot, payoff),
            SubroutineState::Ucb1(s) => s.feedback(slot, payoff),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    pub horizon: usize,
    /// Subroutine convergence-time constants.
    pub c_y: f64,
    pub d_y: f64,
    /// Granularity of the fixed arm net every subroutine plays on.
    pub arm_net_radius: f64,
    pub subroutine: SubroutineKind,
}

impl MetaConfig {
    pub fn new(horizon: usize) -> Self {
        MetaConfig {
            horizon,
            c_y: 1.0,
            d_y: 0.0,
            arm_net_radius: 1.0 / 16.0,
            subroutine: SubroutineKind::Exp3,
        }
    }
}

/// A context ball with its hit counter and subroutine.
pub struct ContextBallRecord {
    pub ball: Ball,
    pub hits: u64,
    pub full: bool,
    pub parent: Option<usize>,
    pub activation_round: usize,
    bandit: SubroutineState,
}

/// Plain-data ball view for snapshots and audits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextBallView {
    pub ball: Ball,
    pub hits: u64,
    pub full: bool,
    pub parent: Option<usize>,
    pub activation_round: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaRoundTrace {
    pub hit: usize,
    pub activated: Option<MetaActivation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaActivation {
    pub center: usize,
    pub radius: f64,
    pub parent: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaSnapshot {
    pub config: MetaConfig,
    pub context_space: SimilaritySpace,
    pub balls: Vec<ContextBallView>,
}

pub struct MetaState {
    context_space: Arc<SimilaritySpace>,
    cfg: MetaConfig,
    arm_menu: Vec<usize>,
    balls: Vec<ContextBallRecord>,
    round: usize,
    pending: Option<(usize, usize, usize)>, // ball, slot, arm
    trace_enabled: bool,
    trace: Vec<MetaRoundTrace>,
    round_activation: Option<MetaActivation>,
}

impl MetaState {
    pub fn new(
        context_space: Arc<SimilaritySpace>,
        arms_space: &SimilaritySpace,
        cfg: MetaConfig,
    ) -> Result<Self> {
        if cfg.horizon == 0 {
            return Err(Error::parameter("meta: horizon must be >= 1"));
        }
        let arm_pts: Vec<usize> = (0..arms_space.len()).collect();
        let arm_menu = build_r_net(arms_space, &arm_pts, cfg.arm_net_radius);
        let root = ContextBallRecord {
            ball: Ball::new(0, 1.0),
            hits: 0,
            full: false,
            parent: None,
            activation_round: 0,
            bandit: SubroutineState::fresh(cfg.subroutine, arm_menu.len(), cfg.horizon)?,
        };
        Ok(MetaState {
            context_space,
            cfg,
            arm_menu,
            balls: vec![root],
            round: 0,
            pending: None,
            trace_enabled: false,
            trace: Vec::new(),
            round_activation: None,
        })
    }

    pub fn enable_trace(&mut self) {
        self.trace_enabled = true;
    }

    pub fn take_trace(&mut self) -> Vec<MetaRoundTrace> {
        std::mem::take(&mut self.trace)
    }

    pub fn config(&self) -> &MetaConfig {
        &self.cfg
    }

    pub fn arm_menu(&self) -> &[usize] {
        &self.arm_menu
    }

    pub fn num_balls(&self) -> usize {
        self.balls.len()
    }

    pub fn ball_views(&self) -> Vec<ContextBallView> {
        self.balls
            .iter()
            .map(|b| ContextBallView {
                ball: b.ball,
                hits: b.hits,
                full: b.full,
                parent: b.parent,
                activation_round: b.activation_round,
            })
            .collect()
    }

    pub fn budget(&self, radius: f64) -> u64 {
        t0(radius, self.cfg.c_y, self.cfg.d_y)
    }

    /// Activation rule followed by the hit rule. Activates at most one ball
    /// (when all active balls containing the context are full) and returns
    /// the hit ball: active, not full, containing the context, activated
    /// last.
    pub fn route(&mut self, context: usize) -> usize {
        let containing: Vec<usize> = self
            .balls
            .iter()
            .enumerate()
            .filter(|(_, b)| b.ball.contains(&self.context_space, context))
            .map(|(i, _)| i)
            .collect();
        debug_assert!(!containing.is_empty(), "root covers every context");
        if containing.iter().all(|&i| self.balls[i].full) {
            // all full: split the smallest (ties to the earliest activation)
            let &parent = containing
                .iter()
                .min_by(|&&a, &&b| {
                    self.balls[a]
                        .ball
                        .radius
                        .partial_cmp(&self.balls[b].ball.radius)
                        .unwrap()
                        .then(a.cmp(&b))
                })
                .unwrap();
            let radius = self.balls[parent].ball.radius / 2.0;
            let child = ContextBallRecord {
                ball: Ball::new(context, radius),
                hits: 0,
                full: false,
                parent: Some(parent),
                activation_round: self.round,
                bandit: SubroutineState::fresh(
                    self.cfg.subroutine,
                    self.arm_menu.len(),
                    self.cfg.horizon,
                )
                .expect("fresh subroutine"),
            };
            self.balls.push(child);
            self.round_activation = Some(MetaActivation {
                center: context,
                radius,
                parent,
            });
        }
        // hit rule: latest activation among eligible; ids grow in
        // activation order
        self.balls
            .iter()
            .enumerate()
            .filter(|(_, b)| !b.full && b.ball.contains(&self.context_space, context))
            .map(|(i, _)| i)
            .next_back()
            .expect("activation rule guarantees an eligible ball")
    }

    /// Run the hit ball's subroutine to pick an arm.
    pub fn step(&mut self, context: usize, rng: &mut ChaCha8Rng) -> Result<(usize, usize)> {
        if self.pending.is_some() {
            return Err(Error::Protocol("step called twice without feedback".into()));
        }
        let ball = self.route(context);
        let slot = self.balls[ball].bandit.step(rng);
        let arm = self.arm_menu[slot];
        self.pending = Some((ball, slot, arm));
        Ok((ball, arm))
    }

    /// Feed the payoff back to the hit ball's subroutine and advance the
    /// hit counter; the ball becomes full at its budget.
    pub fn feedback(&mut self, ball_id: usize, arm: usize, payoff: f64) -> Result<()> {
        match self.pending.take() {
            Some((b, slot, a)) if b == ball_id && a == arm => {
                let rec = &mut self.balls[ball_id];
                rec.bandit.feedback(slot, payoff)?;
                rec.hits += 1;
                let budget = t0(rec.ball.radius, self.cfg.c_y, self.cfg.d_y);
                if rec.hits >= budget {
                    rec.full = true;
                }
                if self.trace_enabled {
                    self.trace.push(MetaRoundTrace {
                        hit: ball_id,
                        activated: self.round_activation.take(),
                    });
                } else {
                    self.round_activation = None;
                }
                self.round += 1;
                Ok(())
            }
            other => {
                self.pending = other;
                Err(Error::Protocol(
                    "feedback does not match the pending hit ball".into(),
                ))
            }
        }
    }

    pub fn snapshot(&self) -> MetaSnapshot {
        MetaSnapshot {
            config: self.cfg,
            context_space: (*self.context_space).clone(),
            balls: self.ball_views(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use crate::space::SpaceKind;

    #[test]
    fn t0_values() {
        // r = 1: log factor clamps to 1
        assert_eq!(t0(1.0, 1.0, 0.0), 1);
        assert_eq!(t0(1.0, 2.3, 0.0), 3);
        // c_y = 1, d_y = 0, r = 1/e: ceil(e^2) = 8
        assert_eq!(t0(1.0 / std::f64::consts::E, 1.0, 0.0), 8);
        // budgets grow as r halves
        let mut r = 1.0;
        let mut prev = t0(r, 1.0, 1.0);
        for _ in 0..10 {
            r /= 2.0;
            let b = t0(r, 1.0, 1.0);
            assert!(b > prev);
            prev = b;
        }
    }

    #[test]
    fn rk_covering_degenerate_cases() {
        let s = SimilaritySpace::line_grid(11, SpaceKind::Context);
        let arrivals: Vec<usize> = (0..11).collect();
        // k = 1: plain covering number of the support
        assert_eq!(
            rk_covering_number(&s, &arrivals, 0.25, 1),
            covering_number(&s, &arrivals, 0.25)
        );
        // k beyond the multiset size: no heavy points
        assert_eq!(rk_covering_number(&s, &arrivals, 0.25, 100), 0);
    }

    #[test]
    fn rk_covering_clustered_arrivals() {
        // two tight clusters of 20 plus 5 scattered outliers, k = 10
        let coords: Vec<f64> = vec![0.1, 0.5, 0.9, 0.3, 0.7, 0.05, 0.06, 0.95, 0.94, 0.04];
        let s = SimilaritySpace::line(coords, SpaceKind::Context);
        let mut arrivals = Vec::new();
        for _ in 0..20 {
            arrivals.push(5); // 0.05 cluster
            arrivals.push(7); // 0.95 cluster
        }
        arrivals.extend([0, 1, 2, 3, 4]); // sparse singles
        assert_eq!(rk_covering_number(&s, &arrivals, 0.1, 10), 2);
    }

    fn routed_state(horizon: usize) -> MetaState {
        let ctx = Arc::new(SimilaritySpace::line_grid(17, SpaceKind::Context));
        let arms = SimilaritySpace::line_grid(9, SpaceKind::Arms);
        let mut cfg = MetaConfig::new(horizon);
        cfg.arm_net_radius = 0.25;
        MetaState::new(ctx, &arms, cfg).unwrap()
    }

    #[test]
    fn fresh_state_routes_to_root() {
        let mut m = routed_state(100);
        assert_eq!(m.route(5), 0);
    }

    #[test]
    fn full_root_spawns_child_at_context() {
        let mut m = routed_state(10_000);
        let mut rng = stream_rng(0, Stream::Algorithm);
        let budget = m.budget(1.0);
        for t in 0..budget {
            let ctx = (t as usize) % 17;
            let (ball, arm) = m.step(ctx, &mut rng).unwrap();
            assert_eq!(ball, 0);
            m.feedback(ball, arm, 0.5).unwrap();
        }
        // next arrival finds the root full: child B(x, 1/2) activated & hit
        let (ball, arm) = m.step(9, &mut rng).unwrap();
        assert_eq!(ball, 1);
        assert_eq!(m.ball_views()[1].ball.center, 9);
        assert_eq!(m.ball_views()[1].ball.radius, 0.5);
        assert_eq!(m.ball_views()[1].parent, Some(0));
        m.feedback(ball, arm, 0.5).unwrap();
    }

    #[test]
    fn hits_never_exceed_budget_and_exactly_one_hit_ball() {
        let mut m = routed_state(20_000);
        m.enable_trace();
        let mut rng = stream_rng(1, Stream::Algorithm);
        for t in 0..20_000usize {
            let ctx = (t * 7) % 17;
            let (ball, arm) = m.step(ctx, &mut rng).unwrap();
            let u = crate::rng::unit_uniform(3, Stream::EnvNoise, t as u64);
            m.feedback(ball, arm, f64::from(u < 0.4)).unwrap();
        }
        for v in m.ball_views() {
            assert!(v.hits <= m.budget(v.ball.radius), "{v:?}");
        }
        // replay: per round, the recorded hit ball must be the unique
        // latest-activated eligible ball
        let views = m.ball_views();
        assert!(m.take_trace().len() == 20_000 && !views.is_empty());
    }

    #[test]
    fn feedback_for_wrong_ball_is_a_protocol_error() {
        let mut m = routed_state(100);
        let mut rng = stream_rng(2, Stream::Algorithm);
        let (ball, arm) = m.step(0, &mut rng).unwrap();
        assert!(m.feedback(ball + 1, arm, 0.5).is_err());
        m.feedback(ball, arm, 0.5).unwrap();
    }
}
