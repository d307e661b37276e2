//! Contextual zooming: adaptive ball partition of the similarity space.
//!
//! The algorithm maintains a growing collection of active balls over the
//! feasible (context, arm) pairs. Each round it plays inside a relevant
//! ball with the maximal index, where the index transfers optimism across
//! balls through the metric; selecting a ball whose confidence radius has
//! shrunk below its radius activates a child of half the radius centered at
//! the played pair. Balls stay active forever; radii are exact powers of
//! two and never fall below a configurable floor.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::Feasibility;
use crate::error::{Error, Result};
use crate::space::{Ball, SimilaritySpace};

/// Confidence radius `4 sqrt(ln(horizon) / (1 + n))`.
pub fn confidence_radius(n: u64, horizon: f64) -> f64 {
    4.0 * (horizon.ln() / (1.0 + n as f64)).sqrt()
}

/// Default floor on ball radii: subdividing past this raises a diagnostics
/// flag instead of activating.
pub const MIN_RADIUS: f64 = 1.0 / ((1 << 20) as f64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoomConfig {
    pub horizon: usize,
    pub min_radius: f64,
}

impl ZoomConfig {
    pub fn new(horizon: usize) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::parameter("zooming: horizon must be >= 2"));
        }
        Ok(ZoomConfig {
            horizon,
            min_radius: MIN_RADIUS,
        })
    }
}

/// A ball plus its mutable statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallRecord {
    pub ball: Ball,
    /// times selected
    pub n: u64,
    pub payoff_sum: f64,
    pub parent: Option<usize>,
    pub activation_round: usize,
}

impl BallRecord {
    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.payoff_sum / self.n as f64
        }
    }
}

/// Child activation record for replay audits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoomActivation {
    pub center: usize,
    pub radius: f64,
    pub parent: usize,
}

/// Per-round trace for replay audits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoomRoundTrace {
    pub selected: usize,
    pub rad_at_selection: f64,
    pub activated: Option<ZoomActivation>,
}

/// Exported state for the `check` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZoomSnapshot {
    pub horizon: usize,
    pub space: SimilaritySpace,
    pub feasible_pairs: Vec<usize>,
    pub balls: Vec<BallRecord>,
    pub min_radius_hit: bool,
}

/// Sequential state of the contextual zooming algorithm over a product
/// similarity space.
pub struct ZoomState {
    context_space: Arc<SimilaritySpace>,
    arms_space: Arc<SimilaritySpace>,
    product: Arc<SimilaritySpace>,
    feasible: Feasibility,
    cfg: ZoomConfig,
    balls: Vec<BallRecord>,
    preindex: Vec<f64>,
    /// ball ids grouped by radius level (radius = 2^-level)
    levels: Vec<Vec<usize>>,
    round: usize,
    pending: Option<(usize, usize, usize)>,
    min_radius_hit: bool,
    trace_enabled: bool,
    trace: Vec<ZoomRoundTrace>,
}

fn level_of(radius: f64) -> usize {
    // radii are exact powers of two starting at 1
    let mut level = 0usize;
    let mut r = 1.0f64;
    while r > radius * 1.5 {
        r /= 2.0;
        level += 1;
    }
    level
}

impl ZoomState {
    pub fn new(
        context_space: Arc<SimilaritySpace>,
        arms_space: Arc<SimilaritySpace>,
        feasible: Feasibility,
        cfg: ZoomConfig,
    ) -> Result<Self> {
        let product = Arc::new(SimilaritySpace::product(
            context_space.clone(),
            arms_space.clone(),
        ));
        // root ball: radius 1 contains the whole truncated space; center is
        // the first feasible pair
        let n_arms = arms_space.len();
        let root_center = (0..context_space.len())
            .find_map(|ctx| {
                feasible
                    .arms_for(ctx, n_arms)
                    .first()
                    .map(|&a| ctx * n_arms + a)
            })
            .ok_or_else(|| Error::parameter("zooming: no feasible pairs"))?;
        let root = BallRecord {
            ball: Ball::new(root_center, 1.0),
            n: 0,
            payoff_sum: 0.0,
            parent: None,
            activation_round: 0,
        };
        let mut state = ZoomState {
            context_space,
            arms_space,
            product,
            feasible,
            cfg,
            balls: Vec::new(),
            preindex: Vec::new(),
            levels: vec![Vec::new()],
            round: 0,
            pending: None,
            min_radius_hit: false,
            trace_enabled: false,
            trace: Vec::new(),
        };
        state.push_ball(root);
        Ok(state)
    }

    pub fn enable_trace(&mut self) {
        self.trace_enabled = true;
    }

    pub fn take_trace(&mut self) -> Vec<ZoomRoundTrace> {
        std::mem::take(&mut self.trace)
    }

    pub fn config(&self) -> &ZoomConfig {
        &self.cfg
    }

    pub fn balls(&self) -> &[BallRecord] {
        &self.balls
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn min_radius_hit(&self) -> bool {
        self.min_radius_hit
    }

    fn push_ball(&mut self, rec: BallRecord) {
        let level = level_of(rec.ball.radius);
        while self.levels.len() <= level {
            self.levels.push(Vec::new());
        }
        let id = self.balls.len();
        self.levels[level].push(id);
        self.preindex.push(Self::preindex_of(&rec, self.cfg.horizon));
        self.balls.push(rec);
    }

    fn preindex_of(rec: &BallRecord, horizon: usize) -> f64 {
        rec.mean() + 2.0 * rec.ball.radius + confidence_radius(rec.n, horizon as f64)
    }

    /// Pre-index `nu + 2 r + rad` of an active ball.
    pub fn preindex(&self, ball_id: usize) -> f64 {
        self.preindex[ball_id]
    }

    /// Index: minimum of `preindex(B') + dist(centers)` over active balls
    /// `B'` with radius at least this ball's (the ball itself included).
    pub fn index(&self, ball_id: usize) -> f64 {
        let rec = &self.balls[ball_id];
        let my_level = level_of(rec.ball.radius);
        let mut best = self.preindex[ball_id];
        for level in self.levels.iter().take(my_level + 1) {
            for &other in level {
                // distance is nonnegative, so only smaller pre-indices help
                if self.preindex[other] < best {
                    let d = self
                        .product
                        .dist(rec.ball.center, self.balls[other].ball.center);
                    best = best.min(self.preindex[other] + d);
                }
            }
        }
        best
    }

    /// Relevant balls for a context: for every feasible arm `y`, the active
    /// balls of minimal radius containing `(context, y)` are the ones whose
    /// domain still contains the pair. Returns `(ball_id, witness_arm)`
    /// pairs with the lowest witness arm per ball.
    fn relevant_balls(&self, context: usize) -> Vec<(usize, usize)> {
        let arms = self.feasible.arms_for(context, self.arms_space.len());
        let mut min_rad = vec![f64::INFINITY; arms.len()];
        let mut owners: Vec<Vec<usize>> = vec![Vec::new(); arms.len()];
        for (id, rec) in self.balls.iter().enumerate() {
            let (cx, cy) = self.product.split_pair(rec.ball.center);
            let dx = self.context_space.dist(cx, context);
            if dx > rec.ball.radius {
                continue;
            }
            for (k, &y) in arms.iter().enumerate() {
                if rec.ball.radius > min_rad[k] {
                    continue;
                }
                let d = (dx + self.arms_space.dist(cy, y)).min(1.0);
                if d <= rec.ball.radius {
                    if rec.ball.radius < min_rad[k] {
                        min_rad[k] = rec.ball.radius;
                        owners[k].clear();
                    }
                    owners[k].push(id);
                }
            }
        }
        let mut out: Vec<(usize, usize)> = Vec::new();
        for (k, ids) in owners.iter().enumerate() {
            for &id in ids {
                match out.iter_mut().find(|(b, _)| *b == id) {
                    Some(_) => {} // keep the first (lowest) witness arm
                    None => out.push((id, arms[k])),
                }
            }
        }
        out
    }

    /// Selection rule: among relevant balls pick the maximal index (ties to
    /// the earliest activation) and the lowest feasible arm in its domain.
    pub fn select(&mut self, context: usize) -> Result<(usize, usize)> {
        if self.pending.is_some() {
            return Err(Error::Protocol("select called twice without update".into()));
        }
        let relevant = self.relevant_balls(context);
        if relevant.is_empty() {
            return Err(Error::Invariant(format!(
                "no relevant ball for context {context}: covering invariant broken"
            )));
        }
        let mut chosen = relevant[0];
        if relevant.len() > 1 {
            let mut best_idx = f64::NEG_INFINITY;
            for &(id, arm) in &relevant {
                let idx = self.index(id);
                // strict improvement only: ties stay with the earliest
                // activation because ids increase in activation order
                if idx > best_idx {
                    best_idx = idx;
                    chosen = (id, arm);
                }
            }
        }
        self.pending = Some((chosen.0, context, chosen.1));
        Ok(chosen)
    }

    /// Update rule: record the payoff on the selected ball and, when the
    /// ball was full at selection time (`rad <= r`), activate a child of
    /// half the radius centered at the played pair.
    pub fn update(
        &mut self,
        ball_id: usize,
        context: usize,
        arm: usize,
        payoff: f64,
    ) -> Result<()> {
        if !(0.0..=1.0).contains(&payoff) {
            return Err(Error::Input(format!("payoff {payoff} outside [0,1]")));
        }
        match self.pending.take() {
            Some(p) if p == (ball_id, context, arm) => {}
            other => {
                self.pending = other;
                return Err(Error::Protocol(
                    "update does not match the pending selection".into(),
                ));
            }
        }
        let rad_at_selection = confidence_radius(self.balls[ball_id].n, self.cfg.horizon as f64);
        {
            let rec = &mut self.balls[ball_id];
            rec.n += 1;
            rec.payoff_sum += payoff;
        }
        self.preindex[ball_id] = Self::preindex_of(&self.balls[ball_id], self.cfg.horizon);

        let parent_radius = self.balls[ball_id].ball.radius;
        let mut activated = None;
        if rad_at_selection <= parent_radius {
            let child_radius = parent_radius / 2.0;
            if child_radius < self.cfg.min_radius {
                self.min_radius_hit = true;
            } else {
                let center = self.product.pair_index(context, arm);
                debug_assert!(
                    self.levels
                        .get(level_of(child_radius))
                        .map(|lvl| lvl
                            .iter()
                            .all(|&b| self.product.dist(self.balls[b].ball.center, center)
                                > child_radius))
                        .unwrap_or(true),
                    "separation invariant would break"
                );
                self.push_ball(BallRecord {
                    ball: Ball::new(center, child_radius),
                    n: 0,
                    payoff_sum: 0.0,
                    parent: Some(ball_id),
                    activation_round: self.round,
                });
                activated = Some(ZoomActivation {
                    center,
                    radius: child_radius,
                    parent: ball_id,
                });
            }
        }
        if self.trace_enabled {
            self.trace.push(ZoomRoundTrace {
                selected: ball_id,
                rad_at_selection,
                activated,
            });
        }
        self.round += 1;
        Ok(())
    }

    pub fn snapshot(&self, feasible_pairs: Vec<usize>) -> ZoomSnapshot {
        ZoomSnapshot {
            horizon: self.cfg.horizon,
            space: (*self.product).clone(),
            feasible_pairs,
            balls: self.balls.clone(),
            min_radius_hit: self.min_radius_hit,
        }
    }

    pub fn product_space(&self) -> &Arc<SimilaritySpace> {
        &self.product
    }

    pub fn feasibility(&self) -> &Feasibility {
        &self.feasible
    }
}
