//! Reference algorithms: EXP3, UCB1 and the fixed-net uniform algorithm.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::space::{build_r_net, SimilaritySpace};

/// Multiplicative-weights adversarial bandit.
#[derive(Debug, Clone)]
pub struct Exp3State {
    weights: Vec<f64>,
    gamma: f64,
    plays: u64,
}

impl Exp3State {
    pub fn new(num_arms: usize, gamma: f64) -> Result<Self> {
        if num_arms == 0 {
            return Err(Error::parameter("exp3: need at least one arm"));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::parameter("exp3: gamma must lie in [0, 1]"));
        }
        Ok(Exp3State {
            weights: vec![1.0; num_arms],
            gamma,
            plays: 0,
        })
    }

    /// Standard horizon tuning `gamma = min(1, sqrt(k ln k / ((e-1) T)))`.
    pub fn tuned(num_arms: usize, horizon: usize) -> Result<Self> {
        let k = num_arms as f64;
        let gamma = if num_arms <= 1 {
            0.0
        } else {
            (k * k.ln() / ((std::f64::consts::E - 1.0) * horizon.max(1) as f64))
                .sqrt()
                .min(1.0)
        };
        Exp3State::new(num_arms, gamma)
    }

    pub fn num_arms(&self) -> usize {
        self.weights.len()
    }

    pub fn plays(&self) -> u64 {
        self.plays
    }

    /// Sampling distribution `(1 - gamma) w_i / W + gamma / k`.
    pub fn probabilities(&self) -> Vec<f64> {
        let k = self.weights.len() as f64;
        let total: f64 = self.weights.iter().sum();
        self.weights
            .iter()
            .map(|w| (1.0 - self.gamma) * w / total + self.gamma / k)
            .collect()
    }

    pub fn step(&self, rng: &mut ChaCha8Rng) -> usize {
        let probs = self.probabilities();
        let u: f64 = rng.random();
        let mut cdf = 0.0;
        for (i, p) in probs.iter().enumerate() {
            cdf += p;
            if u < cdf {
                return i;
            }
        }
        probs.len() - 1
    }

    /// Importance-weighted update for the played arm.
    pub fn feedback(&mut self, arm: usize, payoff: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&payoff) {
            return Err(Error::Input(format!("payoff {payoff} outside [0,1]")));
        }
        if arm >= self.weights.len() {
            return Err(Error::Input(format!("arm {arm} out of range")));
        }
        let p = self.probabilities()[arm];
        let estimate = payoff / p;
        let k = self.weights.len() as f64;
        self.weights[arm] *= (self.gamma * estimate / k).exp();
        // keep weights in floating range
        let max = self.weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max > 1e150 {
            for w in &mut self.weights {
                *w /= max;
            }
        }
        self.plays += 1;
        Ok(())
    }
}

/// Stochastic optimism baseline.
#[derive(Debug, Clone)]
pub struct Ucb1State {
    counts: Vec<u64>,
    sums: Vec<f64>,
    total: u64,
}

impl Ucb1State {
    pub fn new(num_arms: usize) -> Result<Self> {
        if num_arms == 0 {
            return Err(Error::parameter("ucb1: need at least one arm"));
        }
        Ok(Ucb1State {
            counts: vec![0; num_arms],
            sums: vec![0.0; num_arms],
            total: 0,
        })
    }

    /// Untried arms first (lowest index); otherwise argmax of
    /// `mean + sqrt(2 ln t / n)`.
    pub fn step(&self) -> usize {
        if let Some(i) = self.counts.iter().position(|&c| c == 0) {
            return i;
        }
        let t = self.total.max(1) as f64;
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..self.counts.len() {
            let n = self.counts[i] as f64;
            let score = self.sums[i] / n + (2.0 * t.ln() / n).sqrt();
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        best
    }

    pub fn feedback(&mut self, arm: usize, payoff: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&payoff) {
            return Err(Error::Input(format!("payoff {payoff} outside [0,1]")));
        }
        if arm >= self.counts.len() {
            return Err(Error::Input(format!("arm {arm} out of range")));
        }
        self.counts[arm] += 1;
        self.sums[arm] += payoff;
        self.total += 1;
        Ok(())
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

/// The uniform algorithm: fixed `r*`-nets of the context and arm spaces
/// with one horizon-tuned EXP3 instance per context cell. The granularity
/// `r* = T^(-1/(2 + d_X + d_Y))` comes from the declared covering
/// dimensions.
pub struct UniformPolicy {
    arm_menu: Vec<usize>,
    /// context -> cell slot
    assignment: Vec<usize>,
    cells: Vec<Exp3State>,
    r_star: f64,
    context_net: Vec<usize>,
    pending: Option<(usize, usize)>,
}

impl UniformPolicy {
    pub fn new(
        context_space: &Arc<SimilaritySpace>,
        arms_space: &Arc<SimilaritySpace>,
        horizon: usize,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::parameter("uniform: horizon must be >= 1"));
        }
        let d = context_space.covering_dim + arms_space.covering_dim;
        let r_star = (horizon as f64).powf(-1.0 / (2.0 + d)).min(1.0);
        let ctx_pts: Vec<usize> = (0..context_space.len()).collect();
        let arm_pts: Vec<usize> = (0..arms_space.len()).collect();
        let context_net = build_r_net(context_space, &ctx_pts, r_star);
        let arm_menu = build_r_net(arms_space, &arm_pts, r_star);
        let cell_horizon = horizon.div_ceil(context_net.len());
        let cells: Vec<Exp3State> = (0..context_net.len())
            .map(|_| Exp3State::tuned(arm_menu.len(), cell_horizon))
            .collect::<Result<_>>()?;
        // route every context to its nearest net point (ties to the first)
        let assignment: Vec<usize> = ctx_pts
            .iter()
            .map(|&x| {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (slot, &c) in context_net.iter().enumerate() {
                    let d = context_space.dist(x, c);
                    if d < best_d {
                        best_d = d;
                        best = slot;
                    }
                }
                best
            })
            .collect();
        Ok(UniformPolicy {
            arm_menu,
            assignment,
            cells,
            r_star,
            context_net,
            pending: None,
        })
    }

    pub fn r_star(&self) -> f64 {
        self.r_star
    }

    pub fn context_net(&self) -> &[usize] {
        &self.context_net
    }

    pub fn arm_menu(&self) -> &[usize] {
        &self.arm_menu
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn choose(&mut self, context: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
        if self.pending.is_some() {
            return Err(Error::Protocol("choose called twice without feedback".into()));
        }
        let cell = self.assignment[context];
        let slot = self.cells[cell].step(rng);
        self.pending = Some((cell, slot));
        Ok(self.arm_menu[slot])
    }

    pub fn feedback(&mut self, arm: usize, payoff: f64) -> Result<()> {
        let Some((cell, slot)) = self.pending.take() else {
            return Err(Error::Protocol("feedback without a pending choice".into()));
        };
        if self.arm_menu[slot] != arm {
            return Err(Error::Protocol("feedback arm mismatch".into()));
        }
        self.cells[cell].feedback(slot, payoff)
    }
}

/// Cheating baseline: plays the exact best response every round.
pub struct OraclePolicy {
    env: Arc<crate::env::EnvironmentInstance>,
}

impl OraclePolicy {
    pub fn new(env: Arc<crate::env::EnvironmentInstance>) -> Self {
        OraclePolicy { env }
    }

    pub fn choose(&self, round: usize, context: usize) -> usize {
        self.env.best_response(context, round).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use crate::space::SpaceKind;

    #[test]
    fn exp3_single_arm_always_zero() {
        let mut rng = stream_rng(0, Stream::Algorithm);
        let mut s = Exp3State::tuned(1, 1000).unwrap();
        for _ in 0..100 {
            let a = s.step(&mut rng);
            assert_eq!(a, 0);
            s.feedback(a, 1.0).unwrap();
        }
    }

    #[test]
    fn exp3_gamma_one_samples_uniformly() {
        let mut s = Exp3State::new(4, 1.0).unwrap();
        // skew the weights hard; probabilities must stay uniform
        s.weights = vec![1.0, 100.0, 1e6, 1e-6];
        for p in s.probabilities() {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn exp3_probabilities_form_floored_simplex() {
        let mut rng = stream_rng(1, Stream::Algorithm);
        let mut s = Exp3State::tuned(5, 2_000).unwrap();
        let floor = s.gamma / 5.0;
        for t in 0..2_000 {
            let probs = s.probabilities();
            let sum: f64 = probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "round {t}");
            for &p in &probs {
                assert!(p >= floor - 1e-12 && p.is_finite());
            }
            let a = s.step(&mut rng);
            let payoff = f64::from(u8::from(a == 2));
            s.feedback(a, payoff).unwrap();
        }
    }

    #[test]
    fn exp3_regret_within_standard_bound() {
        // adversarial 0/1 sequence: arm 1 pays on a fixed aperiodic pattern,
        // arm 0 pays the complement 30% of the time
        let t_max = 10_000usize;
        let k = 2.0f64;
        let bound = 2.7 * (k * t_max as f64 * k.ln()).sqrt();
        let payoff = |t: usize, arm: usize| -> f64 {
            let arm1 = (t * 2654435761) % 97 < 68; // ~70% pay rate
            match (arm, arm1) {
                (1, true) => 1.0,
                (0, false) => 1.0,
                _ => 0.0,
            }
        };
        let mut worst: f64 = f64::NEG_INFINITY;
        for seed in 0..5 {
            let mut rng = stream_rng(seed, Stream::Algorithm);
            let mut s = Exp3State::tuned(2, t_max).unwrap();
            let mut algo_total = 0.0;
            let mut best_fixed = [0.0f64, 0.0];
            for t in 0..t_max {
                let a = s.step(&mut rng);
                let x = payoff(t, a);
                algo_total += x;
                best_fixed[0] += payoff(t, 0);
                best_fixed[1] += payoff(t, 1);
                s.feedback(a, x).unwrap();
            }
            let regret = best_fixed[0].max(best_fixed[1]) - algo_total;
            worst = worst.max(regret);
        }
        assert!(worst <= bound, "worst regret {worst} exceeds bound {bound}");
    }

    #[test]
    fn ucb1_untried_first_and_single_arm() {
        let s = Ucb1State::new(3).unwrap();
        assert_eq!(s.step(), 0);
        let mut s = Ucb1State::new(1).unwrap();
        for _ in 0..10 {
            let a = s.step();
            assert_eq!(a, 0);
            s.feedback(a, 0.3).unwrap();
        }
    }

    #[test]
    fn ucb1_suboptimal_pulls_bounded() {
        // mu = {0.9, 0.1}: median suboptimal pulls over 20 seeds <= 200
        let mut pulls: Vec<u64> = Vec::new();
        for seed in 0..20u64 {
            let mut s = Ucb1State::new(2).unwrap();
            for t in 0..10_000usize {
                let a = s.step();
                let mu = if a == 0 { 0.9 } else { 0.1 };
                let u = crate::rng::unit_uniform(seed, Stream::EnvNoise, t as u64);
                s.feedback(a, f64::from(u < mu)).unwrap();
            }
            pulls.push(s.counts()[1]);
        }
        pulls.sort_unstable();
        let median = pulls[10];
        assert!(median <= 200, "median suboptimal pulls {median}");
    }

    #[test]
    fn uniform_single_context_reduces_to_exp3_menu() {
        let ctx = Arc::new(SimilaritySpace::line_grid(1, SpaceKind::Context));
        let arms = Arc::new(SimilaritySpace::line_grid(17, SpaceKind::Arms));
        let p = UniformPolicy::new(&ctx, &arms, 10_000).unwrap();
        assert_eq!(p.num_cells(), 1);
        assert!(!p.arm_menu().is_empty());
    }

    #[test]
    fn uniform_routes_within_r_star() {
        let ctx = Arc::new(SimilaritySpace::line_grid(65, SpaceKind::Context));
        let arms = Arc::new(SimilaritySpace::line_grid(65, SpaceKind::Arms));
        let p = UniformPolicy::new(&ctx, &arms, 10_000).unwrap();
        for x in 0..65 {
            let cell = p.assignment[x];
            let net_point = p.context_net()[cell];
            assert!(ctx.dist(x, net_point) <= p.r_star() + 1e-12);
        }
    }

    #[test]
    fn uniform_feedback_protocol() {
        let ctx = Arc::new(SimilaritySpace::line_grid(5, SpaceKind::Context));
        let arms = Arc::new(SimilaritySpace::line_grid(5, SpaceKind::Arms));
        let mut p = UniformPolicy::new(&ctx, &arms, 100).unwrap();
        let mut rng = stream_rng(2, Stream::Algorithm);
        let arm = p.choose(3, &mut rng).unwrap();
        assert!(p.feedback(arm, 0.5).is_ok());
        assert!(p.feedback(arm, 0.5).is_err());
    }
}
