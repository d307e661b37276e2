// rotating-leader drifting variant
use ctxzoom_core::env::*;
use ctxzoom_core::harness::{run_experiment, AlgorithmSpec};
use ctxzoom_core::rng::{stream_rng, Stream};
use ctxzoom_core::space::{DriftShape, SimilaritySpace, SpaceKind};
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use std::collections::VecDeque;
use std::sync::Arc;

struct Envl { sigma: f64, window: usize, upper: VecDeque<(usize, f64)>, lower: VecDeque<(usize, f64)> }
impl Envl {
    fn new(sigma: f64) -> Self {
        let window = (1.0 / (sigma * sigma)).ceil() as usize + 1;
        Envl { sigma, window, upper: VecDeque::new(), lower: VecDeque::new() }
    }
    fn bounds(&mut self, t: usize) -> (f64, f64) {
        while self.upper.front().is_some_and(|&(s, _)| t - s > self.window) { self.upper.pop_front(); }
        while self.lower.front().is_some_and(|&(s, _)| t - s > self.window) { self.lower.pop_front(); }
        let mut hi = 1.0f64;
        for &(s, v) in &self.upper { hi = hi.min(v + self.sigma * ((t - s) as f64).sqrt()); }
        let mut lo = 0.0f64;
        for &(s, v) in &self.lower { lo = lo.max(v - self.sigma * ((t - s) as f64).sqrt()); }
        (lo, hi)
    }
    fn push(&mut self, t: usize, v: f64) {
        while self.upper.back().is_some_and(|&(_, u)| u >= v) { self.upper.pop_back(); }
        self.upper.push_back((t, v));
        while self.lower.back().is_some_and(|&(_, u)| u <= v) { self.lower.pop_back(); }
        self.lower.push_back((t, v));
    }
}

fn make_rotating(k: usize, sigma: f64, horizon: usize, period: usize, pull: f64, rng: &mut ChaCha8Rng) -> EnvironmentInstance {
    let mut mu = vec![0.0f64; horizon * k];
    for arm in 0..k {
        let mut envl = Envl::new(sigma);
        let mut v: f64 = 0.5;
        for t in 0..horizon {
            if t > 0 {
                let leader = (t / period) % k;
                let target = if leader == arm { 0.9 } else { 0.15 };
                let g: f64 = {
                    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
                    let u2: f64 = rng.random_range(0.0..1.0);
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                };
                let step = (g * sigma * 0.5 + pull * (target - v)).clamp(-sigma, sigma);
                let (lo, hi) = envl.bounds(t);
                v = (v + step).clamp(lo.max(0.0), hi.min(1.0));
            }
            envl.push(t, v);
            mu[t * k + arm] = v;
        }
    }
    EnvironmentInstance::new(
        Arc::new(SimilaritySpace::drift(horizon, sigma, DriftShape::Sqrt)),
        Arc::new(SimilaritySpace::discrete(k, 1.0, SpaceKind::Arms)),
        Feasibility::All,
        PayoffModel::Static { mu },
        Arrivals::Sequential,
        NoiseModel::Bernoulli,
    )
    .unwrap()
}

fn median(mut v: Vec<f64>) -> f64 { v.sort_by(|a, b| a.partial_cmp(b).unwrap()); v[v.len() / 2] }

fn main() {
    for (period, pull) in [(10_000usize, 0.01f64), (10_000, 0.05), (5_000, 0.05), (12_500, 0.02)] {
        let mut z = Vec::new();
        let mut u = Vec::new();
        for seed in 0..6u64 {
            let mut rng = stream_rng(900 + seed, Stream::InstanceGen);
            let env = Arc::new(make_rotating(5, 0.01, 50_000, period, pull, &mut rng));
            z.push(run_experiment(&env, &AlgorithmSpec::Zooming, 50_000, seed, false).unwrap().average_regret());
            u.push(run_experiment(&env, &AlgorithmSpec::Ucb1, 50_000, seed, false).unwrap().average_regret());
        }
        println!(
            "period={period} pull={pull}: zoom={:.4} ucb={:.4} ratio={:.3}",
            median(z.clone()), median(u.clone()), median(z) / median(u)
        );
    }
}
