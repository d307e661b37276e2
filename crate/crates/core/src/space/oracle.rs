//! Near-optimal-set covering oracle.
//!
//! For a radius `r`, the oracle restricts the feasible pairs to those whose
//! badness `mu*(x) - mu(x, y)` stays within a threshold, then covers the
//! restriction with diameter-`r` sets. The zooming number uses the
//! threshold `12 r`.

use crate::env::EnvironmentInstance;
use crate::error::{Error, Result};
use crate::space::cover::covering_number;

/// Covering number of `{(x, y) feasible : mu*(x) - mu(x, y) <= threshold}`
/// at radius `r`. Requires exact time-invariant expected payoffs.
pub fn near_optimal_covering_number(
    env: &EnvironmentInstance,
    threshold: f64,
    r: f64,
) -> Result<usize> {
    if !env.payoffs.is_static() {
        return Err(Error::Unsupported(
            "near-optimal covering needs exact time-invariant payoffs".into(),
        ));
    }
    if r <= 0.0 {
        return Err(Error::parameter("covering radius must be positive"));
    }
    let n_arms = env.n_arms();
    let mut mu_star = vec![f64::NEG_INFINITY; env.n_contexts()];
    for ctx in 0..env.n_contexts() {
        if !env.feasible_arms(ctx).is_empty() {
            mu_star[ctx] = env.best_response(ctx, 0).1;
        }
    }
    let near: Vec<usize> = env
        .feasible_pair_points()
        .into_iter()
        .filter(|&p| {
            let (ctx, arm) = (p / n_arms, p % n_arms);
            mu_star[ctx] - env.mu(0, ctx, arm) <= threshold + 1e-12
        })
        .collect();
    Ok(covering_number(env.product_space(), &near, r))
}

/// The `r`-zooming number: covering number at radius `r` of the pairs with
/// badness at most `12 r`.
pub fn zooming_number(env: &EnvironmentInstance, r: f64) -> Result<usize> {
    near_optimal_covering_number(env, 12.0 * r, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{instance_from_table, Arrivals};
    use crate::space::{covering_number, SimilaritySpace, SpaceKind};

    #[test]
    fn constant_mu_zooming_equals_full_covering() {
        let env = instance_from_table(
            SimilaritySpace::line_grid(9, SpaceKind::Context),
            SimilaritySpace::line_grid(9, SpaceKind::Arms),
            vec![0.5; 81],
            Arrivals::Sequential,
        )
        .unwrap();
        for r in [0.5, 0.25, 0.125] {
            let full = covering_number(env.product_space(), &env.feasible_pair_points(), r);
            assert_eq!(zooming_number(&env, r).unwrap(), full);
        }
    }

    #[test]
    fn zooming_number_restriction_never_exceeds_full_covering() {
        let env = crate::env::generators::make_tilted_tent(17).unwrap();
        for r in [0.5, 0.25, 0.125, 0.0625] {
            let full = covering_number(env.product_space(), &env.feasible_pair_points(), r);
            assert!(zooming_number(&env, r).unwrap() <= full);
        }
    }

    #[test]
    fn adversarial_tables_are_unsupported() {
        let mut env = instance_from_table(
            SimilaritySpace::line_grid(3, SpaceKind::Context),
            SimilaritySpace::line_grid(3, SpaceKind::Arms),
            vec![0.5; 9],
            Arrivals::Sequential,
        )
        .unwrap();
        env.payoffs = crate::env::PayoffModel::PerRound {
            mu: vec![vec![0.5; 9]; 4],
        };
        assert!(matches!(
            zooming_number(&env, 0.25),
            Err(Error::Unsupported(_))
        ));
    }
}
