//! Covering, packing, nets and doubling-constant estimation.
//!
//! The default covering routine is greedy (exact minimum covering is
//! NP-hard): it repeatedly anchors a new set at the first uncovered point
//! and grows it with every uncovered point that keeps the set's diameter at
//! most `r`. An exact branch-and-bound oracle is available for small point
//! sets and backs the frozen test values.

use crate::error::{Error, Result};
use crate::space::SimilaritySpace;

/// Hard cap for [`covering_number_exact`].
pub const EXACT_COVER_MAX_POINTS: usize = 160;

fn dedup_points(points: &[usize]) -> Vec<usize> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(points.len());
    for &p in points {
        if seen.insert(p) {
            out.push(p);
        }
    }
    out
}

/// Greedy upper bound on the `r`-covering number: the least number of sets
/// of diameter `r` needed to cover `points`. Empty input covers with 0 sets.
pub fn covering_number(space: &SimilaritySpace, points: &[usize], r: f64) -> usize {
    assert!(r > 0.0, "covering_number requires r > 0");
    let pts = dedup_points(points);
    if pts.is_empty() {
        return 0;
    }
    let n = pts.len();
    let mut covered = vec![false; n];
    let mut remaining = n;
    let mut count = 0;
    let mut members: Vec<usize> = Vec::new();
    while remaining > 0 {
        let anchor = (0..n).find(|&i| !covered[i]).unwrap();
        members.clear();
        members.push(anchor);
        covered[anchor] = true;
        remaining -= 1;
        for i in 0..n {
            if covered[i] {
                continue;
            }
            let q = pts[i];
            if members.iter().all(|&m| space.dist(pts[m], q) <= r) {
                members.push(i);
                covered[i] = true;
                remaining -= 1;
            }
        }
        count += 1;
    }
    count
}

/// Size of a greedily built maximal `r`-packing: points are taken in input
/// order and kept when they are at distance `> r` from every kept point.
pub fn packing_number(space: &SimilaritySpace, points: &[usize], r: f64) -> usize {
    assert!(r > 0.0, "packing_number requires r > 0");
    greedy_packing(space, points, r).len()
}

fn greedy_packing(space: &SimilaritySpace, points: &[usize], r: f64) -> Vec<usize> {
    let pts = dedup_points(points);
    let mut chosen: Vec<usize> = Vec::new();
    for &p in &pts {
        if chosen.iter().all(|&c| space.dist(c, p) > r) {
            chosen.push(p);
        }
    }
    chosen
}

/// Greedy `r`-net: net points are pairwise `> r` apart and every input
/// point lies within distance `<= r` of some net point. A maximal greedy
/// packing has both properties.
pub fn build_r_net(space: &SimilaritySpace, points: &[usize], r: f64) -> Vec<usize> {
    assert!(r > 0.0, "build_r_net requires r > 0");
    greedy_packing(space, points, r)
}

/// Validate the two net conditions exactly.
pub fn r_net_is_valid(space: &SimilaritySpace, points: &[usize], net: &[usize], r: f64) -> bool {
    for (i, &a) in net.iter().enumerate() {
        for &b in net.iter().skip(i + 1) {
            if space.dist(a, b) <= r {
                return false;
            }
        }
    }
    points
        .iter()
        .all(|&p| net.iter().any(|&c| space.dist(c, p) <= r))
}

/// Estimate of the doubling constant: the largest number of diameter-`r`
/// sets needed (greedy) to cover any ball `B(p, r)` drawn from the point
/// set, over all centers and dyadic radii. Exhaustive over the finite set.
pub fn doubling_constant_estimate(space: &SimilaritySpace, points: &[usize]) -> usize {
    let pts = dedup_points(points);
    assert!(!pts.is_empty(), "doubling constant of an empty set");
    let mut worst = 1usize;
    let mut ball: Vec<usize> = Vec::new();
    let mut r = 1.0f64;
    while r >= 1.0 / 1024.0 {
        for &p in &pts {
            ball.clear();
            ball.extend(pts.iter().copied().filter(|&q| space.dist(p, q) <= r));
            if ball.len() > 1 {
                // ball has diameter <= 2r; cover it with sets of diameter r
                worst = worst.max(covering_number(space, &ball, r));
            }
        }
        r /= 2.0;
    }
    worst
}

/// Exact minimum number of diameter-`r` sets covering `points`.
///
/// A set of diameter `<= r` is a clique of the graph that joins points at
/// distance `<= r`, so this is a minimum clique cover. Solved as an exact
/// set cover: branch on the uncovered vertex with the fewest uncovered
/// neighbors and try every maximal clique through it, pruning with
/// `used + ceil(remaining / omega)` against the incumbent. Only intended
/// for desk-scale inputs; errors above [`EXACT_COVER_MAX_POINTS`] points.
pub fn covering_number_exact(space: &SimilaritySpace, points: &[usize], r: f64) -> Result<usize> {
    assert!(r > 0.0, "covering_number_exact requires r > 0");
    let pts = dedup_points(points);
    if pts.is_empty() {
        return Ok(0);
    }
    let n = pts.len();
    if n > EXACT_COVER_MAX_POINTS {
        return Err(Error::Unsupported(format!(
            "exact covering limited to {EXACT_COVER_MAX_POINTS} points, got {n}"
        )));
    }

    // adjacency of the threshold graph: edge <=> dist <= r
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let close = space.dist(pts[i], pts[j]) <= r;
            adj[i][j] = close;
            adj[j][i] = close;
        }
    }

    let upper = covering_number(space, &pts, r);
    let packing_lb = packing_number(space, &pts, r);
    let omega = max_clique_size(&adj);
    let lower = packing_lb.max(n.div_ceil(omega));
    if lower >= upper {
        return Ok(upper);
    }

    let mut solver = SetCoverSolver {
        adj: &adj,
        n,
        omega,
        best: upper,
        covered: vec![false; n],
    };
    solver.search(0, n);
    Ok(solver.best)
}

struct SetCoverSolver<'a> {
    adj: &'a [Vec<bool>],
    n: usize,
    omega: usize,
    best: usize,
    covered: Vec<bool>,
}

impl SetCoverSolver<'_> {
    fn search(&mut self, used: usize, remaining: usize) {
        if remaining == 0 {
            self.best = self.best.min(used);
            return;
        }
        if used + remaining.div_ceil(self.omega) >= self.best {
            return;
        }
        // most constrained uncovered vertex: fewest uncovered neighbors
        let v = (0..self.n)
            .filter(|&v| !self.covered[v])
            .min_by_key(|&v| {
                (0..self.n)
                    .filter(|&u| !self.covered[u] && self.adj[v][u])
                    .count()
            })
            .unwrap();
        // every cover assigns v to some maximal clique of the uncovered
        // subgraph containing v
        let candidates: Vec<usize> = (0..self.n)
            .filter(|&u| u != v && !self.covered[u] && self.adj[v][u])
            .collect();
        let mut cliques: Vec<Vec<usize>> = Vec::new();
        enumerate_maximal_cliques(self.adj, vec![v], candidates, Vec::new(), &mut cliques);
        // larger sets first: better incumbents early
        cliques.sort_by_key(|c| std::cmp::Reverse(c.len()));
        for clique in cliques {
            for &u in &clique {
                self.covered[u] = true;
            }
            self.search(used + 1, remaining - clique.len());
            for &u in &clique {
                self.covered[u] = false;
            }
        }
    }
}

/// Bron-Kerbosch with pivoting, collecting the maximal cliques that extend
/// `r_set` within `p`.
fn enumerate_maximal_cliques(
    adj: &[Vec<bool>],
    r_set: Vec<usize>,
    mut p: Vec<usize>,
    mut x: Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if p.is_empty() && x.is_empty() {
        out.push(r_set);
        return;
    }
    let pivot = p
        .iter()
        .chain(x.iter())
        .copied()
        .max_by_key(|&u| p.iter().filter(|&&w| adj[u][w]).count())
        .unwrap();
    let branches: Vec<usize> = p.iter().copied().filter(|&v| !adj[pivot][v]).collect();
    for v in branches {
        let mut r2 = r_set.clone();
        r2.push(v);
        let p2: Vec<usize> = p.iter().copied().filter(|&w| adj[v][w]).collect();
        let x2: Vec<usize> = x.iter().copied().filter(|&w| adj[v][w]).collect();
        enumerate_maximal_cliques(adj, r2, p2, x2, out);
        p.retain(|&w| w != v);
        x.push(v);
    }
}

/// Exact maximum clique size of the threshold graph (Bron-Kerbosch with
/// pivoting). Sizes here are <= 160 points by construction.
fn max_clique_size(adj: &[Vec<bool>]) -> usize {
    fn bk(
        adj: &[Vec<bool>],
        r_len: usize,
        p: &mut Vec<usize>,
        x: &mut Vec<usize>,
        best: &mut usize,
    ) {
        if p.is_empty() && x.is_empty() {
            *best = (*best).max(r_len);
            return;
        }
        if r_len + p.len() <= *best {
            return;
        }
        let pivot = p
            .iter()
            .chain(x.iter())
            .copied()
            .max_by_key(|&u| p.iter().filter(|&&w| adj[u][w]).count())
            .unwrap();
        let candidates: Vec<usize> = p.iter().copied().filter(|&v| !adj[pivot][v]).collect();
        for v in candidates {
            let mut p2: Vec<usize> = p.iter().copied().filter(|&w| adj[v][w]).collect();
            let mut x2: Vec<usize> = x.iter().copied().filter(|&w| adj[v][w]).collect();
            bk(adj, r_len + 1, &mut p2, &mut x2, best);
            p.retain(|&w| w != v);
            x.push(v);
        }
    }
    let n = adj.len();
    let mut best = 1;
    let mut p: Vec<usize> = (0..n).collect();
    let mut x = Vec::new();
    bk(adj, 0, &mut p, &mut x, &mut best);
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{SimilaritySpace, SpaceKind};
    use std::sync::Arc;

    fn grid_2d(side: usize) -> SimilaritySpace {
        let x = Arc::new(SimilaritySpace::line_grid(side, SpaceKind::Context));
        let y = Arc::new(SimilaritySpace::line_grid(side, SpaceKind::Arms));
        SimilaritySpace::product(x, y)
    }

    #[test]
    fn covering_interval_needs_ceil_one_over_r_sets() {
        let s = SimilaritySpace::line_grid(101, SpaceKind::Context);
        let pts: Vec<usize> = (0..101).collect();
        assert_eq!(covering_number(&s, &pts, 0.25), 4);
    }

    #[test]
    fn covering_singleton_is_one() {
        let s = SimilaritySpace::line_grid(101, SpaceKind::Context);
        assert_eq!(covering_number(&s, &[13], 0.03), 1);
        assert_eq!(covering_number(&s, &[], 0.03), 0);
    }

    #[test]
    fn packing_three_collinear_points() {
        let s = SimilaritySpace::line(vec![0.0, 0.5, 1.0], SpaceKind::Context);
        assert_eq!(packing_number(&s, &[0, 1, 2], 0.4), 3);
        assert_eq!(packing_number(&s, &[0, 1, 2], 0.6), 2);
    }

    #[test]
    fn r_net_on_three_points() {
        let s = SimilaritySpace::line(vec![0.0, 0.05, 1.0], SpaceKind::Context);
        let pts = vec![0, 1, 2];
        let net = build_r_net(&s, &pts, 0.1);
        assert_eq!(net.len(), 2);
        assert!(net.contains(&2));
        assert!(net.contains(&0) || net.contains(&1));
        assert!(r_net_is_valid(&s, &pts, &net, 0.1));
    }

    #[test]
    fn r_net_singleton_is_itself() {
        let s = SimilaritySpace::line_grid(5, SpaceKind::Context);
        assert_eq!(build_r_net(&s, &[3], 0.2), vec![3]);
    }

    #[test]
    fn r_net_grid_size_within_packing_and_covering_bounds() {
        let s = SimilaritySpace::line_grid(101, SpaceKind::Context);
        let pts: Vec<usize> = (0..101).collect();
        let net = build_r_net(&s, &pts, 0.2);
        assert!(r_net_is_valid(&s, &pts, &net, 0.2));
        assert!(
            (3..=6).contains(&net.len()),
            "net size {} outside [3, 6]",
            net.len()
        );
    }

    #[test]
    fn doubling_estimate_line_and_grid() {
        let line = SimilaritySpace::line_grid(41, SpaceKind::Context);
        let pts: Vec<usize> = (0..41).collect();
        assert!(doubling_constant_estimate(&line, &pts) <= 4);

        let sq = grid_2d(9);
        let all: Vec<usize> = (0..81).collect();
        assert!(doubling_constant_estimate(&sq, &all) <= 16);

        let single = SimilaritySpace::line_grid(1, SpaceKind::Context);
        assert_eq!(doubling_constant_estimate(&single, &[0]), 1);
    }

    #[test]
    fn packing_never_exceeds_greedy_cover() {
        // any r-packing injects into any diameter-r cover
        for side in [5, 9, 11] {
            let s = grid_2d(side);
            let pts: Vec<usize> = (0..side * side).collect();
            for r in [0.15, 0.3, 0.5, 0.9] {
                assert!(packing_number(&s, &pts, r) <= covering_number(&s, &pts, r));
            }
        }
    }

    #[test]
    fn exact_cover_matches_independent_brute_force_on_small_sets() {
        // independent oracle: depth-first minimum set cover over maximal
        // cliques containing the lowest uncovered point
        fn brute_min_cover(space: &SimilaritySpace, pts: &[usize], r: f64) -> usize {
            fn grow_cliques(
                space: &SimilaritySpace,
                pts: &[usize],
                r: f64,
                covered: &[bool],
                base: Vec<usize>,
                start: usize,
                out: &mut Vec<Vec<usize>>,
            ) {
                let mut extended = false;
                for i in start..pts.len() {
                    if covered[i] || base.contains(&i) {
                        continue;
                    }
                    if base.iter().all(|&m| space.dist(pts[m], pts[i]) <= r) {
                        let mut next = base.clone();
                        next.push(i);
                        extended = true;
                        grow_cliques(space, pts, r, covered, next, i + 1, out);
                    }
                }
                if !extended {
                    out.push(base);
                }
            }
            fn solve(
                space: &SimilaritySpace,
                pts: &[usize],
                r: f64,
                covered: &mut Vec<bool>,
                used: usize,
                best: &mut usize,
            ) {
                if used >= *best {
                    return;
                }
                let Some(first) = (0..pts.len()).find(|&i| !covered[i]) else {
                    *best = used;
                    return;
                };
                let mut candidates = Vec::new();
                grow_cliques(space, pts, r, covered, vec![first], 0, &mut candidates);
                for clique in candidates {
                    for &i in &clique {
                        covered[i] = true;
                    }
                    solve(space, pts, r, covered, used + 1, best);
                    for &i in &clique {
                        covered[i] = false;
                    }
                }
            }
            let mut covered = vec![false; pts.len()];
            let mut best = usize::MAX;
            solve(space, pts, r, &mut covered, 0, &mut best);
            best
        }

        let s = grid_2d(5);
        let pts: Vec<usize> = (0..25).collect();
        for r in [0.3, 0.5, 0.76] {
            let exact = covering_number_exact(&s, &pts, r).unwrap();
            let brute = brute_min_cover(&s, &pts, r);
            assert_eq!(exact, brute, "r = {r}");
        }
    }

    #[test]
    fn exact_cover_on_11x11_grid_at_half() {
        let s = grid_2d(11);
        let pts: Vec<usize> = (0..121).collect();
        let exact = covering_number_exact(&s, &pts, 0.5).unwrap();
        // frozen from an independent integer-program solve over the 196
        // maximal cliques of this threshold graph (largest clique: 18)
        assert_eq!(exact, 10);
        assert!(covering_number(&s, &pts, 0.5) >= exact);
        assert!(packing_number(&s, &pts, 0.5) <= exact);
    }

    #[test]
    fn exact_cover_on_7x7_and_9x9_grids() {
        // frozen from the same independent integer-program oracle
        let s = grid_2d(7);
        let pts: Vec<usize> = (0..49).collect();
        assert_eq!(covering_number_exact(&s, &pts, 0.5).unwrap(), 8);
        let s = grid_2d(9);
        let pts: Vec<usize> = (0..81).collect();
        assert_eq!(covering_number_exact(&s, &pts, 0.5).unwrap(), 9);
    }

    #[test]
    fn exact_cover_rejects_large_inputs() {
        let s = SimilaritySpace::line_grid(300, SpaceKind::Context);
        let pts: Vec<usize> = (0..300).collect();
        assert!(covering_number_exact(&s, &pts, 0.1).is_err());
    }
}
