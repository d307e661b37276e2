//! Bandit over a rooted taxonomy with implicit distances.
//!
//! The taxonomy is a rooted tree whose leaves are the arms. It implicitly
//! defines a similarity distance: the distance between two arms is the
//! payoff spread (weight) of their least common subtree. The algorithm
//! explores payoffs and subtree weights jointly: nodes whose weight
//! estimate provably exceeds their confidence scale are deactivated and
//! replaced by their children.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rooted tree over arms. Leaves are arms; every internal node has
/// out-degree at least 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomy {
    children: Vec<Vec<usize>>,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    root: usize,
    leaves: Vec<usize>,
    /// node id -> arm index for leaves
    leaf_arm: Vec<Option<usize>>,
}

#[derive(Serialize, Deserialize)]
struct TaxonomyRepr {
    children: Vec<Vec<usize>>,
}

impl Serialize for Taxonomy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TaxonomyRepr {
            children: self.children.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Taxonomy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = TaxonomyRepr::deserialize(d)?;
        Taxonomy::from_children(repr.children).map_err(serde::de::Error::custom)
    }
}

impl Taxonomy {
    /// Build from per-node child lists. The root is the unique node that is
    /// no node's child. Internal nodes must have out-degree >= 2.
    pub fn from_children(children: Vec<Vec<usize>>) -> Result<Self> {
        let n = children.len();
        if n == 0 {
            return Err(Error::parameter("taxonomy: empty tree"));
        }
        let mut parent = vec![None; n];
        for (v, kids) in children.iter().enumerate() {
            if kids.len() == 1 {
                return Err(Error::parameter(format!(
                    "taxonomy: internal node {v} has out-degree 1"
                )));
            }
            for &c in kids {
                if c >= n {
                    return Err(Error::parameter("taxonomy: child id out of range"));
                }
                if parent[c].is_some() {
                    return Err(Error::parameter(format!("taxonomy: node {c} has two parents")));
                }
                parent[c] = Some(v);
            }
        }
        let roots: Vec<usize> = (0..n).filter(|&v| parent[v].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::parameter(format!(
                "taxonomy: expected a single root, found {}",
                roots.len()
            )));
        }
        let root = roots[0];
        let mut depth = vec![0usize; n];
        let mut stack = vec![root];
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        while let Some(v) = stack.pop() {
            if visited[v] {
                return Err(Error::parameter("taxonomy: cycle detected"));
            }
            visited[v] = true;
            order.push(v);
            for &c in &children[v] {
                depth[c] = depth[v] + 1;
                stack.push(c);
            }
        }
        if order.len() != n {
            return Err(Error::parameter("taxonomy: disconnected nodes"));
        }
        let mut leaves = Vec::new();
        let mut leaf_arm = vec![None; n];
        // leaf order: depth-first left-to-right, stable arm numbering
        fn collect_leaves(children: &[Vec<usize>], v: usize, out: &mut Vec<usize>) {
            if children[v].is_empty() {
                out.push(v);
            } else {
                for &c in &children[v] {
                    collect_leaves(children, c, out);
                }
            }
        }
        collect_leaves(&children, root, &mut leaves);
        for (arm, &l) in leaves.iter().enumerate() {
            leaf_arm[l] = Some(arm);
        }
        Ok(Taxonomy {
            children,
            parent,
            depth,
            root,
            leaves,
            leaf_arm,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.children.len()
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn arm_of_leaf(&self, leaf: usize) -> Option<usize> {
        self.leaf_arm[leaf]
    }

    pub fn leaf_of_arm(&self, arm: usize) -> usize {
        self.leaves[arm]
    }

    /// Maximum out-degree.
    pub fn degree_bound(&self) -> usize {
        self.children.iter().map(|c| c.len()).max().unwrap_or(0)
    }

    /// Parents before children.
    pub fn topological_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.num_nodes());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(self.children[v].iter().copied());
        }
        order
    }

    pub fn is_ancestor_or_self(&self, v: usize, u: usize) -> bool {
        let mut cur = u;
        loop {
            if cur == v {
                return true;
            }
            match self.parent[cur] {
                Some(p) => cur = p,
                None => return false,
            }
        }
    }

    /// All nodes of the subtree rooted at `v` (preorder).
    pub fn subtree(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            out.push(u);
            stack.extend(self.children[u].iter().copied());
        }
        out
    }

    /// Probability that the uniform random descent started at `v` passes
    /// through `u`: the product of `1/out-degree` along the path, or 0 when
    /// `u` is not in the subtree of `v`.
    pub fn descent_probability(&self, v: usize, u: usize) -> f64 {
        if !self.is_ancestor_or_self(v, u) {
            return 0.0;
        }
        let mut p = 1.0;
        let mut cur = u;
        while cur != v {
            let par = self.parent[cur].expect("walk must reach v");
            p /= self.children[par].len() as f64;
            cur = par;
        }
        p
    }

    /// Path from `v` down to `leaf`, inclusive on both ends.
    pub fn path_down(&self, v: usize, leaf: usize) -> Vec<usize> {
        let mut up = Vec::new();
        let mut cur = leaf;
        loop {
            up.push(cur);
            if cur == v {
                break;
            }
            cur = self.parent[cur].expect("leaf must be below v");
        }
        up.reverse();
        up
    }
}

/// Uniform random walk oriented away from the root: from `v` keep choosing
/// a uniformly random child until a leaf is reached.
pub fn random_descend(tree: &Taxonomy, v: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut cur = v;
    while !tree.is_leaf(cur) {
        let kids = tree.children(cur);
        cur = kids[rng.random_range(0..kids.len())];
    }
    cur
}

/// Balanced near-binary tree over `n` leaves.
pub fn balanced_tree(n: usize) -> Taxonomy {
    assert!(n >= 2);
    // build recursively: ids assigned after children counts are known
    fn build(sizes: usize, children: &mut Vec<Vec<usize>>) -> usize {
        if sizes == 1 {
            children.push(Vec::new());
            return children.len() - 1;
        }
        let left = build(sizes / 2, children);
        let right = build(sizes - sizes / 2, children);
        children.push(vec![left, right]);
        children.len() - 1
    }
    let mut children = Vec::new();
    build(n, &mut children);
    Taxonomy::from_children(children).expect("balanced tree is well-formed")
}

/// Random tree with `n` leaves and out-degrees in `2..=max_degree`.
pub fn random_tree(n: usize, max_degree: usize, rng: &mut ChaCha8Rng) -> Taxonomy {
    assert!(n >= 2 && max_degree >= 2);
    fn build(n: usize, max_degree: usize, rng: &mut ChaCha8Rng, children: &mut Vec<Vec<usize>>) -> usize {
        if n == 1 {
            children.push(Vec::new());
            return children.len() - 1;
        }
        let deg = rng.random_range(2..=max_degree.min(n));
        // split n leaves into deg nonempty parts
        let mut parts = vec![1usize; deg];
        for _ in 0..(n - deg) {
            parts[rng.random_range(0..deg)] += 1;
        }
        let kids: Vec<usize> = parts
            .into_iter()
            .map(|p| build(p, max_degree, rng, children))
            .collect();
        children.push(kids);
        children.len() - 1
    }
    let mut children = Vec::new();
    build(n, max_degree, rng, &mut children);
    Taxonomy::from_children(children).expect("random tree is well-formed")
}

// ---------------------------------------------------------------------------
// Ground-truth oracle (exact leaf payoffs required)
// ---------------------------------------------------------------------------

/// Per-node payoff spread: `max - min` of expected leaf payoffs in the
/// subtree. `leaf_mu` is indexed by arm.
pub fn subtree_weights(tree: &Taxonomy, leaf_mu: &[f64]) -> Vec<f64> {
    let n = tree.num_nodes();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    let mut order = tree.topological_order();
    order.reverse();
    for &v in &order {
        if tree.is_leaf(v) {
            let arm = tree.arm_of_leaf(v).unwrap();
            lo[v] = leaf_mu[arm];
            hi[v] = leaf_mu[arm];
        } else {
            for &c in tree.children(v) {
                lo[v] = lo[v].min(lo[c]);
                hi[v] = hi[v].max(hi[c]);
            }
        }
    }
    (0..n).map(|v| hi[v] - lo[v]).collect()
}

/// Weight of node `v` (exhaustive over the finite tree).
pub fn true_weight(tree: &Taxonomy, leaf_mu: &[f64], v: usize) -> f64 {
    subtree_weights(tree, leaf_mu)[v]
}

/// Expected payoff of the random descent from each node.
pub fn node_means(tree: &Taxonomy, leaf_mu: &[f64]) -> Vec<f64> {
    let n = tree.num_nodes();
    let mut mu = vec![0.0; n];
    let mut order = tree.topological_order();
    order.reverse();
    for &v in &order {
        if tree.is_leaf(v) {
            mu[v] = leaf_mu[tree.arm_of_leaf(v).unwrap()];
        } else {
            let kids = tree.children(v);
            mu[v] = kids.iter().map(|&c| mu[c]).sum::<f64>() / kids.len() as f64;
        }
    }
    mu
}

/// Largest `q` such that every informative subtree containing an optimal
/// arm has two internal nodes, each reachable with probability at least
/// `q`, whose expected payoffs differ by at least half the subtree weight.
/// When every such subtree has zero weight the condition is vacuous and the
/// quality is 1.
pub fn true_quality(tree: &Taxonomy, leaf_mu: &[f64]) -> f64 {
    let weights = subtree_weights(tree, leaf_mu);
    let means = node_means(tree, leaf_mu);
    let best = leaf_mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut quality = f64::INFINITY;
    let mut informative = false;
    for v in 0..tree.num_nodes() {
        if tree.is_leaf(v) || weights[v] <= 0.0 {
            continue;
        }
        let contains_optimal = tree
            .subtree(v)
            .iter()
            .any(|&u| tree.is_leaf(u) && leaf_mu[tree.arm_of_leaf(u).unwrap()] == best);
        if !contains_optimal {
            continue;
        }
        informative = true;
        let internal: Vec<usize> = tree
            .subtree(v)
            .into_iter()
            .filter(|&u| !tree.is_leaf(u))
            .collect();
        let mut q_v: f64 = 0.0;
        for (i, &u1) in internal.iter().enumerate() {
            for &u2 in internal.iter().skip(i) {
                if (means[u1] - means[u2]).abs() >= weights[v] / 2.0 - 1e-12 {
                    let reach = tree
                        .descent_probability(v, u1)
                        .min(tree.descent_probability(v, u2));
                    q_v = q_v.max(reach);
                }
            }
        }
        quality = quality.min(q_v);
    }
    if informative {
        quality
    } else {
        1.0
    }
}

/// Similarity distance implied by the taxonomy: `d(x, y)` is the weight of
/// the least common subtree of the two leaves. Returns a dense row-major
/// matrix indexed by arm.
pub fn induced_arm_metric(tree: &Taxonomy, leaf_mu: &[f64]) -> Vec<f64> {
    let weights = subtree_weights(tree, leaf_mu);
    let k = tree.num_leaves();
    let mut dist = vec![0.0; k * k];
    // for each internal node, leaf pairs in different child subtrees have
    // their LCA here
    for v in 0..tree.num_nodes() {
        if tree.is_leaf(v) {
            continue;
        }
        let kid_leaves: Vec<Vec<usize>> = tree
            .children(v)
            .iter()
            .map(|&c| {
                tree.subtree(c)
                    .into_iter()
                    .filter_map(|u| tree.arm_of_leaf(u))
                    .collect()
            })
            .collect();
        for (i, la) in kid_leaves.iter().enumerate() {
            for lb in kid_leaves.iter().skip(i + 1) {
                for &a in la {
                    for &b in lb {
                        dist[a * k + b] = weights[v].min(1.0);
                        dist[b * k + a] = weights[v].min(1.0);
                    }
                }
            }
        }
    }
    dist
}

// ---------------------------------------------------------------------------
// The algorithm
// ---------------------------------------------------------------------------

/// Horizon and quality parameter; `k_a` is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaxConfig {
    pub horizon: usize,
    /// Pessimistic lower bound on the taxonomy quality, in (0, 1].
    pub q_hat: f64,
}

impl TaxConfig {
    pub fn new(horizon: usize, q_hat: f64) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::parameter("taxonomy: horizon must be >= 2"));
        }
        if !(0.0..=1.0).contains(&q_hat) || q_hat == 0.0 {
            return Err(Error::parameter("taxonomy: q_hat must lie in (0, 1]"));
        }
        Ok(TaxConfig { horizon, q_hat })
    }

    pub fn k_a(&self) -> f64 {
        4.0 * (2.0 / self.q_hat).sqrt()
    }
}

/// Confidence radius `sqrt(8 ln(horizon) / (2 + n))`.
pub fn tax_confidence_radius(n: u64, horizon: f64) -> f64 {
    (8.0 * horizon.ln() / (2.0 + n as f64)).sqrt()
}

/// Optimistic index `mu_t + (1 + 2 k_a) rad_t`, with `mu_t = 0` posited for
/// unsampled nodes.
pub fn node_index(n: u64, payoff_sum: f64, cfg: &TaxConfig) -> f64 {
    let mean = if n == 0 { 0.0 } else { payoff_sum / n as f64 };
    mean + (1.0 + 2.0 * cfg.k_a()) * tax_confidence_radius(n, cfg.horizon as f64)
}

/// Events emitted per round for replay auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxRoundTrace {
    pub deactivated: Vec<usize>,
    pub selected: usize,
    pub leaf: usize,
}

/// Sequential state of the taxonomy bandit.
pub struct TaxonomyPolicy {
    tree: Taxonomy,
    cfg: TaxConfig,
    n: Vec<u64>,
    payoff_sum: Vec<f64>,
    active: Vec<bool>,
    retired: Vec<bool>,
    /// cached weight estimates for active internal nodes
    wgt_cache: Vec<f64>,
    wgt_dirty: Vec<bool>,
    /// internal descendants per node (self included), precomputed
    internal_desc: Vec<Vec<usize>>,
    pending: Option<(usize, usize)>,
    trace: Vec<TaxRoundTrace>,
    trace_enabled: bool,
    round_deactivations: Vec<usize>,
}

impl TaxonomyPolicy {
    pub fn new(tree: Taxonomy, cfg: TaxConfig) -> Self {
        let n_nodes = tree.num_nodes();
        let internal_desc: Vec<Vec<usize>> = (0..n_nodes)
            .map(|v| {
                if tree.is_leaf(v) {
                    Vec::new()
                } else {
                    tree.subtree(v)
                        .into_iter()
                        .filter(|&u| !tree.is_leaf(u))
                        .collect()
                }
            })
            .collect();
        let mut active = vec![false; n_nodes];
        active[tree.root()] = true;
        TaxonomyPolicy {
            cfg,
            n: vec![0; n_nodes],
            payoff_sum: vec![0.0; n_nodes],
            active,
            retired: vec![false; n_nodes],
            wgt_cache: vec![0.0; n_nodes],
            wgt_dirty: vec![true; n_nodes],
            internal_desc,
            pending: None,
            trace: Vec::new(),
            trace_enabled: false,
            round_deactivations: Vec::new(),
            tree,
        }
    }

    pub fn enable_trace(&mut self) {
        self.trace_enabled = true;
    }

    pub fn take_trace(&mut self) -> Vec<TaxRoundTrace> {
        std::mem::take(&mut self.trace)
    }

    pub fn tree(&self) -> &Taxonomy {
        &self.tree
    }

    pub fn config(&self) -> &TaxConfig {
        &self.cfg
    }

    pub fn hits(&self, v: usize) -> u64 {
        self.n[v]
    }

    pub fn mean(&self, v: usize) -> f64 {
        if self.n[v] == 0 {
            0.0
        } else {
            self.payoff_sum[v] / self.n[v] as f64
        }
    }

    pub fn is_active(&self, v: usize) -> bool {
        self.active[v]
    }

    pub fn active_nodes(&self) -> Vec<usize> {
        (0..self.tree.num_nodes()).filter(|&v| self.active[v]).collect()
    }

    fn rad(&self, v: usize) -> f64 {
        tax_confidence_radius(self.n[v], self.cfg.horizon as f64)
    }

    /// Weight estimate: max over internal descendant pairs of
    /// `|mu_t(u1) - mu_t(u2)| - rad(u1) - rad(u2)`, floored at 0. Pairs with
    /// a confidence radius >= 1 cannot contribute (payoff spreads are <= 1),
    /// so the scan is restricted to well-sampled nodes.
    pub fn weight_estimate(&self, v: usize) -> Result<f64> {
        if self.tree.is_leaf(v) {
            return Err(Error::Input(format!("weight estimate of leaf {v}")));
        }
        Ok(self.weight_estimate_unchecked(v))
    }

    fn weight_estimate_unchecked(&self, v: usize) -> f64 {
        let mut est: f64 = 0.0;
        let candidates: Vec<(f64, f64)> = self.internal_desc[v]
            .iter()
            .filter_map(|&u| {
                let rad = self.rad(u);
                if rad < 1.0 {
                    Some((self.mean(u), rad))
                } else {
                    None
                }
            })
            .collect();
        for (i, &(m1, r1)) in candidates.iter().enumerate() {
            for &(m2, r2) in candidates.iter().skip(i + 1) {
                est = est.max((m1 - m2).abs() - r1 - r2);
            }
        }
        est
    }

    fn cached_weight_estimate(&mut self, v: usize) -> f64 {
        if self.wgt_dirty[v] {
            self.wgt_cache[v] = self.weight_estimate_unchecked(v);
            self.wgt_dirty[v] = false;
        }
        self.wgt_cache[v]
    }

    /// S1: while some active internal node violates
    /// `wgt_t(v) < k_a * rad_t(v)`, deactivate it and activate its children.
    /// Deactivated nodes never reactivate.
    pub fn rebalance(&mut self) {
        let k_a = self.cfg.k_a();
        loop {
            let mut violator = None;
            for v in 0..self.tree.num_nodes() {
                if !self.active[v] || self.tree.is_leaf(v) {
                    continue;
                }
                let est = self.cached_weight_estimate(v);
                if est >= k_a * self.rad(v) {
                    violator = Some(v);
                    break;
                }
            }
            match violator {
                None => break,
                Some(v) => {
                    self.active[v] = false;
                    self.retired[v] = true;
                    self.round_deactivations.push(v);
                    for &c in self.tree.children(v).to_vec().iter() {
                        debug_assert!(!self.retired[c]);
                        self.active[c] = true;
                        self.wgt_dirty[c] = true;
                    }
                }
            }
        }
    }

    /// S2 + S3: rebalance, select the active node with the maximal index
    /// (ties to the lowest node id) and play a random descent from it.
    pub fn step(&mut self, rng: &mut ChaCha8Rng) -> Result<(usize, usize)> {
        if self.pending.is_some() {
            return Err(Error::Protocol("step called twice without feedback".into()));
        }
        self.rebalance();
        let mut best: Option<(usize, f64)> = None;
        for v in 0..self.tree.num_nodes() {
            if !self.active[v] {
                continue;
            }
            let idx = node_index(self.n[v], self.payoff_sum[v], &self.cfg);
            match best {
                Some((_, b)) if idx <= b => {}
                _ => best = Some((v, idx)),
            }
        }
        let (node, _) = best.ok_or_else(|| Error::Invariant("no active node".into()))?;
        let leaf = random_descend(&self.tree, node, rng);
        self.pending = Some((node, leaf));
        Ok((node, leaf))
    }

    /// Record the payoff on every node of the path from the selected node
    /// down to the played leaf (ancestors of the selected node are not
    /// updated).
    pub fn feedback(&mut self, node: usize, leaf: usize, payoff: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&payoff) {
            return Err(Error::Input(format!("payoff {payoff} outside [0,1]")));
        }
        match self.pending.take() {
            Some((n, l)) if n == node && l == leaf => {}
            other => {
                self.pending = other;
                return Err(Error::Protocol(
                    "feedback does not match the pending selection".into(),
                ));
            }
        }
        for u in self.tree.path_down(node, leaf) {
            self.n[u] += 1;
            self.payoff_sum[u] += payoff;
        }
        self.wgt_dirty[node] = true;
        if self.trace_enabled {
            self.trace.push(TaxRoundTrace {
                deactivated: std::mem::take(&mut self.round_deactivations),
                selected: node,
                leaf,
            });
        } else {
            self.round_deactivations.clear();
        }
        Ok(())
    }

    pub fn structure_size(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    #[cfg(test)]
    pub(crate) fn set_stats_for_test(&mut self, v: usize, n: u64, payoff_sum: f64) {
        self.n[v] = n;
        self.payoff_sum[v] = payoff_sum;
        for d in &mut self.wgt_dirty {
            *d = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn two_leaf_tree() -> Taxonomy {
        // node 2 = root, leaves 0 and 1
        Taxonomy::from_children(vec![vec![], vec![], vec![0, 1]]).unwrap()
    }

    #[test]
    fn constant_mu_means_zero_weights_and_quality_one() {
        let tree = balanced_tree(8);
        let mu = vec![0.4; 8];
        assert!(subtree_weights(&tree, &mu).iter().all(|&w| w == 0.0));
        assert_eq!(true_quality(&tree, &mu), 1.0);
    }

    #[test]
    fn two_leaf_root_weight() {
        let tree = two_leaf_tree();
        assert!((true_weight(&tree, &[0.2, 0.8], 2) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn weights_match_double_loop_recomputation() {
        let mut rng = stream_rng(17, Stream::InstanceGen);
        let tree = random_tree(16, 3, &mut rng);
        let mu: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..1.0)).collect();
        let weights = subtree_weights(&tree, &mu);
        for v in 0..tree.num_nodes() {
            let leaves: Vec<f64> = tree
                .subtree(v)
                .into_iter()
                .filter_map(|u| tree.arm_of_leaf(u))
                .map(|a| mu[a])
                .collect();
            let mut brute: f64 = 0.0;
            for &a in &leaves {
                for &b in &leaves {
                    brute = brute.max((a - b).abs());
                }
            }
            assert!((weights[v] - brute).abs() < 1e-12, "node {v}");
        }
    }

    #[test]
    fn descent_probability_matches_monte_carlo() {
        let mut rng = stream_rng(5, Stream::Algorithm);
        let tree = random_tree(8, 3, &mut rng);
        let draws = 100_000;
        let mut counts = vec![0u64; tree.num_nodes()];
        for _ in 0..draws {
            let leaf = random_descend(&tree, tree.root(), &mut rng);
            // count every node on the path
            for u in tree.path_down(tree.root(), leaf) {
                counts[u] += 1;
            }
        }
        for v in 0..tree.num_nodes() {
            let p = tree.descent_probability(tree.root(), v);
            let freq = counts[v] as f64 / draws as f64;
            assert!((p - freq).abs() < 0.02, "node {v}: p={p} freq={freq}");
        }
    }

    #[test]
    fn descent_from_leaf_is_identity() {
        let tree = two_leaf_tree();
        let mut rng = stream_rng(1, Stream::Algorithm);
        assert_eq!(random_descend(&tree, 0, &mut rng), 0);
    }

    #[test]
    fn balanced_depth2_leaves_are_uniform() {
        let tree = balanced_tree(4);
        let mut rng = stream_rng(2, Stream::Algorithm);
        let mut counts = [0u64; 4];
        let draws = 100_000;
        for _ in 0..draws {
            let leaf = random_descend(&tree, tree.root(), &mut rng);
            counts[tree.arm_of_leaf(leaf).unwrap()] += 1;
        }
        for c in counts {
            let f = c as f64 / draws as f64;
            assert!((f - 0.25).abs() < 0.02, "freq {f}");
        }
    }

    #[test]
    fn confidence_radius_values() {
        let e4 = std::f64::consts::E.powi(4);
        assert!((tax_confidence_radius(30, e4) - 1.0).abs() < 1e-12);
        assert!((tax_confidence_radius(0, std::f64::consts::E) - 2.0).abs() < 1e-12);
        for n in 0..100 {
            assert!(tax_confidence_radius(n + 1, 1e4) < tax_confidence_radius(n, 1e4));
        }
    }

    #[test]
    fn index_arithmetic() {
        let cfg = TaxConfig::new(3, 0.5).unwrap();
        assert!((cfg.k_a() - 8.0).abs() < 1e-12);
        // fresh node at log T = 1: 0 + 17 * 2 = 34
        let rad0 = (8.0f64 * 1.0 / 2.0).sqrt();
        assert!((rad0 - 2.0).abs() < 1e-12);
        assert!(((1.0 + 2.0 * 8.0) * rad0 - 34.0).abs() < 1e-12);
        // index >= mean always; large-n limit approaches the mean
        let cfg2 = TaxConfig::new(10_000, 1.0).unwrap();
        let idx_large = node_index(1_000_000_000, 500_000_000.0, &cfg2);
        assert!(idx_large >= 0.5 && idx_large < 0.51);
    }

    #[test]
    fn weight_estimate_arithmetic_and_leaf_error() {
        let tree = Taxonomy::from_children(vec![
            vec![],        // 0 leaf
            vec![],        // 1 leaf
            vec![0, 1],    // 2 internal
            vec![],        // 3 leaf
            vec![],        // 4 leaf
            vec![3, 4],    // 5 internal
            vec![2, 5],    // 6 root
        ])
        .unwrap();
        let cfg = TaxConfig::new(1_000, 1.0).unwrap();
        let mut p = TaxonomyPolicy::new(tree, cfg);
        assert!(p.weight_estimate(0).is_err());
        // unsampled: all radii exceed 1, estimate 0
        assert_eq!(p.weight_estimate(6).unwrap(), 0.0);
        // plant stats: rads of ~0.1 need n ~ 8 ln T / 0.01
        let n = (8.0 * (1000f64).ln() / 0.01) as u64;
        p.set_stats_for_test(2, n, 0.9 * n as f64);
        p.set_stats_for_test(5, n, 0.3 * n as f64);
        let rad = tax_confidence_radius(n, 1000.0);
        let expect = (0.6 - 2.0 * rad).max(0.0);
        assert!((p.weight_estimate(6).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn rebalance_noop_when_invariant_holds() {
        let tree = balanced_tree(8);
        let cfg = TaxConfig::new(1_000, 0.5).unwrap();
        let mut p = TaxonomyPolicy::new(tree, cfg);
        p.rebalance();
        assert!(p.is_active(p.tree().root()));
        assert_eq!(p.structure_size(), 1);
    }

    #[test]
    fn forced_violation_deactivates_node_and_activates_children() {
        let tree = balanced_tree(4);
        let root = tree.root();
        let kids: Vec<usize> = tree.children(root).to_vec();
        let cfg = TaxConfig::new(1_000, 1.0).unwrap();
        let mut p = TaxonomyPolicy::new(tree, cfg);
        // make the root's weight estimate overwhelm k_a * rad(root):
        // two well-sampled internal children with a large mean split and a
        // heavily sampled root (small rad)
        let n = 4_000_000u64;
        p.set_stats_for_test(root, n, 0.5 * n as f64);
        p.set_stats_for_test(kids[0], n, 0.95 * n as f64);
        p.set_stats_for_test(kids[1], n, 0.05 * n as f64);
        p.rebalance();
        assert!(!p.is_active(root));
        assert!(kids.iter().all(|&c| p.is_active(c)));
    }

    #[test]
    fn step_feedback_path_updates() {
        let tree = balanced_tree(8);
        let cfg = TaxConfig::new(100, 0.5).unwrap();
        let mut p = TaxonomyPolicy::new(tree, cfg);
        let mut rng = stream_rng(3, Stream::Algorithm);
        let (node, leaf) = p.step(&mut rng).unwrap();
        assert_eq!(node, p.tree().root());
        // wrong leaf is a protocol error
        assert!(p.feedback(node, usize::MAX, 0.5).is_err());
        p.feedback(node, leaf, 1.0).unwrap();
        let path = p.tree().path_down(node, leaf);
        for v in 0..p.tree().num_nodes() {
            let expect = u64::from(path.contains(&v));
            assert_eq!(p.hits(v), expect, "node {v}");
        }
    }

    #[test]
    fn selected_leaf_updates_only_itself() {
        let tree = two_leaf_tree();
        let cfg = TaxConfig::new(100, 1.0).unwrap();
        let mut p = TaxonomyPolicy::new(tree, cfg);
        // force the leaves active
        let root = p.tree().root();
        let n = 4_000_000u64;
        p.set_stats_for_test(root, n, 0.5 * n as f64);
        // a two-leaf root has no internal descendants other than itself, so
        // its estimate stays 0; deactivate manually through rebalance is not
        // possible here. Drive via step on the root and check the path rule
        // with node = leaf after manual activation.
        p.active[root] = false;
        p.active[0] = true;
        p.active[1] = true;
        let mut rng = stream_rng(4, Stream::Algorithm);
        let (node, leaf) = p.step(&mut rng).unwrap();
        assert!(p.tree().is_leaf(node));
        assert_eq!(node, leaf);
        p.feedback(node, leaf, 0.0).unwrap();
        assert_eq!(p.hits(node), 1);
        assert_eq!(p.hits(root), n);
    }

    #[test]
    fn taxonomy_rejects_out_degree_one() {
        assert!(Taxonomy::from_children(vec![vec![], vec![0]]).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let mut rng = stream_rng(9, Stream::InstanceGen);
        let tree = random_tree(12, 3, &mut rng);
        let json = serde_json::to_string(&tree).unwrap();
        let back: Taxonomy = serde_json::from_str(&json).unwrap();
        assert_eq!(tree, back);
    }
}
