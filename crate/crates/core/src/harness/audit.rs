//! Replay validators.
//!
//! Audits reconstruct the algorithm's structure round by round from the
//! logged trace and check the structural invariants, the concentration
//! behavior, and the clean-run consequences against the exact payoff
//! oracle. They also run structurally on exported snapshots.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::EnvironmentInstance;
use crate::harness::{AlgoTrace, AlgorithmSpec, PolicySnapshot, RunLog};
use crate::meta::{rk_covering_number, t0, MetaRoundTrace, MetaSnapshot};
use crate::space::{doubling_constant_estimate, Ball};
use crate::taxonomy::{
    node_means, subtree_weights, tax_confidence_radius, TaxConfig, TaxRoundTrace,
};
use crate::zooming::{confidence_radius, ZoomRoundTrace, ZoomSnapshot, MIN_RADIUS};

const EPS: f64 = 1e-9;

/// Outcome of one named check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub first_violation_round: Option<usize>,
    pub events: u64,
    pub violations: u64,
    pub detail: String,
}

impl CheckResult {
    fn pass(name: &str, events: u64, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed: true,
            first_violation_round: None,
            events,
            violations: 0,
            detail: detail.into(),
        }
    }

    fn render(&self) -> String {
        let status = if self.passed { "pass" } else { "FAIL" };
        let at = match self.first_violation_round {
            Some(r) => format!(" first_violation_round={r}"),
            None => String::new(),
        };
        format!(
            "[{status}] {}: events={} violations={}{}{}",
            self.name,
            self.events,
            self.violations,
            at,
            if self.detail.is_empty() {
                String::new()
            } else {
                format!(" ({})", self.detail)
            }
        )
    }
}

/// Aggregated audit outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub checks: Vec<CheckResult>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        self.checks
            .iter()
            .map(CheckResult::render)
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Which families of checks to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditChecks {
    pub invariants: bool,
    pub concentration: bool,
    pub surrogates: bool,
}

impl AuditChecks {
    pub fn all() -> Self {
        AuditChecks {
            invariants: true,
            concentration: true,
            surrogates: true,
        }
    }
}

/// What to audit: a completed traced run, or an exported snapshot.
pub enum AuditSubject<'a> {
    Run {
        env: &'a Arc<EnvironmentInstance>,
        log: &'a RunLog,
    },
    Snapshot(&'a PolicySnapshot),
}

/// Run the requested checks and return one pass/fail entry per check.
pub fn audit(subject: AuditSubject<'_>, checks: AuditChecks) -> AuditReport {
    match subject {
        AuditSubject::Run { env, log } => match &log.trace {
            AlgoTrace::Zooming(trace) => zoom_audit(env, log, trace, checks),
            AlgoTrace::Meta(trace) => meta_audit(env, log, trace, checks),
            AlgoTrace::Taxonomy(trace) => tax_audit(env, log, trace, checks),
            AlgoTrace::None => AuditReport {
                checks: vec![CheckResult::pass(
                    "no-structure-trace",
                    0,
                    "policy recorded no structure events; nothing to audit",
                )],
            },
        },
        AuditSubject::Snapshot(snap) => match snap {
            PolicySnapshot::Zooming(s) => zoom_snapshot_audit(s),
            PolicySnapshot::Meta(s) => meta_snapshot_audit(s),
        },
    }
}

struct Counter {
    name: &'static str,
    events: u64,
    violations: u64,
    first: Option<usize>,
    detail: String,
}

impl Counter {
    fn new(name: &'static str) -> Self {
        Counter {
            name,
            events: 0,
            violations: 0,
            first: None,
            detail: String::new(),
        }
    }

    fn hit(&mut self, ok: bool, round: usize) {
        self.events += 1;
        if !ok {
            self.violations += 1;
            if self.first.is_none() {
                self.first = Some(round);
            }
        }
    }

    fn bulk(&mut self, events: u64, violations: u64, round: usize) {
        self.events += events;
        self.violations += violations;
        if violations > 0 && self.first.is_none() {
            self.first = Some(round);
        }
    }

    fn into_result(self) -> CheckResult {
        CheckResult {
            name: self.name.into(),
            passed: self.violations == 0,
            first_violation_round: self.first,
            events: self.events,
            violations: self.violations,
            detail: self.detail,
        }
    }

    /// Fraction-style check: passes when violations / events stays within
    /// the tolerance.
    fn into_fraction_result(self, tolerance: f64) -> CheckResult {
        let frac = if self.events == 0 {
            0.0
        } else {
            self.violations as f64 / self.events as f64
        };
        CheckResult {
            name: self.name.into(),
            passed: frac <= tolerance,
            first_violation_round: self.first,
            events: self.events,
            violations: self.violations,
            detail: format!("fraction={frac:.2e} tolerance={tolerance:.0e}"),
        }
    }
}

// ---------------------------------------------------------------------------
// Zooming
// ---------------------------------------------------------------------------

fn zoom_audit(
    env: &Arc<EnvironmentInstance>,
    log: &RunLog,
    trace: &[ZoomRoundTrace],
    checks: AuditChecks,
) -> AuditReport {
    let mut out = Vec::new();
    if trace.len() != log.rows.len() {
        out.push(CheckResult {
            name: "zoom-trace-aligned".into(),
            passed: false,
            first_violation_round: None,
            events: 1,
            violations: 1,
            detail: format!("{} trace rounds vs {} rows", trace.len(), log.rows.len()),
        });
        return AuditReport { checks: out };
    }
    let product = env.product_space().clone();
    let horizon = log.horizon.max(2) as f64;
    let is_static = env.payoffs.is_static();
    let feasible = env.feasible_pair_points();
    let n_arms = env.n_arms();

    // exact per-pair badness for the oracle-side checks
    let mu_star: Vec<f64> = (0..env.n_contexts())
        .map(|c| {
            if env.feasible_arms(c).is_empty() {
                0.0
            } else {
                env.best_response(c, 0).1
            }
        })
        .collect();

    // reconstructed state
    let mut balls: Vec<Ball> = vec![Ball::new(feasible[0], 1.0)];
    let mut parent: Vec<Option<usize>> = vec![None];
    let mut n: Vec<u64> = vec![0];
    let mut sum: Vec<f64> = vec![0.0];

    let mut domain = Counter::new("zoom-selected-in-domain");
    let mut discipline = Counter::new("zoom-activation-discipline");
    let mut separation = Counter::new("zoom-separation");
    let mut lineage = Counter::new("zoom-parent-lineage");
    let mut covering = Counter::new("zoom-covering");
    let mut decomposition = Counter::new("zoom-regret-decomposition");
    let mut concentration = Counter::new("zoom-concentration");
    let mut lemma_rounds = Counter::new("zoom-clean-round-badness");
    let mut lemma_activations = Counter::new("zoom-clean-activation-badness");

    // incremental concentration bookkeeping
    let mut violating: Vec<bool> = vec![false];
    let mut current_violations: u64 = 0;
    let ball_mu = |b: &Ball| {
        let (cx, cy) = (b.center / n_arms, b.center % n_arms);
        env.mu(0, cx, cy)
    };
    let conc_status = |b: &Ball, n: u64, mean: f64| -> bool {
        // violation when |nu - mu(B)| > r(B) + rad
        let rad = confidence_radius(n, horizon);
        (mean - ball_mu(b)).abs() > b.radius + rad + EPS
    };
    let mut per_ball_regret: Vec<f64> = vec![0.0];

    for (t, (ev, row)) in trace.iter().zip(&log.rows).enumerate() {
        let sel = ev.selected;
        if sel >= balls.len() {
            domain.hit(false, t);
            break;
        }
        let pair = row.context * n_arms + row.arm;
        if checks.invariants {
            // pair inside the selected ball, outside every strictly
            // smaller active ball
            let inside = product.dist(balls[sel].center, pair) <= balls[sel].radius + EPS;
            let clear = balls
                .iter()
                .all(|b| b.radius >= balls[sel].radius || product.dist(b.center, pair) > b.radius);
            domain.hit(inside && clear, t);

            // the recorded confidence radius matches the replayed one, and
            // activation fires exactly when the ball was full
            let rad = confidence_radius(n[sel], horizon);
            let rad_ok = (rad - ev.rad_at_selection).abs() <= EPS;
            let child_radius = balls[sel].radius / 2.0;
            let should_activate = rad <= balls[sel].radius && child_radius >= MIN_RADIUS;
            let act_ok = match &ev.activated {
                Some(a) => {
                    should_activate
                        && a.center == pair
                        && a.parent == sel
                        && (a.radius - child_radius).abs() <= EPS
                }
                None => !should_activate,
            };
            discipline.hit(rad_ok && act_ok, t);

            if let Some(a) = &ev.activated {
                // new center must clear every same-radius center by > r
                let ok = balls
                    .iter()
                    .filter(|b| (b.radius - a.radius).abs() <= EPS)
                    .all(|b| product.dist(b.center, a.center) > a.radius);
                separation.hit(ok, t);
            }
        }
        if checks.surrogates && is_static {
            let badness = mu_star[row.context] - env.mu(0, row.context, row.arm);
            lemma_rounds.hit(badness <= 15.0 * balls[sel].radius + EPS, t);
            if ev.activated.is_some() {
                lemma_activations.hit(badness <= 12.0 * (balls[sel].radius / 2.0) + EPS, t);
            }
        }

        // apply the round
        if (checks.concentration || checks.surrogates) && is_static {
            // stats of the selected ball change; update its status
            if violating[sel] {
                current_violations -= 1;
            }
        }
        n[sel] += 1;
        sum[sel] += row.payoff;
        if (checks.concentration || checks.surrogates) && is_static {
            let st = conc_status(&balls[sel], n[sel], sum[sel] / n[sel] as f64);
            violating[sel] = st;
            if st {
                current_violations += 1;
            }
        }
        per_ball_regret[sel] += row.inst_regret;
        if let Some(a) = &ev.activated {
            balls.push(Ball::new(a.center, a.radius));
            parent.push(Some(a.parent));
            n.push(0);
            sum.push(0.0);
            per_ball_regret.push(0.0);
            if (checks.concentration || checks.surrogates) && is_static {
                violating.push(false);
            }
        }
        if (checks.concentration || checks.surrogates) && is_static {
            concentration.bulk(balls.len() as u64, current_violations, t);
        }
    }

    if checks.invariants {
        // radii dyadic, parent lineage
        for (i, b) in balls.iter().enumerate() {
            let mut ok = true;
            let mut r = 1.0f64;
            while r > b.radius + EPS {
                r /= 2.0;
            }
            ok &= (r - b.radius).abs() <= EPS;
            if let Some(p) = parent[i] {
                ok &= p < i && (balls[p].radius - 2.0 * b.radius).abs() <= EPS;
            }
            lineage.hit(ok, log.rows.len());
        }
        // the final active set must cover every feasible pair
        for &p in &feasible {
            let ok = balls.iter().any(|b| product.dist(b.center, p) <= b.radius + EPS);
            covering.hit(ok, log.rows.len());
        }
        // bookkeeping identity: per-ball regret sums to the total
        let total: f64 = per_ball_regret.iter().sum();
        decomposition.hit((total - log.total_regret).abs() <= 1e-6, log.rows.len());
        out.push(domain.into_result());
        out.push(discipline.into_result());
        out.push(separation.into_result());
        out.push(lineage.into_result());
        out.push(covering.into_result());
        out.push(decomposition.into_result());
    }
    let clean = concentration.violations == 0;
    if checks.concentration {
        if is_static {
            let mut c = std::mem::replace(&mut concentration, Counter::new("zoom-concentration"));
            c.detail = format!("clean={clean}");
            out.push(c.into_fraction_result(1e-3));
        } else {
            out.push(CheckResult::pass(
                "zoom-concentration",
                0,
                "skipped: adversarial payoff table has no fixed ball means",
            ));
        }
    }
    if checks.surrogates {
        if !is_static {
            out.push(CheckResult::pass(
                "zoom-clean-round-badness",
                0,
                "skipped: requires exact time-invariant payoffs",
            ));
        } else if clean {
            lemma_rounds.detail = "clean run".into();
            lemma_activations.detail = "clean run".into();
            out.push(lemma_rounds.into_result());
            out.push(lemma_activations.into_result());
        } else {
            out.push(CheckResult::pass(
                "zoom-clean-round-badness",
                lemma_rounds.events,
                "skipped: run was not clean",
            ));
            out.push(CheckResult::pass(
                "zoom-clean-activation-badness",
                lemma_activations.events,
                "skipped: run was not clean",
            ));
        }
    }
    AuditReport { checks: out }
}

fn zoom_snapshot_audit(snap: &ZoomSnapshot) -> AuditReport {
    let mut separation = Counter::new("zoom-separation");
    let mut lineage = Counter::new("zoom-parent-lineage");
    let mut covering = Counter::new("zoom-covering");
    let mut stats = Counter::new("zoom-stats-sane");
    let space = &snap.space;
    for (i, rec) in snap.balls.iter().enumerate() {
        for other in snap.balls.iter().skip(i + 1) {
            if (rec.ball.radius - other.ball.radius).abs() <= EPS {
                separation.hit(
                    space.dist(rec.ball.center, other.ball.center) > rec.ball.radius,
                    rec.activation_round,
                );
            }
        }
        let mut r = 1.0f64;
        while r > rec.ball.radius + EPS {
            r /= 2.0;
        }
        let mut ok = (r - rec.ball.radius).abs() <= EPS;
        if let Some(p) = rec.parent {
            ok &= p < i
                && (snap.balls[p].ball.radius - 2.0 * rec.ball.radius).abs() <= EPS
                && snap.balls[p].activation_round <= rec.activation_round;
        }
        lineage.hit(ok, rec.activation_round);
        stats.hit(
            rec.payoff_sum >= -EPS && rec.payoff_sum <= rec.n as f64 + EPS,
            rec.activation_round,
        );
    }
    for &p in &snap.feasible_pairs {
        covering.hit(
            snap.balls
                .iter()
                .any(|b| space.dist(b.ball.center, p) <= b.ball.radius + EPS),
            0,
        );
    }
    AuditReport {
        checks: vec![
            separation.into_result(),
            lineage.into_result(),
            covering.into_result(),
            stats.into_result(),
        ],
    }
}

// ---------------------------------------------------------------------------
// Meta-algorithm
// ---------------------------------------------------------------------------

fn meta_audit(
    env: &Arc<EnvironmentInstance>,
    log: &RunLog,
    trace: &[MetaRoundTrace],
    checks: AuditChecks,
) -> AuditReport {
    let mut out = Vec::new();
    if trace.len() != log.rows.len() {
        out.push(CheckResult {
            name: "meta-trace-aligned".into(),
            passed: false,
            first_violation_round: None,
            events: 1,
            violations: 1,
            detail: format!("{} trace rounds vs {} rows", trace.len(), log.rows.len()),
        });
        return AuditReport { checks: out };
    }
    let (c_y, d_y) = match &log.spec {
        AlgorithmSpec::Meta { c_y, d_y, .. } => (*c_y, *d_y),
        _ => (1.0, 0.0),
    };
    let space = &env.context_space;

    let mut balls: Vec<Ball> = vec![Ball::new(0, 1.0)];
    let mut hits: Vec<u64> = vec![0];
    let mut full: Vec<bool> = vec![false];
    let mut children: Vec<u64> = vec![0];
    let mut parent: Vec<Option<usize>> = vec![None];
    let mut per_ball_regret: Vec<f64> = vec![0.0];

    let mut one_hit = Counter::new("meta-exactly-one-hit");
    let mut budget = Counter::new("meta-hit-budget");
    let mut activation = Counter::new("meta-activation-rule");
    let mut separation = Counter::new("meta-separation");
    let mut decomposition = Counter::new("meta-regret-decomposition");

    for (t, (ev, row)) in trace.iter().zip(&log.rows).enumerate() {
        let ctx = row.context;
        let containing: Vec<usize> = (0..balls.len())
            .filter(|&i| balls[i].contains(space, ctx))
            .collect();
        let all_full = containing.iter().all(|&i| full[i]);
        if checks.invariants {
            let act_ok = match &ev.activated {
                Some(a) => {
                    // must fire only when everything containing ctx is full,
                    // splitting the smallest such ball (ties earliest)
                    let expected_parent = containing
                        .iter()
                        .filter(|&&i| full[i])
                        .min_by(|&&x, &&y| {
                            balls[x]
                                .radius
                                .partial_cmp(&balls[y].radius)
                                .unwrap()
                                .then(x.cmp(&y))
                        })
                        .copied();
                    all_full
                        && a.center == ctx
                        && Some(a.parent) == expected_parent
                        && (a.radius - balls[a.parent].radius / 2.0).abs() <= EPS
                }
                None => !all_full,
            };
            activation.hit(act_ok, t);
            if let Some(a) = &ev.activated {
                let sep = balls
                    .iter()
                    .filter(|b| (b.radius - a.radius).abs() <= EPS)
                    .all(|b| space.dist(b.center, a.center) > a.radius);
                separation.hit(sep, t);
            }
        }
        if let Some(a) = &ev.activated {
            children[a.parent] += 1;
            balls.push(Ball::new(a.center, a.radius));
            hits.push(0);
            full.push(false);
            children.push(0);
            parent.push(Some(a.parent));
            per_ball_regret.push(0.0);
        }
        // hit rule: latest activation among active, non-full, containing
        let eligible: Vec<usize> = (0..balls.len())
            .filter(|&i| !full[i] && balls[i].contains(space, ctx))
            .collect();
        if checks.invariants {
            one_hit.hit(
                eligible.len() >= 1 && ev.hit == *eligible.last().unwrap(),
                t,
            );
        }
        if ev.hit >= balls.len() {
            break;
        }
        hits[ev.hit] += 1;
        per_ball_regret[ev.hit] += row.inst_regret;
        let b = t0(balls[ev.hit].radius, c_y, d_y);
        if checks.invariants {
            budget.hit(hits[ev.hit] <= b, t);
        }
        if hits[ev.hit] >= b {
            full[ev.hit] = true;
        }
    }

    if checks.invariants {
        // children bound vs the doubling constant of the arrivals
        let arrivals: Vec<usize> = log.rows.iter().map(|r| r.context).collect();
        let mut distinct = arrivals.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let mut children_bound = Counter::new("meta-children-bound");
        let mut full_count = Counter::new("meta-full-ball-count");
        if distinct.len() <= 500 {
            let cdbl = doubling_constant_estimate(space, &distinct) as u64;
            for &c in &children {
                children_bound.hit(c <= cdbl * cdbl, 0);
            }
            children_bound.detail = format!("doubling_constant={cdbl}");
            // full balls per radius vs the (r, T0(r))-covering number of
            // the arrivals; the relaxed variant with slack T0(r)/Cdbl is
            // reported alongside
            let mut radii: Vec<f64> = balls.iter().map(|b| b.radius).collect();
            radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
            radii.dedup();
            let mut details = Vec::new();
            for r in radii {
                let n_full = (0..balls.len())
                    .filter(|&i| full[i] && (balls[i].radius - r).abs() <= EPS)
                    .count();
                let k = t0(r, c_y, d_y);
                let bound = rk_covering_number(space, &arrivals, r, k);
                let relaxed_k = (k / (cdbl * cdbl).max(1)).max(1);
                let relaxed = rk_covering_number(space, &arrivals, r, relaxed_k);
                full_count.hit(n_full <= bound, 0);
                details.push(format!(
                    "r={r}: full={n_full} rk(T0)={bound} rk(T0/Cdbl^2)={relaxed}"
                ));
            }
            full_count.detail = details.join("; ");
        } else {
            children_bound.detail = "skipped: too many distinct arrivals".into();
            full_count.detail = children_bound.detail.clone();
        }
        let total: f64 = per_ball_regret.iter().sum();
        decomposition.hit((total - log.total_regret).abs() <= 1e-6, log.rows.len());
        out.push(one_hit.into_result());
        out.push(budget.into_result());
        out.push(activation.into_result());
        out.push(separation.into_result());
        out.push(children_bound.into_result());
        out.push(full_count.into_result());
        out.push(decomposition.into_result());
    }
    AuditReport { checks: out }
}

fn meta_snapshot_audit(snap: &MetaSnapshot) -> AuditReport {
    let mut separation = Counter::new("meta-separation");
    let mut budget = Counter::new("meta-hit-budget");
    let mut lineage = Counter::new("meta-parent-lineage");
    let space = &snap.context_space;
    for (i, v) in snap.balls.iter().enumerate() {
        for other in snap.balls.iter().skip(i + 1) {
            if (v.ball.radius - other.ball.radius).abs() <= EPS {
                separation.hit(space.dist(v.ball.center, other.ball.center) > v.ball.radius, 0);
            }
        }
        let b = t0(v.ball.radius, snap.config.c_y, snap.config.d_y);
        budget.hit(v.hits <= b && (v.full == (v.hits >= b)), v.activation_round);
        if let Some(p) = v.parent {
            lineage.hit(
                p < i && (snap.balls[p].ball.radius - 2.0 * v.ball.radius).abs() <= EPS,
                v.activation_round,
            );
        }
    }
    AuditReport {
        checks: vec![
            separation.into_result(),
            budget.into_result(),
            lineage.into_result(),
        ],
    }
}

// ---------------------------------------------------------------------------
// Taxonomy
// ---------------------------------------------------------------------------

fn tax_audit(
    env: &Arc<EnvironmentInstance>,
    log: &RunLog,
    trace: &[TaxRoundTrace],
    checks: AuditChecks,
) -> AuditReport {
    let mut out = Vec::new();
    let Some(tree) = env.taxonomy.clone() else {
        out.push(CheckResult {
            name: "tax-instance".into(),
            passed: false,
            first_violation_round: None,
            events: 1,
            violations: 1,
            detail: "run traced a taxonomy but the instance has none".into(),
        });
        return AuditReport { checks: out };
    };
    let q_hat = match &log.spec {
        AlgorithmSpec::Taxonomy { q_hat } => *q_hat,
        _ => {
            out.push(CheckResult::pass(
                "tax-config",
                0,
                "skipped: phase-based wrapper traces only its last phase",
            ));
            return AuditReport { checks: out };
        }
    };
    let cfg = TaxConfig {
        horizon: log.horizon.max(2),
        q_hat,
    };
    let k_a = cfg.k_a();
    let horizon = cfg.horizon as f64;
    let leaf_mu: Vec<f64> = (0..env.n_arms()).map(|a| env.mu(0, 0, a)).collect();
    let means = node_means(&tree, &leaf_mu);
    let weights = subtree_weights(&tree, &leaf_mu);
    let mu_best = leaf_mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n_nodes = tree.num_nodes();

    let mut n: Vec<u64> = vec![0; n_nodes];
    let mut sum: Vec<f64> = vec![0.0; n_nodes];
    let mut active: Vec<bool> = vec![false; n_nodes];
    active[tree.root()] = true;
    let mut retired = vec![false; n_nodes];
    let mut selections: Vec<u64> = vec![0; n_nodes];
    let mut per_node_regret: Vec<f64> = vec![0.0; n_nodes];

    // leaf counts per subtree for the partition check
    let mut leaf_count = vec![0usize; n_nodes];
    {
        let mut order = tree.topological_order();
        order.reverse();
        for &v in &order {
            leaf_count[v] = if tree.is_leaf(v) {
                1
            } else {
                tree.children(v).iter().map(|&c| leaf_count[c]).sum()
            };
        }
    }

    let internal: Vec<usize> = (0..n_nodes).filter(|&v| !tree.is_leaf(v)).collect();
    let internal_desc: Vec<Vec<usize>> = (0..n_nodes)
        .map(|v| {
            tree.subtree(v)
                .into_iter()
                .filter(|&u| !tree.is_leaf(u))
                .collect()
        })
        .collect();

    let estimate = |n: &[u64], sum: &[f64], v: usize| -> f64 {
        let mut best: f64 = 0.0;
        let cands: Vec<(f64, f64)> = internal_desc[v]
            .iter()
            .filter_map(|&u| {
                let rad = tax_confidence_radius(n[u], horizon);
                if rad < 1.0 {
                    let mean = if n[u] == 0 { 0.0 } else { sum[u] / n[u] as f64 };
                    Some((mean, rad))
                } else {
                    None
                }
            })
            .collect();
        for (i, &(m1, r1)) in cands.iter().enumerate() {
            for &(m2, r2) in cands.iter().skip(i + 1) {
                best = best.max((m1 - m2).abs() - r1 - r2);
            }
        }
        best
    };

    let mut invariant = Counter::new("tax-weight-invariant");
    let mut structure = Counter::new("tax-active-partition");
    let mut rebirth = Counter::new("tax-no-reactivation");
    let mut path_rule = Counter::new("tax-hit-path");
    let mut p1 = Counter::new("tax-concentration-p1");
    let mut p2 = Counter::new("tax-descent-p2");
    let mut deact_badness = Counter::new("tax-deactivation-badness");
    let mut selection_count = Counter::new("tax-selection-count-bound");
    let mut decomposition = Counter::new("tax-regret-decomposition");

    // P1 incremental state
    let mut p1_violating = vec![false; n_nodes];
    let mut p1_current: u64 = 0;
    let mut p1_sampled: u64 = 0;
    // P2 pair state over ancestor-descendant pairs
    struct Pair {
        v: usize,
        u: usize,
        prob: f64,
        premise: bool,
        violating: bool,
    }
    let mut pairs: Vec<Pair> = Vec::new();
    let mut pairs_of_v: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    let mut pairs_of_u: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    if checks.concentration || checks.surrogates {
        for &v in &internal {
            for u in tree.subtree(v) {
                if u == v {
                    continue;
                }
                let id = pairs.len();
                pairs.push(Pair {
                    v,
                    u,
                    prob: tree.descent_probability(v, u),
                    premise: false,
                    violating: false,
                });
                pairs_of_v[v].push(id);
                pairs_of_u[u].push(id);
            }
        }
    }
    let p2_threshold = 8.0 * horizon.ln();
    let mut p2_premise_count: u64 = 0;
    let mut p2_violation_count: u64 = 0;

    let mut clean_deactivations: Vec<(usize, usize)> = Vec::new(); // (round, node)
    let mut prev_selected: Option<usize> = None;

    for (t, (ev, row)) in trace.iter().zip(&log.rows).enumerate() {
        // S1 deactivations happen before selection
        let mut freshly_active: Vec<usize> = Vec::new();
        for &v in &ev.deactivated {
            let mut ok = active[v] && !tree.is_leaf(v) && !retired[v];
            active[v] = false;
            retired[v] = true;
            for &c in tree.children(v) {
                ok &= !retired[c];
                active[c] = true;
                freshly_active.push(c);
            }
            rebirth.hit(ok, t);
            clean_deactivations.push((t, v));
        }
        if checks.invariants {
            // invariant after S1 for every active internal node; estimates
            // recomputed from the reconstructed stats. Between full sweeps
            // it suffices to recheck the nodes whose estimate or radius
            // could have changed: the previously selected node (its subtree
            // absorbed last round's path) and children activated just now.
            let full_recompute = t % 97 == 0 || t + 1 == trace.len();
            if full_recompute {
                let mut ok = true;
                for &v in &internal {
                    if active[v] {
                        let est = estimate(&n, &sum, v);
                        ok &= est < k_a * tax_confidence_radius(n[v], horizon) + EPS;
                    }
                }
                invariant.hit(ok, t);
            } else {
                let mut suspects = freshly_active.clone();
                suspects.extend(prev_selected);
                for v in suspects {
                    if active[v] && !tree.is_leaf(v) {
                        let est = estimate(&n, &sum, v);
                        invariant.hit(
                            est < k_a * tax_confidence_radius(n[v], horizon) + EPS,
                            t,
                        );
                    }
                }
            }
            // active set partitions the leaves
            let total: usize = (0..n_nodes).filter(|&v| active[v]).map(|v| leaf_count[v]).sum();
            structure.hit(total == tree.num_leaves(), t);
            // selection legality + the hit path matches the logged arm
            let leaf_ok = tree.arm_of_leaf(ev.leaf) == Some(row.arm);
            path_rule.hit(
                active[ev.selected] && leaf_ok && tree.is_ancestor_or_self(ev.selected, ev.leaf),
                t,
            );
        }

        // apply stats along the path
        prev_selected = Some(ev.selected);
        let path = tree.path_down(ev.selected, ev.leaf);
        selections[ev.selected] += 1;
        per_node_regret[ev.selected] += row.inst_regret;
        for &u in &path {
            if checks.concentration || checks.surrogates {
                if p1_violating[u] {
                    p1_current -= 1;
                }
                if n[u] > 0 {
                    p1_sampled -= 1;
                }
            }
            n[u] += 1;
            sum[u] += row.payoff;
            if checks.concentration || checks.surrogates {
                let mean = sum[u] / n[u] as f64;
                let st = (mean - means[u]).abs() > tax_confidence_radius(n[u], horizon) + EPS;
                p1_violating[u] = st;
                if st {
                    p1_current += 1;
                }
                p1_sampled += 1;
            }
        }
        if checks.concentration || checks.surrogates {
            // refresh P2 pairs touched by this round's path
            let mut refresh = |id: usize, pairs: &mut Vec<Pair>| {
                let pr = &mut pairs[id];
                let was_premise = pr.premise;
                let was_viol = pr.violating;
                let mass = n[pr.v] as f64 * pr.prob;
                pr.premise = mass >= p2_threshold;
                pr.violating = pr.premise && (n[pr.u] as f64) < 0.5 * mass - EPS;
                match (was_premise, pr.premise) {
                    (false, true) => p2_premise_count += 1,
                    (true, false) => p2_premise_count -= 1,
                    _ => {}
                }
                match (was_viol, pr.violating) {
                    (false, true) => p2_violation_count += 1,
                    (true, false) => p2_violation_count -= 1,
                    _ => {}
                }
            };
            for &v in &path {
                for i in 0..pairs_of_v[v].len() {
                    let id = pairs_of_v[v][i];
                    refresh(id, &mut pairs);
                }
                for i in 0..pairs_of_u[v].len() {
                    let id = pairs_of_u[v][i];
                    refresh(id, &mut pairs);
                }
            }
            p1.bulk(p1_sampled, p1_current, t);
            p2.bulk(p2_premise_count, p2_violation_count, t);
        }
    }

    let clean = p1.violations == 0 && p2.violations == 0;
    if checks.invariants {
        let total: f64 = per_node_regret.iter().sum();
        decomposition.hit((total - log.total_regret).abs() <= 1e-6, log.rows.len());
        out.push(invariant.into_result());
        out.push(structure.into_result());
        out.push(rebirth.into_result());
        out.push(path_rule.into_result());
        out.push(decomposition.into_result());
    }
    if checks.concentration {
        let mut p1c = std::mem::replace(&mut p1, Counter::new("tax-concentration-p1"));
        p1c.detail = format!("clean={clean}");
        out.push(p1c.into_fraction_result(1e-3));
        out.push(p2.into_fraction_result(1e-3));
    }
    if checks.surrogates {
        if clean {
            for (t, v) in clean_deactivations {
                let badness = mu_best - means[v];
                deact_badness.hit(badness <= 4.0 * weights[v] + EPS, t);
            }
            let bound = 1e3 * k_a * k_a * horizon.ln();
            for v in 0..n_nodes {
                if selections[v] > 0 {
                    let badness = mu_best - means[v];
                    selection_count.hit(
                        selections[v] as f64 * badness * badness <= bound + EPS,
                        log.rows.len(),
                    );
                }
            }
            deact_badness.detail = "clean run".into();
            selection_count.detail = "clean run".into();
            out.push(deact_badness.into_result());
            out.push(selection_count.into_result());
        } else {
            out.push(CheckResult::pass(
                "tax-deactivation-badness",
                0,
                "skipped: run was not clean",
            ));
            out.push(CheckResult::pass(
                "tax-selection-count-bound",
                0,
                "skipped: run was not clean",
            ));
        }
    }
    AuditReport { checks: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::generators::{make_random_taxonomy, make_tilted_tent};
    use crate::harness::{run_experiment, AlgorithmSpec};
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn zoom_audit_passes_on_correct_build() {
        let env = Arc::new(make_tilted_tent(17).unwrap());
        let log = run_experiment(&env, &AlgorithmSpec::Zooming, 2_000, 0, true).unwrap();
        let report = audit(AuditSubject::Run { env: &env, log: &log }, AuditChecks::all());
        assert!(report.passed(), "{}", report.render());
    }

    #[test]
    fn zoom_audit_flags_missing_activation() {
        // trace surgery: drop an activation event, as a faulty build that
        // skips child activation would
        let env = Arc::new(make_tilted_tent(17).unwrap());
        let mut log = run_experiment(&env, &AlgorithmSpec::Zooming, 2_000, 0, true).unwrap();
        let AlgoTrace::Zooming(trace) = &mut log.trace else {
            panic!()
        };
        let victim = trace
            .iter()
            .position(|ev| ev.activated.is_some())
            .expect("a 2000-round run activates children");
        trace[victim].activated = None;
        // drop all later events referencing balls that no longer exist
        let report = audit(
            AuditSubject::Run { env: &env, log: &log },
            AuditChecks {
                invariants: true,
                concentration: false,
                surrogates: false,
            },
        );
        let discipline = report.get("zoom-activation-discipline").unwrap();
        assert!(!discipline.passed);
        assert_eq!(discipline.first_violation_round, Some(victim));
    }

    #[test]
    fn meta_audit_passes_on_correct_build() {
        let env = Arc::new(make_tilted_tent(17).unwrap());
        let spec = AlgorithmSpec::Meta {
            c_y: 1.0,
            d_y: 0.0,
            arm_net_radius: 0.25,
            subroutine: crate::meta::SubroutineKind::Exp3,
        };
        let log = run_experiment(&env, &spec, 5_000, 1, true).unwrap();
        let report = audit(AuditSubject::Run { env: &env, log: &log }, AuditChecks::all());
        assert!(report.passed(), "{}", report.render());
    }

    #[test]
    fn tax_audit_passes_on_correct_build() {
        let mut rng = stream_rng(0, Stream::InstanceGen);
        let env = Arc::new(make_random_taxonomy(16, 3, &mut rng).unwrap());
        let log = run_experiment(
            &env,
            &AlgorithmSpec::Taxonomy { q_hat: 0.25 },
            3_000,
            2,
            true,
        )
        .unwrap();
        let report = audit(AuditSubject::Run { env: &env, log: &log }, AuditChecks::all());
        assert!(report.passed(), "{}", report.render());
    }

    #[test]
    fn snapshot_audit_roundtrip() {
        let env = Arc::new(make_tilted_tent(9).unwrap());
        let log = run_experiment(&env, &AlgorithmSpec::Zooming, 500, 0, true).unwrap();
        let snap = log.snapshot.expect("zooming exports snapshots");
        let report = audit(AuditSubject::Snapshot(&snap), AuditChecks::all());
        assert!(report.passed(), "{}", report.render());
    }
}
