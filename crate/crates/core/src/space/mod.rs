//! Metric-space primitives.
//!
//! Finite point sets with a distance truncated at 1. Continuous spaces enter
//! only through explicit discretization grids; distances are either stored
//! densely (small spaces) or computed on demand from an analytic descriptor.
//!
//! Distances are pseudometrics: `dist(p, p) = 0`, symmetry and the triangle
//! inequality are required, but two distinct points may sit at distance 0
//! (the sleeping-bandit context space uses exactly that).

mod cover;
mod oracle;

pub use cover::{
    build_r_net, covering_number, covering_number_exact, doubling_constant_estimate,
    packing_number, r_net_is_valid, EXACT_COVER_MAX_POINTS,
};
pub use oracle::{near_optimal_covering_number, zooming_number};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{unit_uniform, Stream};

/// Role of a space inside a problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    Context,
    Arms,
    Product,
    Custom,
}

/// Temporal metric shape for drifting environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftShape {
    /// `min(1, sigma * |t - t'|)`: bounded change per round.
    Linear,
    /// `min(1, sigma * sqrt(|t - t'|))`: random-walk style drift.
    Sqrt,
}

/// How distances are computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Metric {
    /// Explicit row-major `n x n` distance matrix.
    Dense { n: usize, dist: Vec<f64> },
    /// Points on a line at the given coordinates, `min(1, |a - b|)`.
    Line { coords: Vec<f64> },
    /// `0` between equal points, `gap` otherwise.
    Discrete { len: usize, gap: f64 },
    /// Rounds `0..len` with a temporal drift metric.
    Drift {
        len: usize,
        sigma: f64,
        shape: DriftShape,
    },
    /// Product of two spaces: `min(1, d_x + d_y)`, points indexed row-major.
    Product {
        x: Arc<SimilaritySpace>,
        y: Arc<SimilaritySpace>,
    },
}

/// A finite (pseudo)metric space with a declared covering dimension.
///
/// The declared dimension is what horizon-tuned algorithms (the uniform
/// algorithm's net granularity) read; it is a descriptor, not something
/// estimated from the points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySpace {
    pub kind: SpaceKind,
    pub metric: Metric,
    pub covering_dim: f64,
}

impl SimilaritySpace {
    /// Evenly spaced `n`-point grid on `[0, 1]`.
    pub fn line_grid(n: usize, kind: SpaceKind) -> Self {
        assert!(n >= 1);
        let coords = if n == 1 {
            vec![0.0]
        } else {
            (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
        };
        SimilaritySpace {
            kind,
            metric: Metric::Line { coords },
            covering_dim: 1.0,
        }
    }

    /// Points on a line at explicit coordinates.
    pub fn line(coords: Vec<f64>, kind: SpaceKind) -> Self {
        SimilaritySpace {
            kind,
            metric: Metric::Line { coords },
            covering_dim: 1.0,
        }
    }

    /// `len` points with the uniform `gap` metric. `gap = 1` models an arm
    /// set without similarity information; `gap = 0` a context set that
    /// carries none (sleeping bandits).
    pub fn discrete(len: usize, gap: f64, kind: SpaceKind) -> Self {
        SimilaritySpace {
            kind,
            metric: Metric::Discrete { len, gap },
            covering_dim: 0.0,
        }
    }

    /// Temporal context space for drifting environments.
    pub fn drift(len: usize, sigma: f64, shape: DriftShape) -> Self {
        SimilaritySpace {
            kind: SpaceKind::Context,
            metric: Metric::Drift { len, sigma, shape },
            covering_dim: match shape {
                DriftShape::Linear => 1.0,
                DriftShape::Sqrt => 2.0,
            },
        }
    }

    /// Space backed by an explicit distance matrix. Validates the metric
    /// axioms exhaustively (the matrix is desk-scale by construction).
    pub fn dense(dist: Vec<f64>, kind: SpaceKind, covering_dim: f64) -> Result<Self> {
        let n2 = dist.len();
        let n = (n2 as f64).sqrt().round() as usize;
        if n * n != n2 {
            return Err(Error::parameter("dense metric: matrix is not square"));
        }
        let space = SimilaritySpace {
            kind,
            metric: Metric::Dense { n, dist },
            covering_dim,
        };
        space.validate_metric(0)?;
        Ok(space)
    }

    /// Product space over `(x, y)` pairs with `min(1, d_x + d_y)`.
    pub fn product(x: Arc<SimilaritySpace>, y: Arc<SimilaritySpace>) -> Self {
        let covering_dim = x.covering_dim + y.covering_dim;
        SimilaritySpace {
            kind: SpaceKind::Product,
            metric: Metric::Product { x, y },
            covering_dim,
        }
    }

    pub fn len(&self) -> usize {
        match &self.metric {
            Metric::Dense { n, .. } => *n,
            Metric::Line { coords } => coords.len(),
            Metric::Discrete { len, .. } => *len,
            Metric::Drift { len, .. } => *len,
            Metric::Product { x, y } => x.len() * y.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Distance between two points, truncated at 1.
    pub fn dist(&self, a: usize, b: usize) -> f64 {
        match &self.metric {
            Metric::Dense { n, dist } => dist[a * n + b],
            Metric::Line { coords } => (coords[a] - coords[b]).abs().min(1.0),
            Metric::Discrete { gap, .. } => {
                if a == b {
                    0.0
                } else {
                    *gap
                }
            }
            Metric::Drift { sigma, shape, .. } => {
                let gap = (a as f64 - b as f64).abs();
                let raw = match shape {
                    DriftShape::Linear => sigma * gap,
                    DriftShape::Sqrt => sigma * gap.sqrt(),
                };
                raw.min(1.0)
            }
            Metric::Product { x, y } => {
                let yl = y.len();
                let (ax, ay) = (a / yl, a % yl);
                let (bx, by) = (b / yl, b % yl);
                (x.dist(ax, bx) + y.dist(ay, by)).min(1.0)
            }
        }
    }

    /// For product spaces: split a pair index into `(x, y)`.
    pub fn split_pair(&self, p: usize) -> (usize, usize) {
        match &self.metric {
            Metric::Product { y, .. } => (p / y.len(), p % y.len()),
            _ => panic!("split_pair on a non-product space"),
        }
    }

    /// For product spaces: combine component indices into a pair index.
    pub fn pair_index(&self, x: usize, y: usize) -> usize {
        match &self.metric {
            Metric::Product { y: ys, .. } => x * ys.len() + y,
            _ => panic!("pair_index on a non-product space"),
        }
    }

    /// Check the (pseudo)metric axioms: `d(p,p) = 0`, symmetry, triangle
    /// inequality and truncation at 1. Exhaustive over all triples when the
    /// space has at most 200 points, otherwise checks 10^5 sampled triples.
    pub fn validate_metric(&self, sample_seed: u64) -> Result<()> {
        const EPS: f64 = 1e-9;
        let n = self.len();
        if n == 0 {
            return Err(Error::Metric("empty point set".into()));
        }
        let check_triple = |a: usize, b: usize, c: usize| -> Result<()> {
            let dab = self.dist(a, b);
            let dba = self.dist(b, a);
            let dac = self.dist(a, c);
            let dbc = self.dist(b, c);
            if a == b && dab.abs() > EPS {
                return Err(Error::Metric(format!("d({a},{a}) = {dab} != 0")));
            }
            if (dab - dba).abs() > EPS {
                return Err(Error::Metric(format!("asymmetric: d({a},{b}) != d({b},{a})")));
            }
            if dab > 1.0 + EPS || dab < -EPS {
                return Err(Error::Metric(format!("d({a},{b}) = {dab} outside [0,1]")));
            }
            if dac > dab + dbc + EPS {
                return Err(Error::Metric(format!(
                    "triangle violated: d({a},{c}) = {dac} > d({a},{b}) + d({b},{c}) = {}",
                    dab + dbc
                )));
            }
            Ok(())
        };
        if n <= 200 {
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        check_triple(a, b, c)?;
                    }
                }
            }
        } else {
            for i in 0..100_000u64 {
                let a = (unit_uniform(sample_seed, Stream::InstanceGen, 3 * i) * n as f64) as usize;
                let b =
                    (unit_uniform(sample_seed, Stream::InstanceGen, 3 * i + 1) * n as f64) as usize;
                let c =
                    (unit_uniform(sample_seed, Stream::InstanceGen, 3 * i + 2) * n as f64) as usize;
                check_triple(a.min(n - 1), b.min(n - 1), c.min(n - 1))?;
            }
        }
        Ok(())
    }
}

/// A ball is identified by its (center, radius) pair, never by its point
/// set: two balls with equal point sets but different centers are distinct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: usize,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: usize, radius: f64) -> Self {
        Ball { center, radius }
    }

    /// Closed-ball membership: `dist(center, p) <= radius`.
    pub fn contains(&self, space: &SimilaritySpace, p: usize) -> bool {
        space.dist(self.center, p) <= self.radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_grid_distances() {
        let s = SimilaritySpace::line_grid(101, SpaceKind::Context);
        assert_eq!(s.len(), 101);
        assert!((s.dist(0, 100) - 1.0).abs() < 1e-12);
        assert!((s.dist(0, 25) - 0.25).abs() < 1e-12);
        s.validate_metric(0).unwrap();
    }

    #[test]
    fn product_truncates_at_one() {
        let x = Arc::new(SimilaritySpace::line_grid(11, SpaceKind::Context));
        let y = Arc::new(SimilaritySpace::line_grid(11, SpaceKind::Arms));
        let p = SimilaritySpace::product(x, y);
        let a = p.pair_index(0, 0);
        let b = p.pair_index(10, 10);
        assert_eq!(p.dist(a, b), 1.0);
        let c = p.pair_index(2, 3);
        assert!((p.dist(a, c) - 0.5).abs() < 1e-12);
        assert_eq!(p.split_pair(c), (2, 3));
        p.validate_metric(0).unwrap();
    }

    #[test]
    fn discrete_zero_gap_is_a_valid_pseudometric() {
        let s = SimilaritySpace::discrete(5, 0.0, SpaceKind::Context);
        assert_eq!(s.dist(1, 4), 0.0);
        s.validate_metric(0).unwrap();
    }

    #[test]
    fn drift_metric_shapes() {
        let lin = SimilaritySpace::drift(1000, 0.01, DriftShape::Linear);
        assert!((lin.dist(0, 10) - 0.1).abs() < 1e-12);
        assert_eq!(lin.dist(0, 200), 1.0);
        let sq = SimilaritySpace::drift(1000, 0.01, DriftShape::Sqrt);
        assert!((sq.dist(0, 100) - 0.1).abs() < 1e-12);
        sq.validate_metric(0).unwrap();
    }

    #[test]
    fn dense_rejects_asymmetric_matrix() {
        let dist = vec![0.0, 0.4, 0.5, 0.0];
        assert!(SimilaritySpace::dense(dist, SpaceKind::Custom, 1.0).is_err());
    }

    #[test]
    fn balls_are_closed() {
        let s = SimilaritySpace::line_grid(11, SpaceKind::Context);
        let b = Ball::new(5, 0.2);
        assert!(b.contains(&s, 3));
        assert!(b.contains(&s, 7));
        assert!(!b.contains(&s, 8));
    }

    #[test]
    fn large_space_sampled_validation() {
        let s = SimilaritySpace::drift(50_000, 0.01, DriftShape::Sqrt);
        s.validate_metric(7).unwrap();
    }
}
