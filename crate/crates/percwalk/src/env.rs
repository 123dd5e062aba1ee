//! Lazy percolation environments on `Z^d` with cluster queries and the
//! finite-radius proxy for membership in the infinite cluster.
//!
//! An [`Environment`] is just `(seed, p, d)`; openness of any edge is a pure
//! function of that triple and the canonical [`EdgeId`], so environments are
//! immutable values that many workers can query concurrently. "The origin
//! lies in the infinite cluster" is proxied by its open cluster reaching the
//! l-infinity shell at a configurable radius; in the supercritical phase the
//! proxy error decays exponentially in the radius.

use crate::lattice::{point, shifted, EdgeId, Point};
use crate::prf::{derive_seed, edge_hash, unit_uniform, PRF_ALGORITHM, PRF_VERSION};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("p must lie in [0,1], got {0}")]
    BadP(f64),
    #[error("dimension must be at least 2, got {0}")]
    BadDimension(usize),
    #[error("rejection sampling gave up after {attempts} attempts; p is likely subcritical or r_check pathological")]
    AttemptCapExceeded { attempts: u64 },
    #[error("ball of radius {radius} in dimension {dim} exceeds the dense-grid budget")]
    BallTooLarge { radius: i64, dim: usize },
}

/// Read access to an edge configuration. Implementations must be pure:
/// repeated queries agree, and the fingerprint identifies the configuration
/// for provenance checks on derived data.
pub trait Percolation {
    fn dim(&self) -> usize;
    fn is_open(&self, e: &EdgeId) -> bool;
    /// Stable identity of this configuration (base environment plus any
    /// edge overrides), used to detect trajectory/environment mismatches.
    fn fingerprint(&self) -> u64;

    fn is_open_between(&self, x: &[i64], y: &[i64]) -> bool {
        match EdgeId::between(x, y) {
            Ok(e) => self.is_open(&e),
            Err(_) => false,
        }
    }
}

/// Bernoulli bond percolation environment keyed by `(seed, p, d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    seed: u64,
    p: f64,
    d: usize,
}

impl Environment {
    pub fn new(seed: u64, p: f64, d: usize) -> Result<Self, EnvError> {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(EnvError::BadP(p));
        }
        if d < 2 {
            return Err(EnvError::BadDimension(d));
        }
        Ok(Environment { seed, p, d })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Serializable description: the `(seed, p, d)` triple plus the PRF
    /// algorithm identifier and version. Persisted experiments embed this so
    /// results are reproducible.
    pub fn spec(&self) -> EnvSpec {
        EnvSpec {
            seed: self.seed,
            p: self.p,
            d: self.d,
            prf: PRF_ALGORITHM.to_string(),
            prf_version: PRF_VERSION.to_string(),
        }
    }

    /// View of this environment with the given edges forced closed.
    pub fn with_closed(&self, closed: Vec<EdgeId>) -> ClosedEdgeView<'_, Environment> {
        ClosedEdgeView {
            inner: self,
            closed,
        }
    }
}

impl Percolation for Environment {
    fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    fn is_open(&self, e: &EdgeId) -> bool {
        debug_assert!((e.axis as usize) < self.d && e.base.len() == self.d);
        unit_uniform(edge_hash(self.seed, &e.base, e.axis)) < self.p
    }

    fn fingerprint(&self) -> u64 {
        let mut h = derive_seed(self.seed, self.d as u64);
        h = derive_seed(h, self.p.to_bits());
        h
    }
}

/// Serialized identity of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub seed: u64,
    pub p: f64,
    pub d: usize,
    pub prf: String,
    pub prf_version: String,
}

/// `omega` with a set of edges forced closed; composable (a view of a view
/// closes the union).
#[derive(Debug, Clone)]
pub struct ClosedEdgeView<'a, E: Percolation> {
    inner: &'a E,
    closed: Vec<EdgeId>,
}

impl<'a, E: Percolation> ClosedEdgeView<'a, E> {
    pub fn new(inner: &'a E, closed: Vec<EdgeId>) -> Self {
        ClosedEdgeView { inner, closed }
    }

    pub fn and_closed(&self, more: Vec<EdgeId>) -> ClosedEdgeView<'_, Self> {
        ClosedEdgeView {
            inner: self,
            closed: more,
        }
    }
}

impl<E: Percolation> Percolation for ClosedEdgeView<'_, E> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn is_open(&self, e: &EdgeId) -> bool {
        if self.closed.contains(e) {
            return false;
        }
        self.inner.is_open(e)
    }

    fn fingerprint(&self) -> u64 {
        let mut h = self.inner.fingerprint();
        for e in &self.closed {
            for &c in &e.base {
                h = derive_seed(h, c as u64);
            }
            h = derive_seed(h, e.axis as u64);
        }
        h
    }
}

/// Open neighbours of `x` in deterministic order: axis ascending, the minus
/// direction before the plus direction.
pub fn open_neighbors<E: Percolation>(env: &E, x: &[i64]) -> Vec<Point> {
    let d = env.dim();
    let mut out = Vec::with_capacity(2 * d);
    for axis in 0..d {
        let minus = shifted(x, axis, -1);
        if env.is_open(&EdgeId::from_base_axis(minus.clone(), axis)) {
            out.push(minus);
        }
        if env.is_open(&EdgeId::from_base_axis(point(x), axis)) {
            out.push(shifted(x, axis, 1));
        }
    }
    out
}

/// Dense index over the l-infinity ball of radius `r` around a centre.
/// Used as the visited structure for every ball-bounded search; no hashing.
pub struct BallGrid {
    center: Point,
    radius: i64,
    side: usize,
    len: usize,
}

/// Dense-grid budget: balls whose cell count exceeds this are refused.
pub const MAX_GRID_CELLS: usize = 1 << 25;

impl BallGrid {
    pub fn new(center: &[i64], radius: i64) -> Result<Self, EnvError> {
        let dim = center.len();
        let side = (2 * radius + 1) as usize;
        let mut len: usize = 1;
        for _ in 0..dim {
            len = len.saturating_mul(side);
            if len > MAX_GRID_CELLS {
                return Err(EnvError::BallTooLarge { radius, dim });
            }
        }
        Ok(BallGrid {
            center: point(center),
            radius,
            side,
            len,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    /// Dense index of `x`, or `None` when outside the ball.
    #[inline]
    pub fn index(&self, x: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for (c, ctr) in x.iter().zip(&self.center) {
            let off = c - ctr + self.radius;
            if off < 0 || off > 2 * self.radius {
                return None;
            }
            idx = idx * self.side + off as usize;
        }
        Some(idx)
    }

    /// True when `x` lies on the boundary shell of the ball.
    #[inline]
    pub fn on_shell(&self, x: &[i64]) -> bool {
        x.iter()
            .zip(&self.center)
            .any(|(c, ctr)| (c - ctr).abs() == self.radius)
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        self.index(x).is_some()
    }
}

/// Result of a truncated cluster exploration.
pub struct ClusterBall {
    /// Cluster vertices in BFS discovery order.
    pub vertices: Vec<Point>,
    /// True iff some cluster vertex lies on the radius-R shell.
    pub reached_shell: bool,
}

/// Open cluster of `x` intersected with the l-infinity ball of radius `r`.
/// Exploration is truncated at the shell: shell vertices are collected but
/// not expanded.
pub fn cluster_bfs<E: Percolation>(env: &E, x: &[i64], r: i64) -> Result<ClusterBall, EnvError> {
    assert!(r >= 0, "radius must be nonnegative");
    let grid = BallGrid::new(x, r)?;
    let mut visited = vec![false; grid.len()];
    let mut queue = VecDeque::new();
    let mut vertices = Vec::new();
    let mut reached_shell = false;

    visited[grid.index(x).expect("centre in ball")] = true;
    queue.push_back(point(x));
    while let Some(v) = queue.pop_front() {
        let on_shell = grid.on_shell(&v);
        reached_shell |= on_shell;
        vertices.push(v.clone());
        if on_shell {
            continue;
        }
        for nb in open_neighbors(env, &v) {
            if let Some(i) = grid.index(&nb) {
                if !visited[i] {
                    visited[i] = true;
                    queue.push_back(nb);
                }
            }
        }
    }
    Ok(ClusterBall {
        vertices,
        reached_shell,
    })
}

/// Early-exit variant of [`cluster_bfs`] answering only `reached_shell`.
/// Identical answer; stops at the first shell contact.
pub fn reaches_shell<E: Percolation>(env: &E, x: &[i64], r: i64) -> Result<bool, EnvError> {
    assert!(r >= 0);
    if r == 0 {
        return Ok(true);
    }
    let grid = BallGrid::new(x, r)?;
    let mut visited = vec![false; grid.len()];
    let mut queue = VecDeque::new();
    visited[grid.index(x).expect("centre in ball")] = true;
    queue.push_back(point(x));
    while let Some(v) = queue.pop_front() {
        if grid.on_shell(&v) {
            return Ok(true);
        }
        for nb in open_neighbors(env, &v) {
            if let Some(i) = grid.index(&nb) {
                if !visited[i] {
                    visited[i] = true;
                    queue.push_back(nb);
                }
            }
        }
    }
    Ok(false)
}

/// Finite proxy for "x is in the unique infinite cluster": the open cluster
/// of `x` reaches the shell at `r_check`. False positives decay with
/// `r_check` in the supercritical phase.
pub fn in_infinite_cluster<E: Percolation>(env: &E, x: &[i64], r_check: i64) -> bool {
    assert!(r_check >= 1);
    reaches_shell(env, x, r_check).expect("r_check within grid budget")
}

/// Default shell radius for the infinite-cluster proxy.
pub const DEFAULT_R_CHECK: i64 = 64;
/// Default attempt cap for rejection sampling of conditioned environments.
pub const DEFAULT_ATTEMPT_CAP: u64 = 100_000;

/// An environment drawn from the measure conditioned on the origin lying in
/// the infinite cluster (proxy), plus the rejection count it took.
#[derive(Debug, Clone)]
pub struct Conditioned {
    pub env: Environment,
    pub rejections: u64,
}

/// Rejection sampling of the conditioned measure: candidate environments are
/// keyed by `derive_seed(stream_seed, attempt)` and the first one whose
/// origin passes the infinite-cluster proxy is returned.
pub fn sample_conditioned(
    stream_seed: u64,
    p: f64,
    d: usize,
    r_check: i64,
    attempt_cap: u64,
) -> Result<Conditioned, EnvError> {
    let origin = vec![0i64; d];
    for attempt in 0..attempt_cap {
        let env = Environment::new(derive_seed(stream_seed, attempt), p, d)?;
        if in_infinite_cluster(&env, &origin, r_check) {
            return Ok(Conditioned {
                env,
                rejections: attempt,
            });
        }
    }
    Err(EnvError::AttemptCapExceeded {
        attempts: attempt_cap,
    })
}

/// All 2d lattice neighbours of `x` (open or not), in canonical order.
pub fn all_neighbors(x: &[i64]) -> Vec<Point> {
    let d = x.len();
    let mut out = Vec::with_capacity(2 * d);
    for axis in 0..d {
        out.push(shifted(x, axis, -1));
        out.push(shifted(x, axis, 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(seed: u64, d: usize) -> Environment {
        Environment::new(seed, 1.0, d).unwrap()
    }

    fn empty(seed: u64, d: usize) -> Environment {
        Environment::new(seed, 0.0, d).unwrap()
    }

    #[test]
    fn degenerate_measures() {
        let e = EdgeId::from_base_axis(point(&[3, -7]), 1);
        assert!(full(9, 2).is_open(&e));
        assert!(!empty(9, 2).is_open(&e));
    }

    #[test]
    fn openness_is_deterministic() {
        let env = Environment::new(123, 0.5, 3).unwrap();
        let e = EdgeId::from_base_axis(point(&[1, -2, 5]), 2);
        let first = env.is_open(&e);
        for _ in 0..10 {
            assert_eq!(env.is_open(&e), first);
        }
    }

    #[test]
    fn open_neighbors_full_lattice_order() {
        let env = full(1, 2);
        let nbs = open_neighbors(&env, &[0, 0]);
        assert_eq!(
            nbs,
            vec![
                point(&[-1, 0]),
                point(&[1, 0]),
                point(&[0, -1]),
                point(&[0, 1])
            ]
        );
        assert!(open_neighbors(&empty(1, 2), &[0, 0]).is_empty());
    }

    #[test]
    fn open_neighbors_matches_individual_edge_checks() {
        let env = Environment::new(77, 0.5, 2).unwrap();
        for trial in 0..50 {
            let x = point(&[trial - 25, 2 * trial]);
            let from_op = open_neighbors(&env, &x);
            let by_hand: Vec<Point> = all_neighbors(&x)
                .into_iter()
                .filter(|y| env.is_open(&EdgeId::between(&x, y).unwrap()))
                .collect();
            for y in &by_hand {
                assert!(from_op.contains(y));
            }
            assert_eq!(from_op.len(), by_hand.len());
        }
    }

    #[test]
    fn cluster_bfs_isolated_vertex() {
        let env = empty(5, 2);
        let ball = cluster_bfs(&env, &[2, 3], 4).unwrap();
        assert_eq!(ball.vertices, vec![point(&[2, 3])]);
        assert!(!ball.reached_shell);
    }

    #[test]
    fn cluster_bfs_full_lattice_radius_one_is_plus_shape() {
        let env = full(5, 2);
        let ball = cluster_bfs(&env, &[0, 0], 1).unwrap();
        assert!(ball.reached_shell);
        let mut got = ball.vertices.clone();
        got.sort();
        let mut want = vec![
            point(&[0, 0]),
            point(&[-1, 0]),
            point(&[1, 0]),
            point(&[0, -1]),
            point(&[0, 1]),
        ];
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn in_infinite_cluster_trivials() {
        assert!(in_infinite_cluster(&full(1, 2), &[0, 0], 8));
        assert!(!in_infinite_cluster(&empty(1, 2), &[0, 0], 8));
    }

    #[test]
    fn sample_conditioned_p1_accepts_first() {
        let c = sample_conditioned(42, 1.0, 2, 8, 10).unwrap();
        assert_eq!(c.rejections, 0);
    }

    #[test]
    fn sample_conditioned_subcritical_exceeds_cap() {
        let err = sample_conditioned(42, 0.05, 2, 32, 200).unwrap_err();
        assert_eq!(err, EnvError::AttemptCapExceeded { attempts: 200 });
    }

    #[test]
    fn closed_edge_view_masks_only_target() {
        let env = full(3, 2);
        let e = EdgeId::from_base_axis(point(&[0, 0]), 0);
        let view = env.with_closed(vec![e.clone()]);
        assert!(!view.is_open(&e));
        assert!(view.is_open(&EdgeId::from_base_axis(point(&[0, 0]), 1)));
        assert!(view.is_open(&EdgeId::from_base_axis(point(&[5, 5]), 0)));
        // closing an already-closed edge changes nothing
        let env0 = empty(3, 2);
        let view0 = env0.with_closed(vec![e.clone()]);
        for axis in 0..2 {
            let probe = EdgeId::from_base_axis(point(&[0, 0]), axis);
            assert_eq!(view0.is_open(&probe), env0.is_open(&probe));
        }
        // composition of views
        let e2 = EdgeId::from_base_axis(point(&[1, 0]), 1);
        let view2 = view.and_closed(vec![e2.clone()]);
        assert!(!view2.is_open(&e));
        assert!(!view2.is_open(&e2));
    }

    #[test]
    fn fingerprints_separate_configurations() {
        let a = Environment::new(1, 0.5, 2).unwrap();
        let b = Environment::new(2, 0.5, 2).unwrap();
        let c = Environment::new(1, 0.6, 2).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        let e = EdgeId::from_base_axis(point(&[0, 0]), 0);
        let view = a.with_closed(vec![e]);
        assert_ne!(a.fingerprint(), view.fingerprint());
    }

    #[test]
    fn env_spec_round_trip() {
        let env = Environment::new(11, 0.7, 2).unwrap();
        let spec = env.spec();
        assert_eq!(spec.prf, "splitmix64-edge");
        let js = serde_json::to_string(&spec).unwrap();
        let back: EnvSpec = serde_json::from_str(&js).unwrap();
        assert_eq!(back, spec);
    }
}
