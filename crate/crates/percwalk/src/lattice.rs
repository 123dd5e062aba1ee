//! Lattice geometry: vertices, canonical edges, and the bias direction.
//!
//! All level comparisons in the crate go through exact integer dot products
//! with the integer bias vector `v`; the physical level `x·l̂ = (x·v)/|v|` is
//! only materialised at reporting boundaries. Thresholds stated in physical
//! units are scaled by `|v|` and rounded outward with integer arithmetic so
//! that level ties are impossible.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

/// A lattice vertex. Inline storage covers d <= 4 without allocation.
pub type Point = SmallVec<[i64; 4]>;

/// Build a `Point` from a coordinate slice.
pub fn point(coords: &[i64]) -> Point {
    SmallVec::from_slice(coords)
}

/// The origin of `Z^d`.
pub fn origin(d: usize) -> Point {
    SmallVec::from_elem(0, d)
}

/// `sign * e_axis` as a point.
pub fn unit(d: usize, axis: usize, sign: i64) -> Point {
    let mut p = origin(d);
    p[axis] = sign;
    p
}

/// Component-wise sum.
pub fn add(x: &[i64], y: &[i64]) -> Point {
    x.iter().zip(y).map(|(a, b)| a + b).collect()
}

/// `x + sign * e_axis`.
pub fn shifted(x: &[i64], axis: usize, sign: i64) -> Point {
    let mut p = point(x);
    p[axis] += sign;
    p
}

/// l-infinity norm.
pub fn linf(x: &[i64]) -> i64 {
    x.iter().map(|c| c.abs()).max().unwrap_or(0)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("bias vector must be nonzero")]
    ZeroBias,
    #[error("dimension must be at least 2, got {0}")]
    BadDimension(usize),
    #[error("bias strength lambda must be positive, got {0}")]
    BadLambda(String),
    #[error("vertices {0:?} and {1:?} are not nearest neighbours")]
    NotAdjacent(String, String),
}

/// Canonical identifier of the nearest-neighbour edge `{base, base + e_axis}`.
///
/// `base` is always the lexicographically smaller endpoint, so every edge of
/// `Z^d` has exactly one `EdgeId`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeId {
    pub base: Point,
    pub axis: u8,
}

impl EdgeId {
    /// Edge `{base, base + e_axis}`.
    pub fn from_base_axis(base: Point, axis: usize) -> Self {
        debug_assert!(axis < base.len());
        EdgeId {
            base,
            axis: axis as u8,
        }
    }

    /// Canonical id of the edge between two nearest neighbours.
    pub fn between(x: &[i64], y: &[i64]) -> Result<Self, LatticeError> {
        if x.len() != y.len() {
            return Err(LatticeError::NotAdjacent(format!("{x:?}"), format!("{y:?}")));
        }
        let mut diff_axis = None;
        for (a, (&cx, &cy)) in x.iter().zip(y).enumerate() {
            match (cx - cy).abs() {
                0 => {}
                1 if diff_axis.is_none() => diff_axis = Some(a),
                _ => return Err(LatticeError::NotAdjacent(format!("{x:?}"), format!("{y:?}"))),
            }
        }
        let axis = diff_axis
            .ok_or_else(|| LatticeError::NotAdjacent(format!("{x:?}"), format!("{y:?}")))?;
        let base = if x[axis] < y[axis] { point(x) } else { point(y) };
        Ok(EdgeId::from_base_axis(base, axis))
    }

    /// The endpoint other than `base`.
    pub fn upper(&self) -> Point {
        shifted(&self.base, self.axis as usize, 1)
    }
}

/// Bias of the walk: an integer direction vector `v` and a strength
/// `lambda > 0`. The unit direction is `l̂ = v/|v|` and the bias vector is
/// `l = lambda * l̂`.
#[derive(Debug, Clone, Serialize)]
pub struct Direction {
    v: Vec<i64>,
    lambda: f64,
    #[serde(skip)]
    cache: DirCache,
}

impl<'de> Deserialize<'de> for Direction {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::de::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        struct Raw {
            v: Vec<i64>,
            lambda: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        Direction::new(raw.v, raw.lambda).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Default)]
struct DirCache {
    v2: i64,
    norm: f64,
    lead_axis: usize,
    lead_sign: i64,
    ceil_norm: i64,
}

impl Direction {
    pub fn new(v: Vec<i64>, lambda: f64) -> Result<Self, LatticeError> {
        if v.len() < 2 {
            return Err(LatticeError::BadDimension(v.len()));
        }
        if v.iter().all(|&c| c == 0) {
            return Err(LatticeError::ZeroBias);
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(LatticeError::BadLambda(format!("{lambda}")));
        }
        let mut dir = Direction {
            v,
            lambda,
            cache: DirCache::default(),
        };
        dir.rebuild_cache();
        Ok(dir)
    }

    /// Axis-aligned bias `lambda * e_axis` in dimension `d`.
    pub fn axis(d: usize, axis: usize, lambda: f64) -> Result<Self, LatticeError> {
        let mut v = vec![0i64; d];
        v[axis] = 1;
        Direction::new(v, lambda)
    }

    fn rebuild_cache(&mut self) {
        let v2: i64 = self.v.iter().map(|&c| c * c).sum();
        // e_1 maximises e·v over signed unit vectors; ties by coordinate index.
        let (lead_axis, &c) = self
            .v
            .iter()
            .enumerate()
            .max_by_key(|(i, &c)| (c.abs(), std::cmp::Reverse(*i)))
            .expect("nonempty");
        let lead_sign = if c >= 0 { 1 } else { -1 };
        self.cache = DirCache {
            v2,
            norm: (v2 as f64).sqrt(),
            lead_axis,
            lead_sign,
            ceil_norm: ceil_sqrt(v2 as u128) as i64,
        };
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn v(&self) -> &[i64] {
        &self.v
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `|v|`.
    pub fn norm(&self) -> f64 {
        self.cache.norm
    }

    /// `|v|^2` exactly.
    pub fn norm_sq(&self) -> i64 {
        self.cache.v2
    }

    /// Integer level `x·v`. Physical level is `level_units(x) / |v|`.
    pub fn level_units(&self, x: &[i64]) -> i64 {
        x.iter().zip(&self.v).map(|(a, b)| a * b).sum()
    }

    /// Physical level `x·l̂`.
    pub fn level(&self, x: &[i64]) -> f64 {
        self.level_units(x) as f64 / self.cache.norm
    }

    pub fn units_to_level(&self, units: i64) -> f64 {
        units as f64 / self.cache.norm
    }

    /// Component of the bias vector `l = lambda * v/|v|` along `axis`.
    pub fn ell(&self, axis: usize) -> f64 {
        self.lambda * self.v[axis] as f64 / self.cache.norm
    }

    /// The basis vector `e_1`: the signed axis maximising `e·l̂`, ties broken
    /// by coordinate index.
    pub fn leading_unit(&self) -> Point {
        unit(self.dim(), self.cache.lead_axis, self.cache.lead_sign)
    }

    pub fn leading_axis(&self) -> (usize, i64) {
        (self.cache.lead_axis, self.cache.lead_sign)
    }

    /// All signed unit vectors `e` with `e·v = e_1·v` (the maximisers).
    pub fn max_dot_units(&self) -> Vec<Point> {
        let max_dot = self.v[self.cache.lead_axis].abs();
        let mut out = Vec::new();
        for (a, &c) in self.v.iter().enumerate() {
            if c.abs() == max_dot {
                out.push(unit(self.dim(), a, if c >= 0 { 1 } else { -1 }));
            }
        }
        out
    }

    /// Smallest integer number of units `u` with `u >= k * |v|`, computed
    /// exactly (no floating point). Requires `k >= 0`.
    pub fn ceil_units_for_steps(&self, k: i64) -> i64 {
        debug_assert!(k >= 0);
        let target = (k as u128) * (k as u128) * self.cache.v2 as u128;
        ceil_sqrt(target) as i64
    }

    /// Smallest integer `u` with `u/|v| >= phys`, i.e. the integer-units
    /// threshold for a physical level `phys`. Exact-equality counts as
    /// reached; a small guard absorbs float noise in `phys * |v|`.
    pub fn units_threshold(&self, phys: f64) -> i64 {
        let t = phys * self.cache.norm;
        (t - 1e-9 * t.abs().max(1.0)).ceil() as i64
    }

    /// One physical unit expressed as the smallest exact integer-unit
    /// increment: `ceil(|v|)`.
    pub fn unit_level_units(&self) -> i64 {
        self.cache.ceil_norm
    }
}

impl PartialEq for Direction {
    fn eq(&self, other: &Self) -> bool {
        self.v == other.v && self.lambda == other.lambda
    }
}

/// Integer square root: largest `r` with `r*r <= n`.
pub fn floor_sqrt(n: u128) -> u128 {
    if n < 2 {
        return n;
    }
    let mut r = (n as f64).sqrt() as u128;
    while r.saturating_mul(r) > n {
        r -= 1;
    }
    while (r + 1).saturating_mul(r + 1) <= n {
        r += 1;
    }
    r
}

/// Smallest `r` with `r*r >= n`.
pub fn ceil_sqrt(n: u128) -> u128 {
    let r = floor_sqrt(n);
    if r * r == n {
        r
    } else {
        r + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_between_is_canonical() {
        let a = point(&[0, 0]);
        let b = point(&[1, 0]);
        let e1 = EdgeId::between(&a, &b).unwrap();
        let e2 = EdgeId::between(&b, &a).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(e1.base, a);
        assert_eq!(e1.axis, 0);
        assert_eq!(e1.upper(), b);
    }

    #[test]
    fn edge_between_rejects_non_neighbours() {
        assert!(EdgeId::between(&point(&[0, 0]), &point(&[1, 1])).is_err());
        assert!(EdgeId::between(&point(&[0, 0]), &point(&[0, 0])).is_err());
        assert!(EdgeId::between(&point(&[0, 0]), &point(&[2, 0])).is_err());
    }

    #[test]
    fn direction_validation() {
        assert!(Direction::new(vec![0, 0], 1.0).is_err());
        assert!(Direction::new(vec![1], 1.0).is_err());
        assert!(Direction::new(vec![1, 0], 0.0).is_err());
        assert!(Direction::new(vec![1, 0], -1.0).is_err());
        assert!(Direction::new(vec![1, 0], 1e-12).is_ok());
    }

    #[test]
    fn leading_unit_prefers_largest_component_then_lowest_index() {
        let d = Direction::new(vec![1, 3], 0.5).unwrap();
        assert_eq!(d.leading_unit(), point(&[0, 1]));
        let d = Direction::new(vec![2, -2], 0.5).unwrap();
        // tie on |component|: lowest index wins, sign follows the component
        assert_eq!(d.leading_unit(), point(&[1, 0]));
        let d = Direction::new(vec![-2, 2], 0.5).unwrap();
        assert_eq!(d.leading_unit(), point(&[-1, 0]));
        assert_eq!(d.max_dot_units().len(), 2);
    }

    #[test]
    fn level_units_are_exact() {
        let d = Direction::new(vec![2, 1], 1.0).unwrap();
        assert_eq!(d.level_units(&[3, -4]), 2);
        assert_eq!(d.norm_sq(), 5);
        assert_eq!(d.unit_level_units(), 3); // ceil(sqrt(5))
    }

    #[test]
    fn ceil_units_for_steps_matches_f64() {
        let d = Direction::new(vec![2, 1], 1.0).unwrap();
        for k in 0..100 {
            let exact = d.ceil_units_for_steps(k);
            let approx = (k as f64 * 5f64.sqrt()).ceil() as i64;
            assert!((exact - approx).abs() <= 1, "k={k}: {exact} vs {approx}");
            assert!((exact as f64) >= k as f64 * 5f64.sqrt() - 1e-9);
            assert!(((exact - 1) as f64) < k as f64 * 5f64.sqrt());
        }
    }

    #[test]
    fn sqrt_helpers() {
        for n in 0..10_000u128 {
            let f = floor_sqrt(n);
            assert!(f * f <= n && (f + 1) * (f + 1) > n);
            let c = ceil_sqrt(n);
            assert!(c * c >= n && (c == 0 || (c - 1) * (c - 1) < n));
        }
    }

    #[test]
    fn units_threshold_integer_equality_counts() {
        let d = Direction::axis(2, 0, 0.7).unwrap();
        assert_eq!(d.units_threshold(3.0), 3);
        assert_eq!(d.units_threshold(1.5), 2);
        assert_eq!(d.units_threshold(-0.5), 0);
    }
}
