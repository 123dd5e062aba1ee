//! The conductance-biased random walk: transition kernel, trajectory
//! simulation, first-passage times and the running maximum of the level.
//!
//! The conductance of an open edge `{x, y}` is `exp((x+y)·l)` with
//! `l = lambda * v/|v|`; the walk steps proportionally to conductances, and
//! self-loops at a fully isolated vertex. For sampling, the common factor
//! `exp(2 x·l)` cancels, so one step needs only the per-axis weights
//! `exp(±l_a)` and the openness of the 2d incident edges.

use crate::env::{EnvSpec, Environment, Percolation};
use crate::lattice::{point, shifted, Direction, EdgeId, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WalkError {
    #[error("vertices are not nearest neighbours")]
    NotAdjacent,
    #[error("index {0} beyond trajectory length {1}")]
    OutOfRange(usize, usize),
}

/// Conductance `c(x,y) = exp((x+y)·l)` if the edge is open, else 0.
pub fn conductance<E: Percolation>(
    env: &E,
    bias: &Direction,
    x: &[i64],
    y: &[i64],
) -> Result<f64, WalkError> {
    let e = EdgeId::between(x, y).map_err(|_| WalkError::NotAdjacent)?;
    if !env.is_open(&e) {
        return Ok(0.0);
    }
    let sum_units = bias.level_units(x) + bias.level_units(y);
    Ok((bias.lambda() * sum_units as f64 / bias.norm()).exp())
}

/// Transition distribution of the walk at `x`: the self-loop `{x: 1}` when
/// every incident edge is closed, otherwise conductance-proportional over the
/// open neighbours. Pairs are emitted in deterministic order (axis ascending,
/// minus before plus).
pub fn transition_distribution<E: Percolation>(
    env: &E,
    bias: &Direction,
    x: &[i64],
) -> Vec<(Point, f64)> {
    let d = env.dim();
    let mut targets = Vec::with_capacity(2 * d);
    let mut total = 0.0f64;
    for axis in 0..d {
        let ell_a = bias.ell(axis);
        let minus = shifted(x, axis, -1);
        if env.is_open(&EdgeId::from_base_axis(minus.clone(), axis)) {
            let w = (-ell_a).exp();
            total += w;
            targets.push((minus, w));
        }
        if env.is_open(&EdgeId::from_base_axis(point(x), axis)) {
            let w = ell_a.exp();
            total += w;
            targets.push((shifted(x, axis, 1), w));
        }
    }
    if targets.is_empty() {
        return vec![(point(x), 1.0)];
    }
    targets
        .into_iter()
        .map(|(p, w)| (p, w / total))
        .collect()
}

/// A simulated walk path together with its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    start: Point,
    /// Flattened positions, `(steps+1) * d` coordinates.
    coords: Vec<i64>,
    /// Integer levels `X_m·v`, one per position.
    levels: Vec<i64>,
    pub env_fingerprint: u64,
    pub env_spec: Option<EnvSpec>,
    pub walk_seed: u64,
    pub bias: Direction,
}

impl Trajectory {
    /// Number of steps (positions minus one).
    pub fn steps(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.start.len()
    }

    pub fn start(&self) -> &[i64] {
        &self.start
    }

    /// Position after `t` steps.
    pub fn position(&self, t: usize) -> &[i64] {
        let d = self.dim();
        &self.coords[t * d..(t + 1) * d]
    }

    /// Integer levels `X_m·v` for `m = 0..=steps`.
    pub fn levels(&self) -> &[i64] {
        &self.levels
    }

    /// Per-step codes for compact persistence: 0 is a self-loop, and
    /// `1 + 2*axis` / `2 + 2*axis` are the minus/plus moves along `axis`.
    pub fn step_codes(&self) -> Vec<u8> {
        let d = self.dim();
        let mut out = Vec::with_capacity(self.steps());
        for t in 0..self.steps() {
            let a = self.position(t);
            let b = self.position(t + 1);
            let mut code = 0u8;
            for axis in 0..d {
                match b[axis] - a[axis] {
                    0 => {}
                    -1 => code = 1 + 2 * axis as u8,
                    1 => code = 2 + 2 * axis as u8,
                    _ => unreachable!("non-neighbour step"),
                }
            }
            out.push(code);
        }
        out
    }

    /// Rebuild a trajectory from explicit step codes. Every move must cross
    /// an open edge of `env`; self-loops are accepted anywhere (validity of a
    /// loop is the caller's concern when hand-building configurations).
    pub fn from_steps<E: Percolation>(
        env: &E,
        bias: &Direction,
        start: Point,
        codes: &[u8],
        walk_seed: u64,
        env_spec: Option<EnvSpec>,
    ) -> Result<Self, WalkError> {
        let d = start.len();
        let mut coords = Vec::with_capacity((codes.len() + 1) * d);
        let mut levels = Vec::with_capacity(codes.len() + 1);
        let mut cur = start.clone();
        coords.extend_from_slice(&cur);
        levels.push(bias.level_units(&cur));
        for &code in codes {
            if code != 0 {
                let axis = ((code - 1) / 2) as usize;
                let sign = if code % 2 == 1 { -1 } else { 1 };
                let next = shifted(&cur, axis, sign);
                let edge = EdgeId::between(&cur, &next).map_err(|_| WalkError::NotAdjacent)?;
                if !env.is_open(&edge) {
                    return Err(WalkError::NotAdjacent);
                }
                cur = next;
            }
            coords.extend_from_slice(&cur);
            levels.push(bias.level_units(&cur));
        }
        Ok(Trajectory {
            start,
            coords,
            levels,
            env_fingerprint: env.fingerprint(),
            env_spec,
            walk_seed,
            bias: bias.clone(),
        })
    }

    /// Maximum integer level over positions `0..=n`.
    pub fn max_level_units(&self, n: usize) -> Result<i64, WalkError> {
        if n >= self.levels.len() {
            return Err(WalkError::OutOfRange(n, self.steps()));
        }
        Ok(*self.levels[..=n].iter().max().expect("nonempty"))
    }

    /// Physical running maximum `sup_{j<=n} X_j·l̂`.
    pub fn max_level(&self, n: usize) -> Result<f64, WalkError> {
        Ok(self.bias.units_to_level(self.max_level_units(n)?))
    }

    /// First passage above the physical level `s`: the first `m` with
    /// `X_m·l̂ >= s`, or `None` within this trajectory.
    pub fn hitting_time_delta(&self, s: f64) -> Option<usize> {
        first_passage_units(&self.levels, self.bias.units_threshold(s))
    }

    /// First passage in exact integer units.
    pub fn hitting_time_units(&self, threshold: i64) -> Option<usize> {
        first_passage_units(&self.levels, threshold)
    }
}

/// First index `m` with `levels[m] >= threshold`.
pub fn first_passage_units(levels: &[i64], threshold: i64) -> Option<usize> {
    levels.iter().position(|&l| l >= threshold)
}

/// Simulate `n_steps` of the biased walk from `start` on `env`, with a
/// dedicated RNG stream keyed by `walk_seed`. Deterministic replay.
pub fn simulate<E: Percolation>(
    env: &E,
    bias: &Direction,
    start: &[i64],
    n_steps: usize,
    walk_seed: u64,
) -> Trajectory {
    let d = env.dim();
    assert_eq!(bias.dim(), d, "bias dimension must match environment");
    let mut rng = ChaCha8Rng::seed_from_u64(walk_seed);
    // Per-axis step weights exp(+-l_a); the common factor exp(2 x·l) cancels.
    let w_plus: Vec<f64> = (0..d).map(|a| bias.ell(a).exp()).collect();
    let w_minus: Vec<f64> = (0..d).map(|a| (-bias.ell(a)).exp()).collect();

    let mut coords = Vec::with_capacity((n_steps + 1) * d);
    let mut levels = Vec::with_capacity(n_steps + 1);
    let mut cur = point(start);
    let mut level = bias.level_units(&cur);
    coords.extend_from_slice(&cur);
    levels.push(level);

    // (weight, axis, sign) triples for the open incident edges, rebuilt per
    // step in canonical order.
    let mut open: Vec<(f64, usize, i64)> = Vec::with_capacity(2 * d);
    let mut minus_buf = point(start);
    for _ in 0..n_steps {
        open.clear();
        let mut total = 0.0f64;
        for axis in 0..d {
            minus_buf.clone_from(&cur);
            minus_buf[axis] -= 1;
            if env.is_open(&EdgeId::from_base_axis(minus_buf.clone(), axis)) {
                total += w_minus[axis];
                open.push((w_minus[axis], axis, -1));
            }
            if env.is_open(&EdgeId::from_base_axis(cur.clone(), axis)) {
                total += w_plus[axis];
                open.push((w_plus[axis], axis, 1));
            }
        }
        if !open.is_empty() {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = open.len() - 1;
            for (i, (w, _, _)) in open.iter().enumerate() {
                if u < *w {
                    chosen = i;
                    break;
                }
                u -= *w;
            }
            let (_, axis, sign) = open[chosen];
            cur[axis] += sign;
            level += sign * bias.v()[axis];
        }
        coords.extend_from_slice(&cur);
        levels.push(level);
    }

    Trajectory {
        start: point(start),
        coords,
        levels,
        env_fingerprint: env.fingerprint(),
        env_spec: None,
        walk_seed,
        bias: bias.clone(),
    }
}

/// Simulate against a base [`Environment`], embedding its spec for
/// provenance.
pub fn simulate_on(
    env: &Environment,
    bias: &Direction,
    start: &[i64],
    n_steps: usize,
    walk_seed: u64,
) -> Trajectory {
    let mut t = simulate(env, bias, start, n_steps, walk_seed);
    t.env_spec = Some(env.spec());
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::origin;

    fn full_env() -> Environment {
        Environment::new(7, 1.0, 2).unwrap()
    }

    fn empty_env() -> Environment {
        Environment::new(7, 0.0, 2).unwrap()
    }

    #[test]
    fn conductance_closed_edge_is_zero() {
        let env = empty_env();
        let bias = Direction::axis(2, 0, 0.5).unwrap();
        assert_eq!(
            conductance(&env, &bias, &[0, 0], &[1, 0]).unwrap(),
            0.0
        );
    }

    #[test]
    fn conductance_rejects_non_adjacent() {
        let env = full_env();
        let bias = Direction::axis(2, 0, 0.5).unwrap();
        assert_eq!(
            conductance(&env, &bias, &[0, 0], &[1, 1]),
            Err(WalkError::NotAdjacent)
        );
    }

    #[test]
    fn conductance_direct_value() {
        let env = full_env();
        let bias = Direction::axis(2, 0, 0.5).unwrap();
        let c = conductance(&env, &bias, &[0, 0], &[1, 0]).unwrap();
        assert!((c - 0.5f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn conductance_is_symmetric() {
        let env = Environment::new(99, 0.6, 2).unwrap();
        let bias = Direction::new(vec![2, 1], 0.8).unwrap();
        for i in 0..100 {
            let x = point(&[i % 13 - 6, i % 7 - 3]);
            let y = shifted(&x, (i % 2) as usize, if i % 4 < 2 { 1 } else { -1 });
            let cxy = conductance(&env, &bias, &x, &y).unwrap();
            let cyx = conductance(&env, &bias, &y, &x).unwrap();
            assert_eq!(cxy, cyx);
        }
    }

    #[test]
    fn transition_isolated_self_loop() {
        let env = empty_env();
        let bias = Direction::axis(2, 0, 0.5).unwrap();
        let dist = transition_distribution(&env, &bias, &[4, 5]);
        assert_eq!(dist, vec![(point(&[4, 5]), 1.0)]);
    }

    #[test]
    fn transition_two_open_edges_closed_form() {
        // only edges {0, e1} and {0, -e1} open; lambda = ln 2 gives weights
        // 2 and 1/2, so probabilities 0.8 and 0.2.
        let env = full_env();
        let closed = vec![
            EdgeId::from_base_axis(point(&[0, -1]), 1),
            EdgeId::from_base_axis(point(&[0, 0]), 1),
        ];
        let view = env.with_closed(closed);
        let bias = Direction::axis(2, 0, 2f64.ln()).unwrap();
        let dist = transition_distribution(&view, &bias, &[0, 0]);
        assert_eq!(dist.len(), 2);
        let p_of = |target: &Point| {
            dist.iter()
                .find(|(p, _)| p == target)
                .map(|(_, w)| *w)
                .unwrap()
        };
        assert!((p_of(&point(&[1, 0])) - 0.8).abs() < 1e-12);
        assert!((p_of(&point(&[-1, 0])) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn transition_vanishing_bias_is_uniform() {
        let env = full_env();
        let bias = Direction::axis(2, 0, 1e-12).unwrap();
        let dist = transition_distribution(&env, &bias, &[0, 0]);
        assert_eq!(dist.len(), 4);
        for (_, w) in dist {
            assert!((w - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn transition_sums_to_one() {
        let env = Environment::new(3, 0.55, 2).unwrap();
        let bias = Direction::new(vec![1, 2], 0.9).unwrap();
        for i in 0..200 {
            let x = point(&[i - 100, 3 * i % 17]);
            let total: f64 = transition_distribution(&env, &bias, &x)
                .iter()
                .map(|(_, w)| w)
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn simulate_zero_steps() {
        let env = full_env();
        let bias = Direction::axis(2, 0, 0.5).unwrap();
        let t = simulate(&env, &bias, &[2, 3], 0, 1);
        assert_eq!(t.steps(), 0);
        assert_eq!(t.position(0), &[2, 3]);
    }

    #[test]
    fn simulate_isolated_start_is_constant() {
        let env = empty_env();
        let bias = Direction::axis(2, 0, 0.5).unwrap();
        let t = simulate(&env, &bias, &[0, 0], 50, 1);
        for m in 0..=50 {
            assert_eq!(t.position(m), &[0, 0]);
        }
    }

    #[test]
    fn simulate_replays_identically() {
        let env = Environment::new(5, 0.7, 2).unwrap();
        let bias = Direction::axis(2, 0, 0.5).unwrap();
        let a = simulate(&env, &bias, &[0, 0], 500, 42);
        let b = simulate(&env, &bias, &[0, 0], 500, 42);
        assert_eq!(a.coords, b.coords);
        assert_eq!(a.levels, b.levels);
    }

    #[test]
    fn trajectory_moves_follow_open_edges() {
        let env = Environment::new(11, 0.6, 2).unwrap();
        let bias = Direction::axis(2, 0, 0.8).unwrap();
        let t = simulate(&env, &bias, &[0, 0], 2000, 9);
        for m in 0..t.steps() {
            let a = t.position(m);
            let b = t.position(m + 1);
            if a == b {
                assert!(open_neighbors_is_empty(&env, a));
            } else {
                assert!(env.is_open(&EdgeId::between(a, b).unwrap()));
            }
        }
    }

    fn open_neighbors_is_empty(env: &Environment, x: &[i64]) -> bool {
        crate::env::open_neighbors(env, x).is_empty()
    }

    #[test]
    fn first_passage_hand_scan() {
        // level sequence [0,1,0,2,3], threshold for s=1.5 with |v|=1 is 2
        let levels = [0i64, 1, 0, 2, 3];
        assert_eq!(first_passage_units(&levels, 2), Some(3));
        assert_eq!(first_passage_units(&levels, 0), Some(0));
        assert_eq!(first_passage_units(&levels, 4), None);
    }

    #[test]
    fn hitting_time_at_or_below_start_is_zero() {
        let env = full_env();
        let bias = Direction::axis(2, 0, 0.5).unwrap();
        let t = simulate(&env, &bias, &[0, 0], 10, 3);
        assert_eq!(t.hitting_time_delta(0.0), Some(0));
        assert_eq!(t.hitting_time_delta(-3.5), Some(0));
    }

    #[test]
    fn max_level_hand_scan() {
        let env = full_env();
        let bias = Direction::axis(2, 0, 0.5).unwrap();
        // build the level path [0,1,0,2] impossible on Z^2 by unit steps;
        // use [0,1,0,1] instead via explicit codes: +x, -x, +x
        let t = Trajectory::from_steps(&env, &bias, point(&[0, 0]), &[2, 1, 2], 0, None).unwrap();
        assert_eq!(t.max_level_units(0).unwrap(), 0);
        assert_eq!(t.max_level_units(2).unwrap(), 1);
        assert!(t.max_level_units(7).is_err());
    }

    #[test]
    fn duality_of_hitting_and_running_max() {
        // {Delta_s <= n} = {max level by n >= s}
        let env = Environment::new(21, 0.8, 2).unwrap();
        let bias = Direction::axis(2, 0, 0.7).unwrap();
        for seed in 0..20 {
            let t = simulate(&env, &bias, &[0, 0], 300, seed);
            for s_int in [-2i64, 0, 1, 3, 7, 20] {
                let s = s_int as f64 + 0.5;
                for n in [0usize, 5, 50, 299] {
                    let hit = t.hitting_time_delta(s).map_or(false, |m| m <= n);
                    let maxed = t.max_level(n).unwrap() >= s;
                    assert_eq!(hit, maxed, "seed={seed} s={s} n={n}");
                }
            }
        }
    }

    #[test]
    fn step_codes_round_trip() {
        let env = Environment::new(13, 0.7, 2).unwrap();
        let bias = Direction::axis(2, 0, 0.4).unwrap();
        let t = simulate_on(&env, &bias, &[0, 0], 200, 8);
        let codes = t.step_codes();
        let rebuilt = Trajectory::from_steps(
            &env,
            &bias,
            point(&[0, 0]),
            &codes,
            t.walk_seed,
            t.env_spec.clone(),
        )
        .unwrap();
        assert_eq!(rebuilt.coords, t.coords);
        assert_eq!(rebuilt.levels, t.levels);
    }
}
