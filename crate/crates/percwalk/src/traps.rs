//! Trap geometry: the backtrack depth of a vertex, one-headed traps, the
//! directional depth reachable inside a trap, slabs, and deep-trap excursion
//! events along a trajectory.
//!
//! Everything is computed inside an l-infinity exploration ball. "Infinite"
//! is proxied by reaching the ball shell, and "finite" is certified only when
//! an exploration exhausts strictly inside the ball; the ambiguous case
//! (shell touched without settling the query) is reported as budget
//! exhaustion rather than guessed.

use crate::env::{BallGrid, ClosedEdgeView, EnvError, Percolation};
use crate::lattice::{add, point, Direction, EdgeId, Point};
use crate::walk::Trajectory;
use serde::Serialize;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrapError {
    #[error("exploration budget exhausted: the cluster reaches the ball shell without settling the query")]
    BudgetExhausted,
    #[error("box radius {0} too large for exhaustive path enumeration (max {MAX_BRUTE_RADIUS})")]
    InstanceTooLarge(i64),
    #[error("trajectory was not simulated on this environment")]
    EnvMismatch,
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Grid(#[from] EnvError),
}

/// Largest box radius accepted by the exhaustive path-enumeration oracle.
pub const MAX_BRUTE_RADIUS: i64 = 7;

/// Largest level gain available inside a radius-`r` ball.
fn max_gain_units(bias: &Direction, r: i64) -> i64 {
    bias.v().iter().map(|c| c.abs()).sum::<i64>() * r
}

fn check_escape_reachable(
    bias: &Direction,
    radius: i64,
    escape_units: i64,
) -> Result<(), TrapError> {
    if escape_units < 1 {
        return Err(TrapError::BadParams("escape_units must be >= 1".into()));
    }
    if escape_units > max_gain_units(bias, radius) {
        return Err(TrapError::BadParams(format!(
            "escape level +{escape_units} units unreachable inside radius {radius}"
        )));
    }
    Ok(())
}

/// Outcome of the full-ball reachability sweep backing `backtrack_bk_units`.
struct BallSweep {
    /// Levels of all visited vertices (open cluster of x within the ball).
    levels: Vec<i64>,
    reached_target: bool,
    touched_shell: bool,
}

fn ball_sweep<E: Percolation>(
    env: &E,
    bias: &Direction,
    x: &[i64],
    grid: &BallGrid,
    target_units: i64,
) -> BallSweep {
    let d = env.dim();
    let mut visited = vec![false; grid.len()];
    let mut queue = VecDeque::new();
    let mut levels = Vec::new();
    let mut reached_target = false;
    let mut touched_shell = false;
    visited[grid.index(x).expect("centre")] = true;
    queue.push_back(point(x));
    while let Some(v) = queue.pop_front() {
        let lvl = bias.level_units(&v);
        levels.push(lvl);
        reached_target |= lvl >= target_units;
        if grid.on_shell(&v) {
            touched_shell = true;
            continue;
        }
        for axis in 0..d {
            for sign in [-1i64, 1] {
                let mut nb = v.clone();
                nb[axis] += sign;
                if let Some(i) = grid.index(&nb) {
                    if !visited[i] && env.is_open_between(&v, &nb) {
                        visited[i] = true;
                        queue.push_back(nb);
                    }
                }
            }
        }
    }
    BallSweep {
        levels,
        reached_target,
        touched_shell,
    }
}

/// Does an open path from `x`, confined to the ball and to levels
/// `>= floor_units`, reach `target_units`?
fn escape_feasible<E: Percolation>(
    env: &E,
    bias: &Direction,
    x: &[i64],
    grid: &BallGrid,
    floor_units: i64,
    target_units: i64,
) -> bool {
    let d = env.dim();
    let mut visited = vec![false; grid.len()];
    let mut queue = VecDeque::new();
    visited[grid.index(x).expect("centre")] = true;
    queue.push_back(point(x));
    while let Some(v) = queue.pop_front() {
        if bias.level_units(&v) >= target_units {
            return true;
        }
        if grid.on_shell(&v) {
            continue;
        }
        for axis in 0..d {
            for sign in [-1i64, 1] {
                let mut nb = v.clone();
                nb[axis] += sign;
                if bias.level_units(&nb) < floor_units {
                    continue;
                }
                if let Some(i) = grid.index(&nb) {
                    if !visited[i] && env.is_open_between(&v, &nb) {
                        visited[i] = true;
                        queue.push_back(nb);
                    }
                }
            }
        }
    }
    false
}

/// Backtrack depth of `x` in integer level units: the minimal `h >= 0` such
/// that an open path from `x` staying at levels `>= x·v - h` reaches level
/// `x·v + escape_units`, with exploration confined to the l-infinity ball of
/// `explore_radius` around `x`.
///
/// Returns 0 when the open cluster of `x` is certified finite inside the
/// ball (the "not in the infinite cluster" branch of the definition). The
/// search runs over the finite set of level deficits realised by cluster
/// vertices, so the result is exact under the ball/escape proxy.
pub fn backtrack_bk_units<E: Percolation>(
    env: &E,
    bias: &Direction,
    x: &[i64],
    escape_units: i64,
    explore_radius: i64,
) -> Result<i64, TrapError> {
    check_escape_reachable(bias, explore_radius, escape_units)?;
    let grid = BallGrid::new(x, explore_radius)?;
    let x_lvl = bias.level_units(x);
    let target = x_lvl + escape_units;
    let sweep = ball_sweep(env, bias, x, &grid, target);
    if !sweep.reached_target {
        if sweep.touched_shell {
            return Err(TrapError::BudgetExhausted);
        }
        // whole cluster enclosed in the ball and never reaching the escape
        // level: finite cluster, depth 0 by the first branch
        return Ok(0);
    }
    let mut deficits: Vec<i64> = sweep
        .levels
        .iter()
        .filter_map(|&l| (l < x_lvl).then(|| x_lvl - l))
        .collect();
    deficits.push(0);
    deficits.sort_unstable();
    deficits.dedup();
    if escape_feasible(env, bias, x, &grid, x_lvl - deficits[0], target) {
        return Ok(deficits[0]);
    }
    // invariant: infeasible at lo, feasible at hi (the unrestricted sweep
    // reached the target, and the largest deficit admits every cluster vertex)
    let mut lo = 0usize;
    let mut hi = deficits.len() - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if escape_feasible(env, bias, x, &grid, x_lvl - deficits[mid], target) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(deficits[hi])
}

/// Exhaustive small-instance oracle for the backtrack depth: the exact
/// minimum over all self-avoiding open paths from `x` (confined to the
/// radius-`box_radius` ball) that reach level `x·v + escape_units` of the
/// maximum level deficit along the path. Same ball/escape conventions as
/// [`backtrack_bk_units`], so the two must agree exactly.
pub fn brute_force_bk_units<E: Percolation>(
    env: &E,
    bias: &Direction,
    x: &[i64],
    escape_units: i64,
    box_radius: i64,
) -> Result<i64, TrapError> {
    if box_radius > MAX_BRUTE_RADIUS {
        return Err(TrapError::InstanceTooLarge(box_radius));
    }
    check_escape_reachable(bias, box_radius, escape_units)?;
    let grid = BallGrid::new(x, box_radius)?;
    let x_lvl = bias.level_units(x);
    let target = x_lvl + escape_units;

    struct Dfs<'a, E: Percolation> {
        env: &'a E,
        bias: &'a Direction,
        grid: &'a BallGrid,
        on_path: Vec<bool>,
        x_lvl: i64,
        target: i64,
        best: Option<i64>,
    }

    impl<E: Percolation> Dfs<'_, E> {
        fn explore(&mut self, v: &Point, cur_deficit: i64) {
            if self.bias.level_units(v) >= self.target {
                self.best = Some(match self.best {
                    Some(b) => b.min(cur_deficit),
                    None => cur_deficit,
                });
                return;
            }
            if self.grid.on_shell(v) {
                return;
            }
            let d = v.len();
            // try low-deficit, high-level moves first so pruning bites early
            let mut moves: Vec<(i64, i64, Point)> = Vec::with_capacity(2 * d);
            for axis in 0..d {
                for sign in [-1i64, 1] {
                    let mut nb = v.clone();
                    nb[axis] += sign;
                    let lvl = self.bias.level_units(&nb);
                    moves.push((cur_deficit.max(self.x_lvl - lvl), -lvl, nb));
                }
            }
            moves.sort_unstable();
            for (nd, _, nb) in moves {
                if self.best.is_some_and(|b| nd >= b) {
                    continue;
                }
                if let Some(i) = self.grid.index(&nb) {
                    if !self.on_path[i] && self.env.is_open_between(v, &nb) {
                        self.on_path[i] = true;
                        self.explore(&nb, nd);
                        self.on_path[i] = false;
                    }
                }
            }
        }
    }

    let mut dfs = Dfs {
        env,
        bias,
        grid: &grid,
        on_path: vec![false; grid.len()],
        x_lvl,
        target,
        best: None,
    };
    dfs.on_path[grid.index(x).expect("centre")] = true;
    let start = point(x);
    dfs.explore(&start, 0);

    match dfs.best {
        Some(b) => Ok(b),
        None => {
            // no simple path escapes; decide finite-vs-budget exactly like
            // the implementation does
            let sweep = ball_sweep(env, bias, x, &grid, target);
            if sweep.touched_shell {
                Err(TrapError::BudgetExhausted)
            } else {
                Ok(0)
            }
        }
    }
}

/// A one-headed trap: a finite open cluster hanging off the single edge
/// `[head, head+e_1]`, entirely at levels `>= (head+e_1)·l̂`.
#[derive(Debug, Clone, Serialize)]
pub struct TrapInfo {
    pub head: Point,
    /// Body vertices in BFS discovery order.
    pub body: Vec<Point>,
    /// Deepest body vertex in the bias direction (lexicographically smallest
    /// on ties).
    pub apex: Point,
    /// max (y - head)·v over the body, in integer units.
    pub depth_units: i64,
    pub size: usize,
}

/// Body vertex maximising the level, ties broken by lexicographic order.
pub fn apex_of_body(bias: &Direction, body: &[Point]) -> Point {
    body.iter()
        .max_by(|a, b| {
            bias.level_units(a)
                .cmp(&bias.level_units(b))
                .then_with(|| b.as_slice().cmp(a.as_slice()))
        })
        .expect("nonempty body")
        .clone()
}

/// Check the three one-headed-trap conditions at `x` and return the trap
/// body when they hold: the head edge `[x, x+e_1]` is open, the cluster of
/// `x+e_1` with that edge closed is finite (proxy: it stays strictly inside
/// the radius-`trap_radius` ball), and every body vertex sits at level
/// `>= (x+e_1)·l̂`.
pub fn detect_one_headed_trap<E: Percolation>(
    env: &E,
    bias: &Direction,
    x: &[i64],
    trap_radius: i64,
) -> Result<Option<TrapInfo>, TrapError> {
    let e1 = bias.leading_unit();
    let inside = add(x, &e1);
    let head_edge = EdgeId::between(x, &inside).expect("unit step");
    if !env.is_open(&head_edge) {
        return Ok(None);
    }
    let view = ClosedEdgeView::new(env, vec![head_edge]);
    let grid = BallGrid::new(&inside, trap_radius)?;
    let d = env.dim();
    let mut visited = vec![false; grid.len()];
    let mut queue = VecDeque::new();
    let mut body = Vec::new();
    visited[grid.index(&inside).expect("centre")] = true;
    queue.push_back(inside.clone());
    let floor = bias.level_units(&inside);
    while let Some(v) = queue.pop_front() {
        if grid.on_shell(&v) {
            // body not certified finite: condition 2 fails under the proxy
            return Ok(None);
        }
        body.push(v.clone());
        for axis in 0..d {
            for sign in [-1i64, 1] {
                let mut nb = v.clone();
                nb[axis] += sign;
                if let Some(i) = grid.index(&nb) {
                    if !visited[i] && view.is_open_between(&v, &nb) {
                        visited[i] = true;
                        queue.push_back(nb);
                    }
                }
            }
        }
    }
    if body.iter().any(|y| bias.level_units(y) < floor) {
        return Ok(None);
    }
    let apex = apex_of_body(bias, &body);
    let head_lvl = bias.level_units(x);
    let depth_units = body
        .iter()
        .map(|y| bias.level_units(y) - head_lvl)
        .max()
        .expect("nonempty");
    Ok(Some(TrapInfo {
        head: point(x),
        size: body.len(),
        apex,
        depth_units,
        body,
    }))
}

/// Furthest distance (in integer units) reachable from `x` in the bias
/// direction while staying in the half-space `H_x^+`; 0 when `x` escapes
/// within its half-space (the restricted exploration reaches level
/// `x·v + escape_units`).
pub fn direction_depth_units<E: Percolation>(
    env: &E,
    bias: &Direction,
    x: &[i64],
    escape_units: i64,
    explore_radius: i64,
) -> Result<i64, TrapError> {
    check_escape_reachable(bias, explore_radius, escape_units)?;
    let grid = BallGrid::new(x, explore_radius)?;
    let d = env.dim();
    let x_lvl = bias.level_units(x);
    let target = x_lvl + escape_units;
    let mut visited = vec![false; grid.len()];
    let mut queue = VecDeque::new();
    let mut max_lvl = x_lvl;
    let mut touched_shell = false;
    visited[grid.index(x).expect("centre")] = true;
    queue.push_back(point(x));
    while let Some(v) = queue.pop_front() {
        let lvl = bias.level_units(&v);
        if lvl >= target {
            return Ok(0);
        }
        max_lvl = max_lvl.max(lvl);
        if grid.on_shell(&v) {
            touched_shell = true;
            continue;
        }
        for axis in 0..d {
            for sign in [-1i64, 1] {
                let mut nb = v.clone();
                nb[axis] += sign;
                if bias.level_units(&nb) < x_lvl {
                    continue;
                }
                if let Some(i) = grid.index(&nb) {
                    if !visited[i] && env.is_open_between(&v, &nb) {
                        visited[i] = true;
                        queue.push_back(nb);
                    }
                }
            }
        }
    }
    if touched_shell {
        return Err(TrapError::BudgetExhausted);
    }
    Ok(max_lvl - x_lvl)
}

/// Slab width `log(n)^3` (natural logarithm) at scale `n`.
pub fn slab_width(n: u64) -> f64 {
    assert!(n >= 2, "slab scale must be at least 2");
    (n as f64).ln().powi(3)
}

/// Index of the half-open slab `[k*w, (k+1)*w)` containing a physical level.
pub fn slab_index_for_width(level: f64, width: f64) -> i64 {
    (level / width).floor() as i64
}

/// Slab containing `x` at scale `n`.
pub fn slab_index(bias: &Direction, x: &[i64], n: u64) -> i64 {
    slab_index_for_width(bias.level(x), slab_width(n))
}

/// First entry of a trajectory into a slab.
#[derive(Debug, Clone, Serialize)]
pub struct SlabEntry {
    pub k: i64,
    pub entry_time: usize,
    pub entry: Point,
}

/// First hitting time and entrance vertex of every slab the trajectory
/// visits, ordered by slab index. Unvisited slabs are absent.
pub fn slab_entries(traj: &Trajectory, n: u64) -> Vec<SlabEntry> {
    let w = slab_width(n);
    let norm = traj.bias.norm();
    let mut firsts: std::collections::BTreeMap<i64, usize> = std::collections::BTreeMap::new();
    for (t, &lvl) in traj.levels().iter().enumerate() {
        let k = slab_index_for_width(lvl as f64 / norm, w);
        firsts.entry(k).or_insert(t);
    }
    firsts
        .into_iter()
        .map(|(k, t)| SlabEntry {
            k,
            entry_time: t,
            entry: point(traj.position(t)),
        })
        .collect()
}

/// Deep-trap event at one slab entrance: the depth/size test `Z`, the
/// exploration test (the walk reaches the apex before returning to the
/// entrance), and the first-excursion duration `theta` (0 unless explored;
/// `censored` marks an exploration whose return lies beyond the data).
#[derive(Debug, Clone, Serialize)]
pub struct SlabTrapEvent {
    pub k: i64,
    pub entry_time: usize,
    pub entry: Point,
    pub deep: bool,
    pub explored: bool,
    pub theta: u64,
    pub censored: bool,
}

/// Parameters for [`deep_trap_events`].
#[derive(Debug, Clone, Copy)]
pub struct DeepTrapParams {
    pub eps: f64,
    /// Estimated backtrack-tail rate, supplied by the caller (never fitted
    /// inline here).
    pub zeta_hat: f64,
    pub trap_radius: i64,
}

/// Scan every slab entrance of a trajectory for deep one-headed-trap
/// excursions at scale `n`: deep means the trap at the entrance is nonempty
/// with directional depth at least `(1-eps)/zeta_hat * log n` from just
/// inside the head and size at most `(log n)^2`.
pub fn deep_trap_events<E: Percolation>(
    env: &E,
    traj: &Trajectory,
    n: u64,
    params: &DeepTrapParams,
) -> Result<Vec<SlabTrapEvent>, TrapError> {
    if traj.env_fingerprint != env.fingerprint() {
        return Err(TrapError::EnvMismatch);
    }
    if !(params.eps > 0.0 && params.eps < 1.0) {
        return Err(TrapError::BadParams("eps must lie in (0,1)".into()));
    }
    if !(params.zeta_hat > 0.0) {
        return Err(TrapError::BadParams("zeta_hat must be positive".into()));
    }
    let bias = &traj.bias;
    let e1 = bias.leading_unit();
    let ln_n = (n as f64).ln();
    let depth_threshold = (1.0 - params.eps) / params.zeta_hat * ln_n;
    let size_cap = ln_n * ln_n;
    let mut out = Vec::new();
    for entry in slab_entries(traj, n) {
        let mut ev = SlabTrapEvent {
            k: entry.k,
            entry_time: entry.entry_time,
            entry: entry.entry.clone(),
            deep: false,
            explored: false,
            theta: 0,
            censored: false,
        };
        if let Some(trap) = detect_one_headed_trap(env, bias, &entry.entry, params.trap_radius)? {
            let inside = add(&entry.entry, &e1);
            // The trap body is certified finite strictly inside the ball, so
            // with the escape level at the ball's geometric maximum the
            // escape branch cannot fire and the true restricted depth comes
            // back.
            let depth_units = direction_depth_units(
                env,
                bias,
                &inside,
                max_gain_units(bias, params.trap_radius),
                params.trap_radius,
            )?;
            ev.deep = bias.units_to_level(depth_units) >= depth_threshold
                && (trap.size as f64) <= size_cap;
            if ev.deep {
                let t0 = entry.entry_time;
                let mut first_apex: Option<usize> = None;
                let mut first_return: Option<usize> = None;
                for m in (t0 + 1)..=traj.steps() {
                    let pos = traj.position(m);
                    if first_apex.is_none() && pos == trap.apex.as_slice() {
                        first_apex = Some(m);
                    }
                    if pos == entry.entry.as_slice() {
                        first_return = Some(m);
                        break;
                    }
                }
                match (first_apex, first_return) {
                    (Some(_), Some(r)) => {
                        ev.explored = true;
                        ev.theta = (r - t0) as u64;
                    }
                    (Some(_), None) => {
                        ev.explored = true;
                        ev.censored = true;
                    }
                    _ => {}
                }
            }
        }
        out.push(ev);
    }
    Ok(out)
}
