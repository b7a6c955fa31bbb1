//! Movement policies on the torus.
//!
//! Waypoint-style agents repeatedly pick a destination and walk to it at unit
//! speed along a Manhattan path (one horizontal leg, one vertical leg, in a
//! random order). A new move begins the instant the previous one ends, so an
//! agent changes node on every time step. Random Walk agents instead hop to a
//! uniformly chosen neighbour each step.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Direction, Position, TorusGrid};
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LegOrder {
    HorizontalFirst,
    VerticalFirst,
}

/// One source-to-destination trip of a waypoint agent.
///
/// The path is fully resolved at construction: `dx` and `dy` are the signed
/// number of unit steps along each axis, so wrap direction and antipodal tie
/// breaking are fixed once the move exists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub origin: Position,
    pub destination: Position,
    pub leg_order: LegOrder,
    pub start_time: u64,
    dx: i32,
    dy: i32,
}

/// A maximal straight part of a move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Position,
    pub direction: Direction,
    pub length: u32,
    pub start_time: u64,
}

impl Segment {
    pub fn end_time(&self) -> u64 {
        self.start_time + self.length as u64
    }

    pub fn position_at(&self, t: u64, g: &TorusGrid) -> Position {
        assert!(
            t >= self.start_time && t <= self.end_time(),
            "time {t} outside segment [{}, {}]",
            self.start_time,
            self.end_time()
        );
        advance(g, self.start, self.direction, (t - self.start_time) as i64)
    }
}

fn advance(g: &TorusGrid, p: Position, dir: Direction, k: i64) -> Position {
    let (x, y) = (p.x as i64, p.y as i64);
    match dir {
        Direction::PosX => g.wrap(x + k, y),
        Direction::NegX => g.wrap(x - k, y),
        Direction::PosY => g.wrap(x, y + k),
        Direction::NegY => g.wrap(x, y - k),
    }
}

fn axis_direction(delta: i32, horizontal: bool) -> Direction {
    match (horizontal, delta >= 0) {
        (true, true) => Direction::PosX,
        (true, false) => Direction::NegX,
        (false, true) => Direction::PosY,
        (false, false) => Direction::NegY,
    }
}

impl Move {
    /// Manhattan move from `origin` to `destination` starting at `start_time`.
    ///
    /// Each axis is travelled the shorter way around; antipodal ties and the
    /// leg order are drawn uniformly from `rng`.
    pub fn build(
        origin: Position,
        destination: Position,
        start_time: u64,
        g: &TorusGrid,
        rng: &mut SimRng,
    ) -> Move {
        let leg_order = if rng.random_bool(0.5) {
            LegOrder::HorizontalFirst
        } else {
            LegOrder::VerticalFirst
        };
        Self::build_with_order(origin, destination, start_time, leg_order, g, rng)
    }

    /// Like [`Move::build`] but with a caller-chosen leg order.
    pub fn build_with_order(
        origin: Position,
        destination: Position,
        start_time: u64,
        leg_order: LegOrder,
        g: &TorusGrid,
        rng: &mut SimRng,
    ) -> Move {
        let d = g.displacement(origin, destination);
        let mut dx = d.dx as i32;
        let mut dy = d.dy as i32;
        if d.tie_x && rng.random_bool(0.5) {
            dx = -dx;
        }
        if d.tie_y && rng.random_bool(0.5) {
            dy = -dy;
        }
        Move {
            origin,
            destination,
            leg_order,
            start_time,
            dx,
            dy,
        }
    }

    /// Move with explicit signed step counts. `origin + (dx, dy)` must be
    /// reachable by a shortest path, i.e. `|dx|, |dy| <= n / 2`.
    pub fn from_steps(
        origin: Position,
        dx: i32,
        dy: i32,
        leg_order: LegOrder,
        start_time: u64,
        g: &TorusGrid,
    ) -> Move {
        let half = (g.side() / 2) as i32;
        assert!(dx.abs() <= half && dy.abs() <= half, "not a shortest path");
        Move {
            origin,
            destination: g.wrap(origin.x as i64 + dx as i64, origin.y as i64 + dy as i64),
            leg_order,
            start_time,
            dx,
            dy,
        }
    }

    pub fn duration(&self) -> u64 {
        (self.dx.unsigned_abs() + self.dy.unsigned_abs()) as u64
    }

    pub fn end_time(&self) -> u64 {
        self.start_time + self.duration()
    }

    pub fn steps(&self) -> (i32, i32) {
        (self.dx, self.dy)
    }

    /// The two legs in travel order as `(direction, length)`; a leg may have
    /// length zero when the move stays on one axis.
    pub fn legs(&self) -> [(Direction, u32); 2] {
        let h = (axis_direction(self.dx, true), self.dx.unsigned_abs());
        let v = (axis_direction(self.dy, false), self.dy.unsigned_abs());
        match self.leg_order {
            LegOrder::HorizontalFirst => [h, v],
            LegOrder::VerticalFirst => [v, h],
        }
    }

    /// Non-empty segments in travel order (one or two).
    pub fn segments(&self, g: &TorusGrid) -> Vec<Segment> {
        let mut out = Vec::with_capacity(2);
        let mut start = self.origin;
        let mut t = self.start_time;
        for (direction, length) in self.legs() {
            if length == 0 {
                continue;
            }
            out.push(Segment {
                start,
                direction,
                length,
                start_time: t,
            });
            start = advance(g, start, direction, length as i64);
            t += length as u64;
        }
        out
    }

    pub fn position_at(&self, t: u64, g: &TorusGrid) -> Position {
        assert!(
            t >= self.start_time && t <= self.end_time(),
            "time {t} outside move [{}, {}]",
            self.start_time,
            self.end_time()
        );
        let k = t - self.start_time;
        let [(d1, l1), (d2, _)] = self.legs();
        if k <= l1 as u64 {
            advance(g, self.origin, d1, k as i64)
        } else {
            let corner = advance(g, self.origin, d1, l1 as i64);
            advance(g, corner, d2, (k - l1 as u64) as i64)
        }
    }
}

/// Free-function form of [`Move::build`].
pub fn mrwp_build_move(
    p: Position,
    dest: Position,
    t: u64,
    g: &TorusGrid,
    rng: &mut SimRng,
) -> Move {
    Move::build(p, dest, t, g, rng)
}

/// One Random Walk hop to a uniformly chosen neighbour.
pub fn rw_step(p: Position, g: &TorusGrid, rng: &mut SimRng) -> Position {
    g.step(p, Direction::ALL[rng.random_range(0..4)])
}

pub fn uniform_position(g: &TorusGrid, rng: &mut SimRng) -> Position {
    g.position(rng.random_range(0..g.node_count()))
}

/// Uniform over all nodes other than `p`.
pub fn sample_destination_uniform(p: Position, g: &TorusGrid, rng: &mut SimRng) -> Position {
    let skip = g.index(p);
    let mut i = rng.random_range(0..g.node_count() - 1);
    if i >= skip {
        i += 1;
    }
    g.position(i)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevyParams {
    pub alpha: f64,
    pub n: u32,
}

impl LevyParams {
    pub fn new(alpha: f64, n: u32) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "levy alpha must be finite and non-negative, got {alpha}"
            )));
        }
        TorusGrid::new(n)?;
        Ok(Self { alpha, n })
    }
}

#[derive(Clone, Debug)]
struct DistanceClass {
    distance: u32,
    offsets: Vec<(i32, i32)>,
}

/// Precomputed Lévy destination distribution for one `(n, alpha)`.
///
/// Nodes are grouped by their torus distance from the walker; a class is
/// chosen with weight `count * d^-alpha` and a node is then drawn uniformly
/// within the class. By translation symmetry the table serves every origin.
#[derive(Clone, Debug)]
pub struct LevySampler {
    grid: TorusGrid,
    params: LevyParams,
    classes: Vec<DistanceClass>,
    class_index: WeightedIndex<f64>,
    normalizer: f64,
}

impl LevySampler {
    pub fn new(params: LevyParams) -> Result<Self> {
        let grid = TorusGrid::new(params.n)?;
        let origin = Position::new(0, 0);
        let max_d = grid.max_distance() as usize;
        let mut buckets: Vec<Vec<(i32, i32)>> = vec![Vec::new(); max_d + 1];
        for i in 0..grid.node_count() {
            let q = grid.position(i);
            let d = grid.distance(origin, q) as usize;
            if d == 0 {
                continue;
            }
            let disp = grid.displacement(origin, q);
            buckets[d].push((disp.dx as i32, disp.dy as i32));
        }
        let classes: Vec<DistanceClass> = buckets
            .into_iter()
            .enumerate()
            .filter(|(_, offs)| !offs.is_empty())
            .map(|(d, offsets)| DistanceClass {
                distance: d as u32,
                offsets,
            })
            .collect();
        let weights: Vec<f64> = classes
            .iter()
            .map(|c| c.offsets.len() as f64 * distance_weight(c.distance, params.alpha))
            .collect();
        let normalizer: f64 = weights.iter().sum();
        let class_index = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidConfig(format!("levy weights: {e}")))?;
        Ok(Self {
            grid,
            params,
            classes,
            class_index,
            normalizer,
        })
    }

    pub fn params(&self) -> LevyParams {
        self.params
    }

    /// `Z = sum over q != p of d(p, q)^-alpha`.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Probability of choosing `q` as next destination from `p`.
    pub fn probability(&self, p: Position, q: Position) -> f64 {
        if p == q {
            return 0.0;
        }
        distance_weight(self.grid.distance(p, q), self.params.alpha) / self.normalizer
    }

    /// `(distance, node count)` for each non-empty distance class.
    pub fn class_sizes(&self) -> Vec<(u32, usize)> {
        self.classes
            .iter()
            .map(|c| (c.distance, c.offsets.len()))
            .collect()
    }

    pub fn sample(&self, p: Position, rng: &mut SimRng) -> Position {
        let class = &self.classes[self.class_index.sample(rng)];
        let (ox, oy) = class.offsets[rng.random_range(0..class.offsets.len())];
        self.grid
            .wrap(p.x as i64 + ox as i64, p.y as i64 + oy as i64)
    }
}

fn distance_weight(d: u32, alpha: f64) -> f64 {
    if alpha == 0.0 {
        1.0
    } else {
        (-(alpha) * (d as f64).ln()).exp()
    }
}

pub fn sample_destination_levy(p: Position, sampler: &LevySampler, rng: &mut SimRng) -> Position {
    sampler.sample(p, rng)
}

/// Movement model selector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum MobilityPolicy {
    RandomWalk,
    /// Uniform destinations. On the torus the path between waypoints is the
    /// same Manhattan path as `ManhattanRandomWaypoint`.
    RandomWaypoint,
    ManhattanRandomWaypoint,
    LevyWalk {
        alpha: f64,
    },
}

impl MobilityPolicy {
    pub fn short_name(&self) -> &'static str {
        match self {
            MobilityPolicy::RandomWalk => "rw",
            MobilityPolicy::RandomWaypoint => "rwp",
            MobilityPolicy::ManhattanRandomWaypoint => "mrwp",
            MobilityPolicy::LevyWalk { .. } => "levy",
        }
    }
}

#[derive(Clone, Debug)]
enum Chooser {
    Neighbor,
    Uniform,
    Levy(Arc<LevySampler>),
}

/// A policy bound to a grid, ready to drive walkers.
#[derive(Clone, Debug)]
pub struct Mobility {
    grid: TorusGrid,
    chooser: Chooser,
}

impl Mobility {
    pub fn new(policy: MobilityPolicy, grid: TorusGrid) -> Result<Self> {
        let chooser = match policy {
            MobilityPolicy::RandomWalk => Chooser::Neighbor,
            MobilityPolicy::RandomWaypoint | MobilityPolicy::ManhattanRandomWaypoint => {
                Chooser::Uniform
            }
            MobilityPolicy::LevyWalk { alpha } => Chooser::Levy(Arc::new(LevySampler::new(
                LevyParams::new(alpha, grid.side())?,
            )?)),
        };
        Ok(Self { grid, chooser })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn is_waypoint(&self) -> bool {
        !matches!(self.chooser, Chooser::Neighbor)
    }

    /// Next waypoint from `p`. For Random Walk this is a neighbour.
    pub fn sample_destination(&self, p: Position, rng: &mut SimRng) -> Position {
        match &self.chooser {
            Chooser::Neighbor => rw_step(p, &self.grid, rng),
            Chooser::Uniform => sample_destination_uniform(p, &self.grid, rng),
            Chooser::Levy(s) => s.sample(p, rng),
        }
    }

    pub fn next_move(&self, p: Position, t: u64, rng: &mut SimRng) -> Move {
        let dest = self.sample_destination(p, rng);
        Move::build(p, dest, t, &self.grid, rng)
    }

    /// Endless sequence of back-to-back moves from `start` at time `t0`.
    pub fn moves(&self, start: Position, t0: u64, rng: SimRng) -> MoveStream<'_> {
        MoveStream {
            mobility: self,
            pos: start,
            time: t0,
            rng,
        }
    }
}

pub struct MoveStream<'a> {
    mobility: &'a Mobility,
    pos: Position,
    time: u64,
    rng: SimRng,
}

impl Iterator for MoveStream<'_> {
    type Item = Move;

    fn next(&mut self) -> Option<Move> {
        let m = self.mobility.next_move(self.pos, self.time, &mut self.rng);
        self.pos = m.destination;
        self.time = m.end_time();
        Some(m)
    }
}

/// Per-agent movement state advanced one time step at a time.
#[derive(Clone, Debug)]
pub struct Walker {
    position: Position,
    time: u64,
    current: Option<Move>,
    rng: SimRng,
}

impl Walker {
    /// Walker at a uniformly random node, drawn from its own stream.
    pub fn spawn(grid: &TorusGrid, mut rng: SimRng) -> Self {
        let position = uniform_position(grid, &mut rng);
        Self::at(position, rng)
    }

    pub fn at(position: Position, rng: SimRng) -> Self {
        Self {
            position,
            time: 0,
            current: None,
            rng,
        }
    }

    pub fn position(&self) -> Position {
        self.position
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn current_move(&self) -> Option<&Move> {
        self.current.as_ref()
    }

    /// Advances one time step and returns the new position.
    pub fn step(&mut self, mobility: &Mobility) -> Position {
        let now = self.time;
        self.time += 1;
        if !mobility.is_waypoint() {
            self.position = rw_step(self.position, mobility.grid(), &mut self.rng);
            return self.position;
        }
        let needs_move = self.current.is_none_or(|m| m.end_time() <= now);
        if needs_move {
            self.current = Some(mobility.next_move(self.position, now, &mut self.rng));
        }
        let m = self.current.as_ref().expect("move present");
        self.position = m.position_at(self.time, mobility.grid());
        self.position
    }
}
