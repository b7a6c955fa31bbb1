//! Torus lattice geometry.
//!
//! Agents live on the nodes of an `n x n` grid whose boundary rows and
//! columns are glued to the opposite side. Distances are Manhattan distances
//! measured along the shorter way around each axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `n x n` torus. Every node has exactly four neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusGrid {
    n: u32,
}

/// A lattice node, always reduced modulo the grid side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Position {
    pub x: u32,
    pub y: u32,
}

impl Position {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

/// Unit move along one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    PosX,
    NegX,
    PosY,
    NegY,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::PosX,
        Direction::NegX,
        Direction::PosY,
        Direction::NegY,
    ];

    pub fn is_horizontal(self) -> bool {
        matches!(self, Direction::PosX | Direction::NegX)
    }

    pub fn reversed(self) -> Self {
        match self {
            Direction::PosX => Direction::NegX,
            Direction::NegX => Direction::PosX,
            Direction::PosY => Direction::NegY,
            Direction::NegY => Direction::PosY,
        }
    }
}

/// Shortest signed travel per axis from one node to another.
///
/// `tie_x` / `tie_y` are set when the axis separation is exactly `n / 2`, in
/// which case both travel directions are equally short and the sign of the
/// corresponding component is arbitrary (positive).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Displacement {
    pub dx: i64,
    pub dy: i64,
    pub tie_x: bool,
    pub tie_y: bool,
}

impl TorusGrid {
    pub fn new(n: u32) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidConfig(format!(
                "torus side must be at least 2, got {n}"
            )));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn side(&self) -> u32 {
        self.n
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.n as usize * self.n as usize
    }

    #[inline]
    pub fn contains(&self, p: Position) -> bool {
        p.x < self.n && p.y < self.n
    }

    /// Reduces arbitrary signed coordinates onto the torus.
    #[inline]
    pub fn wrap(&self, x: i64, y: i64) -> Position {
        let n = self.n as i64;
        Position::new(x.rem_euclid(n) as u32, y.rem_euclid(n) as u32)
    }

    /// Row-major node index in `[0, n^2)`.
    #[inline]
    pub fn index(&self, p: Position) -> usize {
        p.y as usize * self.n as usize + p.x as usize
    }

    #[inline]
    pub fn position(&self, index: usize) -> Position {
        let n = self.n as usize;
        Position::new((index % n) as u32, (index / n) as u32)
    }

    #[inline]
    pub fn step(&self, p: Position, dir: Direction) -> Position {
        let (x, y) = (p.x as i64, p.y as i64);
        match dir {
            Direction::PosX => self.wrap(x + 1, y),
            Direction::NegX => self.wrap(x - 1, y),
            Direction::PosY => self.wrap(x, y + 1),
            Direction::NegY => self.wrap(x, y - 1),
        }
    }

    pub fn neighbors(&self, p: Position) -> [Position; 4] {
        Direction::ALL.map(|d| self.step(p, d))
    }

    #[inline]
    fn axis_distance(&self, a: u32, b: u32) -> u32 {
        let raw = a.abs_diff(b);
        raw.min(self.n - raw)
    }

    /// Torus Manhattan distance.
    #[inline]
    pub fn distance(&self, p: Position, q: Position) -> u32 {
        self.axis_distance(p.x, q.x) + self.axis_distance(p.y, q.y)
    }

    /// Largest distance realised on this torus, `2 * floor(n / 2)`.
    pub fn max_distance(&self) -> u32 {
        2 * (self.n / 2)
    }

    pub fn are_adjacent(&self, p: Position, q: Position) -> bool {
        self.distance(p, q) == 1
    }

    /// Shortest signed travel from `p` to `q` on each axis.
    pub fn displacement(&self, p: Position, q: Position) -> Displacement {
        let (dx, tie_x) = self.axis_displacement(p.x, q.x);
        let (dy, tie_y) = self.axis_displacement(p.y, q.y);
        Displacement {
            dx,
            dy,
            tie_x,
            tie_y,
        }
    }

    fn axis_displacement(&self, from: u32, to: u32) -> (i64, bool) {
        let n = self.n as i64;
        let raw = (to as i64 - from as i64).rem_euclid(n);
        let back = n - raw;
        if raw == 0 {
            (0, false)
        } else if raw < back {
            (raw, false)
        } else if raw > back {
            (-back, false)
        } else {
            (raw, true)
        }
    }
}

/// Free-function form of [`TorusGrid::distance`].
pub fn torus_distance(p: Position, q: Position, g: &TorusGrid) -> u32 {
    g.distance(p, q)
}

/// Free-function form of [`TorusGrid::displacement`].
pub fn axis_displacement(p: Position, q: Position, g: &TorusGrid) -> Displacement {
    g.displacement(p, q)
}
