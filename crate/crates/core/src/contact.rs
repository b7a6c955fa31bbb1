//! Per-step contact detection between agents on the torus.
//!
//! With radius 0 two agents meet when they stand on the same node, or when
//! they exchange adjacent nodes during the step (they cross mid-edge). With a
//! positive radius they meet whenever their torus distance is within it.

use serde::{Deserialize, Serialize};

use crate::geometry::{Position, TorusGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContactKind {
    NodeCoincidence,
    EdgeSwap,
    RadiusProximity,
}

/// Contact between two agents, with `agent_a < agent_b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContactEvent {
    pub time: u64,
    pub agent_a: u32,
    pub agent_b: u32,
    pub kind: ContactKind,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactConfig {
    /// Torus Manhattan radius; 0 is the collocation model.
    pub radius: u32,
}

/// Radius-0 meeting test for one pair over one step.
pub fn collocated(
    prev_a: Position,
    curr_a: Position,
    prev_b: Position,
    curr_b: Position,
    g: &TorusGrid,
) -> Option<ContactKind> {
    if curr_a == curr_b {
        Some(ContactKind::NodeCoincidence)
    } else if prev_a == curr_b && prev_b == curr_a && g.are_adjacent(prev_a, prev_b) {
        Some(ContactKind::EdgeSwap)
    } else {
        None
    }
}

const NIL: u32 = u32::MAX;

/// Bucketed contact detector with reusable scratch space.
///
/// Agents are hashed into square cells (single nodes at radius 0) so the
/// expected cost per step is linear in the number of agents plus contacts.
#[derive(Clone, Debug)]
pub struct ContactDetector {
    grid: TorusGrid,
    radius: u32,
    cells_per_axis: u32,
    head: Vec<u32>,
    next: Vec<u32>,
    touched: Vec<usize>,
}

impl ContactDetector {
    pub fn new(grid: TorusGrid, cfg: ContactConfig) -> Self {
        let n = grid.side();
        let cells_per_axis = if cfg.radius == 0 {
            n
        } else {
            (n / cfg.radius).max(1)
        };
        Self {
            grid,
            radius: cfg.radius,
            cells_per_axis,
            head: vec![NIL; cells_per_axis as usize * cells_per_axis as usize],
            next: Vec::new(),
            touched: Vec::new(),
        }
    }

    #[inline]
    fn cell_coords(&self, p: Position) -> (u32, u32) {
        let n = self.grid.side() as u64;
        let c = self.cells_per_axis as u64;
        ((p.x as u64 * c / n) as u32, (p.y as u64 * c / n) as u32)
    }

    #[inline]
    fn cell_of(&self, p: Position) -> usize {
        let (cx, cy) = self.cell_coords(p);
        cy as usize * self.cells_per_axis as usize + cx as usize
    }

    fn fill(&mut self, curr: &[Position]) {
        self.next.clear();
        self.next.resize(curr.len(), NIL);
        // reverse insertion keeps each bucket list in ascending agent order
        for (i, &p) in curr.iter().enumerate().rev() {
            let c = self.cell_of(p);
            if self.head[c] == NIL {
                self.touched.push(c);
            }
            self.next[i] = self.head[c];
            self.head[c] = i as u32;
        }
    }

    fn clear(&mut self) {
        for &c in &self.touched {
            self.head[c] = NIL;
        }
        self.touched.clear();
    }

    /// Appends the contacts at `time` (positions `curr`, reached from `prev`)
    /// to `out`, sorted by agent pair.
    pub fn detect(
        &mut self,
        prev: &[Position],
        curr: &[Position],
        time: u64,
        out: &mut Vec<ContactEvent>,
    ) {
        assert_eq!(prev.len(), curr.len(), "agent sets differ");
        let start = out.len();
        self.fill(curr);
        if self.radius == 0 {
            self.detect_collocation(prev, curr, time, out);
        } else {
            self.detect_radius(curr, time, out);
        }
        self.clear();
        out[start..].sort_unstable_by_key(|e| (e.agent_a, e.agent_b));
    }

    fn detect_collocation(
        &self,
        prev: &[Position],
        curr: &[Position],
        time: u64,
        out: &mut Vec<ContactEvent>,
    ) {
        for a in 0..curr.len() {
            // same node: agents later in this bucket list
            let mut b = self.next[a];
            while b != NIL {
                out.push(ContactEvent {
                    time,
                    agent_a: a as u32,
                    agent_b: b,
                    kind: ContactKind::NodeCoincidence,
                });
                b = self.next[b as usize];
            }
            // crossing: someone now standing where `a` came from, coming from where `a` is
            if prev[a] == curr[a] {
                continue;
            }
            let mut b = self.head[self.cell_of(prev[a])];
            while b != NIL {
                let bi = b as usize;
                if bi > a && prev[bi] == curr[a] && self.grid.are_adjacent(prev[a], prev[bi]) {
                    out.push(ContactEvent {
                        time,
                        agent_a: a as u32,
                        agent_b: b,
                        kind: ContactKind::EdgeSwap,
                    });
                }
                b = self.next[bi];
            }
        }
    }

    fn detect_radius(&self, curr: &[Position], time: u64, out: &mut Vec<ContactEvent>) {
        let c = self.cells_per_axis as i64;
        let mut neighborhood: Vec<usize> = Vec::with_capacity(9);
        for a in 0..curr.len() {
            let (cx, cy) = self.cell_coords(curr[a]);
            neighborhood.clear();
            for oy in -1..=1i64 {
                for ox in -1..=1i64 {
                    let nx = (cx as i64 + ox).rem_euclid(c) as usize;
                    let ny = (cy as i64 + oy).rem_euclid(c) as usize;
                    let cell = ny * c as usize + nx;
                    if !neighborhood.contains(&cell) {
                        neighborhood.push(cell);
                    }
                }
            }
            for &cell in &neighborhood {
                let mut b = self.head[cell];
                while b != NIL {
                    let bi = b as usize;
                    if bi > a && self.grid.distance(curr[a], curr[bi]) <= self.radius {
                        out.push(ContactEvent {
                            time,
                            agent_a: a as u32,
                            agent_b: b,
                            kind: ContactKind::RadiusProximity,
                        });
                    }
                    b = self.next[bi];
                }
            }
        }
    }
}

/// Contacts at time `time` between consecutive position snapshots.
pub fn detect_contacts(
    prev: &[Position],
    curr: &[Position],
    cfg: ContactConfig,
    g: &TorusGrid,
    time: u64,
) -> Vec<ContactEvent> {
    let mut out = Vec::new();
    ContactDetector::new(*g, cfg).detect(prev, curr, time, &mut out);
    out
}

/// Disjoint-set forest over agent ids.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(len: usize) -> Self {
        Self {
            parent: (0..len as u32).collect(),
            size: vec![1; len],
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        true
    }

    /// Restores the listed elements to singletons.
    pub fn reset(&mut self, elems: impl IntoIterator<Item = u32>) {
        for e in elems {
            self.parent[e as usize] = e;
            self.size[e as usize] = 1;
        }
    }
}

/// Groups `agent_count` agents by the contact graph of one time step.
///
/// Components are sorted internally and ordered by their smallest member;
/// uncontacted agents appear as singletons.
pub fn contact_components(events: &[ContactEvent], agent_count: usize) -> Vec<Vec<u32>> {
    let mut uf = UnionFind::new(agent_count);
    for e in events {
        uf.union(e.agent_a, e.agent_b);
    }
    let mut slot: Vec<Option<usize>> = vec![None; agent_count];
    let mut groups: Vec<Vec<u32>> = Vec::new();
    for a in 0..agent_count as u32 {
        let r = uf.find(a) as usize;
        match slot[r] {
            Some(i) => groups[i].push(a),
            None => {
                slot[r] = Some(groups.len());
                groups.push(vec![a]);
            }
        }
    }
    groups
}
