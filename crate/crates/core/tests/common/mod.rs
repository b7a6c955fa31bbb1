//! Reference implementations shared by the integration tests. They avoid the
//! library's geometry, contact and dissemination code on purpose.

#![allow(dead_code)]

use std::collections::BTreeSet;

use floodsim::rng::SimRng;
use floodsim::{Position, RngSeed};
use rand::Rng;

fn wrap_delta(d: i64, n: i64) -> i64 {
    let d = d.rem_euclid(n);
    d.min(n - d)
}

pub fn torus_l1(a: Position, b: Position, n: u32) -> u32 {
    let n = n as i64;
    (wrap_delta(a.x as i64 - b.x as i64, n) + wrap_delta(a.y as i64 - b.y as i64, n)) as u32
}

/// All contact pairs for one step by checking every pair.
pub fn naive_contacts(
    prev: &[Position],
    curr: &[Position],
    n: u32,
    radius: u32,
) -> BTreeSet<(u32, u32)> {
    let mut out = BTreeSet::new();
    for i in 0..curr.len() {
        for j in i + 1..curr.len() {
            let hit = if radius == 0 {
                curr[i] == curr[j] || (prev[i] == curr[j] && prev[j] == curr[i])
            } else {
                torus_l1(curr[i], curr[j], n) <= radius
            };
            if hit {
                out.insert((i as u32, j as u32));
            }
        }
    }
    out
}

/// Straight-line Manhattan Random Way-point agent that spells out every unit
/// step of a move in advance.
///
/// Draw protocol per agent stream: start node index; then per move a
/// destination index among the other `n^2 - 1` nodes, a coin for the leg
/// order (horizontal first on heads), and a coin per antipodal axis (heads
/// flips the default positive direction).
struct RefAgent {
    pos: (i64, i64),
    pending: Vec<(i64, i64)>,
    rng: SimRng,
}

impl RefAgent {
    fn new(n: i64, mut rng: SimRng) -> Self {
        let i = rng.random_range(0..(n * n) as usize) as i64;
        Self {
            pos: (i % n, i / n),
            pending: Vec::new(),
            rng,
        }
    }

    fn plan(&mut self, n: i64) {
        let here = self.pos.1 * n + self.pos.0;
        let mut d = self.rng.random_range(0..(n * n - 1) as usize) as i64;
        if d >= here {
            d += 1;
        }
        let (tx, ty) = (d % n, d / n);
        let horizontal_first = self.rng.random_bool(0.5);
        let signed = |from: i64, to: i64, rng: &mut SimRng| {
            let raw = (to - from).rem_euclid(n);
            if raw * 2 == n {
                if rng.random_bool(0.5) {
                    -raw
                } else {
                    raw
                }
            } else if raw * 2 < n {
                raw
            } else {
                raw - n
            }
        };
        let dx = signed(self.pos.0, tx, &mut self.rng);
        let dy = signed(self.pos.1, ty, &mut self.rng);
        let (mut x, mut y) = self.pos;
        let mut steps = Vec::new();
        let walk_x = |steps: &mut Vec<(i64, i64)>, x: &mut i64, y: i64| {
            for _ in 0..dx.abs() {
                *x = (*x + dx.signum()).rem_euclid(n);
                steps.push((*x, y));
            }
        };
        if horizontal_first {
            walk_x(&mut steps, &mut x, y);
        }
        for _ in 0..dy.abs() {
            y = (y + dy.signum()).rem_euclid(n);
            steps.push((x, y));
        }
        if !horizontal_first {
            walk_x(&mut steps, &mut x, y);
        }
        steps.reverse();
        self.pending = steps;
    }

    fn step(&mut self, n: i64) -> (i64, i64) {
        if self.pending.is_empty() {
            self.plan(n);
        }
        self.pos = self.pending.pop().expect("planned move is non-empty");
        self.pos
    }
}

/// Flood time of `m` reference agents at radius 0 using a knowledge matrix
/// closed under each step's contacts. `None` past `max_steps`.
pub fn reference_flood_time(n: u32, m: u32, seed: RngSeed, max_steps: u64) -> Option<u64> {
    let (n, m) = (n as i64, m as usize);
    let mut agents: Vec<RefAgent> = (0..m)
        .map(|i| RefAgent::new(n, seed.stream(i as u64)))
        .collect();
    let mut know = vec![vec![false; m]; m];
    for (i, row) in know.iter_mut().enumerate() {
        row[i] = true;
    }
    let mut prev: Vec<(i64, i64)> = agents.iter().map(|a| a.pos).collect();
    let mut curr = prev.clone();
    let mut t = 0;
    loop {
        let mut pairs = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                if curr[i] == curr[j] || (prev[i] == curr[j] && prev[j] == curr[i]) {
                    pairs.push((i, j));
                }
            }
        }
        share(&mut know, &pairs);
        if know.iter().all(|r| r.iter().all(|&k| k)) {
            return Some(t);
        }
        if t >= max_steps {
            return None;
        }
        t += 1;
        prev = curr;
        curr = agents.iter_mut().map(|a| a.step(n)).collect();
    }
}

/// Repeatedly merges knowledge across contact pairs until nothing changes,
/// so information crosses a whole contact component in one step.
pub fn share(know: &mut [Vec<bool>], pairs: &[(usize, usize)]) {
    loop {
        let mut changed = false;
        for &(a, b) in pairs {
            for k in 0..know.len() {
                let v = know[a][k] || know[b][k];
                if v && !(know[a][k] && know[b][k]) {
                    know[a][k] = true;
                    know[b][k] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            return;
        }
    }
}
