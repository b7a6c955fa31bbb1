//! Seeded realizations of the dissemination process on the torus.
//!
//! Each of the `m` agents starts at a uniform node holding its own bit. Every
//! step all agents advance one unit, contacts are detected, and every contact
//! component pools its information. A realization ends when every agent knows
//! every bit (the flood time) or when the step budget runs out.

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::contact::{ContactConfig, ContactDetector, ContactEvent, UnionFind};
use crate::error::{Error, Result};
use crate::geometry::{Position, TorusGrid};
use crate::mobility::{Mobility, MobilityPolicy, Walker};
use crate::rng::RngSeed;

/// Bits known by one agent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InfoSet {
    bits: FixedBitSet,
}

impl InfoSet {
    /// The set `{own}` out of `capacity` bits.
    pub fn singleton(own: usize, capacity: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(capacity);
        bits.insert(own);
        Self { bits }
    }

    pub fn contains(&self, bit: usize) -> bool {
        self.bits.contains(bit)
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    pub fn is_subset(&self, other: &InfoSet) -> bool {
        self.bits.is_subset(&other.bits)
    }

    pub fn union_with(&mut self, other: &InfoSet) {
        self.bits.union_with(&other.bits);
    }

    /// Bits in `other` that are missing here.
    pub fn missing_from<'a>(&'a self, other: &'a InfoSet) -> impl Iterator<Item = usize> + 'a {
        other.bits.difference(&self.bits)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: u32,
    pub m: u32,
    pub policy: MobilityPolicy,
    pub contact: ContactConfig,
    /// `None` selects [`default_max_steps`].
    pub max_steps: Option<u64>,
    pub seed: RngSeed,
}

impl SimConfig {
    pub fn new(n: u32, m: u32, policy: MobilityPolicy) -> Self {
        Self {
            n,
            m,
            policy,
            contact: ContactConfig::default(),
            max_steps: None,
            seed: RngSeed(0),
        }
    }

    pub fn with_seed(mut self, seed: impl Into<RngSeed>) -> Self {
        self.seed = seed.into();
        self
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = Some(max_steps);
        self
    }

    pub fn with_radius(mut self, radius: u32) -> Self {
        self.contact.radius = radius;
        self
    }

    pub fn effective_max_steps(&self) -> u64 {
        self.max_steps
            .unwrap_or_else(|| default_max_steps(self.n, self.m))
    }

    pub fn validate(&self) -> Result<()> {
        TorusGrid::new(self.n)?;
        if self.m < 1 {
            return Err(Error::InvalidConfig(
                "agent count must be at least 1".into(),
            ));
        }
        if self.max_steps == Some(0) {
            return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
        }
        if let MobilityPolicy::LevyWalk { alpha } = self.policy {
            crate::mobility::LevyParams::new(alpha, self.n)?;
        }
        Ok(())
    }
}

/// `200 * n * ceil(n / m) * (1 + log2 m)`: a generous multiple of the
/// `n log m ceil((n/m) log(nm))` flood-time scale.
pub fn default_max_steps(n: u32, m: u32) -> u64 {
    let n = n as f64;
    let m = m.max(1) as f64;
    (200.0 * n * (n / m).ceil() * (1.0 + m.log2())).ceil() as u64
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealizationResult {
    /// First step at which every agent knows every bit; `None` when censored.
    pub flood_time: Option<u64>,
    pub censored: bool,
    /// Per bit, the first step at which every agent knows it.
    pub broadcast_times: Vec<Option<u64>>,
    pub contact_count: u64,
    pub steps_run: u64,
}

/// Information state of a running realization.
struct Dissemination {
    sets: Vec<InfoSet>,
    known_by: Vec<u32>,
    broadcast_times: Vec<Option<u64>>,
    complete_bits: usize,
    uf: UnionFind,
    touched: Vec<u32>,
    groups: Vec<(u32, u32)>,
    pooled: InfoSet,
}

impl Dissemination {
    fn new(m: usize) -> Self {
        let mut d = Self {
            sets: (0..m).map(|i| InfoSet::singleton(i, m)).collect(),
            known_by: vec![1; m],
            broadcast_times: vec![None; m],
            complete_bits: 0,
            uf: UnionFind::new(m),
            touched: Vec::new(),
            groups: Vec::new(),
            pooled: InfoSet::singleton(0, m),
        };
        if m == 1 {
            d.broadcast_times[0] = Some(0);
            d.complete_bits = 1;
        }
        d
    }

    fn is_flooded(&self) -> bool {
        self.complete_bits == self.sets.len()
    }

    /// Pools information inside each contact component.
    fn exchange(&mut self, events: &[ContactEvent], time: u64) {
        if events.is_empty() {
            return;
        }
        for e in events {
            self.uf.union(e.agent_a, e.agent_b);
            self.touched.push(e.agent_a);
            self.touched.push(e.agent_b);
        }
        self.touched.sort_unstable();
        self.touched.dedup();
        self.groups.clear();
        for &a in &self.touched {
            let root = self.uf.find(a);
            self.groups.push((root, a));
        }
        self.groups.sort_unstable();

        let m = self.sets.len() as u32;
        let mut i = 0;
        while i < self.groups.len() {
            let root = self.groups[i].0;
            let mut j = i;
            while j < self.groups.len() && self.groups[j].0 == root {
                j += 1;
            }
            let members = &self.groups[i..j];
            self.pooled.clone_from(&self.sets[members[0].1 as usize]);
            for &(_, a) in &members[1..] {
                self.pooled.union_with(&self.sets[a as usize]);
            }
            for &(_, a) in members {
                let set = &mut self.sets[a as usize];
                for bit in set.missing_from(&self.pooled) {
                    self.known_by[bit] += 1;
                    if self.known_by[bit] == m {
                        self.broadcast_times[bit] = Some(time);
                        self.complete_bits += 1;
                    }
                }
                debug_assert!(set.is_subset(&self.pooled));
                set.clone_from(&self.pooled);
            }
            i = j;
        }
        let touched = std::mem::take(&mut self.touched);
        self.uf.reset(touched.iter().copied());
        self.touched = touched;
        self.touched.clear();
    }
}

/// Runs one seeded realization.
pub fn run_realization(cfg: &SimConfig) -> Result<RealizationResult> {
    cfg.validate()?;
    let grid = TorusGrid::new(cfg.n)?;
    let mobility = Mobility::new(cfg.policy, grid)?;
    let m = cfg.m as usize;
    let max_steps = cfg.effective_max_steps();

    let mut walkers: Vec<Walker> = (0..m)
        .map(|i| Walker::spawn(&grid, cfg.seed.stream(i as u64)))
        .collect();
    let mut prev: Vec<Position> = walkers.iter().map(Walker::position).collect();
    let mut curr = prev.clone();

    let mut detector = ContactDetector::new(grid, cfg.contact);
    let mut state = Dissemination::new(m);
    let mut events: Vec<ContactEvent> = Vec::new();
    let mut contact_count = 0u64;

    detector.detect(&prev, &curr, 0, &mut events);
    contact_count += events.len() as u64;
    state.exchange(&events, 0);

    let mut t = 0u64;
    while !state.is_flooded() && t < max_steps {
        t += 1;
        std::mem::swap(&mut prev, &mut curr);
        for (slot, w) in curr.iter_mut().zip(walkers.iter_mut()) {
            *slot = w.step(&mobility);
        }
        events.clear();
        detector.detect(&prev, &curr, t, &mut events);
        contact_count += events.len() as u64;
        state.exchange(&events, t);
    }

    let flooded = state.is_flooded();
    Ok(RealizationResult {
        flood_time: flooded.then_some(t),
        censored: !flooded,
        broadcast_times: state.broadcast_times,
        contact_count,
        steps_run: t,
    })
}

/// Information pooling driven by externally supplied contacts (trace replay).
pub(crate) struct Flooding {
    inner: Dissemination,
}

impl Flooding {
    pub(crate) fn new(m: usize) -> Self {
        Self {
            inner: Dissemination::new(m),
        }
    }

    pub(crate) fn apply(&mut self, events: &[ContactEvent], step: u64) {
        self.inner.exchange(events, step);
    }

    pub(crate) fn is_flooded(&self) -> bool {
        self.inner.is_flooded()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::ContactKind;

    fn ev(a: u32, b: u32) -> ContactEvent {
        ContactEvent {
            time: 0,
            agent_a: a,
            agent_b: b,
            kind: ContactKind::NodeCoincidence,
        }
    }

    #[test]
    fn single_agent_floods_immediately() {
        let r = run_realization(&SimConfig::new(
            8,
            1,
            MobilityPolicy::ManhattanRandomWaypoint,
        ))
        .unwrap();
        assert_eq!(r.flood_time, Some(0));
        assert_eq!(r.steps_run, 0);
        assert_eq!(r.broadcast_times, vec![Some(0)]);
    }

    #[test]
    fn co_located_start_floods_at_zero() {
        // find a seed whose two agents spawn on the same node of a 2x2 torus
        let seed = (0..1000u64)
            .find(|&s| {
                let g = TorusGrid::new(2).unwrap();
                let a = Walker::spawn(&g, RngSeed(s).stream(0)).position();
                let b = Walker::spawn(&g, RngSeed(s).stream(1)).position();
                a == b
            })
            .unwrap();
        let cfg = SimConfig::new(2, 2, MobilityPolicy::ManhattanRandomWaypoint).with_seed(seed);
        let r = run_realization(&cfg).unwrap();
        assert_eq!(r.flood_time, Some(0));
        assert!(r.contact_count >= 1);
    }

    #[test]
    fn deterministic_in_seed() {
        let cfg = SimConfig::new(8, 4, MobilityPolicy::ManhattanRandomWaypoint).with_seed(99);
        let first = run_realization(&cfg).unwrap();
        for _ in 0..4 {
            assert_eq!(run_realization(&cfg).unwrap(), first);
        }
        let other = run_realization(&cfg.clone().with_seed(100)).unwrap();
        assert!(first.flood_time.is_some() && other.flood_time.is_some());
    }

    #[test]
    fn flood_time_is_last_broadcast() {
        for seed in 0..20 {
            for policy in [
                MobilityPolicy::RandomWalk,
                MobilityPolicy::ManhattanRandomWaypoint,
                MobilityPolicy::LevyWalk { alpha: 1.5 },
            ] {
                let cfg = SimConfig::new(10, 6, policy).with_seed(seed);
                let r = run_realization(&cfg).unwrap();
                let ft = r.flood_time.expect("uncensored");
                let last = r.broadcast_times.iter().map(|b| b.unwrap()).max().unwrap();
                assert_eq!(ft, last);
                assert!(ft <= r.steps_run);
            }
        }
    }

    #[test]
    fn censoring_is_reported() {
        let cfg = SimConfig::new(50, 3, MobilityPolicy::RandomWalk)
            .with_seed(1)
            .with_max_steps(5);
        let r = run_realization(&cfg).unwrap();
        assert!(r.censored);
        assert_eq!(r.flood_time, None);
        assert_eq!(r.steps_run, 5);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(run_realization(&SimConfig::new(1, 2, MobilityPolicy::RandomWalk)).is_err());
        assert!(run_realization(&SimConfig::new(8, 0, MobilityPolicy::RandomWalk)).is_err());
        assert!(run_realization(&SimConfig::new(
            8,
            2,
            MobilityPolicy::LevyWalk { alpha: -1.0 }
        ))
        .is_err());
        assert!(run_realization(
            &SimConfig::new(8, 2, MobilityPolicy::RandomWalk).with_max_steps(0)
        )
        .is_err());
    }

    #[test]
    fn component_union_equalizes_sets() {
        let mut d = Dissemination::new(5);
        d.exchange(&[ev(0, 1)], 1);
        d.exchange(&[ev(1, 2), ev(3, 4)], 2);
        assert_eq!(d.sets[1], d.sets[2]);
        assert_eq!(d.sets[3], d.sets[4]);
        assert_eq!(d.sets[2].len(), 3);
        assert!(!d.sets[0].contains(2));
        // transitive within a step
        d.exchange(&[ev(0, 3), ev(3, 2), ev(1, 4)], 3);
        assert!(d.is_flooded());
        assert!(d.broadcast_times.iter().all(|b| *b == Some(3)));
    }

    #[test]
    fn broadcast_time_recorded_per_bit() {
        let mut d = Dissemination::new(3);
        d.exchange(&[ev(0, 1)], 4);
        d.exchange(&[ev(1, 2)], 7);
        assert_eq!(d.broadcast_times, vec![Some(7), Some(7), None]);
        d.exchange(&[ev(0, 1)], 9);
        assert_eq!(d.broadcast_times, vec![Some(7), Some(7), Some(9)]);
        assert!(d.is_flooded());
    }

    #[test]
    fn default_budget_formula() {
        // 200 * 8 * ceil(8/4) * (1 + 2)
        assert_eq!(default_max_steps(8, 4), 9600);
        assert_eq!(default_max_steps(8, 1), 1600 * 8);
    }
}
