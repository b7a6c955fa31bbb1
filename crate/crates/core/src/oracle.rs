//! Statistical and exhaustive checks of the collocation claims underlying the
//! flood-time bound for Manhattan Random Way-point agents.
//!
//! Each check simulates the quantity a claim talks about directly (move
//! overlaps, segment meetings, pair meetings, position independence, the
//! `n / 4` lower bound) and reports an estimate with its uncertainty. The
//! pass/fail thresholds live in [`run_claim`].
//!
//! Trials are independent: trial `i` draws from `seed.derive([i])`, so the
//! tallies do not depend on how work is split across threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact::collocated;
use crate::error::{Error, Result};
use crate::geometry::{Direction, Position, TorusGrid};
use crate::mobility::{Mobility, MobilityPolicy, Move, Walker};
use crate::rng::RngSeed;
use crate::spread::{run_realization, SimConfig};
use crate::stats::{binomial_ci95, chi_square_independence};
use crate::sweep::SCHEMA_VERSION;

/// Fraction threshold for the "constant probability" claims (overlap of at
/// least `n / 8`, flood time of at least `n / 4`): the claimed 1/2 less a
/// margin for sampling error and lattice discretization.
pub const HALF_PROBABILITY_THRESHOLD: f64 = 0.45;

/// Acceptable range for a non-degenerate independence p-value.
pub const INDEPENDENCE_P_RANGE: (f64, f64) = (0.001, 0.999);

/// p-value below which the lag-1 power check counts as dependence detected.
pub const DEPENDENCE_P_MAX: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Strong overlap

/// Closed time interval `[start, end]`; `start == end` is a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Span {
    start: u64,
    end: u64,
}

impl Span {
    fn within(self, outer: Span) -> bool {
        outer.start <= self.start && self.end <= outer.end
    }

    fn overlap(self, other: Span) -> u64 {
        self.end
            .min(other.end)
            .saturating_sub(self.start.max(other.start))
    }
}

fn whole(m: &Move) -> Span {
    Span {
        start: m.start_time,
        end: m.end_time(),
    }
}

/// The two segment spans of a move in travel order. A single-axis move has a
/// degenerate second span at its end time.
fn segment_spans(m: &Move) -> [Span; 2] {
    let [(_, l1), (_, l2)] = m.legs();
    let (first, _) = if l1 == 0 { (l2, l1) } else { (l1, l2) };
    let mid = m.start_time + first as u64;
    [
        Span {
            start: m.start_time,
            end: mid,
        },
        Span {
            start: mid,
            end: m.end_time(),
        },
    ]
}

/// Whether a segment of one move lies entirely inside the other move's time
/// interval.
pub fn strongly_overlap(a: &Move, b: &Move) -> bool {
    segment_spans(a).iter().any(|s| s.within(whole(b)))
        || segment_spans(b).iter().any(|s| s.within(whole(a)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OverlapCase {
    /// The move of `B` active at the start of `M_i` covers its first segment.
    PreviousCoversFirst,
    /// The next move of `B` covers the second segment of `M_i`.
    NextCoversSecond,
    /// The next move of `B` lies inside `M_i`.
    NextInside,
}

/// A pair of moves selected by the covering construction.
#[derive(Clone, Debug)]
pub struct OverlapPair {
    pub move_a: Move,
    pub move_b: Move,
    pub case: OverlapCase,
    /// Longest time overlap between a covered segment and a segment of the
    /// covering move.
    pub segment_overlap: u64,
}

impl OverlapPair {
    pub fn start_gap(&self) -> u64 {
        self.move_a.start_time.abs_diff(self.move_b.start_time)
    }
}

/// Runs two independent Manhattan Random Way-point agents from uniform
/// starts, picks the first move of agent `A` starting at or after time `n`,
/// and selects the strongly overlapping move of `B` by the covering
/// construction (previous move `M_j-` or next move `M_j+` of `B`).
pub fn sample_overlap_pair(mobility: &Mobility, seed: RngSeed) -> OverlapPair {
    let g = *mobility.grid();
    let n = g.side() as u64;
    let mut rng_a = seed.stream(0);
    let mut rng_b = seed.stream(1);
    let start_a = crate::mobility::uniform_position(&g, &mut rng_a);
    let start_b = crate::mobility::uniform_position(&g, &mut rng_b);

    let move_i = mobility
        .moves(start_a, 0, rng_a)
        .find(|m| m.start_time >= n)
        .expect("endless stream");
    let s_i = move_i.start_time;

    let mut stream_b = mobility.moves(start_b, 0, rng_b);
    let prev_j = stream_b
        .find(|m| m.start_time <= s_i && s_i < m.end_time())
        .expect("endless stream");
    let next_j = stream_b.next().expect("endless stream");

    let [first_i, second_i] = segment_spans(&move_i);
    let best_against = |covered: Span, cover: &Move| {
        segment_spans(cover)
            .iter()
            .map(|s| covered.overlap(*s))
            .max()
            .unwrap_or(0)
    };

    if prev_j.end_time() >= first_i.end {
        OverlapPair {
            segment_overlap: best_against(first_i, &prev_j),
            move_a: move_i,
            move_b: prev_j,
            case: OverlapCase::PreviousCoversFirst,
        }
    } else if next_j.end_time() >= move_i.end_time() {
        OverlapPair {
            segment_overlap: best_against(second_i, &next_j),
            move_a: move_i,
            move_b: next_j,
            case: OverlapCase::NextCoversSecond,
        }
    } else {
        let overlap = segment_spans(&next_j)
            .iter()
            .map(|s| best_against(*s, &move_i))
            .max()
            .unwrap_or(0);
        OverlapPair {
            segment_overlap: overlap,
            move_a: move_i,
            move_b: next_j,
            case: OverlapCase::NextInside,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub n: u32,
    pub total_moves_checked: u64,
    pub strong_overlap_found: u64,
    pub overlap_ge_n_over_8: u64,
    pub max_start_gap: u64,
    pub case_counts: [u64; 3],
}

impl OverlapReport {
    pub fn long_overlap_fraction(&self) -> f64 {
        self.overlap_ge_n_over_8 as f64 / self.total_moves_checked.max(1) as f64
    }
}

#[derive(Default)]
struct OverlapTally {
    checked: u64,
    found: u64,
    long: u64,
    max_gap: u64,
    cases: [u64; 3],
}

impl OverlapTally {
    fn merge(mut self, o: OverlapTally) -> Self {
        self.checked += o.checked;
        self.found += o.found;
        self.long += o.long;
        self.max_gap = self.max_gap.max(o.max_gap);
        for (a, b) in self.cases.iter_mut().zip(o.cases) {
            *a += b;
        }
        self
    }
}

pub fn check_strong_overlap(n: u32, trials: u64, seed: RngSeed) -> Result<OverlapReport> {
    if n < 8 {
        return Err(Error::InvalidConfig(format!(
            "overlap check needs n >= 8, got {n}"
        )));
    }
    let mobility = Mobility::new(MobilityPolicy::ManhattanRandomWaypoint, TorusGrid::new(n)?)?;
    let tally = (0..trials)
        .into_par_iter()
        .map(|i| {
            let pair = sample_overlap_pair(&mobility, seed.derive(&[i]));
            let mut t = OverlapTally {
                checked: 1,
                found: strongly_overlap(&pair.move_a, &pair.move_b) as u64,
                long: (8 * pair.segment_overlap >= n as u64) as u64,
                max_gap: pair.start_gap(),
                cases: [0; 3],
            };
            t.cases[pair.case as usize] = 1;
            t
        })
        .reduce(OverlapTally::default, OverlapTally::merge);
    Ok(OverlapReport {
        n,
        total_moves_checked: tally.checked,
        strong_overlap_found: tally.found,
        overlap_ge_n_over_8: tally.long,
        max_start_gap: tally.max_gap,
        case_counts: tally.cases,
    })
}

// ---------------------------------------------------------------------------
// Segment and pair connection

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionCase {
    /// One horizontal, one vertical segment.
    Perpendicular,
    /// Both horizontal, opposite directions.
    AntiParallel,
    /// Both horizontal, same direction.
    Parallel,
    /// Two agents with strongly overlapping moves.
    StrongOverlapPair,
}

impl ConnectionCase {
    fn direction_b(self) -> Direction {
        match self {
            ConnectionCase::Perpendicular => Direction::PosY,
            ConnectionCase::AntiParallel => Direction::NegX,
            _ => Direction::PosX,
        }
    }

    /// Exact meeting probability of two trimmed segments of length `ell` with
    /// a uniformly translated second segment: `ell`, `2 ell` or `1` of the
    /// `n^2` placements.
    pub fn placements(self, ell: u32) -> Option<u64> {
        match self {
            ConnectionCase::Perpendicular => Some(ell as u64),
            ConnectionCase::AntiParallel => Some(2 * ell as u64),
            ConnectionCase::Parallel => Some(1),
            ConnectionCase::StrongOverlapPair => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectionEstimate {
    pub case: ConnectionCase,
    pub ell: Option<u32>,
    pub n: u32,
    pub trials: u64,
    pub hits: u64,
    pub exhaustive: bool,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl ConnectionEstimate {
    pub fn estimate(&self) -> f64 {
        self.hits as f64 / self.trials.max(1) as f64
    }

    fn from_counts(
        case: ConnectionCase,
        ell: Option<u32>,
        n: u32,
        trials: u64,
        hits: u64,
        exhaustive: bool,
    ) -> Self {
        let (ci_low, ci_high) = if exhaustive {
            let p = hits as f64 / trials as f64;
            (p, p)
        } else {
            binomial_ci95(hits, trials)
        };
        Self {
            case,
            ell,
            n,
            trials,
            hits,
            exhaustive,
            ci_low,
            ci_high,
        }
    }
}

fn segment_points(g: &TorusGrid, start: Position, dir: Direction, ell: u32) -> Vec<Position> {
    let mut out = Vec::with_capacity(ell as usize + 1);
    let mut p = start;
    out.push(p);
    for _ in 0..ell {
        p = g.step(p, dir);
        out.push(p);
    }
    out
}

fn paths_meet(g: &TorusGrid, a: &[Position], b: &[Position]) -> bool {
    a.windows(2)
        .zip(b.windows(2))
        .any(|(wa, wb)| collocated(wa[0], wa[1], wb[0], wb[1], g).is_some())
}

/// Probability that two time-aligned segments of length `ell` meet when the
/// first is fixed at the origin heading `+x` and the second is translated
/// uniformly over the torus. `trials == 0` enumerates all `n^2` placements.
pub fn estimate_segment_connection(
    case: ConnectionCase,
    ell: u32,
    n: u32,
    trials: u64,
    seed: RngSeed,
) -> Result<ConnectionEstimate> {
    if case == ConnectionCase::StrongOverlapPair {
        return Err(Error::InvalidConfig(
            "use estimate_pair_connection for strong-overlap pairs".into(),
        ));
    }
    let g = TorusGrid::new(n)?;
    if ell < 1 || ell > n / 2 {
        return Err(Error::InvalidConfig(format!(
            "segment length must be in [1, {}], got {ell}",
            n / 2
        )));
    }
    let fixed = segment_points(&g, Position::new(0, 0), Direction::PosX, ell);
    let dir_b = case.direction_b();
    let meets = |start: Position| paths_meet(&g, &fixed, &segment_points(&g, start, dir_b, ell));

    if trials == 0 {
        let hits = (0..g.node_count())
            .filter(|&i| meets(g.position(i)))
            .count() as u64;
        return Ok(ConnectionEstimate::from_counts(
            case,
            Some(ell),
            n,
            g.node_count() as u64,
            hits,
            true,
        ));
    }
    let hits = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.derive(&[i]).rng();
            meets(crate::mobility::uniform_position(&g, &mut rng)) as u64
        })
        .sum();
    Ok(ConnectionEstimate::from_counts(
        case,
        Some(ell),
        n,
        trials,
        hits,
        false,
    ))
}

/// Whether the two agents of `pair` meet while both moves are in progress.
pub fn pair_connects(g: &TorusGrid, pair: &OverlapPair) -> bool {
    let (a, b) = (&pair.move_a, &pair.move_b);
    let lo = a.start_time.max(b.start_time);
    let hi = a.end_time().min(b.end_time());
    if lo > hi {
        return false;
    }
    let mut pa = a.position_at(lo, g);
    let mut pb = b.position_at(lo, g);
    if pa == pb {
        return true;
    }
    for t in lo + 1..=hi {
        let (na, nb) = (a.position_at(t, g), b.position_at(t, g));
        if collocated(pa, na, pb, nb, g).is_some() {
            return true;
        }
        pa = na;
        pb = nb;
    }
    false
}

/// Meeting probability of two agents over a strongly overlapping pair of
/// Manhattan Random Way-point moves.
pub fn estimate_pair_connection(n: u32, trials: u64, seed: RngSeed) -> Result<ConnectionEstimate> {
    if n < 8 {
        return Err(Error::InvalidConfig(format!(
            "pair check needs n >= 8, got {n}"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidConfig(
            "pair check needs at least one trial".into(),
        ));
    }
    let g = TorusGrid::new(n)?;
    let mobility = Mobility::new(MobilityPolicy::ManhattanRandomWaypoint, g)?;
    let hits = (0..trials)
        .into_par_iter()
        .map(|i| pair_connects(&g, &sample_overlap_pair(&mobility, seed.derive(&[i]))) as u64)
        .sum();
    Ok(ConnectionEstimate::from_counts(
        ConnectionCase::StrongOverlapPair,
        None,
        n,
        trials,
        hits,
        false,
    ))
}

// ---------------------------------------------------------------------------
// Independence

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub n: u32,
    pub gap: u64,
    pub trials: u64,
    pub cells_per_axis: u32,
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
    pub min_expected: f64,
    /// Visit counts of each coarse cell at the first sampled time.
    pub first_marginal: Vec<u64>,
    /// Visit counts of each coarse cell at the second sampled time.
    pub second_marginal: Vec<u64>,
}

/// Chi-square test of independence between one agent's coarse cell at time
/// `t` and at time `t + gap`, after an `n^2`-step burn-in from a uniform start.
pub fn check_independence(
    n: u32,
    gap: u64,
    trials: u64,
    cells_per_axis: u32,
    seed: RngSeed,
) -> Result<IndependenceReport> {
    let g = TorusGrid::new(n)?;
    if gap < 1 {
        return Err(Error::InvalidConfig("gap must be at least 1".into()));
    }
    if cells_per_axis < 2 || cells_per_axis > n {
        return Err(Error::InvalidConfig(format!(
            "cells per axis must be in [2, {n}], got {cells_per_axis}"
        )));
    }
    let k = (cells_per_axis * cells_per_axis) as usize;
    let expected_per_cell = trials as f64 / (k * k) as f64;
    if expected_per_cell < 5.0 {
        return Err(Error::InsufficientData(format!(
            "{trials} trials give {expected_per_cell:.2} expected counts per cell of a {k}x{k} table; need at least 5"
        )));
    }
    let mobility = Mobility::new(MobilityPolicy::ManhattanRandomWaypoint, g)?;
    let burn_in = g.node_count() as u64;
    let cell = |p: Position| {
        let cx = p.x as usize * cells_per_axis as usize / n as usize;
        let cy = p.y as usize * cells_per_axis as usize / n as usize;
        cy * cells_per_axis as usize + cx
    };
    let table = (0..trials)
        .into_par_iter()
        .fold(
            || vec![0u64; k * k],
            |mut table, i| {
                let mut w = Walker::spawn(&g, seed.derive(&[i]).rng());
                for _ in 0..burn_in {
                    w.step(&mobility);
                }
                let first = cell(w.position());
                for _ in 0..gap {
                    w.step(&mobility);
                }
                table[first * k + cell(w.position())] += 1;
                table
            },
        )
        .reduce(
            || vec![0u64; k * k],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let test = chi_square_independence(&table, k, k).ok_or_else(|| {
        Error::InsufficientData("contingency table has fewer than two live rows or columns".into())
    })?;
    let first_marginal = (0..k)
        .map(|r| table[r * k..(r + 1) * k].iter().sum())
        .collect();
    let second_marginal = (0..k)
        .map(|c| (0..k).map(|r| table[r * k + c]).sum())
        .collect();
    Ok(IndependenceReport {
        n,
        gap,
        trials,
        cells_per_axis,
        statistic: test.statistic,
        dof: test.dof,
        p_value: test.p_value,
        min_expected: test.min_expected,
        first_marginal,
        second_marginal,
    })
}

// ---------------------------------------------------------------------------
// Lower bound

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub n: u32,
    pub m: u32,
    pub reps: u64,
    /// Runs whose flood time is at least `n / 4` (censored runs count).
    pub hits: u64,
    pub fraction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Fraction of Manhattan Random Way-point realizations with flood time at
/// least `n / 4`.
pub fn check_lower_bound(n: u32, m: u32, reps: u64, seed: RngSeed) -> Result<LowerBoundReport> {
    if m < 2 {
        return Err(Error::InvalidConfig(format!(
            "lower-bound check needs m >= 2, got {m}"
        )));
    }
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    let base = SimConfig::new(n, m, MobilityPolicy::ManhattanRandomWaypoint);
    base.validate()?;
    let hits: u64 = (0..reps)
        .into_par_iter()
        .map(|r| {
            let cfg = base.clone().with_seed(seed.derive(&[r]));
            let res = run_realization(&cfg)?;
            let long = match res.flood_time {
                Some(t) => 4 * t >= n as u64,
                None => true,
            };
            Ok(long as u64)
        })
        .sum::<Result<u64>>()?;
    let (ci_low, ci_high) = binomial_ci95(hits, reps);
    Ok(LowerBoundReport {
        n,
        m,
        reps,
        hits,
        fraction: hits as f64 / reps as f64,
        ci_low,
        ci_high,
    })
}

// ---------------------------------------------------------------------------
// Claim driver

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "claim", rename_all = "snake_case")]
pub enum Claim {
    Overlap {
        n: u32,
        trials: u64,
    },
    Segment {
        case: ConnectionCase,
        ell: u32,
        n: u32,
        trials: u64,
    },
    Pair {
        n: u32,
        trials: u64,
    },
    Independence {
        n: u32,
        gap: u64,
        trials: u64,
        cells_per_axis: u32,
    },
    LowerBound {
        n: u32,
        m: u32,
        reps: u64,
    },
}

impl Claim {
    pub fn id(&self) -> &'static str {
        match self {
            Claim::Overlap { .. } => "overlap",
            Claim::Segment { .. } => "segment",
            Claim::Pair { .. } => "pair",
            Claim::Independence { .. } => "independence",
            Claim::LowerBound { .. } => "lowerbound",
        }
    }
}

/// Outcome of one claim check, serialised as the JSON report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimReport {
    pub schema_version: u32,
    pub claim: String,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub pass: bool,
    pub trials: u64,
    pub criterion: String,
    pub details: serde_json::Value,
}

fn details<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serialisable report")
}

/// Runs a claim check and applies its pass criterion.
pub fn run_claim(claim: &Claim, seed: RngSeed) -> Result<ClaimReport> {
    let report = |estimate, ci: (f64, f64), pass, trials, criterion: String, d| ClaimReport {
        schema_version: SCHEMA_VERSION,
        claim: claim.id().to_string(),
        estimate,
        ci_low: ci.0,
        ci_high: ci.1,
        pass,
        trials,
        criterion,
        details: d,
    };
    Ok(match *claim {
        Claim::Overlap { n, trials } => {
            let r = check_strong_overlap(n, trials, seed)?;
            let frac = r.long_overlap_fraction();
            let pass = r.strong_overlap_found == r.total_moves_checked
                && r.max_start_gap <= n as u64
                && frac >= HALF_PROBABILITY_THRESHOLD;
            report(
                frac,
                binomial_ci95(r.overlap_ge_n_over_8, r.total_moves_checked),
                pass,
                trials,
                format!(
                    "every move strongly overlapped, start gap <= n, fraction with overlap >= n/8 at least {HALF_PROBABILITY_THRESHOLD}"
                ),
                details(&r),
            )
        }
        Claim::Segment {
            case,
            ell,
            n,
            trials,
        } => {
            let r = estimate_segment_connection(case, ell, n, trials, seed)?;
            let placements = case.placements(ell).expect("segment case");
            let n2 = (n as u64) * (n as u64);
            let p = placements as f64 / n2 as f64;
            let pass = if r.exhaustive {
                r.hits == placements && r.trials == n2
            } else {
                let sigma = (p * (1.0 - p) / r.trials as f64).sqrt();
                (r.estimate() - p).abs() <= 3.0 * sigma
            };
            report(
                r.estimate(),
                (r.ci_low, r.ci_high),
                pass,
                r.trials,
                format!(
                    "probability {placements}/{n2}{}",
                    if r.exhaustive {
                        " exactly"
                    } else {
                        " within 3 sigma"
                    }
                ),
                details(&r),
            )
        }
        Claim::Pair { n, trials } => {
            let r = estimate_pair_connection(n, trials, seed)?;
            let (lo, hi) = (1.0 / (16.0 * n as f64), 16.0 / n as f64);
            let p = r.estimate();
            report(
                p,
                (r.ci_low, r.ci_high),
                lo <= p && p <= hi,
                trials,
                format!("estimate in [1/(16n), 16/n] = [{lo}, {hi}]"),
                details(&r),
            )
        }
        Claim::Independence {
            n,
            gap,
            trials,
            cells_per_axis,
        } => {
            let r = check_independence(n, gap, trials, cells_per_axis, seed)?;
            let (pass, criterion) = if gap >= 2 * n as u64 {
                let (lo, hi) = INDEPENDENCE_P_RANGE;
                (
                    (lo..=hi).contains(&r.p_value),
                    format!("gap >= 2n: p-value in [{lo}, {hi}]"),
                )
            } else {
                (
                    r.p_value < DEPENDENCE_P_MAX,
                    format!(
                        "gap < 2n power check: dependence detected, p-value < {DEPENDENCE_P_MAX}"
                    ),
                )
            };
            report(
                r.p_value,
                (r.p_value, r.p_value),
                pass,
                trials,
                criterion,
                details(&r),
            )
        }
        Claim::LowerBound { n, m, reps } => {
            let r = check_lower_bound(n, m, reps, seed)?;
            report(
                r.fraction,
                (r.ci_low, r.ci_high),
                r.fraction >= HALF_PROBABILITY_THRESHOLD,
                reps,
                format!(
                    "fraction of runs with flood time >= n/4 at least {HALF_PROBABILITY_THRESHOLD}"
                ),
                details(&r),
            )
        }
    })
}
