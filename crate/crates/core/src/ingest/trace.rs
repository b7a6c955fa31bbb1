//! Time-stamped position traces: loading, synthesis on road graphs, contact
//! filtering and flooding replay.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geo::{proximity_pairs, LatLon};
use super::graph::{RoadGraph, Station};
use super::transition::{uniform_model, TransitionModel};
use crate::contact::{ContactEvent, ContactKind};
use crate::error::{Error, Result};
use crate::rng::{RngSeed, SimRng};
use crate::spread::Flooding;
use crate::sweep::{rep_seed, RunRecord, SweepPoint, SweepResult};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Seconds.
    pub t: f64,
    pub pos: LatLon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub agent: String,
    /// Strictly increasing in `t`.
    pub samples: Vec<Sample>,
}

impl Trace {
    /// Median sampling interval, if every interval is within `tolerance`
    /// (relative) of it.
    pub fn regular_interval(&self, tolerance: f64) -> Option<f64> {
        let mut gaps: Vec<f64> = self.samples.windows(2).map(|w| w[1].t - w[0].t).collect();
        if gaps.is_empty() {
            return None;
        }
        gaps.sort_by(f64::total_cmp);
        let median = gaps[gaps.len() / 2];
        gaps.iter()
            .all(|g| (g - median).abs() <= tolerance * median)
            .then_some(median)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceLoad {
    pub traces: Vec<Trace>,
    /// Agents with fewer than two samples.
    pub dropped_agents: Vec<String>,
    /// Samples repeating an agent's earlier timestamp, discarded.
    pub duplicate_samples: u64,
}

#[derive(Deserialize)]
struct TraceRow {
    agent_id: String,
    timestamp: f64,
    lat: f64,
    lon: f64,
}

/// Reads agent_id,timestamp,lat,lon rows, grouped by agent in order of first
/// appearance and sorted by time.
pub fn load_traces(path: &Path) -> Result<TraceLoad> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut traces: Vec<Trace> = Vec::new();
    for (line, row) in rdr.deserialize().enumerate() {
        let r: TraceRow = row.map_err(|e| Error::csv(path, e))?;
        let pos = LatLon::new(r.lat, r.lon);
        if !r.timestamp.is_finite() || !pos.is_valid() {
            return Err(Error::malformed(
                path,
                format!("row {}: invalid time or coordinates", line + 2),
            ));
        }
        let i = *index.entry(r.agent_id.clone()).or_insert_with(|| {
            traces.push(Trace {
                agent: r.agent_id.clone(),
                samples: Vec::new(),
            });
            traces.len() - 1
        });
        traces[i].samples.push(Sample {
            t: r.timestamp,
            pos,
        });
    }
    let mut duplicate_samples = 0;
    for tr in &mut traces {
        tr.samples.sort_by(|a, b| a.t.total_cmp(&b.t));
        let before = tr.samples.len();
        tr.samples.dedup_by(|b, a| a.t == b.t);
        duplicate_samples += (before - tr.samples.len()) as u64;
    }
    let (traces, dropped): (Vec<Trace>, Vec<Trace>) =
        traces.into_iter().partition(|t| t.samples.len() >= 2);
    let dropped_agents: Vec<String> = dropped.into_iter().map(|t| t.agent).collect();
    if !dropped_agents.is_empty() {
        log::warn!(
            "{}: dropped {} agents with fewer than 2 samples",
            path.display(),
            dropped_agents.len()
        );
    }
    if traces.is_empty() {
        return Err(Error::malformed(path, "no agent has two or more samples"));
    }
    Ok(TraceLoad {
        traces,
        dropped_agents,
        duplicate_samples,
    })
}

/// Samples of all traces grouped by identical timestamp, in time order, as
/// `(t, [(trace index, position)])`.
fn by_timestamp(traces: &[&Trace]) -> Vec<(f64, Vec<(u32, LatLon)>)> {
    let mut all: Vec<(f64, u32, LatLon)> = traces
        .iter()
        .enumerate()
        .flat_map(|(i, tr)| tr.samples.iter().map(move |s| (s.t, i as u32, s.pos)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<(f64, Vec<(u32, LatLon)>)> = Vec::new();
    for (t, i, p) in all {
        match out.last_mut() {
            Some((last, group)) if *last == t => group.push((i, p)),
            _ => out.push((t, vec![(i, p)])),
        }
    }
    out
}

fn contacts_at(group: &[(u32, LatLon)], radius_m: f64, step: u64) -> Vec<ContactEvent> {
    let pts: Vec<LatLon> = group.iter().map(|g| g.1).collect();
    proximity_pairs(&pts, radius_m)
        .into_iter()
        .map(|(a, b)| {
            let (x, y) = (group[a as usize].0, group[b as usize].0);
            ContactEvent {
                time: step,
                agent_a: x.min(y),
                agent_b: x.max(y),
                kind: ContactKind::RadiusProximity,
            }
        })
        .collect()
}

/// Keeps traces that come within `radius_m` of at least `min_distinct`
/// different agents at shared sample times.
pub fn filter_by_contact_degree(
    traces: &[Trace],
    radius_m: f64,
    min_distinct: usize,
) -> Result<Vec<Trace>> {
    if !(radius_m > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "radius must be positive, got {radius_m}"
        )));
    }
    let refs: Vec<&Trace> = traces.iter().collect();
    let mut partners: Vec<HashSet<u32>> = vec![HashSet::new(); traces.len()];
    for (step, (_, group)) in by_timestamp(&refs).iter().enumerate() {
        for e in contacts_at(group, radius_m, step as u64) {
            partners[e.agent_a as usize].insert(e.agent_b);
            partners[e.agent_b as usize].insert(e.agent_a);
        }
    }
    Ok(traces
        .iter()
        .zip(&partners)
        .filter(|(_, p)| p.len() >= min_distinct)
        .map(|(t, _)| t.clone())
        .collect())
}

/// Flooding time of the given traces with contacts only at shared sample
/// times, as an absolute timestamp. `None` if the traces end first.
pub fn trace_flood_time(traces: &[&Trace], radius_m: f64) -> Option<f64> {
    let mut flood = Flooding::new(traces.len());
    for (step, (t, group)) in by_timestamp(traces).into_iter().enumerate() {
        flood.apply(&contacts_at(&group, radius_m, step as u64), step as u64);
        if flood.is_flooded() {
            return Some(t);
        }
    }
    None
}

fn check_sweep_args(
    m_values: &[u32],
    reps: u32,
    radius_m: f64,
    available: Option<usize>,
) -> Result<()> {
    if m_values.is_empty() || m_values.contains(&0) {
        return Err(Error::InvalidConfig(
            "m values must be non-empty and positive".into(),
        ));
    }
    if let Some(avail) = available {
        if let Some(&m) = m_values.iter().find(|&&m| m as usize > avail) {
            return Err(Error::InvalidConfig(format!(
                "m = {m} exceeds the {avail} available traces"
            )));
        }
    }
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    if !(radius_m > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "radius must be positive, got {radius_m}"
        )));
    }
    Ok(())
}

fn sweep_over_m(
    m_values: &[u32],
    reps: u32,
    seed: RngSeed,
    run: impl Fn(u32, RngSeed) -> Result<Option<f64>> + Sync,
) -> Result<SweepResult> {
    let jobs: Vec<(usize, u32)> = (0..m_values.len())
        .flat_map(|i| (0..reps).map(move |r| (i, r)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(i, rep)| {
            let s = rep_seed(seed, rep);
            Ok(RunRecord {
                rep,
                seed: s.0,
                flood_time: run(m_values[i], s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut points: Vec<SweepPoint> = m_values
        .iter()
        .map(|m| SweepPoint::new("m", m.to_string(), Vec::new()))
        .collect();
    for ((i, _), rec) in jobs.into_iter().zip(records) {
        points[i].runs.push(rec);
    }
    let result = SweepResult { points };
    for p in result.all_censored_points() {
        log::warn!("every run censored at m={}", p.value);
    }
    Ok(result)
}

/// Replays random subsets of `m` traces for each `m` and records flooding
/// times.
pub fn replay_flood(
    traces: &[Trace],
    radius_m: f64,
    m_values: &[u32],
    reps: u32,
    seed: RngSeed,
) -> Result<SweepResult> {
    check_sweep_args(m_values, reps, radius_m, Some(traces.len()))?;
    sweep_over_m(m_values, reps, seed, |m, s| {
        let mut rng = s.rng();
        let chosen: Vec<&Trace> = sample(&mut rng, traces.len(), m as usize)
            .into_iter()
            .map(|i| &traces[i])
            .collect();
        Ok(trace_flood_time(&chosen, radius_m))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthPolicy {
    /// Stations chosen uniformly at random.
    Rwp,
    /// Stations chosen by the empirical transition model.
    Data,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Meters per second.
    pub speed: f64,
    /// Seconds.
    pub duration: f64,
    /// Seconds between samples.
    pub interval: f64,
}

impl SynthParams {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("speed", self.speed),
            ("duration", self.duration),
            ("interval", self.interval),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

const MAX_RESAMPLES: usize = 100;

/// Generates station-to-station trajectories along shortest road routes.
pub struct Synthesizer<'a> {
    graph: &'a RoadGraph,
    stations: &'a [Station],
    chain: TransitionModel,
    trees: Vec<OnceLock<(Vec<f64>, Vec<Option<usize>>)>>,
}

impl<'a> Synthesizer<'a> {
    /// `model` is required for [`SynthPolicy::Data`] and ignored otherwise.
    pub fn new(
        graph: &'a RoadGraph,
        stations: &'a [Station],
        policy: SynthPolicy,
        model: Option<&TransitionModel>,
    ) -> Result<Self> {
        if stations.is_empty() {
            return Err(Error::InvalidConfig("no stations".into()));
        }
        let chain = match (policy, model) {
            (SynthPolicy::Rwp, _) => uniform_model(stations.len()),
            (SynthPolicy::Data, Some(m)) if m.station_count() == stations.len() => m.clone(),
            (SynthPolicy::Data, Some(m)) => {
                return Err(Error::InvalidConfig(format!(
                    "transition model covers {} stations, expected {}",
                    m.station_count(),
                    stations.len()
                )))
            }
            (SynthPolicy::Data, None) => {
                return Err(Error::InvalidConfig(
                    "data policy needs a transition model".into(),
                ))
            }
        };
        Ok(Self {
            graph,
            stations,
            chain,
            trees: (0..stations.len()).map(|_| OnceLock::new()).collect(),
        })
    }

    fn route(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let (dist, pred) =
            self.trees[from].get_or_init(|| self.graph.shortest_paths(self.stations[from].node));
        let target = self.stations[to].node;
        if !dist[target].is_finite() {
            return None;
        }
        let mut nodes = vec![target];
        while let Some(p) = pred[*nodes.last().unwrap()] {
            nodes.push(p);
        }
        nodes.reverse();
        Some(nodes)
    }

    /// Next reachable station, resampling unreachable picks.
    fn next_route(&self, from: usize, rng: &mut SimRng) -> Result<(usize, Vec<usize>)> {
        for _ in 0..MAX_RESAMPLES {
            let to = self.chain.sample_next(from, rng);
            if let Some(r) = self.route(from, to) {
                return Ok((to, r));
            }
        }
        Err(Error::Unreachable {
            from: self.stations[from].id.clone(),
            to: format!("any station after {MAX_RESAMPLES} draws"),
        })
    }

    /// One trajectory sampled at `0, interval, 2 interval, ...` up to
    /// `duration`.
    pub fn trajectory(
        &self,
        agent: impl Into<String>,
        params: &SynthParams,
        rng: &mut SimRng,
    ) -> Result<Trace> {
        params.validate()?;
        let g = self.graph;
        let mut station = self.chain.sample_initial(rng);
        let mut clock = 0.0;
        // waypoints: (arrival time, coordinate)
        let mut way: Vec<(f64, LatLon)> = vec![(0.0, g.coord(self.stations[station].node))];
        let mut idle_legs = 0;
        while clock <= params.duration {
            let (next, route) = self.next_route(station, rng)?;
            if route.len() < 2 {
                idle_legs += 1;
                if idle_legs > MAX_RESAMPLES {
                    return Err(Error::InvalidConfig(
                        "stations do not lead anywhere: every route has length 0".into(),
                    ));
                }
            } else {
                idle_legs = 0;
            }
            for w in route.windows(2) {
                let len = g
                    .neighbors(w[0])
                    .iter()
                    .filter(|e| e.0 == w[1])
                    .map(|e| e.1)
                    .fold(f64::INFINITY, f64::min);
                clock += len / params.speed;
                way.push((clock, g.coord(w[1])));
            }
            station = next;
        }

        let count = (params.duration / params.interval).floor() as u64;
        let mut samples = Vec::with_capacity(count as usize + 1);
        let mut seg = 0;
        for k in 0..=count {
            let t = k as f64 * params.interval;
            while seg + 1 < way.len() && way[seg + 1].0 < t {
                seg += 1;
            }
            let pos = if seg + 1 == way.len() {
                way[seg].1
            } else {
                let (t0, a) = way[seg];
                let (t1, b) = way[seg + 1];
                let f = if t1 > t0 {
                    ((t - t0) / (t1 - t0)).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                a.lerp(b, f)
            };
            samples.push(Sample { t, pos });
        }
        Ok(Trace {
            agent: agent.into(),
            samples,
        })
    }

    /// For each `m`, simulates `m` synthetic agents per rep and records the
    /// flooding time of their traces.
    pub fn sweep(
        &self,
        params: &SynthParams,
        radius_m: f64,
        m_values: &[u32],
        reps: u32,
        seed: RngSeed,
    ) -> Result<SweepResult> {
        params.validate()?;
        check_sweep_args(m_values, reps, radius_m, None)?;
        sweep_over_m(m_values, reps, seed, |m, s| {
            let traces = (0..m)
                .map(|a| self.trajectory(a.to_string(), params, &mut s.stream(a as u64)))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Trace> = traces.iter().collect();
            Ok(trace_flood_time(&refs, radius_m))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn trace(agent: &str, pts: &[(f64, f64, f64)]) -> Trace {
        Trace {
            agent: agent.into(),
            samples: pts
                .iter()
                .map(|&(t, lat, lon)| Sample {
                    t,
                    pos: LatLon::new(lat, lon),
                })
                .collect(),
        }
    }

    #[test]
    fn load_groups_sorts_and_drops() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let mut f = std::fs::File::create(&p).unwrap();
        writeln!(f, "agent_id,timestamp,lat,lon").unwrap();
        for row in [
            "a,2,0,0", "b,0,1,1", "a,0,0,0", "a,1,0,0", "b,1,1,1", "b,2,1,1", "c,5,2,2", "b,2,1,1",
        ] {
            writeln!(f, "{row}").unwrap();
        }
        drop(f);
        let load = load_traces(&p).unwrap();
        assert_eq!(load.traces.len(), 2);
        assert_eq!(load.traces[0].agent, "a");
        assert_eq!(
            load.traces[0]
                .samples
                .iter()
                .map(|s| s.t)
                .collect::<Vec<_>>(),
            vec![0.0, 1.0, 2.0]
        );
        assert_eq!(load.traces[1].samples.len(), 3);
        assert_eq!(load.dropped_agents, vec!["c".to_string()]);
        assert_eq!(load.duplicate_samples, 1);
        assert_eq!(load.traces[0].regular_interval(0.01), Some(1.0));
    }

    #[test]
    fn forced_single_contact() {
        let far = 0.01;
        let a = trace(
            "a",
            &(0..8)
                .map(|i| (i as f64 * 60.0, 0.0, 0.0))
                .collect::<Vec<_>>(),
        );
        let b = trace(
            "b",
            &(0..8)
                .map(|i| (i as f64 * 60.0, 0.0, if i == 5 { 0.0 } else { far }))
                .collect::<Vec<_>>(),
        );
        assert_eq!(trace_flood_time(&[&a, &b], 100.0), Some(300.0));
        assert_eq!(trace_flood_time(&[&a], 100.0), Some(0.0));
        let c = trace("c", &[(0.0, 1.0, 1.0), (60.0, 1.0, 1.0)]);
        assert_eq!(trace_flood_time(&[&a, &c], 100.0), None);
    }

    #[test]
    fn contact_degree_filter() {
        let a = trace("a", &[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)]);
        let b = trace("b", &[(0.0, 0.0, 0.0001), (1.0, 0.0, 0.0001)]);
        let c = trace("c", &[(0.0, 5.0, 5.0), (1.0, 5.0, 5.0)]);
        let kept = filter_by_contact_degree(&[a, b, c], 100.0, 1).unwrap();
        assert_eq!(
            kept.iter().map(|t| t.agent.as_str()).collect::<Vec<_>>(),
            vec!["a", "b"]
        );
        assert!(filter_by_contact_degree(&kept, 0.0, 1).is_err());
    }

    fn line_graph() -> (RoadGraph, Vec<Station>) {
        let g = RoadGraph::new(
            vec![
                ("x".into(), LatLon::new(0.0, 0.0)),
                ("y".into(), LatLon::new(0.0, 0.001)),
            ],
            vec![("x".into(), "y".into(), 111.0)],
        )
        .unwrap();
        let st = vec![
            Station {
                id: "A".into(),
                coord: g.coord(0),
                node: 0,
            },
            Station {
                id: "B".into(),
                coord: g.coord(1),
                node: 1,
            },
        ];
        (g, st)
    }

    #[test]
    fn two_station_line_alternates() {
        let (g, st) = line_graph();
        let syn = Synthesizer::new(&g, &st, SynthPolicy::Rwp, None).unwrap();
        let params = SynthParams {
            speed: 111.0,
            duration: 6.0,
            interval: 1.0,
        };
        let tr = syn.trajectory("0", &params, &mut RngSeed(1).rng()).unwrap();
        assert_eq!(tr.samples.len(), 7);
        let first = tr.samples[0].pos;
        for (k, s) in tr.samples.iter().enumerate() {
            let want = if k % 2 == 0 {
                first
            } else if first == g.coord(0) {
                g.coord(1)
            } else {
                g.coord(0)
            };
            assert_eq!(s.pos, want, "sample {k}");
        }
    }

    #[test]
    fn data_policy_requires_model() {
        let (g, st) = line_graph();
        assert!(Synthesizer::new(&g, &st, SynthPolicy::Data, None).is_err());
    }

    #[test]
    fn replay_validates_m() {
        let a = trace("a", &[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)]);
        assert!(replay_flood(&[a.clone()], 100.0, &[2], 1, RngSeed(0)).is_err());
        let r = replay_flood(&[a], 100.0, &[1], 3, RngSeed(0)).unwrap();
        assert_eq!(r.points[0].flood_times(), vec![0.0; 3]);
    }
}
