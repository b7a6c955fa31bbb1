mod common;

use floodsim::contact::{detect_contacts, ContactConfig};
use floodsim::ingest::{
    trace_flood_time, LatLon, RoadGraph, Sample, Station, SynthParams, SynthPolicy, Synthesizer,
    Trace,
};
use floodsim::{Position, RngSeed, TorusGrid};
use proptest::prelude::*;
use std::collections::BTreeSet;

/// Snapshot pairs where every agent moves at most one step, so swaps occur.
fn snapshots() -> impl Strategy<Value = (u32, Vec<Position>, Vec<Position>)> {
    (3u32..12)
        .prop_flat_map(|n| {
            let pos = (0..n, 0..n).prop_map(|(x, y)| Position::new(x, y));
            (Just(n), prop::collection::vec((pos, 0u8..5), 1..40))
        })
        .prop_map(|(n, agents)| {
            let g = TorusGrid::new(n).unwrap();
            let prev: Vec<Position> = agents.iter().map(|a| a.0).collect();
            let curr = agents
                .iter()
                .map(|&(p, d)| match d {
                    4 => p,
                    d => g.neighbors(p)[d as usize],
                })
                .collect();
            (n, prev, curr)
        })
}

fn pairs(prev: &[Position], curr: &[Position], n: u32, radius: u32) -> BTreeSet<(u32, u32)> {
    let g = TorusGrid::new(n).unwrap();
    detect_contacts(prev, curr, ContactConfig { radius }, &g, 0)
        .into_iter()
        .map(|e| {
            assert!(e.agent_a < e.agent_b);
            (e.agent_a, e.agent_b)
        })
        .collect()
}

proptest! {
    #[test]
    fn bucketed_contacts_match_naive_scan((n, prev, curr) in snapshots(), radius in 0u32..5) {
        prop_assert_eq!(pairs(&prev, &curr, n, radius), common::naive_contacts(&prev, &curr, n, radius));
    }

    #[test]
    fn contacts_grow_with_radius((n, prev, curr) in snapshots(), radius in 0u32..5) {
        let small = pairs(&prev, &curr, n, radius);
        let large = pairs(&prev, &curr, n, radius + 1);
        prop_assert!(small.is_subset(&large));
    }

    #[test]
    fn replay_ignores_trace_order(
        cells in prop::collection::vec(prop::collection::vec(0u8..3, 8), 2..7),
        perm_seed in any::<u64>(),
    ) {
        // agents hop between three spots 50 m apart; radius 10 m
        let traces: Vec<Trace> = cells
            .iter()
            .enumerate()
            .map(|(a, path)| Trace {
                agent: a.to_string(),
                samples: path
                    .iter()
                    .enumerate()
                    .map(|(t, &c)| Sample { t: t as f64 * 30.0, pos: LatLon::new(0.0, c as f64 * 0.00045) })
                    .collect(),
            })
            .collect();
        let mut order: Vec<usize> = (0..traces.len()).collect();
        let mut s = perm_seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let base: Vec<&Trace> = traces.iter().collect();
        let shuffled: Vec<&Trace> = order.iter().map(|&i| &traces[i]).collect();
        prop_assert_eq!(trace_flood_time(&base, 10.0), trace_flood_time(&shuffled, 10.0));
    }
}

fn chord_distance(p: LatLon, a: LatLon, b: LatLon) -> f64 {
    let (dx, dy) = (b.lon - a.lon, b.lat - a.lat);
    let len2 = dx * dx + dy * dy;
    let s = (((p.lon - a.lon) * dx + (p.lat - a.lat) * dy) / len2).clamp(0.0, 1.0);
    let (qx, qy) = (a.lon + s * dx, a.lat + s * dy);
    ((p.lon - qx).powi(2) + (p.lat - qy).powi(2)).sqrt()
}

#[test]
fn synthesized_samples_stay_on_edges() {
    let coords = [
        (0.0, 0.0),
        (0.0, 0.003),
        (0.002, 0.003),
        (0.002, 0.0),
        (0.001, 0.0015),
    ];
    let nodes: Vec<(String, LatLon)> = coords
        .iter()
        .enumerate()
        .map(|(i, &(lat, lon))| (i.to_string(), LatLon::new(lat, lon)))
        .collect();
    let links = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (4, 2)];
    let edges = links
        .iter()
        .map(|&(u, v)| {
            let d = floodsim::ingest::haversine(nodes[u].1, nodes[v].1);
            (u.to_string(), v.to_string(), d)
        })
        .collect();
    let g = RoadGraph::new(nodes.clone(), edges).unwrap();
    let stations: Vec<Station> = [0usize, 2, 4]
        .iter()
        .map(|&i| Station {
            id: format!("s{i}"),
            coord: nodes[i].1,
            node: i,
        })
        .collect();
    let syn = Synthesizer::new(&g, &stations, SynthPolicy::Rwp, None).unwrap();
    let params = SynthParams {
        speed: 7.0,
        duration: 2000.0,
        interval: 13.0,
    };
    for agent in 0..20 {
        let tr = syn
            .trajectory(agent.to_string(), &params, &mut RngSeed(5).stream(agent))
            .unwrap();
        assert!(tr.samples.len() > 100);
        for s in &tr.samples {
            let best = links
                .iter()
                .map(|&(u, v)| chord_distance(s.pos, nodes[u].1, nodes[v].1))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-9, "sample {s:?} off the road network by {best}");
        }
    }
}
