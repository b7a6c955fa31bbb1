//! Trip records and the empirical first-order station transition model.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::graph::Station;
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// A trip between two stations, by index into the station list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Trip {
    pub origin: usize,
    pub dest: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TripLoad {
    pub trips: Vec<Trip>,
    /// Rows skipped because a station id was unknown, keyed by that id.
    pub unknown: BTreeMap<String, u64>,
}

impl TripLoad {
    pub fn skipped(&self) -> u64 {
        self.unknown.values().sum()
    }
}

#[derive(Deserialize)]
struct TripRow {
    origin_id: String,
    dest_id: String,
}

/// Reads trips (origin_id,dest_id; extra columns ignored). Rows naming an
/// unknown station are skipped and counted.
pub fn load_trips(path: &Path, stations: &[Station]) -> Result<TripLoad> {
    let index: HashMap<&str, usize> = stations
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut load = TripLoad {
        trips: Vec::new(),
        unknown: BTreeMap::new(),
    };
    for row in rdr.deserialize() {
        let r: TripRow = row.map_err(|e| Error::csv(path, e))?;
        match (
            index.get(r.origin_id.as_str()),
            index.get(r.dest_id.as_str()),
        ) {
            (Some(&origin), Some(&dest)) => load.trips.push(Trip { origin, dest }),
            (o, _) => {
                let bad = if o.is_none() { r.origin_id } else { r.dest_id };
                *load.unknown.entry(bad).or_default() += 1;
            }
        }
    }
    if load.trips.is_empty() {
        return Err(Error::malformed(
            path,
            format!("no valid trips ({} rows skipped)", load.skipped()),
        ));
    }
    if !load.unknown.is_empty() {
        log::warn!(
            "{}: skipped {} trips with unknown stations {:?}",
            path.display(),
            load.skipped(),
            load.unknown.keys().collect::<Vec<_>>()
        );
    }
    Ok(load)
}

/// Empirical initiation vector and row-stochastic transition matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    pub initiation: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    /// Rows with no outgoing trips, filled uniformly over the other stations.
    pub backfilled: Vec<bool>,
}

impl TransitionModel {
    pub fn station_count(&self) -> usize {
        self.initiation.len()
    }

    pub fn sample_initial(&self, rng: &mut SimRng) -> usize {
        sample(&self.initiation, rng)
    }

    pub fn sample_next(&self, from: usize, rng: &mut SimRng) -> usize {
        sample(&self.transition[from], rng)
    }
}

fn sample(weights: &[f64], rng: &mut SimRng) -> usize {
    WeightedIndex::new(weights)
        .expect("probability row has positive mass")
        .sample(rng)
}

/// Counts trips into initiation and transition frequencies over
/// `station_count` stations.
pub fn build_transition_model(trips: &[Trip], station_count: usize) -> Result<TransitionModel> {
    if trips.is_empty() {
        return Err(Error::InsufficientData(
            "transition model needs at least one trip".into(),
        ));
    }
    if let Some(t) = trips
        .iter()
        .find(|t| t.origin >= station_count || t.dest >= station_count)
    {
        return Err(Error::InvalidConfig(format!(
            "trip {}->{} outside {station_count} stations",
            t.origin, t.dest
        )));
    }
    let mut counts = vec![vec![0u64; station_count]; station_count];
    let mut out = vec![0u64; station_count];
    for t in trips {
        counts[t.origin][t.dest] += 1;
        out[t.origin] += 1;
    }
    let total = trips.len() as f64;
    let initiation = out.iter().map(|&c| c as f64 / total).collect();
    let mut backfilled = vec![false; station_count];
    let transition = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if out[i] == 0 {
                backfilled[i] = true;
                uniform_row(i, station_count)
            } else {
                row.iter().map(|&c| c as f64 / out[i] as f64).collect()
            }
        })
        .collect();
    Ok(TransitionModel {
        initiation,
        transition,
        backfilled,
    })
}

fn uniform_row(i: usize, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    (0..k)
        .map(|j| if j == i { 0.0 } else { 1.0 / (k - 1) as f64 })
        .collect()
}

/// Model that picks the first station and every next station uniformly, the
/// latter among stations other than the current one.
pub fn uniform_model(station_count: usize) -> TransitionModel {
    TransitionModel {
        initiation: vec![1.0 / station_count as f64; station_count],
        transition: (0..station_count)
            .map(|i| uniform_row(i, station_count))
            .collect(),
        backfilled: vec![false; station_count],
    }
}
