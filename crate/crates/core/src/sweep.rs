//! Parameter sweeps over independent seeded realizations, and their CSV form.
//!
//! Realization `r` of every point in a sweep uses the same derived seed, so
//! points are compared under common random numbers.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::MobilityPolicy;
use crate::rng::RngSeed;
use crate::spread::{run_realization, SimConfig};
use crate::stats::mean_std;

/// Version of the sweep CSV layouts and of JSON reports.
pub const SCHEMA_VERSION: u32 = 1;

/// Largest tolerated fraction of censored runs at one sweep point.
pub const MAX_CENSORED_FRACTION: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rep: u32,
    pub seed: u64,
    /// `None` when censored.
    pub flood_time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: String,
    pub value: String,
    pub runs: Vec<RunRecord>,
}

impl SweepPoint {
    pub fn new(param: impl Into<String>, value: impl Into<String>, runs: Vec<RunRecord>) -> Self {
        Self {
            param: param.into(),
            value: value.into(),
            runs,
        }
    }

    pub fn flood_times(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.flood_time).collect()
    }

    pub fn n_reps(&self) -> usize {
        self.runs.len()
    }

    pub fn n_censored(&self) -> usize {
        self.runs.iter().filter(|r| r.flood_time.is_none()).count()
    }

    /// Mean flood time over uncensored runs.
    pub fn mean(&self) -> Option<f64> {
        mean_std(&self.flood_times()).map(|(m, _)| m)
    }

    pub fn std(&self) -> Option<f64> {
        mean_std(&self.flood_times()).map(|(_, s)| s)
    }

    pub fn all_censored(&self) -> bool {
        !self.runs.is_empty() && self.n_censored() == self.runs.len()
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.runs.is_empty() {
            0.0
        } else {
            self.n_censored() as f64 / self.runs.len() as f64
        }
    }

    /// Numeric parameter value, if the value column is a number.
    pub fn numeric_value(&self) -> Option<f64> {
        self.value.parse().ok()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn point(&self, param: &str, value: &str) -> Option<&SweepPoint> {
        self.points
            .iter()
            .find(|p| p.param == param && p.value == value)
    }

    /// Points whose censored fraction exceeds [`MAX_CENSORED_FRACTION`].
    pub fn failed_points(&self) -> Vec<&SweepPoint> {
        self.points
            .iter()
            .filter(|p| p.censored_fraction() > MAX_CENSORED_FRACTION)
            .collect()
    }

    pub fn all_censored_points(&self) -> Vec<&SweepPoint> {
        self.points.iter().filter(|p| p.all_censored()).collect()
    }

    /// `(x, mean)` for every numeric point with at least one uncensored run.
    pub fn curve(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|p| Some((p.numeric_value()?, p.mean()?)))
            .collect()
    }

    pub fn write_runs_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let wrap = |e: csv::Error| Error::csv("<runs csv>", e);
        out.write_record(["param", "value", "rep", "seed", "flood_time", "censored"])
            .map_err(wrap)?;
        for p in &self.points {
            for r in &p.runs {
                out.write_record([
                    p.param.clone(),
                    p.value.clone(),
                    r.rep.to_string(),
                    r.seed.to_string(),
                    r.flood_time.map(|t| t.to_string()).unwrap_or_default(),
                    r.flood_time.is_none().to_string(),
                ])
                .map_err(wrap)?;
            }
        }
        out.flush().map_err(|e| Error::io("<runs csv>", e))
    }

    pub fn write_summary_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let wrap = |e: csv::Error| Error::csv("<summary csv>", e);
        out.write_record(["param", "value", "mean", "std", "n_reps", "n_censored"])
            .map_err(wrap)?;
        for p in &self.points {
            let stats = mean_std(&p.flood_times());
            out.write_record([
                p.param.clone(),
                p.value.clone(),
                stats.map(|s| s.0.to_string()).unwrap_or_default(),
                stats.map(|s| s.1.to_string()).unwrap_or_default(),
                p.n_reps().to_string(),
                p.n_censored().to_string(),
            ])
            .map_err(wrap)?;
        }
        out.flush().map_err(|e| Error::io("<summary csv>", e))
    }
}

/// One row of a summary CSV.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct SummaryRow {
    pub param: String,
    pub value: String,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n_reps: u64,
    pub n_censored: u64,
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    for col in ["param", "value", "mean", "std", "n_reps", "n_censored"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::malformed(path, format!("missing column `{col}`")));
        }
    }
    rdr.deserialize()
        .map(|row| row.map_err(|e| Error::csv(path, e)))
        .collect()
}

/// `(x, mean)` pairs of the numeric rows of a summary CSV.
pub fn summary_curve(rows: &[SummaryRow]) -> Vec<(f64, f64)> {
    rows.iter()
        .filter_map(|r| Some((r.value.parse::<f64>().ok()?, r.mean?)))
        .collect()
}

/// Seed used for realization `rep` of a sweep.
pub fn rep_seed(master: RngSeed, rep: u32) -> RngSeed {
    master.derive(&[rep as u64])
}

fn run_points(
    base: &SimConfig,
    configs: Vec<(String, String, SimConfig)>,
    reps: u32,
) -> Result<SweepResult> {
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    for (_, _, c) in &configs {
        c.validate()?;
    }
    let jobs: Vec<(usize, u32)> = (0..configs.len())
        .flat_map(|i| (0..reps).map(move |r| (i, r)))
        .collect();
    let records: Vec<(usize, RunRecord)> = jobs
        .par_iter()
        .map(|&(i, rep)| {
            let seed = rep_seed(base.seed, rep);
            let mut cfg = configs[i].2.clone();
            cfg.seed = seed;
            let res = run_realization(&cfg)?;
            Ok((
                i,
                RunRecord {
                    rep,
                    seed: seed.0,
                    flood_time: res.flood_time.map(|t| t as f64),
                },
            ))
        })
        .collect::<Result<_>>()?;
    let mut points: Vec<SweepPoint> = configs
        .into_iter()
        .map(|(param, value, _)| SweepPoint::new(param, value, Vec::new()))
        .collect();
    for (i, rec) in records {
        points[i].runs.push(rec);
    }
    let result = SweepResult { points };
    for p in result.all_censored_points() {
        log::warn!("every run censored at {}={}", p.param, p.value);
    }
    Ok(result)
}

/// Varies the agent count.
pub fn sweep_m(base: &SimConfig, m_values: &[u32], reps: u32) -> Result<SweepResult> {
    let configs = m_values
        .iter()
        .map(|&m| {
            let mut c = base.clone();
            c.m = m;
            ("m".to_string(), m.to_string(), c)
        })
        .collect();
    run_points(base, configs, reps)
}

/// Varies the grid side.
pub fn sweep_n(base: &SimConfig, n_values: &[u32], reps: u32) -> Result<SweepResult> {
    let configs = n_values
        .iter()
        .map(|&n| {
            let mut c = base.clone();
            c.n = n;
            ("n".to_string(), n.to_string(), c)
        })
        .collect();
    run_points(base, configs, reps)
}

/// Varies the Lévy exponent, then appends Random Walk and Manhattan Random
/// Way-point reference rows (`param = "policy"`) at the same `n`, `m`, reps.
pub fn sweep_alpha(base: &SimConfig, alpha_values: &[f64], reps: u32) -> Result<SweepResult> {
    if !matches!(base.policy, MobilityPolicy::LevyWalk { .. }) {
        return Err(Error::InvalidConfig(
            "alpha sweep requires the levy policy".into(),
        ));
    }
    let mut configs: Vec<(String, String, SimConfig)> = alpha_values
        .iter()
        .map(|&alpha| {
            let mut c = base.clone();
            c.policy = MobilityPolicy::LevyWalk { alpha };
            ("alpha".to_string(), alpha.to_string(), c)
        })
        .collect();
    for policy in [
        MobilityPolicy::RandomWalk,
        MobilityPolicy::ManhattanRandomWaypoint,
    ] {
        let mut c = base.clone();
        c.policy = policy;
        configs.push(("policy".to_string(), policy.short_name().to_string(), c));
    }
    run_points(base, configs, reps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> SimConfig {
        SimConfig::new(12, 4, MobilityPolicy::ManhattanRandomWaypoint).with_seed(5)
    }

    #[test]
    fn reproducible_single_point() {
        let a = sweep_m(&base(), &[6], 3).unwrap();
        let b = sweep_m(&base(), &[6], 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.len(), 1);
        assert_eq!(a.points[0].n_reps(), 3);
        let reps: Vec<u32> = a.points[0].runs.iter().map(|r| r.rep).collect();
        assert_eq!(reps, vec![0, 1, 2]);
    }

    #[test]
    fn single_n_matches_direct_realizations() {
        let s = sweep_n(&base(), &[10], 4).unwrap();
        for r in &s.points[0].runs {
            let mut cfg = base();
            cfg.n = 10;
            cfg.seed = RngSeed(r.seed);
            let direct = run_realization(&cfg).unwrap();
            assert_eq!(direct.flood_time.map(|t| t as f64), r.flood_time);
        }
    }

    #[test]
    fn mean_recomputable_from_runs() {
        let s = sweep_m(&base(), &[3, 8], 5).unwrap();
        for p in &s.points {
            let times = p.flood_times();
            let m = times.iter().sum::<f64>() / times.len() as f64;
            assert!((p.mean().unwrap() - m).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_counts() {
        let s = sweep_m(&base(), &[10, 20], 3).unwrap();
        let mut runs = Vec::new();
        s.write_runs_csv(&mut runs).unwrap();
        let runs = String::from_utf8(runs).unwrap();
        assert_eq!(runs.lines().count(), 1 + 6);
        assert!(runs.starts_with("param,value,rep,seed,flood_time,censored\n"));
        let mut summary = Vec::new();
        s.write_summary_csv(&mut summary).unwrap();
        let summary = String::from_utf8(summary).unwrap();
        assert_eq!(summary.lines().count(), 1 + 2);
        assert!(summary.starts_with("param,value,mean,std,n_reps,n_censored\n"));
    }

    #[test]
    fn summary_roundtrip() {
        let s = sweep_m(&base(), &[3, 5, 7], 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        let mut buf = Vec::new();
        s.write_summary_csv(&mut buf).unwrap();
        std::fs::write(&path, buf).unwrap();
        let rows = read_summary_csv(&path).unwrap();
        let curve = summary_curve(&rows);
        assert_eq!(curve.len(), 3);
        for ((x, y), (x2, y2)) in curve.iter().zip(s.curve()) {
            assert_eq!(*x, x2);
            assert!((y - y2).abs() < 1e-9);
        }
    }

    #[test]
    fn censored_runs_excluded_and_flagged() {
        let mut cfg = base();
        cfg.max_steps = Some(1);
        let s = sweep_m(&cfg, &[4], 3).unwrap();
        let p = &s.points[0];
        assert!(p.all_censored());
        assert_eq!(p.mean(), None);
        assert_eq!(s.failed_points().len(), 1);
        let mut summary = Vec::new();
        s.write_summary_csv(&mut summary).unwrap();
        assert!(String::from_utf8(summary).unwrap().contains("m,4,,,3,3"));
    }

    #[test]
    fn alpha_sweep_needs_levy_and_adds_references() {
        assert!(sweep_alpha(&base(), &[1.0], 1).is_err());
        let mut cfg = base();
        cfg.policy = MobilityPolicy::LevyWalk { alpha: 0.0 };
        let s = sweep_alpha(&cfg, &[0.0, 2.5], 2).unwrap();
        let labels: Vec<(String, String)> = s
            .points
            .iter()
            .map(|p| (p.param.clone(), p.value.clone()))
            .collect();
        assert_eq!(
            labels,
            vec![
                ("alpha".into(), "0".into()),
                ("alpha".into(), "2.5".into()),
                ("policy".into(), "rw".into()),
                ("policy".into(), "mrwp".into()),
            ]
        );
    }

    #[test]
    fn zero_reps_rejected() {
        assert!(sweep_m(&base(), &[4], 0).is_err());
    }
}
