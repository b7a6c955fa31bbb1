use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use floodsim::ingest::{
    haversine, load_stations, RoadGraph, SynthParams, SynthPolicy, Synthesizer,
};
use floodsim::sweep::rep_seed;
use floodsim::RngSeed;

fn floodsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_floodsim"))
        .args(args)
        .env_remove("FLOODSIM_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(p).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn grid_sim_single_agent() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "run");
    let o = floodsim(&["grid-sim", "--n", "8", "--m", "1", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("run/result.json")).unwrap()).unwrap();
    assert_eq!(json["result"]["flood_time"], 0);
    assert_eq!(json["schema_version"], 1);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "grid-sim");
    assert_eq!(manifest["seed"], 1);
}

#[test]
fn grid_sim_validation_and_censoring() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "x");
    let o = floodsim(&[
        "grid-sim", "--n", "8", "--m", "4", "--policy", "levy", "--out", &out,
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--alpha"));
    assert_eq!(code(&floodsim(&["grid-sim", "--n", "8", "--out", &out])), 1);
    let o = floodsim(&[
        "grid-sim",
        "--n",
        "40",
        "--m",
        "3",
        "--max-steps",
        "2",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn grid_sim_is_deterministic_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "4", "1"].iter().enumerate() {
        let out = path(dir.path(), &format!("r{i}"));
        let args = [
            "--threads",
            threads,
            "grid-sim",
            "--n",
            "16",
            "--m",
            "8",
            "--seed",
            "9",
            "--out",
            &out,
        ];
        assert_eq!(code(&floodsim(&args)), 0);
        outputs.push(fs::read(dir.path().join(format!("r{i}/result.json"))).unwrap());
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn sweep_counts_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "s");
    let o = floodsim(&[
        "sweep", "--param", "m", "--values", "10,20", "--reps", "3", "--n", "12", "--out", &out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let runs = csv_rows(&dir.path().join("s/runs.csv"));
    let summary = csv_rows(&dir.path().join("s/summary.csv"));
    assert_eq!((runs.len(), summary.len()), (6, 2));
    let header = fs::read_to_string(dir.path().join("s/runs.csv")).unwrap();
    assert!(header.starts_with("param,value,rep,seed,flood_time,censored\n"));

    let again = path(dir.path(), "again");
    let o = floodsim(&[
        "--threads",
        "3",
        "rerun",
        "--manifest",
        &path(dir.path(), "s/manifest.json"),
        "--out",
        &again,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["runs.csv", "summary.csv"] {
        assert_eq!(
            fs::read(dir.path().join("s").join(f)).unwrap(),
            fs::read(dir.path().join("again").join(f)).unwrap()
        );
    }
}

#[test]
fn sweep_config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"param": "n", "values": [8, 10], "reps": 2, "m": 3, "seed": 4}"#,
    )
    .unwrap();
    let out = path(dir.path(), "c");
    let o = floodsim(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--reps",
        "4",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&dir.path().join("c/runs.csv")).len(), 8);

    fs::write(&cfg, r#"{"param": "n", "bogus": 1}"#).unwrap();
    assert_eq!(
        code(&floodsim(&[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            &out
        ])),
        1
    );
}

#[test]
fn sweep_validation_and_censoring() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "v");
    let o = floodsim(&[
        "sweep", "--param", "alpha", "--policy", "mrwp", "--values", "1,2", "--reps", "2", "--n",
        "8", "--m", "4", "--out", &out,
    ]);
    assert_eq!(code(&o), 1);
    let o = floodsim(&[
        "sweep",
        "--param",
        "m",
        "--values",
        "2,3",
        "--reps",
        "3",
        "--n",
        "40",
        "--max-steps",
        "1",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 2);
    let o = floodsim(&[
        "sweep", "--param", "alpha", "--values", "0,4", "--reps", "2", "--n", "8", "--m", "4",
        "--out", &out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&dir.path().join("v/summary.csv"));
    let params: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(params, vec!["alpha", "alpha", "policy", "policy"]);
}

#[test]
fn oracle_claims() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "o");
    let o = floodsim(&[
        "oracle",
        "--claim",
        "segment",
        "--case",
        "perpendicular",
        "--n",
        "8",
        "--ell",
        "3",
        "--trials",
        "0",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0);
    let reports: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("o/oracle.json")).unwrap()).unwrap();
    assert_eq!(reports[0]["estimate"], 3.0 / 64.0);
    assert_eq!(reports[0]["pass"], true);
    assert_eq!(reports[0]["schema_version"], 1);

    let o = floodsim(&[
        "oracle",
        "--claim",
        "independence",
        "--gap",
        "1",
        "--trials",
        "20000",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("dependence detected"));

    let o = floodsim(&[
        "oracle",
        "--claim",
        "lowerbound,segment",
        "--n",
        "16",
        "--m",
        "4",
        "--reps",
        "50",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let reports: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("o/oracle.json")).unwrap()).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 4);

    assert_eq!(
        code(&floodsim(&["oracle", "--claim", "bogus", "--out", &out])),
        1
    );
}

fn write_summary(p: &Path, rows: &[(f64, f64)]) {
    let mut s = String::from("param,value,mean,std,n_reps,n_censored\n");
    for (x, y) in rows {
        s.push_str(&format!("m,{x},{y},0,10,0\n"));
    }
    fs::write(p, s).unwrap();
}

#[test]
fn fit_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("summary.csv");
    let out = path(dir.path(), "f");
    let exact: Vec<(f64, f64)> = [10.0f64, 25.0, 50.0, 100.0, 200.0]
        .iter()
        .map(|&m| (m, 50.0 / m * m.ln() * m.ln()))
        .collect();
    write_summary(&input, &exact);
    let o = floodsim(&[
        "fit",
        "--form",
        "agent",
        "--input",
        input.to_str().unwrap(),
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fit: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("f/fit.json")).unwrap()).unwrap();
    assert!(fit["r_squared"].as_f64().unwrap() > 0.999999);
    assert_eq!(fit["form"], "agent_sweep");

    write_summary(&input, &[(1.0, 5.0), (2.0, 5.0), (3.0, 5.0), (4.0, 5.0)]);
    let o = floodsim(&[
        "fit",
        "--form",
        "grid",
        "--input",
        input.to_str().unwrap(),
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 2);

    fs::write(&input, "param,value\nm,1\n").unwrap();
    let o = floodsim(&[
        "fit",
        "--form",
        "grid",
        "--input",
        input.to_str().unwrap(),
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 1);
}

/// Three stations on a small triangle of roads.
fn triangle(dir: &Path) -> PathBuf {
    let g = dir.join("graph");
    fs::create_dir_all(&g).unwrap();
    fs::write(
        g.join("nodes.csv"),
        "id,lat,lon\na,0,0\nb,0,0.002\nc,0.0017,0.001\n",
    )
    .unwrap();
    fs::write(
        g.join("edges.csv"),
        "u,v,length_m\na,b,222\nb,c,222\nc,a,222\n",
    )
    .unwrap();
    fs::write(
        dir.join("stations.csv"),
        "id,lat,lon\nA,0,0\nB,0,0.002\nC,0.0017,0.001\n",
    )
    .unwrap();
    fs::write(
        dir.join("trips.csv"),
        "origin_id,dest_id\nA,B\nB,C\nC,A\nA,C\n",
    )
    .unwrap();
    g
}

#[test]
fn synth_triangle_matches_brute_force() {
    let dir = tempfile::tempdir().unwrap();
    let graph = triangle(dir.path());
    let out = path(dir.path(), "syn");
    let stations = path(dir.path(), "stations.csv");
    let args = [
        "synth",
        "--stations",
        &stations,
        "--graph",
        graph.to_str().unwrap(),
        "--policy",
        "rwp",
        "--m-values",
        "2",
        "--reps",
        "3",
        "--radius-m",
        "30",
        "--speed",
        "10",
        "--duration",
        "3000",
        "--interval",
        "5",
        "--seed",
        "7",
        "--out",
        &out,
    ];
    let o = floodsim(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let runs = csv_rows(&dir.path().join("syn/runs.csv"));

    let g = RoadGraph::from_dir(&graph).unwrap();
    let st = load_stations(Path::new(&stations), &g).unwrap();
    let syn = Synthesizer::new(&g, &st, SynthPolicy::Rwp, None).unwrap();
    let params = SynthParams {
        speed: 10.0,
        duration: 3000.0,
        interval: 5.0,
    };
    for (rep, row) in runs.iter().enumerate() {
        let s = rep_seed(RngSeed(7), rep as u32);
        let a = syn.trajectory("0", &params, &mut s.stream(0)).unwrap();
        let b = syn.trajectory("1", &params, &mut s.stream(1)).unwrap();
        let meet = a
            .samples
            .iter()
            .zip(&b.samples)
            .find(|(x, y)| haversine(x.pos, y.pos) <= 30.0)
            .map(|(x, _)| x.t)
            .expect("agents on a triangle meet");
        assert_eq!(row[4].parse::<f64>().unwrap(), meet);
    }

    let o = floodsim(&[
        "synth",
        "--stations",
        &stations,
        "--graph",
        graph.to_str().unwrap(),
        "--policy",
        "data",
        "--m-values",
        "2",
        "--reps",
        "1",
        "--duration",
        "100",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 1);
    let trips = path(dir.path(), "trips.csv");
    let o = floodsim(&[
        "synth",
        "--stations",
        &stations,
        "--graph",
        graph.to_str().unwrap(),
        "--policy",
        "data",
        "--trips",
        &trips,
        "--m-values",
        "2,3",
        "--reps",
        "2",
        "--radius-m",
        "30",
        "--speed",
        "10",
        "--duration",
        "3000",
        "--interval",
        "5",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn replay_traces() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces.csv");
    let mut s = String::from("agent_id,timestamp,lat,lon\n");
    for t in 0..10 {
        s.push_str(&format!("a,{},0,0\n", t * 60));
        let lon = if t == 4 { 0.0 } else { 0.01 };
        s.push_str(&format!("b,{},0,{lon}\n", t * 60));
    }
    fs::write(&traces, s).unwrap();
    let out = path(dir.path(), "r");
    let tr = traces.to_str().unwrap();
    let o = floodsim(&[
        "replay",
        "--traces",
        tr,
        "--m-values",
        "2",
        "--reps",
        "2",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let runs = csv_rows(&dir.path().join("r/runs.csv"));
    assert!(runs.iter().all(|r| r[4] == "240"));

    let o = floodsim(&[
        "replay",
        "--traces",
        tr,
        "--m-values",
        "3",
        "--reps",
        "2",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 1);
    let o = floodsim(&[
        "replay",
        "--traces",
        tr,
        "--m-values",
        "2",
        "--reps",
        "1",
        "--min-contacts",
        "2",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 1);
    let o = floodsim(&[
        "replay",
        "--traces",
        "/nonexistent.csv",
        "--m-values",
        "1",
        "--reps",
        "1",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn bad_thread_env_is_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_floodsim"))
        .args(["grid-sim", "--n", "8", "--m", "1"])
        .env("FLOODSIM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}
