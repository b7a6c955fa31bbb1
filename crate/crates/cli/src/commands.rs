use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde::{Deserialize, Serialize};

use floodsim::fit::{fit_form, BoundForm, FitResult};
use floodsim::ingest::{
    build_transition_model, filter_by_contact_degree, load_stations, load_traces, load_trips,
    replay_flood, RoadGraph, SynthParams, SynthPolicy, Synthesizer,
};
use floodsim::oracle::{run_claim, Claim, ClaimReport, ConnectionCase};
use floodsim::sweep::{
    read_summary_csv, summary_curve, sweep_alpha, sweep_m, sweep_n, SCHEMA_VERSION,
};
use floodsim::{
    run_realization, MobilityPolicy, RealizationResult, RngSeed, SimConfig, SweepResult,
};

use crate::manifest::{write_atomic, write_json, RunManifest};
use crate::{
    CaseArg, ClaimArg, Cli, Command, FitArgs, FormArg, GridSimArgs, OracleArgs, PolicyArg,
    ReplayArgs, RerunArgs, SweepArgs, SweepParam, SynthArgs, SynthPolicyArg,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_STATISTICAL: u8 = 2;

pub fn run(command: Command, argv: Vec<String>) -> Result<u8> {
    match command {
        Command::GridSim(a) => grid_sim(a, argv),
        Command::Sweep(a) => sweep(a, argv),
        Command::Oracle(a) => oracle(a, argv),
        Command::Fit(a) => fit(a, argv),
        Command::Synth(a) => synth(a, argv),
        Command::Replay(a) => replay(a, argv),
        Command::Rerun(a) => rerun(a),
    }
}

fn policy(p: PolicyArg, alpha: Option<f64>) -> Result<MobilityPolicy> {
    Ok(match (p, alpha) {
        (PolicyArg::Levy, Some(alpha)) => MobilityPolicy::LevyWalk { alpha },
        (PolicyArg::Levy, None) => bail!("--alpha is required with --policy levy"),
        (_, Some(_)) => bail!("--alpha only applies to --policy levy"),
        (PolicyArg::Rw, None) => MobilityPolicy::RandomWalk,
        (PolicyArg::Rwp, None) => MobilityPolicy::RandomWaypoint,
        (PolicyArg::Mrwp, None) => MobilityPolicy::ManhattanRandomWaypoint,
    })
}

fn finish(out: &Path, mut manifest: RunManifest, outputs: Vec<PathBuf>, code: u8) -> Result<u8> {
    manifest.outputs = outputs;
    manifest.finish(out, code as i32)?;
    Ok(code)
}

#[derive(Serialize)]
struct GridSimOutput<'a> {
    schema_version: u32,
    config: &'a SimConfig,
    result: &'a RealizationResult,
}

fn grid_sim(a: GridSimArgs, argv: Vec<String>) -> Result<u8> {
    let mut cfg = SimConfig::new(a.n, a.m, policy(a.policy, a.alpha)?)
        .with_seed(RngSeed(a.seed))
        .with_radius(a.radius);
    if let Some(s) = a.max_steps {
        cfg = cfg.with_max_steps(s);
    }
    let manifest = RunManifest::new("grid-sim", argv, a.seed, serde_json::to_value(&cfg)?);
    let result = run_realization(&cfg)?;
    let path = a.out.out.join("result.json");
    write_json(
        &path,
        &GridSimOutput {
            schema_version: SCHEMA_VERSION,
            config: &cfg,
            result: &result,
        },
    )?;
    match result.flood_time {
        Some(t) => println!("flood_time {t}"),
        None => println!("censored after {} steps", result.steps_run),
    }
    let code = if result.censored {
        EXIT_STATISTICAL
    } else {
        EXIT_OK
    };
    finish(&a.out.out, manifest, vec![path], code)
}

/// Sweep settings from a `--config` file; every field optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    param: Option<SweepParam>,
    values: Option<Vec<serde_json::Value>>,
    reps: Option<u32>,
    n: Option<u32>,
    m: Option<u32>,
    policy: Option<PolicyArg>,
    alpha: Option<f64>,
    radius: Option<u32>,
    seed: Option<u64>,
    max_steps: Option<u64>,
}

#[derive(Debug, Serialize)]
struct SweepSettings {
    param: SweepParam,
    values: Vec<String>,
    reps: u32,
    n: Option<u32>,
    m: Option<u32>,
    policy: PolicyArg,
    alpha: Option<f64>,
    radius: u32,
    seed: u64,
    max_steps: Option<u64>,
}

fn resolve_sweep(a: &SweepArgs) -> Result<SweepSettings> {
    let file = match &a.config {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<SweepFile>(&text)
                .with_context(|| format!("parsing {}", p.display()))?
        }
        None => SweepFile::default(),
    };
    let file_values = file.values.map(|vs| {
        vs.into_iter()
            .map(|v| match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            })
            .collect()
    });
    let param = a.param.or(file.param).context("--param is required")?;
    let policy = a.policy.or(file.policy).unwrap_or(match param {
        SweepParam::Alpha => PolicyArg::Levy,
        _ => PolicyArg::Mrwp,
    });
    Ok(SweepSettings {
        param,
        values: a
            .values
            .clone()
            .or(file_values)
            .context("--values is required")?,
        reps: a.reps.or(file.reps).context("--reps is required")?,
        n: a.n.or(file.n),
        m: a.m.or(file.m),
        policy,
        alpha: a.alpha.or(file.alpha),
        radius: a.radius.or(file.radius).unwrap_or(0),
        seed: a.seed.or(file.seed).unwrap_or(1),
        max_steps: a.max_steps.or(file.max_steps),
    })
}

fn parse_list<T: std::str::FromStr>(values: &[String], what: &str) -> Result<Vec<T>> {
    values
        .iter()
        .map(|v| {
            v.trim()
                .parse()
                .ok()
                .with_context(|| format!("--values: `{v}` is not a valid {what}"))
        })
        .collect()
}

fn write_sweep(out: &Path, result: &SweepResult) -> Result<Vec<PathBuf>> {
    let runs = out.join("runs.csv");
    let summary = out.join("summary.csv");
    let mut buf = Vec::new();
    result.write_runs_csv(&mut buf)?;
    write_atomic(&runs, &buf)?;
    buf.clear();
    result.write_summary_csv(&mut buf)?;
    write_atomic(&summary, &buf)?;
    Ok(vec![runs, summary])
}

/// Prints the summary and picks the exit code: censoring above the
/// tolerated fraction at any point is a statistical failure.
fn sweep_verdict(result: &SweepResult) -> u8 {
    for p in &result.points {
        let mean = p.mean().map_or("-".to_string(), |m| format!("{m:.3}"));
        println!(
            "{}={} mean={} censored={}/{}",
            p.param,
            p.value,
            mean,
            p.n_censored(),
            p.n_reps()
        );
    }
    let failed = result.failed_points();
    if failed.is_empty() {
        EXIT_OK
    } else {
        for p in failed {
            eprintln!("too many censored runs at {}={}", p.param, p.value);
        }
        EXIT_STATISTICAL
    }
}

fn sweep(a: SweepArgs, argv: Vec<String>) -> Result<u8> {
    let s = resolve_sweep(&a)?;
    let need = |v: Option<u32>, flag: &str| {
        v.with_context(|| format!("--{flag} is required for this sweep"))
    };
    let result = match s.param {
        SweepParam::Alpha => {
            if s.policy != PolicyArg::Levy {
                bail!("--param alpha requires --policy levy");
            }
            if s.alpha.is_some() {
                bail!("--alpha conflicts with --param alpha");
            }
            let alphas: Vec<f64> = parse_list(&s.values, "number")?;
            let base = base_config(
                need(s.n, "n")?,
                need(s.m, "m")?,
                MobilityPolicy::LevyWalk { alpha: 0.0 },
                &s,
            );
            sweep_alpha(&base, &alphas, s.reps)?
        }
        SweepParam::M => {
            let ms: Vec<u32> = parse_list(&s.values, "agent count")?;
            let base = base_config(
                need(s.n, "n")?,
                ms.first().copied().unwrap_or(1),
                policy(s.policy, s.alpha)?,
                &s,
            );
            sweep_m(&base, &ms, s.reps)?
        }
        SweepParam::N => {
            let ns: Vec<u32> = parse_list(&s.values, "grid side")?;
            let base = base_config(
                ns.first().copied().unwrap_or(2),
                need(s.m, "m")?,
                policy(s.policy, s.alpha)?,
                &s,
            );
            sweep_n(&base, &ns, s.reps)?
        }
    };
    let manifest = RunManifest::new("sweep", argv, s.seed, serde_json::to_value(&s)?);
    let outputs = write_sweep(&a.out.out, &result)?;
    let code = sweep_verdict(&result);
    finish(&a.out.out, manifest, outputs, code)
}

fn base_config(n: u32, m: u32, policy: MobilityPolicy, s: &SweepSettings) -> SimConfig {
    let mut cfg = SimConfig::new(n, m, policy)
        .with_seed(RngSeed(s.seed))
        .with_radius(s.radius);
    if let Some(steps) = s.max_steps {
        cfg = cfg.with_max_steps(steps);
    }
    cfg
}

fn claims(a: &OracleArgs) -> Vec<Claim> {
    let n = a.n;
    let mut out = Vec::new();
    for &c in &a.claim {
        match c {
            ClaimArg::Overlap => out.push(Claim::Overlap {
                n,
                trials: a.trials.unwrap_or(100_000),
            }),
            ClaimArg::Segment => {
                let cases = match a.case {
                    Some(CaseArg::Perpendicular) => vec![ConnectionCase::Perpendicular],
                    Some(CaseArg::Antiparallel) => vec![ConnectionCase::AntiParallel],
                    Some(CaseArg::Parallel) => vec![ConnectionCase::Parallel],
                    None => vec![
                        ConnectionCase::Perpendicular,
                        ConnectionCase::AntiParallel,
                        ConnectionCase::Parallel,
                    ],
                };
                for case in cases {
                    out.push(Claim::Segment {
                        case,
                        ell: a.ell.unwrap_or((n / 4).max(1)),
                        n,
                        trials: a.trials.unwrap_or(0),
                    });
                }
            }
            ClaimArg::Pair => out.push(Claim::Pair {
                n,
                trials: a.trials.unwrap_or(100_000),
            }),
            ClaimArg::Independence => out.push(Claim::Independence {
                n,
                gap: a.gap.unwrap_or(2 * n as u64),
                trials: a.trials.unwrap_or(100_000),
                cells_per_axis: a.cells,
            }),
            ClaimArg::Lowerbound => out.push(Claim::LowerBound {
                n,
                m: a.m,
                reps: a.reps,
            }),
        }
    }
    out
}

fn oracle(a: OracleArgs, argv: Vec<String>) -> Result<u8> {
    let claims = claims(&a);
    let manifest = RunManifest::new("oracle", argv, a.seed, serde_json::to_value(&claims)?);
    let seed = RngSeed(a.seed);
    let reports: Vec<ClaimReport> = claims
        .iter()
        .enumerate()
        .map(|(i, c)| run_claim(c, seed.derive(&[i as u64])))
        .collect::<floodsim::Result<_>>()?;
    for r in &reports {
        println!(
            "{} {}: estimate {:.6} [{:.6}, {:.6}] ({})",
            r.claim,
            if r.pass { "PASS" } else { "FAIL" },
            r.estimate,
            r.ci_low,
            r.ci_high,
            r.criterion
        );
    }
    let path = a.out.out.join("oracle.json");
    write_json(&path, &reports)?;
    let code = if reports.iter().all(|r| r.pass) {
        EXIT_OK
    } else {
        EXIT_STATISTICAL
    };
    finish(&a.out.out, manifest, vec![path], code)
}

#[derive(Serialize)]
struct FitOutput<'a> {
    schema_version: u32,
    #[serde(flatten)]
    fit: &'a FitResult,
}

fn fit(a: FitArgs, argv: Vec<String>) -> Result<u8> {
    let form = match a.form {
        FormArg::Agent => BoundForm::AgentSweep,
        FormArg::Grid => BoundForm::GridSweep,
    };
    let rows = read_summary_csv(&a.input)?;
    let rows: Vec<_> = rows.into_iter().filter(|r| r.param != "policy").collect();
    let points = summary_curve(&rows);
    let manifest = RunManifest::new(
        "fit",
        argv,
        a.seed,
        serde_json::json!({ "form": form, "input": a.input }),
    );
    let result = fit_form(form, &points, RngSeed(a.seed))?;
    println!(
        "params {:?} r_squared {:.6} converged {}",
        result.params, result.r_squared, result.converged
    );
    let path = a.out.out.join("fit.json");
    write_json(
        &path,
        &FitOutput {
            schema_version: SCHEMA_VERSION,
            fit: &result,
        },
    )?;
    let code = if result.converged {
        EXIT_OK
    } else {
        EXIT_STATISTICAL
    };
    finish(&a.out.out, manifest, vec![path], code)
}

fn synth(a: SynthArgs, argv: Vec<String>) -> Result<u8> {
    let graph = RoadGraph::from_dir(&a.graph)?;
    let stations = load_stations(&a.stations, &graph)?;
    let (policy, model) = match a.policy {
        SynthPolicyArg::Rwp => (SynthPolicy::Rwp, None),
        SynthPolicyArg::Data => {
            let path = a
                .trips
                .as_ref()
                .context("--trips is required with --policy data")?;
            let load = load_trips(path, &stations)?;
            (
                SynthPolicy::Data,
                Some(build_transition_model(&load.trips, stations.len())?),
            )
        }
    };
    let synthesizer = Synthesizer::new(&graph, &stations, policy, model.as_ref())?;
    let params = SynthParams {
        speed: a.speed,
        duration: a.duration,
        interval: a.interval,
    };
    let manifest = RunManifest::new(
        "synth",
        argv,
        a.seed,
        serde_json::json!({
            "stations": a.stations, "graph": a.graph, "trips": a.trips, "policy": policy,
            "m_values": a.m_values, "reps": a.reps, "radius_m": a.radius_m, "params": params,
        }),
    );
    let result = synthesizer.sweep(&params, a.radius_m, &a.m_values, a.reps, RngSeed(a.seed))?;
    let outputs = write_sweep(&a.out.out, &result)?;
    let code = sweep_verdict(&result);
    finish(&a.out.out, manifest, outputs, code)
}

fn replay(a: ReplayArgs, argv: Vec<String>) -> Result<u8> {
    let load = load_traces(&a.traces)?;
    let mut traces = load.traces;
    if a.min_contacts > 0 {
        let before = traces.len();
        traces = filter_by_contact_degree(&traces, a.radius_m, a.min_contacts)?;
        eprintln!(
            "kept {} of {before} traces with at least {} contacts",
            traces.len(),
            a.min_contacts
        );
    }
    let manifest = RunManifest::new(
        "replay",
        argv,
        a.seed,
        serde_json::json!({
            "traces": a.traces, "radius_m": a.radius_m, "m_values": a.m_values,
            "reps": a.reps, "min_contacts": a.min_contacts,
        }),
    );
    let result = replay_flood(&traces, a.radius_m, &a.m_values, a.reps, RngSeed(a.seed))?;
    let outputs = write_sweep(&a.out.out, &result)?;
    let code = sweep_verdict(&result);
    finish(&a.out.out, manifest, outputs, code)
}

fn rerun(a: RerunArgs) -> Result<u8> {
    let recorded = crate::manifest::RunManifest::read(&a.manifest)?;
    let mut argv = vec!["floodsim".to_string()];
    if let Some(out) = a.out {
        let mut args = recorded.argv.into_iter();
        while let Some(arg) = args.next() {
            if arg == "--out" {
                args.next();
            } else if !arg.starts_with("--out=") {
                argv.push(arg);
            }
        }
        argv.push("--out".into());
        argv.push(out.to_string_lossy().into_owned());
    } else {
        argv.extend(recorded.argv);
    }
    let cli = Cli::try_parse_from(&argv).context("manifest arguments no longer parse")?;
    if matches!(cli.command, Command::Rerun(_)) {
        bail!("manifest records a rerun; point at the original run's manifest");
    }
    run(cli.command, argv[1..].to_vec())
}
