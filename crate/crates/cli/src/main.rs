//! `floodsim`: flood-time simulations, claim checks, bound fits and
//! real-network pipelines from the command line.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 statistical failure
//! (censoring, failed claim, non-converged fit).

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "floodsim",
    version,
    about = "Flood-time simulation of mobile agents"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "FLOODSIM_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// One realization on the torus grid.
    GridSim(GridSimArgs),
    /// Flood time over a range of m, n or alpha.
    Sweep(SweepArgs),
    /// Statistical checks of the collocation claims.
    Oracle(OracleArgs),
    /// Fit a sweep summary to a bound form.
    Fit(FitArgs),
    /// Sweep over synthetic station-to-station traces on a road graph.
    Synth(SynthArgs),
    /// Sweep over subsets of recorded GPS traces.
    Replay(ReplayArgs),
    /// Repeat the run recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyArg {
    Rw,
    Rwp,
    Mrwp,
    Levy,
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct GridSimArgs {
    #[arg(long)]
    pub n: u32,
    #[arg(long)]
    pub m: u32,
    #[arg(long, value_enum, default_value = "mrwp")]
    pub policy: PolicyArg,
    /// Levy exponent (levy only).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub radius: u32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    M,
    N,
    Alpha,
}

/// Sweep flags override values from `--config`.
#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    /// JSON file with any of: param, values, reps, n, m, policy, alpha,
    /// radius, seed, max_steps.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub param: Option<SweepParam>,
    /// Comma-separated values of the swept parameter.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<String>>,
    #[arg(long)]
    pub reps: Option<u32>,
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub m: Option<u32>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyArg>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub radius: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClaimArg {
    Overlap,
    Segment,
    Pair,
    Independence,
    Lowerbound,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum CaseArg {
    Perpendicular,
    Antiparallel,
    Parallel,
}

#[derive(Args, Debug, Clone)]
pub struct OracleArgs {
    /// Claims to check (comma-separated).
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pub claim: Vec<ClaimArg>,
    /// Segment case; all three when omitted.
    #[arg(long = "case", value_enum)]
    pub case: Option<CaseArg>,
    /// Segment length (default n/4).
    #[arg(long)]
    pub ell: Option<u32>,
    #[arg(long, default_value_t = 16)]
    pub n: u32,
    /// Trials; 0 enumerates all placements for the segment claim. Defaults
    /// to 0 for segment and 100000 otherwise.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Time gap for the independence claim (default 2n).
    #[arg(long)]
    pub gap: Option<u64>,
    /// Cells per axis for the independence claim.
    #[arg(long, default_value_t = 4)]
    pub cells: u32,
    #[arg(long, default_value_t = 16)]
    pub m: u32,
    #[arg(long, default_value_t = 400)]
    pub reps: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Agent,
    Grid,
}

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub form: FormArg,
    /// Sweep summary CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthPolicyArg {
    Rwp,
    Data,
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    /// Stations CSV (id,lat,lon).
    #[arg(long)]
    pub stations: PathBuf,
    /// Directory holding nodes.csv (id,lat,lon) and edges.csv (u,v,length_m).
    #[arg(long)]
    pub graph: PathBuf,
    /// Trips CSV (origin_id,dest_id); required by the data policy.
    #[arg(long)]
    pub trips: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub policy: SynthPolicyArg,
    #[arg(long, value_delimiter = ',', required = true)]
    pub m_values: Vec<u32>,
    #[arg(long)]
    pub reps: u32,
    #[arg(long, default_value_t = 100.0)]
    pub radius_m: f64,
    /// Meters per second.
    #[arg(long, default_value_t = 4.0)]
    pub speed: f64,
    /// Seconds of simulated time.
    #[arg(long)]
    pub duration: f64,
    /// Seconds between samples.
    #[arg(long, default_value_t = 60.0)]
    pub interval: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    /// Traces CSV (agent_id,timestamp,lat,lon).
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long, default_value_t = 100.0)]
    pub radius_m: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    pub m_values: Vec<u32>,
    #[arg(long)]
    pub reps: u32,
    /// Keep only agents meeting at least this many distinct others.
    #[arg(long, default_value_t = 0)]
    pub min_contacts: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct RerunArgs {
    /// Manifest written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command, argv[1..].to_vec()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
