//! The `coalradio` command line: scenario generation, sampler runs, relay
//! ordering reports and brute-force optima.
//!
//! Exit codes: 0 on success, 1 on invalid input, 2 on budget or I/O errors.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::coalition::{build_matrix, CoalitionReport};
use crate::game::{form_coalition, CoalitionStructure, GameError};
use crate::oracle::{self, OracleBudget, OracleError};
use crate::sampler::{self, SamplerConfig, SamplerTrace, TemperatureSchedule};
use crate::scenario::{
    generate_scenario, DemandPolicy, FadingMode, Network, NodeId, PowerSpec, ScenarioError,
    ScenarioFile, ScenarioParams,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Budget(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Budget(_) | CliError::Io(_) => 2,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<GameError> for CliError {
    fn from(e: GameError) -> Self {
        match e {
            GameError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            OracleError::Game(g) => g.into(),
            OracleError::Scenario(s) => s.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "coalradio",
    version,
    about = "Coalition formation for cooperative cognitive radio"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random scenario file.
    Gen(GenArgs),
    /// Run the Gibbs sampler and write trace, structure and summary.
    Run(RunArgs),
    /// Order relays for one primary user and print the schedule.
    Order(OrderArgs),
    /// Find the welfare-maximizing structure by exhaustive search.
    Brute(BruteArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FadingArg {
    Off,
    Rayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Log,
    Fixed,
}

/// Random-scenario parameters; unset values take the defaults of
/// [`ScenarioParams`] and a 3 x 10 network on a 10 x 10 grid.
#[derive(Debug, Clone, Default, Args)]
pub struct GenerationArgs {
    /// Number of primary users [default: 3]
    #[arg(long = "pu")]
    pub num_pu: Option<usize>,
    /// Number of secondary users [default: 10]
    #[arg(long = "su")]
    pub num_su: Option<usize>,
    /// Side of the square grid [default: 10]
    #[arg(long)]
    pub grid: Option<f64>,
    /// Transmit power in watts [default: 0.5]
    #[arg(long)]
    pub power: Option<f64>,
    /// Noise power in dBm [default: -40.87]
    #[arg(long, allow_hyphen_values = true)]
    pub noise_dbm: Option<f64>,
    /// Pathloss exponent [default: 3.4]
    #[arg(long)]
    pub pathloss: Option<f64>,
    /// Fading model [default: off]
    #[arg(long, value_enum)]
    pub fading: Option<FadingArg>,
    /// Demand as a fraction of the direct link capacity [default: 1]
    #[arg(long)]
    pub demand_fraction: Option<f64>,
}

impl GenerationArgs {
    fn any_set(&self) -> bool {
        self.num_pu.is_some()
            || self.num_su.is_some()
            || self.grid.is_some()
            || self.power.is_some()
            || self.noise_dbm.is_some()
            || self.pathloss.is_some()
            || self.fading.is_some()
            || self.demand_fraction.is_some()
    }

    fn generate(&self, seed: u64) -> Result<ScenarioFile> {
        let defaults = ScenarioParams::default();
        let params = ScenarioParams {
            tx_power_watts: self.power.unwrap_or(defaults.tx_power_watts),
            noise: self.noise_dbm.map(PowerSpec::Dbm).unwrap_or(defaults.noise),
            pathloss_exponent: self.pathloss.unwrap_or(defaults.pathloss_exponent),
            fading: match self.fading.unwrap_or(FadingArg::Off) {
                FadingArg::Off => FadingMode::Off,
                FadingArg::Rayleigh => FadingMode::Rayleigh { seed },
            },
            demand: match self.demand_fraction {
                None => DemandPolicy::DirectCapacity,
                Some(f) => DemandPolicy::FractionOfDirect(f),
            },
        };
        let scenario = generate_scenario(
            self.num_pu.unwrap_or(3),
            self.num_su.unwrap_or(10),
            self.grid.unwrap_or(10.0),
            seed,
            &params,
        )?;
        Ok(ScenarioFile::Geometric(scenario))
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub generation: GenerationArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output scenario file
    #[arg(long, default_value = "scenario.toml")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario file; without it a scenario is generated from the
    /// generation flags.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[command(flatten)]
    pub generation: GenerationArgs,
    /// Seed for scenario generation [default: --seed]
    #[arg(long)]
    pub gen_seed: Option<u64>,
    /// Sampler seed (first seed with --seeds)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1500)]
    pub iters: usize,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Log)]
    pub schedule: ScheduleArg,
    /// Temperature of the fixed schedule [default: 0.001]
    #[arg(long)]
    pub temp: Option<f64>,
    /// Also compute the brute-force optimum and report the gap
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = OracleBudget::default().max_structures)]
    pub max_structures: usize,
    #[arg(long, default_value = "trace.csv")]
    pub out_trace: PathBuf,
    #[arg(long, default_value = "structure.json")]
    pub out_structure: PathBuf,
    /// Machine-readable summary (JSON)
    #[arg(long)]
    pub out_summary: Option<PathBuf>,
    /// Number of independent chains, seeded seed, seed+1, ...
    #[arg(long)]
    pub seeds: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OrderArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Primary user (`p0` or `0`)
    #[arg(long, default_value = "p0")]
    pub pu: String,
    /// Comma-separated secondary users (`s0,s2` or `0,2`); empty for none
    #[arg(long, default_value = "")]
    pub members: String,
    /// Compare with the exhaustive best ordering
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BruteArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value_t = OracleBudget::default().max_structures)]
    pub max_structures: usize,
    #[arg(long)]
    pub out_structure: Option<PathBuf>,
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a, out),
        Command::Run(a) => cmd_run(a, out),
        Command::Order(a) => cmd_order(a, out),
        Command::Brute(a) => cmd_brute(a, out),
    }
}

fn say(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> Result<()> {
    out.write_fmt(text)
        .and_then(|_| out.write_all(b"\n"))
        .map_err(|e| CliError::Io(format!("stdout: {e}")))
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => { say($out, format_args!($($arg)*)) };
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

pub fn cmd_gen(args: &GenArgs, out: &mut dyn Write) -> Result<()> {
    let file = args.generation.generate(args.seed)?;
    file.write(&args.out)?;
    let net = file.network()?;
    say!(out, "wrote {}", args.out.display())?;
    print_table_summary(&net, out)
}

fn print_table_summary(net: &Network, out: &mut dyn Write) -> Result<()> {
    let table = net.table();
    let caps: Vec<f64> = table.entries().map(|(_, _, c)| c).collect();
    let min = caps.iter().copied().fold(f64::INFINITY, f64::min);
    let max = caps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = caps.iter().sum::<f64>() / caps.len() as f64;
    say!(
        out,
        "{} primary, {} secondary users; {} links, capacity min {:.4} mean {:.4} max {:.4} bits/s/Hz",
        net.num_pu(),
        net.num_su(),
        caps.len(),
        min,
        mean,
        max
    )?;
    for p in 0..net.num_pu() {
        let direct = table.get(NodeId::Base, NodeId::Primary(p))?;
        say!(
            out,
            "  {}: direct {:.6}, demand {:.6}",
            NodeId::Primary(p),
            direct,
            net.demand(p)
        )?;
    }
    Ok(())
}

/// Per-chain outcome of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub best_welfare: f64,
    pub best_iteration: usize,
    pub final_welfare: f64,
    /// `(oracle - best) / oracle`; zero when the optimum is zero.
    pub gap: Option<f64>,
    /// First iteration at which the best-so-far welfare reached the optimum.
    pub first_optimal_iteration: Option<usize>,
    pub trace: String,
    pub structure: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub schedule: String,
    pub iterations: usize,
    pub oracle_welfare: Option<f64>,
    pub runs: Vec<SeedSummary>,
    pub mean_best_welfare: f64,
}

/// Tolerance for "reached the optimum".
const OPTIMUM_TOL: f64 = 1e-9;

fn per_seed_path(path: &Path, seed: u64, multi: bool) -> PathBuf {
    if !multi {
        return path.to_path_buf();
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.seed{seed}"),
    };
    path.with_file_name(name)
}

pub fn load_or_generate(
    scenario: Option<&Path>,
    generation: &GenerationArgs,
    seed: u64,
) -> Result<ScenarioFile> {
    match scenario {
        Some(_) if generation.any_set() => Err(CliError::Validation(
            "give either --scenario or generation parameters, not both".into(),
        )),
        Some(path) => Ok(ScenarioFile::read(path)?),
        None => generation.generate(seed),
    }
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    if args.iters == 0 {
        return Err(CliError::Validation("--iters must be at least 1".into()));
    }
    let schedule = match (args.schedule, args.temp) {
        (ScheduleArg::Log, None) => TemperatureSchedule::log_anneal(),
        (ScheduleArg::Log, Some(_)) => {
            return Err(CliError::Validation(
                "--temp only applies to --schedule fixed".into(),
            ))
        }
        (ScheduleArg::Fixed, t) => TemperatureSchedule::Fixed(t.unwrap_or(0.001)),
    };
    if !schedule.is_valid() {
        return Err(CliError::Validation("temperature must be positive".into()));
    }
    let num_runs = args.seeds.unwrap_or(1);
    if num_runs == 0 {
        return Err(CliError::Validation("--seeds must be at least 1".into()));
    }
    let file = load_or_generate(
        args.scenario.as_deref(),
        &args.generation,
        args.gen_seed.unwrap_or(args.seed),
    )?;
    let net = file.network()?;

    let oracle_welfare = if args.oracle {
        let budget = OracleBudget {
            max_structures: args.max_structures,
            ..OracleBudget::default()
        };
        match oracle::brute_force_structure(&net, &budget) {
            Ok((_, w)) => Some(w),
            Err(e @ OracleError::BudgetExceeded { .. }) => {
                eprintln!("warning: oracle skipped: {e}");
                None
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };

    let multi = args.seeds.is_some();
    let seeds: Vec<u64> = (0..num_runs as u64).map(|i| args.seed + i).collect();
    let traces: Vec<(u64, SamplerTrace)> = seeds
        .par_iter()
        .map(|&seed| {
            let config = SamplerConfig::new(args.iters, schedule, seed);
            sampler::run(&net, &config).map(|t| (seed, t))
        })
        .collect::<std::result::Result<_, _>>()?;

    let mut runs = Vec::with_capacity(traces.len());
    for (seed, trace) in &traces {
        let trace_path = per_seed_path(&args.out_trace, *seed, multi);
        let structure_path = per_seed_path(&args.out_structure, *seed, multi);
        let mut csv = Vec::new();
        trace
            .write_csv(&mut csv)
            .map_err(|e| io_error(&trace_path, e))?;
        write_file(&trace_path, &csv)?;
        write_file(&structure_path, trace.best.report().to_json().as_bytes())?;
        runs.push(SeedSummary {
            seed: *seed,
            best_welfare: trace.best_welfare,
            best_iteration: trace.best_iteration,
            final_welfare: trace
                .records
                .last()
                .map_or(trace.initial_welfare, |r| r.welfare),
            gap: oracle_welfare.map(|o| {
                if o > 0.0 {
                    (o - trace.best_welfare) / o
                } else {
                    0.0
                }
            }),
            first_optimal_iteration: oracle_welfare
                .and_then(|o| trace.first_iteration_reaching(o, OPTIMUM_TOL)),
            trace: trace_path.display().to_string(),
            structure: structure_path.display().to_string(),
        });
    }
    let summary = RunSummary {
        schedule: match schedule {
            TemperatureSchedule::LogAnneal { .. } => "log".into(),
            TemperatureSchedule::Fixed(t) => format!("fixed({t})"),
        },
        iterations: args.iters,
        oracle_welfare,
        mean_best_welfare: runs.iter().map(|r| r.best_welfare).sum::<f64>() / runs.len() as f64,
        runs,
    };
    print_run_summary(&summary, out)?;
    if let Some(path) = &args.out_summary {
        let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        json.push('\n');
        write_file(path, json.as_bytes())?;
    }
    Ok(())
}

fn print_run_summary(s: &RunSummary, out: &mut dyn Write) -> Result<()> {
    say!(out, "schedule {}, {} iterations", s.schedule, s.iterations)?;
    if let Some(o) = s.oracle_welfare {
        say!(out, "brute-force optimum: {o:.10}")?;
    }
    for r in &s.runs {
        let mut line = format!(
            "seed {}: best welfare {:.10} (iteration {}), final {:.10}",
            r.seed, r.best_welfare, r.best_iteration, r.final_welfare
        );
        if let Some(g) = r.gap {
            line.push_str(&format!(", gap {g:.3e}"));
        }
        if s.oracle_welfare.is_some() {
            match r.first_optimal_iteration {
                Some(i) => line.push_str(&format!(", optimum first reached at iteration {i}")),
                None => line.push_str(", optimum not reached"),
            }
        }
        say!(out, "{line}")?;
    }
    if s.runs.len() > 1 {
        say!(out, "mean best welfare {:.10}", s.mean_best_welfare)?;
    }
    Ok(())
}

fn parse_node_index(text: &str, want_primary: bool) -> Result<usize> {
    let text = text.trim();
    if let Ok(i) = text.parse::<usize>() {
        return Ok(i);
    }
    match text.parse::<NodeId>() {
        Ok(NodeId::Primary(i)) if want_primary => Ok(i),
        Ok(NodeId::Secondary(i)) if !want_primary => Ok(i),
        _ => Err(CliError::Validation(format!("unknown node id `{text}`"))),
    }
}

pub fn cmd_order(args: &OrderArgs, out: &mut dyn Write) -> Result<()> {
    let file = ScenarioFile::read(&args.scenario)?;
    let net = file.network()?;
    let pu = parse_node_index(&args.pu, true)?;
    if pu >= net.num_pu() {
        return Err(CliError::Validation(format!(
            "unknown primary user {}",
            NodeId::Primary(pu)
        )));
    }
    let mut members = Vec::new();
    for part in args.members.split(',').filter(|p| !p.trim().is_empty()) {
        let s = parse_node_index(part, false)?;
        if s >= net.num_su() {
            return Err(CliError::Validation(format!(
                "unknown secondary user {}",
                NodeId::Secondary(s)
            )));
        }
        if members.contains(&s) {
            return Err(CliError::Validation(format!(
                "{} listed twice",
                NodeId::Secondary(s)
            )));
        }
        members.push(s);
    }
    let coalition = form_coalition(&net, pu, &members)?;
    let matrix = build_matrix(net.table(), pu, coalition.order())
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let order: Vec<String> = coalition
        .order()
        .iter()
        .map(|&s| NodeId::Secondary(s).to_string())
        .collect();
    say!(
        out,
        "order: B -> {}{}",
        order.iter().map(|s| format!("{s} -> ")).collect::<String>(),
        NodeId::Primary(pu)
    )?;
    say!(
        out,
        "{}",
        CoalitionReport {
            coalition: &coalition,
            matrix: &matrix
        }
    )?;
    if args.oracle {
        let (best, rate) =
            oracle::best_permutation(net.table(), pu, &members, &OracleBudget::default())?;
        let best: Vec<String> = best
            .iter()
            .map(|&s| NodeId::Secondary(s).to_string())
            .collect();
        say!(
            out,
            "oracle order: [{}], rate {:.12}",
            best.join(", "),
            rate
        )?;
        say!(
            out,
            "heuristic/oracle ratio: {:.12}",
            coalition.rate() / rate
        )?;
    }
    Ok(())
}

pub fn cmd_brute(args: &BruteArgs, out: &mut dyn Write) -> Result<()> {
    let net = ScenarioFile::read(&args.scenario)?.network()?;
    let budget = OracleBudget {
        max_structures: args.max_structures,
        ..OracleBudget::default()
    };
    let (structure, welfare) = oracle::brute_force_structure(&net, &budget)?;
    say!(out, "optimal welfare {welfare:.12}")?;
    print_structure(&structure, out)?;
    if let Some(path) = &args.out_structure {
        write_file(path, structure.report().to_json().as_bytes())?;
    }
    Ok(())
}

fn print_structure(structure: &CoalitionStructure, out: &mut dyn Write) -> Result<()> {
    for c in structure.coalitions() {
        let order: Vec<String> = c
            .order()
            .iter()
            .map(|&s| NodeId::Secondary(s).to_string())
            .collect();
        let unused: Vec<String> = c
            .unused()
            .iter()
            .map(|&s| NodeId::Secondary(s).to_string())
            .collect();
        say!(
            out,
            "  {}: order [{}], unused [{}], rate {:.6}, alpha {:.6}, value {:.6}",
            NodeId::Primary(c.pu()),
            order.join(", "),
            unused.join(", "),
            c.rate(),
            c.alpha(),
            c.value()
        )?;
    }
    Ok(())
}
