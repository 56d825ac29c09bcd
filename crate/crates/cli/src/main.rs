//! `busplan`: scenario generation, day planning, simulation and Monte-Carlo
//! studies for battery-electric bus charging.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use busplan_core::simulation::StrategyKind;

#[derive(Debug, Parser)]
#[command(
    name = "busplan",
    version,
    about = "Charge scheduling for battery-electric bus fleets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a random scenario document.
    Gen(GenArgs),
    /// Solve the day model and write the charge plan.
    Plan(PlanArgs),
    /// Run one simulated day with a strategy.
    Simulate(SimulateArgs),
    /// Monte-Carlo study of one or all strategies, optionally chained over days.
    Mc(McArgs),
    /// Tabulate the charge bounds of one charger and battery as CSV.
    Probe(ProbeArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    buses: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; the document goes to stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlanOpts {
    /// Day-plan step in minutes.
    #[arg(long, default_value_t = busplan_core::milp::DAY_DELTA_MINUTES)]
    delta: f64,
    /// Charge every kWh at the on-peak rate.
    #[arg(long)]
    fixed_rate: bool,
    #[arg(long, default_value_t = busplan_core::milp::DAY_NODE_LIMIT)]
    node_limit: usize,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    plan: PlanOpts,
    /// Also write the model in LP format.
    #[arg(long)]
    export_lp: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NoiseLevel {
    Zero,
    Published,
}

#[derive(Debug, Args)]
struct SimOpts {
    #[arg(long, value_enum, default_value_t = NoiseLevel::Published)]
    noise: NoiseLevel,
    /// Qin charging threshold as a SOC fraction.
    #[arg(long, default_value_t = busplan_core::simulation::QIN_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = 60.0)]
    horizon: f64,
    /// Re-planning step in minutes.
    #[arg(long, default_value_t = 3.0)]
    step: f64,
    /// $/kWh of terminal SOC error for the hierarchical controller.
    #[arg(long)]
    terminal_weight: Option<f64>,
    #[arg(long, default_value_t = busplan_core::receding_horizon::HORIZON_NODE_LIMIT)]
    horizon_node_limit: usize,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_parser = parse_strategy)]
    strategy: StrategyKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    sim: SimOpts,
    #[command(flatten)]
    plan: PlanOpts,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct McArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// qin, open-loop, hierarchical or all.
    #[arg(long, default_value = "all", value_parser = parse_strategies)]
    strategy: StrategySet,
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
    /// Seed of the first run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    days: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    #[command(flatten)]
    sim: SimOpts,
    #[command(flatten)]
    plan: PlanOpts,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    /// Constant-current power, kW.
    #[arg(long)]
    p_cc: f64,
    /// Constant-voltage decay rate, 1/h.
    #[arg(long)]
    alpha: f64,
    /// Switching fraction of capacity.
    #[arg(long, default_value_t = 0.9)]
    eta: f64,
    #[arg(long)]
    capacity: f64,
    /// Step in minutes.
    #[arg(long, default_value_t = 5.0)]
    delta: f64,
    #[arg(long, default_value_t = 101, value_parser = clap::value_parser!(u64).range(2..))]
    points: u64,
    /// Output file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct StrategySet(Vec<StrategyKind>);

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse()
}

fn parse_strategies(s: &str) -> Result<StrategySet, String> {
    if s == "all" {
        return Ok(StrategySet(StrategyKind::ALL.to_vec()));
    }
    let mut out = Vec::new();
    for part in s.split(',') {
        let k = parse_strategy(part.trim())?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    Ok(StrategySet(out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Plan(a) => commands::plan(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Mc(a) => commands::mc(a),
        Command::Probe(a) => commands::probe(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
