//! `adsse`: simulate the feeder, run adaptive and full-rate estimation, report.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::Failure;

#[derive(Parser, Debug)]
#[command(name = "adsse", version, about = "Adaptive-rate PMU distribution system state estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ground truth and noisy PMU samples only.
    Simulate(SimulateArgs),
    /// Full pipeline, writes snapshots, report and plot data.
    Run(RunArgs),
    /// Recomputes the report from a run's output directory.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ModeArg {
    Adaptive,
    FullRate,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TransportArg {
    Inprocess,
    Sockets,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PacingArg {
    Realtime,
    Fast,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    sim: SimulateArgs,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "inprocess")]
    transport: TransportArg,
    /// PMU frame pacing over sockets.
    #[arg(long, value_enum, default_value = "fast")]
    pacing: PacingArg,
    /// First PMU TCP port; 0 picks free ports.
    #[arg(long, env = "ADSSE_PMU_BASE_PORT")]
    pmu_base_port: Option<u16>,
    /// Listen address of the coordinator ingress the VOs post to.
    #[arg(long, env = "ADSSE_INGRESS_ADDR")]
    ingress_addr: Option<String>,
    /// Listen address of the VO `/latest` endpoint.
    #[arg(long, env = "ADSSE_LATEST_ADDR")]
    latest_addr: Option<String>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Output directory of a previous `run`.
    #[arg(long)]
    out: PathBuf,
    /// Also overwrite `report.json` with the recomputed report.
    #[arg(long)]
    write: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Run(a) => commands::run(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            // Some errors already embed their source in the message.
            let mut msg = String::new();
            for cause in f.error.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(f.code)
        }
    }
}
