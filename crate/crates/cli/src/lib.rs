//! Command-line front end: argument parsing and dispatch.

pub mod commands;
pub mod config;

use std::io;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use quadstack::terrain::Task;

use config::RunArgs;

#[derive(Debug, Parser)]
#[command(name = "quadstack", version, about = "Plan, simulate and benchmark quadruped locomotion", arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or check heightmaps.
    #[command(subcommand)]
    Terrain(TerrainCmd),
    /// Run the global or local planner on its own.
    #[command(subcommand)]
    Plan(PlanCmd),
    /// Run one full-stack episode and write its run log.
    Simulate(RunArgs),
    /// Run seeded episodes of a task and write a report.
    Bench {
        #[arg(long)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Soft-calibrate simulated joint encoders.
    Calibrate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Whole index-pulse shifts of the power-on angle: one value for
        /// every joint or one per joint, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        offsets: Option<String>,
    },
    /// Rebuild a report from run logs.
    Report {
        /// Directory holding run log `.csv` and `.json` pairs.
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Step through Sweep, Hold and Run and print control timing.
    Console {
        /// Advance through the states without waiting for `go`.
        #[arg(long)]
        auto: bool,
        /// Simulated seconds to run once in Run.
        #[arg(long, default_value_t = 3.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the default config file.
    DefaultConfig,
}

#[derive(Debug, Subcommand)]
pub enum TerrainCmd {
    /// Write a generated task environment.
    Gen {
        #[arg(long)]
        task: Task,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse a heightmap file and print its extent.
    Validate { path: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum PlanCmd {
    /// Feasibility map, grid path and spline, written as JSON.
    Global {
        #[command(flatten)]
        run: RunArgs,
        /// Output file; defaults to global_plan.json in the output directory.
        #[arg(long = "plan-out")]
        plan_out: Option<PathBuf>,
    },
    /// One gait plan between two poses, written as CSV.
    Local {
        #[command(flatten)]
        run: RunArgs,
        /// Start pose x,y,yaw.
        #[arg(long, value_parser = commands::parse_pose, allow_hyphen_values = true)]
        from: [f64; 3],
        /// Goal pose x,y,yaw.
        #[arg(long, value_parser = commands::parse_pose, allow_hyphen_values = true)]
        to: [f64; 3],
        /// Output file; defaults to local_plan.csv in the output directory.
        #[arg(long = "plan-out")]
        plan_out: Option<PathBuf>,
    },
}

/// Runs a parsed command line.
pub fn dispatch(cli: Cli) -> commands::CmdResult {
    match cli.command {
        Command::Terrain(TerrainCmd::Gen { task, seed, out }) => commands::terrain_gen(task, seed, &out),
        Command::Terrain(TerrainCmd::Validate { path }) => commands::terrain_validate(&path),
        Command::Plan(PlanCmd::Global { run, plan_out }) => commands::plan_global_cmd(&run, plan_out.as_deref()),
        Command::Plan(PlanCmd::Local { run, from, to, plan_out }) => {
            commands::plan_local_cmd(&run, from, to, plan_out.as_deref())
        }
        Command::Simulate(run) => commands::simulate_cmd(&run),
        Command::Bench { runs, seed_base, run } => {
            let task = run.task.ok_or("bench needs --task")?;
            if run.map.is_some() {
                return Err("bench runs generated task environments; drop --map".into());
            }
            commands::bench_cmd(task, runs, seed_base, &run)
        }
        Command::Calibrate { seed, offsets } => commands::calibrate_cmd(seed, offsets.as_deref()),
        Command::Report { logs, out } => {
            let out = out.unwrap_or_else(config::default_out_dir);
            commands::report_cmd(&logs, &out)
        }
        Command::Console { auto, seconds, seed } => commands::console_cmd(auto, seconds, seed, &mut io::stdin().lock()),
        Command::DefaultConfig => {
            println!("{}", commands::default_config_json());
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn map_and_task_flags_conflict() {
        let r = Cli::try_parse_from(["quadstack", "simulate", "--map", "a.map", "--task", "walking"]);
        assert!(r.is_err());
    }

    #[test]
    fn negative_pairs_parse() {
        let cli = Cli::try_parse_from(["quadstack", "simulate", "--task", "walking", "--start", "-0.5,-1"]).unwrap();
        let Command::Simulate(run) = cli.command else { panic!("wrong command") };
        assert_eq!(run.start, Some([-0.5, -1.0]));
    }
}
