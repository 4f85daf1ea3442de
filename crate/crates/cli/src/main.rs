//! `ddrsim`: run tracking scenarios, compare against a baseline, sweep parameters.
//!
//! Exit codes: 0 success, 1 output I/O failure, 2 configuration error,
//! 3 runtime divergence.

mod commands;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ddrsim", version, about = "Differential-drive tracking workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write log.csv, report.csv and plot.gp.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Run a candidate and a baseline on the same path and tabulate the change.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        baseline: PathBuf,
        /// Also write comparison.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Run the Cartesian product of parameter grids and write summary.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `key=v1,v2,...` or `key=a..b` (inclusive integer range); repeatable.
        #[arg(long = "grid")]
        grids: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Parse and validate a scenario without running it.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[arg(long, value_enum)]
    pub feedback: Option<Feedback>,
    #[arg(long = "plant-input", value_enum)]
    pub plant_input: Option<PlantInputArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Table,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Feedback {
    Truth,
    Ekf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PlantInputArg {
    Torque,
    Twist,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { common, out, force } => commands::run(&common, &out, force),
        Command::Compare {
            common,
            baseline,
            out,
            force,
        } => commands::compare(&common, &baseline, out.as_deref(), force),
        Command::Sweep {
            common,
            grids,
            out,
            force,
        } => commands::sweep(&common, &grids, &out, force),
        Command::Validate { common } => commands::validate(&common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
