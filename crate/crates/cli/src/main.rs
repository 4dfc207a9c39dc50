//! Command-line front end: segment, simulate, forecast and volatility.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tsseg::ErrorKind;

use config::{InputArgs, SegmentArgs};

#[derive(Debug, Parser)]
#[command(name = "tsseg", version, about = "Segment multivariate time series into uncorrelated subseries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment a CSV series; writes segmentation.json, xhat.csv and corr_stats.csv.
    Segment {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        seg: SegmentArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Monte Carlo study of a latent block design; writes table.csv and detail.json.
    Simulate {
        /// example5 or example6.
        #[arg(long, default_value = "example5")]
        design: String,
        /// Sample sizes; repeat or separate with commas.
        #[arg(long = "n", value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        seg: SegmentArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Rolling one- and two-step forecast comparison; writes report.csv and report.json.
    Forecast {
        #[command(flatten)]
        input: InputArgs,
        /// Number of final observations forecast at each horizon.
        #[arg(long)]
        holdout: usize,
        /// Largest VAR order for the direct and per-group fits.
        #[arg(long = "max-var", default_value_t = tsseg::forecast::DEFAULT_VAR_MAX_ORDER)]
        max_var: usize,
        #[command(flatten)]
        seg: SegmentArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Volatility segmentation; writes segmentation.json.
    Volatility {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        seg: SegmentArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Segment { input, seg, out } => commands::cmd_segment(input, seg, out),
        Command::Simulate {
            design,
            n,
            reps,
            seed,
            seg,
            out,
        } => commands::cmd_simulate(design, n, *reps, *seed, seg, out),
        Command::Forecast {
            input,
            holdout,
            max_var,
            seg,
            out,
        } => commands::cmd_forecast(input, *holdout, seg, *max_var, out),
        Command::Volatility { input, seg, out } => commands::cmd_volatility(input, seg, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.kind() {
                ErrorKind::Input => ExitCode::from(2),
                ErrorKind::Numerical => ExitCode::from(3),
            }
        }
    }
}
