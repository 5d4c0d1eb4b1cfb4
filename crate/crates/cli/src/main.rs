//! `inn`: data generation, training, evaluation and sweeps for the 1D
//! deconvolution study.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use inn_core::config::Scale;
use inn_core::Error;

#[derive(Parser, Debug)]
#[command(name = "inn", version, about = "Interval neural network uncertainty study on 1D deconvolution")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// key = value overrides applied on top of the scale preset
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the `seed` config key
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "desk")]
    pub scale: ScaleArg,
    /// Dataset file from `gen-data`; regenerated from the config when absent
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Log progress to stderr (repeat for more detail)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum ScaleArg {
    Paper,
    Desk,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Paper => Scale::Paper,
            ScaleArg::Desk => Scale::Desk,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the dataset file `data.innd`
    GenData,
    /// Train the point network; writes `base.ckpt`
    TrainBase,
    /// Train interval bounds around a base checkpoint; writes `inn.ckpt`
    TrainInn {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train a ProbOut head from a base checkpoint; writes `probout.ckpt`
    TrainProbout {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Score INN, MC-dropout and ProbOut on the test split
    Eval {
        /// The INN checkpoint, then the ProbOut checkpoint
        #[arg(long, num_args = 2, value_names = ["INN", "PROBOUT"])]
        checkpoints: Vec<PathBuf>,
        /// Number of test samples plotted as `sample_k.svg`
        #[arg(long, default_value_t = 3)]
        plots: usize,
    },
    /// Retrain at every noise level and record the mean uncertainty
    NoiseSweep {
        /// Retrain MC-dropout and ProbOut as well
        #[arg(long)]
        baselines: bool,
    },
    /// Direction accuracy of an INN checkpoint over the threshold grid
    DirectionSweep {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Full study: data, training over several seeds, all reports and sweeps
    #[command(name = "repro-1ddeconv")]
    Repro1dDeconv {
        /// Number of training seeds
        #[arg(long, default_value_t = 3)]
        runs: usize,
        #[arg(long)]
        skip_noise: bool,
        #[arg(long, default_value_t = 3)]
        plots: usize,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidArgument(_) => 2,
        Error::Io { .. } | Error::Corrupt(_) | Error::Containment(_) => 3,
        Error::Divergence(_) | Error::NonFinite(_) => 4,
        Error::UndefinedMetric(_) => 5,
        Error::Shape { .. } | Error::StaleCache(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli.global, &cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
