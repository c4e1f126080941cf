//! `osteo`: synthesise data, train, evaluate, predict and self-check.
//!
//! Exit codes: 0 success, 1 computational failure, 2 usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use osteo::data::Split;
use osteo::eval::TableFormat;
use osteo::{Error, Result};

use commands::EvalArgs;
use config::TrainArgs;

#[derive(Parser, Debug)]
#[command(name = "osteo", version, about = "Osteosarcoma histopathology classifiers")]
struct Cli {
    /// Worker threads for data loading and matrix products.
    #[arg(long, global = true, env = "OSTEO_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic four-class image tree.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        per_class: usize,
        #[arg(long, default_value_t = 64)]
        side: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model into a run directory.
    Train(TrainArgs),
    /// Score a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        scoring: Scoring,
        /// Row label; defaults to the architecture name.
        #[arg(long)]
        name: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Print class probabilities for one image, most likely first.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Finite-difference check of every differentiable op in f64.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Add an op with a deliberately wrong backward rule.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Tabulate JSON reports and checkpoints of one task.
    Report {
        /// `.json` reports or checkpoints (scored on --data).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value = "macro")]
        averaging: String,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(clap::Args, Debug)]
struct Scoring {
    /// Dataset root or manifest JSON.
    #[arg(long)]
    data: PathBuf,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// macro, or positive (binary task, VT as positive class).
    #[arg(long, default_value = "macro")]
    averaging: String,
}

#[derive(clap::Args, Debug)]
struct Output {
    /// csv or markdown.
    #[arg(long, default_value = "markdown")]
    format: String,
    /// Also write an SVG bar chart here.
    #[arg(long)]
    chart: Option<PathBuf>,
}

fn init_workers(workers: Option<usize>) -> Result<()> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    init_workers(cli.workers)?;
    match cli.command {
        Command::Synth { out, per_class, side, seed } => commands::synth(&out, per_class, side, seed)?,
        Command::Train(args) => commands::train_cmd(&args)?,
        Command::Eval { checkpoint, scoring, name, output } => {
            let split: Split = scoring.split.parse()?;
            let args = EvalArgs { data: &scoring.data, split, averaging: &scoring.averaging };
            let format: TableFormat = output.format.parse()?;
            commands::eval_cmd(&checkpoint, &args, name.as_deref(), format, output.chart.as_deref())?
        }
        Command::Predict { checkpoint, image } => commands::predict_cmd(&checkpoint, &image)?,
        Command::Gradcheck { seed, inject_fault } => return commands::gradcheck_cmd(seed, inject_fault),
        Command::Report { inputs, data, split, averaging, output } => {
            let split: Split = split.parse()?;
            let format: TableFormat = output.format.parse()?;
            let args = data.as_deref().map(|data| EvalArgs { data, split, averaging: &averaging });
            commands::report_cmd(&inputs, args.as_ref(), format, output.chart.as_deref())?
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
