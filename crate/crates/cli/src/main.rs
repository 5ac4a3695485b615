mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::failure::Failure;

#[derive(Parser, Debug)]
#[command(
    name = "causeway",
    version,
    about = "Causal span extraction: train, predict, evaluate, augment"
)]
pub struct Cli {
    /// Seed for every random choice; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Skip malformed input rows instead of failing.
    #[arg(long, global = true)]
    pub lenient: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AugmentMode {
    St1Eda,
    St2Eda,
    Oversample,
    Synth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Fair,
    Strict,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert a corpus between CSV and JSONL.
    Convert {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum)]
        from: Option<Format>,
        #[arg(long, value_enum)]
        to: Option<Format>,
    },
    /// Train the sentence-level causality classifier.
    TrainSt1(TrainArgs),
    /// Train the span tagger.
    TrainSt2(TrainArgs),
    /// Label sentences as causal or not.
    PredictSt1(PredictArgs),
    /// Extract cause, effect and signal spans.
    PredictSt2(PredictArgs),
    /// Score predicted spans against gold.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value = "fair")]
        mode: Mode,
        /// Also write the report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate synthetic training data.
    Augment {
        #[arg(long, value_enum)]
        mode: AugmentMode,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Number of records for oversample/synth.
        #[arg(long)]
        n: Option<usize>,
        /// Variants per sentence for the EDA modes.
        #[arg(long)]
        n_aug: Option<usize>,
    },
}

#[derive(clap::Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// CNCE embedding file covering train and dev sentences.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("causeway: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = config::resolve(&cli)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Convert {
            input,
            output,
            from,
            to,
        } => commands::convert(&cfg, &input, &output, from, to),
        Command::TrainSt1(args) => commands::train_st1(cfg, &args),
        Command::TrainSt2(args) => commands::train_st2(cfg, &args),
        Command::PredictSt1(args) => commands::predict_st1(&cfg, &args),
        Command::PredictSt2(args) => commands::predict_st2(&cfg, &args),
        Command::Eval {
            gold,
            pred,
            mode,
            report,
        } => commands::eval(&cfg, &gold, &pred, mode, report.as_deref()),
        Command::Augment {
            mode,
            input,
            output,
            n,
            n_aug,
        } => commands::augment(cfg, mode, input.as_deref(), &output, n, n_aug),
    }
}
