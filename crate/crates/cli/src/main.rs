//! `myoprop` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (unreadable or malformed input, training failures), 3 numeric failure.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use myoprop::{Error, KSelection, MetricKind, WeightScheme};

#[derive(Debug, Parser)]
#[command(name = "myoprop", version, about = "Proportional kNN myocontrol: synthesize, train, evaluate, compare")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic recording, or a trial set with --trials.
    Synth(SynthArgs),
    /// Train a kNN or RR-RFF model on a recording.
    Train(TrainArgs),
    /// Block-wise cross-validation report over a k/metric/weighting grid.
    Crossval(CrossvalArgs),
    /// Per-frame predictions of a model on a recording.
    Predict(PredictArgs),
    /// Success rates of a model on a trial set.
    Eval(EvalArgs),
    /// Train both algorithms and compare them on the same trials.
    Compare(CompareArgs),
    /// One-way ANOVA across groups of observations.
    Anova(AnovaArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Session script JSON (a trial plan with --trials); study defaults if omitted.
    #[arg(long)]
    script: Option<std::path::PathBuf>,
    /// Generator config JSON; keys override the defaults.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Emit goal-directed trials instead of a training session.
    #[arg(long)]
    trials: bool,
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Algo {
    Knn,
    Rrrff,
}

#[derive(Debug, Clone, Args)]
struct KnnOpts {
    /// Rest threshold gain.
    #[arg(long, default_value_t = myoprop::proportional::DEFAULT_GAIN)]
    g: f64,
    /// Proportional offset divisor.
    #[arg(long, default_value_t = myoprop::proportional::DEFAULT_DIVISOR)]
    d: f64,
    /// Neighbour count, or `auto` for block-wise CV over the default grid.
    #[arg(long, default_value = "1", value_parser = parse_k)]
    k: KSelection,
    /// euclidean, minkowski:P or mahalanobis.
    #[arg(long, default_value = "euclidean")]
    metric: MetricKind,
    /// uniform, inv or inv-sq.
    #[arg(long, default_value = "inv-sq")]
    weight: WeightScheme,
}

#[derive(Debug, Clone, Args)]
struct RffOpts {
    /// Number of random Fourier features.
    #[arg(long, default_value_t = 300)]
    features: usize,
    /// Ridge penalty.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Activation threshold below which the output is rest.
    #[arg(long, default_value_t = 0.15)]
    rho: f64,
    /// Kernel bandwidth gamma; median heuristic if omitted.
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: std::path::PathBuf,
    #[arg(long, value_enum, default_value = "knn")]
    algo: Algo,
    #[command(flatten)]
    knn: KnnOpts,
    #[command(flatten)]
    rff: RffOpts,
    /// Causal moving-average window in frames.
    #[arg(long, default_value_t = 5)]
    smooth: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Debug, Args)]
struct CrossvalArgs {
    #[arg(long)]
    data: std::path::PathBuf,
    /// Comma-separated k values; odd values up to 10% of the training size if omitted.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', default_value = "euclidean")]
    metric: Vec<MetricKind>,
    #[arg(long, value_delimiter = ',', default_value = "inv-sq")]
    weight: Vec<WeightScheme>,
    #[arg(long, default_value_t = 5)]
    smooth: usize,
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: std::path::PathBuf,
    #[arg(long)]
    data: std::path::PathBuf,
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Debug, Clone, Args)]
struct ProtocolOpts {
    /// Allowed deviation of the proportional output from the target level.
    #[arg(long, default_value_t = 0.15)]
    tolerance: f64,
    /// Seconds the target must be held.
    #[arg(long, default_value_t = 0.5)]
    dwell: f64,
    /// Seconds after which a trial fails.
    #[arg(long, default_value_t = 10.0)]
    timeout: f64,
    /// Comma-separated exertion levels.
    #[arg(long, value_delimiter = ',', default_value = "0.33,0.67,1")]
    levels: Vec<f64>,
    /// Trial stream frame rate in Hz.
    #[arg(long, default_value_t = 50.0)]
    rate: f64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: std::path::PathBuf,
    #[arg(long)]
    trials: std::path::PathBuf,
    #[command(flatten)]
    protocol: ProtocolOpts,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write per-trial outcomes here.
    #[arg(long)]
    records: Option<std::path::PathBuf>,
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    train: std::path::PathBuf,
    #[arg(long)]
    trials: std::path::PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    knn: KnnOpts,
    #[command(flatten)]
    rff: RffOpts,
    #[command(flatten)]
    protocol: ProtocolOpts,
    #[arg(long, default_value_t = 5)]
    smooth: usize,
    #[arg(long)]
    out_dir: std::path::PathBuf,
}

#[derive(Debug, Args)]
struct AnovaArgs {
    /// Comma-separated group files. A single file with an `algorithm` or
    /// `group` column is split by that column.
    #[arg(long, value_delimiter = ',', required = true)]
    groups: Vec<std::path::PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

fn parse_k(s: &str) -> Result<KSelection, String> {
    if s == "auto" {
        return Ok(KSelection::Auto { candidates: None });
    }
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(KSelection::Fixed(k)),
        _ => Err(format!("expected `auto` or a positive integer, got `{s}`")),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Crossval(a) => commands::crossval(a),
        Command::Predict(a) => commands::predict(a),
        Command::Eval(a) => commands::eval(a),
        Command::Compare(a) => commands::compare(a),
        Command::Anova(a) => commands::anova(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
