//! Command-line surface: `train`, `compare`, and `forecast` subcommands.
//!
//! Configuration precedence: command-line flags override the optional TOML
//! config file, which overrides the MATSF_SEED environment variable, which
//! overrides built-in defaults. Exit codes: 1 configuration/usage error,
//! 2 data error, 3 divergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use matsf::data::ImputePolicy;
use matsf::run::{self, DataSource, RunConfig, RunError, SchemaKind, SynthSpec, SystemKind};
use matsf::tensor::OptimizerKind;

#[derive(Parser)]
#[command(name = "matsf", version, about = "Multi-variable adversarial time-series forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Train one system end to end and write all run artifacts.
    Train(TrainArgs),
    /// Compare two or more finished run directories on the same dataset.
    Compare(CompareArgs),
    /// Forecast the next step from a checkpoint and a CSV window.
    Forecast(ForecastArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// System to train: adversarial | multi_output | parallel
    #[arg(long)]
    system: Option<SystemKind>,

    /// Input CSV file.
    #[arg(long, conflicts_with = "synth")]
    data: Option<PathBuf>,

    /// Synthetic source, e.g. "d=3,length=5000,cross=0.5,noise=0.05".
    #[arg(long)]
    synth: Option<String>,

    /// Experiment profile: airquality (24 x 3x10) or industrial (96 x 1x100).
    #[arg(long)]
    profile: Option<String>,

    /// Schema: auto | airquality | generic
    #[arg(long)]
    schema: Option<String>,

    /// Timestamp column for generic schemas.
    #[arg(long)]
    timestamp_column: Option<String>,

    /// Comma-separated target columns (default: schema-dependent).
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<String>>,

    #[arg(long)]
    lookback: Option<usize>,

    /// Number of stacked LSTM layers.
    #[arg(long)]
    layers: Option<usize>,

    /// Hidden units per LSTM layer.
    #[arg(long)]
    units: Option<usize>,

    /// Discriminator hidden widths, e.g. "12,12".
    #[arg(long, value_delimiter = ',')]
    disc_hidden: Option<Vec<usize>>,

    #[arg(long)]
    horizon: Option<usize>,

    #[arg(long)]
    epochs: Option<usize>,

    #[arg(long)]
    batch_size: Option<usize>,

    #[arg(long)]
    lr_forecast: Option<f64>,

    #[arg(long)]
    lr_disc: Option<f64>,

    #[arg(long)]
    lr_gen: Option<f64>,

    /// Weight of the adversarial generator loss (0 disables it).
    #[arg(long)]
    lambda_adv: Option<f64>,

    /// Optimizer: adam | sgd
    #[arg(long)]
    optimizer: Option<String>,

    #[arg(long)]
    disc_steps: Option<usize>,

    #[arg(long)]
    gen_steps: Option<usize>,

    /// Minimize log(1 - D(G)) literally instead of -log D(G).
    #[arg(long)]
    saturating_gen_loss: bool,

    #[arg(long)]
    train_fraction: Option<f64>,

    /// Imputation policy: drop_leading | forward_fill
    #[arg(long)]
    impute: Option<String>,

    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for all artifacts.
    #[arg(long)]
    out: Option<PathBuf>,

    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Run directories to compare (at least two).
    dirs: Vec<PathBuf>,

    /// Where to write the comparison CSV.
    #[arg(long, default_value = "comparison.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct ForecastArgs {
    #[arg(long)]
    checkpoint: PathBuf,

    /// CSV whose trailing rows form the lookback window.
    #[arg(long)]
    data: PathBuf,
}

fn env_seed() -> Option<u64> {
    std::env::var("MATSF_SEED").ok().and_then(|s| s.parse().ok())
}

fn resolve_train_config(args: &TrainArgs) -> Result<RunConfig, RunError> {
    // layer 0: file or defaults
    let mut cfg = match &args.config {
        Some(path) => {
            let raw = std::fs::read_to_string(path)
                .map_err(|e| RunError::Config(format!("cannot read config {}: {e}", path.display())))?;
            toml::from_str::<RunConfig>(&raw)
                .map_err(|e| RunError::Config(format!("bad config {}: {e}", path.display())))?
        }
        None => {
            let source = match (&args.data, &args.synth) {
                (Some(path), None) => DataSource::Csv { path: path.clone() },
                (None, Some(spec)) => DataSource::Synth { spec: SynthSpec::parse(spec)? },
                (None, None) => {
                    return Err(RunError::Config("one of --data or --synth is required".into()))
                }
                (Some(_), Some(_)) => unreachable!("clap conflict"),
            };
            let mut c = RunConfig::defaults(source, PathBuf::new());
            if let Some(seed) = env_seed() {
                c.train.seed = seed;
            }
            c
        }
    };

    // flags override the file for the source; the output directory is never
    // read from a file
    if args.config.is_some() {
        if let Some(path) = &args.data {
            cfg.source = DataSource::Csv { path: path.clone() };
        }
        if let Some(spec) = &args.synth {
            cfg.source = DataSource::Synth { spec: SynthSpec::parse(spec)? };
        }
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }

    // layer 1: profile shapes
    if let Some(profile) = &args.profile {
        cfg.apply_profile(profile)?;
    }

    // layer 2: individual flags
    if let Some(v) = args.system {
        cfg.system = v;
    }
    if let Some(v) = &args.schema {
        cfg.schema = match v.as_str() {
            "auto" => SchemaKind::Auto,
            "airquality" => SchemaKind::AirQuality,
            "generic" => SchemaKind::Generic,
            other => return Err(RunError::Config(format!("unknown schema '{other}'"))),
        };
    }
    if let Some(v) = &args.timestamp_column {
        cfg.timestamp_column = v.clone();
    }
    if let Some(v) = &args.targets {
        cfg.targets = v.clone();
    }
    if let Some(v) = args.lookback {
        cfg.lookback = v;
    }
    if let Some(v) = args.layers {
        cfg.layers = v;
    }
    if let Some(v) = args.units {
        cfg.units = v;
    }
    if let Some(v) = &args.disc_hidden {
        cfg.disc_hidden = v.clone();
    }
    if let Some(v) = args.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = args.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = args.lr_forecast {
        cfg.train.lr_forecast = v;
    }
    if let Some(v) = args.lr_disc {
        cfg.train.lr_disc = v;
    }
    if let Some(v) = args.lr_gen {
        cfg.train.lr_gen = v;
    }
    if let Some(v) = args.lambda_adv {
        cfg.train.lambda_adv = v;
    }
    if let Some(v) = &args.optimizer {
        cfg.train.optimizer = match v.as_str() {
            "adam" => OptimizerKind::Adam,
            "sgd" => OptimizerKind::Sgd,
            other => return Err(RunError::Config(format!("unknown optimizer '{other}'"))),
        };
    }
    if let Some(v) = args.disc_steps {
        cfg.train.disc_steps_per_batch = v;
    }
    if let Some(v) = args.gen_steps {
        cfg.train.gen_steps_per_batch = v;
    }
    if args.saturating_gen_loss {
        cfg.train.saturating_generator_loss = true;
    }
    if let Some(v) = args.train_fraction {
        cfg.train_fraction = v;
    }
    if let Some(v) = &args.impute {
        cfg.impute = match v.as_str() {
            "drop_leading" => ImputePolicy::DropLeading,
            "forward_fill" => ImputePolicy::ForwardFill,
            other => return Err(RunError::Config(format!("unknown impute policy '{other}'"))),
        };
    }
    if let Some(v) = args.seed {
        cfg.train.seed = v;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Train(args) => {
            let cfg = resolve_train_config(&args)?;
            let outcome = run::run_train(&cfg)?;
            println!(
                "trained {} for {} epochs; artifacts in {}",
                outcome.summary.system,
                outcome.summary.epochs_recorded,
                cfg.out_dir.display()
            );
            for (name, mse) in outcome
                .summary
                .variables
                .iter()
                .zip(outcome.summary.eval.mse.iter())
            {
                println!("test mse {name} = {mse}");
            }
            println!("joint consistency gap = {}", outcome.summary.eval.joint.frobenius_gap);
            Ok(())
        }
        Command::Compare(args) => {
            let table = run::run_compare(&args.dirs, Some(&args.out))?;
            print!("{table}");
            println!("comparison written to {}", args.out.display());
            Ok(())
        }
        Command::Forecast(args) => {
            let forecasts = run::run_forecast(&args.checkpoint, &args.data)?;
            for (name, value) in forecasts {
                println!("{name} {value}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
