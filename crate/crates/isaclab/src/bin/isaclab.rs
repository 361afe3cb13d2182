//! Experiment CLI: dataset generation, training, evaluation sweeps, and the
//! self-check property suite.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use isaclab::harness::{
    cmd_eval, cmd_gen_data, cmd_train, cmd_verify, load_system_config, load_train_config,
    resolve_seed, ExperimentSpec, Scheme, SweepVar, TrainArgs, VerifyScope,
};
use isaclab::isacnn::{ArchKind, TrainConfig};
use isaclab::scene::SystemConfig;
use isaclab::Result;

#[derive(Parser)]
#[command(
    name = "isaclab",
    about = "Joint sensing-waveform and receive-beamforming experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset file with precomputed per-scene normalizers.
    GenData(GenDataArgs),
    /// Train a network and write a checkpoint plus a per-epoch CSV log.
    Train(TrainCli),
    /// Evaluate schemes over a sweep and write a results CSV.
    Eval(EvalArgs),
    /// Run the property suites and print one pass/fail line per check.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Scene configuration file (key = value); defaults used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output dataset path.
    #[arg(long)]
    out: PathBuf,
    /// Number of scenes to generate.
    #[arg(long, default_value_t = 10000)]
    samples: usize,
    /// Validation fraction recorded in the dataset.
    #[arg(long, default_value_t = 0.2)]
    split: f64,
    /// RNG seed (overrides ISACLAB_SEED and the config file).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainCli {
    /// Dataset file from gen-data.
    #[arg(long)]
    data: PathBuf,
    /// Training configuration file (key = value); protocol defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Architecture: cnn or fcnn.
    #[arg(long, default_value = "cnn")]
    arch: String,
    /// Sensing weight in the loss.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Output checkpoint path (per-epoch log goes to the same stem with .csv).
    #[arg(long)]
    out: PathBuf,
    /// Resume from an existing checkpoint (its schedule and alpha apply).
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Training seed (overrides ISACLAB_SEED and the config file).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Experiment specification file (sweep, sweep_values, schemes, ...).
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint path for network schemes; "{value}" is replaced by the
    /// sweep value (per-value retraining).
    #[arg(long)]
    checkpoint: Option<String>,
    /// Output CSV path (timing goes to the same stem with .timing.csv).
    #[arg(long)]
    out: PathBuf,
    /// Override the schemes listed in the experiment config (comma separated).
    #[arg(long)]
    scheme: Option<String>,
    /// Override the sweep variable (the experiment config sweep_values still apply).
    #[arg(long)]
    sweep: Option<String>,
    /// Override the number of evaluation scenes per sweep value.
    #[arg(long)]
    samples: Option<usize>,
    /// Override the base sensing weight.
    #[arg(long)]
    alpha: Option<f64>,
    /// Evaluation seed (overrides ISACLAB_SEED and the experiment config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Scope: lemmas, gradients, oracles, or all.
    #[arg(long, default_value = "all")]
    scope: String,
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData(args) => {
            let mut config = match &args.config {
                Some(path) => load_system_config(path)?,
                None => SystemConfig::default(),
            };
            config.seed = resolve_seed(args.seed, config.seed)?;
            cmd_gen_data(&config, args.samples, args.split, &args.out)?;
            println!(
                "wrote {} scenes (feature length {}) to {}",
                args.samples,
                config.feature_len(),
                args.out.display()
            );
            Ok(true)
        }
        Command::Train(args) => {
            let mut config = match &args.config {
                Some(path) => load_train_config(path)?,
                None => TrainConfig::default(),
            };
            config.seed = resolve_seed(args.seed, config.seed)?;
            let train_args = TrainArgs {
                data: args.data,
                arch: ArchKind::parse(&args.arch)?,
                alpha: args.alpha,
                config,
                out: args.out.clone(),
                log: None,
                resume: args.resume,
            };
            let run = cmd_train(&train_args)?;
            println!(
                "trained {} epochs; best val loss {} at epoch {}; checkpoint {}",
                run.history.len(),
                run.best_val_loss,
                run.best_epoch,
                args.out.display()
            );
            Ok(true)
        }
        Command::Eval(args) => {
            let mut spec = ExperimentSpec::from_file(&args.config)?;
            if let Some(schemes) = &args.scheme {
                spec.schemes = schemes
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| Scheme::parse(s.trim()))
                    .collect::<Result<Vec<_>>>()?;
            }
            if let Some(sweep) = &args.sweep {
                spec.sweep = SweepVar::parse(sweep)?;
            }
            if let Some(n) = args.samples {
                spec.eval_samples = n;
            }
            if let Some(a) = args.alpha {
                spec.base.alpha = a;
            }
            spec.seed = resolve_seed(args.seed, spec.seed)?;
            spec.validate()?;
            let rows = cmd_eval(&spec, args.checkpoint.as_deref(), &args.out)?;
            println!("wrote {} result rows to {}", rows.len(), args.out.display());
            Ok(true)
        }
        Command::Verify(args) => {
            let scope = VerifyScope::parse(&args.scope)?;
            let lines = cmd_verify(scope)?;
            let mut all_pass = true;
            for line in &lines {
                println!("{}", line.render());
                all_pass &= line.pass;
            }
            Ok(all_pass)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
