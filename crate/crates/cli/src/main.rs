use std::path::PathBuf;
use std::process::ExitCode;

use alstm_cli::commands;
use alstm_cli::config::RunConfig;
use alstm_cli::exit_code;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "alstm",
    version,
    about = "Attentive LSTM stock movement prediction with adversarial training"
)]
struct Cli {
    /// Run configuration file.
    #[arg(long, short, global = true, default_value = "alstm.conf")]
    config: PathBuf,

    /// Train or evaluate only this seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, overriding `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest, align, featurize and split the price files into a dataset.
    Build,
    /// Train one model per configured seed.
    Train,
    /// Run the hyperparameter grid on the validation split.
    Grid,
    /// Evaluate trained models and the indicator baselines on the test split.
    Eval,
    /// Evaluate trained models under the fast-gradient attack.
    Attack {
        /// Attack radius; defaults to the training epsilon.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Aggregate test metrics over seeds.
    Report,
}

fn run(cli: Cli) -> alstm_core::Result<String> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.validate()?;
    match cli.command {
        Command::Build => commands::cmd_build(&cfg),
        Command::Train => commands::cmd_train(&cfg),
        Command::Grid => commands::cmd_grid(&cfg),
        Command::Eval => commands::cmd_eval(&cfg),
        Command::Attack { epsilon } => commands::cmd_attack(&cfg, epsilon),
        Command::Report => commands::cmd_report(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
