mod commands;
mod experiment;
mod failure;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use experiment::{load_kv, ExperimentConfig};
use failure::{exit_kind, ExitKind};

/// Zero anaphora resolution experiments with masked-language-model augmentation.
#[derive(Parser)]
#[command(name = "zarkit", version)]
struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config entry; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic annotated corpus.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        n: usize,
        /// Index of the first generated sentence.
        #[arg(long, default_value_t = 0)]
        start: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write masked (and optionally filled) copies of a corpus.
    Augment {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Input corpus; defaults to `train_path`.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        epoch: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write language-model fills here.
        #[arg(long)]
        filled: Option<PathBuf>,
    },
    /// Train one model per seed.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Evaluate trained checkpoints.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "test")]
        split: String,
        /// Also score the mean of all seeds' distributions.
        #[arg(long)]
        ensemble: bool,
        /// Output directory of another run to test significance against.
        #[arg(long)]
        against: Option<PathBuf>,
    },
    /// Run the tagset × masking-probability grid.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Render stored reports and sweep results.
    Report {
        /// `NAME=report.json`; may be repeated.
        #[arg(long = "input")]
        inputs: Vec<String>,
        #[arg(long)]
        sweep: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let kv = |c: &ConfigArgs| load_kv(c.config.as_deref(), &c.set);
    match cli.command {
        Command::Synth { cfg, n, start, out } => commands::synth(&kv(&cfg)?, n, start, &out),
        Command::Augment {
            cfg,
            corpus,
            epoch,
            out,
            filled,
        } => commands::augment(
            &kv(&cfg)?,
            corpus.as_deref(),
            epoch,
            &out,
            filled.as_deref(),
        ),
        Command::Train { cfg } => commands::train(&ExperimentConfig::from_kv(kv(&cfg)?)?),
        Command::Eval {
            cfg,
            split,
            ensemble,
            against,
        } => commands::eval(
            &ExperimentConfig::from_kv(kv(&cfg)?)?,
            &split,
            ensemble,
            against.as_deref(),
        ),
        Command::Sweep { cfg } => commands::sweep(&ExperimentConfig::from_kv(kv(&cfg)?)?),
        Command::Report {
            inputs,
            sweep,
            out_dir,
        } => commands::report(&inputs, sweep.as_deref(), out_dir.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(ExitKind::Usage as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_kind(&e) as u8)
        }
    }
}
