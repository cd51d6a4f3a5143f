//! Argument parsing and dispatch for the `deid` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use deid_core::transfer::{LabelPolicy, TransferPlan};

use crate::commands::{self, ExperimentArgs, Predictions};
use crate::error::{HarnessError, Result};
use crate::experiment::Experiment;

#[derive(Debug, Parser)]
#[command(name = "deid", version, about = "Character-aware BiLSTM-CRF tagger with layer-wise transfer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct HyperArgs {
    /// Hyperparameter file (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the `seed` hyperparameter.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Experiment config (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated replicate seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Comma-separated train fractions in (0, 0.6].
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    /// Worker threads for the run grid.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate source and target synthetic corpora with stats files.
    GenCorpus {
        /// Corpus spec file (`key = value` lines).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from scratch and save the best checkpoint.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Initialize from a source checkpoint under a plan, then train.
    TransferTrain {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        /// `none`, `all`, `prefix:N`, or layer names/indices joined by `,` or `+`.
        #[arg(long, default_value = "all")]
        plan: String,
        /// Keep fresh label layers when source and target labels differ.
        #[arg(long)]
        reinit_label_layers: bool,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a column file with predicted labels.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint or a prediction file against gold labels.
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, conflicts_with = "pred", required_unless_present = "pred")]
        model: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Also write the metrics as a one-row CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print dataset counts for a column file.
    CorpusStats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Baseline vs full transfer across seeds and train fractions.
    Experiment1(GridArgs),
    /// Every layer-prefix plan across seeds and train fractions.
    Experiment2(GridArgs),
}

fn grid(a: GridArgs) -> ExperimentArgs {
    ExperimentArgs {
        config: a.config,
        seeds: a.seeds,
        fractions: a.fractions,
        threads: a.threads,
        out: a.out,
    }
}

pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::GenCorpus { config, seed, out } => commands::gen_corpus(config.as_deref(), seed, &out),
        Command::Train { train, dev, hyper, out } => {
            let h = commands::load_hyper(hyper.config.as_deref(), hyper.seed)?;
            commands::train(&train, &dev, &h, &out)
        }
        Command::TransferTrain {
            source,
            train,
            dev,
            plan,
            reinit_label_layers,
            hyper,
            out,
        } => {
            let policy = if reinit_label_layers {
                LabelPolicy::ReinitLabelLayers
            } else {
                LabelPolicy::RequireIdentical
            };
            let plan = plan.parse::<TransferPlan>()?.with_policy(policy);
            let h = commands::load_hyper(hyper.config.as_deref(), hyper.seed)?;
            commands::transfer_train(&source, &train, &dev, &plan, &h, &out)
        }
        Command::Predict { model, input, out } => commands::predict(&model, &input, &out),
        Command::Evaluate { gold, model, pred, out } => {
            let source = match (&model, &pred) {
                (Some(m), None) => Predictions::Model(m),
                (None, Some(p)) => Predictions::File(p),
                _ => return Err(HarnessError::Usage("give exactly one of --model or --pred".into())),
            };
            commands::evaluate(&gold, source, out.as_deref())
        }
        Command::CorpusStats { input, out } => commands::corpus_stats_cmd(&input, out.as_deref()),
        Command::Experiment1(a) => commands::experiment(Experiment::One, &grid(a)),
        Command::Experiment2(a) => commands::experiment(Experiment::Two, &grid(a)),
    }
}

/// Parses `args`, runs the command, and returns the process exit code.
/// Output goes to stdout; errors print as `error[category]: message`.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            e.exit_code()
        }
    }
}
