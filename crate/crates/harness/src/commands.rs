//! Command implementations. Each returns the text to print on stdout; the
//! only files touched are the ones named as outputs.

use std::fs;
use std::path::{Path, PathBuf};

use deid_core::config::read_key_values;
use deid_core::data::{corpus_stats, generate_synthetic, read_column_file, write_column_file, Corpus, SynthSpec};
use deid_core::eval::evaluate_labels;
use deid_core::network::{predict_corpus, Hyperparameters, NerModel};
use deid_core::transfer::{load_checkpoint, save_checkpoint, TransferPlan};
use deid_core::NerError;

use crate::error::Result;
use crate::experiment::{run_experiment, Experiment, ExperimentConfig};
use crate::pipeline::{train_model, Trained};

/// File names written by `gen-corpus`, in write order.
pub const CORPUS_FILES: [&str; 6] = [
    "source_train.txt",
    "source_dev.txt",
    "source_test.txt",
    "target_train.txt",
    "target_dev.txt",
    "target_test.txt",
];
pub const STATS_FILES: [&str; 2] = ["source.stats", "target.stats"];

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| NerError::io(path, e).into())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| NerError::io(path, e).into())
}

/// Hyperparameters from an optional `key = value` file, then `seed`.
pub fn load_hyper(config: Option<&Path>, seed: Option<u64>) -> Result<Hyperparameters> {
    let mut hyper = Hyperparameters::default();
    if let Some(path) = config {
        for e in read_key_values(path)? {
            if !hyper.apply(&e)? {
                return Err(e.unknown().into());
            }
        }
    }
    if let Some(s) = seed {
        hyper.seed = s;
    }
    hyper.validate()?;
    Ok(hyper)
}

pub fn gen_corpus(spec: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<String> {
    let mut spec = match spec {
        Some(p) => SynthSpec::from_file(p)?,
        None => SynthSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate()?;
    let corpora = generate_synthetic(&spec)?;
    create_dir(out)?;
    let splits = [&corpora.source, &corpora.target];
    let parts = splits.iter().flat_map(|s| [&s.train, &s.dev, &s.test]);
    for (name, corpus) in CORPUS_FILES.iter().zip(parts) {
        write_column_file(corpus, out.join(name))?;
    }
    let mut summary = String::new();
    for (name, split) in STATS_FILES.iter().zip(splits) {
        let stats = corpus_stats(&split.whole()?).to_key_values();
        write_text(&out.join(name), &stats)?;
        summary.push_str(&format!("[{name}]\n{stats}"));
    }
    Ok(summary)
}

fn report_text(trained: &Trained) -> String {
    let mut out = trained.report.to_key_values();
    if let Some(t) = &trained.transfer {
        out.push_str(&t.to_key_values());
    }
    out
}

pub fn train(train: &Path, dev: &Path, hyper: &Hyperparameters, out: &Path) -> Result<String> {
    let trained = train_model(hyper, &read_column_file(train)?, &read_column_file(dev)?, hyper.seed, None)?;
    save_checkpoint(&trained.model, out)?;
    Ok(report_text(&trained))
}

pub fn transfer_train(
    source: &Path,
    train: &Path,
    dev: &Path,
    plan: &TransferPlan,
    hyper: &Hyperparameters,
    out: &Path,
) -> Result<String> {
    let (source, _) = load_checkpoint(source)?;
    let trained = train_model(
        hyper,
        &read_column_file(train)?,
        &read_column_file(dev)?,
        hyper.seed,
        Some((&source, plan)),
    )?;
    save_checkpoint(&trained.model, out)?;
    Ok(report_text(&trained))
}

/// Gold labels the model cannot emit are a label-set mismatch, not a score.
fn check_labels(model: &NerModel, gold: &Corpus) -> Result<()> {
    let missing: Vec<&String> = gold
        .inventory()
        .iter()
        .filter(|l| model.vocab().label_id(l).is_none())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(NerError::LabelMismatch(format!("labels {missing:?} are not in the model's label set")).into())
    }
}

pub fn predict(model: &Path, input: &Path, out: &Path) -> Result<String> {
    let (model, _) = load_checkpoint(model)?;
    let corpus = read_column_file(input)?;
    let pred = predict_corpus(&model, &corpus)?;
    let labeled = corpus.relabel(&pred)?;
    write_column_file(&labeled, out)?;
    Ok(format!("sentences={}\n", pred.len()))
}

pub enum Predictions<'a> {
    Model(&'a Path),
    File(&'a Path),
}

/// Scores against `gold`, printing the key=value report and, with
/// `csv_out`, writing a one-row metrics CSV.
pub fn evaluate(gold: &Path, pred: Predictions<'_>, csv_out: Option<&Path>) -> Result<String> {
    let gold = read_column_file(gold)?;
    let labels = match pred {
        Predictions::Model(p) => {
            let (model, _) = load_checkpoint(p)?;
            check_labels(&model, &gold)?;
            predict_corpus(&model, &gold)?
        }
        Predictions::File(p) => {
            let pred = read_column_file(p)?;
            let same_tokens = pred.num_sentences() == gold.num_sentences()
                && gold
                    .sentences()
                    .zip(pred.sentences())
                    .all(|(g, p)| g.surfaces().eq(p.surfaces()));
            if !same_tokens {
                return Err(NerError::contract("prediction file tokens differ from the gold file").into());
            }
            pred.label_sequences()
        }
    };
    let report = evaluate_labels(&gold.label_sequences(), &labels)?;
    if let Some(path) = csv_out {
        write_text(path, &format!("{}\n{}\n", deid_core::eval::MetricReport::CSV_HEADER, report.to_csv_row()))?;
    }
    Ok(report.to_key_values())
}

pub fn corpus_stats_cmd(input: &Path, out: Option<&Path>) -> Result<String> {
    let stats = corpus_stats(&read_column_file(input)?).to_key_values();
    if let Some(p) = out {
        write_text(p, &stats)?;
    }
    Ok(stats)
}

pub struct ExperimentArgs {
    pub config: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub fractions: Option<Vec<f64>>,
    pub threads: Option<usize>,
    pub out: PathBuf,
}

pub fn experiment(which: Experiment, args: &ExperimentArgs) -> Result<String> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = &args.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(f) = &args.fractions {
        cfg.fractions = f.clone();
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    cfg.validate()?;
    let outputs = run_experiment(&cfg, which, &args.out)?;
    let failed = outputs.rows.iter().filter(|r| r.status != "ok").count();
    Ok(format!(
        "rows={}\nfailed={failed}\nresults={}\nsummary={}\n",
        outputs.rows.len(),
        outputs.results_csv.display(),
        outputs.summary_csv.display()
    ))
}
