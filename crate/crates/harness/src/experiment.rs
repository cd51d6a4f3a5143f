//! Train-fraction sweeps comparing training from scratch with initialization
//! from a source-corpus model, either in full (experiment 1) or one layer
//! prefix at a time (experiment 2).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use deid_core::config::parse_key_values;
use deid_core::data::{generate_synthetic, subsample_train, SplitCorpus, SynthSpec, TRAIN_SHARE};
use deid_core::network::{evaluate, Hyperparameters, NerModel};
use deid_core::transfer::{load_checkpoint, prefix_plans, save_checkpoint, TransferPlan};
use deid_core::NerError;

use crate::error::{csv_err, HarnessError, Result};
use crate::pipeline::train_model;

pub const DEFAULT_FRACTIONS: [f64; 5] = [0.05, 0.10, 0.20, 0.40, 0.60];
pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub fractions: Vec<f64>,
    /// Target-model hyperparameters.
    pub hyper: Hyperparameters,
    /// Source-model hyperparameters: `hyper` plus any `source.` overrides.
    pub source_hyper: Hyperparameters,
    pub synth: SynthSpec,
    /// Worker threads for the run grid; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seeds: DEFAULT_SEEDS.to_vec(),
            fractions: DEFAULT_FRACTIONS.to_vec(),
            hyper: Hyperparameters::default(),
            source_hyper: Hyperparameters::default(),
            synth: SynthSpec::default(),
            threads: None,
        }
    }
}

impl ExperimentConfig {
    /// Keys: `seeds`, `fractions`, `threads`, any hyperparameter,
    /// `source.<hyperparameter>`, `synth_spec = <path>` (relative to
    /// `base_dir`), and `synth.<key>` for inline corpus-spec entries, which
    /// are applied after the spec file.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut synth_text = String::new();
        let mut synth_inline = String::new();
        let mut source_entries = Vec::new();
        for e in parse_key_values(text)? {
            match e.key.as_str() {
                "seeds" => cfg.seeds = e.parse_list()?,
                "fractions" => cfg.fractions = e.parse_list()?,
                "threads" => cfg.threads = Some(e.parse()?),
                "synth_spec" => {
                    let path = base_dir.join(&e.value);
                    synth_text = fs::read_to_string(&path).map_err(|err| NerError::io(path.clone(), err))?;
                    synth_text.push('\n');
                }
                key => {
                    if let Some(k) = key.strip_prefix("synth.") {
                        synth_inline.push_str(&format!("{k} = {}\n", e.value));
                    } else if let Some(k) = key.strip_prefix("source.") {
                        source_entries.push(deid_core::config::ConfigEntry {
                            key: k.to_string(),
                            ..e.clone()
                        });
                    } else if !cfg.hyper.apply(&e)? {
                        return Err(e.unknown().into());
                    }
                }
            }
        }
        cfg.source_hyper = cfg.hyper.clone();
        for e in &source_entries {
            if !cfg.source_hyper.apply(e)? {
                return Err(NerError::Config(format!("line {}: unknown key `source.{}`", e.line, e.key)).into());
            }
        }
        synth_text.push_str(&synth_inline);
        cfg.synth = SynthSpec::parse(&synth_text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| NerError::io(path.to_path_buf(), e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(NerError::Config("seed list is empty".into()).into());
        }
        if self.fractions.is_empty() {
            return Err(NerError::Config("fraction list is empty".into()).into());
        }
        if let Some(f) = self.fractions.iter().find(|&&f| !(f > 0.0 && f <= TRAIN_SHARE + 1e-12)) {
            return Err(NerError::Config(format!("fraction {f} outside (0, {TRAIN_SHARE}]")).into());
        }
        if self.threads == Some(0) {
            return Err(NerError::Config("threads must be at least 1".into()).into());
        }
        self.hyper.validate()?;
        self.source_hyper.validate()?;
        self.synth.validate()?;
        Ok(())
    }

    /// Fingerprint of everything that determines a source model for `seed`.
    fn source_key(&self, seed: u64) -> String {
        format!(
            "seed={seed}\n{}synth={:?}\n",
            self.source_hyper.to_key_values(),
            self.synth
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    One,
    Two,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::One => "experiment1",
            Experiment::Two => "experiment2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub seed: u64,
    pub fraction: f64,
    pub plan: TransferPlan,
    /// `baseline` or `transfer` in experiment 1.
    pub condition: Option<&'static str>,
}

/// One grid cell. Metric fields are `None` when the run failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: Experiment,
    pub seed: u64,
    pub fraction: f64,
    pub condition: Option<&'static str>,
    pub plan: String,
    pub num_layers: usize,
    pub train_notes: Option<usize>,
    pub dev_f1: Option<f64>,
    pub test_f1: Option<f64>,
    pub epochs: Option<usize>,
    pub best_epoch: Option<usize>,
    pub status: String,
    pub wall_seconds: f64,
}

pub fn experiment1_specs(cfg: &ExperimentConfig) -> Vec<RunSpec> {
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        for &fraction in &cfg.fractions {
            for (condition, plan) in [("baseline", TransferPlan::empty()), ("transfer", TransferPlan::all())] {
                out.push(RunSpec {
                    seed,
                    fraction,
                    plan,
                    condition: Some(condition),
                });
            }
        }
    }
    out
}

pub fn experiment2_specs(cfg: &ExperimentConfig) -> Vec<RunSpec> {
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        for &fraction in &cfg.fractions {
            for plan in prefix_plans() {
                out.push(RunSpec {
                    seed,
                    fraction,
                    plan,
                    condition: None,
                });
            }
        }
    }
    out
}

/// Source model for `seed`: loaded from `out_dir` when a checkpoint trained
/// under an identical configuration exists, otherwise trained and saved.
pub fn source_model(cfg: &ExperimentConfig, source: &SplitCorpus, seed: u64, out_dir: &Path) -> Result<NerModel> {
    let ckpt = out_dir.join(format!("source-seed{seed}.ckpt"));
    let key_path = out_dir.join(format!("source-seed{seed}.key"));
    let key = cfg.source_key(seed);
    if fs::read_to_string(&key_path).ok().as_deref() == Some(key.as_str()) {
        if let Ok((model, _)) = load_checkpoint(&ckpt) {
            return Ok(model);
        }
    }
    let trained = train_model(&cfg.source_hyper, &source.train, &source.dev, seed, None)?;
    save_checkpoint(&trained.model, &ckpt)?;
    fs::write(&key_path, key).map_err(|e| NerError::io(key_path.clone(), e))?;
    fs::write(
        out_dir.join(format!("source-seed{seed}.report")),
        trained.report.to_key_values(),
    )
    .map_err(|e| NerError::io(out_dir.to_path_buf(), e))?;
    Ok(trained.model)
}

fn run_one(cfg: &ExperimentConfig, target: &SplitCorpus, source: Option<&NerModel>, spec: &RunSpec) -> Result<(usize, deid_core::network::TrainingReport, f64)> {
    let train = subsample_train(&target.train, spec.fraction, spec.seed)?;
    let src = if spec.plan.is_empty() {
        None
    } else {
        let model = source.ok_or_else(|| NerError::Config("source model unavailable".into()))?;
        Some((model, &spec.plan))
    };
    let trained = train_model(&cfg.hyper, &train, &target.dev, spec.seed, src)?;
    let test = evaluate(&trained.model, &target.test)?;
    Ok((train.documents().len(), trained.report, test.entity.f1))
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| HarnessError::Usage(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs every spec (in parallel when the pool allows) and returns rows in
/// spec order regardless of completion order.
pub fn run_grid(
    cfg: &ExperimentConfig,
    experiment: Experiment,
    specs: &[RunSpec],
    out_dir: &Path,
) -> Result<Vec<ResultRow>> {
    fs::create_dir_all(out_dir).map_err(|e| NerError::io(out_dir.to_path_buf(), e))?;
    let corpora = generate_synthetic(&cfg.synth)?;
    let mut seeds: Vec<u64> = specs.iter().filter(|s| !s.plan.is_empty()).map(|s| s.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    with_pool(cfg.threads, || {
        let sources: BTreeMap<u64, std::result::Result<NerModel, String>> = seeds
            .par_iter()
            .map(|&seed| {
                let m = source_model(cfg, &corpora.source, seed, out_dir).map_err(|e| e.category().to_string());
                (seed, m)
            })
            .collect();
        specs
            .par_iter()
            .map(|spec| {
                let start = Instant::now();
                let source = sources.get(&spec.seed);
                let result = match source {
                    Some(Err(category)) => Err(format!("error:source-{category}")),
                    _ => run_one(cfg, &corpora.target, source.and_then(|s| s.as_ref().ok()), spec)
                        .map_err(|e| format!("error:{}", e.category())),
                };
                let mut row = ResultRow {
                    experiment,
                    seed: spec.seed,
                    fraction: spec.fraction,
                    condition: spec.condition,
                    plan: spec.plan.to_string(),
                    num_layers: spec.plan.len(),
                    train_notes: None,
                    dev_f1: None,
                    test_f1: None,
                    epochs: None,
                    best_epoch: None,
                    status: "ok".into(),
                    wall_seconds: 0.0,
                };
                match result {
                    Ok((notes, report, test_f1)) => {
                        row.train_notes = Some(notes);
                        row.dev_f1 = Some(report.best_dev_f1);
                        row.test_f1 = Some(test_f1);
                        row.epochs = Some(report.epochs.len());
                        row.best_epoch = Some(report.best_epoch);
                    }
                    Err(status) => row.status = status,
                }
                row.wall_seconds = start.elapsed().as_secs_f64();
                row
            })
            .collect()
    })
}

#[derive(Serialize)]
struct Exp1Record<'a> {
    experiment: &'a str,
    seed: u64,
    fraction: f64,
    condition: &'a str,
    plan: &'a str,
    num_layers: usize,
    train_notes: Option<usize>,
    dev_f1: Option<f64>,
    test_f1: Option<f64>,
    epochs: Option<usize>,
    best_epoch: Option<usize>,
    status: &'a str,
}

#[derive(Serialize)]
struct Exp2Record<'a> {
    experiment: &'a str,
    seed: u64,
    fraction: f64,
    num_layers_transferred: usize,
    plan: &'a str,
    train_notes: Option<usize>,
    dev_f1: Option<f64>,
    test_f1: Option<f64>,
    epochs: Option<usize>,
    best_epoch: Option<usize>,
    status: &'a str,
}

#[derive(Serialize)]
struct TimingRecord<'a> {
    experiment: &'a str,
    seed: u64,
    fraction: f64,
    plan: &'a str,
    wall_seconds: f64,
}

#[derive(Serialize)]
struct SummaryRecord {
    fraction: f64,
    group: String,
    runs: usize,
    mean_dev_f1: Option<f64>,
    mean_test_f1: Option<f64>,
}

fn write_csv<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in records {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| NerError::io(path.to_path_buf(), e))?;
    Ok(())
}

/// Group label in summaries: the condition for experiment 1, the number of
/// transferred layers for experiment 2.
pub fn group_of(row: &ResultRow) -> String {
    match row.condition {
        Some(c) => c.to_string(),
        None => row.num_layers.to_string(),
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per (fraction, group) means over successful runs, in first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<(f64, String, usize, Option<f64>, Option<f64>)> {
    let mut order: Vec<(u64, String)> = Vec::new();
    let mut acc: BTreeMap<(u64, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let key = (r.fraction.to_bits(), group_of(r));
        if !acc.contains_key(&key) {
            order.push(key.clone());
        }
        let entry = acc.entry(key).or_default();
        if let (Some(d), Some(t)) = (r.dev_f1, r.test_f1) {
            entry.0.push(d);
            entry.1.push(t);
        }
    }
    order
        .into_iter()
        .map(|key| {
            let (dev, test) = &acc[&key];
            (f64::from_bits(key.0), key.1, test.len(), mean(dev), mean(test))
        })
        .collect()
}

pub struct ExperimentOutputs {
    pub rows: Vec<ResultRow>,
    pub results_csv: PathBuf,
    pub summary_csv: PathBuf,
}

/// Runs a whole experiment and writes `<name>.csv` (one row per run),
/// `<name>_summary.csv` (means over seeds), `<name>_meta.txt`, and
/// `<name>_timing.csv` (wall time; the only nondeterministic output).
pub fn run_experiment(cfg: &ExperimentConfig, experiment: Experiment, out_dir: &Path) -> Result<ExperimentOutputs> {
    let specs = match experiment {
        Experiment::One => experiment1_specs(cfg),
        Experiment::Two => experiment2_specs(cfg),
    };
    let rows = run_grid(cfg, experiment, &specs, out_dir)?;
    let name = experiment.name();
    let results_csv = out_dir.join(format!("{name}.csv"));
    match experiment {
        Experiment::One => write_csv(
            &results_csv,
            rows.iter().map(|r| Exp1Record {
                experiment: name,
                seed: r.seed,
                fraction: r.fraction,
                condition: r.condition.unwrap_or(""),
                plan: &r.plan,
                num_layers: r.num_layers,
                train_notes: r.train_notes,
                dev_f1: r.dev_f1,
                test_f1: r.test_f1,
                epochs: r.epochs,
                best_epoch: r.best_epoch,
                status: &r.status,
            }),
        )?,
        Experiment::Two => write_csv(
            &results_csv,
            rows.iter().map(|r| Exp2Record {
                experiment: name,
                seed: r.seed,
                fraction: r.fraction,
                num_layers_transferred: r.num_layers,
                plan: &r.plan,
                train_notes: r.train_notes,
                dev_f1: r.dev_f1,
                test_f1: r.test_f1,
                epochs: r.epochs,
                best_epoch: r.best_epoch,
                status: &r.status,
            }),
        )?,
    }
    let summary_csv = out_dir.join(format!("{name}_summary.csv"));
    write_csv(
        &summary_csv,
        summarize(&rows).into_iter().map(|(fraction, group, runs, d, t)| SummaryRecord {
            fraction,
            group,
            runs,
            mean_dev_f1: d,
            mean_test_f1: t,
        }),
    )?;
    write_csv(
        &out_dir.join(format!("{name}_timing.csv")),
        rows.iter().map(|r| TimingRecord {
            experiment: name,
            seed: r.seed,
            fraction: r.fraction,
            plan: &r.plan,
            wall_seconds: r.wall_seconds,
        }),
    )?;
    let meta = format!(
        "experiment={name}\nseeds={}\nfractions={}\nsummary=mean over seeds of successful runs\n\
         vocab_policy=overlap_remap\nlayer_order=token_emb,char_emb,char_lstm,token_lstm,dense,seq_opt\n\
         [target]\n{}[source]\n{}",
        join(&cfg.seeds),
        join(&cfg.fractions),
        cfg.hyper.to_key_values(),
        cfg.source_hyper.to_key_values()
    );
    let meta_path = out_dir.join(format!("{name}_meta.txt"));
    fs::write(&meta_path, meta).map_err(|e| NerError::io(meta_path, e))?;
    Ok(ExperimentOutputs {
        rows,
        results_csv,
        summary_csv,
    })
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}
