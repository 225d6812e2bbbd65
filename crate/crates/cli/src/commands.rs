//! One function per subcommand. Each computes everything first and only
//! then writes its outputs, so a failed run leaves no partial summary.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use setsel::data::{write_dataset, Dataset, GenConfig, ShapeFamily, Split};
use setsel::model::{checkpoint, train, Architecture, SetClassifier, TrainConfig};
use setsel::selection::ScoreStrategy;
use setsel::tensor::Scalar;

use crate::attack::{accuracy_at, attack_all, mean_final_loss, report_grid, AttackConfig, SampleOutcome};
use crate::config::{create_dir, manifest_path, parse_split, spread, Global, Precision, RunConfig};
use crate::error::{CliError, Result};

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))
}

fn flush(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|e| CliError::Config(format!("bad {what} '{p}': {e}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated shape families.
    #[arg(long, default_value = "sphere,cube,cylinder,torus,cone")]
    pub classes: String,
    #[arg(long, default_value_t = 200)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 50)]
    pub test_per_class: usize,
    /// Points per sample.
    #[arg(long, default_value_t = 256)]
    pub points: usize,
    #[arg(long, default_value_t = 0.2)]
    pub scale_jitter: f64,
    #[arg(long, default_value_t = 0.2)]
    pub aspect_jitter: f64,
}

pub fn gen(global: &Global, args: &GenArgs) -> Result<PathBuf> {
    let classes: Vec<ShapeFamily> = parse_list(&args.classes, "shape family")?;
    let cfg = GenConfig {
        classes,
        train_per_class: args.train_per_class,
        test_per_class: args.test_per_class,
        points: args.points,
        seed: global.seed,
        scale_jitter: args.scale_jitter,
        aspect_jitter: args.aspect_jitter,
    };
    create_dir(&args.out)?;
    let manifest = write_dataset(&cfg, &args.out)?;
    RunConfig::new("gen", global, args).write(&args.out)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Dataset directory or manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for the checkpoint and metrics.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// Uniform coordinate jitter added to training inputs.
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Widths of the pointwise layers; the last is the pooled width.
    #[arg(long, default_value = "64,64,128")]
    pub point_widths: String,
    #[arg(long, default_value = "64")]
    pub head_widths: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub final_test_accuracy: Option<f64>,
}

pub fn run_train(global: &Global, args: &TrainArgs) -> Result<TrainOutcome> {
    match global.precision {
        Precision::F64 => train_as::<f64>(global, args),
        Precision::F32 => train_as::<f32>(global, args),
    }
}

fn train_as<T: Scalar>(global: &Global, args: &TrainArgs) -> Result<TrainOutcome> {
    let manifest = manifest_path(&args.data);
    let train_set = Dataset::load(&manifest, Split::Train)?;
    let test_set = Dataset::load(&manifest, Split::Test)?;
    let d = train_set
        .dim()
        .ok_or_else(|| setsel::Error::Data("training split is empty".into()))?;
    let arch = Architecture {
        input_dim: d,
        point_widths: parse_list(&args.point_widths, "layer width")?,
        head_widths: parse_list(&args.head_widths, "layer width")?,
        classes: train_set.class_names.len(),
    };
    let mut model = SetClassifier::<T>::new(arch, global.seed)?;
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch: args.batch,
        lr: args.lr,
        momentum: args.momentum,
        seed: global.seed,
        jitter: args.jitter,
    };
    let test = (!test_set.is_empty()).then_some(test_set.samples.as_slice());
    let history = train(&mut model, &train_set.samples, test, &cfg)?;

    create_dir(&args.out)?;
    let checkpoint = args.out.join("model.sfm");
    checkpoint::save(&model, &checkpoint)?;
    let metrics = args.out.join("metrics.csv");
    let mut w = csv_writer(&metrics)?;
    for m in &history {
        w.serialize(m).map_err(|e| CliError::csv(&metrics, e))?;
    }
    flush(w, &metrics)?;
    RunConfig::new("train", global, args).write(&args.out)?;
    Ok(TrainOutcome {
        checkpoint,
        metrics,
        final_test_accuracy: history.last().and_then(|m| m.test_accuracy),
    })
}

fn load_samples<T: Scalar>(model: &SetClassifier<T>, data: &Path, split: &str, limit: Option<usize>) -> Result<Dataset> {
    let dataset = spread(Dataset::load(manifest_path(data), parse_split(split)?)?, limit)?;
    if let Some(d) = dataset.dim() {
        if d != model.input_dim() {
            return Err(setsel::Error::Dimension {
                op: "model/dataset",
                left: format!("model input {}", model.input_dim()),
                right: format!("dataset dimension {d}"),
            }
            .into());
        }
    }
    if dataset.class_names.len() > model.classes() {
        return Err(setsel::Error::Data(format!(
            "dataset has {} classes but the model predicts {}",
            dataset.class_names.len(),
            model.classes()
        ))
        .into());
    }
    Ok(dataset)
}

fn resolve_strategy(name: &str, m: Option<usize>) -> Result<ScoreStrategy> {
    let s: ScoreStrategy = name.parse()?;
    match (s, m) {
        (ScoreStrategy::Hybrid { inner, .. }, Some(m)) => Ok(ScoreStrategy::Hybrid { m, inner }),
        (_, Some(_)) => Err(CliError::Config(format!("--m only applies to hybrid strategies, not '{name}'"))),
        (s, None) => Ok(s),
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SelectArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory or manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// exact, sfo-median, sfo-median-frozen, sfo-feature-min, saliency,
    /// random or hybrid[-<inner>][:<m>].
    #[arg(long, default_value = "sfo-median")]
    pub strategy: String,
    /// Elements removed per sample.
    #[arg(long, default_value_t = 64)]
    pub k: usize,
    /// Candidate count, overriding the one in a hybrid strategy name.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Attack only this many samples, spread evenly over the split.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Evaluate every exact gain with a full forward pass instead of reusing
    /// the pointwise features of the current subset.
    #[arg(long)]
    pub full_forward_gains: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct SelectOutcome {
    pub strategy: String,
    pub samples: usize,
    /// `(removed, accuracy)` with `removed = 0` first.
    pub accuracy: Vec<(usize, f64)>,
    pub mean_final_loss: f64,
    pub ms_per_sample: f64,
    pub forwards_per_sample: f64,
    pub backwards_per_sample: f64,
}

pub fn run_select(global: &Global, args: &SelectArgs) -> Result<SelectOutcome> {
    let strategy = resolve_strategy(&args.strategy, args.m)?;
    match global.precision {
        Precision::F64 => select_as(global, args, strategy, &checkpoint::load::<f64>(&args.model)?),
        Precision::F32 => select_as(global, args, strategy, &checkpoint::load::<f32>(&args.model)?),
    }
}

fn per_sample(outcomes: &[SampleOutcome], f: impl Fn(&SampleOutcome) -> f64) -> f64 {
    outcomes.iter().map(f).sum::<f64>() / outcomes.len().max(1) as f64
}

fn select_as<T: Scalar>(
    global: &Global,
    args: &SelectArgs,
    strategy: ScoreStrategy,
    model: &SetClassifier<T>,
) -> Result<SelectOutcome> {
    let dataset = load_samples(model, &args.data, &args.split, args.limit)?;
    let cfg = AttackConfig {
        full_forward_gains: args.full_forward_gains,
        ..AttackConfig::new(strategy.clone(), args.k, global.seed)
    };
    let outcomes = attack_all(model, &dataset.samples, &cfg, true)?;
    let grid: Vec<usize> = std::iter::once(0).chain(report_grid(args.k)).collect();
    let summary = SelectOutcome {
        strategy: strategy.to_string(),
        samples: outcomes.len(),
        accuracy: grid.iter().map(|&r| (r, accuracy_at(&outcomes, r))).collect(),
        mean_final_loss: mean_final_loss(&outcomes),
        ms_per_sample: per_sample(&outcomes, |o| o.elapsed().as_secs_f64() * 1e3),
        forwards_per_sample: per_sample(&outcomes, |o| o.trace.counts.forwards as f64),
        backwards_per_sample: per_sample(&outcomes, |o| o.trace.counts.backwards as f64),
    };

    create_dir(&args.out)?;
    let trace_path = args.out.join("trace.csv");
    let mut w = csv_writer(&trace_path)?;
    for o in &outcomes {
        for row in o.trace.rows(&o.name) {
            w.serialize(row).map_err(|e| CliError::csv(&trace_path, e))?;
        }
    }
    flush(w, &trace_path)?;

    let acc_path = args.out.join("accuracy.csv");
    let mut w = csv_writer(&acc_path)?;
    w.write_record(["strategy", "removed", "accuracy"])
        .map_err(|e| CliError::csv(&acc_path, e))?;
    for (r, a) in &summary.accuracy {
        w.write_record([summary.strategy.clone(), r.to_string(), a.to_string()])
            .map_err(|e| CliError::csv(&acc_path, e))?;
    }
    flush(w, &acc_path)?;

    let sum_path = args.out.join("summary.csv");
    let mut w = csv_writer(&sum_path)?;
    let mut header: Vec<String> = ["strategy", "k", "samples", "mean_final_loss"]
        .map(String::from)
        .to_vec();
    header.extend(summary.accuracy.iter().map(|(r, _)| format!("acc_{r}")));
    header.extend(["ms_per_sample", "forwards_per_sample", "backwards_per_sample"].map(String::from));
    let mut row = vec![
        summary.strategy.clone(),
        args.k.to_string(),
        summary.samples.to_string(),
        summary.mean_final_loss.to_string(),
    ];
    row.extend(summary.accuracy.iter().map(|(_, a)| a.to_string()));
    row.extend([
        summary.ms_per_sample.to_string(),
        summary.forwards_per_sample.to_string(),
        summary.backwards_per_sample.to_string(),
    ]);
    w.write_record(&header).map_err(|e| CliError::csv(&sum_path, e))?;
    w.write_record(&row).map_err(|e| CliError::csv(&sum_path, e))?;
    flush(w, &sum_path)?;
    RunConfig::new("select", global, args).write(&args.out)?;
    Ok(summary)
}

pub const DEFAULT_BENCH_STRATEGIES: &str =
    "exact,sfo-median,sfo-feature-min,saliency,random,hybrid-sfo-median:8,hybrid-random:1,hybrid-random:4";

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated strategy names.
    #[arg(long, default_value = DEFAULT_BENCH_STRATEGIES)]
    pub strategies: String,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    /// Timing repetitions per sample; the median is reported.
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Samples to benchmark, spread evenly over the split.
    #[arg(long, default_value_t = 10)]
    pub limit: usize,
    /// Reuse pointwise features for exact gains instead of a full forward
    /// pass per candidate.
    #[arg(long)]
    pub reuse_features: bool,
    /// Also report a run with samples spread over worker threads.
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub strategy: String,
    pub mode: String,
    pub k: usize,
    pub samples: usize,
    pub repetitions: usize,
    pub accuracy: f64,
    pub mean_final_loss: f64,
    pub ms_per_sample: f64,
    pub forwards_per_sample: f64,
    pub backwards_per_sample: f64,
}

pub fn run_bench(global: &Global, args: &BenchArgs) -> Result<Vec<BenchRow>> {
    let strategies: Vec<ScoreStrategy> = parse_list(&args.strategies, "strategy")?;
    if strategies.is_empty() {
        return Err(CliError::Config("no strategies given".into()));
    }
    match global.precision {
        Precision::F64 => bench_as(global, args, &strategies, &checkpoint::load::<f64>(&args.model)?),
        Precision::F32 => bench_as(global, args, &strategies, &checkpoint::load::<f32>(&args.model)?),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

/// Per-strategy rows: mean over samples of the median selection time over
/// repetitions.
#[allow(clippy::too_many_arguments)]
pub fn bench_rows<T: Scalar>(
    model: &SetClassifier<T>,
    samples: &[setsel::model::PointSet],
    strategies: &[ScoreStrategy],
    k: usize,
    repetitions: usize,
    seed: u64,
    full_forward_gains: bool,
    parallel: bool,
) -> Result<Vec<BenchRow>> {
    if repetitions == 0 {
        return Err(CliError::Config("--repetitions must be positive".into()));
    }
    let mut rows = Vec::new();
    for s in strategies {
        let cfg = AttackConfig {
            full_forward_gains,
            record_objective: false,
            ..AttackConfig::new(s.clone(), k, seed)
        };
        let mut times = vec![Vec::with_capacity(repetitions); samples.len()];
        let mut first = None;
        for _ in 0..repetitions {
            let outcomes = attack_all(model, samples, &cfg, parallel)?;
            for (t, o) in times.iter_mut().zip(&outcomes) {
                t.push(o.elapsed().as_secs_f64() * 1e3);
            }
            first.get_or_insert(outcomes);
        }
        let outcomes = first.expect("at least one repetition");
        rows.push(BenchRow {
            strategy: s.to_string(),
            mode: if parallel { "parallel" } else { "serial" }.into(),
            k,
            samples: samples.len(),
            repetitions,
            accuracy: accuracy_at(&outcomes, k),
            mean_final_loss: mean_final_loss(&outcomes),
            ms_per_sample: times.into_iter().map(median).sum::<f64>() / samples.len() as f64,
            forwards_per_sample: per_sample(&outcomes, |o| o.trace.counts.forwards as f64),
            backwards_per_sample: per_sample(&outcomes, |o| o.trace.counts.backwards as f64),
        });
    }
    Ok(rows)
}

fn bench_as<T: Scalar>(
    global: &Global,
    args: &BenchArgs,
    strategies: &[ScoreStrategy],
    model: &SetClassifier<T>,
) -> Result<Vec<BenchRow>> {
    let dataset = load_samples(model, &args.data, &args.split, Some(args.limit))?;
    let full = !args.reuse_features;
    let mut rows = bench_rows(model, &dataset.samples, strategies, args.k, args.repetitions, global.seed, full, false)?;
    if args.parallel {
        rows.extend(bench_rows(model, &dataset.samples, strategies, args.k, args.repetitions, global.seed, full, true)?);
    }
    create_dir(&args.out)?;
    let path = args.out.join("bench.csv");
    let mut w = csv_writer(&path)?;
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::csv(&path, e))?;
    }
    flush(w, &path)?;
    RunConfig::new("bench", global, args).write(&args.out)?;
    Ok(rows)
}

/// Columns that identify a row rather than measure something.
const KEY_COLUMNS: &[&str] = &["sample", "strategy", "mode", "iteration", "removed", "removed_id", "epoch", "k"];

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// CSV files written by select, bench or train.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Output CSV in long format: source, keys, metric, value.
    #[arg(long)]
    pub out: PathBuf,
}

/// Melts each input table to one row per numeric cell. Key columns are the
/// known identifier names plus any column holding a non-number.
pub fn run_report(global: &Global, args: &ReportArgs) -> Result<usize> {
    let mut long: Vec<[String; 4]> = Vec::new();
    for input in &args.input {
        let mut r = csv::Reader::from_path(input).map_err(|e| CliError::csv(input, e))?;
        let headers: Vec<String> = r
            .headers()
            .map_err(|e| CliError::csv(input, e))?
            .iter()
            .map(String::from)
            .collect();
        let records: Vec<csv::StringRecord> = r
            .records()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| CliError::csv(input, e))?;
        let is_key: Vec<bool> = headers
            .iter()
            .enumerate()
            .map(|(j, h)| {
                KEY_COLUMNS.contains(&h.as_str())
                    || records
                        .iter()
                        .any(|rec| !rec[j].is_empty() && rec[j].parse::<f64>().is_err())
            })
            .collect();
        let source = input
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        for rec in &records {
            let keys: Vec<String> = headers
                .iter()
                .zip(rec.iter())
                .zip(&is_key)
                .filter(|(_, &k)| k)
                .map(|((h, v), _)| format!("{h}={v}"))
                .collect();
            let keys = keys.join(";");
            for ((h, v), _) in headers.iter().zip(rec.iter()).zip(&is_key).filter(|(_, &k)| !k) {
                if !v.is_empty() {
                    long.push([source.clone(), keys.clone(), h.clone(), v.to_string()]);
                }
            }
        }
    }
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let mut w = csv_writer(&args.out)?;
    w.write_record(["source", "keys", "metric", "value"])
        .map_err(|e| CliError::csv(&args.out, e))?;
    for row in &long {
        w.write_record(row).map_err(|e| CliError::csv(&args.out, e))?;
    }
    flush(w, &args.out)?;
    let mut config = args.out.clone().into_os_string();
    config.push(".config.json");
    RunConfig::new("report", global, args).write_to(config.into())?;
    Ok(long.len())
}
