//! Mini-batch training with early stopping, evaluation, and the repeated-split
//! experiment runner with its on-disk outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chat::{Label, Provenance, SentenceRecord};
use crate::dataset::{
    assemble_batch, batch_order, make_batches, materialize, split, Batch, InputSource,
    LabeledDataset, SplitPlan,
};
use crate::error::{Error, Result};
use crate::metrics::{
    compute_metrics, roc_curve, AggregateReport, Metric, MetricsReport, RocCurve,
};
use crate::models::{build_model, ModelGraph, ModelKind};
use crate::nn::{adam_step, bce_loss, AdamConfig, TrainState};
use crate::seed::{derive_seed, rng_for};

const DROPOUT_STREAM: u64 = 0xd80;
const MODEL_STREAM: u64 = 0x30de1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub optimizer: AdamConfig,
    pub seed: u64,
    pub restore_best: bool,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 16,
            patience: 10,
            optimizer: AdamConfig::default(),
            seed: 0,
            restore_best: true,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if self.patience == 0 || self.patience >= self.epochs {
            return Err(Error::config(
                "train.patience",
                format!(
                    "must be in 1..epochs ({}), got {}",
                    self.epochs, self.patience
                ),
            ));
        }
        let o = &self.optimizer;
        if !(o.learning_rate.is_finite() && o.learning_rate >= 0.0) {
            return Err(Error::config(
                "train.optimizer.learning_rate",
                "must be finite and non-negative",
            ));
        }
        for (name, b) in [("beta1", o.beta1), ("beta2", o.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(
                    format!("train.optimizer.{name}"),
                    "must be in [0, 1)",
                ));
            }
        }
        if !(o.epsilon > 0.0 && o.epsilon.is_finite()) {
            return Err(Error::config("train.optimizer.epsilon", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config("train.threshold", "must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub logs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

fn at_batch(epoch: usize, batch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numerical(m) => Error::Numerical(format!("epoch {epoch}, batch {batch}: {m}")),
        other => other,
    }
}

/// Probabilities for `records` in order, inference mode.
pub fn predict_records(
    graph: &ModelGraph,
    records: &[SentenceRecord],
    src: &InputSource,
    batch_size: usize,
) -> Result<Vec<f64>> {
    let batches = make_batches(records, src, graph.kind.channels(), batch_size, None)?;
    predict_batches(graph, &batches)
}

fn predict_batches(graph: &ModelGraph, batches: &[Batch]) -> Result<Vec<f64>> {
    // inference draws no random numbers
    let mut rng = rng_for(0, &[]);
    let mut out = Vec::new();
    for b in batches {
        out.extend(graph.forward(b, false, &mut rng)?.0);
    }
    Ok(out)
}

/// Trains in place. Stops once validation loss has not strictly improved on
/// the best value for `patience` consecutive epochs.
pub fn train(
    graph: &mut ModelGraph,
    train_set: &[SentenceRecord],
    val_set: &[SentenceRecord],
    src: &InputSource,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Data(format!(
            "training needs non-empty splits (train {}, validation {})",
            train_set.len(),
            val_set.len()
        )));
    }
    let ch = graph.kind.channels();
    let val_batches = make_batches(val_set, src, ch, cfg.batch_size, None)?;
    let val_labels: Vec<f64> = val_batches.iter().flat_map(|b| b.labels.clone()).collect();
    let mut state = TrainState::new(cfg.optimizer, &graph.param_sizes());

    let mut logs = Vec::new();
    let mut best: Option<(f64, usize, ModelGraph)> = None;
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        let mut rng = rng_for(cfg.seed, &[DROPOUT_STREAM, epoch as u64]);
        let order = batch_order(
            train_set.len(),
            cfg.batch_size,
            Some((cfg.seed, epoch as u64)),
        );
        let mut loss_sum = 0.0;
        for (bi, rows) in order.iter().enumerate() {
            let batch = assemble_batch(train_set, rows, src, ch)?;
            let (probs, cache) = graph
                .forward(&batch, true, &mut rng)
                .map_err(at_batch(epoch, bi))?;
            let (loss, dprobs) = bce_loss(&probs, &batch.labels);
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "epoch {epoch}, batch {bi}: non-finite loss {loss}"
                )));
            }
            loss_sum += loss * batch.size() as f64;
            let grads = graph.backward(&cache, &dprobs)?;
            let flat = grads.flat();
            if flat.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::Numerical(format!(
                    "epoch {epoch}, batch {bi}: non-finite gradient"
                )));
            }
            adam_step(&mut graph.params_mut(), &flat, &mut state);
        }
        let train_loss = loss_sum / train_set.len() as f64;

        let val_probs = predict_batches(graph, &val_batches).map_err(at_batch(epoch, 0))?;
        let (val_loss, _) = bce_loss(&val_probs, &val_labels);
        if !val_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "epoch {epoch}: non-finite validation loss"
            )));
        }
        let val = compute_metrics(&val_probs, &val_labels, cfg.threshold)?;
        log::debug!(
            "{} epoch {epoch}: train {train_loss:.5} val {val_loss:.5} acc {:.4}",
            graph.kind.name(),
            val.accuracy
        );
        logs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            val,
        });

        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, graph.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (best_val_loss, best_epoch, snapshot) = best.expect("at least one epoch");
    if cfg.restore_best {
        *graph = snapshot;
    }
    Ok(TrainOutcome {
        logs,
        best_epoch,
        best_val_loss,
    })
}

/// Metrics and per-record probabilities (record order) for one split.
pub fn evaluate(
    graph: &ModelGraph,
    records: &[SentenceRecord],
    src: &InputSource,
    threshold: f64,
    batch_size: usize,
) -> Result<(MetricsReport, Vec<f64>)> {
    if records.is_empty() {
        return Err(Error::Data("cannot evaluate an empty split".into()));
    }
    let probs = predict_records(graph, records, src, batch_size)?;
    let labels: Vec<f64> = records.iter().map(|r| r.label.as_target()).collect();
    Ok((compute_metrics(&probs, &labels, threshold)?, probs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorTag {
    FalsePositive,
    FalseNegative,
    /// Correctly classified parent of a misclassified augmented record.
    ParentCorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub record_id: String,
    pub parent_id: String,
    pub text: String,
    pub label: Label,
    pub probability: f64,
    pub tag: ErrorTag,
    pub provenance: &'static str,
    pub original_word: String,
    pub synonym: String,
    pub token_count: usize,
}

/// Misclassified records, plus the correctly classified parents of
/// misclassified augmented records when the parent is in the same listing.
pub fn error_report(records: &[SentenceRecord], probs: &[f64], threshold: f64) -> Vec<ErrorRow> {
    assert_eq!(records.len(), probs.len());
    let wrong = |i: usize| (probs[i] >= threshold) != (records[i].label == Label::Dementia);
    let wanted_parents: std::collections::BTreeSet<String> = (0..records.len())
        .filter(|&i| wrong(i) && records[i].provenance.is_augmented())
        .map(|i| records[i].parent_id())
        .collect();
    let mut rows = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let tag = if wrong(i) {
            if r.label == Label::Dementia {
                ErrorTag::FalseNegative
            } else {
                ErrorTag::FalsePositive
            }
        } else if !r.provenance.is_augmented() && wanted_parents.contains(&r.id()) {
            ErrorTag::ParentCorrect
        } else {
            continue;
        };
        let (provenance, original_word, synonym) = match &r.provenance {
            Provenance::Original => ("original", String::new(), String::new()),
            Provenance::Augmented {
                original_word,
                synonym,
                ..
            } => ("augmented", original_word.clone(), synonym.clone()),
        };
        rows.push(ErrorRow {
            record_id: r.id(),
            parent_id: r.parent_id(),
            text: r.text(),
            label: r.label,
            probability: probs[i],
            tag,
            provenance,
            original_word,
            synonym,
            token_count: r.tokens.len(),
        });
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub kind: ModelKind,
    pub run: usize,
    pub sizes: [usize; 3],
    pub outcome: TrainOutcome,
    pub val: MetricsReport,
    pub test: MetricsReport,
    /// Test-set curve; `None` when the test split holds one class.
    pub roc: Option<RocCurve>,
    pub errors: Vec<ErrorRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KindSummary {
    pub kind: ModelKind,
    pub val: AggregateReport,
    pub test: AggregateReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub condition: String,
    /// Sorted by (kind order, run).
    pub runs: Vec<RunResult>,
    pub kinds: Vec<KindSummary>,
}

/// Drops records the kind cannot consume (untimed sentences for time models).
pub fn usable_records(kind: ModelKind, records: Vec<SentenceRecord>) -> Vec<SentenceRecord> {
    if kind.channels().time {
        records.into_iter().filter(|r| r.has_timestamps()).collect()
    } else {
        records
    }
}

pub fn model_seed(seed: u64, run: usize, kind: ModelKind) -> u64 {
    derive_seed(seed, &[MODEL_STREAM, run as u64, kind as u64])
}

fn run_one(
    ds: &LabeledDataset,
    src: &InputSource,
    kinds: &[ModelKind],
    plan: &SplitPlan,
    cfg: &TrainConfig,
    run: usize,
    out: Option<&Path>,
) -> Result<Vec<RunResult>> {
    let s = split(ds, plan, run)?;
    let parts = materialize(ds, &s);
    let dim_w = src.words.map_or(0, |t| t.dim());
    let dim_a = src.audio.map_or(0, |a| a.dim());
    let mut results = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let mut dropped = 0;
        let mut take = |v: &Vec<SentenceRecord>| {
            let kept = usable_records(kind, v.clone());
            dropped += v.len() - kept.len();
            kept
        };
        let (tr, va, te) = (take(&parts.train), take(&parts.val), take(&parts.test));
        if dropped > 0 {
            log::info!(
                "run {run} {}: {dropped} records without timestamps excluded",
                kind.name()
            );
        }
        if te.is_empty() {
            return Err(Error::Data(format!(
                "run {run} {}: empty test split",
                kind.name()
            )));
        }
        let mut graph = build_model(kind, dim_w, dim_a, model_seed(cfg.seed, run, kind))?;
        let run_cfg = TrainConfig {
            seed: derive_seed(cfg.seed, &[run as u64, kind as u64]),
            ..cfg.clone()
        };
        let outcome = train(&mut graph, &tr, &va, src, &run_cfg)
            .map_err(|e| prefix_numerical(e, &format!("run {run} {}", kind.name())))?;
        let (val, _) = evaluate(&graph, &va, src, cfg.threshold, cfg.batch_size)?;
        let (test, probs) = evaluate(&graph, &te, src, cfg.threshold, cfg.batch_size)?;
        let labels: Vec<f64> = te.iter().map(|r| r.label.as_target()).collect();
        let roc = roc_curve(&probs, &labels).ok();
        let result = RunResult {
            kind,
            run,
            sizes: [tr.len(), va.len(), te.len()],
            outcome,
            val,
            test,
            roc,
            errors: error_report(&te, &probs, cfg.threshold),
        };
        if let Some(dir) = out {
            write_run_files(dir, &result, &graph)?;
        }
        log::info!(
            "run {run} {}: best epoch {} test acc {:.4} auroc {}",
            kind.name(),
            result.outcome.best_epoch,
            result.test.accuracy,
            result
                .test
                .auroc
                .map_or("undefined".into(), |a| format!("{a:.4}"))
        );
        results.push(result);
    }
    Ok(results)
}

fn prefix_numerical(e: Error, ctx: &str) -> Error {
    match e {
        Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
        other => other,
    }
}

/// Trains and evaluates every kind on each of `plan.n_runs` splits.
/// Runs execute in parallel; per-run files are written as each run
/// finishes, and the aggregate files once all runs succeed.
pub fn run_experiment(
    ds: &LabeledDataset,
    src: &InputSource,
    kinds: &[ModelKind],
    plan: &SplitPlan,
    cfg: &TrainConfig,
    out: Option<&Path>,
) -> Result<ExperimentReport> {
    plan.validate()?;
    cfg.validate()?;
    if kinds.is_empty() {
        return Err(Error::config(
            "models",
            "at least one model kind is required",
        ));
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir.join("checkpoints"))
            .map_err(|e| Error::io(dir.join("checkpoints"), e))?;
    }
    let per_run: Vec<Result<Vec<RunResult>>> = (0..plan.n_runs)
        .into_par_iter()
        .map(|run| run_one(ds, src, kinds, plan, cfg, run, out))
        .collect();
    let mut runs = Vec::new();
    for r in per_run {
        runs.extend(r?);
    }
    runs.sort_by_key(|r| (r.kind, r.run));

    let kinds_summary = kinds
        .iter()
        .map(|&kind| {
            let of = |f: fn(&RunResult) -> &MetricsReport| {
                let reports: Vec<MetricsReport> = runs
                    .iter()
                    .filter(|r| r.kind == kind)
                    .map(|r| f(r).clone())
                    .collect();
                AggregateReport::of(&reports)
            };
            KindSummary {
                kind,
                val: of(|r| &r.val),
                test: of(|r| &r.test),
            }
        })
        .collect();
    let report = ExperimentReport {
        condition: ds.kind.name().to_string(),
        runs,
        kinds: kinds_summary,
    };
    if let Some(dir) = out {
        write_experiment_files(dir, &report, ds.kind.title())?;
    }
    Ok(report)
}

fn create(path: PathBuf) -> Result<(fs::File, PathBuf)> {
    let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok((f, path))
}

fn write_run_files(dir: &Path, r: &RunResult, graph: &ModelGraph) -> Result<()> {
    let name = r.kind.name();
    if let Some(roc) = &r.roc {
        let (f, _) = create(dir.join(format!("roc_{name}_{}.csv", r.run)))?;
        write_roc_csv(roc, f)?;
    }
    let (f, _) = create(dir.join(format!("epochs_{name}_{}.csv", r.run)))?;
    write_epoch_logs(&r.outcome.logs, f)?;
    let (f, path) = create(
        dir.join("checkpoints")
            .join(format!("{name}_{}.ckpt", r.run)),
    )?;
    let mut w = std::io::BufWriter::new(f);
    graph
        .save(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))
}

pub fn write_roc_csv<W: Write>(roc: &RocCurve, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["fpr", "tpr"])?;
    for (x, y) in &roc.points {
        wtr.write_record([x.to_string(), y.to_string()])?;
    }
    wtr.flush().map_err(|e| Error::io("roc csv", e))
}

pub fn write_epoch_logs<W: Write>(logs: &[EpochLog], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "epoch",
        "train_loss",
        "val_loss",
        "val_accuracy",
        "val_precision",
        "val_recall",
        "val_f1",
        "val_auroc",
    ])?;
    for l in logs {
        let mut row = vec![
            l.epoch.to_string(),
            l.train_loss.to_string(),
            l.val_loss.to_string(),
        ];
        row.extend(Metric::ALL.iter().map(|&m| opt(l.val.get(m))));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("epoch log", e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.6}"))
}

pub fn write_error_report<W: Write>(rows: &[(usize, ErrorRow)], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "run",
        "record_id",
        "parent_id",
        "text",
        "label",
        "probability",
        "tag",
        "provenance",
        "original_word",
        "synonym",
        "token_count",
    ])?;
    for (run, r) in rows {
        let tag = match r.tag {
            ErrorTag::FalsePositive => "false_positive",
            ErrorTag::FalseNegative => "false_negative",
            ErrorTag::ParentCorrect => "parent_correct",
        };
        wtr.write_record([
            run.to_string(),
            r.record_id.clone(),
            r.parent_id.clone(),
            r.text.clone(),
            r.label.to_string(),
            format!("{:.6}", r.probability),
            tag.into(),
            r.provenance.into(),
            r.original_word.clone(),
            r.synonym.clone(),
            r.token_count.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("error report", e))
}

const TABLE_HEADER: [&str; 5] = ["Accuracy", "Precision", "Recall", "F1-score", "AUROC"];

/// Per-run rows followed by one `mean±std` row per kind, for both the
/// validation and test splits.
pub fn write_metrics_csv<W: Write>(report: &ExperimentReport, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["split", "model", "run"];
    header.extend(Metric::ALL.iter().map(|m| m.name()));
    header.extend(["tp", "fp", "tn", "fn", "n", "best_epoch"]);
    wtr.write_record(&header)?;
    for (split, pick) in [
        (
            "validation",
            (|r: &RunResult| &r.val) as fn(&RunResult) -> &MetricsReport,
        ),
        ("test", |r: &RunResult| &r.test),
    ] {
        for r in &report.runs {
            let m = pick(r);
            let mut row = vec![split.to_string(), r.kind.name().into(), r.run.to_string()];
            row.extend(Metric::ALL.iter().map(|&k| opt(m.get(k))));
            row.extend([m.tp, m.fp, m.tn, m.fn_, m.n, r.outcome.best_epoch].map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
        for k in &report.kinds {
            let agg = if split == "test" { &k.test } else { &k.val };
            let mut row = vec![split.to_string(), k.kind.name().into(), "mean±std".into()];
            row.extend(Metric::ALL.iter().map(|&m| agg.display(m)));
            row.extend(std::iter::repeat_n(String::new(), 6));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush().map_err(|e| Error::io("metrics csv", e))
}

/// Table layout: condition title, then one row per model of `mean±std` cells.
pub fn write_table<W: Write>(
    report: &ExperimentReport,
    title: &str,
    test: bool,
    w: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![title];
    header.extend(TABLE_HEADER);
    wtr.write_record(&header)?;
    for k in &report.kinds {
        let agg = if test { &k.test } else { &k.val };
        let mut row = vec![k.kind.title().to_string()];
        row.extend(Metric::ALL.iter().map(|&m| agg.display(m)));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("table csv", e))
}

fn write_experiment_files(dir: &Path, report: &ExperimentReport, title: &str) -> Result<()> {
    let (f, _) = create(dir.join("metrics.csv"))?;
    write_metrics_csv(report, f)?;
    for (test, name) in [(true, "table_test.csv"), (false, "table_validation.csv")] {
        let (f, _) = create(dir.join(name))?;
        write_table(
            report,
            &format!("{title} ({})", if test { "test" } else { "validation" }),
            test,
            f,
        )?;
    }
    for k in &report.kinds {
        let rows: Vec<(usize, ErrorRow)> = report
            .runs
            .iter()
            .filter(|r| r.kind == k.kind)
            .flat_map(|r| r.errors.iter().map(move |e| (r.run, e.clone())))
            .collect();
        let (f, _) = create(dir.join(format!("errors_{}.csv", k.kind.name())))?;
        write_error_report(&rows, f)?;
    }
    Ok(())
}
