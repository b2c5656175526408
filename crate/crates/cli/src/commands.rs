use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dementia_mm::dataset::{materialize, split};
use dementia_mm::metrics::Metric;
use dementia_mm::models::{ModelGraph, ModelKind};
use dementia_mm::synth::{generate, write_corpus, SynthSpec};
use dementia_mm::train_eval::{
    error_report, evaluate, run_experiment, usable_records, write_error_report,
};
use dementia_mm::{Error, Result};

use crate::config::{Overrides, Resolved, RunConfig};
use crate::pipeline::{prepare, write_prepared};
use crate::plot::{read_curve, render_svg};

#[derive(Debug, Parser)]
#[command(
    name = "dmm",
    version,
    about = "Multimodal dementia detection from CHAT transcripts"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a deterministic synthetic corpus (transcripts, audio, embeddings, lexicon).
    Synth(SynthArgs),
    /// Parse, embed and condition the corpus; write the split manifest and counts.
    Prepare(RunArgs),
    /// Train and evaluate every configured model over the repeated splits.
    Train(RunArgs),
    /// Evaluate a saved checkpoint on one split of one run.
    Evaluate(EvaluateArgs),
    /// Print the results tables from an experiment directory.
    Report(ReportArgs),
    /// Draw ROC curve files into one SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with generator settings; flags below override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub transcripts_per_group: Option<usize>,
    #[arg(long)]
    pub utterances_per_transcript: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub condition: Option<String>,
    /// Comma-separated model kinds, e.g. `text,audio_text`.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Sets the split, training and augmentation seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run_args: RunArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Which repeated split to rebuild.
    #[arg(long, default_value_t = 0)]
    pub run: usize,
    /// `test` or `val`.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Also write the misclassification listing here.
    #[arg(long)]
    pub errors: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Experiment directory containing metrics.csv.
    #[arg(long)]
    pub dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub title: Option<String>,
    /// ROC files with an `fpr,tpr` header.
    #[arg(required = true)]
    pub curves: Vec<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<Resolved> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            output: self.output.clone(),
            condition: self.condition.clone(),
            models: self.models.clone(),
            seed: self.seed,
            runs: self.runs,
            epochs: self.epochs,
            threshold: self.threshold,
        });
        cfg.validate()
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Prepare(a) => cmd_prepare(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Report(a) => cmd_report(&a, &mut std::io::stdout().lock()),
        Command::Plot(a) => cmd_plot(&a),
    }
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::config("spec", format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Error::config("spec", e.message().to_string()))?
        }
        None => SynthSpec::default(),
    };
    if let Some(d) = a.delta {
        spec.delta = d;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(n) = a.transcripts_per_group {
        spec.transcripts_per_group = n;
    }
    if let Some(n) = a.utterances_per_transcript {
        spec.utterances_per_transcript = n;
    }
    let corpus = generate(&spec)?;
    write_corpus(&corpus, &a.out)?;
    let s = &corpus.summary;
    println!(
        "wrote {} transcripts, {} sentences ({} control, {} dementia) to {}",
        s.transcripts,
        s.sentences,
        s.control_sentences,
        s.dementia_sentences,
        a.out.display()
    );
    Ok(())
}

fn cmd_prepare(a: &RunArgs) -> Result<()> {
    let cfg = a.resolve()?;
    let p = prepare(&cfg)?;
    write_prepared(&p, &cfg, cfg.output())?;
    let (d, c) = p.dataset.label_counts();
    println!(
        "{}: {} records ({} dementia, {} control); manifest in {}",
        cfg.condition,
        p.dataset.records.len(),
        d,
        c,
        cfg.output().display()
    );
    Ok(())
}

fn cmd_train(a: &RunArgs) -> Result<()> {
    let cfg = a.resolve()?;
    let p = prepare(&cfg)?;
    let out = cfg.output();
    write_prepared(&p, &cfg, out)?;
    let report = run_experiment(
        &p.dataset,
        &p.source(),
        &cfg.models,
        &cfg.raw.split,
        &cfg.raw.train,
        Some(out),
    )?;
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for k in &report.kinds {
        let _ = writeln!(
            w,
            "{:<16} test acc {} auroc {}",
            k.kind.title(),
            k.test.display(Metric::Accuracy),
            k.test.display(Metric::Auroc)
        );
    }
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let cfg = a.run_args.resolve()?;
    let file = fs::File::open(&a.checkpoint).map_err(|e| Error::io(&a.checkpoint, e))?;
    let graph = ModelGraph::load(BufReader::new(file))?;
    let resolved = Resolved {
        models: vec![graph.kind],
        ..cfg
    };
    let p = prepare(&resolved)?;
    let plan = &resolved.raw.split;
    if a.run >= plan.n_runs {
        return Err(Error::config(
            "run",
            format!("run {} outside 0..{}", a.run, plan.n_runs),
        ));
    }
    let parts = materialize(&p.dataset, &split(&p.dataset, plan, a.run)?);
    let records = match a.split.as_str() {
        "test" => parts.test,
        "val" | "validation" => parts.val,
        "train" => parts.train,
        other => {
            return Err(Error::config(
                "split",
                format!("{other:?} is not train, val or test"),
            ))
        }
    };
    let records = usable_records(graph.kind, records);
    let threshold = resolved.raw.train.threshold;
    let (m, probs) = evaluate(
        &graph,
        &records,
        &p.source(),
        threshold,
        resolved.raw.train.batch_size,
    )?;
    if let Some(path) = &a.errors {
        let rows: Vec<_> = error_report(&records, &probs, threshold)
            .into_iter()
            .map(|r| (a.run, r))
            .collect();
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_error_report(&rows, BufWriter::new(f))?;
    }
    let json = serde_json::to_string_pretty(&m).expect("metrics serialize");
    println!("{json}");
    Ok(())
}

/// Markdown rendering of the aggregate rows in `metrics.csv`.
pub fn cmd_report<W: Write>(a: &ReportArgs, w: &mut W) -> Result<()> {
    let path = a.dir.join("metrics.csv");
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(&path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    })?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: 1,
                message: format!("missing column {name}"),
            })
    };
    let (c_split, c_model, c_run) = (col("split")?, col("model")?, col("run")?);
    let metric_cols = Metric::ALL
        .iter()
        .map(|m| col(m.name()))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<(String, String, Vec<String>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if &rec[c_run] != "mean±std" {
            continue;
        }
        let model = rec[c_model]
            .parse::<ModelKind>()
            .map(|k| k.title().to_string())
            .unwrap_or_else(|_| rec[c_model].to_string());
        rows.push((
            rec[c_split].to_string(),
            model,
            metric_cols.iter().map(|&c| rec[c].to_string()).collect(),
        ));
    }
    let io = |e| Error::io("stdout", e);
    for split_name in ["test", "validation"] {
        writeln!(w, "## {split_name}\n").map_err(io)?;
        writeln!(
            w,
            "| Model | Accuracy | Precision | Recall | F1-score | AUROC |"
        )
        .map_err(io)?;
        writeln!(w, "|---|---|---|---|---|---|").map_err(io)?;
        for (s, model, vals) in &rows {
            if s == split_name {
                writeln!(w, "| {model} | {} |", vals.join(" | ")).map_err(io)?;
            }
        }
        writeln!(w).map_err(io)?;
    }
    Ok(())
}

fn cmd_plot(a: &PlotArgs) -> Result<()> {
    let curves = a
        .curves
        .iter()
        .map(|p| read_curve(p))
        .collect::<Result<Vec<_>>>()?;
    let svg = render_svg(&curves, a.title.as_deref());
    write_file(&a.out, svg.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
