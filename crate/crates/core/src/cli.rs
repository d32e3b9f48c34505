//! `knobforge` command line.
//!
//! Exit codes: 0 on success, 1 on a usage error, 2 when the data or the
//! numerics fail. Every command writes its resolved configuration to
//! `config.json` in its output directory.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::cluster::{ClusterSpec, ClustererKind};
use crate::error::Error;
use crate::eval::{emit_report, EvalReport, ReportFormat};
use crate::ingest::{
    drop_constant_columns, load_observations, load_repository, ColumnKind, ColumnSchema, Schema, SchemaHint,
    WorkloadRepository, WorkloadTable, DEFAULT_LATENCY_COLUMN,
};
use crate::mapping::{map_workload, Distance};
use crate::pipeline::{predictions_csv, run_pipeline, PipelineConfig, Prediction, ScaledModel};
use crate::pruning::{eigenvalues_csv, prune_repository, PrunedMetricSet};
use crate::regress::{GprHyperparams, Hyperparams, MlpHyperparams, RegressorSpec, RfHyperparams};
use crate::scaling::fit_scaler;
use crate::synth::{generate_corpus, write_corpus, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "knobforge",
    version,
    about = "Metric pruning, workload mapping and latency prediction for DBMS tuning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus with known structure.
    Synth(SynthArgs),
    /// Load CSV files and report the inferred schema.
    Ingest(IngestArgs),
    /// Select one representative metric per cluster.
    Prune(PruneArgs),
    /// Find the most similar historical workload for each target workload.
    Map(MapArgs),
    /// Fit a latency model.
    Train(TrainArgs),
    /// Predict latency with a saved model.
    Predict(PredictArgs),
    /// Score a predictions file.
    Evaluate(EvaluateArgs),
    /// Run the full two-stage pipeline from a config file.
    Run(RunArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// JSON file with generator settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    n_workloads: Option<usize>,
}

#[derive(Args, Debug)]
struct InputArgs {
    /// CSV files; a `workload_id` column splits a file into several workloads.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// JSON map from column name to `knob`, `metric` or `latency`.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "knobforge_out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PruneArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "kmeans")]
    clusterer: ClustererKind,
    #[arg(long, default_value_t = 2)]
    k_min: usize,
    #[arg(long, default_value_t = 15)]
    k_max: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "knobforge_out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MapArgs {
    /// Historical workloads.
    #[command(flatten)]
    input: InputArgs,
    /// CSV with the target workload(s).
    #[arg(long)]
    target: PathBuf,
    /// `pruned_metrics.json` from `prune`; all metrics are used without it.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long, default_value = "euclidean")]
    distance: Distance,
    #[arg(long, default_value = "knobforge_out")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Gpr,
    Rf,
    Nn,
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// GPR noise level.
    #[arg(long)]
    alpha: Option<f64>,
    /// Forest size.
    #[arg(long)]
    trees: Option<usize>,
    /// Maximum tree depth.
    #[arg(long)]
    depth: Option<usize>,
    /// Network training epochs.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "knobforge_out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// `model.json` written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// CSV with every feature column the model was trained on.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "knobforge_out")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// CSV with `y_true` and `y_pred` columns, as written by `predict` or `run`.
    predictions: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    #[arg(long, default_value = "knobforge_out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    clusterer: Option<ClustererKind>,
    #[arg(long)]
    distance: Option<Distance>,
    #[arg(long)]
    n_map_rows: Option<usize>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::Prune(a) => prune(a),
        Command::Map(a) => map(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Run(a) => run(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
}

fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> Result<(), Error> {
    write_file(dir, name, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_input(input: &InputArgs) -> Result<WorkloadRepository, Error> {
    let hint = match &input.schema {
        Some(p) => SchemaHint::from_json_file(p)?,
        None => SchemaHint::default(),
    };
    load_repository(&input.files, &hint)
}

/// Knobs, the listed metrics (all when `None`) and latency.
fn working_schema(schema: &Schema, metrics: Option<&[String]>) -> Result<Arc<Schema>, Error> {
    if let Some(m) = metrics {
        for name in m {
            schema.require(name)?;
        }
    }
    let keep: Option<BTreeSet<&String>> = metrics.map(|m| m.iter().collect());
    Ok(Arc::new(schema.retain(|c| {
        c.kind != ColumnKind::Metric || keep.as_ref().is_none_or(|k| k.contains(&c.name))
    })))
}

fn load_metrics(path: Option<&PathBuf>) -> Result<Option<Vec<String>>, Error> {
    path.map(|p| {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        Ok(PrunedMetricSet::from_json(&text)?.names())
    })
    .transpose()
}

/// Applies model flags on top of `base`. A `--model` that differs from the
/// base kind starts from that kind's defaults.
fn regressor_spec(base: &RegressorSpec, flags: &ModelArgs, seed: u64) -> std::result::Result<RegressorSpec, Failure> {
    let mut hp = match (flags.model, &base.hyperparams) {
        (None, h) => h.clone(),
        (Some(ModelKind::Gpr), h @ Hyperparams::Gpr(_))
        | (Some(ModelKind::Rf), h @ Hyperparams::RandomForest(_))
        | (Some(ModelKind::Nn), h @ Hyperparams::Mlp(_)) => h.clone(),
        (Some(ModelKind::Gpr), _) => Hyperparams::Gpr(GprHyperparams::default()),
        (Some(ModelKind::Rf), _) => Hyperparams::RandomForest(RfHyperparams::default()),
        (Some(ModelKind::Nn), _) => Hyperparams::Mlp(MlpHyperparams::default()),
    };
    let misplaced = |flag: &str, model: &str| Failure::Usage(format!("{flag} only applies to --model {model}"));
    match &mut hp {
        Hyperparams::Gpr(h) => {
            if let Some(a) = flags.alpha {
                h.alpha = a;
            }
        }
        Hyperparams::RandomForest(h) => {
            if let Some(t) = flags.trees {
                h.n_trees = t;
            }
            if let Some(d) = flags.depth {
                h.max_depth = d;
            }
        }
        Hyperparams::Mlp(h) => {
            if let Some(e) = flags.epochs {
                h.epochs = e;
            }
        }
    }
    let kind_ok = |want: fn(&Hyperparams) -> bool| want(&hp);
    if flags.alpha.is_some() && !kind_ok(|h| matches!(h, Hyperparams::Gpr(_))) {
        return Err(misplaced("--alpha", "gpr"));
    }
    if (flags.trees.is_some() || flags.depth.is_some()) && !kind_ok(|h| matches!(h, Hyperparams::RandomForest(_))) {
        return Err(misplaced("--trees/--depth", "rf"));
    }
    if flags.epochs.is_some() && !kind_ok(|h| matches!(h, Hyperparams::Mlp(_))) {
        return Err(misplaced("--epochs", "nn"));
    }
    let spec = RegressorSpec { hyperparams: hp, seed };
    spec.validate()?;
    Ok(spec)
}

fn synth(a: SynthArgs) -> CmdResult {
    let mut spec: SynthSpec = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(s) = a.noise_sigma {
        spec.noise_sigma = s;
    }
    if let Some(n) = a.n_workloads {
        spec.n_workloads = n;
    }
    spec.validate()?;
    let corpus = generate_corpus(&spec)?;
    let layout = write_corpus(&corpus, &a.out)?;
    let pipeline = PipelineConfig {
        offline_paths: layout.offline,
        online_b_paths: layout.online_b,
        online_c_paths: layout.online_c,
        test_path: Some(layout.test),
        schema_path: Some(layout.schema),
        seed: spec.seed,
        ..PipelineConfig::default()
    };
    write_json(&a.out, "pipeline.json", &pipeline)?;
    write_json(&a.out, "config.json", &spec)?;
    Ok(())
}

#[derive(Serialize)]
struct InputEcho<'a> {
    files: &'a [PathBuf],
    schema: &'a Option<PathBuf>,
}

impl<'a> From<&'a InputArgs> for InputEcho<'a> {
    fn from(i: &'a InputArgs) -> Self {
        Self {
            files: &i.files,
            schema: &i.schema,
        }
    }
}

#[derive(Serialize)]
struct WorkloadSummary {
    id: String,
    rows: usize,
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    columns: &'a [ColumnSchema],
    workloads: Vec<WorkloadSummary>,
    total_rows: usize,
    constant_columns: Vec<String>,
}

fn ingest(a: IngestArgs) -> CmdResult {
    write_json(&a.out, "config.json", &InputEcho::from(&a.input))?;
    let repo = load_input(&a.input)?;
    let (_, constant_columns) = drop_constant_columns(&repo);
    let summary = IngestSummary {
        columns: repo.schema().columns(),
        workloads: repo
            .tables()
            .map(|t| WorkloadSummary {
                id: t.id().to_owned(),
                rows: t.n_rows(),
            })
            .collect(),
        total_rows: repo.total_rows(),
        constant_columns,
    };
    write_json(&a.out, "repository.json", &summary)?;
    Ok(())
}

#[derive(Serialize)]
struct PruneEcho<'a> {
    #[serde(flatten)]
    input: InputEcho<'a>,
    clusterer: ClusterSpec,
    k_range: (usize, usize),
}

fn prune(a: PruneArgs) -> CmdResult {
    if a.k_min < 2 || a.k_min > a.k_max {
        return Err(Failure::Usage("need 2 ≤ --k-min ≤ --k-max".into()));
    }
    let spec = ClusterSpec {
        kind: a.clusterer,
        n_restarts: a.restarts,
        seed: a.seed,
    };
    write_json(
        &a.out,
        "config.json",
        &PruneEcho {
            input: InputEcho::from(&a.input),
            clusterer: spec,
            k_range: (a.k_min, a.k_max),
        },
    )?;
    let (repo, _) = drop_constant_columns(&load_input(&a.input)?);
    let n_metrics = repo.schema().indices_of(ColumnKind::Metric).len();
    let hi = a.k_max.min(n_metrics.saturating_sub(1));
    if hi < a.k_min {
        return Err(Error::DegenerateInput(format!("{n_metrics} non-constant metrics are too few to cluster")).into());
    }
    let (model, pruned) = prune_repository(&repo, &spec, a.k_min..=hi)?;
    write_json(&a.out, "pruned_metrics.json", &pruned)?;
    write_file(&a.out, "eigenvalues.csv", &eigenvalues_csv(&model))?;
    if let Some(sel) = &pruned.selection {
        write_file(&a.out, "selection.csv", &sel.to_csv())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct MapEcho<'a> {
    #[serde(flatten)]
    input: InputEcho<'a>,
    target: &'a Path,
    metrics: Vec<String>,
    distance: Distance,
}

fn map(a: MapArgs) -> CmdResult {
    let (repo, _) = drop_constant_columns(&load_input(&a.input)?);
    let picked = load_metrics(a.metrics.as_ref())?;
    let schema = working_schema(repo.schema(), picked.as_deref())?;
    let repo = repo.project(schema.clone())?;
    let metrics = schema.names_of(ColumnKind::Metric);
    write_json(
        &a.out,
        "config.json",
        &MapEcho {
            input: InputEcho::from(&a.input),
            target: &a.target,
            metrics: metrics.clone(),
            distance: a.distance,
        },
    )?;
    let hint = match &a.input.schema {
        Some(p) => SchemaHint::from_json_file(p)?,
        None => SchemaHint::default(),
    };
    let targets = load_repository(std::slice::from_ref(&a.target), &hint)?.project(schema)?;
    let tables: Vec<&WorkloadTable> = repo.tables().collect();
    let scaler = fit_scaler(&tables, &repo.schema().feature_names())?;
    let results = targets
        .tables()
        .map(|t| map_workload(t, &repo, &metrics, &scaler, a.distance).map_err(|e| e.in_stage("map", Some(t.id()))))
        .collect::<Result<Vec<_>, Error>>()?;
    write_json(&a.out, "mappings.json", &results)?;
    println!("{}", serde_json::to_string_pretty(&results).map_err(Error::from)?);
    Ok(())
}

#[derive(Serialize)]
struct TrainEcho<'a> {
    #[serde(flatten)]
    input: InputEcho<'a>,
    feature_names: &'a [String],
    regressor: &'a RegressorSpec,
}

fn train(a: TrainArgs) -> CmdResult {
    let spec = regressor_spec(&RegressorSpec::default(), &a.model, a.seed)?;
    let (repo, _) = drop_constant_columns(&load_input(&a.input)?);
    let picked = load_metrics(a.metrics.as_ref())?;
    let schema = working_schema(repo.schema(), picked.as_deref())?;
    let repo = repo.project(schema.clone())?;
    let features = schema.feature_names();
    write_json(
        &a.out,
        "config.json",
        &TrainEcho {
            input: InputEcho::from(&a.input),
            feature_names: &features,
            regressor: &spec,
        },
    )?;
    let all = WorkloadTable::concat("train", repo.tables())?;
    let model = ScaledModel::fit(&spec, &all, &features)?;
    write_file(&a.out, "model.json", &model.to_json()?)?;
    Ok(())
}

fn predict(a: PredictArgs) -> CmdResult {
    #[derive(Serialize)]
    struct Echo<'a> {
        model: &'a Path,
        input: &'a Path,
    }
    write_json(
        &a.out,
        "config.json",
        &Echo {
            model: &a.model,
            input: &a.input,
        },
    )?;
    let text = std::fs::read_to_string(&a.model).map_err(|e| Error::io(&a.model, e))?;
    let model = ScaledModel::from_json(&text)?;
    let mut cols: Vec<ColumnSchema> = model
        .feature_names()
        .iter()
        .map(|n| ColumnSchema::new(n.clone(), ColumnKind::Metric))
        .collect();
    cols.push(ColumnSchema::new(DEFAULT_LATENCY_COLUMN, ColumnKind::Latency));
    let obs = load_observations(&a.input, &Schema::new(cols)?)?;
    let y = model.predict_observations(&obs)?;
    let preds: Vec<Prediction> = obs
        .origins
        .iter()
        .zip(y)
        .enumerate()
        .map(|(i, (o, p))| Prediction {
            workload_id: o.workload.clone(),
            row_index: o.index,
            y_true: obs.latency.as_ref().map(|l| l[i]),
            y_pred: p,
        })
        .collect();
    write_file(&a.out, "predictions.csv", &predictions_csv(&preds))?;
    Ok(())
}

fn read_predictions(path: &Path) -> Result<(Vec<String>, Vec<f64>, Vec<f64>), Error> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let header = r
        .headers()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(tc), Some(pc)) = (col("y_true"), col("y_pred")) else {
        return Err(Error::Schema(format!(
            "{}: needs y_true and y_pred columns",
            path.display()
        )));
    };
    let (wc, ic, idc) = (col("workload_id"), col("row_index"), col("id"));
    let (mut ids, mut t, mut p) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let num = |c: usize| {
            rec[c].trim().parse::<f64>().map_err(|e| Error::Parse {
                file: path.to_owned(),
                line: line as u64 + 2,
                message: format!("`{}`: {e}", &rec[c]),
            })
        };
        t.push(num(tc)?);
        p.push(num(pc)?);
        ids.push(match (idc, wc, ic) {
            (Some(c), _, _) => rec[c].to_owned(),
            (None, Some(w), Some(i)) => format!("{}#{}", &rec[w], &rec[i]),
            _ => line.to_string(),
        });
    }
    Ok((ids, t, p))
}

fn evaluate(a: EvaluateArgs) -> CmdResult {
    let format = match a.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Csv => ReportFormat::Csv,
    };
    #[derive(Serialize)]
    struct Echo<'a> {
        predictions: &'a Path,
        format: ReportFormat,
    }
    write_json(
        &a.out,
        "config.json",
        &Echo {
            predictions: &a.predictions,
            format,
        },
    )?;
    let (ids, t, p) = read_predictions(&a.predictions)?;
    let report = EvalReport::new(&ids, &t, &p)?;
    let name = match format {
        ReportFormat::Json => "report.json",
        ReportFormat::Csv => "report.csv",
    };
    emit_report(&report, format, &a.out.join(name))?;
    println!("n={} mape={:?} mse={:?}", report.n, report.mape, report.mse);
    if !report.is_finite() {
        return Err(Error::Numerical("report contains non-finite metrics".into()).into());
    }
    Ok(())
}

fn run(a: RunArgs) -> CmdResult {
    let mut cfg = PipelineConfig::from_json_file(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(c) = a.clusterer {
        cfg.clusterer.kind = c;
    }
    if let Some(d) = a.distance {
        cfg.distance = d;
    }
    if let Some(n) = a.n_map_rows {
        cfg.n_map_rows = n;
    }
    if let Some(k) = a.k_min {
        cfg.k_range.0 = k;
    }
    if let Some(k) = a.k_max {
        cfg.k_range.1 = k;
    }
    cfg.regressor = regressor_spec(&cfg.regressor, &a.model, cfg.seed)?;
    let cfg = cfg.resolved();
    cfg.validate()?;
    let result = run_pipeline(&cfg)?;
    result.write_outputs(&a.out)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&result.summary()).map_err(Error::from)?
    );
    Ok(())
}
