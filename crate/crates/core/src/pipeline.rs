//! The end-to-end protocol.
//!
//! 1. Constant columns are dropped from the offline repository and the
//!    remaining metrics are pruned to one representative per cluster.
//! 2. Stage 1: each online-B workload is split into mapping rows and held-out
//!    rows. The mapping rows are mapped onto the offline repository and
//!    augmented with the chosen workload. A model fit on that data predicts
//!    the held-out rows.
//! 3. Stage 2: the stage-1 augmented datasets join the repository as
//!    workloads of their own. Each online-C workload is mapped onto it and
//!    augmented. One model fit on everything predicts the test rows.
//!
//! Features are the scaled knobs and scaled pruned metrics; latency stays raw.
//! Scalers are fit on the rows of the fit they serve. Every fit is recorded
//! in a [`FitAudit`] and checked against the held-out rows before returning.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterSpec;
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::factor::FactorModel;
use crate::ingest::{
    drop_constant_columns, load_observations, load_repository, split_holdout, ColumnKind, ObservationSet, RowId,
    Schema, SchemaHint, WorkloadRepository, WorkloadTable,
};
use crate::mapping::{augment, map_workload, AugmentedDataset, Distance, MappingResult};
use crate::pruning::{eigenvalues_csv, prune_repository, PrunedMetricSet};
use crate::regress::{self, RegressorSpec, TrainedRegressor};
use crate::scaling::{fit_scaler, ScalerParams};

pub const DEFAULT_N_MAP_ROWS: usize = 5;
pub const DEFAULT_K_RANGE: (usize, usize) = (2, 15);
/// Prefix of stage-1 augmented datasets when they join the stage-2 repository.
pub const AUGMENTED_PREFIX: &str = "aug:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub offline_paths: Vec<PathBuf>,
    pub online_b_paths: Vec<PathBuf>,
    pub online_c_paths: Vec<PathBuf>,
    pub test_path: Option<PathBuf>,
    /// Column-kind hint file; without it every column except `latency` is a
    /// metric.
    pub schema_path: Option<PathBuf>,
    pub clusterer: ClusterSpec,
    pub regressor: RegressorSpec,
    pub n_map_rows: usize,
    /// Inclusive cluster-count range, clipped to the number of metrics minus one.
    pub k_range: (usize, usize),
    pub distance: Distance,
    /// Overrides the clusterer and regressor seeds.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            offline_paths: vec![],
            online_b_paths: vec![],
            online_c_paths: vec![],
            test_path: None,
            schema_path: None,
            clusterer: ClusterSpec::default(),
            regressor: RegressorSpec::default(),
            n_map_rows: DEFAULT_N_MAP_ROWS,
            k_range: DEFAULT_K_RANGE,
            distance: Distance::Euclidean,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Reads a JSON config. Relative paths are taken relative to the file.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    /// Joins every relative path onto `base`.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.offline_paths.iter_mut().for_each(fix);
        self.online_b_paths.iter_mut().for_each(fix);
        self.online_c_paths.iter_mut().for_each(fix);
        self.test_path.iter_mut().for_each(fix);
        self.schema_path.iter_mut().for_each(fix);
    }

    /// The config with the global seed pushed into the component specs.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.clusterer.seed = c.seed;
        c.regressor.seed = c.seed;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.offline_paths.is_empty() {
            return Err(Error::Config("at least one offline file is required".into()));
        }
        if self.n_map_rows == 0 {
            return Err(Error::Config("n_map_rows must be ≥ 1".into()));
        }
        if self.k_range.0 < 2 || self.k_range.0 > self.k_range.1 {
            return Err(Error::Config(format!(
                "k_range must satisfy 2 ≤ min ≤ max, got {:?}",
                self.k_range
            )));
        }
        if self.clusterer.n_restarts == 0 {
            return Err(Error::Config("clusterer.n_restarts must be ≥ 1".into()));
        }
        self.regressor.validate()
    }
}

/// In-memory inputs of a run.
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub offline: WorkloadRepository,
    pub online_b: WorkloadRepository,
    pub online_c: WorkloadRepository,
    pub test: Option<ObservationSet>,
}

fn load_or_empty(paths: &[PathBuf], hint: &SchemaHint, schema: &Arc<Schema>) -> Result<WorkloadRepository> {
    if paths.is_empty() {
        return Ok(WorkloadRepository::empty(schema.clone()));
    }
    load_repository(paths, hint)?.project(schema.clone())
}

/// Loads every input named by `config`. Online repositories are projected
/// onto the offline column layout; test rows get held-out origins.
pub fn load_inputs(config: &PipelineConfig) -> Result<PipelineInputs> {
    let hint = match &config.schema_path {
        Some(p) => SchemaHint::from_json_file(p)?,
        None => SchemaHint::default(),
    };
    let offline = load_repository(&config.offline_paths, &hint).map_err(|e| e.in_stage("ingest", None))?;
    let schema = offline.schema().clone();
    let online_b = load_or_empty(&config.online_b_paths, &hint, &schema).map_err(|e| e.in_stage("ingest", None))?;
    let online_c = load_or_empty(&config.online_c_paths, &hint, &schema).map_err(|e| e.in_stage("ingest", None))?;
    let test = match &config.test_path {
        Some(p) => {
            let mut obs = load_observations(p, &schema).map_err(|e| e.in_stage("ingest", None))?;
            for o in &mut obs.origins {
                *o = RowId::held_out(&o.workload, o.index);
            }
            Some(obs)
        }
        None => None,
    };
    Ok(PipelineInputs {
        offline,
        online_b,
        online_c,
        test,
    })
}

/// One fit call: what it was for and which rows it saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub label: String,
    pub origins: Vec<RowId>,
}

/// Log of every fit in a run, used to prove held-out latencies were never
/// trained on.
#[derive(Debug, Default)]
pub struct FitAudit {
    records: Mutex<Vec<FitRecord>>,
}

impl FitAudit {
    pub fn record(&self, label: impl Into<String>, origins: &[RowId]) {
        self.records.lock().expect("audit lock").push(FitRecord {
            label: label.into(),
            origins: origins.to_vec(),
        });
    }

    /// Records sorted by label, so parallel runs compare equal.
    pub fn records(&self) -> Vec<FitRecord> {
        let mut r = self.records.lock().expect("audit lock").clone();
        r.sort_by(|a, b| a.label.cmp(&b.label));
        r
    }

    /// Fails if any held-out row was part of any fit.
    pub fn check(&self, held_out: &BTreeSet<RowId>) -> Result<()> {
        for r in self.records.lock().expect("audit lock").iter() {
            if let Some(o) = r.origins.iter().find(|o| held_out.contains(o)) {
                return Err(Error::Config(format!("held-out row {o} reached the fit `{}`", r.label)));
            }
        }
        Ok(())
    }
}

/// A regressor with the scaler fit on its training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledModel {
    pub format_version: u32,
    pub scaler: ScalerParams,
    pub regressor: TrainedRegressor,
}

impl ScaledModel {
    /// Fits on every row of `table`, using `feature_names` as inputs.
    pub fn fit(spec: &RegressorSpec, table: &WorkloadTable, feature_names: &[String]) -> Result<Self> {
        let scaler = fit_scaler(&[table], feature_names)?;
        let idx = feature_names
            .iter()
            .map(|n| table.schema().require(n))
            .collect::<Result<Vec<_>>>()?;
        let x = scaler.transform(feature_names, &table.values().select_columns(idx.iter()))?;
        let regressor = regress::fit(spec, &x, &table.latency(), feature_names)?;
        Ok(Self {
            format_version: regress::MODEL_FORMAT_VERSION,
            scaler,
            regressor,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.regressor.feature_names
    }

    /// Predicts from raw (unscaled) features in `feature_names` order.
    pub fn predict_raw(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let scaled = self.scaler.transform(self.feature_names(), x)?;
        self.regressor.predict(&scaled)
    }

    pub fn predict_table(&self, table: &WorkloadTable) -> Result<Vec<f64>> {
        let idx = self
            .feature_names()
            .iter()
            .map(|n| table.schema().require(n))
            .collect::<Result<Vec<_>>>()?;
        self.predict_raw(&table.values().select_columns(idx.iter()))
    }

    pub fn predict_observations(&self, obs: &ObservationSet) -> Result<Vec<f64>> {
        self.predict_raw(&obs.select(self.feature_names())?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: ScaledModel = serde_json::from_str(text)?;
        if m.format_version != regress::MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {}",
                m.format_version
            )));
        }
        Ok(m)
    }
}

fn fit_audited(
    spec: &RegressorSpec,
    data: &AugmentedDataset,
    feature_names: &[String],
    audit: &FitAudit,
    label: String,
) -> Result<ScaledModel> {
    audit.record(label, data.origins());
    ScaledModel::fit(spec, &data.table, feature_names)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub workload_id: String,
    pub row_index: usize,
    pub y_true: Option<f64>,
    pub y_pred: f64,
}

fn report_of(preds: &[Prediction]) -> Result<Option<EvalReport>> {
    if preds.iter().any(|p| p.y_true.is_none()) {
        return Ok(None);
    }
    let ids: Vec<String> = preds
        .iter()
        .map(|p| RowId::new(&p.workload_id, p.row_index).to_string())
        .collect();
    let t: Vec<f64> = preds.iter().filter_map(|p| p.y_true).collect();
    let y: Vec<f64> = preds.iter().map(|p| p.y_pred).collect();
    EvalReport::new(&ids, &t, &y).map(Some)
}

/// `workload_id,row_index,y_true,y_pred`; a missing truth is an empty cell.
pub fn predictions_csv(preds: &[Prediction]) -> String {
    let mut out = String::from("workload_id,row_index,y_true,y_pred\n");
    for p in preds {
        let t = p.y_true.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", p.workload_id, p.row_index, t, p.y_pred));
    }
    out
}

#[derive(Debug, Clone)]
pub struct Stage1Workload {
    pub workload_id: String,
    pub mapping: MappingResult,
    pub augmented: AugmentedDataset,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone)]
pub struct Stage1Result {
    /// Sorted by workload id.
    pub workloads: Vec<Stage1Workload>,
    pub report: EvalReport,
}

impl Stage1Result {
    pub fn mappings(&self) -> Vec<MappingResult> {
        self.workloads.iter().map(|w| w.mapping.clone()).collect()
    }

    pub fn predictions(&self) -> Vec<Prediction> {
        self.workloads.iter().flat_map(|w| w.predictions.clone()).collect()
    }

    /// Union of every augmented dataset, in workload order.
    pub fn augmented(&self) -> Result<Option<AugmentedDataset>> {
        if self.workloads.is_empty() {
            return Ok(None);
        }
        let parts: Vec<&AugmentedDataset> = self.workloads.iter().map(|w| &w.augmented).collect();
        AugmentedDataset::union("stage1", &parts).map(Some)
    }
}

/// Shared inputs of both stages, already projected onto the working columns.
pub struct StageContext<'a> {
    pub offline: &'a WorkloadRepository,
    pub metrics: &'a [String],
    pub feature_names: &'a [String],
    pub config: &'a PipelineConfig,
    pub audit: &'a FitAudit,
}

fn mapping_scaler(repo: &WorkloadRepository, ctx: &StageContext) -> Result<ScalerParams> {
    let tables: Vec<&WorkloadTable> = repo.tables().collect();
    fit_scaler(&tables, ctx.feature_names)
}

pub fn run_stage1(ctx: &StageContext, online_b: &WorkloadRepository) -> Result<Stage1Result> {
    let cfg = ctx.config.resolved();
    if online_b.is_empty() {
        return Ok(Stage1Result {
            workloads: vec![],
            report: EvalReport::empty(),
        });
    }
    let scaler = mapping_scaler(ctx.offline, ctx).map_err(|e| e.in_stage("stage1", None))?;
    let targets: Vec<&WorkloadTable> = online_b.tables().collect();
    let workloads = targets
        .par_iter()
        .map(|b| {
            let id = b.id();
            let run = || -> Result<Stage1Workload> {
                let split = split_holdout(b, cfg.n_map_rows)?;
                let mapping = map_workload(&split.mapping_rows, ctx.offline, ctx.metrics, &scaler, cfg.distance)?;
                let source = ctx.offline.require(&mapping.chosen)?;
                let augmented = augment(&split.mapping_rows, source)?;
                let model = fit_audited(
                    &cfg.regressor,
                    &augmented,
                    ctx.feature_names,
                    ctx.audit,
                    format!("stage1/{id}"),
                )?;
                let held = &split.validation_rows;
                let y = model.predict_table(held)?;
                let predictions = held
                    .origins()
                    .iter()
                    .zip(held.latency().into_iter().zip(y))
                    .map(|(o, (t, p))| Prediction {
                        workload_id: o.workload.clone(),
                        row_index: o.index,
                        y_true: Some(t),
                        y_pred: p,
                    })
                    .collect();
                Ok(Stage1Workload {
                    workload_id: id.to_owned(),
                    mapping,
                    augmented,
                    predictions,
                })
            };
            run().map_err(|e| e.in_stage("stage1", Some(id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let preds: Vec<Prediction> = workloads.iter().flat_map(|w| w.predictions.clone()).collect();
    let report = report_of(&preds)?.unwrap_or_else(EvalReport::empty);
    Ok(Stage1Result { workloads, report })
}

#[derive(Debug, Clone)]
pub struct Stage2Result {
    /// One per online-C workload, sorted by workload id.
    pub mappings: Vec<MappingResult>,
    /// Final training data: the stage-1 union followed by the new rows.
    pub augmented_final: Option<AugmentedDataset>,
    pub model: Option<ScaledModel>,
    pub predictions: Vec<Prediction>,
    /// Present when every test row carries a latency.
    pub report: Option<EvalReport>,
}

pub fn run_stage2(
    ctx: &StageContext,
    stage1: &Stage1Result,
    online_c: &WorkloadRepository,
    test: Option<&ObservationSet>,
) -> Result<Stage2Result> {
    let cfg = ctx.config.resolved();
    let stage = |e: Error| e.in_stage("stage2", None);
    let mut repo = ctx.offline.clone();
    for w in &stage1.workloads {
        repo.insert(
            w.augmented
                .table
                .renamed(format!("{AUGMENTED_PREFIX}{}", w.workload_id)),
        )
        .map_err(stage)?;
    }
    let mut mappings = Vec::new();
    let mut parts = Vec::new();
    if !online_c.is_empty() {
        let scaler = mapping_scaler(&repo, ctx).map_err(stage)?;
        let targets: Vec<&WorkloadTable> = online_c.tables().collect();
        let done = targets
            .par_iter()
            .map(|c| {
                let run = || -> Result<(MappingResult, AugmentedDataset)> {
                    let m = map_workload(c, &repo, ctx.metrics, &scaler, cfg.distance)?;
                    let a = augment(c, repo.require(&m.chosen)?)?;
                    Ok((m, a))
                };
                run().map_err(|e| e.in_stage("stage2", Some(c.id())))
            })
            .collect::<Result<Vec<_>>>()?;
        for (m, a) in done {
            mappings.push(m);
            parts.push(a);
        }
    }
    let first = stage1.augmented().map_err(stage)?;
    let mut all: Vec<&AugmentedDataset> = first.iter().collect();
    all.extend(parts.iter());
    let augmented_final = if all.is_empty() {
        None
    } else {
        Some(AugmentedDataset::union("final", &all).map_err(stage)?)
    };
    let model = match &augmented_final {
        Some(d) => {
            Some(fit_audited(&cfg.regressor, d, ctx.feature_names, ctx.audit, "stage2/final".into()).map_err(stage)?)
        }
        None => None,
    };
    let mut predictions = Vec::new();
    if let Some(obs) = test.filter(|o| !o.is_empty()) {
        let Some(model) = &model else {
            return Err(stage(Error::Config(
                "test rows were given but there is no online data to train the final model on".into(),
            )));
        };
        let y = model.predict_observations(obs).map_err(stage)?;
        for (i, (o, p)) in obs.origins.iter().zip(y).enumerate() {
            predictions.push(Prediction {
                workload_id: o.workload.trim_end_matches("@test").to_owned(),
                row_index: o.index,
                y_true: obs.latency.as_ref().map(|l| l[i]),
                y_pred: p,
            });
        }
    }
    let report = if predictions.is_empty() {
        None
    } else {
        report_of(&predictions).map_err(stage)?
    };
    Ok(Stage2Result {
        mappings,
        augmented_final,
        model,
        predictions,
        report,
    })
}

/// Everything a run produced.
#[derive(Debug)]
pub struct PipelineRun {
    pub config: PipelineConfig,
    pub dropped_columns: Vec<String>,
    pub factor_model: FactorModel,
    pub pruned: PrunedMetricSet,
    pub feature_names: Vec<String>,
    pub stage1: Stage1Result,
    pub stage2: Stage2Result,
    pub audit: FitAudit,
}

fn clip_k_range(cfg: &PipelineConfig, n_metrics: usize) -> Result<std::ops::RangeInclusive<usize>> {
    let hi = cfg.k_range.1.min(n_metrics.saturating_sub(1));
    if hi < cfg.k_range.0 {
        return Err(Error::DegenerateInput(format!(
            "{n_metrics} metrics remain after preprocessing; clustering needs at least {}",
            cfg.k_range.0 + 1
        )));
    }
    Ok(cfg.k_range.0..=hi)
}

/// Runs every stage on in-memory inputs.
pub fn run_on(inputs: &PipelineInputs, config: &PipelineConfig) -> Result<PipelineRun> {
    let cfg = config.resolved();
    cfg.regressor.validate()?;
    let (offline, dropped) = drop_constant_columns(&inputs.offline);
    let (names, _) = crate::factor::metric_matrix(&offline);
    let k_range = clip_k_range(&cfg, names.len()).map_err(|e| e.in_stage("prune", None))?;
    let (factor_model, pruned) =
        prune_repository(&offline, &cfg.clusterer, k_range).map_err(|e| e.in_stage("prune", None))?;
    let selected: BTreeSet<String> = pruned.names().into_iter().collect();
    let working = Arc::new(
        offline
            .schema()
            .retain(|c| c.kind == ColumnKind::Knob || selected.contains(&c.name)),
    );
    let feature_names = working.feature_names();
    let metrics = working.names_of(ColumnKind::Metric);
    let project = |r: &WorkloadRepository| r.project(working.clone()).map_err(|e| e.in_stage("preprocess", None));
    let offline = project(&offline)?;
    let online_b = project(&inputs.online_b)?;
    let online_c = project(&inputs.online_c)?;

    let audit = FitAudit::default();
    let ctx = StageContext {
        offline: &offline,
        metrics: &metrics,
        feature_names: &feature_names,
        config: &cfg,
        audit: &audit,
    };
    let stage1 = run_stage1(&ctx, &online_b)?;
    let stage2 = run_stage2(&ctx, &stage1, &online_c, inputs.test.as_ref())?;

    let mut held_out: BTreeSet<RowId> = stage1
        .workloads
        .iter()
        .flat_map(|w| w.predictions.iter().map(|p| RowId::new(&p.workload_id, p.row_index)))
        .collect();
    if let Some(t) = &inputs.test {
        held_out.extend(t.origins.iter().cloned());
    }
    audit.check(&held_out).map_err(|e| e.in_stage("audit", None))?;

    Ok(PipelineRun {
        config: cfg,
        dropped_columns: dropped,
        factor_model,
        pruned,
        feature_names,
        stage1,
        stage2,
        audit,
    })
}

/// Loads the inputs named by `config` and runs every stage.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineRun> {
    config.validate()?;
    let inputs = load_inputs(config)?;
    run_on(&inputs, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub n: usize,
    pub mape: Option<f64>,
    pub mse: Option<f64>,
}

impl StageSummary {
    fn of(r: Option<&EvalReport>, n: usize) -> Self {
        Self {
            n,
            mape: r.and_then(|r| r.mape),
            mse: r.and_then(|r| r.mse),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dropped_columns: Vec<String>,
    pub n_retained_factors: usize,
    pub k: usize,
    pub selected_metrics: Vec<String>,
    pub feature_names: Vec<String>,
    pub stage1: StageSummary,
    pub test: StageSummary,
    pub final_training_rows: usize,
}

impl PipelineRun {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            dropped_columns: self.dropped_columns.clone(),
            n_retained_factors: self.factor_model.n_retained,
            k: self.pruned.k,
            selected_metrics: self.pruned.names(),
            feature_names: self.feature_names.clone(),
            stage1: StageSummary::of(Some(&self.stage1.report), self.stage1.report.n),
            test: StageSummary::of(self.stage2.report.as_ref(), self.stage2.predictions.len()),
            final_training_rows: self.stage2.augmented_final.as_ref().map_or(0, |d| d.table.n_rows()),
        }
    }

    /// Writes every artifact of the run into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| -> Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        let json = |v: &dyn erased::Json| -> Result<String> { Ok(v.pretty()? + "\n") };
        write("config.json", json(&self.config)?)?;
        write("pruned_metrics.json", json(&self.pruned)?)?;
        write("eigenvalues.csv", eigenvalues_csv(&self.factor_model))?;
        if let Some(sel) = &self.pruned.selection {
            write("selection.csv", sel.to_csv())?;
        }
        write("stage1_mappings.json", json(&self.stage1.mappings())?)?;
        write("stage1_predictions.csv", predictions_csv(&self.stage1.predictions()))?;
        write("stage1_report.json", json(&self.stage1.report)?)?;
        write("stage2_mappings.json", json(&self.stage2.mappings)?)?;
        write("test_predictions.csv", predictions_csv(&self.stage2.predictions))?;
        if let Some(r) = &self.stage2.report {
            write("test_report.json", json(r)?)?;
        }
        write("summary.json", json(&self.summary())?)?;
        Ok(())
    }
}

mod erased {
    use serde::Serialize;

    pub trait Json {
        fn pretty(&self) -> serde_json::Result<String>;
    }

    impl<T: Serialize> Json for T {
        fn pretty(&self) -> serde_json::Result<String> {
            serde_json::to_string_pretty(self)
        }
    }
}
