//! Synthetic workload corpora with planted structure and a latency oracle.
//!
//! Knob configurations are drawn once into a shared pool. Every offline
//! workload is measured on the whole pool (in its own row order); online
//! workloads use random subsets of it.
//!
//! Each metric group `g` follows a latent value `f_g(x) + shift[w][g]`, where
//! `f_g` is a sum of scaled sigmoids of a disjoint subset of knobs and the
//! shift belongs to the workload (its family's shift plus a little jitter).
//! A metric is a noisy affine image of its group's latent, so metrics in one
//! group are strongly correlated and groups are nearly independent.
//!
//! Latency depends on the family: a base level, a weighted sum of the
//! latents, one pairwise knob interaction and the boolean knob, plus Gaussian
//! noise, floored at [`LATENCY_FLOOR`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    ColumnKind, ColumnSchema, Encoding, ObservationSet, RowId, Schema, SchemaHint, WorkloadRepository, WorkloadTable,
    DEFAULT_LATENCY_COLUMN, WORKLOAD_ID_COLUMN,
};

pub const LATENCY_FLOOR: f64 = 1.0;
pub const FLAG_KNOB: &str = "knob_flag";
pub const CONSTANT_METRIC: &str = "metric_const";
pub const CONSTANT_METRIC_VALUE: f64 = 7.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    /// Offline workloads.
    pub n_workloads: usize,
    /// Rows per offline workload; also the size of the configuration pool.
    pub rows_per_workload: usize,
    pub n_knobs: usize,
    pub n_metric_groups: usize,
    pub metrics_per_group: usize,
    /// Standard deviation of the latency noise.
    pub noise_sigma: f64,
    /// Metric noise standard deviation as a fraction of `noise_sigma`, in
    /// latent units. Zero `noise_sigma` therefore makes every metric an exact
    /// affine image of its latent.
    pub metric_noise_ratio: f64,
    /// Standard deviation of the per-family latent shifts.
    pub family_shift_sigma: f64,
    pub workload_family_count: usize,
    pub online_b_workloads: usize,
    /// Rows per online-B workload (mapping rows plus held-out rows).
    pub online_b_rows: usize,
    pub online_c_workloads: usize,
    pub online_c_rows: usize,
    /// Extra rows per online-C workload written to the test file.
    pub test_rows_per_workload: usize,
    pub boolean_knob: bool,
    pub constant_metric: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_workloads: 24,
            rows_per_workload: 30,
            n_knobs: 8,
            n_metric_groups: 8,
            metrics_per_group: 4,
            noise_sigma: 5.0,
            metric_noise_ratio: 0.006,
            family_shift_sigma: 0.15,
            workload_family_count: 4,
            online_b_workloads: 12,
            online_b_rows: 6,
            online_c_workloads: 12,
            online_c_rows: 10,
            test_rows_per_workload: 2,
            boolean_knob: true,
            constant_metric: true,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_workloads", self.n_workloads),
            ("rows_per_workload", self.rows_per_workload),
            ("n_knobs", self.n_knobs),
            ("n_metric_groups", self.n_metric_groups),
            ("metrics_per_group", self.metrics_per_group),
            ("workload_family_count", self.workload_family_count),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be ≥ 1")));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("metric_noise_ratio", self.metric_noise_ratio),
            ("family_shift_sigma", self.family_shift_sigma),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be a finite value ≥ 0")));
            }
        }
        let pool = self.rows_per_workload;
        if self.online_b_rows > pool || self.online_c_rows + self.test_rows_per_workload > pool {
            return Err(Error::Config(format!(
                "online workloads draw distinct configurations from a pool of {pool}"
            )));
        }
        Ok(())
    }

    fn knob_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..self.n_knobs).map(|j| format!("knob_{j}")).collect();
        if self.boolean_knob {
            v.push(FLAG_KNOB.to_owned());
        }
        v
    }

    fn metric_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for g in 0..self.n_metric_groups {
            for i in 0..self.metrics_per_group {
                v.push(format!("metric_{g}_{i}"));
            }
        }
        v
    }

    /// Column layout shared by every generated table.
    pub fn schema(&self) -> Schema {
        let mut cols: Vec<ColumnSchema> = self
            .knob_names()
            .into_iter()
            .map(|n| {
                let mut c = ColumnSchema::new(n, ColumnKind::Knob);
                if c.name == FLAG_KNOB {
                    c.encoding = Encoding::BooleanEncoded;
                }
                c
            })
            .collect();
        cols.extend(
            self.metric_names()
                .into_iter()
                .map(|n| ColumnSchema::new(n, ColumnKind::Metric)),
        );
        if self.constant_metric {
            cols.push(ColumnSchema::new(CONSTANT_METRIC, ColumnKind::Metric));
        }
        cols.push(ColumnSchema::new(DEFAULT_LATENCY_COLUMN, ColumnKind::Latency));
        Schema::new(cols).expect("generated names are unique")
    }

    pub fn schema_hint(&self) -> SchemaHint {
        SchemaHint(
            self.schema()
                .columns()
                .iter()
                .map(|c| (c.name.clone(), c.kind))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentGroup {
    /// Knob indices driving this group.
    pub knobs: Vec<usize>,
    pub slopes: Vec<f64>,
    pub midpoints: Vec<f64>,
}

impl LatentGroup {
    /// `sum_j (2 / |S|) * sigmoid(slope_j * (x_j - mid_j))`, in `(0, 2)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        let c = 2.0 / self.knobs.len() as f64;
        self.knobs
            .iter()
            .zip(self.slopes.iter().zip(&self.midpoints))
            .map(|(&j, (s, m))| c / (1.0 + (-s * (x[j] - m)).exp()))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMap {
    pub group: usize,
    pub gain: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub base: f64,
    /// One weight per latent group.
    pub weights: Vec<f64>,
    pub interaction: f64,
    pub flag_effect: f64,
    pub shifts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadTruth {
    pub family: usize,
    pub shifts: Vec<f64>,
}

/// Everything needed to regenerate latencies without noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub knob_names: Vec<String>,
    pub groups: Vec<LatentGroup>,
    pub metrics: BTreeMap<String, MetricMap>,
    /// Knob pair whose product enters the latency.
    pub interaction_knobs: Option<(usize, usize)>,
    pub families: Vec<Family>,
    pub workloads: BTreeMap<String, WorkloadTruth>,
}

impl GroundTruth {
    pub fn metric_group(&self, name: &str) -> Option<usize> {
        self.metrics.get(name).map(|m| m.group)
    }

    pub fn family_of(&self, workload: &str) -> Option<usize> {
        self.workloads.get(workload).map(|w| w.family)
    }

    fn latents(&self, w: &WorkloadTruth, knobs: &[f64]) -> Vec<f64> {
        self.groups
            .iter()
            .zip(&w.shifts)
            .map(|(g, s)| g.value(knobs) + s)
            .collect()
    }

    fn noise_free(&self, w: &WorkloadTruth, knobs: &[f64]) -> f64 {
        let fam = &self.families[w.family];
        let mut y = fam.base;
        y += self
            .latents(w, knobs)
            .iter()
            .zip(&fam.weights)
            .map(|(f, c)| f * c)
            .sum::<f64>();
        if let Some((p, q)) = self.interaction_knobs {
            y += fam.interaction * knobs[p] * knobs[q];
        }
        if self.spec.boolean_knob {
            y += fam.flag_effect * knobs[self.spec.n_knobs];
        }
        y
    }
}

/// Noise-free latency of `workload` at a configuration given in schema knob
/// order.
pub fn oracle_latency(truth: &GroundTruth, workload: &str, knobs: &[f64]) -> Result<f64> {
    let w = truth
        .workloads
        .get(workload)
        .ok_or_else(|| Error::Key(workload.to_owned()))?;
    if knobs.len() != truth.knob_names.len() {
        return Err(Error::Shape {
            expected: truth.knob_names.len(),
            got: knobs.len(),
        });
    }
    Ok(truth.noise_free(w, knobs).max(LATENCY_FLOOR))
}

/// A full corpus: offline repository, two online repositories and test rows
/// for the second online set.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub offline: WorkloadRepository,
    pub online_b: WorkloadRepository,
    pub online_c: WorkloadRepository,
    /// Rows held out from the online-C workloads, with latency.
    pub test: WorkloadRepository,
    pub truth: GroundTruth,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn build_truth(spec: &SynthSpec) -> GroundTruth {
    let mut rng = rng_for(spec.seed, 0);
    let k = spec.n_knobs;
    let n_groups = spec.n_metric_groups;
    let mut subsets = vec![Vec::new(); n_groups];
    if k >= n_groups {
        for j in 0..k {
            subsets[j % n_groups].push(j);
        }
    } else {
        for (g, s) in subsets.iter_mut().enumerate() {
            s.push(g % k);
        }
    }
    let groups = subsets
        .into_iter()
        .map(|knobs| LatentGroup {
            slopes: knobs.iter().map(|_| rng.random_range(4.0..8.0)).collect(),
            midpoints: knobs.iter().map(|_| rng.random_range(0.3..0.7)).collect(),
            knobs,
        })
        .collect();

    let mut metrics = BTreeMap::new();
    for g in 0..n_groups {
        for i in 0..spec.metrics_per_group {
            // magnitudes spread over three decades, like counters vs. bytes
            let gain = rng.random_range(0.5..5.0) * 10f64.powi(rng.random_range(0..4));
            let offset = rng.random_range(0.0..100.0);
            metrics.insert(format!("metric_{g}_{i}"), MetricMap { group: g, gain, offset });
        }
    }

    let shift = Normal::new(0.0, spec.family_shift_sigma).expect("validated sigma");
    let families = (0..spec.workload_family_count)
        .map(|_| Family {
            base: rng.random_range(40.0..80.0),
            weights: (0..n_groups).map(|_| rng.random_range(2.0..8.0)).collect(),
            interaction: rng.random_range(10.0..30.0),
            flag_effect: rng.random_range(-5.0..5.0),
            shifts: (0..n_groups).map(|_| shift.sample(&mut rng)).collect(),
        })
        .collect();

    GroundTruth {
        spec: spec.clone(),
        knob_names: spec.knob_names(),
        groups,
        metrics,
        interaction_knobs: (k >= 2).then_some((0, 1)),
        families,
        workloads: BTreeMap::new(),
    }
}

fn config_pool(spec: &SynthSpec) -> Vec<Vec<f64>> {
    let mut rng = rng_for(spec.seed, 1);
    (0..spec.rows_per_workload)
        .map(|_| {
            let mut x: Vec<f64> = (0..spec.n_knobs).map(|_| rng.random::<f64>()).collect();
            if spec.boolean_knob {
                x.push(if rng.random_bool(0.5) { 1.0 } else { 0.0 });
            }
            x
        })
        .collect()
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    schema: Arc<Schema>,
    pool: Vec<Vec<f64>>,
    truth: GroundTruth,
    metric_order: Vec<String>,
}

impl Generator<'_> {
    fn new(spec: &SynthSpec) -> Result<Generator<'_>> {
        spec.validate()?;
        Ok(Generator {
            spec,
            schema: Arc::new(spec.schema()),
            pool: config_pool(spec),
            truth: build_truth(spec),
            metric_order: spec.metric_names(),
        })
    }

    /// Registers workload `id` and returns its rows at the given pool indices.
    fn workload(&mut self, id: &str, family: usize, stream: u64, configs: &[usize]) -> Result<WorkloadTable> {
        let mut rng = rng_for(self.spec.seed, stream);
        let jitter = Normal::new(0.0, 0.1 * self.spec.family_shift_sigma).expect("validated sigma");
        let w = WorkloadTruth {
            family,
            shifts: self.truth.families[family]
                .shifts
                .iter()
                .map(|s| s + jitter.sample(&mut rng))
                .collect(),
        };
        let metric_noise =
            Normal::new(0.0, self.spec.metric_noise_ratio * self.spec.noise_sigma).expect("validated sigma");
        let latency_noise = Normal::new(0.0, self.spec.noise_sigma).expect("validated sigma");
        let mut flat = Vec::with_capacity(configs.len() * self.schema.len());
        for &c in configs {
            let x = &self.pool[c];
            flat.extend(x);
            let latents = self.truth.latents(&w, x);
            for name in &self.metric_order {
                let m = &self.truth.metrics[name];
                flat.push(m.gain * (latents[m.group] + metric_noise.sample(&mut rng)) + m.offset);
            }
            if self.spec.constant_metric {
                flat.push(CONSTANT_METRIC_VALUE);
            }
            let y = self.truth.noise_free(&w, x) + latency_noise.sample(&mut rng);
            flat.push(y.max(LATENCY_FLOOR));
        }
        self.truth.workloads.insert(id.to_owned(), w);
        let values = DMatrix::from_row_slice(configs.len(), self.schema.len(), &flat);
        WorkloadTable::new(id, self.schema.clone(), values)
    }

    fn draw(&self, stream: u64, n: usize) -> Vec<usize> {
        let mut rng = rng_for(self.spec.seed, stream);
        let mut idx: Vec<usize> = (0..self.pool.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(n);
        idx
    }
}

pub fn offline_id(i: usize) -> String {
    format!("offline_{i:03}")
}

pub fn online_b_id(i: usize) -> String {
    format!("b_{i:03}")
}

pub fn online_c_id(i: usize) -> String {
    format!("c_{i:03}")
}

const STREAM_OFFLINE: u64 = 1 << 20;
const STREAM_B: u64 = 2 << 20;
const STREAM_C: u64 = 3 << 20;
const ORDER_OFFSET: u64 = 1 << 19;

/// Offline repository only.
pub fn generate(spec: &SynthSpec) -> Result<(WorkloadRepository, GroundTruth)> {
    let c = generate_corpus(&SynthSpec {
        online_b_workloads: 0,
        online_c_workloads: 0,
        ..spec.clone()
    })?;
    Ok((c.offline, c.truth))
}

/// Offline workloads cycle through the families so each family is present;
/// online workloads pick families at random.
pub fn generate_corpus(spec: &SynthSpec) -> Result<Corpus> {
    let mut g = Generator::new(spec)?;
    let n_fam = spec.workload_family_count;
    let pool = spec.rows_per_workload;
    let mut family_rng = rng_for(spec.seed, 2);

    let mut offline = Vec::new();
    for i in 0..spec.n_workloads {
        let order = g.draw(STREAM_OFFLINE + ORDER_OFFSET + i as u64, pool);
        offline.push(g.workload(&offline_id(i), i % n_fam, STREAM_OFFLINE + i as u64, &order)?);
    }
    let mut online_b = Vec::new();
    for i in 0..spec.online_b_workloads {
        let fam = family_rng.random_range(0..n_fam);
        let rows = g.draw(STREAM_B + ORDER_OFFSET + i as u64, spec.online_b_rows);
        online_b.push(g.workload(&online_b_id(i), fam, STREAM_B + i as u64, &rows)?);
    }
    let mut online_c = Vec::new();
    let mut test = Vec::new();
    for i in 0..spec.online_c_workloads {
        let fam = family_rng.random_range(0..n_fam);
        let n_train = spec.online_c_rows;
        let rows = g.draw(
            STREAM_C + ORDER_OFFSET + i as u64,
            n_train + spec.test_rows_per_workload,
        );
        let id = online_c_id(i);
        let all = g.workload(&id, fam, STREAM_C + i as u64, &rows)?;
        online_c.push(all.select_rows(&(0..n_train).collect::<Vec<_>>())?);
        if spec.test_rows_per_workload > 0 {
            let held: Vec<usize> = (n_train..rows.len()).collect();
            let t = all.select_rows(&held)?;
            let origins = (0..held.len()).map(|r| RowId::held_out(&id, r)).collect();
            test.push(WorkloadTable::with_origins(
                id,
                g.schema.clone(),
                t.values().clone(),
                origins,
            )?);
        }
    }
    let schema = g.schema.clone();
    Ok(Corpus {
        offline: WorkloadRepository::new(schema.clone(), offline)?,
        online_b: WorkloadRepository::new(schema.clone(), online_b)?,
        online_c: WorkloadRepository::new(schema.clone(), online_c)?,
        test: WorkloadRepository::new(schema, test)?,
        truth: g.truth,
    })
}

/// Test rows as an observation set.
pub fn test_observations(test: &WorkloadRepository) -> ObservationSet {
    let schema = test.schema();
    let feature_names = schema.feature_names();
    let n = test.total_rows();
    let mut features = DMatrix::zeros(n, feature_names.len());
    let mut origins = Vec::with_capacity(n);
    let mut latency = Vec::with_capacity(n);
    let mut r0 = 0;
    for t in test.tables() {
        features.rows_mut(r0, t.n_rows()).copy_from(&t.features());
        origins.extend(t.origins().iter().cloned());
        latency.extend(t.latency());
        r0 += t.n_rows();
    }
    ObservationSet {
        feature_names,
        features,
        origins,
        latency: Some(latency),
    }
}

fn format_cell(v: f64, boolean: bool) -> String {
    if boolean {
        if v != 0.0 { "true" } else { "false" }.to_owned()
    } else {
        v.to_string()
    }
}

fn write_table(path: &Path, tables: &[&WorkloadTable], with_id: bool) -> Result<()> {
    let schema = tables[0].schema();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut header: Vec<&str> = Vec::new();
    if with_id {
        header.push(WORKLOAD_ID_COLUMN);
    }
    header.extend(schema.columns().iter().map(|c| c.name.as_str()));
    let flag = schema.index_of(FLAG_KNOB);
    let csv_err = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    w.write_record(&header).map_err(csv_err)?;
    for t in tables {
        for r in 0..t.n_rows() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            if with_id {
                rec.push(t.id().to_owned());
            }
            rec.extend(
                t.row(r)
                    .into_iter()
                    .enumerate()
                    .map(|(c, v)| format_cell(v, Some(c) == flag)),
            );
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Paths of a corpus written by [`write_corpus`], relative to its root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusLayout {
    pub offline: Vec<PathBuf>,
    pub online_b: Vec<PathBuf>,
    pub online_c: Vec<PathBuf>,
    pub test: PathBuf,
    pub schema: PathBuf,
    pub ground_truth: PathBuf,
}

/// Writes one CSV per workload under `offline/`, `online_b/` and
/// `online_c/`, plus `test.csv`, `schema.json` and `ground_truth.json`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<CorpusLayout> {
    let mut layout = CorpusLayout {
        offline: vec![],
        online_b: vec![],
        online_c: vec![],
        test: PathBuf::from("test.csv"),
        schema: PathBuf::from("schema.json"),
        ground_truth: PathBuf::from("ground_truth.json"),
    };
    for (sub, repo, list) in [
        ("offline", &corpus.offline, &mut layout.offline),
        ("online_b", &corpus.online_b, &mut layout.online_b),
        ("online_c", &corpus.online_c, &mut layout.online_c),
    ] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        for t in repo.tables() {
            let rel = PathBuf::from(sub).join(format!("{}.csv", t.id()));
            write_table(&dir.join(&rel), &[t], false)?;
            list.push(rel);
        }
    }
    let test: Vec<&WorkloadTable> = corpus.test.tables().collect();
    if test.is_empty() {
        let p = dir.join(&layout.test);
        let mut header = vec![WORKLOAD_ID_COLUMN.to_owned()];
        header.extend(corpus.test.schema().columns().iter().map(|c| c.name.clone()));
        std::fs::write(&p, header.join(",") + "\n").map_err(|e| Error::io(&p, e))?;
    } else {
        write_table(&dir.join(&layout.test), &test, true)?;
    }
    let hint = corpus.truth.spec.schema_hint();
    let p = dir.join(&layout.schema);
    std::fs::write(&p, serde_json::to_string_pretty(&hint)? + "\n").map_err(|e| Error::io(&p, e))?;
    let p = dir.join(&layout.ground_truth);
    std::fs::write(&p, serde_json::to_string_pretty(&corpus.truth)? + "\n").map_err(|e| Error::io(&p, e))?;
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn noiseless_group_metrics_are_perfectly_correlated() {
        let spec = SynthSpec {
            noise_sigma: 0.0,
            n_workloads: 3,
            ..SynthSpec::default()
        };
        let (repo, _) = generate(&spec).unwrap();
        let t = repo.tables().next().unwrap();
        let r = corr(&t.column("metric_2_0").unwrap(), &t.column("metric_2_3").unwrap());
        assert!((r.abs() - 1.0).abs() < 1e-9, "r = {r}");
    }

    #[test]
    fn same_spec_same_corpus() {
        let spec = SynthSpec {
            seed: 9,
            ..SynthSpec::default()
        };
        assert_eq!(generate_corpus(&spec).unwrap(), generate_corpus(&spec).unwrap());
        let other = generate_corpus(&SynthSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(other.offline, generate_corpus(&SynthSpec::default()).unwrap().offline);
    }

    #[test]
    fn oracle_is_positive_and_rejects_unknown_workloads() {
        let (repo, truth) = generate(&SynthSpec::default()).unwrap();
        for t in repo.tables() {
            for r in 0..t.n_rows() {
                assert!(oracle_latency(&truth, t.id(), &t.knob_tuple(r)).unwrap() >= LATENCY_FLOOR);
            }
        }
        assert!(matches!(
            oracle_latency(&truth, "nope", &repo.tables().next().unwrap().knob_tuple(0)),
            Err(Error::Key(_))
        ));
    }

    #[test]
    fn latency_residuals_match_the_noise_level() {
        let spec = SynthSpec {
            n_workloads: 100,
            rows_per_workload: 100,
            online_b_workloads: 0,
            online_c_workloads: 0,
            ..SynthSpec::default()
        };
        let (repo, truth) = generate(&spec).unwrap();
        let mut res = Vec::new();
        for t in repo.tables() {
            let y = t.latency();
            for (r, yv) in y.iter().enumerate() {
                res.push(yv - oracle_latency(&truth, t.id(), &t.knob_tuple(r)).unwrap());
            }
        }
        let n = res.len() as f64;
        assert_eq!(res.len(), 10_000);
        let mean = res.iter().sum::<f64>() / n;
        let sd = (res.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        // standard errors: 0.05 for the mean, ~0.035 for the sd
        assert!(mean.abs() < 0.2, "mean {mean}");
        assert!((sd - 5.0).abs() < 0.15, "sd {sd}");
    }

    #[test]
    fn corpus_layout_and_test_origins() {
        let c = generate_corpus(&SynthSpec::default()).unwrap();
        assert_eq!(c.offline.len(), 24);
        assert_eq!(c.online_b.require("b_000").unwrap().n_rows(), 6);
        assert_eq!(c.online_c.require("c_000").unwrap().n_rows(), 10);
        let t = c.test.require("c_000").unwrap();
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.origins()[0], RowId::new("c_000@test", 0));
        assert_eq!(c.truth.workloads.len(), 24 + 12 + 12);
    }

    #[test]
    fn written_corpus_loads_back() {
        let c = generate_corpus(&SynthSpec {
            n_workloads: 4,
            online_b_workloads: 2,
            online_c_workloads: 2,
            ..SynthSpec::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let layout = write_corpus(&c, dir.path()).unwrap();
        let hint = SchemaHint::from_json_file(&dir.path().join(&layout.schema)).unwrap();
        let paths: Vec<PathBuf> = layout.offline.iter().map(|p| dir.path().join(p)).collect();
        let repo = crate::ingest::load_repository(&paths, &hint).unwrap();
        assert_eq!(repo, c.offline);
        let flag = repo.schema().index_of(FLAG_KNOB).unwrap();
        assert_eq!(repo.schema().columns()[flag].encoding, Encoding::BooleanEncoded);
        let obs = crate::ingest::load_observations(&dir.path().join(&layout.test), repo.schema()).unwrap();
        assert_eq!(obs.len(), 4);
        assert_eq!(obs.latency.unwrap(), test_observations(&c.test).latency.unwrap());
    }
}
