//! Workload mapping and augmentation.
//!
//! A target workload is compared with every repository workload on the pruned
//! metrics. Rows are paired by knob configuration: each target row is matched
//! with the source row nearest to it in scaled knob space. Per metric, the
//! distance between the paired value vectors is taken, and the score is the
//! mean of those distances. The lowest score wins.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ColumnKind, RowId, WorkloadRepository, WorkloadTable};
use crate::scaling::ScalerParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    /// L2 norm of the difference of scaled metric vectors.
    #[default]
    Euclidean,
    /// Mean absolute percentage difference of raw metric vectors, in percent.
    Mape,
}

impl FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Distance::Euclidean),
            "mape" => Ok(Distance::Mape),
            other => Err(Error::Config(format!("unknown distance `{other}`"))),
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distance::Euclidean => "euclidean",
            Distance::Mape => "mape",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceScore {
    pub source_id: String,
    /// `+inf` when the rows could not be aligned.
    #[serde(with = "finite_or_null")]
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingResult {
    pub target_id: String,
    /// Ascending by score, ties by source id.
    pub scores: Vec<SourceScore>,
    pub chosen: String,
}

impl MappingResult {
    pub fn chosen_score(&self) -> f64 {
        self.scores[0].score
    }
}

/// JSON has no infinity; unalignable sources are written as `null`.
mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

fn scaled_columns(table: &WorkloadTable, names: &[String], scaler: &ScalerParams) -> Result<DMatrix<f64>> {
    let idx = names
        .iter()
        .map(|n| table.schema().require(n))
        .collect::<Result<Vec<_>>>()?;
    scaler.transform(names, &table.values().select_columns(idx.iter()))
}

/// For each target row, the index of the source row paired with it.
///
/// With knob columns, the pair is the source row nearest in scaled knob space
/// (lowest index on ties; source rows may be reused). Without knob columns,
/// rows pair by position and the source needs at least as many rows.
pub fn align_rows(target: &WorkloadTable, source: &WorkloadTable, scaler: &ScalerParams) -> Result<Vec<usize>> {
    let knobs = target.schema().names_of(ColumnKind::Knob);
    if knobs.is_empty() {
        if source.n_rows() < target.n_rows() {
            return Err(Error::Alignment(format!(
                "`{}` has {} rows but `{}` needs {} and there are no knob columns to pair on",
                source.id(),
                source.n_rows(),
                target.id(),
                target.n_rows()
            )));
        }
        return Ok((0..target.n_rows()).collect());
    }
    let t = scaled_columns(target, &knobs, scaler)?;
    let s = scaled_columns(source, &knobs, scaler)?;
    Ok(t.row_iter()
        .map(|tr| {
            let mut best = (0, f64::INFINITY);
            for (j, sr) in s.row_iter().enumerate() {
                let d = (tr - sr).norm_squared();
                if d < best.1 {
                    best = (j, d);
                }
            }
            best.0
        })
        .collect())
}

/// Mean over `metrics` of the distance between the target's values and the
/// aligned source values.
pub fn score_workload(
    target: &WorkloadTable,
    source: &WorkloadTable,
    metrics: &[String],
    scaler: &ScalerParams,
    distance: Distance,
) -> Result<f64> {
    if metrics.is_empty() {
        return Err(Error::Config("no metrics to compare workloads on".into()));
    }
    let pairs = align_rows(target, source, scaler)?;
    let (t, s) = match distance {
        Distance::Euclidean => (
            scaled_columns(target, metrics, scaler)?,
            scaled_columns(source, metrics, scaler)?,
        ),
        Distance::Mape => {
            let raw = |tab: &WorkloadTable| -> Result<DMatrix<f64>> {
                let idx = metrics
                    .iter()
                    .map(|n| tab.schema().require(n))
                    .collect::<Result<Vec<_>>>()?;
                Ok(tab.values().select_columns(idx.iter()))
            };
            (raw(target)?, raw(source)?)
        }
    };
    let mut total = 0.0;
    for m in 0..metrics.len() {
        let d = match distance {
            Distance::Euclidean => pairs
                .iter()
                .enumerate()
                .map(|(i, &j)| (t[(i, m)] - s[(j, m)]).powi(2))
                .sum::<f64>()
                .sqrt(),
            Distance::Mape => {
                let mut acc = 0.0;
                for (i, &j) in pairs.iter().enumerate() {
                    if t[(i, m)] == 0.0 {
                        return Err(Error::UndefinedMape);
                    }
                    acc += ((t[(i, m)] - s[(j, m)]) / t[(i, m)]).abs();
                }
                100.0 * acc / pairs.len() as f64
            }
        };
        total += d;
    }
    Ok(total / metrics.len() as f64)
}

/// Scores `target` against every workload of `repo` and picks the lowest.
/// Sources that cannot be aligned score `+inf` instead of failing the run.
pub fn map_workload(
    target: &WorkloadTable,
    repo: &WorkloadRepository,
    metrics: &[String],
    scaler: &ScalerParams,
    distance: Distance,
) -> Result<MappingResult> {
    if repo.is_empty() {
        return Err(Error::Config("cannot map onto an empty repository".into()));
    }
    let sources: Vec<&WorkloadTable> = repo.tables().collect();
    let mut scores = sources
        .par_iter()
        .map(|s| match score_workload(target, s, metrics, scaler, distance) {
            Ok(v) => Ok(v),
            Err(Error::Alignment(_)) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .zip(&sources)
        .map(|(score, s)| SourceScore {
            source_id: s.id().to_owned(),
            score,
        })
        .collect::<Vec<_>>();
    scores.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.source_id.cmp(&b.source_id)));
    if !scores[0].score.is_finite() {
        return Err(Error::Alignment(format!(
            "`{}` could not be aligned with any repository workload",
            target.id()
        )));
    }
    Ok(MappingResult {
        target_id: target.id().to_owned(),
        chosen: scores[0].source_id.clone(),
        scores,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    FromTarget,
    FromSource(String),
}

/// Target rows plus the non-conflicting rows of the source it was mapped to.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDataset {
    pub table: WorkloadTable,
    pub provenance: Vec<Provenance>,
}

fn knob_key(table: &WorkloadTable, r: usize) -> Vec<u64> {
    // adding 0.0 folds -0.0 into 0.0 so equal values hash equally
    table.knob_tuple(r).into_iter().map(|v| (v + 0.0).to_bits()).collect()
}

impl AugmentedDataset {
    pub fn n_from_target(&self) -> usize {
        self.provenance.iter().filter(|p| **p == Provenance::FromTarget).count()
    }

    pub fn origins(&self) -> &[RowId] {
        self.table.origins()
    }

    /// Concatenates datasets in order, keeping the first copy of any row
    /// that appears in several of them (rows are identified by origin).
    pub fn union(id: impl Into<String>, parts: &[&AugmentedDataset]) -> Result<AugmentedDataset> {
        let id = id.into();
        let Some(first) = parts.first() else {
            return Err(Error::InsufficientRows { rows: 0, needed: 0 });
        };
        let schema = first.table.schema().clone();
        let mut seen = BTreeSet::new();
        let mut rows = Vec::new();
        let mut origins = Vec::new();
        let mut provenance = Vec::new();
        for p in parts {
            if !p.table.schema().same_layout(&schema) {
                return Err(Error::Schema(format!(
                    "cannot union `{}` with `{}`: schemas differ",
                    p.table.id(),
                    first.table.id()
                )));
            }
            for (r, o) in p.table.origins().iter().enumerate() {
                if seen.insert(o.clone()) {
                    rows.extend(p.table.values().row(r).iter().copied());
                    origins.push(o.clone());
                    provenance.push(p.provenance[r].clone());
                }
            }
        }
        let values = DMatrix::from_row_slice(origins.len(), schema.len(), &rows);
        Ok(AugmentedDataset {
            table: WorkloadTable::with_origins(id, schema, values, origins)?,
            provenance,
        })
    }
}

/// Target rows followed by every source row whose knob configuration does not
/// occur in the target. On a conflict the target's observation is kept.
pub fn augment(target: &WorkloadTable, source: &WorkloadTable) -> Result<AugmentedDataset> {
    if !target.schema().same_layout(source.schema()) {
        return Err(Error::Schema(format!(
            "cannot augment `{}` with `{}`: schemas differ",
            target.id(),
            source.id()
        )));
    }
    let taken: BTreeSet<Vec<u64>> = (0..target.n_rows()).map(|r| knob_key(target, r)).collect();
    let keep: Vec<usize> = (0..source.n_rows())
        .filter(|&r| !taken.contains(&knob_key(source, r)))
        .collect();
    let mut provenance = vec![Provenance::FromTarget; target.n_rows()];
    let table = if keep.is_empty() {
        target.clone()
    } else {
        let extra = source.select_rows(&keep)?;
        provenance.extend(std::iter::repeat_n(
            Provenance::FromSource(source.id().to_owned()),
            keep.len(),
        ));
        WorkloadTable::concat(target.id(), [target, &extra])?
    };
    Ok(AugmentedDataset { table, provenance })
}

/// The repository used for the second mapping round: the original workloads
/// plus each augmented dataset as a workload of its own.
pub fn extend_repository(
    repo: &WorkloadRepository,
    augmented: impl IntoIterator<Item = (String, WorkloadTable)>,
) -> Result<WorkloadRepository> {
    let mut out = repo.clone();
    for (id, table) in augmented {
        out.insert(table.renamed(id))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::ingest::{ColumnSchema, Schema};

    fn schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(vec![
                ColumnSchema::new("k", ColumnKind::Knob),
                ColumnSchema::new("m1", ColumnKind::Metric),
                ColumnSchema::new("m2", ColumnKind::Metric),
                ColumnSchema::new("latency", ColumnKind::Latency),
            ])
            .unwrap(),
        )
    }

    fn table(id: &str, rows: &[[f64; 4]]) -> WorkloadTable {
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        WorkloadTable::new(id, schema(), DMatrix::from_row_slice(rows.len(), 4, &flat)).unwrap()
    }

    fn identity_scaler() -> ScalerParams {
        ScalerParams {
            columns: vec!["k".into(), "m1".into(), "m2".into()],
            means: vec![0.0; 3],
            stds: vec![1.0; 3],
        }
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_metric_single_row_distance() {
        let t = table("t", &[[0.0, 3.0, 0.0, 1.0]]);
        let s = table("s", &[[0.0, 7.0, 0.0, 1.0]]);
        let d = score_workload(&t, &s, &names(&["m1"]), &identity_scaler(), Distance::Euclidean).unwrap();
        assert_eq!(d, 4.0);
    }

    #[test]
    fn score_is_the_mean_over_metrics() {
        let t = table("t", &[[0.0, 0.0, 0.0, 1.0]]);
        let s = table("s", &[[0.0, 2.0, 4.0, 1.0]]);
        let d = score_workload(&t, &s, &names(&["m1", "m2"]), &identity_scaler(), Distance::Euclidean).unwrap();
        assert_eq!(d, 3.0);
    }

    #[test]
    fn rows_pair_by_nearest_knob() {
        let t = table("t", &[[2.0, 1.0, 0.0, 1.0], [0.0, 5.0, 0.0, 1.0]]);
        let s = table("s", &[[0.1, 5.0, 0.0, 1.0], [1.9, 1.0, 0.0, 1.0], [9.0, 0.0, 0.0, 1.0]]);
        assert_eq!(align_rows(&t, &s, &identity_scaler()).unwrap(), vec![1, 0]);
        let d = score_workload(&t, &s, &names(&["m1"]), &identity_scaler(), Distance::Euclidean).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn exact_copy_is_chosen_and_ties_go_to_the_smaller_id() {
        let t = table("t", &[[1.0, 2.0, 3.0, 4.0], [2.0, 1.0, 0.0, 5.0]]);
        let far = table("a_far", &[[1.0, 9.0, 9.0, 4.0]]);
        let repo = WorkloadRepository::new(schema(), vec![t.renamed("z_copy"), t.renamed("b_copy"), far]).unwrap();
        let m = map_workload(
            &t,
            &repo,
            &names(&["m1", "m2"]),
            &identity_scaler(),
            Distance::Euclidean,
        )
        .unwrap();
        assert_eq!(m.chosen, "b_copy");
        assert_eq!(m.chosen_score(), 0.0);
        assert_eq!(m.scores.len(), 3);
        assert_eq!(m.scores[2].source_id, "a_far");
    }

    #[test]
    fn mape_distance_uses_raw_values() {
        let t = table("t", &[[0.0, 100.0, 0.0, 1.0]]);
        let s = table("s", &[[0.0, 110.0, 0.0, 1.0]]);
        let d = score_workload(&t, &s, &names(&["m1"]), &identity_scaler(), Distance::Mape).unwrap();
        assert!((d - 10.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_scores_serialize_as_null() {
        let r = MappingResult {
            target_id: "t".into(),
            scores: vec![
                SourceScore {
                    source_id: "a".into(),
                    score: 1.5,
                },
                SourceScore {
                    source_id: "b".into(),
                    score: f64::INFINITY,
                },
            ],
            chosen: "a".into(),
        };
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("null"));
        let back: MappingResult = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn augment_keeps_target_on_conflicts() {
        let t = table("t", &[[1.0, 0.0, 0.0, 10.0], [2.0, 0.0, 0.0, 20.0]]);
        let s = table("s", &[[2.0, 0.0, 0.0, 99.0], [3.0, 0.0, 0.0, 30.0]]);
        let a = augment(&t, &s).unwrap();
        assert_eq!(a.table.latency(), vec![10.0, 20.0, 30.0]);
        assert_eq!(a.n_from_target(), 2);
        assert_eq!(a.provenance[2], Provenance::FromSource("s".into()));

        let disjoint = table("d", &[[5.0, 0.0, 0.0, 1.0]]);
        assert_eq!(augment(&t, &disjoint).unwrap().table.n_rows(), 3);
        let same = augment(&t, &t.renamed("copy")).unwrap();
        assert_eq!(same.table, t);
    }

    #[test]
    fn union_keeps_the_first_copy_of_each_row() {
        let t1 = table("t1", &[[1.0, 0.0, 0.0, 10.0]]);
        let t2 = table("t2", &[[2.0, 0.0, 0.0, 20.0]]);
        let s = table("s", &[[3.0, 0.0, 0.0, 30.0]]);
        let a = augment(&t1, &s).unwrap();
        let b = augment(&t2, &s).unwrap();
        let u = AugmentedDataset::union("all", &[&a, &b]).unwrap();
        assert_eq!(u.table.latency(), vec![10.0, 30.0, 20.0]);
        assert_eq!(u.n_from_target(), 2);
    }
}
