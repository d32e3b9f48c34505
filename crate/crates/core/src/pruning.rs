//! Representative-metric selection on top of factor analysis.
//!
//! Metrics are clustered by their rows of the loadings matrix; the metric
//! closest to each cluster center stands in for the whole cluster.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::cluster::{select_k_with_model, ClusterSpec, ModelSelection};
use crate::error::{Error, Result};
use crate::factor::{factor_analysis, metric_matrix, FactorModel};
use crate::ingest::WorkloadRepository;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedMetric {
    pub name: String,
    pub cluster: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedMetricSet {
    pub k: usize,
    /// One entry per cluster, ordered by cluster id.
    #[serde(rename = "metrics")]
    pub selected: Vec<SelectedMetric>,
    #[serde(skip)]
    pub selection: Option<ModelSelection>,
}

impl PrunedMetricSet {
    pub fn names(&self) -> Vec<String> {
        self.selected.iter().map(|s| s.name.clone()).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// `factor_index,eigenvalue` rows (1-based index) for a scree plot.
pub fn eigenvalues_csv(model: &FactorModel) -> String {
    let mut out = String::from("factor_index,eigenvalue\n");
    for (i, l) in model.eigenvalues.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, l));
    }
    out
}

/// Clusters metrics in loading space and keeps the metric nearest to each
/// cluster center. Cluster ids are renumbered by the first metric (in input
/// order) that belongs to them.
pub fn prune_metrics(
    model: &FactorModel,
    spec: &ClusterSpec,
    k_range: RangeInclusive<usize>,
) -> Result<PrunedMetricSet> {
    if model.n_retained == 0 {
        return Err(Error::DegenerateInput(
            "no factor has an eigenvalue above the retention threshold".into(),
        ));
    }
    let m = model.n_metrics();
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo < 2 || hi > m {
        return Err(Error::InvalidK {
            k: if lo < 2 { lo } else { hi },
            n: m,
        });
    }
    let points = &model.loadings;
    let (selection, fitted) = select_k_with_model(points, k_range, spec)?;
    fitted.check_nonempty()?;
    let k = fitted.k();
    let labels = fitted.labels();
    let centers = fitted.centers();

    let mut renumber = vec![usize::MAX; k];
    let mut next = 0;
    for &l in labels {
        if renumber[l] == usize::MAX {
            renumber[l] = next;
            next += 1;
        }
    }

    let mut best: Vec<Option<(usize, f64)>> = vec![None; k];
    for (i, &l) in labels.iter().enumerate() {
        let d = (points.row(i) - centers.row(l)).norm();
        let slot = &mut best[renumber[l]];
        if slot.is_none_or(|(_, bd)| d < bd) {
            *slot = Some((i, d));
        }
    }
    let selected = best
        .into_iter()
        .enumerate()
        .map(|(cluster, b)| {
            let (i, distance) =
                b.ok_or_else(|| Error::ClusterDegeneracy(format!("cluster {cluster} has no metrics")))?;
            Ok(SelectedMetric {
                name: model.metric_names[i].clone(),
                cluster,
                distance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PrunedMetricSet {
        k,
        selected,
        selection: Some(selection),
    })
}

/// Factor analysis over every metric of `repo`, then [`prune_metrics`].
pub fn prune_repository(
    repo: &WorkloadRepository,
    spec: &ClusterSpec,
    k_range: RangeInclusive<usize>,
) -> Result<(FactorModel, PrunedMetricSet)> {
    let (names, x) = metric_matrix(repo);
    let model = factor_analysis(&names, &x)?;
    let pruned = prune_metrics(&model, spec, k_range)?;
    Ok((model, pruned))
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;

    fn model_from_points(points: DMatrix<f64>) -> FactorModel {
        let m = points.nrows();
        FactorModel {
            metric_names: (0..m).map(|i| format!("m{i}")).collect(),
            n_retained: points.ncols(),
            loadings: points,
            eigenvalues: vec![],
            eigenvectors: DMatrix::zeros(0, 0),
            threshold: 1.0,
        }
    }

    #[test]
    fn two_metrics_two_singletons() {
        let fa = model_from_points(DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));
        let p = prune_metrics(&fa, &ClusterSpec::kmeans(0), 2..=2).unwrap();
        assert_eq!(p.k, 2);
        assert_eq!(p.names(), vec!["m0", "m1"]);
        assert!(p.selected.iter().all(|s| s.distance == 0.0));
    }

    #[test]
    fn nearest_to_center_with_index_tiebreak() {
        // cluster A: 0, 1, 2 (center 1 → m1); cluster B: 10, 12 (tie → m3)
        let fa = model_from_points(DMatrix::from_row_slice(5, 1, &[0.0, 1.0, 2.0, 10.0, 12.0]));
        let p = prune_metrics(&fa, &ClusterSpec::kmeans(0), 2..=2).unwrap();
        assert_eq!(p.names(), vec!["m1", "m3"]);
        assert_eq!(p.selected[0].cluster, 0);
        assert_eq!(p.selected[1].distance, 1.0);
    }

    #[test]
    fn no_retained_factor_is_an_error() {
        let mut fa = model_from_points(DMatrix::zeros(3, 0));
        fa.n_retained = 0;
        assert!(matches!(
            prune_metrics(&fa, &ClusterSpec::kmeans(0), 2..=2),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn json_shape() {
        let fa = model_from_points(DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));
        let p = prune_metrics(&fa, &ClusterSpec::kmeans(0), 2..=2).unwrap();
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        assert_eq!(v["k"], 2);
        assert_eq!(v["metrics"][1]["name"], "m1");
        assert_eq!(v["metrics"][1]["cluster"], 1);
        assert!(v["metrics"][0]["distance"].is_number());
        let back = PrunedMetricSet::from_json(&v.to_string()).unwrap();
        assert_eq!(back.selected, p.selected);
    }
}
