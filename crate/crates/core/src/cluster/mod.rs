//! Clustering and cluster-count selection.
//!
//! K-means picks `k` by maximum silhouette. The GMM variant also uses the
//! silhouette of its hard assignment and breaks exact ties by lower BIC.

pub mod gmm;
pub mod kmeans;
pub mod silhouette;

use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gmm::{bic, gmm_fit, GmmModel};
pub use kmeans::{kmeans_fit, KMeansModel};
pub use silhouette::{silhouette_samples, silhouette_score};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClustererKind {
    #[default]
    KMeans,
    Gmm,
}

impl std::str::FromStr for ClustererKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(ClustererKind::KMeans),
            "gmm" => Ok(ClustererKind::Gmm),
            other => Err(Error::Config(format!("unknown clusterer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSpec {
    pub kind: ClustererKind,
    pub n_restarts: usize,
    pub seed: u64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            kind: ClustererKind::KMeans,
            n_restarts: 10,
            seed: 0,
        }
    }
}

impl ClusterSpec {
    pub fn kmeans(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn gmm(seed: u64) -> Self {
        Self {
            kind: ClustererKind::Gmm,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedClusters {
    KMeans(KMeansModel),
    Gmm(GmmModel),
}

impl FittedClusters {
    pub fn k(&self) -> usize {
        match self {
            FittedClusters::KMeans(m) => m.k,
            FittedClusters::Gmm(m) => m.k,
        }
    }

    pub fn labels(&self) -> &[usize] {
        match self {
            FittedClusters::KMeans(m) => &m.labels,
            FittedClusters::Gmm(m) => &m.labels,
        }
    }

    /// K-means centroids or GMM component means (`k × d`).
    pub fn centers(&self) -> &DMatrix<f64> {
        match self {
            FittedClusters::KMeans(m) => &m.centroids,
            FittedClusters::Gmm(m) => &m.means,
        }
    }

    /// Fails if some cluster received no points.
    pub fn check_nonempty(&self) -> Result<()> {
        let mut counts = vec![0usize; self.k()];
        for &l in self.labels() {
            counts[l] += 1;
        }
        match counts.iter().position(|&c| c == 0) {
            Some(c) => Err(Error::ClusterDegeneracy(format!(
                "cluster {c} of {} has no points",
                self.k()
            ))),
            None => Ok(()),
        }
    }
}

/// Fits the clusterer described by `spec` with `k` clusters.
pub fn fit_clusters(points: &DMatrix<f64>, k: usize, spec: &ClusterSpec) -> Result<FittedClusters> {
    match spec.kind {
        ClustererKind::KMeans => kmeans_fit(points, k, spec.seed, spec.n_restarts).map(FittedClusters::KMeans),
        ClustererKind::Gmm => gmm_fit(points, k, spec.seed, spec.n_restarts).map(FittedClusters::Gmm),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionRule {
    SilhouetteMax,
    SilhouetteThenBic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub k: usize,
    /// `None` when the fit degenerated (empty cluster or numerical failure).
    pub silhouette: Option<f64>,
    pub bic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSelection {
    pub candidates: Vec<Candidate>,
    pub chosen_k: usize,
    pub rule: SelectionRule,
}

impl ModelSelection {
    /// `k,silhouette,bic` table; missing values are empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,silhouette,bic\n");
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.candidates {
            out.push_str(&format!("{},{},{}\n", c.k, cell(c.silhouette), cell(c.bic)));
        }
        out
    }
}

fn evaluate(points: &DMatrix<f64>, k: usize, spec: &ClusterSpec) -> (Candidate, Option<FittedClusters>) {
    let fitted = fit_clusters(points, k, spec).and_then(|f| f.check_nonempty().map(|_| f));
    let Ok(fitted) = fitted else {
        return (
            Candidate {
                k,
                silhouette: None,
                bic: None,
            },
            None,
        );
    };
    let silhouette = silhouette_score(points, fitted.labels()).ok();
    let bic = match &fitted {
        FittedClusters::Gmm(m) => bic(m, points).ok(),
        FittedClusters::KMeans(_) => None,
    };
    (Candidate { k, silhouette, bic }, Some(fitted))
}

/// Fits every `k` in the range and picks one, returning the chosen fit too.
pub fn select_k_with_model(
    points: &DMatrix<f64>,
    k_range: RangeInclusive<usize>,
    spec: &ClusterSpec,
) -> Result<(ModelSelection, FittedClusters)> {
    let n = points.nrows();
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo > hi {
        return Err(Error::Config(format!("empty k range {lo}..={hi}")));
    }
    if lo == 0 || hi > n {
        return Err(Error::InvalidK {
            k: if lo == 0 { 0 } else { hi },
            n,
        });
    }
    let rule = match spec.kind {
        ClustererKind::KMeans => SelectionRule::SilhouetteMax,
        ClustererKind::Gmm => SelectionRule::SilhouetteThenBic,
    };
    let results: Vec<(Candidate, Option<FittedClusters>)> = k_range
        .clone()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|k| evaluate(points, k, spec))
        .collect();

    if lo == hi {
        let (cand, fitted) = results.into_iter().next().expect("one candidate");
        let fitted = match fitted {
            Some(f) => f,
            None => {
                let f = fit_clusters(points, lo, spec)?;
                f.check_nonempty()?;
                f
            }
        };
        return Ok((
            ModelSelection {
                candidates: vec![cand],
                chosen_k: lo,
                rule,
            },
            fitted,
        ));
    }

    let mut best: Option<usize> = None;
    for (i, (c, f)) in results.iter().enumerate() {
        let (Some(s), Some(_)) = (c.silhouette, f) else {
            continue;
        };
        let better = match best {
            None => true,
            Some(b) => {
                let bs = results[b].0.silhouette.expect("best has a silhouette");
                if s != bs {
                    s > bs
                } else {
                    rule == SelectionRule::SilhouetteThenBic
                        && c.bic.unwrap_or(f64::INFINITY) < results[b].0.bic.unwrap_or(f64::INFINITY)
                }
            }
        };
        if better {
            best = Some(i);
        }
    }
    let Some(best) = best else {
        return Err(Error::ClusterDegeneracy(format!(
            "every fit in k={lo}..={hi} degenerated"
        )));
    };
    let chosen_k = results[best].0.k;
    let candidates = results.iter().map(|(c, _)| c.clone()).collect();
    let fitted = results
        .into_iter()
        .nth(best)
        .and_then(|(_, f)| f)
        .expect("chosen candidate has a fit");
    Ok((
        ModelSelection {
            candidates,
            chosen_k,
            rule,
        },
        fitted,
    ))
}

pub fn select_k(points: &DMatrix<f64>, k_range: RangeInclusive<usize>, spec: &ClusterSpec) -> Result<ModelSelection> {
    select_k_with_model(points, k_range, spec).map(|(s, _)| s)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use super::*;

    fn planted(seed: u64, groups: usize, per: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.2).unwrap();
        let mut flat = Vec::new();
        for g in 0..groups {
            let (cx, cy) = ((g % 4) as f64 * 10.0, (g / 4) as f64 * 10.0);
            for _ in 0..per {
                flat.push(cx + noise.sample(&mut rng));
                flat.push(cy + noise.sample(&mut rng));
            }
        }
        DMatrix::from_row_slice(groups * per, 2, &flat)
    }

    #[test]
    fn picks_two_planted_blobs() {
        let pts = planted(1, 2, 10);
        for spec in [ClusterSpec::kmeans(4), ClusterSpec::gmm(4)] {
            let sel = select_k(&pts, 2..=5, &spec).unwrap();
            assert_eq!(sel.chosen_k, 2, "{spec:?}");
        }
    }

    #[test]
    fn picks_eight_planted_blobs() {
        let pts = planted(2, 8, 5);
        let sel = select_k(&pts, 2..=15, &ClusterSpec::kmeans(0)).unwrap();
        assert_eq!(sel.chosen_k, 8);
        assert_eq!(sel.candidates.len(), 14);
        assert_eq!(sel.rule, SelectionRule::SilhouetteMax);
    }

    #[test]
    fn singleton_range_is_unconditional() {
        let pts = planted(3, 2, 10);
        let sel = select_k(&pts, 3..=3, &ClusterSpec::kmeans(0)).unwrap();
        assert_eq!(sel.chosen_k, 3);
    }

    #[test]
    fn csv_table_header() {
        let pts = planted(3, 2, 10);
        let sel = select_k(&pts, 2..=3, &ClusterSpec::gmm(0)).unwrap();
        let csv = sel.to_csv();
        assert!(csv.starts_with("k,silhouette,bic\n2,"));
        assert_eq!(csv.lines().count(), 3);
    }
}
