//! Factor analysis of runtime metrics.
//!
//! Factors are extracted from the metric correlation matrix by symmetric
//! eigendecomposition. A factor is retained when its eigenvalue exceeds the
//! Kaiser threshold of 1. The loadings matrix has one row per metric and one
//! column per retained factor, `loading[i][j] = v_j[i] * sqrt(lambda_j)`, so
//! metrics that correlate strongly end up close together in loading space.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ColumnKind, WorkloadRepository};

/// Eigenvalue a factor must exceed to be retained.
pub const KAISER_THRESHOLD: f64 = 1.0;

/// Eigenvalues within this distance of the threshold count as equal to it, so
/// an exact identity spectrum (computed as `1 ± ulp`) retains nothing.
const RETENTION_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub metric_names: Vec<String>,
    /// `n_metrics × n_retained`.
    pub loadings: DMatrix<f64>,
    /// All eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Full eigenvector matrix, columns ordered like `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    pub n_retained: usize,
    pub threshold: f64,
}

impl FactorModel {
    pub fn n_metrics(&self) -> usize {
        self.metric_names.len()
    }
}

/// Pearson correlation between the rows of `x` (rows = variables).
pub fn correlation_matrix(names: &[String], x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, n) = x.shape();
    let mut centered = x.clone();
    let mut norms = Vec::with_capacity(m);
    for i in 0..m {
        let mean = x.row(i).sum() / n as f64;
        let mut row = centered.row_mut(i);
        row.add_scalar_mut(-mean);
        let norm = row.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            let name = names.get(i).map(String::as_str).unwrap_or("?");
            return Err(Error::DegenerateInput(format!(
                "metric `{name}` has zero variance; correlation is undefined"
            )));
        }
        norms.push(norm);
    }
    let mut corr = &centered * centered.transpose();
    for i in 0..m {
        for j in 0..m {
            corr[(i, j)] = if i == j {
                1.0
            } else {
                (corr[(i, j)] / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
        }
    }
    Ok(corr)
}

/// Sorts eigenpairs by descending eigenvalue and flips each eigenvector so its
/// largest-magnitude entry is positive (first such entry on ties).
pub(crate) fn canonical_eigen(sym: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let dim = sym.nrows();
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let mut pivot = 0;
        for r in 1..dim {
            if col[r].abs() > col[pivot].abs() {
                pivot = r;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Factor analysis with the default retention threshold.
///
/// `x` is metric-by-observation: row `i` holds metric `i` across all observed
/// configurations.
pub fn factor_analysis(metric_names: &[String], x: &DMatrix<f64>) -> Result<FactorModel> {
    factor_analysis_with_threshold(metric_names, x, KAISER_THRESHOLD)
}

pub fn factor_analysis_with_threshold(
    metric_names: &[String],
    x: &DMatrix<f64>,
    threshold: f64,
) -> Result<FactorModel> {
    let (m, n) = x.shape();
    if metric_names.len() != m {
        return Err(Error::LengthMismatch(metric_names.len(), m));
    }
    if m < 2 || n < 2 {
        return Err(Error::DegenerateInput(format!(
            "factor analysis needs at least 2 metrics and 2 observations, got {m}×{n}"
        )));
    }
    let corr = correlation_matrix(metric_names, x)?;
    let (eigenvalues, eigenvectors) = canonical_eigen(corr);
    let n_retained = eigenvalues
        .iter()
        .take_while(|&&l| l > threshold + RETENTION_SLACK)
        .count();
    let mut loadings = DMatrix::zeros(m, n_retained);
    for j in 0..n_retained {
        let s = eigenvalues[j].sqrt();
        for i in 0..m {
            loadings[(i, j)] = eigenvectors[(i, j)] * s;
        }
    }
    Ok(FactorModel {
        metric_names: metric_names.to_vec(),
        loadings,
        eigenvalues,
        eigenvectors,
        n_retained,
        threshold,
    })
}

/// The metric-by-observation matrix of every metric column, all tables pooled
/// in workload-id order. Knobs and latency are excluded.
pub fn metric_matrix(repo: &WorkloadRepository) -> (Vec<String>, DMatrix<f64>) {
    let schema = repo.schema();
    let idx = schema.indices_of(ColumnKind::Metric);
    let names = schema.names_of(ColumnKind::Metric);
    let stacked = repo.stacked();
    let x = stacked.select_columns(idx.iter()).transpose();
    (names, x)
}
