//! Silhouette coefficient with Euclidean distances.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::kmeans::{rows_of, sq_dist};
use crate::error::{Error, Result};

/// Per-point silhouette values. Points in singleton clusters score 0.
pub fn silhouette_samples(points: &DMatrix<f64>, labels: &[usize]) -> Result<Vec<f64>> {
    let n = points.nrows();
    if labels.len() != n {
        return Err(Error::LengthMismatch(labels.len(), n));
    }
    // relabel to 0..c in order of first label value
    let mut ids = BTreeMap::new();
    for &l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    let c = ids.len();
    if c < 2 || n < 2 {
        return Err(Error::UndefinedSilhouette);
    }
    let lab: Vec<usize> = labels.iter().map(|l| ids[l]).collect();
    let mut sizes = vec![0usize; c];
    for &l in &lab {
        sizes[l] += 1;
    }
    let rows = rows_of(points);
    let mut out = Vec::with_capacity(n);
    let mut sums = vec![0.0; c];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[lab[j]] += sq_dist(&rows[i], &rows[j]).sqrt();
            }
        }
        let own = lab[i];
        if sizes[own] == 1 {
            out.push(0.0);
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..c)
            .filter(|&k| k != own)
            .map(|k| sums[k] / sizes[k] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        out.push(if denom > 0.0 { (b - a) / denom } else { 0.0 });
    }
    Ok(out)
}

/// Mean silhouette over all points, in `[-1, 1]`.
pub fn silhouette_score(points: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    let s = silhouette_samples(points, labels)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn line(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(xs.len(), 1, xs)
    }

    #[test]
    fn two_tight_pairs() {
        // a = 0.1, b ≈ 100.05 for every point: s ≈ 0.999
        let s = silhouette_score(&line(&[0.0, 0.1, 100.0, 100.1]), &[0, 0, 1, 1]).unwrap();
        assert!(s > 0.99, "{s}");
    }

    #[test]
    fn singletons_score_zero() {
        assert_eq!(silhouette_score(&line(&[0.0, 1.0]), &[0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn one_cluster_is_undefined() {
        assert!(matches!(
            silhouette_score(&line(&[0.0, 1.0, 2.0]), &[4, 4, 4]),
            Err(Error::UndefinedSilhouette)
        ));
    }

    proptest! {
        #[test]
        fn invariant_under_translation_and_scaling(
            pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 4..25),
            shift in -100.0f64..100.0,
            scale in 0.01f64..100.0,
            seed in 0u64..1000,
        ) {
            let n = pts.len();
            let flat: Vec<f64> = pts.iter().flat_map(|&(x, y)| [x, y]).collect();
            let m = DMatrix::from_row_slice(n, 2, &flat);
            let labels: Vec<usize> = (0..n).map(|i| ((i as u64 * 7 + seed) % 3) as usize).collect();
            let base = silhouette_score(&m, &labels).unwrap();
            let moved = m.map(|v| (v + shift) * scale);
            let other = silhouette_score(&moved, &labels).unwrap();
            prop_assert!((-1.0..=1.0).contains(&base));
            prop_assert!((base - other).abs() < 1e-9);
        }
    }
}
