//! Lloyd's K-means with k-means++ seeding.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    /// `k × d`.
    pub centroids: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every Lloyd update of the winning restart.
    pub inertia_trace: Vec<f64>,
    pub n_iter: usize,
}

pub(crate) fn rows_of(points: &DMatrix<f64>) -> Vec<Vec<f64>> {
    points.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++: first center uniform, then proportional to squared distance to
/// the closest chosen center.
pub(crate) fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[idx].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }
    centers
}

struct Run {
    centers: Vec<Vec<f64>>,
    labels: Vec<usize>,
    inertia: f64,
    trace: Vec<f64>,
    n_iter: usize,
}

fn assign(points: &[Vec<f64>], centers: &[Vec<f64>], labels: &mut [usize]) -> bool {
    let mut changed = false;
    for (i, p) in points.iter().enumerate() {
        let (c, _) = nearest(p, centers);
        if labels[i] != c {
            labels[i] = c;
            changed = true;
        }
    }
    changed
}

fn inertia_of(points: &[Vec<f64>], centers: &[Vec<f64>], labels: &[usize]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum()
}

/// Gives every empty cluster the point farthest from its own center.
fn fill_empty(points: &[Vec<f64>], centers: &mut [Vec<f64>], labels: &mut [usize], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centers[labels[i]]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let Some(i) = far else { return };
        centers[empty] = points[i].clone();
        labels[i] = empty;
    }
}

fn update(points: &[Vec<f64>], labels: &[usize], centers: &mut [Vec<f64>]) {
    let d = points[0].len();
    let mut sums = vec![vec![0.0; d]; centers.len()];
    let mut counts = vec![0usize; centers.len()];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (c, (sum, count)) in sums.into_iter().zip(counts).enumerate() {
        if count > 0 {
            centers[c] = sum.into_iter().map(|s| s / count as f64).collect();
        }
    }
}

fn lloyd(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Run {
    let mut centers = kmeans_plus_plus(points, k, rng);
    let mut labels = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    let mut n_iter = 0;
    while n_iter < MAX_ITER {
        let changed = assign(points, &centers, &mut labels);
        fill_empty(points, &mut centers, &mut labels, k);
        if !changed && n_iter > 0 {
            break;
        }
        update(points, &labels, &mut centers);
        trace.push(inertia_of(points, &centers, &labels));
        n_iter += 1;
    }
    let inertia = inertia_of(points, &centers, &labels);
    Run {
        centers,
        labels,
        inertia,
        trace,
        n_iter,
    }
}

/// Best of `n_restarts` Lloyd runs by inertia. Restarts draw from one RNG
/// stream seeded by `seed`, so the result is a pure function of the inputs.
pub fn kmeans_fit(points: &DMatrix<f64>, k: usize, seed: u64, n_restarts: usize) -> Result<KMeansModel> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite point coordinate".into()));
    }
    let rows = rows_of(points);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Run> = None;
    for _ in 0..n_restarts.max(1) {
        let run = lloyd(&rows, k, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    let mut counts = vec![0usize; k];
    for &l in &best.labels {
        counts[l] += 1;
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::ClusterDegeneracy(format!(
            "cluster {c} is empty (fewer than {k} distinct points)"
        )));
    }
    let d = points.ncols();
    let flat: Vec<f64> = best.centers.iter().flatten().copied().collect();
    Ok(KMeansModel {
        k,
        centroids: DMatrix::from_row_slice(k, d, &flat),
        labels: best.labels,
        inertia: best.inertia,
        inertia_trace: best.trace,
        n_iter: best.n_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(xs.len(), 1, xs)
    }

    #[test]
    fn two_points_two_clusters() {
        let m = kmeans_fit(&line(&[0.0, 10.0]), 2, 1, 10).unwrap();
        let mut c: Vec<f64> = m.centroids.iter().copied().collect();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.0, 10.0]);
        assert_eq!(m.inertia, 0.0);
    }

    #[test]
    fn four_points_on_a_line() {
        // brute force over the 7 two-way partitions of {0,1,9,10}: best is
        // {0,1}|{9,10} with inertia 0.25*4 = 1.0
        let pts = [0.0, 1.0, 9.0, 10.0];
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << 3) {
            let (a, b): (Vec<f64>, Vec<f64>) = {
                let mut a = vec![];
                let mut b = vec![];
                for (i, &p) in pts.iter().enumerate() {
                    if i < 3 && mask & (1 << i) != 0 {
                        a.push(p)
                    } else {
                        b.push(p)
                    }
                }
                (a, b)
            };
            let sse = |v: &[f64]| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
            };
            if !a.is_empty() {
                best = best.min(sse(&a) + sse(&b));
            }
        }
        assert_eq!(best, 1.0);
        let m = kmeans_fit(&line(&pts), 2, 3, 10).unwrap();
        assert!((m.inertia - best).abs() < 1e-12);
        let mut c: Vec<f64> = m.centroids.iter().copied().collect();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.5, 9.5]);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 3.0, 0.0, 0.0, 6.0]);
        let m = kmeans_fit(&pts, 1, 0, 1).unwrap();
        assert_eq!(m.centroids.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0]);
    }

    #[test]
    fn k_larger_than_n_rejected() {
        assert!(matches!(
            kmeans_fit(&line(&[1.0, 2.0]), 3, 0, 1),
            Err(Error::InvalidK { k: 3, n: 2 })
        ));
    }

    #[test]
    fn deterministic_and_monotone() {
        let mut s = 99u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let pts = DMatrix::from_fn(60, 3, |_, _| next());
        let a = kmeans_fit(&pts, 4, 42, 5).unwrap();
        let b = kmeans_fit(&pts, 4, 42, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.inertia_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        // every label is its nearest centroid
        let rows = rows_of(&pts);
        let cents = rows_of(&a.centroids);
        for (p, &l) in rows.iter().zip(&a.labels) {
            assert_eq!(nearest(p, &cents).0, l);
        }
    }
}
