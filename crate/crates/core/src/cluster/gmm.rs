//! Gaussian mixture with full covariance matrices, fitted by EM.
//!
//! Each restart is initialized from a K-means run: responsibilities start as
//! the hard K-means assignment and the first M-step turns them into weights,
//! means and covariances. A ridge of [`COV_RIDGE`] is added to every
//! covariance diagonal in every M-step.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_fit, rows_of};
use crate::error::{Error, Result};

pub const MAX_ITER: usize = 200;
pub const TOL: f64 = 1e-6;
pub const COV_RIDGE: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    pub weights: Vec<f64>,
    /// `k × d`.
    pub means: DMatrix<f64>,
    pub covariances: Vec<DMatrix<f64>>,
    /// Total log-likelihood of the training points under the final parameters.
    pub log_likelihood: f64,
    pub labels: Vec<usize>,
    /// Log-likelihood at every E-step of the winning restart.
    pub ll_trace: Vec<f64>,
    pub n_iter: usize,
    pub converged: bool,
}

/// Free parameters of a full-covariance mixture: weights, means, covariances.
pub fn n_parameters(k: usize, d: usize) -> usize {
    (k - 1) + k * d + k * d * (d + 1) / 2
}

struct Component {
    log_weight: f64,
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    half_log_det: f64,
}

impl Component {
    fn new(weight: f64, mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(cov.clone()).ok_or_else(|| {
            Error::ClusterDegeneracy("covariance is not positive definite after regularization".into())
        })?;
        let chol_l = chol.unpack();
        let half_log_det = chol_l.diagonal().iter().map(|v| v.ln()).sum();
        Ok(Self {
            log_weight: weight.ln(),
            mean,
            cov,
            chol_l,
            half_log_det,
        })
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let d = x.len();
        let mut z = vec![0.0; d];
        let mut maha = 0.0;
        for i in 0..d {
            let mut acc = x[i] - self.mean[i];
            for (j, zj) in z.iter().enumerate().take(i) {
                acc -= self.chol_l[(i, j)] * zj;
            }
            z[i] = acc / self.chol_l[(i, i)];
            maha += z[i] * z[i];
        }
        -0.5 * maha - self.half_log_det - 0.5 * d as f64 * LN_2PI
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Responsibilities (`n × k`, rows sum to 1) and total log-likelihood.
fn e_step(rows: &[Vec<f64>], comps: &[Component]) -> (DMatrix<f64>, f64) {
    let k = comps.len();
    let mut resp = DMatrix::zeros(rows.len(), k);
    let mut ll = 0.0;
    let mut lp = vec![0.0; k];
    for (i, x) in rows.iter().enumerate() {
        for (c, comp) in comps.iter().enumerate() {
            lp[c] = comp.log_weight + comp.log_density(x);
        }
        let lse = log_sum_exp(&lp);
        ll += lse;
        for c in 0..k {
            resp[(i, c)] = (lp[c] - lse).exp();
        }
    }
    (resp, ll)
}

fn m_step(rows: &[Vec<f64>], resp: &DMatrix<f64>) -> Result<Vec<Component>> {
    let (n, k) = resp.shape();
    let d = rows[0].len();
    let nk: Vec<f64> = (0..k).map(|c| resp.column(c).sum() + 10.0 * f64::EPSILON).collect();
    let total: f64 = nk.iter().sum();
    let mut comps = Vec::with_capacity(k);
    for c in 0..k {
        let mut mean = vec![0.0; d];
        for i in 0..n {
            let r = resp[(i, c)];
            for (m, x) in mean.iter_mut().zip(&rows[i]) {
                *m += r * x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk[c]);
        let mut cov = DMatrix::zeros(d, d);
        for i in 0..n {
            let r = resp[(i, c)];
            if r == 0.0 {
                continue;
            }
            for a in 0..d {
                let da = rows[i][a] - mean[a];
                for b in 0..=a {
                    cov[(a, b)] += r * da * (rows[i][b] - mean[b]);
                }
            }
        }
        for a in 0..d {
            for b in 0..=a {
                let v = cov[(a, b)] / nk[c];
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
            cov[(a, a)] += COV_RIDGE;
        }
        comps.push(Component::new(nk[c] / total, mean, cov)?);
    }
    Ok(comps)
}

fn argmax_rows(resp: &DMatrix<f64>) -> Vec<usize> {
    resp.row_iter()
        .map(|r| {
            let mut best = 0;
            for c in 1..r.len() {
                if r[c] > r[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn restart_seed(seed: u64, restart: usize) -> u64 {
    // splitmix64 step so neighbouring seeds do not share K-means inits
    let mut z = seed.wrapping_add((restart as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct EmRun {
    comps: Vec<Component>,
    resp: DMatrix<f64>,
    ll: f64,
    trace: Vec<f64>,
    n_iter: usize,
    converged: bool,
}

fn em(rows: &[Vec<f64>], init_labels: &[usize], k: usize) -> Result<EmRun> {
    let mut resp = DMatrix::zeros(rows.len(), k);
    for (i, &l) in init_labels.iter().enumerate() {
        resp[(i, l)] = 1.0;
    }
    let mut comps = m_step(rows, &resp)?;
    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for it in 0..MAX_ITER {
        let (r, ll) = e_step(rows, &comps);
        trace.push(ll);
        let converged = it > 0 && ll - prev < TOL;
        if converged || it + 1 == MAX_ITER {
            return Ok(EmRun {
                comps,
                resp: r,
                ll,
                trace,
                n_iter: it + 1,
                converged,
            });
        }
        prev = ll;
        resp = r;
        comps = m_step(rows, &resp)?;
    }
    unreachable!("loop always returns on its last iteration")
}

/// Best of `n_restarts` EM runs by final log-likelihood.
pub fn gmm_fit(points: &DMatrix<f64>, k: usize, seed: u64, n_restarts: usize) -> Result<GmmModel> {
    let (n, d) = points.shape();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    if n <= d {
        return Err(Error::DegenerateInput(format!(
            "a full-covariance mixture needs more points than dimensions ({n} ≤ {d})"
        )));
    }
    let rows = rows_of(points);
    let mut best: Option<EmRun> = None;
    for r in 0..n_restarts.max(1) {
        let init = kmeans_fit(points, k, restart_seed(seed, r), 1)?;
        let run = em(&rows, &init.labels, k)?;
        if best.as_ref().is_none_or(|b| run.ll > b.ll) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    let flat: Vec<f64> = best.comps.iter().flat_map(|c| c.mean.iter().copied()).collect();
    Ok(GmmModel {
        k,
        weights: best.comps.iter().map(|c| c.log_weight.exp()).collect(),
        means: DMatrix::from_row_slice(k, d, &flat),
        covariances: best.comps.iter().map(|c| c.cov.clone()).collect(),
        log_likelihood: best.ll,
        labels: argmax_rows(&best.resp),
        ll_trace: best.trace,
        n_iter: best.n_iter,
        converged: best.converged,
    })
}

impl GmmModel {
    fn components(&self) -> Result<Vec<Component>> {
        (0..self.k)
            .map(|c| {
                Component::new(
                    self.weights[c],
                    self.means.row(c).iter().copied().collect(),
                    self.covariances[c].clone(),
                )
            })
            .collect()
    }

    fn check_dim(&self, points: &DMatrix<f64>) -> Result<()> {
        if points.ncols() != self.means.ncols() {
            return Err(Error::Shape {
                expected: self.means.ncols(),
                got: points.ncols(),
            });
        }
        Ok(())
    }

    /// E-step responsibilities of `points` under this model (`n × k`).
    pub fn responsibilities(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(points)?;
        Ok(e_step(&rows_of(points), &self.components()?).0)
    }

    pub fn log_likelihood_of(&self, points: &DMatrix<f64>) -> Result<f64> {
        self.check_dim(points)?;
        Ok(e_step(&rows_of(points), &self.components()?).1)
    }

    pub fn predict(&self, points: &DMatrix<f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.responsibilities(points)?))
    }
}

/// Bayesian information criterion, `-2 LL + p ln n`; lower is better.
pub fn bic(model: &GmmModel, points: &DMatrix<f64>) -> Result<f64> {
    let ll = model.log_likelihood_of(points)?;
    let p = n_parameters(model.k, points.ncols()) as f64;
    Ok(-2.0 * ll + p * (points.nrows() as f64).ln())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use super::*;

    fn blobs(seed: u64, centers: &[(f64, f64)], per: usize, sd: f64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        let mut flat = Vec::new();
        for &(cx, cy) in centers {
            for _ in 0..per {
                flat.push(cx + noise.sample(&mut rng));
                flat.push(cy + noise.sample(&mut rng));
            }
        }
        DMatrix::from_row_slice(centers.len() * per, 2, &flat)
    }

    #[test]
    fn parameter_count() {
        assert_eq!(n_parameters(1, 1), 2);
        assert_eq!(n_parameters(3, 2), 2 + 6 + 9);
        // quadratic growth in d
        assert_eq!(n_parameters(1, 10), 10 + 55);
    }

    #[test]
    fn single_component_is_sample_moments() {
        let pts = blobs(5, &[(1.0, -2.0)], 50, 1.0);
        let m = gmm_fit(&pts, 1, 0, 1).unwrap();
        let n = pts.nrows() as f64;
        let mean = pts.row_mean();
        for j in 0..2 {
            assert!((m.means[(0, j)] - mean[j]).abs() < 1e-9);
        }
        let centered = DMatrix::from_fn(pts.nrows(), 2, |i, j| pts[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / n + DMatrix::identity(2, 2) * COV_RIDGE;
        assert!((&m.covariances[0] - cov).abs().max() < 1e-9);
        assert!((m.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recovers_two_blobs() {
        let pts = blobs(11, &[(0.0, 0.0), (10.0, 10.0)], 100, 1.0);
        let m = gmm_fit(&pts, 2, 3, 3).unwrap();
        let mut means: Vec<(f64, f64)> = (0..2).map(|c| (m.means[(c, 0)], m.means[(c, 1)])).collect();
        means.sort_by(|a, b| a.0.total_cmp(&b.0));
        // standard error of a 100-sample mean with unit sd is 0.1
        assert!(means[0].0.abs() < 0.3 && means[0].1.abs() < 0.3);
        assert!((means[1].0 - 10.0).abs() < 0.3 && (means[1].1 - 10.0).abs() < 0.3);
        for w in &m.weights {
            assert!((w - 0.5).abs() < 0.1);
        }
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for c in &m.covariances {
            assert!(Cholesky::new(c.clone()).is_some());
        }
    }

    #[test]
    fn log_likelihood_never_decreases() {
        let pts = blobs(2, &[(0.0, 0.0), (3.0, 1.0), (1.0, 4.0)], 40, 1.2);
        let m = gmm_fit(&pts, 3, 9, 1).unwrap();
        assert!(m.ll_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        let resp = m.responsibilities(&pts).unwrap();
        for r in resp.row_iter() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bic_single_component_formula() {
        let pts = DMatrix::from_column_slice(5, 1, &[0.0, 1.0, 2.0, 3.0, 4.0]);
        let m = gmm_fit(&pts, 1, 0, 1).unwrap();
        let b = bic(&m, &pts).unwrap();
        let expected = -2.0 * m.log_likelihood + 2.0 * 5f64.ln();
        assert!((b - expected).abs() < 1e-9);
    }

    #[test]
    fn needs_more_points_than_dimensions() {
        let pts = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 3.0]);
        assert!(gmm_fit(&pts, 1, 0, 1).is_err());
    }
}
