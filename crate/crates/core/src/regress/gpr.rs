//! Gaussian process regression with an RBF kernel.
//!
//! `k(x, x') = s2 * exp(-|x - x'|^2 / (2 l^2))` with observation noise `alpha`
//! on the diagonal. Targets are centered before fitting and the mean is added
//! back at prediction time, so far from the data the posterior mean reverts to
//! the training mean. Kernel hyperparameters are optionally chosen by
//! exhaustive search of the log marginal likelihood over a log-spaced grid.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GprHyperparams;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// 13 length scales, `10^-2 ..= 10^3`.
pub fn length_scale_grid() -> Vec<f64> {
    (0..13).map(|i| 10f64.powf(-2.0 + 5.0 * i as f64 / 12.0)).collect()
}

/// 7 signal variances, `10^-1 ..= 10^2`.
pub fn signal_variance_grid() -> Vec<f64> {
    (0..7).map(|j| 10f64.powf(-1.0 + 0.5 * j as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub log_marginal_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprModel {
    pub n: usize,
    pub d: usize,
    /// Training inputs, row-major `n × d`.
    pub train_x: Vec<f64>,
    pub y_mean: f64,
    /// `(K + alpha I)^-1 (y - y_mean)`.
    pub dual_weights: Vec<f64>,
    /// Lower Cholesky factor of `K + alpha I`, row-major `n × n`.
    pub cholesky: Vec<f64>,
    pub length_scale: f64,
    pub signal_variance: f64,
    pub alpha: f64,
    pub log_marginal_likelihood: f64,
}

fn sq_dists(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let an: Vec<f64> = a.row_iter().map(|r| r.norm_squared()).collect();
    let bn: Vec<f64> = b.row_iter().map(|r| r.norm_squared()).collect();
    let mut g = a * b.transpose();
    for i in 0..a.nrows() {
        for j in 0..b.nrows() {
            g[(i, j)] = (an[i] + bn[j] - 2.0 * g[(i, j)]).max(0.0);
        }
    }
    g
}

fn rbf(d2: &DMatrix<f64>, length_scale: f64, signal_variance: f64) -> DMatrix<f64> {
    let c = -0.5 / (length_scale * length_scale);
    d2.map(|v| signal_variance * (c * v).exp())
}

fn factor(mut k: DMatrix<f64>, alpha: f64) -> Result<Cholesky<f64, Dyn>> {
    for i in 0..k.nrows() {
        k[(i, i)] += alpha;
    }
    Cholesky::new(k).ok_or_else(|| Error::Numerical(format!("K + alpha*I is not positive definite (alpha = {alpha})")))
}

fn lml_from_chol(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>) -> (f64, DVector<f64>) {
    let w = chol.solve(y);
    let half_log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let n = y.len() as f64;
    (-0.5 * y.dot(&w) - half_log_det - 0.5 * n * LN_2PI, w)
}

fn check_hyper(hp: &GprHyperparams) -> Result<()> {
    if !(hp.alpha > 0.0) {
        return Err(Error::InvalidHyperparams(format!(
            "alpha must be > 0, got {}",
            hp.alpha
        )));
    }
    if !(hp.length_scale > 0.0) || !(hp.signal_variance > 0.0) {
        return Err(Error::InvalidHyperparams(
            "length_scale and signal_variance must be > 0".into(),
        ));
    }
    Ok(())
}

/// `-1/2 y^T (K + alpha I)^-1 y - 1/2 log|K + alpha I| - n/2 log 2 pi`, with
/// `y` used as given (no centering).
pub fn log_marginal_likelihood(x: &DMatrix<f64>, y: &[f64], hp: &GprHyperparams) -> Result<f64> {
    check_hyper(hp)?;
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch(x.nrows(), y.len()));
    }
    let k = rbf(&sq_dists(x, x), hp.length_scale, hp.signal_variance);
    let chol = factor(k, hp.alpha)?;
    Ok(lml_from_chol(&chol, &DVector::from_column_slice(y)).0)
}

/// Log marginal likelihood at every grid point, length scale major.
/// Points where the Cholesky factorization fails get `-inf`.
pub fn lml_grid(x: &DMatrix<f64>, y: &[f64], alpha: f64) -> Vec<GridPoint> {
    let d2 = sq_dists(x, x);
    let yv = DVector::from_column_slice(y);
    let grid: Vec<(f64, f64)> = length_scale_grid()
        .into_iter()
        .flat_map(|l| signal_variance_grid().into_iter().map(move |s| (l, s)))
        .collect();
    grid.into_par_iter()
        .map(|(l, s)| {
            let lml = factor(rbf(&d2, l, s), alpha)
                .map(|c| lml_from_chol(&c, &yv).0)
                .unwrap_or(f64::NEG_INFINITY);
            GridPoint {
                length_scale: l,
                signal_variance: s,
                log_marginal_likelihood: lml,
            }
        })
        .collect()
}

pub fn fit_gpr(x: &DMatrix<f64>, y: &[f64], hp: &GprHyperparams) -> Result<GprModel> {
    check_hyper(hp)?;
    let (n, d) = x.shape();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = y.iter().map(|v| v - y_mean).collect();

    let (length_scale, signal_variance) = if hp.optimize_kernel {
        let grid = lml_grid(x, &centered, hp.alpha);
        let mut best = 0;
        for (i, g) in grid.iter().enumerate() {
            if g.log_marginal_likelihood > grid[best].log_marginal_likelihood {
                best = i;
            }
        }
        if grid[best].log_marginal_likelihood == f64::NEG_INFINITY {
            return Err(Error::Numerical("no kernel on the grid could be factorized".into()));
        }
        (grid[best].length_scale, grid[best].signal_variance)
    } else {
        (hp.length_scale, hp.signal_variance)
    };

    let k = rbf(&sq_dists(x, x), length_scale, signal_variance);
    let chol = factor(k, hp.alpha)?;
    let (lml, w) = lml_from_chol(&chol, &DVector::from_vec(centered));
    let l = chol.unpack();
    Ok(GprModel {
        n,
        d,
        train_x: x.transpose().as_slice().to_vec(),
        y_mean,
        dual_weights: w.as_slice().to_vec(),
        cholesky: l.transpose().as_slice().to_vec(),
        length_scale,
        signal_variance,
        alpha: hp.alpha,
        log_marginal_likelihood: lml,
    })
}

impl GprModel {
    fn train_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.d, &self.train_x)
    }

    /// Posterior mean.
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let ks = rbf(
            &sq_dists(x, &self.train_matrix()),
            self.length_scale,
            self.signal_variance,
        );
        let w = DVector::from_column_slice(&self.dual_weights);
        (ks * w).iter().map(|v| v + self.y_mean).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(alpha: f64, l: f64, s: f64) -> GprHyperparams {
        GprHyperparams {
            alpha,
            length_scale: l,
            signal_variance: s,
            optimize_kernel: false,
        }
    }

    #[test]
    fn grids_have_the_documented_shape() {
        let l = length_scale_grid();
        assert_eq!(l.len(), 13);
        assert!((l[0] - 0.01).abs() < 1e-15 && (l[12] - 1000.0).abs() < 1e-9);
        let s = signal_variance_grid();
        assert_eq!(s.len(), 7);
        assert!((s[0] - 0.1).abs() < 1e-15 && (s[6] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_lml_matches_closed_form() {
        let x = DMatrix::from_element(1, 1, 0.3);
        let (y, s2, a) = (1.7, 2.0, 0.5);
        let got = log_marginal_likelihood(&x, &[y], &hp(a, 1.0, s2)).unwrap();
        let want = -0.5 * y * y / (s2 + a) - 0.5 * (s2 + a).ln() - 0.5 * LN_2PI;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn interpolates_without_noise() {
        let x = DMatrix::from_column_slice(6, 1, &[0.0, 0.5, 1.1, 2.0, 2.4, 3.0]);
        let y = [1.0, 2.0, 0.5, 3.0, 2.5, 1.5];
        let m = fit_gpr(&x, &y, &hp(1e-10, 0.5, 2.0)).unwrap();
        for (p, t) in m.predict(&x).iter().zip(&y) {
            assert!((p - t).abs() <= 1e-6 * t.abs());
        }
    }

    #[test]
    fn far_queries_revert_to_the_mean() {
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]);
        let y = [3.0, 5.0, 4.0];
        let m = fit_gpr(&x, &y, &hp(0.1, 0.5, 1.0)).unwrap();
        let far = m.predict(&DMatrix::from_element(1, 1, 1e4));
        assert!((far[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair_predicts_the_average_at_the_midpoint() {
        // Two points ±1 with targets a, b. At x* = 0 both kernel entries are
        // equal (c), so the posterior is mean + c*(w1 + w2) and w1 + w2 = 0
        // because the centered targets are ±(a-b)/2 and K is symmetric.
        let x = DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]);
        let y = [2.0, 6.0];
        let m = fit_gpr(&x, &y, &hp(0.3, 0.8, 1.5)).unwrap();
        let p = m.predict(&DMatrix::from_element(1, 1, 0.0));
        assert!((p[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_alpha_rejected() {
        let x = DMatrix::from_element(2, 1, 0.0);
        assert!(matches!(
            fit_gpr(&x, &[1.0, 2.0], &hp(0.0, 1.0, 1.0)),
            Err(Error::InvalidHyperparams(_))
        ));
    }

    #[test]
    fn grid_choice_is_the_argmax() {
        let x = DMatrix::from_fn(15, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 / 5.0);
        let y: Vec<f64> = (0..15).map(|i| (x[(i, 0)] * 1.3).sin() + x[(i, 1)]).collect();
        let m = fit_gpr(
            &x,
            &y,
            &GprHyperparams {
                alpha: 0.01,
                ..GprHyperparams::default()
            },
        )
        .unwrap();
        let mean = y.iter().sum::<f64>() / 15.0;
        let c: Vec<f64> = y.iter().map(|v| v - mean).collect();
        for g in lml_grid(&x, &c, 0.01) {
            assert!(m.log_marginal_likelihood >= g.log_marginal_likelihood - 1e-9);
        }
    }
}
