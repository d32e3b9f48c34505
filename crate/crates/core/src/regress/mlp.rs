//! Fully connected network trained full-batch with Adam on the MAPE loss.
//!
//! Hidden layers use ReLU; the output layer is linear. The loss is the
//! fractional mean absolute percentage error `mean(|y - y_hat| / |y|)`, which
//! is invariant to rescaling both `y` and `y_hat`. Training therefore runs on
//! `y / s` with `s = mean(|y|)` and predictions are multiplied back by `s`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::MlpHyperparams;
use crate::error::{Error, Result};

/// Weights and biases for a given layer-width list, flattened layer by layer
/// as `W` (row-major, `out × in`) followed by `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub widths: Vec<usize>,
    pub params: Vec<f64>,
}

impl Network {
    pub fn n_params(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// He-normal weights, zero biases.
    pub fn init(widths: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut params = Vec::with_capacity(Self::n_params(widths));
        for w in widths.windows(2) {
            let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("finite sd");
            params.extend((0..w[0] * w[1]).map(|_| normal.sample(rng)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Self {
            widths: widths.to_vec(),
            params,
        }
    }

    fn layer(&self, l: usize) -> (DMatrix<f64>, &[f64]) {
        let mut off = 0;
        for w in self.widths.windows(2).take(l) {
            off += w[1] * w[0] + w[1];
        }
        let (i, o) = (self.widths[l], self.widths[l + 1]);
        let w = DMatrix::from_row_slice(o, i, &self.params[off..off + o * i]);
        (w, &self.params[off + o * i..off + o * i + o])
    }

    fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Pre-activations of every layer; the last one is the network output.
    fn forward_all(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut zs = Vec::with_capacity(self.n_layers());
        let mut a = x.clone();
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let mut z = &a * w.transpose();
            for mut row in z.row_iter_mut() {
                for (v, bi) in row.iter_mut().zip(b) {
                    *v += bi;
                }
            }
            a = if l + 1 < self.n_layers() {
                z.map(|v| v.max(0.0))
            } else {
                z.clone()
            };
            zs.push(z);
        }
        zs
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.forward_all(x)
            .pop()
            .expect("at least one layer")
            .iter()
            .copied()
            .collect()
    }

    /// Fractional MAPE of the raw network output against `y`.
    pub fn mape_loss(&self, x: &DMatrix<f64>, y: &[f64]) -> f64 {
        let out = self.forward(x);
        out.iter().zip(y).map(|(p, t)| (t - p).abs() / t.abs()).sum::<f64>() / y.len() as f64
    }

    /// Loss and its gradient with respect to `params`.
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>, y: &[f64]) -> (f64, Vec<f64>) {
        let n = y.len() as f64;
        let zs = self.forward_all(x);
        let out = zs.last().expect("output layer");
        let mut loss = 0.0;
        let mut delta = DMatrix::zeros(out.nrows(), 1);
        for (i, &t) in y.iter().enumerate() {
            let r = out[(i, 0)] - t;
            loss += r.abs() / t.abs();
            let sign = if r == 0.0 { 0.0 } else { r.signum() };
            delta[(i, 0)] = sign / (t.abs() * n);
        }
        loss /= n;

        let mut grad = vec![0.0; self.params.len()];
        let mut offsets = Vec::with_capacity(self.n_layers());
        let mut off = 0;
        for w in self.widths.windows(2) {
            offsets.push(off);
            off += w[1] * w[0] + w[1];
        }
        for l in (0..self.n_layers()).rev() {
            let input = if l == 0 {
                x.clone()
            } else {
                zs[l - 1].map(|v| v.max(0.0))
            };
            let gw = delta.transpose() * &input;
            let (o, i) = (self.widths[l + 1], self.widths[l]);
            let base = offsets[l];
            for r in 0..o {
                for c in 0..i {
                    grad[base + r * i + c] = gw[(r, c)];
                }
                grad[base + o * i + r] = delta.column(r).sum();
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                let mut back = &delta * w;
                let z = &zs[l - 1];
                back.zip_apply(z, |g, zv| {
                    if zv <= 0.0 {
                        *g = 0.0
                    }
                });
                delta = back;
            }
        }
        (loss, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub network: Network,
    pub target_scale: f64,
    /// Loss before every epoch, plus the final loss.
    #[serde(default)]
    pub loss_trace: Vec<f64>,
}

pub fn fit_mlp(x: &DMatrix<f64>, y: &[f64], hp: &MlpHyperparams, seed: u64) -> Result<MlpModel> {
    if let Some(bad) = y.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidTarget(format!(
            "MAPE loss needs strictly positive targets, found {bad}"
        )));
    }
    let scale = y.iter().map(|v| v.abs()).sum::<f64>() / y.len() as f64;
    let yn: Vec<f64> = y.iter().map(|v| v / scale).collect();

    let mut widths = vec![x.ncols()];
    widths.extend(&hp.hidden_widths);
    widths.push(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::init(&widths, &mut rng);
    // start from the mean target
    let last = net.params.len() - 1;
    net.params[last] = yn.iter().sum::<f64>() / yn.len() as f64;

    let a = hp.adam;
    let mut m = vec![0.0; net.params.len()];
    let mut v = vec![0.0; net.params.len()];
    let mut trace = Vec::with_capacity(hp.epochs + 1);
    for t in 1..=hp.epochs {
        let (loss, grad) = net.loss_and_gradient(x, &yn);
        trace.push(loss);
        let c1 = 1.0 - a.beta1.powi(t as i32);
        let c2 = 1.0 - a.beta2.powi(t as i32);
        for (j, g) in grad.iter().enumerate() {
            m[j] = a.beta1 * m[j] + (1.0 - a.beta1) * g;
            v[j] = a.beta2 * v[j] + (1.0 - a.beta2) * g * g;
            net.params[j] -= a.learning_rate * (m[j] / c1) / ((v[j] / c2).sqrt() + a.epsilon);
        }
    }
    trace.push(net.mape_loss(x, &yn));
    if net.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numerical("network weights diverged".into()));
    }
    Ok(MlpModel {
        network: net,
        target_scale: scale,
        loss_trace: trace,
    })
}

impl MlpModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.network
            .forward(x)
            .into_iter()
            .map(|v| v * self.target_scale)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count() {
        assert_eq!(Network::n_params(&[3, 4, 4, 4, 1]), 16 + 20 + 20 + 5);
    }

    #[test]
    fn rejects_non_positive_targets() {
        let x = DMatrix::from_element(2, 1, 0.0);
        assert!(matches!(
            fit_mlp(&x, &[1.0, 0.0], &MlpHyperparams::default(), 0),
            Err(Error::InvalidTarget(_))
        ));
    }

    #[test]
    fn mape_loss_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::init(&[2, 3, 3, 3, 1], &mut rng);
        let x = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, -0.3, 0.4, 0.5, -0.6]);
        let out = net.forward(&x);
        let y: Vec<f64> = out.iter().map(|v| v + 0.5).collect();
        let loss = net.mape_loss(&x, &y);
        let want = out.iter().zip(&y).map(|(p, t)| (t - p).abs() / t.abs()).sum::<f64>() / 3.0;
        assert!((loss - want).abs() < 1e-15);
    }
}
