//! Latency regressors behind one fit/predict contract.
//!
//! Three model families are available: Gaussian process regression with an RBF
//! kernel, a random forest of CART trees, and a five-layer perceptron trained
//! on the MAPE loss. Fitted models serialize to a versioned JSON document.

pub mod forest;
pub mod gpr;
pub mod mlp;

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use forest::ForestModel;
pub use gpr::{log_marginal_likelihood, GprModel};
pub use mlp::MlpModel;

use crate::error::{Error, Result};

/// Version written into saved model documents.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegressorKind {
    Gpr,
    RandomForest,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GprHyperparams {
    /// Noise added to the kernel diagonal.
    pub alpha: f64,
    pub length_scale: f64,
    pub signal_variance: f64,
    /// Pick `length_scale` and `signal_variance` by grid search on the log
    /// marginal likelihood; the fixed values above are then ignored.
    pub optimize_kernel: bool,
}

impl Default for GprHyperparams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            length_scale: 1.0,
            signal_variance: 1.0,
            optimize_kernel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfHyperparams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub bootstrap: bool,
}

impl Default for RfHyperparams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 50,
            min_samples_split: 2,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Layer count is input + hidden + output, so five layers means exactly three
/// hidden widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpHyperparams {
    pub hidden_widths: Vec<usize>,
    pub epochs: usize,
    pub adam: AdamParams,
}

impl Default for MlpHyperparams {
    fn default() -> Self {
        Self {
            hidden_widths: vec![64, 64, 64],
            epochs: 500,
            adam: AdamParams::default(),
        }
    }
}

pub const MLP_LAYERS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Hyperparams {
    #[serde(rename = "gpr")]
    Gpr(GprHyperparams),
    #[serde(rename = "rf")]
    RandomForest(RfHyperparams),
    #[serde(rename = "nn")]
    Mlp(MlpHyperparams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorSpec {
    #[serde(flatten)]
    pub hyperparams: Hyperparams,
    #[serde(default)]
    pub seed: u64,
}

impl Default for RegressorSpec {
    fn default() -> Self {
        Self::gpr(GprHyperparams::default())
    }
}

impl RegressorSpec {
    pub fn gpr(hp: GprHyperparams) -> Self {
        Self {
            hyperparams: Hyperparams::Gpr(hp),
            seed: 0,
        }
    }

    pub fn random_forest(hp: RfHyperparams, seed: u64) -> Self {
        Self {
            hyperparams: Hyperparams::RandomForest(hp),
            seed,
        }
    }

    pub fn mlp(hp: MlpHyperparams, seed: u64) -> Self {
        Self {
            hyperparams: Hyperparams::Mlp(hp),
            seed,
        }
    }

    pub fn kind(&self) -> RegressorKind {
        match self.hyperparams {
            Hyperparams::Gpr(_) => RegressorKind::Gpr,
            Hyperparams::RandomForest(_) => RegressorKind::RandomForest,
            Hyperparams::Mlp(_) => RegressorKind::Mlp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidHyperparams(m));
        match &self.hyperparams {
            Hyperparams::Gpr(h) => {
                if !(h.alpha > 0.0) {
                    return bad(format!("alpha must be > 0, got {}", h.alpha));
                }
                if !(h.length_scale > 0.0) || !(h.signal_variance > 0.0) {
                    return bad("length_scale and signal_variance must be > 0".into());
                }
            }
            Hyperparams::RandomForest(h) => {
                if h.n_trees == 0 || h.max_depth == 0 {
                    return bad("n_trees and max_depth must be ≥ 1".into());
                }
            }
            Hyperparams::Mlp(h) => {
                if h.hidden_widths.len() + 2 != MLP_LAYERS {
                    return bad(format!(
                        "the network has {MLP_LAYERS} layers, so exactly {} hidden widths are needed",
                        MLP_LAYERS - 2
                    ));
                }
                if h.hidden_widths.contains(&0) {
                    return bad("hidden widths must be ≥ 1".into());
                }
                let a = &h.adam;
                if !(a.learning_rate > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
                    return bad("invalid Adam parameters".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FittedState {
    Gpr(GprModel),
    Forest(ForestModel),
    Mlp(MlpModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedRegressor {
    pub format_version: u32,
    pub spec: RegressorSpec,
    pub feature_names: Vec<String>,
    pub state: FittedState,
}

/// Fits the model described by `spec` on rows of `x` against latency `y`.
pub fn fit(spec: &RegressorSpec, x: &DMatrix<f64>, y: &[f64], feature_names: &[String]) -> Result<TrainedRegressor> {
    spec.validate()?;
    let (n, d) = x.shape();
    if n != y.len() {
        return Err(Error::LengthMismatch(n, y.len()));
    }
    if feature_names.len() != d {
        return Err(Error::Shape {
            expected: feature_names.len(),
            got: d,
        });
    }
    if n < 2 {
        return Err(Error::InsufficientRows { rows: n, needed: 1 });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite training value".into()));
    }
    let state = match &spec.hyperparams {
        Hyperparams::Gpr(h) => FittedState::Gpr(gpr::fit_gpr(x, y, h)?),
        Hyperparams::RandomForest(h) => FittedState::Forest(forest::fit_forest(x, y, h, spec.seed)),
        Hyperparams::Mlp(h) => FittedState::Mlp(mlp::fit_mlp(x, y, h, spec.seed)?),
    };
    Ok(TrainedRegressor {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        feature_names: feature_names.to_vec(),
        state,
    })
}

impl TrainedRegressor {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::Shape {
                expected: self.n_features(),
                got: x.ncols(),
            });
        }
        Ok(match &self.state {
            FittedState::Gpr(m) => m.predict(x),
            FittedState::Forest(m) => m.predict(x),
            FittedState::Mlp(m) => m.predict(x),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedRegressor = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (DMatrix<f64>, Vec<f64>, Vec<String>) {
        let x = DMatrix::from_fn(12, 2, |i, j| (i as f64 * 0.37 + j as f64 * 1.3).sin());
        let y = (0..12).map(|i| 10.0 + x[(i, 0)] * 3.0 - x[(i, 1)]).collect();
        (x, y, vec!["a".into(), "b".into()])
    }

    #[test]
    fn spec_json_is_flat_and_tagged() {
        let spec: RegressorSpec = serde_json::from_str(r#"{"kind":"rf","n_trees":7,"seed":3}"#).unwrap();
        assert_eq!(spec.kind(), RegressorKind::RandomForest);
        assert_eq!(spec.seed, 3);
        match spec.hyperparams {
            Hyperparams::RandomForest(h) => {
                assert_eq!(h.n_trees, 7);
                assert_eq!(h.max_depth, 50);
            }
            _ => unreachable!(),
        }
        let gpr: RegressorSpec = serde_json::from_str(r#"{"kind":"gpr"}"#).unwrap();
        assert_eq!(gpr, RegressorSpec::default());
    }

    #[test]
    fn mlp_must_have_five_layers() {
        let spec = RegressorSpec::mlp(
            MlpHyperparams {
                hidden_widths: vec![8, 8],
                ..MlpHyperparams::default()
            },
            0,
        );
        assert!(matches!(spec.validate(), Err(Error::InvalidHyperparams(_))));
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let (x, y, names) = data();
        let m = fit(&RegressorSpec::default(), &x, &y, &names).unwrap();
        assert!(matches!(
            m.predict(&DMatrix::zeros(1, 3)),
            Err(Error::Shape { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn saved_models_predict_identically() {
        let (x, y, names) = data();
        let specs = [
            RegressorSpec::default(),
            RegressorSpec::random_forest(
                RfHyperparams {
                    n_trees: 5,
                    ..Default::default()
                },
                1,
            ),
            RegressorSpec::mlp(
                MlpHyperparams {
                    epochs: 20,
                    ..Default::default()
                },
                2,
            ),
        ];
        for spec in specs {
            let m = fit(&spec, &x, &y, &names).unwrap();
            let back = TrainedRegressor::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
            assert_eq!(back.spec, spec);
        }
    }
}
