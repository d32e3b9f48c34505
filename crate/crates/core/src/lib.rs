//! Automated DBMS tuning toolkit.
//!
//! The crate covers the offline half of a knob-tuning service: it ingests
//! workload observation files, prunes redundant runtime metrics with factor
//! analysis followed by K-means or GMM clustering, maps unseen workloads onto
//! the most similar historical workload and predicts query latency with a
//! Gaussian process, a random forest or a small neural network.
//!
//! Module map:
//!
//! - [`ingest`] / [`scaling`]: CSV ingestion, constant-column removal, holdout
//!   splits and standardization.
//! - [`factor`] / [`pruning`]: factor analysis of the metric correlation matrix
//!   and representative-metric selection.
//! - [`cluster`]: K-means, full-covariance GMM, silhouette and BIC.
//! - [`regress`]: latency regressors behind one fit/predict contract.
//! - [`mapping`]: workload scoring, mapping and augmentation.
//! - [`pipeline`]: the two-stage validation/test protocol.
//! - [`eval`]: MAPE, MSE and report files.
//! - [`synth`]: synthetic corpora with planted structure and a latency oracle.
//! - [`cli`]: the `knobforge` command line.

pub mod cli;
pub mod cluster;
pub mod error;
pub mod eval;
pub mod factor;
pub mod ingest;
pub mod mapping;
pub mod pipeline;
pub mod pruning;
pub mod regress;
pub mod scaling;
pub mod synth;

pub use error::{Error, Result};
