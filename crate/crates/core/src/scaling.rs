//! Column standardization to zero mean and unit variance.
//!
//! Standard deviations are population (divide by n). A column with zero
//! spread is only centered. Latency is never scaled.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ColumnKind, WorkloadTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub columns: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Fits per-column mean and standard deviation over the concatenated rows of
/// `tables`.
pub fn fit_scaler(tables: &[&WorkloadTable], columns: &[String]) -> Result<ScalerParams> {
    let Some(first) = tables.first() else {
        return Err(Error::InsufficientRows { rows: 0, needed: 1 });
    };
    let schema = first.schema();
    let mut idx = Vec::with_capacity(columns.len());
    for name in columns {
        let c = schema.require(name)?;
        if schema.columns()[c].kind == ColumnKind::Latency {
            return Err(Error::ScalerScope(name.clone()));
        }
        idx.push(c);
    }
    let n: usize = tables.iter().map(|t| t.n_rows()).sum();
    if n < 2 {
        return Err(Error::InsufficientRows { rows: n, needed: 1 });
    }
    let mut data = DMatrix::zeros(n, idx.len());
    let mut r0 = 0;
    for t in tables {
        if !t.schema().same_layout(schema) {
            return Err(Error::Schema(format!(
                "cannot fit a scaler across `{}` and `{}`: schemas differ",
                first.id(),
                t.id()
            )));
        }
        for (j, &c) in idx.iter().enumerate() {
            data.view_mut((r0, j), (t.n_rows(), 1)).copy_from(&t.values().column(c));
        }
        r0 += t.n_rows();
    }
    ScalerParams::fit_columns(columns, &data)
}

/// Applies `params` to the named columns of `table`; other columns pass through.
pub fn apply_scaler(params: &ScalerParams, table: &WorkloadTable) -> Result<WorkloadTable> {
    params.apply(table)
}

impl ScalerParams {
    /// Fits on a matrix whose columns are named by `columns`.
    pub fn fit_columns(columns: &[String], data: &DMatrix<f64>) -> Result<ScalerParams> {
        if columns.len() != data.ncols() {
            return Err(Error::Shape {
                expected: columns.len(),
                got: data.ncols(),
            });
        }
        let n = data.nrows();
        if n < 2 {
            return Err(Error::InsufficientRows { rows: n, needed: 1 });
        }
        let mut means = Vec::with_capacity(columns.len());
        let mut stds = Vec::with_capacity(columns.len());
        for col in data.column_iter() {
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            means.push(mean);
            stds.push(var.sqrt());
        }
        Ok(ScalerParams {
            columns: columns.to_vec(),
            means,
            stds,
        })
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn scale(&self, i: usize, x: f64) -> f64 {
        let centered = x - self.means[i];
        if self.stds[i] > 0.0 {
            centered / self.stds[i]
        } else {
            centered
        }
    }

    pub fn unscale(&self, i: usize, z: f64) -> f64 {
        if self.stds[i] > 0.0 {
            z * self.stds[i] + self.means[i]
        } else {
            z + self.means[i]
        }
    }

    fn map_table(&self, table: &WorkloadTable, f: impl Fn(usize, f64) -> f64) -> Result<WorkloadTable> {
        let schema = table.schema();
        let mut values = table.values().clone();
        for (i, name) in self.columns.iter().enumerate() {
            let c = schema.require(name)?;
            if c == schema.latency_index() {
                return Err(Error::ScalerScope(name.clone()));
            }
            for v in values.column_mut(c).iter_mut() {
                *v = f(i, *v);
            }
        }
        WorkloadTable::with_origins(table.id(), schema.clone(), values, table.origins().to_vec())
    }

    pub fn apply(&self, table: &WorkloadTable) -> Result<WorkloadTable> {
        self.map_table(table, |i, x| self.scale(i, x))
    }

    pub fn inverse(&self, table: &WorkloadTable) -> Result<WorkloadTable> {
        self.map_table(table, |i, z| self.unscale(i, z))
    }

    /// Scales a matrix whose columns are named by `names`. Every name must be
    /// covered by the scaler.
    pub fn transform(&self, names: &[String], data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if names.len() != data.ncols() {
            return Err(Error::Shape {
                expected: names.len(),
                got: data.ncols(),
            });
        }
        let mut out = data.clone();
        for (j, name) in names.iter().enumerate() {
            let i = self.index_of(name).ok_or_else(|| Error::UnknownColumn(name.clone()))?;
            for v in out.column_mut(j).iter_mut() {
                *v = self.scale(i, *v);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::ingest::{ColumnSchema, Schema};

    fn table(rows: &[[f64; 3]]) -> WorkloadTable {
        let schema = Arc::new(
            Schema::new(vec![
                ColumnSchema::new("a", ColumnKind::Knob),
                ColumnSchema::new("b", ColumnKind::Metric),
                ColumnSchema::new("latency", ColumnKind::Latency),
            ])
            .unwrap(),
        );
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        WorkloadTable::new("t", schema, DMatrix::from_row_slice(rows.len(), 3, &flat)).unwrap()
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn two_values_scale_to_plus_minus_one() {
        let t = table(&[[2.0, 5.0, 1.0], [4.0, 5.0, 2.0]]);
        let p = fit_scaler(&[&t], &names(&["a", "b"])).unwrap();
        assert_eq!(p.means, vec![3.0, 5.0]);
        assert_eq!(p.stds, vec![1.0, 0.0]);
        let s = apply_scaler(&p, &t).unwrap();
        assert_eq!(s.column("a").unwrap(), vec![-1.0, 1.0]);
        // zero-variance column is centered only
        assert_eq!(s.column("b").unwrap(), vec![0.0, 0.0]);
        assert_eq!(s.latency(), vec![1.0, 2.0]);
    }

    #[test]
    fn standardized_input_is_unchanged() {
        let t = table(&[[-1.0, 1.0, 1.0], [1.0, -1.0, 2.0]]);
        let p = fit_scaler(&[&t], &names(&["a", "b"])).unwrap();
        let s = p.apply(&t).unwrap();
        assert_eq!(s.values(), t.values());
    }

    #[test]
    fn latency_cannot_be_scaled() {
        let t = table(&[[1.0, 2.0, 1.0], [2.0, 3.0, 2.0]]);
        assert!(matches!(
            fit_scaler(&[&t], &names(&["a", "latency"])),
            Err(Error::ScalerScope(_))
        ));
    }

    #[test]
    fn needs_two_rows() {
        let t = table(&[[1.0, 2.0, 1.0]]);
        assert!(matches!(
            fit_scaler(&[&t], &names(&["a"])),
            Err(Error::InsufficientRows { .. })
        ));
    }

    proptest! {
        #[test]
        fn inverse_recovers_input(rows in prop::collection::vec(
            (-1e6f64..1e6, -1e3f64..1e3, 0.1f64..1e4), 2..20)) {
            let rows: Vec<[f64; 3]> = rows.into_iter().map(|(a, b, l)| [a, b, l]).collect();
            let t = table(&rows);
            let p = fit_scaler(&[&t], &names(&["a", "b"])).unwrap();
            let back = p.inverse(&p.apply(&t).unwrap()).unwrap();
            for (x, y) in t.values().iter().zip(back.values().iter()) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
    }
}
