//! Error metrics and report files.
//!
//! MAPE is reported in percent. The network's training loss uses the
//! fractional form; see [`crate::regress::mlp`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths(y_true: &[f64], y_pred: &[f64]) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(Error::InsufficientRows { rows: 0, needed: 0 });
    }
    Ok(())
}

/// `100 * mean(|y_true - y_pred| / |y_true|)`.
pub fn mape(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    if y_true.contains(&0.0) {
        return Err(Error::UndefinedMape);
    }
    let s: f64 = y_true.iter().zip(y_pred).map(|(t, p)| ((t - p) / t).abs()).sum();
    Ok(100.0 * s / y_true.len() as f64)
}

pub fn mse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    let s: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p).powi(2)).sum();
    Ok(s / y_true.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    pub id: String,
    pub y_true: f64,
    pub y_pred: f64,
    pub abs_pct_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Percent; `None` for an empty report.
    pub mape: Option<f64>,
    pub mse: Option<f64>,
    pub n: usize,
    pub per_row: Vec<RowError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl EvalReport {
    pub fn empty() -> Self {
        Self {
            mape: None,
            mse: None,
            n: 0,
            per_row: Vec::new(),
        }
    }

    pub fn new(ids: &[String], y_true: &[f64], y_pred: &[f64]) -> Result<Self> {
        if ids.len() != y_true.len() {
            return Err(Error::LengthMismatch(ids.len(), y_true.len()));
        }
        if ids.is_empty() {
            if !y_pred.is_empty() {
                return Err(Error::LengthMismatch(0, y_pred.len()));
            }
            return Ok(Self::empty());
        }
        let mape = mape(y_true, y_pred)?;
        let mse = mse(y_true, y_pred)?;
        let per_row = ids
            .iter()
            .zip(y_true.iter().zip(y_pred))
            .map(|(id, (&t, &p))| RowError {
                id: id.clone(),
                y_true: t,
                y_pred: p,
                abs_pct_err: 100.0 * ((t - p) / t).abs(),
            })
            .collect();
        Ok(Self {
            mape: Some(mape),
            mse: Some(mse),
            n: ids.len(),
            per_row,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.mape.is_none_or(f64::is_finite) && self.mse.is_none_or(f64::is_finite)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "y_true", "y_pred", "abs_pct_err"])
            .map_err(csv_err)?;
        for r in &self.per_row {
            w.write_record([
                r.id.clone(),
                r.y_true.to_string(),
                r.y_pred.to_string(),
                r.abs_pct_err.to_string(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Rebuilds a report from its CSV form (aggregates are recomputed).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let (mut ids, mut t, mut p) = (Vec::new(), Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let num = |i: usize| {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("report column {i}: {e}")))
            };
            ids.push(rec[0].to_owned());
            t.push(num(1)?);
            p.push(num(2)?);
        }
        Self::new(&ids, &t, &p)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// Writes `report` to `path` as a JSON summary or per-row CSV.
pub fn emit_report(report: &EvalReport, format: ReportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ReportFormat::Json => serde_json::to_string_pretty(report)? + "\n",
        ReportFormat::Csv => report.to_csv()?,
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
