//! Workload observation files and the cleanup applied when they are ingested.
//!
//! A workload file is a comma-separated table with a header row. Each column
//! is a knob, a runtime metric or the latency target; the optional
//! `workload_id` column partitions rows into workloads (files without it are
//! one workload named after the file stem). Boolean knob columns written as
//! `true`/`false`, `on`/`off` or `0`/`1` are encoded as 0/1 on ingest.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the column that partitions a file into workloads.
pub const WORKLOAD_ID_COLUMN: &str = "workload_id";

/// Column treated as latency when the schema hint does not name one.
pub const DEFAULT_LATENCY_COLUMN: &str = "latency";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Knob,
    Metric,
    Latency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Numeric,
    BooleanEncoded,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    pub encoding: Encoding,
}

impl ColumnSchema {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
            encoding: Encoding::Numeric,
        }
    }
}

/// Ordered column list with unique names and exactly one latency column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ColumnSchema>", into = "Vec<ColumnSchema>")]
pub struct Schema {
    columns: Vec<ColumnSchema>,
    latency: usize,
}

impl TryFrom<Vec<ColumnSchema>> for Schema {
    type Error = Error;

    fn try_from(columns: Vec<ColumnSchema>) -> Result<Self> {
        Schema::new(columns)
    }
}

impl From<Schema> for Vec<ColumnSchema> {
    fn from(schema: Schema) -> Self {
        schema.columns
    }
}

impl Schema {
    pub fn new(columns: Vec<ColumnSchema>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        let latency: Vec<usize> = columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Latency)
            .map(|(i, _)| i)
            .collect();
        match latency.as_slice() {
            [i] => Ok(Self { latency: *i, columns }),
            [] => Err(Error::Schema("missing latency column".into())),
            _ => Err(Error::Schema(format!(
                "{} columns marked as latency, expected exactly one",
                latency.len()
            ))),
        }
    }

    pub fn columns(&self) -> &[ColumnSchema] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name).ok_or_else(|| Error::UnknownColumn(name.to_owned()))
    }

    pub fn latency_index(&self) -> usize {
        self.latency
    }

    pub fn latency_name(&self) -> &str {
        &self.columns[self.latency].name
    }

    pub fn indices_of(&self, kind: ColumnKind) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == kind)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn names_of(&self, kind: ColumnKind) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.kind == kind)
            .map(|c| c.name.clone())
            .collect()
    }

    /// Indices of every non-latency column, in schema order.
    pub fn feature_indices(&self) -> Vec<usize> {
        (0..self.columns.len()).filter(|&i| i != self.latency).collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.feature_indices()
            .into_iter()
            .map(|i| self.columns[i].name.clone())
            .collect()
    }

    /// Same names, order and kinds. Encodings may differ between files.
    pub fn same_layout(&self, other: &Schema) -> bool {
        self.columns.len() == other.columns.len()
            && self
                .columns
                .iter()
                .zip(&other.columns)
                .all(|(a, b)| a.name == b.name && a.kind == b.kind)
    }

    /// Keeps the columns accepted by `keep`; the latency column always stays.
    pub fn retain(&self, mut keep: impl FnMut(&ColumnSchema) -> bool) -> Schema {
        let columns: Vec<ColumnSchema> = self
            .columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Latency || keep(c))
            .cloned()
            .collect();
        Schema::new(columns).expect("latency column is always retained")
    }
}

/// Identity of an observation: the workload it was recorded in and its
/// file-order row index within that workload.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowId {
    pub workload: String,
    pub index: usize,
}

impl RowId {
    pub fn new(workload: impl Into<String>, index: usize) -> Self {
        Self {
            workload: workload.into(),
            index,
        }
    }

    /// Row `index` of `workload` in a held-out test file. The label differs
    /// from the workload's own rows, which share the same indices.
    pub fn held_out(workload: &str, index: usize) -> Self {
        Self::new(format!("{workload}@test"), index)
    }
}

impl fmt::Display for RowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.workload, self.index)
    }
}

/// One workload's observations. Rows are knob configurations, columns follow
/// the schema order. Each row remembers where it was originally recorded so
/// rows can be traced through holdout splits and augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadTable {
    id: String,
    schema: Arc<Schema>,
    values: DMatrix<f64>,
    origins: Vec<RowId>,
}

impl WorkloadTable {
    pub fn new(id: impl Into<String>, schema: Arc<Schema>, values: DMatrix<f64>) -> Result<Self> {
        let id = id.into();
        let origins = (0..values.nrows()).map(|i| RowId::new(&id, i)).collect();
        Self::with_origins(id, schema, values, origins)
    }

    pub fn with_origins(
        id: impl Into<String>,
        schema: Arc<Schema>,
        values: DMatrix<f64>,
        origins: Vec<RowId>,
    ) -> Result<Self> {
        let id = id.into();
        if values.ncols() != schema.len() {
            return Err(Error::Shape {
                expected: schema.len(),
                got: values.ncols(),
            });
        }
        if values.nrows() == 0 {
            return Err(Error::InsufficientRows { rows: 0, needed: 0 });
        }
        if origins.len() != values.nrows() {
            return Err(Error::LengthMismatch(origins.len(), values.nrows()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::DegenerateInput(format!(
                "workload `{id}` has a non-finite value in row {r}, column `{}`",
                schema.columns()[c].name
            )));
        }
        let lat = schema.latency_index();
        if let Some(r) = (0..values.nrows()).find(|&r| values[(r, lat)] <= 0.0) {
            return Err(Error::DegenerateInput(format!(
                "workload `{id}` row {r}: latency must be strictly positive"
            )));
        }
        Ok(Self {
            id,
            schema,
            values,
            origins,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn origins(&self) -> &[RowId] {
        &self.origins
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.values.row(r).iter().copied().collect()
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.schema.require(name)?;
        Ok(self.values.column(c).iter().copied().collect())
    }

    pub fn latency(&self) -> Vec<f64> {
        self.values
            .column(self.schema.latency_index())
            .iter()
            .copied()
            .collect()
    }

    /// Knob values of one row, in schema order.
    pub fn knob_tuple(&self, r: usize) -> Vec<f64> {
        self.schema
            .indices_of(ColumnKind::Knob)
            .into_iter()
            .map(|c| self.values[(r, c)])
            .collect()
    }

    /// Non-latency values as an `n_rows × n_features` matrix.
    pub fn features(&self) -> DMatrix<f64> {
        let idx = self.schema.feature_indices();
        self.values.select_columns(idx.iter())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<WorkloadTable> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n_rows()) {
            return Err(Error::InsufficientRows {
                rows: self.n_rows(),
                needed: bad,
            });
        }
        let values = self.values.select_rows(rows.iter());
        let origins = rows.iter().map(|&r| self.origins[r].clone()).collect();
        WorkloadTable::with_origins(self.id.clone(), self.schema.clone(), values, origins)
    }

    /// Reorders/subsets columns to match `schema`, looking columns up by name.
    pub fn project(&self, schema: Arc<Schema>) -> Result<WorkloadTable> {
        let idx = schema
            .columns()
            .iter()
            .map(|c| self.schema.require(&c.name))
            .collect::<Result<Vec<_>>>()?;
        let values = self.values.select_columns(idx.iter());
        WorkloadTable::with_origins(self.id.clone(), schema, values, self.origins.clone())
    }

    /// Same rows under a new workload id (origins are kept).
    pub fn renamed(&self, id: impl Into<String>) -> WorkloadTable {
        WorkloadTable {
            id: id.into(),
            ..self.clone()
        }
    }

    /// Stacks tables that share a schema layout into one table named `id`.
    pub fn concat<'a>(
        id: impl Into<String>,
        tables: impl IntoIterator<Item = &'a WorkloadTable>,
    ) -> Result<WorkloadTable> {
        let tables: Vec<&WorkloadTable> = tables.into_iter().collect();
        let first = tables.first().ok_or(Error::InsufficientRows { rows: 0, needed: 0 })?;
        let schema = first.schema.clone();
        let mut rows = Vec::new();
        let mut origins = Vec::new();
        for t in &tables {
            if !t.schema.same_layout(&schema) {
                return Err(Error::Schema(format!(
                    "cannot stack `{}` onto `{}`: schemas differ",
                    t.id, first.id
                )));
            }
            for r in 0..t.n_rows() {
                rows.extend(t.values.row(r).iter().copied());
                origins.push(t.origins[r].clone());
            }
        }
        let values = DMatrix::from_row_slice(origins.len(), schema.len(), &rows);
        WorkloadTable::with_origins(id, schema, values, origins)
    }
}

/// All workloads of one corpus, keyed (and iterated) by workload id.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadRepository {
    schema: Arc<Schema>,
    tables: BTreeMap<String, WorkloadTable>,
}

impl WorkloadRepository {
    pub fn new(schema: Arc<Schema>, tables: Vec<WorkloadTable>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for t in tables {
            if !t.schema.same_layout(&schema) {
                return Err(Error::Schema(format!(
                    "workload `{}` does not share the repository schema",
                    t.id
                )));
            }
            let id = t.id.clone();
            if map.insert(id.clone(), t).is_some() {
                return Err(Error::Schema(format!("duplicate workload id `{id}`")));
            }
        }
        Ok(Self { schema, tables: map })
    }

    pub fn empty(schema: Arc<Schema>) -> Self {
        Self {
            schema,
            tables: BTreeMap::new(),
        }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&WorkloadTable> {
        self.tables.get(id)
    }

    pub fn require(&self, id: &str) -> Result<&WorkloadTable> {
        self.get(id).ok_or_else(|| Error::Key(id.to_owned()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }

    pub fn tables(&self) -> impl Iterator<Item = &WorkloadTable> {
        self.tables.values()
    }

    pub fn total_rows(&self) -> usize {
        self.tables.values().map(WorkloadTable::n_rows).sum()
    }

    /// Adds a table, replacing none: duplicate ids are a schema error.
    pub fn insert(&mut self, table: WorkloadTable) -> Result<()> {
        if !table.schema.same_layout(&self.schema) {
            return Err(Error::Schema(format!(
                "workload `{}` does not share the repository schema",
                table.id
            )));
        }
        if self.tables.contains_key(&table.id) {
            return Err(Error::Schema(format!("duplicate workload id `{}`", table.id)));
        }
        self.tables.insert(table.id.clone(), table);
        Ok(())
    }

    /// Projects every table onto `schema` (columns matched by name).
    pub fn project(&self, schema: Arc<Schema>) -> Result<WorkloadRepository> {
        let tables = self
            .tables
            .values()
            .map(|t| t.project(schema.clone()))
            .collect::<Result<Vec<_>>>()?;
        WorkloadRepository::new(schema, tables)
    }

    /// Every row of every table, in workload-id order.
    pub fn stacked(&self) -> DMatrix<f64> {
        let n = self.total_rows();
        let mut out = DMatrix::zeros(n, self.schema.len());
        let mut r0 = 0;
        for t in self.tables.values() {
            out.rows_mut(r0, t.n_rows()).copy_from(&t.values);
            r0 += t.n_rows();
        }
        out
    }
}

/// Column name → kind. Columns not mentioned default to metrics, except a
/// column literally named `latency`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SchemaHint(pub BTreeMap<String, ColumnKind>);

impl SchemaHint {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            file: path.to_owned(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }

    pub fn kind_of(&self, column: &str) -> ColumnKind {
        match self.0.get(column) {
            Some(kind) => *kind,
            None if column == DEFAULT_LATENCY_COLUMN => ColumnKind::Latency,
            None => ColumnKind::Metric,
        }
    }
}

struct RawFile {
    path: PathBuf,
    header: Vec<String>,
    records: Vec<(u64, Vec<String>)>,
}

fn read_raw(path: &Path) -> Result<RawFile> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        records.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(RawFile {
        path: path.to_owned(),
        header,
        records,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::Parse {
            file: path.to_owned(),
            line,
            message: format!("ragged row: expected {expected_len} fields, found {len}"),
        },
        other => Error::Parse {
            file: path.to_owned(),
            line,
            message: format!("{other:?}"),
        },
    }
}

fn boolean_token(cell: &str) -> Option<f64> {
    match cell.to_ascii_lowercase().as_str() {
        "true" | "on" | "1" => Some(1.0),
        "false" | "off" | "0" => Some(0.0),
        _ => None,
    }
}

fn parse_cell(cell: &str, boolean: bool) -> std::result::Result<f64, String> {
    if boolean {
        if let Some(v) = boolean_token(cell) {
            return Ok(v);
        }
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(format!("non-finite value `{cell}`")),
        Err(_) if cell.is_empty() => Err("missing value".to_owned()),
        Err(_) => Err(format!("non-numeric value `{cell}`")),
    }
}

/// Loads CSV files into a repository with one table per distinct workload id.
///
/// Files must share a header. Rows of a workload spread over several files are
/// concatenated in path order, then file order.
pub fn load_repository(paths: &[PathBuf], hint: &SchemaHint) -> Result<WorkloadRepository> {
    let raws = paths.par_iter().map(|p| read_raw(p)).collect::<Result<Vec<_>>>()?;
    let Some(first) = raws.first() else {
        return Err(Error::Schema("no input files".into()));
    };
    for raw in &raws[1..] {
        if raw.header != first.header {
            return Err(Error::Schema(format!(
                "{}: header differs from {}",
                raw.path.display(),
                first.path.display()
            )));
        }
    }
    let header = &first.header;
    let id_col = header.iter().position(|h| h == WORKLOAD_ID_COLUMN);
    let data_cols: Vec<usize> = (0..header.len()).filter(|&i| Some(i) != id_col).collect();

    let boolean: Vec<bool> = data_cols
        .iter()
        .map(|&c| {
            let mut cells = raws.iter().flat_map(|r| r.records.iter().map(move |(_, v)| &v[c]));
            let mut any = false;
            let all = cells.all(|s| {
                any = true;
                boolean_token(s).is_some()
            });
            any && all
        })
        .collect();

    let columns: Vec<ColumnSchema> = data_cols
        .iter()
        .zip(&boolean)
        .map(|(&c, &b)| ColumnSchema {
            name: header[c].clone(),
            kind: hint.kind_of(&header[c]),
            encoding: if b { Encoding::BooleanEncoded } else { Encoding::Numeric },
        })
        .collect();
    let schema = Arc::new(Schema::new(columns)?);
    let latency = schema.latency_index();

    let mut grouped: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for raw in &raws {
        let stem = raw
            .path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        for (line, rec) in &raw.records {
            let parse_err = |message: String| Error::Parse {
                file: raw.path.clone(),
                line: *line,
                message,
            };
            let wid = match id_col {
                Some(c) if rec[c].is_empty() => {
                    return Err(parse_err("empty workload id".into()));
                }
                Some(c) => rec[c].clone(),
                None => stem.clone(),
            };
            let row = grouped.entry(wid).or_default();
            for (j, &c) in data_cols.iter().enumerate() {
                let v =
                    parse_cell(&rec[c], boolean[j]).map_err(|m| parse_err(format!("column `{}`: {m}", header[c])))?;
                if j == latency && v <= 0.0 {
                    return Err(parse_err(format!("latency must be strictly positive, found {v}")));
                }
                row.push(v);
            }
        }
    }

    let width = schema.len();
    let tables = grouped
        .into_iter()
        .map(|(id, flat)| {
            let values = DMatrix::from_row_slice(flat.len() / width, width, &flat);
            WorkloadTable::new(id, schema.clone(), values)
        })
        .collect::<Result<Vec<_>>>()?;
    WorkloadRepository::new(schema, tables)
}

/// Removes columns whose value is identical across every row of every table.
/// The latency column is never dropped.
pub fn drop_constant_columns(repo: &WorkloadRepository) -> (WorkloadRepository, Vec<String>) {
    let schema = repo.schema();
    let mut constant = vec![true; schema.len()];
    let mut reference: Vec<Option<f64>> = vec![None; schema.len()];
    for t in repo.tables() {
        for c in 0..schema.len() {
            if !constant[c] {
                continue;
            }
            for &v in t.values.column(c).iter() {
                match reference[c] {
                    None => reference[c] = Some(v),
                    Some(r) if r != v => {
                        constant[c] = false;
                        break;
                    }
                    Some(_) => {}
                }
            }
        }
    }
    constant[schema.latency_index()] = false;
    let dropped: BTreeSet<&str> = schema
        .columns()
        .iter()
        .zip(&constant)
        .filter(|(_, &k)| k)
        .map(|(c, _)| c.name.as_str())
        .collect();
    if dropped.is_empty() {
        return (repo.clone(), Vec::new());
    }
    let kept = Arc::new(schema.retain(|c| !dropped.contains(c.name.as_str())));
    let names = schema
        .columns()
        .iter()
        .filter(|c| dropped.contains(c.name.as_str()))
        .map(|c| c.name.clone())
        .collect();
    let projected = repo.project(kept).expect("projection onto a sub-schema cannot fail");
    (projected, names)
}

/// A workload divided into rows used for mapping and rows held out.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutSplit {
    pub mapping_rows: WorkloadTable,
    pub validation_rows: WorkloadTable,
}

/// First `n_map_rows` rows (file order) for mapping, the rest for validation.
pub fn split_holdout(table: &WorkloadTable, n_map_rows: usize) -> Result<HoldoutSplit> {
    if n_map_rows == 0 || table.n_rows() <= n_map_rows {
        return Err(Error::InsufficientRows {
            rows: table.n_rows(),
            needed: n_map_rows,
        });
    }
    let head: Vec<usize> = (0..n_map_rows).collect();
    let tail: Vec<usize> = (n_map_rows..table.n_rows()).collect();
    Ok(HoldoutSplit {
        mapping_rows: table.select_rows(&head)?,
        validation_rows: table.select_rows(&tail)?,
    })
}

/// Rows to predict: feature columns plus an optional latency column.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub feature_names: Vec<String>,
    pub features: DMatrix<f64>,
    pub origins: Vec<RowId>,
    pub latency: Option<Vec<f64>>,
}

impl ObservationSet {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    /// Feature matrix with columns in the order of `names`.
    pub fn select(&self, names: &[String]) -> Result<DMatrix<f64>> {
        let idx = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::UnknownColumn(n.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.features.select_columns(idx.iter()))
    }
}

/// Loads rows to be predicted. Every feature column of `schema` must be
/// present (extra columns are ignored); the latency column is optional.
pub fn load_observations(path: &Path, schema: &Schema) -> Result<ObservationSet> {
    let raw = read_raw(path)?;
    let find = |name: &str| raw.header.iter().position(|h| h == name);
    let feature_names = schema.feature_names();
    let feature_cols = feature_names
        .iter()
        .map(|n| find(n).ok_or_else(|| Error::Schema(format!("{}: missing column `{n}`", path.display()))))
        .collect::<Result<Vec<_>>>()?;
    let latency_col = find(schema.latency_name());
    let id_col = find(WORKLOAD_ID_COLUMN);
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();

    let mut flat = Vec::with_capacity(raw.records.len() * feature_cols.len());
    let mut origins = Vec::with_capacity(raw.records.len());
    let mut latency = Vec::new();
    let mut counters: BTreeMap<String, usize> = BTreeMap::new();
    for (line, rec) in &raw.records {
        let parse_err = |message: String| Error::Parse {
            file: path.to_owned(),
            line: *line,
            message,
        };
        for (&c, name) in feature_cols.iter().zip(&feature_names) {
            let v = parse_cell(&rec[c], true).map_err(|m| parse_err(format!("column `{name}`: {m}")))?;
            flat.push(v);
        }
        if let Some(c) = latency_col {
            let v = parse_cell(&rec[c], false).map_err(|m| parse_err(format!("latency: {m}")))?;
            if v <= 0.0 {
                return Err(parse_err(format!("latency must be strictly positive, found {v}")));
            }
            latency.push(v);
        }
        let wid = id_col.map(|c| rec[c].clone()).unwrap_or_else(|| stem.clone());
        let counter = counters.entry(wid.clone()).or_default();
        origins.push(RowId::new(wid, *counter));
        *counter += 1;
    }
    Ok(ObservationSet {
        features: DMatrix::from_row_slice(origins.len(), feature_names.len(), &flat),
        feature_names,
        origins,
        latency: latency_col.map(|_| latency),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn hint() -> SchemaHint {
        let mut m = BTreeMap::new();
        m.insert("k1".to_owned(), ColumnKind::Knob);
        m.insert("flag".to_owned(), ColumnKind::Knob);
        SchemaHint(m)
    }

    #[test]
    fn partitions_by_workload_id() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.csv",
            "workload_id,k1,flag,m1,latency\nw1,1,true,5,10\nw2,2,false,6,11\nw1,3,true,7,12\n",
        );
        let repo = load_repository(&[p], &hint()).unwrap();
        assert_eq!(repo.len(), 2);
        assert_eq!(repo.get("w1").unwrap().n_rows(), 2);
        assert_eq!(repo.get("w1").unwrap().column("k1").unwrap(), vec![1.0, 3.0]);
        let flag = &repo.schema().columns()[1];
        assert_eq!(flag.encoding, Encoding::BooleanEncoded);
        assert_eq!(repo.get("w2").unwrap().column("flag").unwrap(), vec![0.0]);
        assert_eq!(repo.schema().columns()[2].kind, ColumnKind::Metric);
    }

    #[test]
    fn file_stem_names_workload_without_id_column() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "alpha.csv", "k1,latency\n1,2\n");
        let b = write(dir.path(), "beta.csv", "k1,latency\n3,4\n");
        let repo = load_repository(&[a, b], &hint()).unwrap();
        assert_eq!(repo.ids().collect::<Vec<_>>(), vec!["alpha", "beta"]);
    }

    #[test]
    fn ragged_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "k1,m1,latency\n1,2,3\n1,2\n");
        match load_repository(&[p], &hint()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_numeric_and_missing_cells() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "k1,m1,latency\n1,abc,3\n");
        assert!(matches!(load_repository(&[p], &hint()), Err(Error::Parse { .. })));
        let p = write(dir.path(), "b.csv", "k1,m1,latency\n1,,3\n");
        assert!(matches!(load_repository(&[p], &hint()), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_latency_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "k1,m1\n1,2\n");
        assert!(matches!(load_repository(&[p], &hint()), Err(Error::Schema(_))));
    }

    #[test]
    fn non_positive_latency_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "k1,latency\n1,0\n");
        assert!(matches!(load_repository(&[p], &hint()), Err(Error::Parse { .. })));
    }

    fn table(id: &str, rows: &[[f64; 3]]) -> WorkloadTable {
        let schema = Arc::new(
            Schema::new(vec![
                ColumnSchema::new("k", ColumnKind::Knob),
                ColumnSchema::new("m", ColumnKind::Metric),
                ColumnSchema::new("latency", ColumnKind::Latency),
            ])
            .unwrap(),
        );
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        WorkloadTable::new(id, schema, DMatrix::from_row_slice(rows.len(), 3, &flat)).unwrap()
    }

    #[test]
    fn constant_column_scope_is_whole_repository() {
        let a = table("a", &[[7.0, 1.0, 5.0], [7.0, 1.0, 5.0]]);
        let b = table("b", &[[7.0, 2.0, 5.0]]);
        let repo = WorkloadRepository::new(a.schema().clone(), vec![a, b]).unwrap();
        let (out, dropped) = drop_constant_columns(&repo);
        // `m` is constant inside `a` but not across tables; latency is never dropped.
        assert_eq!(dropped, vec!["k".to_owned()]);
        assert_eq!(out.schema().feature_names(), vec!["m".to_owned()]);
        let (again, none) = drop_constant_columns(&out);
        assert!(none.is_empty());
        assert_eq!(again, out);
    }

    #[test]
    fn holdout_split_sizes() {
        let rows: Vec<[f64; 3]> = (0..6).map(|i| [i as f64, 1.0, 1.0 + i as f64]).collect();
        let t = table("w", &rows);
        let s = split_holdout(&t, 5).unwrap();
        assert_eq!(s.mapping_rows.n_rows(), 5);
        assert_eq!(s.validation_rows.n_rows(), 1);
        assert_eq!(s.validation_rows.origins()[0], RowId::new("w", 5));

        let t10 = table("w", &(0..10).map(|i| [i as f64, 0.0, 1.0]).collect::<Vec<_>>());
        let s = split_holdout(&t10, 5).unwrap();
        assert_eq!((s.mapping_rows.n_rows(), s.validation_rows.n_rows()), (5, 5));

        let t5 = t.select_rows(&[0, 1, 2, 3, 4]).unwrap();
        assert!(matches!(
            split_holdout(&t5, 5),
            Err(Error::InsufficientRows { rows: 5, .. })
        ));
    }

    #[test]
    fn observations_allow_missing_latency() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "t.csv",
            "workload_id,m,k,extra\nw,2,on,9\nw,3,off,9\nv,1,1,9\n",
        );
        let schema = table("x", &[[0.0, 0.0, 1.0]]).schema().clone();
        let obs = load_observations(&p, &schema).unwrap();
        assert_eq!(obs.feature_names, vec!["k".to_owned(), "m".to_owned()]);
        assert_eq!(obs.features.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 3.0]);
        assert_eq!(obs.origins[2], RowId::new("v", 0));
        assert!(obs.latency.is_none());
    }
}
