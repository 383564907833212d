//! CSV ingestion, cleaning, one-hot encoding, min-max scaling, windowing and
//! chronological splitting.
//!
//! Pipeline order for a training run: `load_csv` → `impute` →
//! `encode_categorical` (per categorical column) → `scale_fit_transform` →
//! `make_windows` → `split`. Every stage is a pure function of its inputs,
//! and all statistics are fitted strictly before the first test target row.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::models::WindowBatch;

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("schema error: missing column '{0}'")]
    MissingColumn(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("encoding error: unseen category '{category}' in column '{column}'")]
    UnseenCategory { column: String, category: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

pub const MISSING_TOKEN: &str = "NA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Integer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnDecl {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnDecl {
    pub fn continuous(name: &str) -> Self {
        ColumnDecl { name: name.into(), kind: ColumnKind::Continuous }
    }

    pub fn categorical(name: &str) -> Self {
        ColumnDecl { name: name.into(), kind: ColumnKind::Categorical }
    }

    pub fn integer(name: &str) -> Self {
        ColumnDecl { name: name.into(), kind: ColumnKind::Integer }
    }
}

/// Where row timestamps come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampSpec {
    /// An integer column counting steps.
    IndexColumn { column: String },
    /// Calendar columns, one row per fixed period (seconds).
    YearMonthDayHour {
        year: String,
        month: String,
        day: String,
        hour: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnDecl>,
    pub timestamp: TimestampSpec,
}

/// Declarations for the UCI Beijing PM2.5 file: seven continuous
/// measurements plus the combined wind direction.
pub fn air_quality_schema() -> Schema {
    Schema {
        columns: vec![
            ColumnDecl::continuous("pm2.5"),
            ColumnDecl::continuous("DEWP"),
            ColumnDecl::continuous("TEMP"),
            ColumnDecl::continuous("PRES"),
            ColumnDecl::categorical("cbwd"),
            ColumnDecl::continuous("Iws"),
            ColumnDecl::continuous("Is"),
            ColumnDecl::continuous("Ir"),
        ],
        timestamp: TimestampSpec::YearMonthDayHour {
            year: "year".into(),
            month: "month".into(),
            day: "day".into(),
            hour: "hour".into(),
        },
    }
}

pub fn air_quality_targets() -> Vec<String> {
    ["pm2.5", "DEWP", "TEMP", "PRES", "Iws", "Is", "Ir"]
        .into_iter()
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    /// Lexicographically ordered category vocabulary; categorical only.
    pub vocabulary: Option<Vec<String>>,
}

/// Numeric frame in time order. Categorical cells hold their vocabulary
/// index until `encode_categorical` expands them.
#[derive(Debug, Clone)]
pub struct TimeSeriesFrame {
    pub columns: Vec<ColumnMeta>,
    pub timestamps: Vec<i64>,
    pub step: i64,
    values: Vec<f64>,  // row-major [rows × columns]
    missing: Vec<bool>, // row-major mask
    pub rejected_rows: usize,
    pub metadata: BTreeMap<String, String>,
}

impl TimeSeriesFrame {
    pub fn new(
        columns: Vec<ColumnMeta>,
        timestamps: Vec<i64>,
        values: Vec<f64>,
        missing: Vec<bool>,
    ) -> Result<Self> {
        let cols = columns.len();
        let rows = timestamps.len();
        if values.len() != rows * cols || missing.len() != rows * cols {
            return Err(DataError::Dimension(format!(
                "{rows} rows x {cols} columns does not match {} values",
                values.len()
            )));
        }
        let step = validate_timestamps(&timestamps)?;
        Ok(TimeSeriesFrame {
            columns,
            timestamps,
            step,
            values,
            missing,
            rejected_rows: 0,
            metadata: BTreeMap::new(),
        })
    }

    pub fn rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| DataError::MissingColumn(name.into()))
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.columns.len() + col]
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing[row * self.columns.len() + col]
    }

    pub fn any_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    pub fn column_values(&self, col: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.value(r, col)).collect()
    }

    fn set_value(&mut self, row: usize, col: usize, v: f64) {
        let n = self.columns.len();
        self.values[row * n + col] = v;
    }

    fn set_missing(&mut self, row: usize, col: usize, m: bool) {
        let n = self.columns.len();
        self.missing[row * n + col] = m;
    }
}

fn validate_timestamps(ts: &[i64]) -> Result<i64> {
    if ts.is_empty() {
        return Err(DataError::Input("frame has no rows".into()));
    }
    if ts.len() == 1 {
        return Ok(1);
    }
    let step = ts[1] - ts[0];
    if step <= 0 {
        return Err(DataError::Input(format!(
            "timestamps must strictly increase, got step {step}"
        )));
    }
    for w in ts.windows(2) {
        if w[1] - w[0] != step {
            return Err(DataError::Input(format!(
                "irregular time step between {} and {} (expected {step})",
                w[0], w[1]
            )));
        }
    }
    Ok(step)
}

// ── CSV ingestion ────────────────────────────────────────────────────

/// Parse a comma-separated, header-bearing, UTF-8 file with `NA` for
/// missing values. Rows whose timestamp does not parse are rejected and
/// counted in `rejected_rows`.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<TimeSeriesFrame> {
    let display = path.display().to_string();
    let mut raw = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut raw))
        .map_err(|source| DataError::Io { path: display.clone(), source })?;
    if raw.trim().is_empty() {
        return Err(DataError::Input(format!("{display} is empty")));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(raw.as_bytes());

    let headers = reader
        .headers()
        .map_err(|source| DataError::Csv { path: display.clone(), source })?
        .clone();
    let header_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.into()))
    };

    let ts_columns: Vec<usize> = match &schema.timestamp {
        TimestampSpec::IndexColumn { column } => vec![header_index(column)?],
        TimestampSpec::YearMonthDayHour { year, month, day, hour } => vec![
            header_index(year)?,
            header_index(month)?,
            header_index(day)?,
            header_index(hour)?,
        ],
    };
    let data_columns: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| header_index(&c.name))
        .collect::<Result<_>>()?;

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    let mut missing = Vec::new();
    let mut rejected = 0usize;
    // raw category strings per categorical column, resolved to indices below
    let mut raw_categories: Vec<Vec<String>> = schema.columns.iter().map(|_| Vec::new()).collect();

    for record in reader.records() {
        let record = record.map_err(|source| DataError::Csv { path: display.clone(), source })?;
        let ts = parse_timestamp(&record, &schema.timestamp, &ts_columns);
        let Some(ts) = ts else {
            rejected += 1;
            continue;
        };
        timestamps.push(ts);
        for (ci, decl) in schema.columns.iter().enumerate() {
            let cell = record.get(data_columns[ci]).unwrap_or("").trim();
            match decl.kind {
                ColumnKind::Categorical => {
                    raw_categories[ci].push(cell.to_string());
                    values.push(f64::NAN); // resolved after vocabulary is known
                    missing.push(cell == MISSING_TOKEN || cell.is_empty());
                }
                ColumnKind::Continuous | ColumnKind::Integer => {
                    if cell == MISSING_TOKEN || cell.is_empty() {
                        values.push(f64::NAN);
                        missing.push(true);
                    } else {
                        match cell.parse::<f64>() {
                            Ok(v) => {
                                values.push(v);
                                missing.push(false);
                            }
                            Err(_) => {
                                values.push(f64::NAN);
                                missing.push(true);
                            }
                        }
                    }
                }
            }
        }
    }

    if timestamps.is_empty() {
        return Err(DataError::Input(format!(
            "{display} contains no usable rows ({rejected} rejected)"
        )));
    }

    // build vocabularies (lexicographic) and resolve category indices
    let ncols = schema.columns.len();
    let mut columns = Vec::with_capacity(ncols);
    for (ci, decl) in schema.columns.iter().enumerate() {
        let vocabulary = if decl.kind == ColumnKind::Categorical {
            let mut vocab: Vec<String> = raw_categories[ci]
                .iter()
                .filter(|s| !s.is_empty() && s.as_str() != MISSING_TOKEN)
                .cloned()
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            vocab.sort();
            for (ri, cat) in raw_categories[ci].iter().enumerate() {
                if cat.is_empty() || cat == MISSING_TOKEN {
                    continue;
                }
                let idx = vocab.iter().position(|v| v == cat).expect("built from data");
                values[ri * ncols + ci] = idx as f64;
            }
            Some(vocab)
        } else {
            None
        };
        columns.push(ColumnMeta {
            name: decl.name.clone(),
            kind: decl.kind,
            vocabulary,
        });
    }

    let mut frame = TimeSeriesFrame::new(columns, timestamps, values, missing)?;
    frame.rejected_rows = rejected;
    Ok(frame)
}

fn parse_timestamp(record: &csv::StringRecord, spec: &TimestampSpec, cols: &[usize]) -> Option<i64> {
    match spec {
        TimestampSpec::IndexColumn { .. } => record.get(cols[0])?.trim().parse::<i64>().ok(),
        TimestampSpec::YearMonthDayHour { .. } => {
            let year: i32 = record.get(cols[0])?.trim().parse().ok()?;
            let month: u32 = record.get(cols[1])?.trim().parse().ok()?;
            let day: u32 = record.get(cols[2])?.trim().parse().ok()?;
            let hour: u32 = record.get(cols[3])?.trim().parse().ok()?;
            let date = chrono::NaiveDate::from_ymd_opt(year, month, day)?;
            let dt = date.and_hms_opt(hour, 0, 0)?;
            Some(dt.and_utc().timestamp())
        }
    }
}

/// Write a frame as CSV (timestamp column `t`, then data columns).
/// Categorical cells are written as their category string.
pub fn write_csv(frame: &TimeSeriesFrame, path: &Path) -> Result<()> {
    let display = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|source| DataError::Csv {
        path: display.clone(),
        source,
    })?;
    let mut header = vec!["t".to_string()];
    header.extend(frame.columns.iter().map(|c| c.name.clone()));
    w.write_record(&header).map_err(|source| DataError::Csv {
        path: display.clone(),
        source,
    })?;
    for r in 0..frame.rows() {
        let mut record = vec![frame.timestamps[r].to_string()];
        for (ci, col) in frame.columns.iter().enumerate() {
            let cell = if frame.is_missing(r, ci) {
                MISSING_TOKEN.to_string()
            } else {
                match (&col.kind, &col.vocabulary) {
                    (ColumnKind::Categorical, Some(vocab)) => {
                        vocab[frame.value(r, ci) as usize].clone()
                    }
                    _ => format!("{}", frame.value(r, ci)),
                }
            };
            record.push(cell);
        }
        w.write_record(&record).map_err(|source| DataError::Csv {
            path: display.clone(),
            source,
        })?;
    }
    w.flush().map_err(|source| DataError::Io { path: display, source })?;
    Ok(())
}

// ── imputation ───────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputePolicy {
    /// Drop the initial run of rows whose target columns are missing, then
    /// forward-fill interior gaps.
    DropLeading,
    /// Forward-fill gaps; a leading run is back-filled from the first
    /// observed value.
    ForwardFill,
}

pub fn impute(frame: &TimeSeriesFrame, policy: ImputePolicy, targets: &[String]) -> Result<TimeSeriesFrame> {
    let target_idx: Vec<usize> = targets
        .iter()
        .map(|t| frame.column_index(t))
        .collect::<Result<_>>()?;

    let mut out = frame.clone();
    if policy == ImputePolicy::DropLeading {
        let leading = (0..frame.rows())
            .take_while(|&r| target_idx.iter().any(|&c| frame.is_missing(r, c)))
            .count();
        if leading == frame.rows() {
            return Err(DataError::Input(
                "all rows have missing target values".into(),
            ));
        }
        if leading > 0 {
            let n = frame.num_columns();
            out.timestamps.drain(..leading);
            out.values.drain(..leading * n);
            out.missing.drain(..leading * n);
        }
    }

    for c in 0..out.num_columns() {
        let first_observed = (0..out.rows())
            .find(|&r| !out.is_missing(r, c))
            .map(|r| out.value(r, c));
        let Some(first) = first_observed else {
            return Err(DataError::Input(format!(
                "column '{}' is entirely missing",
                out.columns[c].name
            )));
        };
        // leading gaps backfill from the first observed value, interior gaps
        // carry the previous one
        let mut last = first;
        for r in 0..out.rows() {
            if out.is_missing(r, c) {
                out.set_value(r, c, last);
                out.set_missing(r, c, false);
            } else {
                last = out.value(r, c);
            }
        }
    }
    Ok(out)
}

// ── one-hot encoding ─────────────────────────────────────────────────

/// Replace a categorical column with one indicator column per vocabulary
/// entry, named `{column}={category}`, in lexicographic order.
pub fn encode_categorical(frame: &TimeSeriesFrame, column: &str) -> Result<TimeSeriesFrame> {
    let ci = frame.column_index(column)?;
    let vocab = frame.columns[ci]
        .vocabulary
        .clone()
        .ok_or_else(|| DataError::Schema(format!("column '{column}' is not categorical")))?;
    encode_categorical_with_vocab(frame, column, &vocab)
}

/// Like [`encode_categorical`] but against a fixed vocabulary (checkpointed
/// pipelines); values outside the vocabulary are an encoding error.
pub fn encode_categorical_with_vocab(
    frame: &TimeSeriesFrame,
    column: &str,
    vocab: &[String],
) -> Result<TimeSeriesFrame> {
    let ci = frame.column_index(column)?;
    if frame.columns[ci].kind != ColumnKind::Categorical {
        return Err(DataError::Schema(format!("column '{column}' is not categorical")));
    }
    let own_vocab = frame.columns[ci].vocabulary.as_deref().unwrap_or(&[]);

    let rows = frame.rows();
    let mut columns = Vec::with_capacity(frame.num_columns() - 1 + vocab.len());
    for (i, meta) in frame.columns.iter().enumerate() {
        if i == ci {
            for cat in vocab {
                columns.push(ColumnMeta {
                    name: format!("{column}={cat}"),
                    kind: ColumnKind::Integer,
                    vocabulary: None,
                });
            }
        } else {
            columns.push(meta.clone());
        }
    }
    let ncols_new = columns.len();
    let mut values = vec![0.0; rows * ncols_new];
    let mut missing = vec![false; rows * ncols_new];
    for r in 0..rows {
        let mut dst = 0;
        for i in 0..frame.num_columns() {
            if i == ci {
                if frame.is_missing(r, i) {
                    for k in 0..vocab.len() {
                        missing[r * ncols_new + dst + k] = true;
                    }
                } else {
                    let cat = &own_vocab[frame.value(r, i) as usize];
                    let pos = vocab.iter().position(|v| v == cat).ok_or_else(|| {
                        DataError::UnseenCategory {
                            column: column.to_string(),
                            category: cat.clone(),
                        }
                    })?;
                    values[r * ncols_new + dst + pos] = 1.0;
                }
                dst += vocab.len();
            } else {
                values[r * ncols_new + dst] = frame.value(r, i);
                missing[r * ncols_new + dst] = frame.is_missing(r, i);
                dst += 1;
            }
        }
    }
    let mut out = TimeSeriesFrame::new(columns, frame.timestamps.clone(), values, missing)?;
    out.rejected_rows = frame.rejected_rows;
    out.metadata = frame.metadata.clone();
    Ok(out)
}

// ── scaling ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerEntry {
    pub column: String,
    pub min: f64,
    pub max: f64,
}

impl ScalerEntry {
    pub fn transform(&self, x: f64) -> f64 {
        if self.max == self.min {
            0.0
        } else {
            (x - self.min) / (self.max - self.min)
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        if self.max == self.min {
            self.min
        } else {
            y * (self.max - self.min) + self.min
        }
    }
}

/// Per-column min/max statistics fitted on the training prefix. Columns not
/// listed (indicators, integers) pass through unscaled.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Scaler {
    pub entries: Vec<ScalerEntry>,
}

impl Scaler {
    pub fn entry(&self, column: &str) -> Option<&ScalerEntry> {
        self.entries.iter().find(|e| e.column == column)
    }
}

/// Fit min-max statistics for every continuous column on the first
/// `train_fraction` of rows and scale the whole frame with them.
pub fn scale_fit_transform(frame: &TimeSeriesFrame, train_fraction: f64) -> Result<(TimeSeriesFrame, Scaler)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let fit_rows = ((frame.rows() as f64) * train_fraction).floor() as usize;
    scale_fit_transform_rows(frame, fit_rows.max(1))
}

/// Same, but with the fit prefix given as an explicit row count so callers
/// can align it exactly with a window split boundary.
pub fn scale_fit_transform_rows(frame: &TimeSeriesFrame, fit_rows: usize) -> Result<(TimeSeriesFrame, Scaler)> {
    if fit_rows == 0 || fit_rows > frame.rows() {
        return Err(DataError::Config(format!(
            "fit prefix of {fit_rows} rows is out of range for {} rows",
            frame.rows()
        )));
    }
    let mut out = frame.clone();
    let mut entries = Vec::new();
    for (ci, meta) in frame.columns.iter().enumerate() {
        if meta.kind != ColumnKind::Continuous {
            continue;
        }
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for r in 0..fit_rows {
            if frame.is_missing(r, ci) {
                continue;
            }
            min = min.min(frame.value(r, ci));
            max = max.max(frame.value(r, ci));
        }
        if !min.is_finite() {
            return Err(DataError::Input(format!(
                "column '{}' has no observed values in the fit prefix",
                meta.name
            )));
        }
        let entry = ScalerEntry { column: meta.name.clone(), min, max };
        for r in 0..frame.rows() {
            if !frame.is_missing(r, ci) {
                out.set_value(r, ci, entry.transform(frame.value(r, ci)));
            }
        }
        entries.push(entry);
    }
    Ok((out, Scaler { entries }))
}

/// Apply an already-fitted scaler to a frame (checkpointed pipelines).
/// Columns without an entry pass through unchanged.
pub fn scale_transform(frame: &TimeSeriesFrame, scaler: &Scaler) -> TimeSeriesFrame {
    let mut out = frame.clone();
    for (ci, meta) in frame.columns.iter().enumerate() {
        let Some(entry) = scaler.entry(&meta.name) else {
            continue;
        };
        for r in 0..frame.rows() {
            if !frame.is_missing(r, ci) {
                out.set_value(r, ci, entry.transform(frame.value(r, ci)));
            }
        }
    }
    out
}

// ── windowing ────────────────────────────────────────────────────────

/// Supervised pairs: lookback windows over all feature columns and
/// next-step target vectors, plus the scaling metadata needed to report
/// errors in original units.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    windows: Vec<f64>, // [N × lookback × features]
    targets: Vec<f64>, // [N × d]
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub scaler: Scaler,
    pub lookback: usize,
    pub horizon: usize,
    /// Windows `0..split_boundary` are the training split.
    pub split_boundary: usize,
    /// Frame row index of each window's target.
    pub target_rows: Vec<usize>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.target_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn num_targets(&self) -> usize {
        self.target_names.len()
    }

    pub fn train_indices(&self) -> std::ops::Range<usize> {
        0..self.split_boundary
    }

    pub fn test_indices(&self) -> std::ops::Range<usize> {
        self.split_boundary..self.len()
    }

    pub fn window_values(&self, j: usize) -> &[f64] {
        let span = self.lookback * self.num_features();
        &self.windows[j * span..(j + 1) * span]
    }

    pub fn target_values(&self, j: usize) -> &[f64] {
        let d = self.num_targets();
        &self.targets[j * d..(j + 1) * d]
    }

    /// Assemble a batch for the given window indices.
    pub fn gather_batch(&self, indices: &[usize]) -> (WindowBatch, Vec<f64>) {
        let f = self.num_features();
        let d = self.num_targets();
        let mut wv = Vec::with_capacity(indices.len() * self.lookback * f);
        let mut tv = Vec::with_capacity(indices.len() * d);
        for &j in indices {
            wv.extend_from_slice(self.window_values(j));
            tv.extend_from_slice(self.target_values(j));
        }
        let batch = WindowBatch::new(wv, indices.len(), self.lookback, f)
            .expect("window extents consistent");
        (batch, tv)
    }

    /// Scaler entries aligned with the target columns.
    pub fn target_scalers(&self) -> Vec<ScalerEntry> {
        self.target_names
            .iter()
            .map(|n| {
                self.scaler
                    .entry(n)
                    .cloned()
                    .unwrap_or(ScalerEntry { column: n.clone(), min: 0.0, max: 1.0 })
            })
            .collect()
    }

    /// Set the chronological split boundary at `train_fraction` of the
    /// windows; both splits must be non-empty.
    pub fn with_split_fraction(mut self, train_fraction: f64) -> Result<Self> {
        let b = split_boundary(self.len(), train_fraction)?;
        self.split_boundary = b;
        Ok(self)
    }

    /// Materialize chronological (train, test) halves.
    pub fn split(&self, train_fraction: f64) -> Result<(WindowedDataset, WindowedDataset)> {
        let b = split_boundary(self.len(), train_fraction)?;
        let take = |range: std::ops::Range<usize>| {
            let f = self.num_features();
            let d = self.num_targets();
            let span = self.lookback * f;
            WindowedDataset {
                windows: self.windows[range.start * span..range.end * span].to_vec(),
                targets: self.targets[range.start * d..range.end * d].to_vec(),
                feature_names: self.feature_names.clone(),
                target_names: self.target_names.clone(),
                scaler: self.scaler.clone(),
                lookback: self.lookback,
                horizon: self.horizon,
                split_boundary: range.end - range.start,
                target_rows: self.target_rows[range.clone()].to_vec(),
            }
        };
        Ok((take(0..b), take(b..self.len())))
    }
}

fn split_boundary(n: usize, train_fraction: f64) -> Result<usize> {
    let b = ((n as f64) * train_fraction).floor() as usize;
    if b == 0 || b >= n {
        return Err(DataError::Config(format!(
            "split fraction {train_fraction} leaves an empty split for {n} windows"
        )));
    }
    Ok(b)
}

/// Build supervised pairs: window `j` covers rows `[j, j+lookback)` and its
/// target is row `j + lookback + horizon - 1` restricted to target columns.
pub fn make_windows(
    frame: &TimeSeriesFrame,
    lookback: usize,
    target_columns: &[String],
    horizon: usize,
    scaler: &Scaler,
) -> Result<WindowedDataset> {
    if lookback == 0 || horizon == 0 {
        return Err(DataError::Config("lookback and horizon must be >= 1".into()));
    }
    if frame.rows() < lookback + horizon {
        return Err(DataError::Input(format!(
            "frame of {} rows is too short for lookback {lookback} + horizon {horizon}",
            frame.rows()
        )));
    }
    if frame.any_missing() {
        return Err(DataError::Input(
            "frame still has missing values; impute before windowing".into(),
        ));
    }
    let target_idx: Vec<usize> = target_columns
        .iter()
        .map(|t| frame.column_index(t))
        .collect::<Result<_>>()?;
    for &ti in &target_idx {
        if frame.columns[ti].kind == ColumnKind::Categorical {
            return Err(DataError::Config(format!(
                "target column '{}' is categorical",
                frame.columns[ti].name
            )));
        }
    }

    let n = frame.rows() - lookback - horizon + 1;
    let f = frame.num_columns();
    let d = target_idx.len();
    let mut windows = Vec::with_capacity(n * lookback * f);
    let mut targets = Vec::with_capacity(n * d);
    let mut target_rows = Vec::with_capacity(n);
    for j in 0..n {
        for r in j..j + lookback {
            for c in 0..f {
                windows.push(frame.value(r, c));
            }
        }
        let tr = j + lookback + horizon - 1;
        for &c in &target_idx {
            targets.push(frame.value(tr, c));
        }
        target_rows.push(tr);
    }
    Ok(WindowedDataset {
        windows,
        targets,
        feature_names: frame.columns.iter().map(|c| c.name.clone()).collect(),
        target_names: target_columns.to_vec(),
        scaler: scaler.clone(),
        lookback,
        horizon,
        split_boundary: n,
        target_rows,
    })
}

/// Row prefix whose statistics may be fitted without seeing any test
/// target: everything strictly before the first test window's target row.
pub fn fit_prefix_rows(rows: usize, lookback: usize, horizon: usize, train_fraction: f64) -> Result<(usize, usize)> {
    if rows < lookback + horizon {
        return Err(DataError::Input(format!(
            "frame of {rows} rows is too short for lookback {lookback} + horizon {horizon}"
        )));
    }
    let n = rows - lookback - horizon + 1;
    let b = split_boundary(n, train_fraction)?;
    Ok((b + lookback + horizon - 1, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::CounterRng;
    use std::io::Write;

    fn tmp_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    fn simple_schema() -> Schema {
        Schema {
            columns: vec![ColumnDecl::continuous("a"), ColumnDecl::continuous("b")],
            timestamp: TimestampSpec::IndexColumn { column: "t".into() },
        }
    }

    #[test]
    fn well_formed_three_row_file() {
        let f = tmp_csv("t,a,b\n0,1.0,2.0\n1,1.5,2.5\n2,2.0,3.0\n");
        let frame = load_csv(f.path(), &simple_schema()).unwrap();
        assert_eq!(frame.rows(), 3);
        assert_eq!(frame.rejected_rows, 0);
        assert_eq!(frame.value(1, 0), 1.5);
        assert_eq!(frame.step, 1);
    }

    #[test]
    fn missing_declared_column_is_schema_error() {
        let f = tmp_csv("t,a\n0,1.0\n1,2.0\n");
        let err = load_csv(f.path(), &simple_schema()).unwrap_err();
        assert!(matches!(err, DataError::MissingColumn(c) if c == "b"));
    }

    #[test]
    fn empty_file_is_input_error() {
        let f = tmp_csv("");
        assert!(matches!(
            load_csv(f.path(), &simple_schema()),
            Err(DataError::Input(_))
        ));
    }

    #[test]
    fn unparseable_timestamp_rows_rejected_with_count() {
        let f = tmp_csv("t,a,b\nbogus,9,9\n0,1.0,2.0\n1,1.5,2.5\n");
        let frame = load_csv(f.path(), &simple_schema()).unwrap();
        assert_eq!(frame.rows(), 2);
        assert_eq!(frame.rejected_rows, 1);
    }

    #[test]
    fn calendar_timestamps_parse_and_reject_invalid_dates() {
        let schema = Schema {
            columns: vec![ColumnDecl::continuous("x")],
            timestamp: TimestampSpec::YearMonthDayHour {
                year: "year".into(),
                month: "month".into(),
                day: "day".into(),
                hour: "hour".into(),
            },
        };
        let f = tmp_csv(
            "year,month,day,hour,x\n2010,2,30,0,9\n2010,1,1,0,1.0\n2010,1,1,1,2.0\n",
        );
        let frame = load_csv(f.path(), &schema).unwrap();
        assert_eq!(frame.rows(), 2);
        assert_eq!(frame.rejected_rows, 1);
        assert_eq!(frame.step, 3600);
    }

    #[test]
    fn na_cells_are_masked() {
        let f = tmp_csv("t,a,b\n0,NA,2.0\n1,1.5,NA\n2,2.0,3.0\n");
        let frame = load_csv(f.path(), &simple_schema()).unwrap();
        assert!(frame.is_missing(0, 0));
        assert!(frame.is_missing(1, 1));
        assert!(!frame.is_missing(2, 0));
    }

    fn frame_with_missing(rows: Vec<(i64, Option<f64>, f64)>) -> TimeSeriesFrame {
        let columns = vec![
            ColumnMeta { name: "a".into(), kind: ColumnKind::Continuous, vocabulary: None },
            ColumnMeta { name: "b".into(), kind: ColumnKind::Continuous, vocabulary: None },
        ];
        let timestamps: Vec<i64> = rows.iter().map(|r| r.0).collect();
        let mut values = Vec::new();
        let mut missing = Vec::new();
        for (_, a, b) in &rows {
            match a {
                Some(v) => {
                    values.push(*v);
                    missing.push(false);
                }
                None => {
                    values.push(f64::NAN);
                    missing.push(true);
                }
            }
            values.push(*b);
            missing.push(false);
        }
        TimeSeriesFrame::new(columns, timestamps, values, missing).unwrap()
    }

    #[test]
    fn impute_identity_when_nothing_missing() {
        let frame = frame_with_missing(vec![(0, Some(1.0), 2.0), (1, Some(1.5), 2.5)]);
        let out = impute(&frame, ImputePolicy::DropLeading, &["a".into()]).unwrap();
        assert_eq!(out.rows(), 2);
        assert_eq!(out.value(0, 0), 1.0);
        assert_eq!(out.value(1, 1), 2.5);
    }

    #[test]
    fn impute_drops_leading_missing_target_rows() {
        let frame = frame_with_missing(vec![
            (0, None, 1.0),
            (1, None, 2.0),
            (2, Some(5.0), 3.0),
            (3, Some(6.0), 4.0),
        ]);
        let out = impute(&frame, ImputePolicy::DropLeading, &["a".into()]).unwrap();
        assert_eq!(out.rows(), 2);
        assert_eq!(out.timestamps, vec![2, 3]);
        assert_eq!(out.value(0, 0), 5.0);
    }

    #[test]
    fn impute_forward_fills_interior_gap() {
        let frame = frame_with_missing(vec![
            (0, Some(1.0), 1.0),
            (1, None, 2.0),
            (2, Some(3.0), 3.0),
        ]);
        let out = impute(&frame, ImputePolicy::DropLeading, &["a".into()]).unwrap();
        assert_eq!(out.value(1, 0), 1.0);
        assert!(!out.any_missing());
    }

    #[test]
    fn forward_fill_backfills_long_leading_gap() {
        let frame = frame_with_missing(vec![
            (0, None, 1.0),
            (1, None, 2.0),
            (2, None, 3.0),
            (3, Some(5.0), 4.0),
            (4, None, 5.0),
            (5, Some(7.0), 6.0),
        ]);
        let out = impute(&frame, ImputePolicy::ForwardFill, &["b".into()]).unwrap();
        assert_eq!(out.rows(), 6);
        assert_eq!(out.column_values(0), vec![5.0, 5.0, 5.0, 5.0, 5.0, 7.0]);
        assert!(!out.any_missing());
    }

    #[test]
    fn impute_all_missing_is_input_error() {
        let frame = frame_with_missing(vec![(0, None, 1.0), (1, None, 2.0)]);
        assert!(matches!(
            impute(&frame, ImputePolicy::DropLeading, &["a".into()]),
            Err(DataError::Input(_))
        ));
    }

    fn categorical_frame(cats: &[&str]) -> TimeSeriesFrame {
        let schema = Schema {
            columns: vec![ColumnDecl::categorical("wind"), ColumnDecl::continuous("x")],
            timestamp: TimestampSpec::IndexColumn { column: "t".into() },
        };
        let mut content = String::from("t,wind,x\n");
        for (i, c) in cats.iter().enumerate() {
            content.push_str(&format!("{i},{c},{}.0\n", i + 1));
        }
        let f = tmp_csv(&content);
        load_csv(f.path(), &schema).unwrap()
    }

    #[test]
    fn wind_vocabulary_yields_four_indicators() {
        let frame = categorical_frame(&["NW", "cv", "NE", "SE", "NE"]);
        let vocab = frame.columns[0].vocabulary.clone().unwrap();
        assert_eq!(vocab, vec!["NE", "NW", "SE", "cv"]);
        let out = encode_categorical(&frame, "wind").unwrap();
        let names: Vec<&str> = out.columns.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["wind=NE", "wind=NW", "wind=SE", "wind=cv", "x"]);
        // exactly one indicator per row
        for r in 0..out.rows() {
            let ones: f64 = (0..4).map(|c| out.value(r, c)).sum();
            assert_eq!(ones, 1.0);
        }
        assert_eq!(out.value(0, 1), 1.0); // NW
        assert_eq!(out.value(2, 0), 1.0); // NE
    }

    #[test]
    fn single_category_column_gives_constant_indicator() {
        let frame = categorical_frame(&["cv", "cv", "cv"]);
        let out = encode_categorical(&frame, "wind").unwrap();
        assert_eq!(out.num_columns(), 2);
        for r in 0..out.rows() {
            assert_eq!(out.value(r, 0), 1.0);
        }
    }

    #[test]
    fn unseen_category_is_encoding_error() {
        let frame = categorical_frame(&["NE", "SE"]);
        let err =
            encode_categorical_with_vocab(&frame, "wind", &["NE".to_string()]).unwrap_err();
        assert!(matches!(err, DataError::UnseenCategory { .. }));
    }

    fn linear_frame(values: &[f64]) -> TimeSeriesFrame {
        TimeSeriesFrame::new(
            vec![ColumnMeta { name: "a".into(), kind: ColumnKind::Continuous, vocabulary: None }],
            (0..values.len() as i64).collect(),
            values.to_vec(),
            vec![false; values.len()],
        )
        .unwrap()
    }

    #[test]
    fn scale_known_column() {
        let frame = linear_frame(&[0.0, 5.0, 10.0]);
        let (scaled, scaler) = scale_fit_transform_rows(&frame, 3).unwrap();
        assert_eq!(scaled.column_values(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(scaler.entries[0].min, 0.0);
        assert_eq!(scaler.entries[0].max, 10.0);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let frame = linear_frame(&[4.0, 4.0, 4.0]);
        let (scaled, scaler) = scale_fit_transform_rows(&frame, 3).unwrap();
        assert_eq!(scaled.column_values(0), vec![0.0, 0.0, 0.0]);
        assert_eq!(scaler.entries[0].inverse(0.0), 4.0);
    }

    #[test]
    fn scale_round_trips() {
        let mut rng = CounterRng::new(6);
        let vals: Vec<f64> = (0..50).map(|_| rng.next_symmetric(30.0)).collect();
        let frame = linear_frame(&vals);
        let (scaled, scaler) = scale_fit_transform(&frame, 0.8).unwrap();
        let e = &scaler.entries[0];
        for (orig, s) in vals.iter().zip(scaled.column_values(0)) {
            assert!((e.inverse(s) - orig).abs() < 1e-12);
        }
    }

    #[test]
    fn scaler_fit_prefix_only_sees_training_rows() {
        // extending the range changes the scaler whenever the test rows go
        // further than the training rows
        let frame = linear_frame(&[0.0, 1.0, 2.0, 3.0, 100.0]);
        let (_, train_only) = scale_fit_transform_rows(&frame, 4).unwrap();
        let (_, with_test) = scale_fit_transform_rows(&frame, 5).unwrap();
        assert_ne!(train_only.entries[0].max, with_test.entries[0].max);
    }

    fn multi_frame(rows: usize, cols: usize) -> TimeSeriesFrame {
        // value encodes (row, col) so alignment mistakes are visible
        let columns: Vec<ColumnMeta> = (0..cols)
            .map(|c| ColumnMeta {
                name: format!("v{c}"),
                kind: ColumnKind::Continuous,
                vocabulary: None,
            })
            .collect();
        let mut values = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                values.push((r * 1000 + c) as f64);
            }
        }
        TimeSeriesFrame::new(columns, (0..rows as i64).collect(), values, vec![false; rows * cols]).unwrap()
    }

    #[test]
    fn window_count_matches_arithmetic() {
        let frame = multi_frame(10, 2);
        let ds = make_windows(&frame, 3, &["v0".into()], 1, &Scaler::default()).unwrap();
        assert_eq!(ds.len(), 7);
    }

    #[test]
    fn air_quality_shape_targets() {
        let frame = multi_frame(40, 7);
        let targets: Vec<String> = (0..7).map(|c| format!("v{c}")).collect();
        let ds = make_windows(&frame, 24, &targets, 1, &Scaler::default()).unwrap();
        assert_eq!(ds.num_targets(), 7);
        assert_eq!(ds.len(), 40 - 24);
        assert_eq!(ds.target_values(0).len(), 7);
    }

    #[test]
    fn window_alignment_matches_index_arithmetic_oracle() {
        let mut rng = CounterRng::new(9);
        for _ in 0..100 {
            let rows = 5 + (rng.next_u64() % 40) as usize;
            let lookback = 1 + (rng.next_u64() % 6) as usize;
            let horizon = 1 + (rng.next_u64() % 3) as usize;
            if rows < lookback + horizon {
                continue;
            }
            let cols = 1 + (rng.next_u64() % 4) as usize;
            let frame = multi_frame(rows, cols);
            let targets = vec!["v0".to_string()];
            let ds = make_windows(&frame, lookback, &targets, horizon, &Scaler::default()).unwrap();
            assert_eq!(ds.len(), rows - lookback - horizon + 1);
            for j in 0..ds.len() {
                let w = ds.window_values(j);
                for k in 0..lookback {
                    for c in 0..cols {
                        assert_eq!(w[k * cols + c], ((j + k) * 1000 + c) as f64);
                    }
                }
                let expect_row = j + lookback + horizon - 1;
                assert_eq!(ds.target_values(j)[0], (expect_row * 1000) as f64);
                assert_eq!(ds.target_rows[j], expect_row);
                // no leakage: last input row strictly precedes the target row
                assert!(j + lookback - 1 < expect_row);
            }
        }
    }

    #[test]
    fn windows_flatten_back_to_frame_values() {
        let frame = multi_frame(12, 3);
        let ds = make_windows(&frame, 4, &["v1".into()], 1, &Scaler::default()).unwrap();
        for j in 0..ds.len() {
            let w = ds.window_values(j);
            for k in 0..4 {
                for c in 0..3 {
                    assert_eq!(w[k * 3 + c], frame.value(j + k, c));
                }
            }
        }
    }

    #[test]
    fn too_short_frame_is_input_error() {
        let frame = multi_frame(3, 1);
        assert!(matches!(
            make_windows(&frame, 3, &["v0".into()], 1, &Scaler::default()),
            Err(DataError::Input(_))
        ));
    }

    #[test]
    fn split_80_20_and_chronology() {
        let frame = multi_frame(103, 1);
        let ds = make_windows(&frame, 3, &["v0".into()], 1, &Scaler::default()).unwrap();
        assert_eq!(ds.len(), 100);
        let (train, test) = ds.split(0.8).unwrap();
        assert_eq!(train.len(), 80);
        assert_eq!(test.len(), 20);
        let train_max = train.target_rows.iter().max().unwrap();
        let test_min = test.target_rows.iter().min().unwrap();
        assert!(train_max < test_min);
    }

    #[test]
    fn degenerate_split_is_config_error() {
        let frame = multi_frame(13, 1);
        let ds = make_windows(&frame, 3, &["v0".into()], 1, &Scaler::default()).unwrap();
        assert!(matches!(ds.split(1.0), Err(DataError::Config(_))));
        assert!(matches!(ds.clone().with_split_fraction(0.0), Err(DataError::Config(_))));
    }

    #[test]
    fn fit_prefix_excludes_all_test_targets() {
        for rows in [30usize, 57, 100] {
            for lookback in [1usize, 4, 9] {
                let (prefix, boundary) = fit_prefix_rows(rows, lookback, 1, 0.8).unwrap();
                // first test window is `boundary`; its target row must not be
                // inside the fit prefix
                assert_eq!(prefix, boundary + lookback);
                assert!(prefix <= rows);
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// inverse_transform(transform(x)) = x for non-degenerate columns.
            #[test]
            fn scaling_round_trips(values in proptest::collection::vec(-1e6f64..1e6, 4..40)) {
                prop_assume!(values.iter().cloned().fold(f64::INFINITY, f64::min)
                    < values.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
                let frame = linear_frame(&values);
                let (scaled, scaler) = scale_fit_transform_rows(&frame, values.len()).unwrap();
                let e = &scaler.entries[0];
                let span = e.max - e.min;
                for (orig, s) in values.iter().zip(scaled.column_values(0)) {
                    prop_assert!((e.inverse(s) - orig).abs() <= 1e-12 * span.max(1.0));
                }
            }
        }
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let frame = categorical_frame(&["NE", "SE", "cv"]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.csv");
        write_csv(&frame, &path).unwrap();
        let schema = Schema {
            columns: vec![ColumnDecl::categorical("wind"), ColumnDecl::continuous("x")],
            timestamp: TimestampSpec::IndexColumn { column: "t".into() },
        };
        let back = load_csv(&path, &schema).unwrap();
        assert_eq!(back.rows(), frame.rows());
        for r in 0..frame.rows() {
            assert_eq!(back.value(r, 1), frame.value(r, 1));
            assert_eq!(back.value(r, 0), frame.value(r, 0));
        }
    }
}
