//! Tabular ingestion and preparation: delimited-text loading against a column
//! schema, KNN imputation, categorical encoding, arrival-timestamp expansion,
//! min-max scaling, stratified splitting, and a synthetic ED-visit generator.
//!
//! Data moves through two containers. A [`Frame`] holds typed columns straight
//! off disk (numeric with NaN missing markers, categorical, timestamp); once
//! imputed, encoded, and expanded it converts into a [`Dataset`], the fully
//! numeric matrix the learner and selection code consume.

mod synth;

pub use synth::{synth_ed, GroundTruth, SynthOutput};

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDateTime, Timelike};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("schema column `{0}` is missing from the table header")]
    MissingColumn(String),
    #[error("schema must declare exactly one label column, found {0}")]
    LabelCount(usize),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    BadNumber {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: label `{value}` is not 0/1 (or SAT/LBTC)")]
    BadLabel { row: usize, value: String },
    #[error("row {row}, column `{column}`: cannot parse `{value}` as an ISO-8601 datetime")]
    BadTimestamp {
        row: usize,
        column: String,
        value: String,
    },
    #[error("column `{column}`: category `{value}` has no ordinal mapping")]
    UnmappedCategory { column: String, value: String },
    #[error("ordinal column `{0}` declared without a mapping")]
    MissingMapping(String),
    #[error("column `{0}` is missing in every row")]
    AllMissing(String),
    #[error("KNN imputation needs k >= 1")]
    BadK,
    #[error("column `{column}` has only {found} complete neighbor rows, need {needed}")]
    InsufficientNeighbors {
        column: String,
        needed: usize,
        found: usize,
    },
    #[error("column `{0}` still holds missing values")]
    MissingValues(String),
    #[error("column `{0}` is not numeric yet")]
    NonNumeric(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("split ratio must lie in (0, 1), got {0}")]
    BadRatio(f64),
    #[error("stratified split needs at least 2 rows in each class")]
    TinyClass,
    #[error("dataset has no rows")]
    Empty,
    #[error("column count mismatch: {0}")]
    Shape(String),
    #[error("no scaling range stored for column `{0}`")]
    MissingRange(String),
    #[error("synthetic generator needs n >= 100, got {0}")]
    SynthTooSmall(usize),
}

/// How a raw column is typed and treated downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Numeric,
    CategoricalOnehot,
    CategoricalOrdinal,
    ArrivalTimestamp,
    Label,
    Drop,
}

/// One schema entry: column name, role, and the ordinal mapping when the role
/// needs one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub role: ColumnRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<BTreeMap<String, f64>>,
}

impl ColumnSchema {
    pub fn new(name: impl Into<String>, role: ColumnRole) -> Self {
        Self {
            name: name.into(),
            role,
            mapping: None,
        }
    }

    pub fn ordinal(name: impl Into<String>, mapping: BTreeMap<String, f64>) -> Self {
        Self {
            name: name.into(),
            role: ColumnRole::CategoricalOrdinal,
            mapping: Some(mapping),
        }
    }
}

/// Missing categorical cells are encoded as this explicit category.
pub const UNKNOWN_CATEGORY: &str = "unknown";

/// The built-in smoking-status ordinal map: unknown 0, never 1, former 2,
/// exposure 3, current 4.
pub fn smoking_mapping() -> BTreeMap<String, f64> {
    [
        ("unknown", 0.0),
        ("never", 1.0),
        ("former", 2.0),
        ("exposure", 3.0),
        ("current", 4.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnValues {
    /// NaN marks a missing cell.
    Numeric(Vec<f64>),
    /// `None` marks a missing cell.
    Categorical(Vec<Option<String>>),
    Timestamp(Vec<NaiveDateTime>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameColumn {
    pub name: String,
    pub role: ColumnRole,
    pub values: ColumnValues,
}

/// Typed columns plus the extracted binary label vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    columns: Vec<FrameColumn>,
    labels: Vec<u8>,
    n_rows: usize,
}

impl Frame {
    pub fn columns(&self) -> &[FrameColumn] {
        &self.columns
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Parses a comma-delimited table with a header row against `schema`.
    /// Empty cells become missing markers; `drop`-role columns and header
    /// columns absent from the schema are discarded.
    pub fn load_table(path: &std::path::Path, schema: &[ColumnSchema]) -> Result<Self, PreprocessError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text, schema)
    }

    /// As [`Frame::load_table`], from in-memory text.
    pub fn from_csv(text: &str, schema: &[ColumnSchema]) -> Result<Self, PreprocessError> {
        let label_count = schema
            .iter()
            .filter(|c| c.role == ColumnRole::Label)
            .count();
        if label_count != 1 {
            return Err(PreprocessError::LabelCount(label_count));
        }
        for entry in schema {
            if entry.role == ColumnRole::CategoricalOrdinal && entry.mapping.is_none() {
                return Err(PreprocessError::MissingMapping(entry.name.clone()));
            }
        }

        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();

        // Map every schema entry onto its header position.
        let mut positions = Vec::with_capacity(schema.len());
        for entry in schema {
            let pos = header
                .iter()
                .position(|h| h == &entry.name)
                .ok_or_else(|| PreprocessError::MissingColumn(entry.name.clone()))?;
            positions.push(pos);
        }

        let records: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>()?;
        let n_rows = records.len();

        let mut columns = Vec::new();
        let mut labels = Vec::with_capacity(n_rows);
        for (entry, &pos) in schema.iter().zip(&positions) {
            let cells = records
                .iter()
                .map(|r| r.get(pos).unwrap_or("").trim());
            match entry.role {
                ColumnRole::Drop => {}
                ColumnRole::Label => {
                    for (row, cell) in cells.enumerate() {
                        let label = match cell {
                            "0" | "SAT" => 0,
                            "1" | "LBTC" => 1,
                            other => {
                                return Err(PreprocessError::BadLabel {
                                    row,
                                    value: other.to_string(),
                                })
                            }
                        };
                        labels.push(label);
                    }
                }
                ColumnRole::Numeric => {
                    let mut values = Vec::with_capacity(n_rows);
                    for (row, cell) in cells.enumerate() {
                        if cell.is_empty() {
                            values.push(f64::NAN);
                        } else {
                            let parsed: f64 = cell.parse().map_err(|_| {
                                PreprocessError::BadNumber {
                                    row,
                                    column: entry.name.clone(),
                                    value: cell.to_string(),
                                }
                            })?;
                            values.push(parsed);
                        }
                    }
                    columns.push(FrameColumn {
                        name: entry.name.clone(),
                        role: entry.role,
                        values: ColumnValues::Numeric(values),
                    });
                }
                ColumnRole::CategoricalOnehot | ColumnRole::CategoricalOrdinal => {
                    let mut values = Vec::with_capacity(n_rows);
                    for cell in cells {
                        values.push(if cell.is_empty() {
                            None
                        } else {
                            Some(cell.to_string())
                        });
                    }
                    if let Some(mapping) = &entry.mapping {
                        for value in values.iter().flatten() {
                            if !mapping.contains_key(value) {
                                return Err(PreprocessError::UnmappedCategory {
                                    column: entry.name.clone(),
                                    value: value.clone(),
                                });
                            }
                        }
                    }
                    columns.push(FrameColumn {
                        name: entry.name.clone(),
                        role: entry.role,
                        values: ColumnValues::Categorical(values),
                    });
                }
                ColumnRole::ArrivalTimestamp => {
                    let mut values = Vec::with_capacity(n_rows);
                    for (row, cell) in cells.enumerate() {
                        let parsed = NaiveDateTime::parse_from_str(cell, "%Y-%m-%dT%H:%M:%S")
                            .or_else(|_| {
                                NaiveDateTime::parse_from_str(cell, "%Y-%m-%d %H:%M:%S")
                            })
                            .map_err(|_| PreprocessError::BadTimestamp {
                                row,
                                column: entry.name.clone(),
                                value: cell.to_string(),
                            })?;
                        values.push(parsed);
                    }
                    columns.push(FrameColumn {
                        name: entry.name.clone(),
                        role: entry.role,
                        values: ColumnValues::Timestamp(values),
                    });
                }
            }
        }

        Ok(Self {
            columns,
            labels,
            n_rows,
        })
    }

    /// Fills missing numeric cells from the k nearest rows. Distances are
    /// Euclidean over the columns observed in both rows, min-max scaled for
    /// the distance only; each missing cell takes the mean of that column over
    /// the k nearest rows observed in it. Observed values are never altered.
    pub fn knn_impute(&self, k: usize) -> Result<Self, PreprocessError> {
        if k < 1 {
            return Err(PreprocessError::BadK);
        }
        let numeric: Vec<(usize, &Vec<f64>)> = self
            .columns
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match &c.values {
                ColumnValues::Numeric(v) => Some((i, v)),
                _ => None,
            })
            .collect();

        for (i, values) in &numeric {
            if values.iter().all(|v| v.is_nan()) && !values.is_empty() {
                return Err(PreprocessError::AllMissing(self.columns[*i].name.clone()));
            }
        }

        // Per-column observed ranges, for scaled distances.
        let scaled: Vec<Vec<f64>> = numeric
            .iter()
            .map(|(_, values)| {
                let observed: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
                let min = observed.iter().copied().fold(f64::INFINITY, f64::min);
                let max = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                values
                    .iter()
                    .map(|&v| {
                        if v.is_nan() {
                            f64::NAN
                        } else if max > min {
                            (v - min) / (max - min)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();

        let mut out = self.clone();
        for row in 0..self.n_rows {
            let missing_cols: Vec<usize> = numeric
                .iter()
                .enumerate()
                .filter(|(j, _)| scaled[*j][row].is_nan())
                .map(|(j, _)| j)
                .collect();
            if missing_cols.is_empty() {
                continue;
            }

            // Distance to every other row over the columns observed in both.
            let mut distances = Vec::with_capacity(self.n_rows - 1);
            for other in 0..self.n_rows {
                if other == row {
                    continue;
                }
                let mut sum = 0.0;
                let mut shared = 0usize;
                for (j, column) in scaled.iter().enumerate() {
                    let a = column[row];
                    let b = column[other];
                    if a.is_nan() || b.is_nan() {
                        continue;
                    }
                    sum += (a - b) * (a - b);
                    shared += 1;
                    let _ = j;
                }
                let distance = if shared == 0 { f64::INFINITY } else { sum.sqrt() };
                distances.push((distance, other));
            }
            distances.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

            for j in missing_cols {
                let (col_index, original) = numeric[j];
                let mut sum = 0.0;
                let mut taken = 0usize;
                for &(distance, other) in &distances {
                    if distance.is_infinite() {
                        break;
                    }
                    if original[other].is_nan() {
                        continue;
                    }
                    sum += original[other];
                    taken += 1;
                    if taken == k {
                        break;
                    }
                }
                if taken < k {
                    return Err(PreprocessError::InsufficientNeighbors {
                        column: self.columns[col_index].name.clone(),
                        needed: k,
                        found: taken,
                    });
                }
                if let ColumnValues::Numeric(values) = &mut out.columns[col_index].values {
                    values[row] = sum / taken as f64;
                }
            }
        }
        Ok(out)
    }

    /// Encodes categorical columns: one-hot columns named `base=category`
    /// (categories sorted, missing cells as the explicit unknown category) and
    /// ordinal columns mapped through the schema's mapping.
    pub fn encode(&self, schema: &[ColumnSchema]) -> Result<Self, PreprocessError> {
        let mut columns = Vec::with_capacity(self.columns.len());
        for column in &self.columns {
            match (&column.values, column.role) {
                (ColumnValues::Categorical(values), ColumnRole::CategoricalOnehot) => {
                    let mut categories: Vec<String> = values
                        .iter()
                        .map(|v| v.as_deref().unwrap_or(UNKNOWN_CATEGORY).to_string())
                        .collect::<std::collections::BTreeSet<_>>()
                        .into_iter()
                        .collect();
                    categories.sort();
                    for category in &categories {
                        let indicator: Vec<f64> = values
                            .iter()
                            .map(|v| {
                                let cell = v.as_deref().unwrap_or(UNKNOWN_CATEGORY);
                                if cell == category {
                                    1.0
                                } else {
                                    0.0
                                }
                            })
                            .collect();
                        columns.push(FrameColumn {
                            name: format!("{}={}", column.name, category),
                            role: ColumnRole::Numeric,
                            values: ColumnValues::Numeric(indicator),
                        });
                    }
                }
                (ColumnValues::Categorical(values), ColumnRole::CategoricalOrdinal) => {
                    let mapping = schema
                        .iter()
                        .find(|c| c.name == column.name)
                        .and_then(|c| c.mapping.as_ref())
                        .ok_or_else(|| PreprocessError::MissingMapping(column.name.clone()))?;
                    let mut encoded = Vec::with_capacity(values.len());
                    for value in values {
                        let cell = value.as_deref().unwrap_or(UNKNOWN_CATEGORY);
                        let mapped = mapping.get(cell).copied().ok_or_else(|| {
                            PreprocessError::UnmappedCategory {
                                column: column.name.clone(),
                                value: cell.to_string(),
                            }
                        })?;
                        encoded.push(mapped);
                    }
                    columns.push(FrameColumn {
                        name: column.name.clone(),
                        role: ColumnRole::Numeric,
                        values: ColumnValues::Numeric(encoded),
                    });
                }
                _ => columns.push(column.clone()),
            }
        }
        Ok(Self {
            columns,
            labels: self.labels.clone(),
            n_rows: self.n_rows,
        })
    }

    /// Replaces each timestamp column with three numeric columns: month 1-12,
    /// weekday 1-7 with Monday = 1, and hour 0-23. Minutes and seconds are
    /// discarded.
    pub fn expand_arrival_time(&self) -> Result<Self, PreprocessError> {
        let mut columns = Vec::with_capacity(self.columns.len());
        for column in &self.columns {
            match &column.values {
                ColumnValues::Timestamp(values) => {
                    let parts: [(&str, Box<dyn Fn(&NaiveDateTime) -> f64>); 3] = [
                        ("month", Box::new(|t: &NaiveDateTime| t.month() as f64)),
                        (
                            "weekday",
                            Box::new(|t: &NaiveDateTime| {
                                t.weekday().number_from_monday() as f64
                            }),
                        ),
                        ("hour", Box::new(|t: &NaiveDateTime| t.hour() as f64)),
                    ];
                    for (suffix, extract) in parts {
                        columns.push(FrameColumn {
                            name: format!("{} {}", column.name, suffix),
                            role: ColumnRole::Numeric,
                            values: ColumnValues::Numeric(
                                values.iter().map(&extract).collect(),
                            ),
                        });
                    }
                }
                _ => columns.push(column.clone()),
            }
        }
        Ok(Self {
            columns,
            labels: self.labels.clone(),
            n_rows: self.n_rows,
        })
    }

    /// Converts into the numeric [`Dataset`]. Errors if a column is still
    /// categorical or a timestamp, or if missing markers remain.
    pub fn into_dataset(self) -> Result<Dataset, PreprocessError> {
        let mut names = Vec::with_capacity(self.columns.len());
        let mut columns = Vec::with_capacity(self.columns.len());
        for column in self.columns {
            match column.values {
                ColumnValues::Numeric(values) => {
                    if values.iter().any(|v| v.is_nan()) {
                        return Err(PreprocessError::MissingValues(column.name));
                    }
                    names.push(column.name);
                    columns.push(values);
                }
                _ => return Err(PreprocessError::NonNumeric(column.name)),
            }
        }
        Dataset::new(names, columns, self.labels)
    }
}

/// Per-column `(min, max)` ranges fitted by [`Dataset::scale_minmax`] and
/// reapplied verbatim to held-out data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub ranges: Vec<ColumnRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

/// Fully numeric feature matrix (column-major) with a binary label vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    feature_names: Vec<String>,
    columns: Vec<Vec<f64>>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        columns: Vec<Vec<f64>>,
        labels: Vec<u8>,
    ) -> Result<Self, PreprocessError> {
        if feature_names.len() != columns.len() {
            return Err(PreprocessError::Shape(format!(
                "{} names vs {} columns",
                feature_names.len(),
                columns.len()
            )));
        }
        let n_rows = labels.len();
        for (name, column) in feature_names.iter().zip(&columns) {
            if column.len() != n_rows {
                return Err(PreprocessError::Shape(format!(
                    "column `{name}` has {} rows, labels have {n_rows}",
                    column.len()
                )));
            }
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(PreprocessError::BadLabel {
                row: labels.iter().position(|&l| l > 1).unwrap(),
                value: "non-binary".to_string(),
            });
        }
        Ok(Self {
            feature_names,
            columns,
            labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn column(&self, index: usize) -> &[f64] {
        &self.columns[index]
    }

    pub fn column_by_name(&self, name: &str) -> Option<&[f64]> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn row(&self, index: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[index]).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows()).map(|i| self.row(i)).collect()
    }

    /// New dataset restricted to the named features, in the given order.
    pub fn select_features(&self, names: &[String]) -> Result<Self, PreprocessError> {
        let mut columns = Vec::with_capacity(names.len());
        for name in names {
            let index = self
                .feature_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| PreprocessError::UnknownFeature(name.clone()))?;
            columns.push(self.columns[index].clone());
        }
        Ok(Self {
            feature_names: names.to_vec(),
            columns,
            labels: self.labels.clone(),
        })
    }

    pub fn subset_rows(&self, indices: &[usize]) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| indices.iter().map(|&i| c[i]).collect())
                .collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Disjoint train/test partition. Stratified mode preserves each class's
    /// proportion to within one row; deterministic under the seed.
    pub fn split(
        &self,
        ratio: f64,
        stratified: bool,
        seed: u64,
    ) -> Result<(Self, Self), PreprocessError> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(PreprocessError::BadRatio(ratio));
        }
        if self.n_rows() == 0 {
            return Err(PreprocessError::Empty);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train_idx = Vec::new();
        let mut test_idx = Vec::new();

        if stratified {
            for class in [0u8, 1u8] {
                let mut indices: Vec<usize> = (0..self.n_rows())
                    .filter(|&i| self.labels[i] == class)
                    .collect();
                if indices.len() < 2 {
                    return Err(PreprocessError::TinyClass);
                }
                indices.shuffle(&mut rng);
                let take = (ratio * indices.len() as f64).round() as usize;
                let take = take.clamp(1, indices.len() - 1);
                train_idx.extend_from_slice(&indices[..take]);
                test_idx.extend_from_slice(&indices[take..]);
            }
        } else {
            let mut indices: Vec<usize> = (0..self.n_rows()).collect();
            indices.shuffle(&mut rng);
            let take = (ratio * indices.len() as f64).round() as usize;
            let take = take.clamp(1, indices.len().saturating_sub(1).max(1));
            train_idx.extend_from_slice(&indices[..take]);
            test_idx.extend_from_slice(&indices[take..]);
        }

        train_idx.sort_unstable();
        test_idx.sort_unstable();
        Ok((self.subset_rows(&train_idx), self.subset_rows(&test_idx)))
    }

    /// Maps every column to `(x - min) / (max - min)`; constant columns map
    /// to zero. Returns the scaled data plus the fitted ranges.
    pub fn scale_minmax(&self) -> (Self, ScalingParams) {
        let mut ranges = Vec::with_capacity(self.columns.len());
        for (name, column) in self.feature_names.iter().zip(&self.columns) {
            let min = column.iter().copied().fold(f64::INFINITY, f64::min);
            let max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            ranges.push(ColumnRange {
                name: name.clone(),
                min,
                max,
            });
        }
        let params = ScalingParams { ranges };
        let scaled = self
            .apply_scaling(&params)
            .expect("ranges fitted from this dataset always apply");
        (scaled, params)
    }

    /// Reapplies stored ranges verbatim; values outside the fitted range may
    /// leave [0, 1].
    pub fn apply_scaling(&self, params: &ScalingParams) -> Result<Self, PreprocessError> {
        let mut columns = Vec::with_capacity(self.columns.len());
        for (name, column) in self.feature_names.iter().zip(&self.columns) {
            let range = params
                .ranges
                .iter()
                .find(|r| &r.name == name)
                .ok_or_else(|| PreprocessError::MissingRange(name.clone()))?;
            let width = range.max - range.min;
            let scaled = column
                .iter()
                .map(|&v| if width > 0.0 { (v - range.min) / width } else { 0.0 })
                .collect();
            columns.push(scaled);
        }
        Ok(Self {
            feature_names: self.feature_names.clone(),
            columns,
            labels: self.labels.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple_schema() -> Vec<ColumnSchema> {
        vec![
            ColumnSchema::new("x", ColumnRole::Numeric),
            ColumnSchema::new("y", ColumnRole::Numeric),
            ColumnSchema::new("label", ColumnRole::Label),
        ]
    }

    #[test]
    fn load_counts_missing_markers() {
        let csv = "x,y,label\n1,10,0\n2,,1\n3,30,0\n";
        let frame = Frame::from_csv(csv, &simple_schema()).unwrap();
        assert_eq!(frame.n_rows(), 3);
        let missing: usize = frame
            .columns()
            .iter()
            .map(|c| match &c.values {
                ColumnValues::Numeric(v) => v.iter().filter(|x| x.is_nan()).count(),
                _ => 0,
            })
            .sum();
        assert_eq!(missing, 1);
        assert_eq!(frame.labels(), &[0, 1, 0]);
    }

    #[test]
    fn load_rejects_missing_label_column() {
        let csv = "x,y\n1,10\n";
        let err = Frame::from_csv(csv, &simple_schema()).unwrap_err();
        assert!(matches!(err, PreprocessError::MissingColumn(name) if name == "label"));
    }

    #[test]
    fn load_rejects_unparseable_numeric() {
        let csv = "x,y,label\n1,abc,0\n";
        let err = Frame::from_csv(csv, &simple_schema()).unwrap_err();
        assert!(matches!(err, PreprocessError::BadNumber { .. }));
    }

    #[test]
    fn load_accepts_text_labels() {
        let csv = "x,y,label\n1,10,SAT\n2,20,LBTC\n";
        let frame = Frame::from_csv(csv, &simple_schema()).unwrap();
        assert_eq!(frame.labels(), &[0, 1]);
    }

    #[test]
    fn knn_impute_hand_example() {
        let csv = "x,y,label\n1,10,0\n2,20,0\n3,,1\n";
        let frame = Frame::from_csv(csv, &simple_schema()).unwrap();
        let imputed = frame.knn_impute(2).unwrap();
        let y = match &imputed.columns()[1].values {
            ColumnValues::Numeric(v) => v.clone(),
            _ => unreachable!(),
        };
        assert_eq!(y, vec![10.0, 20.0, 15.0]);
    }

    #[test]
    fn knn_impute_identity_without_missing() {
        let csv = "x,y,label\n1,10,0\n2,20,1\n";
        let frame = Frame::from_csv(csv, &simple_schema()).unwrap();
        let imputed = frame.knn_impute(1).unwrap();
        assert_eq!(imputed, frame);
    }

    #[test]
    fn knn_impute_stays_within_observed_range() {
        let csv = "x,y,label\n1,5,0\n2,9,0\n3,7,1\n4,,1\n5,,0\n6,6,1\n";
        let frame = Frame::from_csv(csv, &simple_schema()).unwrap();
        let imputed = frame.knn_impute(3).unwrap();
        if let ColumnValues::Numeric(v) = &imputed.columns()[1].values {
            for value in v {
                assert!((5.0..=9.0).contains(value));
            }
        }
    }

    #[test]
    fn knn_impute_never_alters_observed_values() {
        let csv = "x,y,label\n1,5,0\n2,,0\n3,7,1\n4,8,1\n";
        let frame = Frame::from_csv(csv, &simple_schema()).unwrap();
        let imputed = frame.knn_impute(2).unwrap();
        let before = match &frame.columns()[1].values {
            ColumnValues::Numeric(v) => v,
            _ => unreachable!(),
        };
        let after = match &imputed.columns()[1].values {
            ColumnValues::Numeric(v) => v,
            _ => unreachable!(),
        };
        for (b, a) in before.iter().zip(after) {
            if !b.is_nan() {
                assert_eq!(b, a);
            }
        }
    }

    #[test]
    fn knn_impute_rejects_bad_k_and_all_missing() {
        let csv = "x,y,label\n1,,0\n2,,1\n";
        let frame = Frame::from_csv(csv, &simple_schema()).unwrap();
        assert!(matches!(frame.knn_impute(0), Err(PreprocessError::BadK)));
        assert!(matches!(
            frame.knn_impute(1),
            Err(PreprocessError::AllMissing(_))
        ));
    }

    #[test]
    fn encode_smoking_and_onehot() {
        let schema = vec![
            ColumnSchema::new("sex", ColumnRole::CategoricalOnehot),
            ColumnSchema::ordinal("smoking", smoking_mapping()),
            ColumnSchema::new("label", ColumnRole::Label),
        ];
        let csv = "sex,smoking,label\nF,former,0\nM,never,1\nF,current,0\n";
        let frame = Frame::from_csv(csv, &schema).unwrap();
        let encoded = frame.encode(&schema).unwrap();
        let names: Vec<&str> = encoded.columns().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["sex=F", "sex=M", "smoking"]);
        if let ColumnValues::Numeric(v) = &encoded.columns()[2].values {
            assert_eq!(v, &[2.0, 1.0, 4.0]);
        }
        // Each one-hot group sums to one per row.
        let f = match &encoded.columns()[0].values {
            ColumnValues::Numeric(v) => v.clone(),
            _ => unreachable!(),
        };
        let m = match &encoded.columns()[1].values {
            ColumnValues::Numeric(v) => v.clone(),
            _ => unreachable!(),
        };
        for i in 0..3 {
            assert_eq!(f[i] + m[i], 1.0);
        }
    }

    #[test]
    fn encode_three_category_onehot() {
        let schema = vec![
            ColumnSchema::new("ethnicity", ColumnRole::CategoricalOnehot),
            ColumnSchema::new("label", ColumnRole::Label),
        ];
        let csv = "ethnicity,label\nA,0\nB,1\nC,0\nA,1\n";
        let frame = Frame::from_csv(csv, &schema).unwrap();
        let encoded = frame.encode(&schema).unwrap();
        assert_eq!(encoded.columns().len(), 3);
    }

    #[test]
    fn encode_rejects_unmapped_ordinal() {
        let schema = vec![
            ColumnSchema::ordinal("smoking", smoking_mapping()),
            ColumnSchema::new("label", ColumnRole::Label),
        ];
        let csv = "smoking,label\nvaping,0\n";
        let err = Frame::from_csv(csv, &schema).unwrap_err();
        assert!(matches!(err, PreprocessError::UnmappedCategory { .. }));
    }

    #[test]
    fn expand_arrival_time_examples() {
        let schema = vec![
            ColumnSchema::new("arrival", ColumnRole::ArrivalTimestamp),
            ColumnSchema::new("label", ColumnRole::Label),
        ];
        let csv = "arrival,label\n2018-03-17T14:45:59,0\n2019-01-01T00:00:00,1\n";
        let frame = Frame::from_csv(csv, &schema).unwrap();
        let expanded = frame.expand_arrival_time().unwrap();
        let names: Vec<&str> = expanded.columns().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["arrival month", "arrival weekday", "arrival hour"]);
        let get = |i: usize| match &expanded.columns()[i].values {
            ColumnValues::Numeric(v) => v.clone(),
            _ => unreachable!(),
        };
        // 2018-03-17 is a Saturday.
        assert_eq!(get(0), vec![3.0, 1.0]);
        assert_eq!(get(1), vec![6.0, 2.0]);
        assert_eq!(get(2), vec![14.0, 0.0]);
    }

    #[test]
    fn expand_ignores_minutes_and_seconds() {
        let schema = vec![
            ColumnSchema::new("arrival", ColumnRole::ArrivalTimestamp),
            ColumnSchema::new("label", ColumnRole::Label),
        ];
        let csv = "arrival,label\n2020-06-05T09:10:11,0\n2020-06-05T09:59:58,1\n";
        let frame = Frame::from_csv(csv, &schema).unwrap();
        let expanded = frame.expand_arrival_time().unwrap();
        for column in expanded.columns() {
            if let ColumnValues::Numeric(v) = &column.values {
                assert_eq!(v[0], v[1]);
            }
        }
    }

    #[test]
    fn load_rejects_bad_timestamp() {
        let schema = vec![
            ColumnSchema::new("arrival", ColumnRole::ArrivalTimestamp),
            ColumnSchema::new("label", ColumnRole::Label),
        ];
        let csv = "arrival,label\nnot-a-date,0\n";
        assert!(matches!(
            Frame::from_csv(csv, &schema),
            Err(PreprocessError::BadTimestamp { .. })
        ));
    }

    #[test]
    fn scale_minmax_examples() {
        let ds = Dataset::new(
            vec!["a".into(), "c".into(), "h".into()],
            vec![
                vec![2.0, 4.0, 6.0],
                vec![5.0, 5.0, 5.0],
                vec![0.0, 1.0, 1.0],
            ],
            vec![0, 1, 0],
        )
        .unwrap();
        let (scaled, params) = ds.scale_minmax();
        assert_eq!(scaled.column(0), &[0.0, 0.5, 1.0]);
        assert_eq!(scaled.column(1), &[0.0, 0.0, 0.0]);
        assert_eq!(scaled.column(2), &[0.0, 1.0, 1.0]);
        assert_eq!(params.ranges[0].min, 2.0);
        assert_eq!(params.ranges[0].max, 6.0);

        // Idempotent: rescaling scaled data is a no-op.
        let (rescaled, _) = scaled.scale_minmax();
        for i in 0..3 {
            for (a, b) in rescaled.column(i).iter().zip(scaled.column(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn apply_scaling_can_leave_unit_interval() {
        let train = Dataset::new(vec!["x".into()], vec![vec![0.0, 10.0]], vec![0, 1]).unwrap();
        let (_, params) = train.scale_minmax();
        let test = Dataset::new(vec!["x".into()], vec![vec![-5.0, 20.0]], vec![0, 1]).unwrap();
        let scaled = test.apply_scaling(&params).unwrap();
        assert_eq!(scaled.column(0), &[-0.5, 2.0]);
    }

    #[test]
    fn split_sizes_plain() {
        let n = 100;
        let ds = Dataset::new(
            vec!["x".into()],
            vec![(0..n).map(|i| i as f64).collect()],
            (0..n).map(|i| (i % 2) as u8).collect(),
        )
        .unwrap();
        let (train, test) = ds.split(0.8, false, 7).unwrap();
        assert_eq!(train.n_rows(), 80);
        assert_eq!(test.n_rows(), 20);
    }

    #[test]
    fn split_stratified_preserves_prevalence() {
        let n = 1000;
        let labels: Vec<u8> = (0..n).map(|i| if i < 60 { 1 } else { 0 }).collect();
        let ds = Dataset::new(
            vec!["x".into()],
            vec![(0..n).map(|i| i as f64).collect()],
            labels,
        )
        .unwrap();
        let (train, test) = ds.split(0.8, true, 3).unwrap();
        let train_pos = train.labels().iter().filter(|&&l| l == 1).count();
        let test_pos = test.labels().iter().filter(|&&l| l == 1).count();
        assert_eq!(train_pos, 48);
        assert_eq!(test_pos, 12);
        assert_eq!(train.n_rows() + test.n_rows(), 1000);
    }

    #[test]
    fn split_is_a_partition_and_deterministic() {
        let n = 57;
        let ds = Dataset::new(
            vec!["x".into()],
            vec![(0..n).map(|i| i as f64).collect()],
            (0..n).map(|i| (i % 3 == 0) as u8).collect(),
        )
        .unwrap();
        let (train_a, test_a) = ds.split(0.8, true, 11).unwrap();
        let (train_b, test_b) = ds.split(0.8, true, 11).unwrap();
        assert_eq!(train_a, train_b);
        assert_eq!(test_a, test_b);

        let mut seen: Vec<f64> = train_a
            .column(0)
            .iter()
            .chain(test_a.column(0))
            .copied()
            .collect();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected: Vec<f64> = (0..n).map(|i| i as f64).collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn split_rejects_bad_inputs() {
        let ds = Dataset::new(vec!["x".into()], vec![vec![1.0, 2.0]], vec![0, 1]).unwrap();
        assert!(matches!(
            ds.split(1.5, false, 0),
            Err(PreprocessError::BadRatio(_))
        ));
        assert!(matches!(
            ds.split(0.8, true, 0),
            Err(PreprocessError::TinyClass)
        ));
    }

    #[test]
    fn select_features_and_unknown_name() {
        let ds = Dataset::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            vec![0, 1],
        )
        .unwrap();
        let sub = ds.select_features(&["b".to_string()]).unwrap();
        assert_eq!(sub.feature_names(), &["b".to_string()]);
        assert_eq!(sub.column(0), &[3.0, 4.0]);
        assert!(ds.select_features(&["zzz".to_string()]).is_err());
    }
}
