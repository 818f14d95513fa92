//! Dataset representation, CSV ingestion, `[0, 1]` normalization and fold
//! splitting.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::SplitMix64;

/// Row-major matrix of finite reals. Row = sample, column = feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    values: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl FeatureMatrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return invalid(format!("empty matrix ({n_rows}x{n_cols})"));
        }
        if values.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_rows * n_cols,
                got: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!(
                "non-finite value at row {}, column {}",
                pos / n_cols,
                pos % n_cols
            ));
        }
        Ok(Self {
            values,
            n_rows,
            n_cols,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), n_cols, values)
    }

    /// Matrix with a single column.
    pub fn from_column(column: &[f64]) -> Result<Self> {
        Self::new(column.len(), 1, column.to_vec())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_cols)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            if i >= self.n_rows {
                return invalid(format!("row {i} out of range ({} rows)", self.n_rows));
            }
            values.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.n_cols, values)
    }

    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&j) = indices.iter().find(|&&j| j >= self.n_cols) {
            return invalid(format!("column {j} out of range ({} columns)", self.n_cols));
        }
        let mut values = Vec::with_capacity(indices.len() * self.n_rows);
        for row in self.rows() {
            values.extend(indices.iter().map(|&j| row[j]));
        }
        Self::new(self.n_rows, indices.len(), values)
    }

    /// Horizontal concatenation.
    pub fn hstack(&self, other: &Self) -> Result<Self> {
        if self.n_rows != other.n_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                got: other.n_rows,
            });
        }
        let mut values = Vec::with_capacity(self.values.len() + other.values.len());
        for (a, b) in self.rows().zip(other.rows()) {
            values.extend_from_slice(a);
            values.extend_from_slice(b);
        }
        Self::new(self.n_rows, self.n_cols + other.n_cols, values)
    }

    pub(crate) fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.n_cols + col] = v;
    }
}

/// Integer class labels in `0..n_classes`, every class present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<usize>,
    n_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let n_classes = match labels.iter().max() {
            Some(&m) => m + 1,
            None => return invalid("empty label vector"),
        };
        let mut seen = vec![false; n_classes];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return invalid(format!(
                "class {missing} has no members; labels must cover 0..{n_classes}"
            ));
        }
        Ok(Self { labels, n_classes })
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.labels[i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: FeatureMatrix,
    pub labels: LabelVector,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: FeatureMatrix,
        labels: LabelVector,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if features.n_rows() < 2 {
            return invalid(format!("need at least 2 samples, got {}", features.n_rows()));
        }
        if labels.len() != features.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: features.n_rows(),
                got: labels.len(),
            });
        }
        if feature_names.len() != features.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: features.n_cols(),
                got: feature_names.len(),
            });
        }
        check_unique(&feature_names)?;
        Ok(Self {
            features,
            labels,
            feature_names,
        })
    }

    /// Dataset with generated names `f0, f1, ...`.
    pub fn unnamed(features: FeatureMatrix, labels: LabelVector) -> Result<Self> {
        let names = (0..features.n_cols()).map(|j| format!("f{j}")).collect();
        Self::new(features, labels, names)
    }

    pub fn n_samples(&self) -> usize {
        self.features.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.features.select_rows(indices)?,
            self.labels.select(indices)?,
            self.feature_names.clone(),
        )
    }

    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.features.select_columns(indices)?,
            self.labels.clone(),
            indices
                .iter()
                .map(|&j| self.feature_names[j].clone())
                .collect(),
        )
    }

    /// Same labels, replaced feature matrix.
    pub fn with_features(&self, features: FeatureMatrix, names: Vec<String>) -> Result<Self> {
        Self::new(features, self.labels.clone(), names)
    }
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::Csv(format!("duplicate column name {n:?}")));
        }
    }
    Ok(())
}

/// Parsed CSV with any number of label columns.
#[derive(Debug, Clone)]
pub struct LabeledTable {
    pub features: FeatureMatrix,
    pub feature_names: Vec<String>,
    pub labels: Vec<(String, LabelVector)>,
}

pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let mut table = load_csv_multi(path, &[label_column])?;
    let (_, labels) = table.labels.remove(0);
    Dataset::new(table.features, labels, table.feature_names)
}

pub fn load_csv_multi(path: impl AsRef<Path>, label_columns: &[&str]) -> Result<LabeledTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, label_columns)
}

/// Reads the data-core CSV format: header row, comma separated, every
/// non-label cell a finite real, label cells non-negative integers.
pub fn read_csv<R: Read>(reader: R, label_columns: &[&str]) -> Result<LabeledTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.iter().any(String::is_empty) {
        return Err(Error::Csv("empty column name in header".into()));
    }
    check_unique(&header)?;

    let mut label_pos = Vec::with_capacity(label_columns.len());
    for &name in label_columns {
        match header.iter().position(|h| h == name) {
            Some(p) => label_pos.push(p),
            None => return Err(Error::Csv(format!("label column {name:?} not in header"))),
        }
    }
    let feature_pos: Vec<usize> = (0..header.len())
        .filter(|p| !label_pos.contains(p))
        .collect();
    if feature_pos.is_empty() {
        return Err(Error::Csv("no feature columns".into()));
    }

    let mut values = Vec::new();
    let mut raw_labels = vec![Vec::new(); label_pos.len()];
    let mut n_rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        n_rows += 1;
        let cell = |p: usize| -> Result<&str> {
            let c = record.get(p).unwrap_or("");
            if c.is_empty() {
                return Err(Error::MissingValue {
                    row: n_rows,
                    column: header[p].clone(),
                });
            }
            Ok(c)
        };
        for &p in &feature_pos {
            let c = cell(p)?;
            let v: f64 = c.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::NonNumeric {
                    row: n_rows,
                    column: header[p].clone(),
                    value: c.to_string(),
                }
            })?;
            values.push(v);
        }
        for (k, &p) in label_pos.iter().enumerate() {
            let c = cell(p)?;
            let l: usize = c.parse().map_err(|_| Error::NonNumeric {
                row: n_rows,
                column: header[p].clone(),
                value: c.to_string(),
            })?;
            raw_labels[k].push(l);
        }
    }
    if n_rows < 2 {
        return Err(Error::Csv(format!("need at least 2 data rows, got {n_rows}")));
    }
    let features = FeatureMatrix::new(n_rows, feature_pos.len(), values)?;
    let labels = label_columns
        .iter()
        .zip(raw_labels)
        .map(|(name, l)| Ok((name.to_string(), LabelVector::new(l)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledTable {
        features,
        feature_names: feature_pos.iter().map(|&p| header[p].clone()).collect(),
        labels,
    })
}

/// Writes features followed by the label columns. Reals use the shortest
/// representation that round-trips, so output is byte-deterministic.
pub fn write_csv<W: Write>(
    mut out: W,
    features: &FeatureMatrix,
    feature_names: &[String],
    labels: &[(&str, &LabelVector)],
) -> Result<()> {
    if feature_names.len() != features.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: features.n_cols(),
            got: feature_names.len(),
        });
    }
    let io = |source| Error::Io {
        path: "<output>".into(),
        source,
    };
    let mut header: Vec<&str> = feature_names.iter().map(String::as_str).collect();
    header.extend(labels.iter().map(|(n, _)| *n));
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for (i, row) in features.rows().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        for (_, l) in labels {
            cells.push(l.as_slice()[i].to_string());
        }
        writeln!(out, "{}", cells.join(",")).map_err(io)?;
    }
    Ok(())
}

/// Per-column extrema of the training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub col_min: Vec<f64>,
    pub col_max: Vec<f64>,
}

pub fn fit_normalization(train: &FeatureMatrix) -> NormalizationParams {
    let d = train.n_cols();
    let mut col_min = vec![f64::INFINITY; d];
    let mut col_max = vec![f64::NEG_INFINITY; d];
    for row in train.rows() {
        for (j, &v) in row.iter().enumerate() {
            col_min[j] = col_min[j].min(v);
            col_max[j] = col_max[j].max(v);
        }
    }
    NormalizationParams { col_min, col_max }
}

/// Maps each entry to `(v - min) / (max - min)` clipped to `[0, 1]`;
/// constant columns map to 0.
pub fn apply_normalization(x: &FeatureMatrix, p: &NormalizationParams) -> Result<FeatureMatrix> {
    if x.n_cols() != p.col_min.len() {
        return Err(Error::DimensionMismatch {
            expected: p.col_min.len(),
            got: x.n_cols(),
        });
    }
    let mut out = x.clone();
    for i in 0..x.n_rows() {
        for j in 0..x.n_cols() {
            let (lo, hi) = (p.col_min[j], p.col_max[j]);
            let v = if hi > lo {
                ((x.get(i, j) - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// Stratified assignment of samples to folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub assignments: Vec<usize>,
    pub n_folds: usize,
    pub seed: u64,
}

impl FoldPlan {
    /// `(train indices, test indices)` of one fold, both ascending.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &f) in self.assignments.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }

    pub fn splits(&self) -> impl Iterator<Item = (Vec<usize>, Vec<usize>)> + '_ {
        (0..self.n_folds).map(|f| self.split(f))
    }
}

/// Each class is shuffled and dealt round-robin into the folds; the dealing
/// position carries over between classes so fold sizes also stay within one
/// sample of each other.
pub fn make_stratified_folds(labels: &[usize], n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds < 2 {
        return invalid(format!("n_folds must be at least 2, got {n_folds}"));
    }
    if n_folds > labels.len() {
        return invalid(format!(
            "n_folds ({n_folds}) exceeds sample count ({})",
            labels.len()
        ));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = SplitMix64::new(seed);
    let mut assignments = vec![0; labels.len()];
    let mut cursor = 0;
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rng.shuffle(&mut members);
        for i in members {
            assignments[i] = cursor % n_folds;
            cursor += 1;
        }
    }
    Ok(FoldPlan {
        assignments,
        n_folds,
        seed,
    })
}

/// Leave-one-out splits: split `i` trains on every sample except `i`.
pub fn loo_splits(n: usize) -> Vec<(Vec<usize>, usize)> {
    (0..n)
        .map(|i| ((0..n).filter(|&j| j != i).collect(), i))
        .collect()
}
