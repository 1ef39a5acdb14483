//! Expression datasets: ingestion, validation, standardization and the
//! Pearson pre-filter.
//!
//! A [`Dataset`] is a sample-by-feature matrix together with a per-sample
//! [`Label`]. Samples without a label take part in transductive training and
//! in normalization statistics, but never in filter scores or accuracy.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed delimited text: {0}")]
    Csv(#[from] csv::Error),
    #[error("matrix file has no header row")]
    MissingHeader,
    #[error("row {row}: expected {expected} cells, found {found}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("sample {sample}, feature {feature}: non-numeric cell {value:?}")]
    NonNumeric {
        sample: String,
        feature: String,
        value: String,
    },
    #[error("sample {sample}, feature {feature}: non-finite value")]
    NonFinite { sample: String, feature: String },
    #[error("sample {sample}: unknown label token {token:?} (expected +1, -1 or ?)")]
    UnknownLabel { sample: String, token: String },
    #[error("duplicate sample id {0:?}")]
    DuplicateSample(String),
    #[error("duplicate feature id {0:?}")]
    DuplicateFeature(String),
    #[error("unknown sample id {0:?} in labels file")]
    UnknownSample(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("need at least one +1 and one -1 labelled sample")]
    MissingClass,
    #[error("need at least 2 labelled samples, found {0}")]
    TooFewLabelled(usize),
    #[error("cannot keep {count} of {available} features")]
    InvalidCount { count: usize, available: usize },
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// Per-sample class status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
    Unlabelled,
}

impl Label {
    /// `+1.0` / `-1.0`, or `None` for unlabelled samples.
    pub fn sign(self) -> Option<f64> {
        match self {
            Label::Positive => Some(1.0),
            Label::Negative => Some(-1.0),
            Label::Unlabelled => None,
        }
    }

    /// Non-negative values map to `Positive` (the `sign(0) = +1` rule).
    pub fn from_sign(value: f64) -> Label {
        if value >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn is_labelled(self) -> bool {
        self != Label::Unlabelled
    }

    pub fn token(self) -> &'static str {
        match self {
            Label::Positive => "+1",
            Label::Negative => "-1",
            Label::Unlabelled => "?",
        }
    }

    pub fn parse_token(token: &str) -> Option<Label> {
        match token.trim() {
            "+1" | "1" => Some(Label::Positive),
            "-1" => Some(Label::Negative),
            "?" => Some(Label::Unlabelled),
            _ => None,
        }
    }
}

/// Sample-by-feature expression matrix with labels and identifiers.
///
/// Immutable after construction; every constructor validates shapes,
/// finiteness and sample-id uniqueness.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    matrix: Array2<f64>,
    labels: Vec<Label>,
    feature_ids: Vec<String>,
    sample_ids: Vec<String>,
}

impl Dataset {
    pub fn new(
        matrix: Array2<f64>,
        labels: Vec<Label>,
        feature_ids: Vec<String>,
        sample_ids: Vec<String>,
    ) -> Result<Self> {
        let (rows, cols) = matrix.dim();
        if labels.len() != rows || sample_ids.len() != rows {
            return Err(DataError::Shape(format!(
                "{rows} matrix rows, {} labels, {} sample ids",
                labels.len(),
                sample_ids.len()
            )));
        }
        if feature_ids.len() != cols {
            return Err(DataError::Shape(format!(
                "{cols} matrix columns, {} feature ids",
                feature_ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(rows);
        for id in &sample_ids {
            if !seen.insert(id.as_str()) {
                return Err(DataError::DuplicateSample(id.clone()));
            }
        }
        for ((r, c), v) in matrix.indexed_iter() {
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    sample: sample_ids[r].clone(),
                    feature: feature_ids[c].clone(),
                });
            }
        }
        let matrix = if matrix.is_standard_layout() {
            matrix
        } else {
            matrix.as_standard_layout().into_owned()
        };
        Ok(Dataset {
            matrix,
            labels,
            feature_ids,
            sample_ids,
        })
    }

    /// Builds a dataset with generated identifiers `s0, s1, …` / `f0, f1, …`.
    pub fn from_rows(matrix: Array2<f64>, labels: Vec<Label>) -> Result<Self> {
        let (rows, cols) = matrix.dim();
        let sample_ids = (0..rows).map(|i| format!("s{i}")).collect();
        let feature_ids = (0..cols).map(|j| format!("f{j}")).collect();
        Dataset::new(matrix, labels, feature_ids, sample_ids)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_features();
        &self.matrix.as_slice().expect("standard layout")[i * n..(i + 1) * n]
    }

    pub fn labelled_indices(&self) -> Vec<usize> {
        (0..self.n_samples())
            .filter(|&i| self.labels[i].is_labelled())
            .collect()
    }

    pub fn unlabelled_indices(&self) -> Vec<usize> {
        (0..self.n_samples())
            .filter(|&i| !self.labels[i].is_labelled())
            .collect()
    }

    /// `(positives, negatives)` among labelled samples.
    pub fn class_counts(&self) -> (usize, usize) {
        self.labels.iter().fold((0, 0), |(p, n), l| match l {
            Label::Positive => (p + 1, n),
            Label::Negative => (p, n + 1),
            Label::Unlabelled => (p, n),
        })
    }

    /// Fails unless both classes are represented among labelled samples.
    pub fn ensure_trainable(&self) -> Result<()> {
        match self.class_counts() {
            (p, n) if p > 0 && n > 0 => Ok(()),
            _ => Err(DataError::MissingClass),
        }
    }

    /// Restricts to the given feature columns, in the given order.
    pub fn select_features(&self, columns: &[usize]) -> Dataset {
        let matrix = self.matrix.select(Axis(1), columns);
        Dataset {
            matrix: matrix.as_standard_layout().into_owned(),
            labels: self.labels.clone(),
            feature_ids: columns.iter().map(|&c| self.feature_ids[c].clone()).collect(),
            sample_ids: self.sample_ids.clone(),
        }
    }

    /// Restricts to the given samples, in the given order.
    pub fn select_samples(&self, rows: &[usize]) -> Dataset {
        let matrix = self.matrix.select(Axis(0), rows);
        Dataset {
            matrix: matrix.as_standard_layout().into_owned(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            feature_ids: self.feature_ids.clone(),
            sample_ids: rows.iter().map(|&r| self.sample_ids[r].clone()).collect(),
        }
    }

    pub fn with_labels(&self, labels: Vec<Label>) -> Result<Dataset> {
        Dataset::new(
            self.matrix.clone(),
            labels,
            self.feature_ids.clone(),
            self.sample_ids.clone(),
        )
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Tab if the header line contains one, comma otherwise.
fn detect_delimiter(text: &str) -> u8 {
    let header = text
        .lines()
        .find(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty())
        .unwrap_or("");
    if header.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(text))
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

struct RawMatrix {
    matrix: Array2<f64>,
    feature_ids: Vec<String>,
    sample_ids: Vec<String>,
}

fn parse_matrix(text: &str) -> Result<RawMatrix> {
    let mut records = reader(text).into_records();
    let header = records.next().ok_or(DataError::MissingHeader)??;
    if header.len() < 2 {
        return Err(DataError::MissingHeader);
    }
    let feature_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut seen = HashSet::new();
    for id in &feature_ids {
        if !seen.insert(id.as_str()) {
            return Err(DataError::DuplicateFeature(id.clone()));
        }
    }
    let n = feature_ids.len();
    let mut values = Vec::new();
    let mut sample_ids = Vec::new();
    for (row, record) in records.enumerate() {
        let record = record?;
        if record.len() != n + 1 {
            return Err(DataError::DimensionMismatch {
                row: row + 1,
                expected: n + 1,
                found: record.len(),
            });
        }
        let sample = record[0].to_string();
        for (j, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell.parse().map_err(|_| DataError::NonNumeric {
                sample: sample.clone(),
                feature: feature_ids[j].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    sample,
                    feature: feature_ids[j].clone(),
                });
            }
            values.push(v);
        }
        sample_ids.push(sample);
    }
    let matrix = Array2::from_shape_vec((sample_ids.len(), n), values)
        .map_err(|e| DataError::Shape(e.to_string()))?;
    Ok(RawMatrix {
        matrix,
        feature_ids,
        sample_ids,
    })
}

fn parse_labels(text: &str) -> Result<Vec<(String, Label)>> {
    let mut out = Vec::new();
    for (i, record) in reader(text).into_records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            return Err(DataError::DimensionMismatch {
                row: i,
                expected: 2,
                found: record.len(),
            });
        }
        let (sample, token) = (&record[0], &record[1]);
        match Label::parse_token(token) {
            Some(label) => out.push((sample.to_string(), label)),
            // An optional `sample_id,label` header.
            None if i == 0 => continue,
            None => {
                return Err(DataError::UnknownLabel {
                    sample: sample.to_string(),
                    token: token.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Builds a dataset from matrix and labels text. Samples missing from the
/// labels text are unlabelled; a labels entry for a sample absent from the
/// matrix is an error.
pub fn parse_dataset(matrix_text: &str, labels_text: &str) -> Result<Dataset> {
    let raw = parse_matrix(matrix_text)?;
    let index: HashMap<&str, usize> = {
        let mut index = HashMap::with_capacity(raw.sample_ids.len());
        for (i, id) in raw.sample_ids.iter().enumerate() {
            if index.insert(id.as_str(), i).is_some() {
                return Err(DataError::DuplicateSample(id.clone()));
            }
        }
        index
    };
    let mut labels = vec![Label::Unlabelled; raw.sample_ids.len()];
    let mut assigned = HashSet::new();
    for (sample, label) in parse_labels(labels_text)? {
        let &i = index
            .get(sample.as_str())
            .ok_or_else(|| DataError::UnknownSample(sample.clone()))?;
        if !assigned.insert(i) {
            return Err(DataError::DuplicateSample(sample));
        }
        labels[i] = label;
    }
    Dataset::new(raw.matrix, labels, raw.feature_ids, raw.sample_ids)
}

pub fn load_dataset(matrix_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let matrix_text = read_text(matrix_path.as_ref())?;
    let labels_text = read_text(labels_path.as_ref())?;
    parse_dataset(&matrix_text, &labels_text)
}

/// Comma-delimited matrix text. Values use the shortest representation that
/// parses back to the same `f64`.
pub fn matrix_to_csv(d: &Dataset) -> String {
    let mut out = String::from("sample_id");
    for id in &d.feature_ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for (i, id) in d.sample_ids.iter().enumerate() {
        out.push_str(id);
        for v in d.row(i) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn labels_to_csv(d: &Dataset) -> String {
    let mut out = String::from("sample_id,label\n");
    for (id, label) in d.sample_ids.iter().zip(&d.labels) {
        out.push_str(id);
        out.push(',');
        out.push_str(label.token());
        out.push('\n');
    }
    out
}

pub fn write_dataset(
    d: &Dataset,
    matrix_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> std::io::Result<()> {
    fs::File::create(matrix_path)?.write_all(matrix_to_csv(d).as_bytes())?;
    fs::File::create(labels_path)?.write_all(labels_to_csv(d).as_bytes())
}

/// Column-wise z-score parameters fitted on a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Population standard deviation; `0` marks a constant column.
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(d: &Dataset) -> Standardizer {
        let m = d.n_samples() as f64;
        let mut means = Vec::with_capacity(d.n_features());
        let mut stds = Vec::with_capacity(d.n_features());
        for col in d.matrix.columns() {
            let (lo, hi) = col
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let mean = col.sum() / m;
            let std = if lo == hi {
                0.0
            } else {
                (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m).sqrt()
            };
            means.push(mean);
            stds.push(std);
        }
        Standardizer { means, stds }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (mean, std))| if *std == 0.0 { 0.0 } else { (v - mean) / std })
            .collect()
    }

    pub fn transform(&self, d: &Dataset) -> Dataset {
        let mut matrix = d.matrix.clone();
        for mut row in matrix.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if self.stds[j] == 0.0 {
                    0.0
                } else {
                    (*v - self.means[j]) / self.stds[j]
                };
            }
        }
        Dataset {
            matrix,
            labels: d.labels.clone(),
            feature_ids: d.feature_ids.clone(),
            sample_ids: d.sample_ids.clone(),
        }
    }
}

/// Standardizes every column over all samples of `d` (labelled and
/// unlabelled). The fitted parameters are returned so held-out samples can
/// be mapped with the training statistics.
pub fn normalize(d: &Dataset) -> (Dataset, Standardizer) {
    let scaler = Standardizer::fit(d);
    (scaler.transform(d), scaler)
}

/// Per-feature relevance scores (one non-negative value per column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterScores(pub Vec<f64>);

impl FilterScores {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `|r|` between each feature (labelled rows only) and the ±1 label vector.
pub fn pearson_filter_scores(d: &Dataset) -> Result<FilterScores> {
    let labelled = d.labelled_indices();
    if labelled.len() < 2 {
        return Err(DataError::TooFewLabelled(labelled.len()));
    }
    d.ensure_trainable()?;
    let y: Vec<f64> = labelled
        .iter()
        .map(|&i| d.labels[i].sign().expect("labelled"))
        .collect();
    let m = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / m;
    let syy: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
    let scores = (0..d.n_features())
        .map(|t| {
            let x: Vec<f64> = labelled.iter().map(|&i| d.matrix[[i, t]]).collect();
            let constant = x.iter().all(|&v| v == x[0]);
            if constant {
                return 0.0;
            }
            let x_mean = x.iter().sum::<f64>() / m;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (xi, yi) in x.iter().zip(&y) {
                sxy += (xi - x_mean) * (yi - y_mean);
                sxx += (xi - x_mean) * (xi - x_mean);
            }
            (sxy / (sxx * syy).sqrt()).abs().min(1.0)
        })
        .collect();
    Ok(FilterScores(scores))
}

/// Column indices of the `count` highest scores, in original order. Ties
/// favour the lower column index.
pub fn top_feature_indices(scores: &FilterScores, count: usize) -> Result<Vec<usize>> {
    let n = scores.0.len();
    if count == 0 || count > n {
        return Err(DataError::InvalidCount {
            count,
            available: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores.0[b].total_cmp(&scores.0[a]).then(a.cmp(&b)));
    let mut keep = order[..count].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

pub fn keep_top_features(d: &Dataset, scores: &FilterScores, count: usize) -> Result<Dataset> {
    if scores.0.len() != d.n_features() {
        return Err(DataError::Shape(format!(
            "{} scores for {} features",
            scores.0.len(),
            d.n_features()
        )));
    }
    Ok(d.select_features(&top_feature_indices(scores, count)?))
}
