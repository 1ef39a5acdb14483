//! Cross-validation, paired t-tests, error curves and accuracy tables.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{Dataset, Label};
use crate::rfe::{self, RfeConfig, RfeError, RfeTrace};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("{folds} folds requested but only {available} labelled samples")]
    TooManyFolds { folds: usize, available: usize },
    #[error("stratified {folds}-fold split needs {folds} samples of each class; class {label} has {count}")]
    InfeasibleStratification { folds: usize, label: &'static str, count: usize },
    #[error("fold plan references an unlabelled sample {0}")]
    UnlabelledInPlan(usize),
    #[error("error vectors differ in length: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("paired test needs at least 2 folds, got {0}")]
    TooFewPairs(usize),
    #[error("every fold failed; first failure: {0}")]
    AllFoldsFailed(String),
    #[error("trace has no entry with {0} active features")]
    MissingCount(usize),
    #[error("accuracy table: {0}")]
    Table(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Disjoint folds covering every labelled sample of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    /// Dataset row indices per fold, ascending within each fold.
    pub folds: Vec<Vec<usize>>,
    pub stratified: bool,
    pub seed: u64,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Indices of every fold except `f`, ascending.
    pub fn training(&self, f: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, fold)| fold.iter().copied())
            .collect();
        idx.sort_unstable();
        idx
    }

    /// Hex SHA-256 over the fold contents; two runs share splits iff their
    /// fingerprints agree.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.folds.len() as u64).to_le_bytes());
        for fold in &self.folds {
            hasher.update((fold.len() as u64).to_le_bytes());
            for &i in fold {
                hasher.update((i as u64).to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

/// Splits the labelled `(index, label)` pairs into `k` folds.
///
/// Stratified plans shuffle each class separately, list positives then
/// negatives, and deal the list round-robin, so fold sizes differ by at most
/// one and each class is spread as evenly as possible.
pub fn make_folds(labels: &[(usize, Label)], k: usize, stratified: bool, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::TooFewFolds(k));
    }
    if let Some(&(i, _)) = labels.iter().find(|(_, l)| !l.is_labelled()) {
        return Err(EvalError::UnlabelledInPlan(i));
    }
    if k > labels.len() {
        return Err(EvalError::TooManyFolds {
            folds: k,
            available: labels.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = if stratified {
        let mut pos: Vec<usize> = labels.iter().filter(|(_, l)| *l == Label::Positive).map(|(i, _)| *i).collect();
        let mut neg: Vec<usize> = labels.iter().filter(|(_, l)| *l == Label::Negative).map(|(i, _)| *i).collect();
        for (class, name) in [(&pos, "+1"), (&neg, "-1")] {
            if class.len() < k {
                return Err(EvalError::InfeasibleStratification {
                    folds: k,
                    label: name,
                    count: class.len(),
                });
            }
        }
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        pos.into_iter().chain(neg).collect()
    } else {
        let mut all: Vec<usize> = labels.iter().map(|(i, _)| *i).collect();
        all.shuffle(&mut rng);
        all
    };
    let mut folds = vec![Vec::new(); k];
    for (p, i) in order.into_iter().enumerate() {
        folds[p % k].push(i);
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(FoldPlan { folds, stratified, seed })
}

/// Fold plan over the labelled samples of `d`.
pub fn folds_for(d: &Dataset, k: usize, stratified: bool, seed: u64) -> Result<FoldPlan, EvalError> {
    let pairs: Vec<(usize, Label)> = d.labelled_indices().into_iter().map(|i| (i, d.labels()[i])).collect();
    make_folds(&pairs, k, stratified, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPrediction {
    /// One prediction per test index, in order.
    pub predictions: Vec<Label>,
    pub converged: bool,
}

/// Training procedure evaluated by [`cv_error`].
pub trait Trainer: Sync {
    type Error: fmt::Display;

    /// Trains on the labelled rows `train` plus the unlabelled pool and
    /// predicts the rows `test`.
    fn fit_predict(&self, train: &[usize], unlabelled: &[usize], test: &[usize]) -> Result<FoldPrediction, Self::Error>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Misclassified held-out samples over all tested samples.
    pub error: f64,
    /// Per-fold error rate in plan order; `NaN` for a failed fold.
    pub fold_errors: Vec<f64>,
    pub fold_mistakes: Vec<usize>,
    pub fold_sizes: Vec<usize>,
    /// Indices of folds whose trainer returned an error.
    pub failed_folds: Vec<usize>,
    /// False when any fold failed or did not converge.
    pub complete: bool,
}

/// Stratified or plain k-fold error of `trainer` on the labelled samples of
/// `d`. The unlabelled samples of `d` are offered to every fold; held-out
/// labelled samples never are.
pub fn cv_error<T: Trainer>(d: &Dataset, trainer: &T, plan: &FoldPlan) -> Result<CvResult, EvalError> {
    let unlabelled = d.unlabelled_indices();
    let outcomes: Vec<Result<(usize, bool), String>> = (0..plan.k())
        .into_par_iter()
        .map(|f| {
            let test = &plan.folds[f];
            let train = plan.training(f);
            let pred = trainer.fit_predict(&train, &unlabelled, test).map_err(|e| e.to_string())?;
            let mistakes = test
                .iter()
                .zip(&pred.predictions)
                .filter(|(&i, &p)| d.labels()[i] != p)
                .count();
            Ok((mistakes, pred.converged))
        })
        .collect();
    let mut result = CvResult {
        error: 0.0,
        fold_errors: Vec::with_capacity(plan.k()),
        fold_mistakes: Vec::with_capacity(plan.k()),
        fold_sizes: plan.folds.iter().map(Vec::len).collect(),
        failed_folds: Vec::new(),
        complete: true,
    };
    let mut first_failure = None;
    let (mut wrong, mut tested) = (0usize, 0usize);
    for (f, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok((mistakes, converged)) => {
                result.fold_errors.push(mistakes as f64 / plan.folds[f].len() as f64);
                result.fold_mistakes.push(mistakes);
                result.complete &= converged;
                wrong += mistakes;
                tested += plan.folds[f].len();
            }
            Err(e) => {
                first_failure.get_or_insert(e);
                result.fold_errors.push(f64::NAN);
                result.fold_mistakes.push(0);
                result.failed_folds.push(f);
                result.complete = false;
            }
        }
    }
    if tested == 0 {
        return Err(EvalError::AllFoldsFailed(first_failure.unwrap_or_default()));
    }
    result.error = wrong as f64 / tested as f64;
    Ok(result)
}

/// Two-sided 95% critical values of Student's t for 1 to 30 degrees of
/// freedom, then 40, 60, 120 and infinity.
const T_CRIT_95: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
    2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
];
const T_CRIT_95_TAIL: [(usize, f64); 3] = [(40, 2.021), (60, 2.000), (120, 1.980)];

/// Two-sided 95% critical value; between table rows the next smaller
/// degrees of freedom (larger, conservative value) is used.
pub fn t_critical_95(df: usize) -> f64 {
    assert!(df >= 1, "degrees of freedom must be positive");
    if df <= 30 {
        return T_CRIT_95[df - 1];
    }
    let mut value = T_CRIT_95[29];
    for &(row, crit) in &T_CRIT_95_TAIL {
        if df >= row {
            value = crit;
        }
    }
    if df > 1000 {
        value = 1.960;
    }
    value
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    /// `±inf` when the differences have zero spread and non-zero mean.
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    pub significant_at_95: bool,
    pub mean_difference: f64,
}

/// Paired t-test on per-fold errors of two methods over the same folds.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTestResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { a: a.len(), b: b.len() });
    }
    let k = a.len();
    if k < 2 {
        return Err(EvalError::TooFewPairs(k));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / k as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
    let sd = var.sqrt();
    let df = k - 1;
    let (t, significant) = if sd == 0.0 {
        if mean == 0.0 {
            (0.0, false)
        } else {
            (f64::INFINITY.copysign(mean), true)
        }
    } else {
        let t = mean / (sd / (k as f64).sqrt());
        (t, t.abs() > t_critical_95(df))
    };
    Ok(PairedTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        significant_at_95: significant,
        mean_difference: mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub method: String,
    /// `(gene_count, error_percent)`, ascending in gene count.
    pub points: Vec<(usize, f64)>,
}

impl ErrorCurve {
    pub fn minimum(&self) -> Option<(usize, f64)> {
        self.points
            .iter()
            .copied()
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }

    /// Rows `method,gene_count,error_percent` without a header.
    pub fn csv_rows(&self) -> Vec<[String; 3]> {
        self.points
            .iter()
            .map(|(g, e)| [self.method.clone(), g.to_string(), e.to_string()])
            .collect()
    }
}

/// Error curve at `target_counts` taken from the trace's CV errors.
pub fn sweep_error_curve(trace: &RfeTrace, target_counts: &[usize], method: &str) -> Result<ErrorCurve, EvalError> {
    let mut counts = target_counts.to_vec();
    counts.sort_unstable();
    counts.dedup();
    let points = counts
        .into_iter()
        .map(|c| {
            trace
                .iterations
                .iter()
                .find(|r| r.active_count == c)
                .map(|r| (c, 100.0 * r.cv_error))
                .ok_or(EvalError::MissingCount(c))
        })
        .collect::<Result<_, _>>()?;
    Ok(ErrorCurve {
        method: method.to_string(),
        points,
    })
}

/// Error curve at `target_counts` measured on a separate labelled `test`
/// set, each point from a model refit on `data` at that trace record.
pub fn holdout_error_curve(
    data: &Dataset,
    test: &Dataset,
    trace: &RfeTrace,
    config: &RfeConfig,
    target_counts: &[usize],
    method: &str,
) -> Result<ErrorCurve, RfeError> {
    let mut counts = target_counts.to_vec();
    counts.sort_unstable();
    counts.dedup();
    let points = counts
        .into_iter()
        .map(|c| {
            let record = trace.record_at(c).ok_or(EvalError::MissingCount(c))?;
            Ok((c, 100.0 * rfe::holdout_error(data, test, record, config)?))
        })
        .collect::<Result<_, RfeError>>()?;
    Ok(ErrorCurve {
        method: method.to_string(),
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "svm-rfe")]
    SvmRfe,
    #[serde(rename = "tsvm-rfe")]
    TsvmRfe,
    #[serde(rename = "glad")]
    Glad,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::SvmRfe, Method::TsvmRfe, Method::Glad];

    pub fn name(self) -> &'static str {
        match self {
            Method::SvmRfe => "svm-rfe",
            Method::TsvmRfe => "tsvm-rfe",
            Method::Glad => "glad",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Method::SvmRfe => "SVM-RFE",
            Method::TsvmRfe => "TSVM-RFE",
            Method::Glad => "GLAD",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRecord {
    pub method: Method,
    pub dataset: String,
    pub with_selection: bool,
    pub genes: usize,
    pub samples: usize,
    /// Percent in `[0, 100]`.
    pub accuracy: f64,
}

type RowKey = (String, bool, usize, usize);

fn row_key(r: &AccuracyRecord) -> RowKey {
    (r.dataset.clone(), r.with_selection, r.genes, r.samples)
}

/// Table with one row per (dataset, selection, genes, samples) and one
/// accuracy column per method.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccuracyTable {
    rows: Vec<(RowKey, [Option<f64>; 3])>,
}

const TABLE_HEADER: [&str; 7] = ["dataset", "selection", "genes", "samples", "svm_rfe", "tsvm_rfe", "glad"];

fn selection_token(with: bool) -> &'static str {
    if with {
        "with"
    } else {
        "without"
    }
}

fn method_slot(m: Method) -> usize {
    match m {
        Method::SvmRfe => 0,
        Method::TsvmRfe => 1,
        Method::Glad => 2,
    }
}

/// Builds the table; rows keep first-appearance order and a later record
/// for the same row and method overwrites an earlier one.
pub fn accuracy_table(records: &[AccuracyRecord]) -> AccuracyTable {
    let mut table = AccuracyTable::default();
    for r in records {
        let key = row_key(r);
        let slot = match table.rows.iter().position(|(k, _)| *k == key) {
            Some(p) => p,
            None => {
                table.rows.push((key, [None; 3]));
                table.rows.len() - 1
            }
        };
        table.rows[slot].1[method_slot(r.method)] = Some(r.accuracy);
    }
    table
}

impl AccuracyTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Records row by row, methods in column order.
    pub fn records(&self) -> Vec<AccuracyRecord> {
        let mut out = Vec::new();
        for ((dataset, with_selection, genes, samples), cells) in &self.rows {
            for m in Method::ALL {
                if let Some(accuracy) = cells[method_slot(m)] {
                    out.push(AccuracyRecord {
                        method: m,
                        dataset: dataset.clone(),
                        with_selection: *with_selection,
                        genes: *genes,
                        samples: *samples,
                        accuracy,
                    });
                }
            }
        }
        out
    }

    pub fn csv_header() -> [&'static str; 7] {
        TABLE_HEADER
    }

    /// Data rows in CSV column order; accuracies use round-trip formatting
    /// and a missing method is an empty cell.
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|((dataset, with, genes, samples), cells)| {
                let mut row = vec![
                    dataset.clone(),
                    selection_token(*with).to_string(),
                    genes.to_string(),
                    samples.to_string(),
                ];
                row.extend(cells.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()));
                row
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TABLE_HEADER).expect("in-memory write");
        for row in self.csv_rows() {
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Parses [`AccuracyTable::to_csv`] output; `#` lines are comments.
    pub fn from_csv(text: &str) -> Result<AccuracyTable, EvalError> {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != TABLE_HEADER {
            return Err(EvalError::Table(format!("unexpected header {:?}", header)));
        }
        let mut records = Vec::new();
        for row in reader.records() {
            let row = row?;
            let bad = |what: &str| EvalError::Table(format!("bad {what} in row {:?}", row));
            let with_selection = match &row[1] {
                "with" => true,
                "without" => false,
                _ => return Err(bad("selection")),
            };
            let genes = row[2].parse().map_err(|_| bad("genes"))?;
            let samples = row[3].parse().map_err(|_| bad("samples"))?;
            for m in Method::ALL {
                let cell = &row[4 + method_slot(m)];
                if cell.is_empty() {
                    continue;
                }
                records.push(AccuracyRecord {
                    method: m,
                    dataset: row[0].to_string(),
                    with_selection,
                    genes,
                    samples,
                    accuracy: cell.parse().map_err(|_| bad("accuracy"))?,
                });
            }
        }
        Ok(accuracy_table(&records))
    }

    /// Fixed-width text with two-decimal percentages.
    pub fn to_text(&self) -> String {
        let mut lines = vec![vec![
            "Dataset".to_string(),
            "Selection".to_string(),
            "Size".to_string(),
            Method::SvmRfe.title().to_string(),
            Method::TsvmRfe.title().to_string(),
            Method::Glad.title().to_string(),
        ]];
        for ((dataset, with, genes, samples), cells) in &self.rows {
            let mut line = vec![
                dataset.clone(),
                if *with { "With Selection" } else { "Without Selection" }.to_string(),
                format!("{genes} Genes, {samples} Samples"),
            ];
            line.extend(cells.iter().map(|c| c.map(|v| format!("{v:.2}%")).unwrap_or_else(|| "-".into())));
            lines.push(line);
        }
        let widths: Vec<usize> = (0..6).map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for line in &lines {
            let cells: Vec<String> = line.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}
