//! The `run`, `compare` and `synth` commands.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsvm_rfe::data::{self, load_dataset, normalize, Dataset};
use tsvm_rfe::eval::{
    self, accuracy_table, cv_error, holdout_error_curve, paired_t_test, sweep_error_curve, AccuracyRecord, AccuracyTable,
    CvResult, ErrorCurve, EvalError, Method,
};
use tsvm_rfe::glad::{run_glad, GladError, GladResult, LdaTrainer};
use tsvm_rfe::rfe::{run_rfe, RfeError, RfeTrace};
use tsvm_rfe::synth::{self, SynthError, SynthSpec};
use tsvm_rfe::tsvm::TsvmError;

use crate::config::{self, ConfigError, RunConfig, SubSeeds};
use crate::output::{csv_text, digest_comment, file_sha256, sha256_hex, Artifacts};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const SUMMARY_FILE: &str = "run.json";
pub const TRACE_CSV: &str = "trace.csv";
pub const TRACE_JSON: &str = "trace.json";
pub const CURVES_CSV: &str = "curves.csv";
pub const ACCURACY_CSV: &str = "accuracy.csv";
pub const ACCURACY_TXT: &str = "accuracy.txt";
pub const FEATURES_CSV: &str = "selected_features.csv";
pub const GLAD_HISTORY_CSV: &str = "glad_history.csv";
pub const COMPARISON_CSV: &str = "comparison.csv";

/// A command failure with its process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Exit 2: unreadable or invalid configuration or arguments.
    Config(String),
    /// Exit 3: input data that cannot be used.
    Data(String),
    /// Exit 4: a solver stopped at its pass limit; artifacts were written.
    NotConverged(PathBuf),
    /// Exit 5: runs that do not share fold assignments.
    FoldMismatch(String),
    /// Exit 1: anything else.
    Other(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::NotConverged(_) => 4,
            Failure::FoldMismatch(_) => 5,
            Failure::Other(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::NotConverged(dir) => write!(
                f,
                "solver did not converge; artifacts in {} are flagged converged = false",
                dir.display()
            ),
            Failure::FoldMismatch(m) => write!(f, "fold mismatch: {m}"),
            Failure::Other(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::MissingPath { .. } => Failure::Data(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn io_failure(what: &str) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Other(format!("{what}: {e}"))
}

fn rfe_failure(e: RfeError) -> Failure {
    match e {
        RfeError::Data(_) | RfeError::Eval(_) | RfeError::UnknownFeature(_) | RfeError::Tsvm(TsvmError::Data(_)) => {
            Failure::Data(e.to_string())
        }
        RfeError::Schedule(_) | RfeError::Grid(_) => Failure::Config(e.to_string()),
        _ => Failure::Other(e.to_string()),
    }
}

fn glad_failure(e: GladError) -> Failure {
    match e {
        GladError::InvalidParams(_) => Failure::Config(e.to_string()),
        _ => Failure::Data(e.to_string()),
    }
}

fn eval_failure(e: EvalError) -> Failure {
    Failure::Data(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact_version: String,
    pub command: String,
    /// Derived seeds in decimal; TOML integers stop at `i64::MAX`.
    pub seeds: BTreeMap<String, String>,
    /// SHA-256 of every input file, keyed by role.
    pub inputs: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct ManifestTail<'a> {
    provenance: &'a Provenance,
}

/// Manifest text: the resolved config followed by a `[provenance]` table.
pub fn manifest_text(config: &RunConfig, provenance: &Provenance) -> String {
    let tail = toml::to_string(&ManifestTail { provenance }).expect("provenance serializes");
    format!("{}\n{}", config.manifest_body(), tail)
}

/// One point of a run's error profile, as read by `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub genes: usize,
    pub cv_error: f64,
    /// `None` marks a failed fold.
    pub fold_errors: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub dataset: String,
    pub manifest_sha256: String,
    pub fold_fingerprint: String,
    pub converged: bool,
    pub samples: usize,
    pub best_genes: usize,
    pub best_cv_error: f64,
    pub records: Vec<SummaryRecord>,
    pub selected_features: Vec<String>,
}

fn finite(values: &[f64]) -> Vec<Option<f64>> {
    values.iter().map(|v| v.is_finite().then_some(*v)).collect()
}

#[derive(Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub converged: bool,
    pub summary: RunSummary,
}

struct Inputs {
    data: Dataset,
    test: Option<Dataset>,
    digests: BTreeMap<String, String>,
}

fn load_inputs(config: &RunConfig) -> Result<Inputs, Failure> {
    let load = |m: &Path, l: &Path| load_dataset(m, l).map_err(|e| Failure::Data(e.to_string()));
    let d = &config.data;
    let mut data = load(&d.matrix, &d.labels)?;
    data.ensure_trainable().map_err(|e| Failure::Data(e.to_string()))?;
    let mut test = match (&d.test_matrix, &d.test_labels) {
        (Some(m), Some(l)) => Some(load(m, l)?),
        _ => None,
    };
    if let Some(t) = &test {
        if t.feature_ids() != data.feature_ids() {
            return Err(Failure::Data("test matrix features differ from the training matrix".into()));
        }
    }
    if d.standardize {
        let (scaled, s) = normalize(&data);
        data = scaled;
        test = test.map(|t| s.transform(&t));
    }
    let mut digests = BTreeMap::new();
    let mut digest = |role: &str, p: &Path| -> Result<(), Failure> {
        digests.insert(role.to_string(), file_sha256(p).map_err(io_failure("reading input"))?);
        Ok(())
    };
    digest("matrix", &d.matrix)?;
    digest("labels", &d.labels)?;
    if let (Some(m), Some(l)) = (&d.test_matrix, &d.test_labels) {
        digest("test_matrix", m)?;
        digest("test_labels", l)?;
    }
    Ok(Inputs { data, test, digests })
}

fn curve_rows(curves: &[ErrorCurve]) -> Vec<Vec<String>> {
    curves.iter().flat_map(|c| c.csv_rows()).map(|r| r.to_vec()).collect()
}

fn accuracy_files(artifacts: &mut Artifacts, digest: &str, records: &[AccuracyRecord]) {
    let table = accuracy_table(records);
    artifacts.add(ACCURACY_CSV, digest_comment(digest) + &table.to_csv());
    artifacts.add(ACCURACY_TXT, table.to_text());
}

fn features_csv(digest: &str, ids: &[String]) -> String {
    let rows: Vec<Vec<&str>> = ids.iter().map(|id| vec![id.as_str()]).collect();
    csv_text(digest, &["feature_id"], &rows)
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("artifact serializes") + "\n"
}

/// Builds the RFE artifacts; returns the summary.
fn rfe_artifacts(
    config: &RunConfig,
    seeds: SubSeeds,
    inputs: &Inputs,
    digest: &str,
    artifacts: &mut Artifacts,
) -> Result<RunSummary, Failure> {
    let rc = config.rfe_config(seeds);
    let data = &inputs.data;
    let trace: RfeTrace = run_rfe(data, &rc).map_err(rfe_failure)?;
    let method = config.method;
    artifacts.add(TRACE_CSV, csv_text(digest, &RfeTrace::CSV_HEADER, &trace.csv_rows()));
    artifacts.add(TRACE_JSON, json(&trace));

    let present: Vec<usize> = config
        .schedule
        .target_counts
        .iter()
        .copied()
        .filter(|&c| trace.record_at(c).is_some())
        .collect();
    let mut curves = vec![sweep_error_curve(&trace, &present, &format!("{}:cv", method.name())).map_err(eval_failure)?];
    if let Some(test) = &inputs.test {
        curves.push(
            holdout_error_curve(data, test, &trace, &rc, &present, &format!("{}:test", method.name())).map_err(rfe_failure)?,
        );
    }
    artifacts.add(CURVES_CSV, csv_text(digest, &["method", "gene_count", "error_percent"], &curve_rows(&curves)));

    let best = trace.best_record();
    let first = &trace.iterations[0];
    let dataset = config.dataset_label();
    let record = |with_selection: bool, genes: usize, err: f64| AccuracyRecord {
        method,
        dataset: dataset.clone(),
        with_selection,
        genes,
        samples: data.n_samples(),
        accuracy: 100.0 * (1.0 - err),
    };
    accuracy_files(
        artifacts,
        digest,
        &[record(true, best.active_count, best.cv_error), record(false, first.active_count, first.cv_error)],
    );
    let selected: Vec<String> = trace.best_mask.active_indices().iter().map(|&t| data.feature_ids()[t].clone()).collect();
    artifacts.add(FEATURES_CSV, features_csv(digest, &selected));

    let mut records: Vec<SummaryRecord> = trace
        .iterations
        .iter()
        .map(|r| SummaryRecord {
            genes: r.active_count,
            cv_error: r.cv_error,
            fold_errors: finite(&r.fold_errors),
        })
        .collect();
    records.sort_by_key(|r| r.genes);
    Ok(RunSummary {
        method,
        dataset,
        manifest_sha256: digest.to_string(),
        fold_fingerprint: trace.fold_fingerprint.clone(),
        converged: trace.converged(),
        samples: data.n_samples(),
        best_genes: best.active_count,
        best_cv_error: best.cv_error,
        records,
        selected_features: selected,
    })
}

fn glad_artifacts(
    config: &RunConfig,
    seeds: SubSeeds,
    inputs: &Inputs,
    digest: &str,
    artifacts: &mut Artifacts,
) -> Result<RunSummary, Failure> {
    let data = &inputs.data;
    let params = config.glad_params(seeds);
    let result: GladResult = run_glad(data, &params).map_err(glad_failure)?;
    artifacts.add(GLAD_HISTORY_CSV, csv_text(digest, &GladResult::CSV_HEADER, &result.csv_rows()));

    let plan = eval::folds_for(data, config.folds, config.stratified, seeds.folds).map_err(eval_failure)?;
    let cv = |mask: Vec<bool>| -> Result<CvResult, Failure> {
        cv_error(data, &LdaTrainer { data, mask }, &plan).map_err(eval_failure)
    };
    let n = data.n_features();
    let genes = result.best.popcount();
    let best_cv = cv(result.best.mask.clone())?;
    let all_cv = cv(vec![true; n])?;
    let mut records = vec![SummaryRecord {
        genes,
        cv_error: best_cv.error,
        fold_errors: finite(&best_cv.fold_errors),
    }];
    if genes != n {
        records.push(SummaryRecord {
            genes: n,
            cv_error: all_cv.error,
            fold_errors: finite(&all_cv.fold_errors),
        });
    }
    let curve = ErrorCurve {
        method: "glad:cv".into(),
        points: records.iter().map(|r| (r.genes, 100.0 * r.cv_error)).collect(),
    };
    artifacts.add(CURVES_CSV, csv_text(digest, &["method", "gene_count", "error_percent"], &curve_rows(&[curve])));

    let dataset = config.dataset_label();
    let record = |with_selection: bool, genes: usize, err: f64| AccuracyRecord {
        method: Method::Glad,
        dataset: dataset.clone(),
        with_selection,
        genes,
        samples: data.n_samples(),
        accuracy: 100.0 * (1.0 - err),
    };
    accuracy_files(artifacts, digest, &[record(true, genes, best_cv.error), record(false, n, all_cv.error)]);
    let selected = result.selected_features(data);
    artifacts.add(FEATURES_CSV, features_csv(digest, &selected));
    artifacts.add("glad_result.json", json(&result));
    Ok(RunSummary {
        method: Method::Glad,
        dataset,
        manifest_sha256: digest.to_string(),
        fold_fingerprint: plan.fingerprint(),
        converged: best_cv.complete && all_cv.complete,
        samples: data.n_samples(),
        best_genes: genes,
        best_cv_error: best_cv.error,
        records,
        selected_features: selected,
    })
}

/// Runs the pipeline for `config_path`. Nothing is written unless the
/// config and data validate.
pub fn cmd_run(config_path: &Path, output_flag: Option<&Path>) -> Result<RunOutcome, Failure> {
    let mut config = RunConfig::load(config_path)?;
    let base = config_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    config.resolve_paths(&base)?;
    let out = config::output_dir(output_flag, config.output_dir.as_deref(), base.join("out"));
    let inputs = load_inputs(&config)?;

    let seeds = SubSeeds::from_seed(config.seed);
    let provenance = Provenance {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        command: "run".into(),
        seeds: [("folds", seeds.folds), ("ga", seeds.ga), ("kmeans", seeds.kmeans)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
        inputs: inputs.digests.clone(),
    };
    let manifest = manifest_text(&config, &provenance);
    let digest = sha256_hex(manifest.as_bytes());
    log::info!("run {} on {} with manifest {digest}", config.method, config.dataset_label());

    let mut artifacts = Artifacts::default();
    artifacts.add(MANIFEST_FILE, manifest);
    let summary = match config.method {
        Method::Glad => glad_artifacts(&config, seeds, &inputs, &digest, &mut artifacts)?,
        _ => rfe_artifacts(&config, seeds, &inputs, &digest, &mut artifacts)?,
    };
    artifacts.add(SUMMARY_FILE, json(&summary));
    let files = artifacts.write_all(&out).map_err(io_failure("writing artifacts"))?;
    if !summary.converged {
        return Err(Failure::NotConverged(out));
    }
    Ok(RunOutcome {
        output_dir: out,
        files,
        converged: summary.converged,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub run_a: String,
    pub run_b: String,
    pub method_a: Method,
    pub method_b: Method,
    pub genes_a: usize,
    pub genes_b: usize,
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    pub significant_at_95: bool,
    pub mean_difference: f64,
}

impl Comparison {
    const HEADER: [&'static str; 10] = [
        "run_a",
        "run_b",
        "method_a",
        "method_b",
        "genes_a",
        "genes_b",
        "t_statistic",
        "degrees_of_freedom",
        "significant_at_95",
        "mean_difference",
    ];

    fn row(&self) -> Vec<String> {
        vec![
            self.run_a.clone(),
            self.run_b.clone(),
            self.method_a.name().into(),
            self.method_b.name().into(),
            self.genes_a.to_string(),
            self.genes_b.to_string(),
            self.t_statistic.to_string(),
            self.degrees_of_freedom.to_string(),
            self.significant_at_95.to_string(),
            self.mean_difference.to_string(),
        ]
    }
}

#[derive(Debug)]
pub struct CompareOutcome {
    pub output_dir: PathBuf,
    pub comparisons: Vec<Comparison>,
    pub table: AccuracyTable,
}

fn read_summary(dir: &Path) -> Result<RunSummary, Failure> {
    let path = dir.join(SUMMARY_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn complete(r: &SummaryRecord) -> Option<Vec<f64>> {
    r.fold_errors.iter().copied().collect()
}

/// Paired t-tests between every pair of runs at each shared gene count, or
/// at each run's best count when they share none.
pub fn cmd_compare(dirs: &[PathBuf], output_flag: Option<&Path>) -> Result<CompareOutcome, Failure> {
    if dirs.len() < 2 {
        return Err(Failure::Config("compare needs at least two run directories".into()));
    }
    let summaries: Vec<RunSummary> = dirs.iter().map(|d| read_summary(d)).collect::<Result<_, _>>()?;
    let reference = &summaries[0].fold_fingerprint;
    if let Some((i, s)) = summaries.iter().enumerate().find(|(_, s)| &s.fold_fingerprint != reference) {
        return Err(Failure::FoldMismatch(format!(
            "{} and {} were cross-validated on different folds (fingerprints {} and {}); the paired test needs shared splits",
            dirs[0].display(),
            dirs[i].display(),
            reference,
            s.fold_fingerprint
        )));
    }
    let label = |i: usize| dirs[i].display().to_string();
    let mut comparisons = Vec::new();
    for a in 0..summaries.len() {
        for b in a + 1..summaries.len() {
            let (sa, sb) = (&summaries[a], &summaries[b]);
            let mut pairs: Vec<(&SummaryRecord, &SummaryRecord)> = sa
                .records
                .iter()
                .filter_map(|ra| sb.records.iter().find(|rb| rb.genes == ra.genes).map(|rb| (ra, rb)))
                .collect();
            if pairs.is_empty() {
                let best = |s: &'_ RunSummary| s.records.iter().find(|r| r.genes == s.best_genes).cloned();
                if let (Some(x), Some(y)) = (best(sa), best(sb)) {
                    let x = sa.records.iter().find(|r| **r == x).expect("present");
                    let y = sb.records.iter().find(|r| **r == y).expect("present");
                    pairs.push((x, y));
                }
            }
            for (ra, rb) in pairs {
                let (Some(ea), Some(eb)) = (complete(ra), complete(rb)) else {
                    log::warn!("skipping {} genes: a fold failed", ra.genes);
                    continue;
                };
                let t = paired_t_test(&ea, &eb).map_err(eval_failure)?;
                comparisons.push(Comparison {
                    run_a: label(a),
                    run_b: label(b),
                    method_a: sa.method,
                    method_b: sb.method,
                    genes_a: ra.genes,
                    genes_b: rb.genes,
                    t_statistic: t.t_statistic,
                    degrees_of_freedom: t.degrees_of_freedom,
                    significant_at_95: t.significant_at_95,
                    mean_difference: t.mean_difference,
                });
            }
        }
    }

    let mut records = Vec::new();
    for d in dirs {
        let path = d.join(ACCURACY_CSV);
        let text = std::fs::read_to_string(&path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        records.extend(AccuracyTable::from_csv(&text).map_err(eval_failure)?.records());
    }
    let table = accuracy_table(&records);

    let mut manifest = String::from("command = \"compare\"\n");
    manifest.push_str(&format!("artifact_version = \"{}\"\n", env!("CARGO_PKG_VERSION")));
    for s in &summaries {
        manifest.push_str(&format!(
            "\n[[runs]]\nmethod = \"{}\"\ndataset = {:?}\nmanifest_sha256 = \"{}\"\n",
            s.method.name(),
            s.dataset,
            s.manifest_sha256
        ));
    }
    let digest = sha256_hex(manifest.as_bytes());
    let mut artifacts = Artifacts::default();
    artifacts.add(MANIFEST_FILE, manifest);
    let rows: Vec<Vec<String>> = comparisons.iter().map(Comparison::row).collect();
    artifacts.add(COMPARISON_CSV, csv_text(&digest, &Comparison::HEADER, &rows));
    accuracy_files(&mut artifacts, &digest, &records);
    let out = config::output_dir(output_flag, None, PathBuf::from("comparison"));
    artifacts.write_all(&out).map_err(io_failure("writing artifacts"))?;
    Ok(CompareOutcome {
        output_dir: out,
        comparisons,
        table,
    })
}

#[derive(Serialize)]
struct SynthManifest<'a> {
    command: &'a str,
    artifact_version: &'a str,
    generator_seed: String,
    /// Generator parameters with the root seed, so they re-create the run.
    synth: &'a SynthSpec,
}

/// Writes a synthetic dataset; `seed` is the root seed and the generator
/// draws from its `synth` sub-stream.
pub fn cmd_synth(spec: SynthSpec, output: &Path) -> Result<Vec<PathBuf>, Failure> {
    let drawn = SynthSpec {
        seed: config::sub_seed(spec.seed, "synth"),
        ..spec
    };
    let data = synth::generate(&drawn).map_err(|e| match e {
        SynthError::Dimensions(_) => Failure::Config(e.to_string()),
        _ => Failure::Other(e.to_string()),
    })?;
    let manifest = toml::to_string(&SynthManifest {
        command: "synth",
        artifact_version: env!("CARGO_PKG_VERSION"),
        generator_seed: drawn.seed.to_string(),
        synth: &spec,
    })
    .expect("manifest serializes");
    let digest = sha256_hex(manifest.as_bytes());
    let mut artifacts = Artifacts::default();
    artifacts.add(MANIFEST_FILE, manifest);
    artifacts.add(synth::MATRIX_FILE, digest_comment(&digest) + &data::matrix_to_csv(&data.dataset));
    artifacts.add(synth::LABELS_FILE, digest_comment(&digest) + &data::labels_to_csv(&data.dataset));
    artifacts.add(synth::TRUTH_FILE, json(&data.sidecar(&drawn)));
    artifacts.write_all(output).map_err(io_failure("writing artifacts"))
}
