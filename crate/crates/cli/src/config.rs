//! Run configuration files and seed sub-streams.
//!
//! A config is TOML with top-level keys and `[data]`, `[grid]`,
//! `[schedule]`, `[solver]` and `[glad]` tables. Relative paths are taken
//! from the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tsvm_rfe::eval::Method;
use tsvm_rfe::glad::{GladParams, ScoreCombination};
use tsvm_rfe::rfe::{HyperGrid, Mode, RfeConfig, RfeSchedule, Scorer};
use tsvm_rfe::tsvm::PositiveFraction;

/// Overrides the output directory of every command.
pub const OUTPUT_DIR_ENV: &str = "TSVM_RFE_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config: {0}")]
    Invalid(String),
    #[error("{what} {path} does not exist")]
    MissingPath { what: &'static str, path: PathBuf },
}

fn default_folds() -> usize {
    5
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub matrix: PathBuf,
    pub labels: PathBuf,
    /// Optional held-out labelled set scored by the refit models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_matrix: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
    /// Z-score every feature with statistics of the training matrix.
    #[serde(default)]
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub scorer: Scorer,
    pub tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_passes: Option<usize>,
    pub positive_fraction: PositiveFraction,
    pub anneal_factor: f64,
    pub c_star_initial_ratio: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let r = RfeConfig::default();
        SolverSection {
            scorer: r.scorer,
            tol: r.tol,
            max_passes: r.max_passes,
            positive_fraction: r.positive_fraction,
            anneal_factor: r.anneal_factor,
            c_star_initial_ratio: r.c_star_initial_ratio,
        }
    }
}

/// [`GladParams`] without its seeds, which come from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GladSection {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mutation_rate: Option<f64>,
    pub mixing_weight: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_ratios: Option<Vec<f64>>,
    pub tournament_size: usize,
    pub p_init: f64,
    pub combination: ScoreCombination,
}

impl Default for GladSection {
    fn default() -> Self {
        let g = GladParams::default();
        GladSection {
            population_size: g.population_size,
            generations: g.generations,
            crossover_rate: g.crossover_rate,
            mutation_rate: g.mutation_rate,
            mixing_weight: g.mixing_weight,
            expected_ratios: g.expected_ratios,
            tournament_size: g.tournament_size,
            p_init: g.p_init,
            combination: g.combination,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random stream; there is no clock-based default.
    pub seed: u64,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_name: Option<String>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "yes")]
    pub stratified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub data: DataSection,
    #[serde(default)]
    pub grid: HyperGrid,
    #[serde(default)]
    pub schedule: RfeSchedule,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub glad: GladSection,
    /// Present in manifests; ignored on input.
    #[serde(default, skip_serializing)]
    pub provenance: Option<toml::Value>,
}

/// Named seed derived from the run seed: the first 8 bytes of
/// `sha256("<seed>:<name>")`, little endian.
pub fn sub_seed(seed: u64, name: &str) -> u64 {
    let digest = Sha256::digest(format!("{seed}:{name}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubSeeds {
    pub folds: u64,
    pub ga: u64,
    pub kmeans: u64,
}

impl SubSeeds {
    pub fn from_seed(seed: u64) -> Self {
        SubSeeds {
            folds: sub_seed(seed, "folds"),
            ga: sub_seed(seed, "ga"),
            kmeans: sub_seed(seed, "kmeans"),
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn existing(what: &'static str, base: &Path, p: &Path) -> Result<PathBuf, ConfigError> {
    let full = resolve(base, p);
    full.canonicalize().map_err(|_| ConfigError::MissingPath { what, path: full })
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<RunConfig, ConfigError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::parse(&text, path)
    }

    /// Checks values that do not depend on the file system.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.data.test_matrix.is_some() != self.data.test_labels.is_some() {
            return bad("test_matrix and test_labels must be given together".into());
        }
        if let Some(mode) = self.mode() {
            self.schedule.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            self.grid.validate(mode).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        } else {
            self.glad_params(SubSeeds::from_seed(self.seed))
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if !(self.solver.tol > 0.0 && self.solver.anneal_factor > 1.0 && self.solver.c_star_initial_ratio > 0.0) {
            return bad("solver tol and c_star_initial_ratio must be positive and anneal_factor above 1".into());
        }
        Ok(())
    }

    /// Makes every data path absolute against `base` and checks that the
    /// files exist.
    pub fn resolve_paths(&mut self, base: &Path) -> Result<(), ConfigError> {
        self.data.matrix = existing("matrix file", base, &self.data.matrix)?;
        self.data.labels = existing("labels file", base, &self.data.labels)?;
        if let Some(p) = &self.data.test_matrix {
            self.data.test_matrix = Some(existing("test matrix file", base, p)?);
        }
        if let Some(p) = &self.data.test_labels {
            self.data.test_labels = Some(existing("test labels file", base, p)?);
        }
        if let Some(p) = &self.output_dir {
            self.output_dir = Some(resolve(base, p));
        }
        Ok(())
    }

    pub fn mode(&self) -> Option<Mode> {
        match self.method {
            Method::SvmRfe => Some(Mode::Svm),
            Method::TsvmRfe => Some(Mode::Tsvm),
            Method::Glad => None,
        }
    }

    pub fn rfe_config(&self, seeds: SubSeeds) -> RfeConfig {
        RfeConfig {
            grid: self.grid.clone(),
            schedule: self.schedule.clone(),
            mode: self.mode().unwrap_or(Mode::Svm),
            folds: self.folds,
            stratified: self.stratified,
            seed: seeds.folds,
            scorer: self.solver.scorer,
            tol: self.solver.tol,
            max_passes: self.solver.max_passes,
            positive_fraction: self.solver.positive_fraction,
            anneal_factor: self.solver.anneal_factor,
            c_star_initial_ratio: self.solver.c_star_initial_ratio,
        }
    }

    pub fn glad_params(&self, seeds: SubSeeds) -> GladParams {
        let g = &self.glad;
        GladParams {
            population_size: g.population_size,
            generations: g.generations,
            crossover_rate: g.crossover_rate,
            mutation_rate: g.mutation_rate,
            mixing_weight: g.mixing_weight,
            expected_ratios: g.expected_ratios.clone(),
            seed: seeds.ga,
            kmeans_seed: seeds.kmeans,
            tournament_size: g.tournament_size,
            p_init: g.p_init,
            combination: g.combination,
        }
    }

    pub fn dataset_label(&self) -> String {
        self.dataset_name.clone().unwrap_or_else(|| {
            self.data
                .matrix
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }

    /// TOML of the resolved config without its output directory, so that
    /// runs writing to different places share one manifest.
    pub fn manifest_body(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        c.provenance = None;
        toml::to_string(&c).expect("config serializes")
    }
}

/// Output directory by precedence: flag, then [`OUTPUT_DIR_ENV`], then
/// the config value, then `fallback`.
pub fn output_dir(flag: Option<&Path>, config: Option<&Path>, fallback: PathBuf) -> PathBuf {
    if let Some(f) = flag {
        return f.to_path_buf();
    }
    if let Some(env) = std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    config.map(Path::to_path_buf).unwrap_or(fallback)
}
