//! Recursive feature elimination driven by SVM or TSVM models.
//!
//! Each iteration trains every grid point on the current feature mask, keeps
//! the point with the lowest cross-validated error on the labelled samples,
//! scores the active features from a model refit on all training data with
//! that point, and prunes the lowest-scoring features.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, DataError, Dataset, Label};
use crate::eval::{self, CvResult, EvalError, FoldPlan, FoldPrediction, Trainer};
use crate::kernel::{CacheKey, GramCache, GramMatrix, Kernel, KernelError, KernelKind};
use crate::mask::FeatureMask;
use crate::svm::{self, SvmError, SvmModel};
use crate::tsvm::{self, PositiveFraction, TsvmError, TsvmParams};

#[derive(Debug, Error)]
pub enum RfeError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Tsvm(#[from] TsvmError),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("cannot prune a mask with {0} active features")]
    CannotPrune(usize),
    #[error("weights have length {weights}, mask has {mask}")]
    LengthMismatch { weights: usize, mask: usize },
    #[error("feature {0} is not present in the data")]
    UnknownFeature(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Svm,
    Tsvm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scorer {
    /// `|Σ α_i y_i x_it|`.
    #[default]
    Approx,
    /// `sqrt(|J − J'_t|)` with α held fixed.
    Exact,
}

/// Elimination path. Above `coarse_threshold` active features a
/// `coarse_fraction` of them is removed per iteration, above
/// `fine_threshold` a `medium_fraction`, and below it `fine_step` at a time.
/// A step never jumps past the next lower target count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfeSchedule {
    /// Features kept by the Pearson pre-filter; `None` keeps all.
    pub pre_filter_count: Option<usize>,
    pub coarse_fraction: f64,
    pub coarse_threshold: usize,
    pub medium_fraction: f64,
    pub fine_threshold: usize,
    pub fine_step: usize,
    /// Ascending, distinct, all at least 1.
    pub target_counts: Vec<usize>,
}

impl Default for RfeSchedule {
    fn default() -> Self {
        RfeSchedule {
            pre_filter_count: None,
            coarse_fraction: 0.5,
            coarse_threshold: 256,
            medium_fraction: 0.1,
            fine_threshold: 100,
            fine_step: 10,
            target_counts: vec![30, 40, 50, 60, 70],
        }
    }
}

impl RfeSchedule {
    pub fn validate(&self) -> Result<(), RfeError> {
        let bad = |m: String| Err(RfeError::Schedule(m));
        if self.target_counts.is_empty() || self.target_counts[0] < 1 {
            return bad("target counts must be non-empty and at least 1".into());
        }
        if self.target_counts.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("target counts must be strictly ascending: {:?}", self.target_counts));
        }
        if self.fine_step < 1 {
            return bad("fine_step must be at least 1".into());
        }
        for (name, f) in [("coarse_fraction", self.coarse_fraction), ("medium_fraction", self.medium_fraction)] {
            if !(f > 0.0 && f < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {f}"));
            }
        }
        if self.pre_filter_count == Some(0) {
            return bad("pre_filter_count must be positive".into());
        }
        Ok(())
    }

    pub fn floor(&self) -> usize {
        self.target_counts[0]
    }

    /// Active count after one pruning step from `active`.
    pub fn next_count(&self, active: usize) -> usize {
        let removal = if active > self.coarse_threshold {
            ((active as f64 * self.coarse_fraction).floor() as usize).max(1)
        } else if active > self.fine_threshold {
            ((active as f64 * self.medium_fraction).floor() as usize).max(1)
        } else {
            self.fine_step
        };
        let mut next = active.saturating_sub(removal);
        if let Some(&t) = self.target_counts.iter().rev().find(|&&t| t < active) {
            next = next.max(t);
        }
        next.max(self.floor().min(active)).max(1)
    }
}

/// Hyperparameter grid searched at every iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperGrid {
    pub c_values: Vec<f64>,
    /// Used in TSVM mode only.
    pub c_star_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
    pub degree_values: Vec<u32>,
    pub kernel_kinds: Vec<KernelKind>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            c_values: vec![1.0],
            c_star_values: vec![1.0],
            sigma_values: vec![1.0],
            degree_values: vec![2],
            kernel_kinds: vec![KernelKind::Linear],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub kernel: Kernel,
    pub c: f64,
    pub c_star: Option<f64>,
}

impl HyperGrid {
    pub fn validate(&self, mode: Mode) -> Result<(), RfeError> {
        let bad = |m: &str| Err(RfeError::Grid(m.to_string()));
        if self.kernel_kinds.is_empty() {
            return bad("no kernel kinds");
        }
        if self.c_values.is_empty() || self.c_values.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return bad("C values must be non-empty and positive");
        }
        if mode == Mode::Tsvm && (self.c_star_values.is_empty() || self.c_star_values.iter().any(|&c| !(c > 0.0 && c.is_finite()))) {
            return bad("C* values must be non-empty and positive");
        }
        for kind in &self.kernel_kinds {
            match kind {
                KernelKind::Rbf if self.sigma_values.is_empty() => return bad("RBF kernel without sigma values"),
                KernelKind::Poly if self.degree_values.is_empty() => return bad("polynomial kernel without degrees"),
                _ => {}
            }
        }
        for &s in &self.sigma_values {
            Kernel::rbf(s)?;
        }
        for &d in &self.degree_values {
            Kernel::poly(d)?;
        }
        Ok(())
    }

    /// Grid points in kernel, kernel parameter, C, C* order.
    pub fn points(&self, mode: Mode) -> Vec<GridPoint> {
        let mut kernels = Vec::new();
        for kind in &self.kernel_kinds {
            match kind {
                KernelKind::Linear => kernels.push(Kernel::Linear),
                KernelKind::Rbf => kernels.extend(self.sigma_values.iter().map(|&sigma| Kernel::Rbf { sigma })),
                KernelKind::Poly => kernels.extend(self.degree_values.iter().map(|&degree| Kernel::Poly { degree })),
            }
        }
        let stars: Vec<Option<f64>> = match mode {
            Mode::Svm => vec![None],
            Mode::Tsvm => self.c_star_values.iter().map(|&c| Some(c)).collect(),
        };
        let mut out = Vec::new();
        for kernel in kernels {
            for &c in &self.c_values {
                for &c_star in &stars {
                    out.push(GridPoint { kernel, c, c_star });
                }
            }
        }
        out
    }
}

/// Masked rows `z ∗ x`, full length.
fn masked_rows<R: AsRef<[f64]>>(rows: &[R], z: &FeatureMask) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| r.as_ref().iter().zip(z.values()).map(|(x, m)| x * m).collect())
        .collect()
}

pub(crate) fn weights_approx<R: AsRef<[f64]>>(coef: &[f64], rows: &[R], z: &FeatureMask) -> Vec<f64> {
    let xs = masked_rows(rows, z);
    (0..z.len())
        .map(|t| {
            if !z.is_active(t) {
                return 0.0;
            }
            coef.iter().zip(&xs).map(|(c, x)| c * x[t]).sum::<f64>().abs()
        })
        .collect()
}

pub(crate) fn weights_exact<R: AsRef<[f64]>>(coef: &[f64], rows: &[R], kernel: &Kernel, z: &FeatureMask) -> Vec<f64> {
    let support: Vec<usize> = (0..coef.len()).filter(|&i| coef[i] != 0.0).collect();
    let xs = masked_rows(rows, z);
    let s = support.len();
    let mut dots = vec![0.0; s * s];
    let mut dist2 = vec![0.0; s * s];
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            dots[a * s + b] = xs[i].iter().zip(&xs[j]).map(|(p, q)| p * q).sum();
            dist2[a * s + b] = xs[i].iter().zip(&xs[j]).map(|(p, q)| (p - q) * (p - q)).sum();
        }
    }
    let value = |dot: f64, d2: f64| -> f64 {
        match *kernel {
            Kernel::Linear => dot,
            Kernel::Rbf { sigma } => (-d2 / (2.0 * sigma * sigma)).exp(),
            Kernel::Poly { degree } => (dot + 1.0).powi(degree as i32),
        }
    };
    (0..z.len())
        .into_par_iter()
        .map(|t| {
            if !z.is_active(t) {
                return 0.0;
            }
            // J − J'_t = −½ ΣΣ c_i c_j (K_ij − K'_ij); the Σα terms cancel
            let mut delta = 0.0;
            for (a, &i) in support.iter().enumerate() {
                for (b, &j) in support.iter().enumerate() {
                    let (xi, xj) = (xs[i][t], xs[j][t]);
                    let full = value(dots[a * s + b], dist2[a * s + b]);
                    let removed = value(dots[a * s + b] - xi * xj, dist2[a * s + b] - (xi - xj) * (xi - xj));
                    delta += coef[i] * coef[j] * (full - removed);
                }
            }
            (0.5 * delta).abs().sqrt()
        })
        .collect()
}

fn model_coef(model: &SvmModel) -> Vec<f64> {
    model.alphas().iter().zip(model.labels()).map(|(a, y)| a * y).collect()
}

/// `s_t = sqrt(|J − J'_t|)`, where `J'_t` is the dual objective with feature
/// `t` removed from every kernel evaluation and α held fixed. For a linear
/// kernel this is `|w_t| / √2`. Inactive features score 0.
pub fn feature_weights_exact(model: &SvmModel) -> Vec<f64> {
    weights_exact(&model_coef(model), model.training_rows(), model.kernel(), model.mask())
}

/// `s_t = |Σ_i α_i y_i z_t x_it|`, which is `|w_t|` for a linear kernel.
pub fn feature_weights_approx(model: &SvmModel) -> Vec<f64> {
    weights_approx(&model_coef(model), model.training_rows(), model.mask())
}

/// Removes the lowest-weight active features, as many as one schedule step
/// prescribes. Equal weights remove the lower index first.
pub fn prune(z: &FeatureMask, weights: &[f64], schedule: &RfeSchedule) -> Result<FeatureMask, RfeError> {
    let (mask, _) = prune_with_removed(z, weights, schedule)?;
    Ok(mask)
}

fn prune_with_removed(z: &FeatureMask, weights: &[f64], schedule: &RfeSchedule) -> Result<(FeatureMask, Vec<usize>), RfeError> {
    if weights.len() != z.len() {
        return Err(RfeError::LengthMismatch {
            weights: weights.len(),
            mask: z.len(),
        });
    }
    let active = z.active_indices();
    if active.len() < 2 {
        return Err(RfeError::CannotPrune(active.len()));
    }
    let keep = schedule.next_count(active.len());
    if keep == 0 || keep >= active.len() {
        return Err(RfeError::CannotPrune(active.len()));
    }
    let mut order = active.clone();
    order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(a.cmp(&b)));
    let mut removed: Vec<usize> = order[..active.len() - keep].to_vec();
    removed.sort_unstable();
    let survivors: Vec<usize> = active.into_iter().filter(|t| removed.binary_search(t).is_err()).collect();
    Ok((FeatureMask::from_active(z.len(), &survivors), removed))
}

/// Everything `run_rfe` needs beyond the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeConfig {
    pub grid: HyperGrid,
    pub schedule: RfeSchedule,
    pub mode: Mode,
    pub folds: usize,
    pub stratified: bool,
    /// Seed of the fold split.
    pub seed: u64,
    pub scorer: Scorer,
    pub tol: f64,
    pub max_passes: Option<usize>,
    pub positive_fraction: PositiveFraction,
    pub anneal_factor: f64,
    /// `C*_initial = c_star_initial_ratio · C*`.
    pub c_star_initial_ratio: f64,
}

impl Default for RfeConfig {
    fn default() -> Self {
        RfeConfig {
            grid: HyperGrid::default(),
            schedule: RfeSchedule::default(),
            mode: Mode::Svm,
            folds: 5,
            stratified: true,
            seed: 0,
            scorer: Scorer::Approx,
            tol: 1e-3,
            max_passes: None,
            positive_fraction: PositiveFraction::Auto,
            anneal_factor: 2.0,
            c_star_initial_ratio: 1e-5,
        }
    }
}

impl RfeConfig {
    fn tsvm_params(&self, point: &GridPoint) -> TsvmParams {
        let c_star = point.c_star.unwrap_or(point.c);
        TsvmParams {
            c: point.c,
            c_star,
            kernel: point.kernel,
            positive_fraction: self.positive_fraction,
            anneal_factor: self.anneal_factor,
            c_star_initial: Some(self.c_star_initial_ratio * c_star),
            tol: self.tol,
            max_passes: self.max_passes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeRecord {
    pub iteration: usize,
    pub active_count: usize,
    pub active_feature_ids: Vec<String>,
    /// Removed by the pruning step that follows this iteration.
    pub removed_feature_ids: Vec<String>,
    pub cv_error: f64,
    pub fold_errors: Vec<f64>,
    pub chosen: GridPoint,
    /// CV error of every grid point, in grid order.
    pub grid_errors: Vec<f64>,
    /// False if any fold or the refit failed to converge.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeTrace {
    pub mode: Mode,
    pub iterations: Vec<RfeRecord>,
    /// Index into `iterations` of the lowest CV error, ties to fewer
    /// features.
    pub best: usize,
    /// Mask of the best record over the input dataset's features.
    pub best_mask: FeatureMask,
    /// Mask after the last iteration over the input dataset's features.
    pub final_mask: FeatureMask,
    pub fold_plan: FoldPlan,
    pub fold_fingerprint: String,
}

impl RfeTrace {
    pub fn best_record(&self) -> &RfeRecord {
        &self.iterations[self.best]
    }

    pub fn converged(&self) -> bool {
        self.iterations.iter().all(|r| r.converged)
    }

    pub fn record_at(&self, count: usize) -> Option<&RfeRecord> {
        self.iterations.iter().find(|r| r.active_count == count)
    }

    pub const CSV_HEADER: [&'static str; 12] = [
        "iteration",
        "active_count",
        "cv_error",
        "kernel",
        "sigma",
        "degree",
        "c",
        "c_star",
        "converged",
        "fold_errors",
        "grid_errors",
        "removed_feature_ids",
    ];

    /// Rows matching [`RfeTrace::CSV_HEADER`]; list cells are `;`-joined.
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        self.iterations
            .iter()
            .map(|r| {
                let (sigma, degree) = match r.chosen.kernel {
                    Kernel::Linear => (String::new(), String::new()),
                    Kernel::Rbf { sigma } => (sigma.to_string(), String::new()),
                    Kernel::Poly { degree } => (String::new(), degree.to_string()),
                };
                vec![
                    r.iteration.to_string(),
                    r.active_count.to_string(),
                    r.cv_error.to_string(),
                    r.chosen.kernel.kind().name().to_string(),
                    sigma,
                    degree,
                    r.chosen.c.to_string(),
                    r.chosen.c_star.map(|c| c.to_string()).unwrap_or_default(),
                    r.converged.to_string(),
                    join(&r.fold_errors),
                    join(&r.grid_errors),
                    r.removed_feature_ids.join(";"),
                ]
            })
            .collect()
    }
}

/// CV trainer over a Gram matrix shared by all folds of an iteration.
struct GramTrainer<'a> {
    g: &'a GramMatrix,
    labels: &'a [Label],
    point: GridPoint,
    config: &'a RfeConfig,
}

fn signs(labels: &[Label], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| labels[i].sign().expect("labelled")).collect()
}

impl Trainer for GramTrainer<'_> {
    type Error = RfeError;

    fn fit_predict(&self, train: &[usize], unlabelled: &[usize], test: &[usize]) -> Result<FoldPrediction, RfeError> {
        let y = signs(self.labels, train);
        let predict = |f: f64| Label::from_sign(if f >= 0.0 { 1.0 } else { -1.0 });
        match self.config.mode {
            Mode::Svm => {
                svm::check_labels(&y)?;
                let dual = svm::solve_dual(
                    &svm::sub_gram(self.g, train),
                    &y,
                    &vec![self.point.c; y.len()],
                    self.config.tol,
                    self.config.max_passes,
                    None,
                );
                Ok(FoldPrediction {
                    predictions: test
                        .iter()
                        .map(|&q| predict(tsvm::decision_on_gram(self.g, train, &y, &dual, q)))
                        .collect(),
                    converged: dual.converged,
                })
            }
            Mode::Tsvm => {
                let fit = tsvm::fit_transductive(self.g, train, &y, unlabelled, &self.config.tsvm_params(&self.point))?;
                Ok(FoldPrediction {
                    predictions: test.iter().map(|&q| predict(fit.decision(self.g, q))).collect(),
                    converged: fit.converged,
                })
            }
        }
    }
}

/// Coefficients `α_i y_i` and row indices of the model refit on every
/// labelled sample (plus every unlabelled one in TSVM mode).
fn refit(g: &GramMatrix, d: &Dataset, point: &GridPoint, config: &RfeConfig) -> Result<(Vec<usize>, Vec<f64>, bool), RfeError> {
    let labelled = d.labelled_indices();
    let y = signs(d.labels(), &labelled);
    match config.mode {
        Mode::Svm => {
            svm::check_labels(&y)?;
            let dual = svm::solve_dual(
                &svm::sub_gram(g, &labelled),
                &y,
                &vec![point.c; y.len()],
                config.tol,
                config.max_passes,
                None,
            );
            let coef = dual.alpha.iter().zip(&y).map(|(a, y)| a * y).collect();
            Ok((labelled, coef, dual.converged))
        }
        Mode::Tsvm => {
            let fit = tsvm::fit_transductive(g, &labelled, &y, &d.unlabelled_indices(), &config.tsvm_params(point))?;
            let coef = fit.dual.alpha.iter().zip(&fit.labels).map(|(a, y)| a * y).collect();
            Ok((fit.union, coef, fit.converged))
        }
    }
}

fn lift(mask: &FeatureMask, kept: &[usize], n: usize) -> FeatureMask {
    let active: Vec<usize> = mask.active_indices().into_iter().map(|t| kept[t]).collect();
    FeatureMask::from_active(n, &active)
}

/// Runs the full elimination loop; see the module docs.
pub fn run_rfe(data: &Dataset, config: &RfeConfig) -> Result<RfeTrace, RfeError> {
    config.schedule.validate()?;
    config.grid.validate(config.mode)?;
    data.ensure_trainable()?;
    let points = config.grid.points(config.mode);

    let n_input = data.n_features();
    let (work, kept): (Dataset, Vec<usize>) = match config.schedule.pre_filter_count {
        Some(count) if count < n_input => {
            let scores = data::pearson_filter_scores(data)?;
            let kept = data::top_feature_indices(&scores, count)?;
            (data.select_features(&kept), kept)
        }
        _ => (data.clone(), (0..n_input).collect()),
    };
    let plan = eval::folds_for(&work, config.folds, config.stratified, config.seed)?;
    let rows: Vec<&[f64]> = (0..work.n_samples()).map(|i| work.row(i)).collect();
    let cache = GramCache::default();

    let mut z = FeatureMask::ones(work.n_features());
    let mut iterations: Vec<RfeRecord> = Vec::new();
    let mut masks: Vec<FeatureMask> = Vec::new();
    loop {
        let mut kernels: Vec<Kernel> = points.iter().map(|p| p.kernel).collect();
        kernels.dedup();
        let grams: Vec<std::sync::Arc<GramMatrix>> = kernels
            .iter()
            .map(|k| {
                cache.get_or_try_insert(CacheKey::new(k, &z, "all"), || crate::kernel::gram(k, &rows, &z))
            })
            .collect::<Result<_, _>>()?;
        let gram_for = |k: &Kernel| -> &GramMatrix { &grams[kernels.iter().position(|x| x == k).expect("kernel in grid")] };

        let results: Vec<CvResult> = points
            .par_iter()
            .map(|point| {
                let trainer = GramTrainer {
                    g: gram_for(&point.kernel),
                    labels: work.labels(),
                    point: *point,
                    config,
                };
                eval::cv_error(&work, &trainer, &plan)
            })
            .collect::<Result<_, _>>()?;
        let best_point = (0..points.len())
            .min_by(|&a, &b| results[a].error.total_cmp(&results[b].error).then(a.cmp(&b)))
            .expect("grid is non-empty");
        let point = points[best_point];
        let (idx, coef, refit_converged) = refit(gram_for(&point.kernel), &work, &point, config)?;
        let fit_rows: Vec<&[f64]> = idx.iter().map(|&i| work.row(i)).collect();
        let weights = match config.scorer {
            Scorer::Approx => weights_approx(&coef, &fit_rows, &z),
            Scorer::Exact => weights_exact(&coef, &fit_rows, &point.kernel, &z),
        };

        let active = z.active_indices();
        let ids = |ts: &[usize]| -> Vec<String> { ts.iter().map(|&t| work.feature_ids()[t].clone()).collect() };
        let mut record = RfeRecord {
            iteration: iterations.len(),
            active_count: active.len(),
            active_feature_ids: ids(&active),
            removed_feature_ids: Vec::new(),
            cv_error: results[best_point].error,
            fold_errors: results[best_point].fold_errors.clone(),
            chosen: point,
            grid_errors: results.iter().map(|r| r.error).collect(),
            converged: refit_converged && results[best_point].complete,
        };
        masks.push(z.clone());
        let done = active.len() <= config.schedule.floor() || active.len() < 2;
        if done {
            iterations.push(record);
            break;
        }
        let (next, removed) = prune_with_removed(&z, &weights, &config.schedule)?;
        log::debug!("rfe iteration {}: {} -> {} features", record.iteration, active.len(), next.popcount());
        record.removed_feature_ids = ids(&removed);
        iterations.push(record);
        z = next;
    }

    let best = (0..iterations.len())
        .min_by(|&a, &b| {
            iterations[a]
                .cv_error
                .total_cmp(&iterations[b].cv_error)
                .then(iterations[a].active_count.cmp(&iterations[b].active_count))
        })
        .expect("at least one iteration");
    Ok(RfeTrace {
        mode: config.mode,
        best,
        best_mask: lift(&masks[best], &kept, n_input),
        final_mask: lift(masks.last().expect("at least one iteration"), &kept, n_input),
        fold_fingerprint: plan.fingerprint(),
        fold_plan: plan,
        iterations,
    })
}

/// Test-set predictor trained on the features active at one trace record.
pub enum RefitModel {
    Svm(SvmModel),
    Tsvm(tsvm::TsvmModel),
}

impl RefitModel {
    pub fn predict(&self, x: &[f64]) -> Result<Label, SvmError> {
        match self {
            RefitModel::Svm(m) => m.predict(x),
            RefitModel::Tsvm(m) => m.predict(x),
        }
    }
}

fn mask_of(data: &Dataset, ids: &[String]) -> Result<FeatureMask, RfeError> {
    let active = ids
        .iter()
        .map(|id| {
            data.feature_ids()
                .iter()
                .position(|f| f == id)
                .ok_or_else(|| RfeError::UnknownFeature(id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureMask::from_active(data.n_features(), &active))
}

/// Refits the record's chosen grid point on all of `data` with the record's
/// active features.
pub fn refit_at(data: &Dataset, record: &RfeRecord, config: &RfeConfig) -> Result<RefitModel, RfeError> {
    let z = mask_of(data, &record.active_feature_ids)?;
    let point = &record.chosen;
    Ok(match config.mode {
        Mode::Svm => {
            let params = svm::SvmParams {
                c: point.c,
                kernel: point.kernel,
                tol: config.tol,
                max_passes: config.max_passes,
            };
            RefitModel::Svm(svm::train_svm_dataset(data, &params, &z)?)
        }
        Mode::Tsvm => RefitModel::Tsvm(tsvm::train_tsvm(data, &config.tsvm_params(point), &z)?),
    })
}

/// Misclassified fraction of the labelled samples of `test` under
/// [`refit_at`]. `test` must carry the same feature ids as `data`.
pub fn holdout_error(data: &Dataset, test: &Dataset, record: &RfeRecord, config: &RfeConfig) -> Result<f64, RfeError> {
    if test.feature_ids() != data.feature_ids() {
        let missing = data
            .feature_ids()
            .iter()
            .zip(test.feature_ids())
            .find(|(a, b)| a != b)
            .map(|(a, _)| a.clone())
            .unwrap_or_else(|| format!("count {}", data.n_features()));
        return Err(RfeError::UnknownFeature(missing));
    }
    let model = refit_at(data, record, config)?;
    let labelled = test.labelled_indices();
    let mut wrong = 0usize;
    for &i in &labelled {
        if model.predict(test.row(i))? != test.labels()[i] {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / labelled.len().max(1) as f64)
}
