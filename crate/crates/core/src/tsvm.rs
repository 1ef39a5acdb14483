//! Transductive SVM by label switching with an annealed unlabelled penalty.
//!
//! Minimizes `½‖w‖² + C Σ ξ_i + C* Σ ξ*_j` jointly over the separator and the
//! pseudo-labels `y*_j` of the unlabelled samples:
//!
//! 1. train the inductive SVM on the labelled samples;
//! 2. label the `⌈p·k⌉` unlabelled samples with the highest decision values
//!    `+1` and the rest `−1`;
//! 3. starting from a small `C*`, swap a `(+1, −1)` pseudo-label pair whose
//!    slacks are both positive and sum to more than 2, re-train, and repeat;
//! 4. when no pair qualifies, grow `C*` geometrically until it reaches its
//!    final value and no pair qualifies there either.
//!
//! Every accepted swap strictly lowers the objective at the current `C*`;
//! a swap whose re-trained objective fails to drop (solver tolerance) is
//! rolled back and ends the level.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, Label};
use crate::kernel::{self, GramMatrix, Kernel};
use crate::mask::FeatureMask;
use crate::svm::{self, DualSolution, SvmError, SvmModel, SvmParams};

#[derive(Debug, Error)]
pub enum TsvmError {
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Share of unlabelled samples that start with a `+1` pseudo-label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositiveFraction {
    /// Fraction of `+1` among the labelled samples.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsvmParams {
    pub c: f64,
    pub c_star: f64,
    pub kernel: Kernel,
    pub positive_fraction: PositiveFraction,
    pub anneal_factor: f64,
    /// `None` means `1e-5 * c_star`.
    pub c_star_initial: Option<f64>,
    pub tol: f64,
    pub max_passes: Option<usize>,
}

impl Default for TsvmParams {
    fn default() -> Self {
        TsvmParams {
            c: 1.0,
            c_star: 1.0,
            kernel: Kernel::Linear,
            positive_fraction: PositiveFraction::Auto,
            anneal_factor: 2.0,
            c_star_initial: None,
            tol: 1e-3,
            max_passes: None,
        }
    }
}

impl TsvmParams {
    pub fn initial_c_star(&self) -> f64 {
        self.c_star_initial.unwrap_or(1e-5 * self.c_star)
    }

    pub fn inner(&self) -> SvmParams {
        SvmParams {
            c: self.c,
            kernel: self.kernel,
            tol: self.tol,
            max_passes: self.max_passes,
        }
    }

    pub fn validate(&self) -> Result<(), TsvmError> {
        self.inner().validate()?;
        let start = self.initial_c_star();
        if !(self.c_star > 0.0 && self.c_star.is_finite()) {
            return Err(TsvmError::InvalidParams(format!("C* must be positive, got {}", self.c_star)));
        }
        if !(start > 0.0 && start <= self.c_star) {
            return Err(TsvmError::InvalidParams(format!(
                "initial C* must lie in (0, C*], got {start}"
            )));
        }
        if !(self.anneal_factor > 1.0) {
            return Err(TsvmError::InvalidParams(format!(
                "anneal factor must exceed 1, got {}",
                self.anneal_factor
            )));
        }
        if let PositiveFraction::Fixed(p) = self.positive_fraction {
            if !(0.0..=1.0).contains(&p) {
                return Err(TsvmError::InvalidParams(format!("positive fraction {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// `⌈p·k⌉`, robust to `p·k` landing a rounding error above an integer.
pub fn positive_count(fraction: f64, k: usize) -> usize {
    let raw = fraction * k as f64;
    let near = raw.round();
    let count = if (raw - near).abs() < 1e-9 { near } else { raw.ceil() };
    (count.max(0.0) as usize).min(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePoint {
    pub c_star: f64,
    pub objective: f64,
    /// Swaps accepted so far at this `C*` level.
    pub swaps: usize,
}

/// Solution over a shared Gram matrix; `union` lists labelled then
/// unlabelled rows of that matrix.
#[derive(Debug, Clone)]
pub(crate) struct TransductiveFit {
    pub union: Vec<usize>,
    pub labels: Vec<f64>,
    pub upper: Vec<f64>,
    pub dual: DualSolution,
    pub n_labelled: usize,
    pub initial_assignment: Vec<f64>,
    pub trace: Vec<ObjectivePoint>,
    pub converged: bool,
    pub swaps: usize,
    pub levels: usize,
}

impl TransductiveFit {
    pub fn assigned(&self) -> &[f64] {
        &self.labels[self.n_labelled..]
    }

    /// Decision value for row `q` of the Gram matrix the fit was built on.
    pub fn decision(&self, g: &GramMatrix, q: usize) -> f64 {
        decision_on_gram(g, &self.union, &self.labels, &self.dual, q)
    }
}

pub(crate) fn decision_on_gram(g: &GramMatrix, idx: &[usize], y: &[f64], dual: &DualSolution, q: usize) -> f64 {
    let row = g.row(q);
    idx.iter()
        .zip(y)
        .zip(&dual.alpha)
        .filter(|(_, &a)| a > 0.0)
        .map(|((&i, &yi), &a)| a * yi * row[i])
        .sum::<f64>()
        + dual.bias
}

/// `½‖w‖² + Σ upper-weighted hinge`, evaluated from the solver's margins.
fn primal_objective(dual: &DualSolution, y: &[f64], penalties: &[f64]) -> f64 {
    let mut half_norm = 0.0;
    let mut slack = 0.0;
    for t in 0..y.len() {
        half_norm += dual.alpha[t] * y[t] * dual.margins[t];
        slack += penalties[t] * (1.0 - y[t] * (dual.margins[t] + dual.bias)).max(0.0);
    }
    0.5 * half_norm + slack
}

fn slack(dual: &DualSolution, y: &[f64], t: usize) -> f64 {
    (1.0 - y[t] * (dual.margins[t] + dual.bias)).max(0.0)
}

pub(crate) fn fit_transductive(
    g: &GramMatrix,
    labelled: &[usize],
    y_labelled: &[f64],
    unlabelled: &[usize],
    params: &TsvmParams,
) -> Result<TransductiveFit, TsvmError> {
    params.validate()?;
    svm::check_labels(y_labelled)?;
    let l = labelled.len();
    let k = unlabelled.len();
    let inductive = svm::solve_dual(
        &svm::sub_gram(g, labelled),
        y_labelled,
        &vec![params.c; l],
        params.tol,
        params.max_passes,
        None,
    );
    if k == 0 {
        let objective = primal_objective(&inductive, y_labelled, &vec![params.c; l]);
        return Ok(TransductiveFit {
            union: labelled.to_vec(),
            labels: y_labelled.to_vec(),
            upper: vec![params.c; l],
            converged: inductive.converged,
            dual: inductive,
            n_labelled: l,
            initial_assignment: Vec::new(),
            trace: vec![ObjectivePoint {
                c_star: params.c_star,
                objective,
                swaps: 0,
            }],
            swaps: 0,
            levels: 0,
        });
    }

    let fraction = match params.positive_fraction {
        PositiveFraction::Auto => y_labelled.iter().filter(|&&v| v > 0.0).count() as f64 / l as f64,
        PositiveFraction::Fixed(p) => p,
    };
    let n_pos = positive_count(fraction, k);
    let scores: Vec<f64> = unlabelled
        .iter()
        .map(|&q| decision_on_gram(g, labelled, y_labelled, &inductive, q))
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut assignment = vec![-1.0; k];
    for &u in &order[..n_pos] {
        assignment[u] = 1.0;
    }

    let union: Vec<usize> = labelled.iter().chain(unlabelled).copied().collect();
    let kmat = svm::sub_gram(g, &union);
    let mut y: Vec<f64> = y_labelled.iter().chain(&assignment).copied().collect();
    let mut c_cur = params.initial_c_star();
    let bounds = |c_cur: f64| -> Vec<f64> { (0..l + k).map(|t| if t < l { params.c } else { c_cur }).collect() };
    let mut upper = bounds(c_cur);
    let mut warm = inductive.alpha.clone();
    warm.resize(l + k, 0.0);
    let mut dual = svm::solve_dual(&kmat, &y, &upper, params.tol, params.max_passes, Some(warm));
    let mut converged = inductive.converged && dual.converged;
    let mut trace = Vec::new();
    let mut total_swaps = 0;
    let mut levels = 1;
    let swap_cap = (k * k).max(1);

    loop {
        let mut objective = primal_objective(&dual, &y, &upper);
        trace.push(ObjectivePoint {
            c_star: c_cur,
            objective,
            swaps: 0,
        });
        let mut swaps = 0;
        while swaps < swap_cap {
            let mut best: Option<(usize, usize, f64)> = None;
            for i in l..l + k {
                if y[i] < 0.0 {
                    continue;
                }
                let xi_i = slack(&dual, &y, i);
                if xi_i <= 0.0 {
                    continue;
                }
                for j in l..l + k {
                    if y[j] > 0.0 {
                        continue;
                    }
                    let xi_j = slack(&dual, &y, j);
                    let total = xi_i + xi_j;
                    if xi_j > 0.0 && total > 2.0 && best.is_none_or(|(_, _, s)| total > s) {
                        best = Some((i, j, total));
                    }
                }
            }
            let Some((i, j, _)) = best else { break };

            let mut y_next = y.clone();
            y_next[i] = -1.0;
            y_next[j] = 1.0;
            // keep Σ α y = 0 with the swapped pair restarted from the bound
            let mut warm = dual.alpha.clone();
            let (ai, aj) = (warm[i], warm[j]);
            if ai >= aj {
                warm[i] = 0.0;
                warm[j] = ai - aj;
            } else {
                warm[i] = aj - ai;
                warm[j] = 0.0;
            }
            let next = svm::solve_dual(&kmat, &y_next, &upper, params.tol, params.max_passes, Some(warm));
            let next_objective = primal_objective(&next, &y_next, &upper);
            if next_objective > objective - 1e-12 {
                log::debug!("swap ({i}, {j}) did not lower the objective at C* = {c_cur}; level closed");
                break;
            }
            converged &= next.converged;
            y = y_next;
            dual = next;
            objective = next_objective;
            swaps += 1;
            total_swaps += 1;
            trace.push(ObjectivePoint {
                c_star: c_cur,
                objective,
                swaps,
            });
        }
        if c_cur >= params.c_star {
            break;
        }
        c_cur = (c_cur * params.anneal_factor).min(params.c_star);
        upper = bounds(c_cur);
        dual = svm::solve_dual(&kmat, &y, &upper, params.tol, params.max_passes, Some(dual.alpha.clone()));
        converged &= dual.converged;
        levels += 1;
    }

    Ok(TransductiveFit {
        union,
        labels: y,
        upper,
        dual,
        n_labelled: l,
        initial_assignment: assignment,
        trace,
        converged,
        swaps: total_swaps,
        levels,
    })
}

/// Trained transductive model.
#[derive(Debug, Clone)]
pub struct TsvmModel {
    /// SVM over labelled then pseudo-labelled samples.
    pub base: SvmModel,
    /// Final `y*` for the unlabelled samples, in dataset order.
    pub assigned_labels: Vec<Label>,
    /// Pseudo-labels right after the ranking initialization.
    pub initial_labels: Vec<Label>,
    pub objective_trace: Vec<ObjectivePoint>,
    pub n_labelled: usize,
    pub swaps: usize,
    pub anneal_levels: usize,
    pub converged: bool,
}

impl TsvmModel {
    pub fn predict(&self, x: &[f64]) -> Result<Label, SvmError> {
        self.base.predict(x)
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64, SvmError> {
        self.base.decision_value(x)
    }

    /// `objective_trace` never rises within one `C*` level.
    pub fn trace_is_monotone(&self) -> bool {
        self.objective_trace
            .windows(2)
            .all(|w| w[0].c_star != w[1].c_star || w[1].objective <= w[0].objective)
    }
}

fn to_labels(v: &[f64]) -> Vec<Label> {
    v.iter().map(|&s| Label::from_sign(s)).collect()
}

/// Trains on the labelled samples of `d` and transduces its unlabelled ones.
pub fn train_tsvm(d: &Dataset, params: &TsvmParams, z: &FeatureMask) -> Result<TsvmModel, TsvmError> {
    d.ensure_trainable()?;
    let labelled = d.labelled_indices();
    let unlabelled = d.unlabelled_indices();
    let y: Vec<f64> = labelled.iter().map(|&i| d.labels()[i].sign().expect("labelled")).collect();
    let rows: Vec<&[f64]> = (0..d.n_samples()).map(|i| d.row(i)).collect();
    let g = kernel::gram(&params.kernel, &rows, z).map_err(SvmError::from)?;
    let fit = fit_transductive(&g, &labelled, &y, &unlabelled, params)?;
    let base = SvmModel::assemble(
        fit.dual.alpha.clone(),
        fit.dual.bias,
        fit.labels.clone(),
        fit.upper.clone(),
        params.kernel,
        z.clone(),
        fit.union.iter().map(|&i| d.row(i).to_vec()).collect(),
        fit.union.iter().map(|&i| d.sample_ids()[i].clone()).collect(),
        fit.converged,
        fit.dual.iterations,
        fit.dual.objective_trace.clone(),
    );
    Ok(TsvmModel {
        base,
        assigned_labels: to_labels(fit.assigned()),
        initial_labels: to_labels(&fit.initial_assignment),
        objective_trace: fit.trace,
        n_labelled: fit.n_labelled,
        swaps: fit.swaps,
        anneal_levels: fit.levels,
        converged: fit.converged,
    })
}

/// `½‖w‖² + C Σ ξ_i + C* Σ ξ*_j` with `½‖w‖²` from the dual identity and the
/// slacks recomputed from the stored training rows.
pub fn tsvm_objective(model: &TsvmModel, params: &TsvmParams) -> f64 {
    let base = &model.base;
    let rows = base.training_rows();
    let masked: Vec<Vec<f64>> = rows.iter().map(|r| kernel::masked(r, base.mask())).collect();
    let coef: Vec<f64> = base.alphas().iter().zip(base.labels()).map(|(a, y)| a * y).collect();
    let mut half_norm = 0.0;
    let mut slack = 0.0;
    for t in 0..rows.len() {
        let margin: f64 = (0..rows.len())
            .filter(|&s| coef[s] != 0.0)
            .map(|s| coef[s] * base.kernel().apply(&masked[s], &masked[t]))
            .sum();
        half_norm += coef[t] * margin;
        let penalty = if t < model.n_labelled { params.c } else { params.c_star };
        slack += penalty * (1.0 - base.labels()[t] * (margin + base.bias())).max(0.0);
    }
    0.5 * half_norm + slack
}
