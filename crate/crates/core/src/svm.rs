//! Soft-margin SVM (hinge loss, `½‖w‖²` regularizer) trained in the dual by
//! a two-variable working-set solver.
//!
//! The dual is `max W(α) = Σα_i − ½ΣΣ α_i α_j y_i y_j k(x_i, x_j)` subject to
//! `0 ≤ α_i ≤ C_i` and `Σ α_i y_i = 0`. The solver works on the equivalent
//! minimization `f(α) = −W(α)` with gradient `G = Qα − 1`, `Q_ij = y_i y_j K_ij`,
//! and picks the maximal-violating pair at every step. Per-sample upper
//! bounds let the transductive trainer give unlabelled samples their own
//! penalty.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Label};
use crate::kernel::{self, GramMatrix, Kernel, KernelError};
use crate::mask::FeatureMask;

/// Step length used when the pair curvature is not positive.
const TAU: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("{0}")]
    Kernel(#[from] KernelError),
    #[error("{rows} samples but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("labels must be +1 or -1, got {0}")]
    InvalidLabel(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("model record: {0}")]
    Record(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: Kernel,
    /// Maximal KKT violation accepted at convergence.
    pub tol: f64,
    /// Pair updates are capped at `max_passes * m`; `None` means `10 * m`
    /// passes for `m` training samples.
    pub max_passes: Option<usize>,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            kernel: Kernel::Linear,
            tol: 1e-3,
            max_passes: None,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<(), SvmError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(SvmError::InvalidParams(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0) {
            return Err(SvmError::InvalidParams(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_passes == Some(0) {
            return Err(SvmError::InvalidParams("max_passes must be positive".into()));
        }
        self.kernel.validate()?;
        Ok(())
    }
}

/// Raw solver output on a local kernel matrix.
#[derive(Debug, Clone)]
pub(crate) struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// `Σ_j α_j y_j K_ij` for every training sample (decision without bias).
    pub margins: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `W(α)` sampled after every pass of `m` pair updates, plus the final value.
    pub objective_trace: Vec<f64>,
}

/// Local `m × m` kernel matrix for the rows `idx` of a Gram matrix.
pub(crate) fn sub_gram(g: &GramMatrix, idx: &[usize]) -> Vec<f64> {
    let m = idx.len();
    let mut k = Vec::with_capacity(m * m);
    for &i in idx {
        let row = g.row(i);
        k.extend(idx.iter().map(|&j| row[j]));
    }
    k
}

/// Maximal-violating-pair solver. `warm` must be feasible for the bounds and
/// the equality constraint; ties in pair selection go to the lowest index.
pub(crate) fn solve_dual(
    kmat: &[f64],
    y: &[f64],
    upper: &[f64],
    tol: f64,
    max_passes: Option<usize>,
    warm: Option<Vec<f64>>,
) -> DualSolution {
    let m = y.len();
    debug_assert_eq!(kmat.len(), m * m);
    let q: Vec<f64> = (0..m * m).map(|p| y[p / m] * y[p % m] * kmat[p]).collect();
    let mut alpha = warm.unwrap_or_else(|| vec![0.0; m]);
    let mut grad = vec![-1.0; m];
    for (i, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            for (g, qv) in grad.iter_mut().zip(&q[i * m..(i + 1) * m]) {
                *g += qv * a;
            }
        }
    }
    let objective = |alpha: &[f64], grad: &[f64]| -> f64 {
        0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (1.0 - g)).sum::<f64>()
    };

    let passes = max_passes.unwrap_or(10 * m.max(1));
    let max_iter = passes.saturating_mul(m.max(1));
    let mut trace = vec![objective(&alpha, &grad)];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
        for t in 0..m {
            let v = -y[t] * grad[t];
            let up = if y[t] > 0.0 { alpha[t] < upper[t] } else { alpha[t] > 0.0 };
            let low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < upper[t] };
            if up && v > gmax {
                gmax = v;
                i = t;
            }
            if low && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin <= tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (qi, qj) = (&q[i * m..(i + 1) * m], &q[j * m..(j + 1) * m]);
        if y[i] != y[j] {
            let mut quad = qi[i] + qj[j] + 2.0 * qi[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let mut quad = qi[i] + qj[j] - 2.0 * qi[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..m {
            grad[t] += qi[t] * di + qj[t] * dj;
        }
        if iterations % m == 0 {
            trace.push(objective(&alpha, &grad));
        }
    }
    trace.push(objective(&alpha, &grad));

    let bias = bias_from_gradient(&alpha, &grad, y, upper);
    let margins = (0..m).map(|t| y[t] * (grad[t] + 1.0)).collect();
    DualSolution {
        alpha,
        bias,
        margins,
        converged,
        iterations,
        objective_trace: trace,
    }
}

/// Mean of `y_i − Σ_j α_j y_j K_ij` over free vectors; otherwise the midpoint
/// of the interval of biases that satisfy the KKT conditions.
fn bias_from_gradient(alpha: &[f64], grad: &[f64], y: &[f64], upper: &[f64]) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= upper[t] {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum += yg;
            free += 1;
        }
    }
    let rho = if free > 0 {
        sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    };
    -rho
}

/// Serialized form of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmRecord {
    pub format: String,
    pub kernel: Kernel,
    pub mask: FeatureMask,
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub labels: Vec<f64>,
    pub upper_bounds: Vec<f64>,
    pub sample_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub converged: bool,
}

const RECORD_FORMAT: &str = "tsvm-rfe/svm-model/1";

/// Trained two-class SVM. Immutable; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    alphas: Vec<f64>,
    bias: f64,
    labels: Vec<f64>,
    upper: Vec<f64>,
    kernel: Kernel,
    mask: FeatureMask,
    rows: Vec<Vec<f64>>,
    sample_ids: Vec<String>,
    primal_w: Option<Vec<f64>>,
    converged: bool,
    iterations: usize,
    objective_trace: Vec<f64>,
    // α_i y_i with the masked support vector, for fast evaluation
    expansion: Vec<(f64, Vec<f64>)>,
}

fn primal_weights(alphas: &[f64], labels: &[f64], rows: &[Vec<f64>], mask: &FeatureMask) -> Vec<f64> {
    let n = mask.len();
    let mut w = vec![0.0; n];
    for ((a, y), row) in alphas.iter().zip(labels).zip(rows) {
        if *a != 0.0 {
            let coef = a * y;
            for t in 0..n {
                w[t] += coef * (mask.get(t) * row[t]);
            }
        }
    }
    w
}

impl SvmModel {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        alphas: Vec<f64>,
        bias: f64,
        labels: Vec<f64>,
        upper: Vec<f64>,
        kernel: Kernel,
        mask: FeatureMask,
        rows: Vec<Vec<f64>>,
        sample_ids: Vec<String>,
        converged: bool,
        iterations: usize,
        objective_trace: Vec<f64>,
    ) -> SvmModel {
        let primal_w = matches!(kernel, Kernel::Linear).then(|| primal_weights(&alphas, &labels, &rows, &mask));
        let expansion = alphas
            .iter()
            .zip(&labels)
            .zip(&rows)
            .filter(|((a, _), _)| **a > 0.0)
            .map(|((a, y), row)| (a * y, kernel::masked(row, &mask)))
            .collect();
        SvmModel {
            alphas,
            bias,
            labels,
            upper,
            kernel,
            mask,
            rows,
            sample_ids,
            primal_w,
            converged,
            iterations,
            objective_trace,
            expansion,
        }
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// Training labels as ±1.
    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn mask(&self) -> &FeatureMask {
        &self.mask
    }

    pub fn training_rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    /// `Σ α_i y_i (z * x_i)`; only for linear kernels.
    pub fn primal_w(&self) -> Option<&[f64]> {
        self.primal_w.as_deref()
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Dual objective after every solver pass.
    pub fn objective_trace(&self) -> &[f64] {
        &self.objective_trace
    }

    pub fn support_indices(&self) -> Vec<usize> {
        (0..self.alphas.len()).filter(|&i| self.alphas[i] > 0.0).collect()
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64, SvmError> {
        if x.len() != self.mask.len() {
            return Err(KernelError::LengthMismatch {
                a: x.len(),
                b: self.mask.len(),
                mask: self.mask.len(),
            }
            .into());
        }
        let zx = kernel::masked(x, &self.mask);
        Ok(self
            .expansion
            .iter()
            .map(|(coef, sv)| coef * self.kernel.apply(sv, &zx))
            .sum::<f64>()
            + self.bias)
    }

    /// Sign of the decision value, with `sign(0) = +1`.
    pub fn predict(&self, x: &[f64]) -> Result<Label, SvmError> {
        Ok(Label::from_sign(self.decision_value(x)?))
    }

    /// `W(α)` recomputed from the stored training rows.
    pub fn dual_objective(&self) -> f64 {
        dual_objective_with(&self.alphas, &self.labels, &self.rows, &self.kernel, &self.mask)
    }

    pub fn to_record(&self) -> SvmRecord {
        SvmRecord {
            format: RECORD_FORMAT.to_string(),
            kernel: self.kernel,
            mask: self.mask.clone(),
            alphas: self.alphas.clone(),
            bias: self.bias,
            labels: self.labels.clone(),
            upper_bounds: self.upper.clone(),
            sample_ids: self.sample_ids.clone(),
            rows: self.rows.clone(),
            converged: self.converged,
        }
    }

    pub fn from_record(record: SvmRecord) -> Result<SvmModel, SvmError> {
        if record.format != RECORD_FORMAT {
            return Err(SvmError::InvalidParams(format!("unknown record format {:?}", record.format)));
        }
        let m = record.alphas.len();
        if record.labels.len() != m || record.rows.len() != m || record.upper_bounds.len() != m {
            return Err(SvmError::LengthMismatch {
                rows: record.rows.len(),
                labels: record.labels.len(),
            });
        }
        Ok(SvmModel::assemble(
            record.alphas,
            record.bias,
            record.labels,
            record.upper_bounds,
            record.kernel,
            record.mask,
            record.rows,
            record.sample_ids,
            record.converged,
            0,
            Vec::new(),
        ))
    }

    pub fn to_json(&self) -> Result<String, SvmError> {
        Ok(serde_json::to_string_pretty(&self.to_record())?)
    }

    pub fn from_json(text: &str) -> Result<SvmModel, SvmError> {
        SvmModel::from_record(serde_json::from_str(text)?)
    }
}

pub(crate) fn dual_objective_with(
    alphas: &[f64],
    labels: &[f64],
    rows: &[Vec<f64>],
    kernel: &Kernel,
    mask: &FeatureMask,
) -> f64 {
    let support: Vec<(f64, Vec<f64>)> = alphas
        .iter()
        .zip(labels)
        .zip(rows)
        .filter(|((a, _), _)| **a != 0.0)
        .map(|((a, y), row)| (a * y, kernel::masked(row, mask)))
        .collect();
    let mut quad = 0.0;
    for (ci, xi) in &support {
        for (cj, xj) in &support {
            quad += ci * cj * kernel.apply(xi, xj);
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

pub(crate) fn check_labels(y: &[f64]) -> Result<(), SvmError> {
    if let Some(&bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(SvmError::InvalidLabel(bad));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(SvmError::SingleClass);
    }
    Ok(())
}

/// Trains on `rows` with ±1 labels `y`. A model that did not reach the KKT
/// tolerance within the pass budget is returned with `converged() == false`.
pub fn train_svm<R: AsRef<[f64]> + Sync>(
    rows: &[R],
    y: &[f64],
    params: &SvmParams,
    z: &FeatureMask,
) -> Result<SvmModel, SvmError> {
    params.validate()?;
    if rows.len() != y.len() {
        return Err(SvmError::LengthMismatch {
            rows: rows.len(),
            labels: y.len(),
        });
    }
    train_svm_bounded(rows, y, &vec![params.c; y.len()], params, z)
}

/// Like [`train_svm`] but with a separate box bound `0 <= α_i <= upper[i]`
/// per sample; `params.c` is ignored.
pub fn train_svm_bounded<R: AsRef<[f64]> + Sync>(
    rows: &[R],
    y: &[f64],
    upper: &[f64],
    params: &SvmParams,
    z: &FeatureMask,
) -> Result<SvmModel, SvmError> {
    params.validate()?;
    if rows.len() != y.len() || upper.len() != y.len() {
        return Err(SvmError::LengthMismatch {
            rows: rows.len(),
            labels: y.len(),
        });
    }
    if let Some(&bad) = upper.iter().find(|&&u| !(u > 0.0 && u.is_finite())) {
        return Err(SvmError::InvalidParams(format!("upper bound must be positive, got {bad}")));
    }
    check_labels(y)?;
    let g = kernel::gram(&params.kernel, rows, z)?;
    let upper = upper.to_vec();
    let sol = solve_dual(g.values(), y, &upper, params.tol, params.max_passes, None);
    let sample_ids = (0..rows.len()).map(|i| format!("s{i}")).collect();
    Ok(SvmModel::assemble(
        sol.alpha,
        sol.bias,
        y.to_vec(),
        upper,
        params.kernel,
        z.clone(),
        rows.iter().map(|r| r.as_ref().to_vec()).collect(),
        sample_ids,
        sol.converged,
        sol.iterations,
        sol.objective_trace,
    ))
}

/// Trains on the labelled samples of `d`; unlabelled samples are ignored.
pub fn train_svm_dataset(d: &Dataset, params: &SvmParams, z: &FeatureMask) -> Result<SvmModel, SvmError> {
    let idx = d.labelled_indices();
    let rows: Vec<&[f64]> = idx.iter().map(|&i| d.row(i)).collect();
    let y: Vec<f64> = idx.iter().map(|&i| d.labels()[i].sign().expect("labelled")).collect();
    let model = train_svm(&rows, &y, params, z)?;
    let ids = idx.iter().map(|&i| d.sample_ids()[i].clone()).collect();
    Ok(SvmModel { sample_ids: ids, ..model })
}
