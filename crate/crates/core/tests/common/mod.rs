//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub enum RefKernel {
    Linear,
    Rbf(f64),
    Poly(u32),
}

impl RefKernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        match *self {
            RefKernel::Linear => dot,
            RefKernel::Rbf(s) => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * s * s)).exp()
            }
            RefKernel::Poly(d) => (dot + 1.0).powi(d as i32),
        }
    }

    pub fn to_lib(self) -> tsvm_rfe::Kernel {
        match self {
            RefKernel::Linear => tsvm_rfe::Kernel::Linear,
            RefKernel::Rbf(s) => tsvm_rfe::Kernel::Rbf { sigma: s },
            RefKernel::Poly(d) => tsvm_rfe::Kernel::Poly { degree: d },
        }
    }
}

pub fn kernel_matrix(k: RefKernel, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter().map(|a| rows.iter().map(|b| k.eval(a, b)).collect()).collect()
}

/// `Σα − ½ αᵀ Q α` with `Q_ij = y_i y_j K_ij`.
pub fn dual_value(kmat: &[Vec<f64>], y: &[f64], alpha: &[f64]) -> f64 {
    let m = y.len();
    let mut quad = 0.0;
    for i in 0..m {
        for j in 0..m {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * kmat[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto `{0 ≤ α ≤ u, Σ y α = 0}` by bisection on the
/// multiplier of the equality constraint.
pub fn project(v: &[f64], y: &[f64], upper: &[f64]) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .zip(upper)
            .map(|((vi, yi), ui)| (vi - lam * yi).clamp(0.0, *ui))
            .collect()
    };
    let h = |a: &[f64]| -> f64 { a.iter().zip(y).map(|(ai, yi)| ai * yi).sum() };
    let span = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + upper.iter().fold(0.0, |m: f64, u| m.max(*u)) + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected-gradient ascent on the SVM dual with adaptive
/// restart, finished by plain projected steps to a fixed point.
pub fn pga_dual(kmat: &[Vec<f64>], y: &[f64], upper: &[f64]) -> (Vec<f64>, f64) {
    let m = y.len();
    let q: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| y[i] * y[j] * kmat[i][j]).collect()).collect();
    let lipschitz = q
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(1e-12, f64::max);
    let step = 1.0 / lipschitz;
    let grad = |a: &[f64]| -> Vec<f64> { (0..m).map(|i| 1.0 - (0..m).map(|j| q[i][j] * a[j]).sum::<f64>()).collect() };
    let mut x = vec![0.0; m];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut best = dual_value(kmat, y, &x);
    for _ in 0..2_000_000 {
        let g = grad(&z);
        let cand: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi + step * gi).collect();
        let x_next = project(&cand, y, upper);
        let value = dual_value(kmat, y, &x_next);
        let moved = x_next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if value < best {
            if t == 1.0 {
                // a plain projected step from x no longer ascends
                break;
            }
            t = 1.0;
            z = x.clone();
            continue;
        }
        best = value;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = x_next
            .iter()
            .zip(&x)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        x = x_next;
        t = t_next;
        if moved < 1e-13 {
            break;
        }
    }
    // plain projected steps from the accelerated iterate; each one ascends,
    // so this only stops at a fixed point
    for _ in 0..2_000_000 {
        let g = grad(&x);
        let cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + step * gi).collect();
        let x_next = project(&cand, y, upper);
        let moved = x_next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if dual_value(kmat, y, &x_next) < dual_value(kmat, y, &x) {
            break;
        }
        x = x_next;
        if moved < 1e-14 {
            break;
        }
    }
    let w = dual_value(kmat, y, &x);
    (x, w)
}

pub fn random_kernel(rng: &mut ChaCha8Rng) -> RefKernel {
    match rng.random_range(0..3) {
        0 => RefKernel::Linear,
        1 => RefKernel::Rbf(rng.random_range(0.5..2.0)),
        _ => RefKernel::Poly(rng.random_range(1..=3)),
    }
}

/// Random small labelled problem with both classes present.
pub fn random_problem(seed: u64, max_m: usize, max_n: usize) -> (Vec<Vec<f64>>, Vec<f64>, f64, RefKernel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(2..=max_m);
    let n = rng.random_range(1..=max_n);
    let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
    let mut y: Vec<f64> = (0..m).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[1] = -1.0;
    let c = [0.1, 1.0, 10.0][rng.random_range(0..3)];
    let kernel = random_kernel(&mut rng);
    (rows, y, c, kernel)
}

/// Primal objective `½‖w‖² + Σ penalty_i ξ_i` for a dual solution.
pub fn primal_value(kmat: &[Vec<f64>], y: &[f64], alpha: &[f64], bias: f64, penalty: &[f64]) -> f64 {
    let m = y.len();
    let mut half = 0.0;
    let mut slack = 0.0;
    for i in 0..m {
        let margin: f64 = (0..m).map(|j| alpha[j] * y[j] * kmat[i][j]).sum();
        half += alpha[i] * y[i] * margin;
        slack += penalty[i] * (1.0 - y[i] * (margin + bias)).max(0.0);
    }
    0.5 * half + slack
}

/// Every labelling of `k` unlabelled samples with exactly `positives` of them
/// `+1`, as sign vectors.
pub fn balanced_labellings(k: usize, positives: usize) -> Vec<Vec<f64>> {
    (0u32..1 << k)
        .filter(|bits| bits.count_ones() as usize == positives)
        .map(|bits| (0..k).map(|j| if bits >> j & 1 == 1 { 1.0 } else { -1.0 }).collect())
        .collect()
}

pub fn all_labellings(k: usize) -> Vec<Vec<f64>> {
    (0u32..1 << k)
        .map(|bits| (0..k).map(|j| if bits >> j & 1 == 1 { 1.0 } else { -1.0 }).collect())
        .collect()
}

/// Two-cluster micro instance: `l` labelled (half each class) and `k`
/// unlabelled samples whose class counts match the labelled balance.
pub fn micro_tsvm_instance(seed: u64, max_k: usize) -> (tsvm_rfe::Dataset, RefKernel) {
    use rand_distr::{Distribution, Normal};
    use tsvm_rfe::{Dataset, Label};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=3);
    let half = rng.random_range(1..=2);
    let k = rng.random_range(1..=max_k);
    let positives = k.div_ceil(2);
    let noise = Normal::new(0.0, 0.45).unwrap();
    let centre: Vec<f64> = (0..n).map(|_| rng.random_range(0.6..1.4)).collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let draw = |sign: f64, label: Label, rows: &mut Vec<f64>, labels: &mut Vec<Label>, rng: &mut ChaCha8Rng| {
        rows.extend(centre.iter().map(|c| sign * c + noise.sample(rng)));
        labels.push(label);
    };
    for _ in 0..half {
        draw(1.0, Label::Positive, &mut rows, &mut labels, &mut rng);
        draw(-1.0, Label::Negative, &mut rows, &mut labels, &mut rng);
    }
    for j in 0..k {
        let sign = if j < positives { 1.0 } else { -1.0 };
        draw(sign, Label::Unlabelled, &mut rows, &mut labels, &mut rng);
    }
    let m = labels.len();
    let matrix = ndarray::Array2::from_shape_vec((m, n), rows).unwrap();
    let kernel = match rng.random_range(0..3) {
        0 | 1 => RefKernel::Linear,
        _ => RefKernel::Rbf(rng.random_range(1.0..2.0)),
    };
    (Dataset::from_rows(matrix, labels).unwrap(), kernel)
}

/// Minimal transductive objective over the given labellings of the
/// unlabelled samples, each solved as a supervised SVM on the union.
pub fn exhaustive_tsvm_minimum(
    d: &tsvm_rfe::Dataset,
    kernel: RefKernel,
    c: f64,
    c_star: f64,
    labellings: &[Vec<f64>],
) -> (f64, Vec<f64>) {
    use tsvm_rfe::svm::{train_svm_bounded, SvmParams};
    let lab = d.labelled_indices();
    let unl = d.unlabelled_indices();
    let rows: Vec<Vec<f64>> = lab.iter().chain(&unl).map(|&i| d.row(i).to_vec()).collect();
    let kmat = kernel_matrix(kernel, &rows);
    let y_l: Vec<f64> = lab.iter().map(|&i| d.labels()[i].sign().unwrap()).collect();
    let upper: Vec<f64> = (0..rows.len()).map(|t| if t < lab.len() { c } else { c_star }).collect();
    let params = SvmParams {
        c,
        kernel: kernel.to_lib(),
        tol: 1e-10,
        max_passes: Some(100_000),
    };
    let z = tsvm_rfe::FeatureMask::ones(d.n_features());
    let mut best = (f64::INFINITY, Vec::new());
    for ys in labellings {
        let y: Vec<f64> = y_l.iter().chain(ys).copied().collect();
        let model = train_svm_bounded(&rows, &y, &upper, &params, &z).unwrap();
        let value = primal_value(&kmat, &y, model.alphas(), model.bias(), &upper);
        if value < best.0 {
            best = (value, ys.clone());
        }
    }
    best
}
