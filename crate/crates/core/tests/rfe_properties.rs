mod common;

use common::RefKernel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsvm_rfe::kernel::kernel_eval;
use tsvm_rfe::rfe::{feature_weights_approx, feature_weights_exact, run_rfe, HyperGrid, Mode, RfeConfig, RfeSchedule, Scorer};
use tsvm_rfe::svm::{train_svm, SvmParams};
use tsvm_rfe::synth::{generate, SynthSpec};
use tsvm_rfe::{FeatureMask, Kernel, KernelKind};

fn random_labelled(rng: &mut ChaCha8Rng, m: usize, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let rows = (0..m).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let y = (0..m).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    (rows, y)
}

fn ranking(w: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..w.len()).collect();
    idx.sort_by(|&a, &b| w[a].total_cmp(&w[b]).then(a.cmp(&b)));
    idx
}

#[test]
fn linear_weights_follow_the_primal_vector() {
    for seed in 0..40 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..6);
        let (rows, y) = random_labelled(&mut rng, 4, n);
        let model = train_svm(&rows, &y, &SvmParams::default(), &FeatureMask::ones(n)).unwrap();
        // w recomputed directly from the dual coefficients
        let w: Vec<f64> = (0..n)
            .map(|t| (0..4).map(|i| model.alphas()[i] * y[i] * rows[i][t]).sum())
            .collect();
        let approx = feature_weights_approx(&model);
        let exact = feature_weights_exact(&model);
        for t in 0..n {
            assert!((approx[t] - w[t].abs()).abs() < 1e-12);
            assert!((exact[t] - w[t].abs() / 2f64.sqrt()).abs() < 1e-9);
        }
        assert_eq!(ranking(&approx), ranking(&exact));
    }
}

/// `sqrt(|J − J'_t|)` with `J = ½ ΣΣ c_i c_j K_ij`, rebuilding a Gram
/// matrix from rows with column `t` physically deleted.
fn rebuilt_weights(kernel: RefKernel, rows: &[Vec<f64>], coef: &[f64]) -> Vec<f64> {
    let half_quad = |rows: &[Vec<f64>]| -> f64 {
        let k = common::kernel_matrix(kernel, rows);
        let mut q = 0.0;
        for i in 0..rows.len() {
            for j in 0..rows.len() {
                q += coef[i] * coef[j] * k[i][j];
            }
        }
        0.5 * q
    };
    let full = half_quad(rows);
    (0..rows[0].len())
        .map(|t| {
            let deleted: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| r.iter().enumerate().filter(|&(s, _)| s != t).map(|(_, v)| *v).collect())
                .collect();
            (full - half_quad(&deleted)).abs().sqrt()
        })
        .collect()
}

#[test]
fn exact_weights_match_gram_rebuild() {
    for seed in 0..40 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let m = if seed < 10 { 3 } else { rng.random_range(3..9) };
        let n = rng.random_range(2..6);
        let (rows, y) = random_labelled(&mut rng, m, n);
        let kernel = match seed % 3 {
            0 => RefKernel::Rbf(rng.random_range(0.5..2.0)),
            1 => RefKernel::Poly(rng.random_range(2..4)),
            _ => RefKernel::Linear,
        };
        let params = SvmParams {
            kernel: kernel.to_lib(),
            c: 10.0,
            ..SvmParams::default()
        };
        let model = train_svm(&rows, &y, &params, &FeatureMask::ones(n)).unwrap();
        let coef: Vec<f64> = model.alphas().iter().zip(&y).map(|(a, y)| a * y).collect();
        let expected = rebuilt_weights(kernel, &rows, &coef);
        let got = feature_weights_exact(&model);
        for t in 0..n {
            assert!((got[t] - expected[t]).abs() <= 1e-10 * expected[t].max(1.0), "seed {seed} feature {t}");
        }
    }
}

#[test]
fn masked_kernels_equal_deleted_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let n = rng.random_range(2..8);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let active: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.6)).collect();
        let z = FeatureMask::from_active(n, &active);
        let pick = |v: &[f64]| -> Vec<f64> { active.iter().map(|&t| v[t]).collect() };
        for k in [RefKernel::Linear, RefKernel::Rbf(1.3), RefKernel::Poly(3)] {
            let masked = kernel_eval(&k.to_lib(), &a, &b, &z).unwrap();
            let deleted = k.eval(&pick(&a), &pick(&b));
            assert!((masked - deleted).abs() <= 1e-12 * deleted.abs().max(1.0));
        }
    }
}

fn informative_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        n_informative: 2,
        n_noise: 98,
        n_labelled: 20,
        n_unlabelled: 10,
        separation: 4.0,
        positive_fraction: 0.5,
        seed,
    }
}

fn quick_config(mode: Mode, seed: u64) -> RfeConfig {
    RfeConfig {
        mode,
        seed,
        folds: 4,
        grid: HyperGrid {
            c_values: vec![1.0],
            c_star_values: vec![0.5],
            kernel_kinds: vec![KernelKind::Linear],
            ..HyperGrid::default()
        },
        ..RfeConfig::default()
    }
}

#[test]
fn informative_features_survive_elimination() {
    for mode in [Mode::Svm, Mode::Tsvm] {
        let mut kept = 0;
        for seed in 0..20 {
            let s = generate(&informative_spec(seed)).unwrap();
            let trace = run_rfe(&s.dataset, &quick_config(mode, seed)).unwrap();
            assert_eq!(trace.final_mask.popcount(), 30);
            if s.informative.iter().all(|&t| trace.final_mask.is_active(t)) {
                kept += 1;
            }
        }
        assert!(kept >= 19, "{mode:?}: both informative features kept in {kept} of 20 runs");
    }
}

#[test]
fn active_sets_shrink_strictly() {
    let s = generate(&informative_spec(2)).unwrap();
    let mut config = quick_config(Mode::Tsvm, 2);
    config.scorer = Scorer::Exact;
    let trace = run_rfe(&s.dataset, &config).unwrap();
    let counts: Vec<usize> = trace.iterations.iter().map(|r| r.active_count).collect();
    assert_eq!(counts, vec![100, 90, 80, 70, 60, 50, 40, 30]);
    for w in trace.iterations.windows(2) {
        assert!(w[1].active_feature_ids.iter().all(|f| w[0].active_feature_ids.contains(f)));
        assert_eq!(w[0].removed_feature_ids.len(), w[0].active_count - w[1].active_count);
        for f in &w[0].removed_feature_ids {
            assert!(!w[1].active_feature_ids.contains(f));
        }
    }
    let best = trace.best_record();
    assert!(trace.iterations.iter().all(|r| r.cv_error >= best.cv_error));
}

#[test]
fn single_target_at_full_size_runs_once() {
    let s = generate(&informative_spec(4)).unwrap();
    let mut config = quick_config(Mode::Svm, 4);
    config.schedule = RfeSchedule {
        target_counts: vec![100],
        ..RfeSchedule::default()
    };
    let trace = run_rfe(&s.dataset, &config).unwrap();
    assert_eq!(trace.iterations.len(), 1);
    assert_eq!(trace.final_mask, FeatureMask::ones(100));
    assert!(trace.iterations[0].removed_feature_ids.is_empty());
}

#[test]
fn full_size_pre_filter_is_the_identity() {
    let s = generate(&informative_spec(5)).unwrap();
    let plain = quick_config(Mode::Svm, 5);
    let mut filtered = plain.clone();
    filtered.schedule.pre_filter_count = Some(100);
    assert_eq!(run_rfe(&s.dataset, &plain).unwrap(), run_rfe(&s.dataset, &filtered).unwrap());
}

#[test]
fn pre_filter_keeps_original_indices() {
    let s = generate(&informative_spec(6)).unwrap();
    let mut config = quick_config(Mode::Svm, 6);
    config.schedule.pre_filter_count = Some(50);
    let trace = run_rfe(&s.dataset, &config).unwrap();
    assert_eq!(trace.final_mask.len(), 100);
    assert_eq!(trace.iterations[0].active_count, 50);
    assert!(s.informative.iter().all(|&t| trace.final_mask.is_active(t)));
}

#[test]
fn repeated_runs_are_identical() {
    let s = generate(&informative_spec(7)).unwrap();
    let mut config = quick_config(Mode::Tsvm, 7);
    config.grid.kernel_kinds = vec![KernelKind::Linear, KernelKind::Rbf];
    config.grid.sigma_values = vec![5.0];
    let a = run_rfe(&s.dataset, &config).unwrap();
    let b = run_rfe(&s.dataset, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.csv_rows(), b.csv_rows());
    assert!(a.iterations.iter().all(|r| r.grid_errors.len() == 2));
    assert!(matches!(a.iterations[0].chosen.kernel, Kernel::Linear | Kernel::Rbf { .. }));
}
