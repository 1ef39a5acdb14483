//! Acceptance criteria, one line per criterion.
//!
//! Runs without the libtest harness so every line reaches the terminal.
//! Exits non-zero if any criterion fails, except criterion 7 when its
//! dataset is absent; that one prints FAIL with the reason and is listed as
//! unavailable in the summary.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use common::{
    balanced_labellings, exhaustive_tsvm_minimum, kernel_matrix, micro_tsvm_instance, pga_dual, random_problem,
    RefKernel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use tsvm_rfe::data::load_dataset;
use tsvm_rfe::eval::{paired_t_test, t_critical_95};
use tsvm_rfe::glad::{glad_fitness, kmeans2, loocv_lda_accuracy, run_glad, GladChromosome, GladParams};
use tsvm_rfe::rfe::{feature_weights_approx, refit_at, run_rfe, HyperGrid, Mode, RfeConfig};
use tsvm_rfe::svm::{train_svm, train_svm_dataset, SvmParams};
use tsvm_rfe::synth::{generate, SynthSpec};
use tsvm_rfe::tsvm::{positive_count, train_tsvm, tsvm_objective, TsvmParams};
use tsvm_rfe::{Dataset, FeatureMask, Label};

const DUAL_TOL: f64 = 1e-6;
const MICRO_TOL: f64 = 1e-6;
const LOOCV_TOL: f64 = 1e-12;
const T_TOL: f64 = 0.01;
const CRITICAL_TOL: f64 = 0.001;
/// t for the worked example, from the mean and sample deviation of the
/// differences (−0.038 and 0.016432).
const WORKED_T: f64 = -5.1711;
const AML_MAX_ERROR: f64 = 0.10;
const SELECTION_GAIN_POINTS: f64 = 10.0;

const SVM_LIMIT: Duration = Duration::from_secs(30);
const REDUCTION_LIMIT: Duration = Duration::from_secs(30);
const MICRO_LIMIT: Duration = Duration::from_secs(120);
const SEMI_LIMIT: Duration = Duration::from_secs(120);
const AML_LIMIT: Duration = Duration::from_secs(15 * 60);
const SELECTION_LIMIT: Duration = Duration::from_secs(10 * 60);

/// Between-mean distance per informative feature in criterion 6.
const SEMI_SEPARATION: f64 = 3.0;
/// Between-mean distance per informative feature in criterion 8.
const SELECTION_SEPARATION: f64 = 1.5;
/// Datasets averaged in criterion 8.
const SELECTION_SEEDS: u64 = 10;
/// C* values searched in criterion 8. With C* fixed at 1 the pseudo-labels
/// of the all-feature model fit exactly in 2000 dimensions, and elimination
/// keeps whatever features reproduce them.
const SELECTION_C_STAR: [f64; 4] = [0.001, 0.01, 0.1, 1.0];

enum Outcome {
    Pass(String),
    Fail(String),
    /// Fails because an input is missing from the environment.
    Unavailable(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn timed(limit: Duration, start: Instant, ok: bool, detail: String) -> Outcome {
    let took = start.elapsed();
    verdict(ok && took < limit, format!("{detail}; {:.1}s (limit {}s)", took.as_secs_f64(), limit.as_secs()))
}

fn tight(c: f64, kernel: RefKernel) -> SvmParams {
    SvmParams {
        c,
        kernel: kernel.to_lib(),
        tol: 1e-10,
        max_passes: Some(100_000),
    }
}

fn kernel_for(seed: u64) -> RefKernel {
    match seed % 3 {
        0 => RefKernel::Linear,
        1 => RefKernel::Rbf(0.5 + (seed % 7) as f64 * 0.25),
        _ => RefKernel::Poly(1 + (seed % 3) as u32),
    }
}

fn solver_oracle() -> Outcome {
    let start = Instant::now();
    let gaps: Vec<f64> = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let (rows, y, c, _) = random_problem(seed, 8, 4);
            let kernel = kernel_for(seed);
            let model = train_svm(&rows, &y, &tight(c, kernel), &FeatureMask::ones(rows[0].len())).unwrap();
            let (_, best) = pga_dual(&kernel_matrix(kernel, &rows), &y, &vec![c; y.len()]);
            (model.dual_objective() - best).abs()
        })
        .collect();
    let worst = gaps.iter().cloned().fold(0.0, f64::max);
    timed(
        SVM_LIMIT,
        start,
        worst <= DUAL_TOL,
        format!("200 instances, max |W − W_oracle| = {worst:.2e} (tol {DUAL_TOL:.0e})"),
    )
}

fn dataset_of(rows: &[Vec<f64>], labels: Vec<Label>) -> Dataset {
    let n = rows[0].len();
    Dataset::from_rows(ndarray::Array2::from_shape_vec((rows.len(), n), rows.concat()).unwrap(), labels).unwrap()
}

/// Returns the outcome, the number of monotone traces and the run count.
fn tsvm_reduction() -> (Outcome, usize, usize) {
    let start = Instant::now();
    let results: Vec<(usize, usize, bool)> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let (rows, y, c, _) = random_problem(seed, 8, 4);
            let kernel = kernel_for(seed);
            let d = dataset_of(&rows, y.iter().map(|&v| Label::from_sign(v)).collect());
            let p = TsvmParams {
                c,
                kernel: kernel.to_lib(),
                ..TsvmParams::default()
            };
            let z = FeatureMask::ones(rows[0].len());
            let t = train_tsvm(&d, &p, &z).unwrap();
            let s = train_svm(&rows, &y, &p.inner(), &z).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let agree = (0..50)
                .filter(|_| {
                    let probe: Vec<f64> = (0..rows[0].len()).map(|_| rng.random_range(-2.0..2.0)).collect();
                    t.predict(&probe).unwrap() == s.predict(&probe).unwrap()
                })
                .count();
            (agree, 50, t.trace_is_monotone())
        })
        .collect();
    let agree: usize = results.iter().map(|r| r.0).sum();
    let total: usize = results.iter().map(|r| r.1).sum();
    let monotone = results.iter().filter(|r| r.2).count();
    let outcome = timed(
        REDUCTION_LIMIT,
        start,
        agree == total,
        format!("50 instances, {agree}/{total} probe predictions agree"),
    );
    (outcome, monotone, results.len())
}

/// Same triple as [`tsvm_reduction`].
fn tsvm_micro() -> (Outcome, usize, usize) {
    let start = Instant::now();
    let results: Vec<(f64, bool)> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let (d, kernel) = micro_tsvm_instance(seed, 4);
            let p = TsvmParams {
                kernel: kernel.to_lib(),
                tol: 1e-10,
                max_passes: Some(100_000),
                ..TsvmParams::default()
            };
            let model = train_tsvm(&d, &p, &FeatureMask::ones(d.n_features())).unwrap();
            let k = d.unlabelled_indices().len();
            let labellings = balanced_labellings(k, positive_count(0.5, k));
            let (best, _) = exhaustive_tsvm_minimum(&d, kernel, p.c, p.c_star, &labellings);
            ((tsvm_objective(&model, &p) - best).abs(), model.trace_is_monotone())
        })
        .collect();
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let monotone = results.iter().filter(|r| r.1).count();
    let outcome = timed(
        MICRO_LIMIT,
        start,
        worst <= MICRO_TOL,
        format!("50 instances (k ≤ 4), max gap to balanced exhaustive minimum = {worst:.2e} (tol {MICRO_TOL:.0e})"),
    );
    (outcome, monotone, results.len())
}

fn ranking(w: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..w.len()).collect();
    idx.sort_by(|&a, &b| w[a].total_cmp(&w[b]).then(a.cmp(&b)));
    idx
}

fn linear_ranking() -> Outcome {
    let mut equal = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let m = rng.random_range(4..12);
        let n = rng.random_range(2..8);
        let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let mut y: Vec<f64> = (0..m).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let model = train_svm(&rows, &y, &SvmParams::default(), &FeatureMask::ones(n)).unwrap();
        let w: Vec<f64> = (0..n)
            .map(|t| (0..m).map(|i| model.alphas()[i] * y[i] * rows[i][t]).sum::<f64>().abs())
            .collect();
        if ranking(&feature_weights_approx(&model)) == ranking(&w) {
            equal += 1;
        }
    }
    verdict(equal == 100, format!("{equal}/100 linear instances rank features as |w_t| does"))
}

fn unlabelled_accuracy(truth: &[Label], unl: &[usize], predict: impl Fn(usize) -> Label) -> f64 {
    let hits = unl.iter().filter(|&&i| predict(i) == truth[i]).count();
    hits as f64 / unl.len() as f64
}

fn semi_supervised_gain() -> Outcome {
    let start = Instant::now();
    let pairs: Vec<(f64, f64)> = (0..25u64)
        .into_par_iter()
        .map(|seed| {
            let s = generate(&SynthSpec {
                n_informative: 2,
                n_noise: 18,
                n_labelled: 4,
                n_unlabelled: 100,
                separation: SEMI_SEPARATION,
                positive_fraction: 0.5,
                seed,
            })
            .unwrap();
            let d = &s.dataset;
            let z = FeatureMask::ones(d.n_features());
            let unl = d.unlabelled_indices();
            let svm = train_svm_dataset(d, &SvmParams::default(), &z).unwrap();
            let tsvm = train_tsvm(d, &TsvmParams::default(), &z).unwrap();
            (
                unlabelled_accuracy(&s.truth, &unl, |i| svm.predict(d.row(i)).unwrap()),
                unlabelled_accuracy(&s.truth, &unl, |i| tsvm.predict(d.row(i)).unwrap()),
            )
        })
        .collect();
    let svm = 100.0 * pairs.iter().map(|p| p.0).sum::<f64>() / 25.0;
    let tsvm = 100.0 * pairs.iter().map(|p| p.1).sum::<f64>() / 25.0;
    timed(
        SEMI_LIMIT,
        start,
        tsvm >= svm,
        format!("25 seeds, mean accuracy on unlabelled truth TSVM {tsvm:.2}% vs SVM {svm:.2}%"),
    )
}

fn aml_all() -> Outcome {
    let Some(dir) = std::env::var_os("GOLUB_DATA_DIR").map(PathBuf::from) else {
        return Outcome::Unavailable("dataset not available: set GOLUB_DATA_DIR to a directory with matrix.csv and labels.csv".into());
    };
    let (matrix, labels) = (dir.join("matrix.csv"), dir.join("labels.csv"));
    if !matrix.exists() || !labels.exists() {
        return Outcome::Unavailable(format!("dataset not available: {} lacks matrix.csv or labels.csv", dir.display()));
    }
    let start = Instant::now();
    let d = match load_dataset(&matrix, &labels) {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(format!("cannot load the dataset: {e}")),
    };
    let run = |mode: Mode| {
        let config = RfeConfig {
            mode,
            ..RfeConfig::default()
        };
        run_rfe(&d, &config)
    };
    let (svm, tsvm) = match (run(Mode::Svm), run(Mode::Tsvm)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::Fail(format!("RFE failed: {e}")),
    };
    let at60 = |t: &tsvm_rfe::rfe::RfeTrace| t.record_at(60).map(|r| r.cv_error).unwrap_or(f64::INFINITY);
    let swept = |t: &tsvm_rfe::rfe::RfeTrace| {
        [30, 40, 50, 60, 70]
            .iter()
            .filter_map(|&c| t.record_at(c).map(|r| r.cv_error))
            .fold(f64::INFINITY, f64::min)
    };
    let (s60, t60, smin, tmin) = (at60(&svm), at60(&tsvm), swept(&svm), swept(&tsvm));
    timed(
        AML_LIMIT,
        start,
        s60 <= AML_MAX_ERROR && t60 <= AML_MAX_ERROR && tmin <= smin,
        format!(
            "{} samples, {} features; 60 genes SVM-RFE {:.2}% TSVM-RFE {:.2}% (max {:.0}%), curve minima {:.2}% vs {:.2}%",
            d.n_samples(),
            d.n_features(),
            100.0 * s60,
            100.0 * t60,
            100.0 * AML_MAX_ERROR,
            100.0 * smin,
            100.0 * tmin
        ),
    )
}

/// Accuracy on the unlabelled truth with the best RFE subset and with all
/// features, in percent.
fn selection_pair(seed: u64, mode: Mode) -> (f64, f64) {
    let s = generate(&SynthSpec {
        n_informative: 10,
        n_noise: 1990,
        n_labelled: 30,
        n_unlabelled: 40,
        separation: SELECTION_SEPARATION,
        positive_fraction: 0.5,
        seed,
    })
    .unwrap();
    let d = &s.dataset;
    let config = RfeConfig {
        mode,
        seed,
        grid: HyperGrid {
            c_star_values: SELECTION_C_STAR.to_vec(),
            ..HyperGrid::default()
        },
        ..RfeConfig::default()
    };
    let trace = run_rfe(d, &config).unwrap();
    let unl = d.unlabelled_indices();
    let score = |record| {
        let model = refit_at(d, record, &config).unwrap();
        100.0 * unlabelled_accuracy(&s.truth, &unl, |i| model.predict(d.row(i)).unwrap())
    };
    (score(trace.best_record()), score(&trace.iterations[0]))
}

fn selection_benefit() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for (mode, name) in [(Mode::Svm, "SVM-RFE"), (Mode::Tsvm, "TSVM-RFE")] {
        let pairs: Vec<(f64, f64)> = (0..SELECTION_SEEDS).into_par_iter().map(|s| selection_pair(s, mode)).collect();
        let with = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
        let without = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
        ok &= with - without >= SELECTION_GAIN_POINTS;
        lines.push(format!("{name} {with:.2}% vs {without:.2}%"));
    }
    timed(
        SELECTION_LIMIT,
        start,
        ok,
        format!(
            "n = 2000, {SELECTION_SEEDS} seeds, selected vs all features: {} (gain ≥ {SELECTION_GAIN_POINTS} points)",
            lines.join(", ")
        ),
    )
}

fn glad_properties() -> Outcome {
    let s = generate(&SynthSpec {
        n_informative: 2,
        n_noise: 10,
        n_labelled: 12,
        n_unlabelled: 10,
        separation: 2.0,
        positive_fraction: 0.5,
        seed: 3,
    })
    .unwrap();
    let d = &s.dataset;
    let params = GladParams {
        population_size: 12,
        generations: 100,
        p_init: 0.3,
        seed: 11,
        ..GladParams::default()
    };
    let r = run_glad(d, &params).unwrap();
    let elitist = r.history.len() == 101 && r.history.windows(2).all(|w| w[1].best_so_far >= w[0].best_so_far);

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst_mix: f64 = 0.0;
    for _ in 0..50 {
        let mut mask: Vec<bool> = (0..d.n_features()).map(|_| rng.random_bool(0.4)).collect();
        mask[0] = true;
        let chrom = GladChromosome { mask, fitness: None };
        let only_labelled = GladParams {
            mixing_weight: 1.0,
            ..GladParams::default()
        };
        let f = glad_fitness(d, &chrom, &only_labelled).unwrap();
        worst_mix = worst_mix.max((f - loocv_lda_accuracy(d, &chrom.mask).unwrap()).abs());
    }

    let mut lloyd = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(3..30);
        let dim = rng.random_range(1..4);
        let points: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let shift = if i % 2 == 0 { 0.0 } else { rng.random_range(0.0..6.0) };
                (0..dim).map(|_| shift + rng.random_range(-1.0..1.0)).collect()
            })
            .collect();
        let stats = kmeans2(&points, seed).unwrap();
        if stats.wcss_trace.windows(2).all(|w| w[1] <= w[0]) {
            lloyd += 1;
        }
    }
    verdict(
        elitist && worst_mix <= LOOCV_TOL && lloyd == 100,
        format!(
            "best-so-far non-decreasing over 100 generations: {elitist}; ω = 1 max |fitness − LOOCV| = {worst_mix:.1e} (tol {LOOCV_TOL:.0e}); Lloyd objective non-increasing on {lloyd}/100"
        ),
    )
}

fn t_test() -> Outcome {
    let a = [0.1, 0.2, 0.15, 0.25, 0.2];
    let b = [0.12, 0.26, 0.18, 0.30, 0.23];
    let ab = paired_t_test(&a, &b).unwrap();
    let ba = paired_t_test(&b, &a).unwrap();
    let crit = t_critical_95(4);
    let ok = (ab.t_statistic - WORKED_T).abs() <= T_TOL
        && ab.significant_at_95
        && (crit - 2.776).abs() <= CRITICAL_TOL
        && ab.t_statistic == -ba.t_statistic
        && ab.significant_at_95 == ba.significant_at_95;
    verdict(
        ok,
        format!(
            "t = {:.4} (expected {WORKED_T} ± {T_TOL}), critical(4) = {crit:.4} (2.776 ± {CRITICAL_TOL}), t(b, a) = {:.4}",
            ab.t_statistic, ba.t_statistic
        ),
    )
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            let e = e.unwrap();
            let name = e.file_name().to_string_lossy().into_owned();
            name.ends_with(".csv").then(|| (name, std::fs::read(e.path()).unwrap()))
        })
        .collect();
    v.sort();
    v
}

fn determinism() -> Outcome {
    let ws = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_tsvm-rfe");
    let status = Command::new(bin)
        .args(["synth", "--seed", "5", "--noise", "38", "--labelled", "20", "--unlabelled", "12"])
        .arg("--output-dir")
        .arg(ws.path().join("data"))
        .env_remove("TSVM_RFE_OUTPUT_DIR")
        .stdout(Stdio::null())
        .status()
        .unwrap();
    if !status.success() {
        return Outcome::Fail("synth failed".into());
    }
    let mut details = Vec::new();
    let mut ok = true;
    for method in ["svm-rfe", "tsvm-rfe", "glad"] {
        let config = ws.path().join(format!("{method}.toml"));
        std::fs::write(
            &config,
            format!(
                "seed = 21\nmethod = \"{method}\"\n[data]\nmatrix = \"data/matrix.csv\"\nlabels = \"data/labels.csv\"\n\
                 [schedule]\ntarget_counts = [10, 20, 30]\n[glad]\npopulation_size = 10\ngenerations = 10\n"
            ),
        )
        .unwrap();
        let first = ws.path().join(format!("{method}-first"));
        let run = |cfg: &Path, out: &Path| {
            Command::new(bin)
                .arg("run")
                .arg("--config")
                .arg(cfg)
                .arg("--output-dir")
                .arg(out)
                .env_remove("TSVM_RFE_OUTPUT_DIR")
                .stdout(Stdio::null())
                .status()
                .unwrap()
                .success()
        };
        if !run(&config, &first) {
            return Outcome::Fail(format!("{method} run failed"));
        }
        let manifest = first.join("manifest.toml");
        let (a, b) = (ws.path().join(format!("{method}-a")), ws.path().join(format!("{method}-b")));
        if !(run(&manifest, &a) && run(&manifest, &b)) {
            return Outcome::Fail(format!("{method} rerun from the manifest failed"));
        }
        let (fa, fb) = (csv_files(&a), csv_files(&b));
        let same = !fa.is_empty() && fa == fb && fa == csv_files(&first);
        ok &= same;
        details.push(format!("{method} {} CSV files {}", fa.len(), if same { "identical" } else { "differ" }));
    }
    verdict(ok, format!("two runs per manifest: {}", details.join(", ")))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "solver oracle equivalence", solver_oracle()));
    let (reduction, mono_a, runs_a) = tsvm_reduction();
    results.push((2, "TSVM reduction with k = 0", reduction));
    let (micro, mono_b, runs_b) = tsvm_micro();
    results.push((3, "TSVM micro-optimality", micro));
    results.push((
        4,
        "TSVM monotonicity",
        verdict(
            mono_a + mono_b == runs_a + runs_b,
            format!("{}/{} objective traces non-increasing at fixed C*", mono_a + mono_b, runs_a + runs_b),
        ),
    ));
    results.push((5, "linear RFE equivalence", linear_ranking()));
    results.push((6, "synthetic semi-supervised gain", semi_supervised_gain()));
    results.push((7, "AML-ALL desk-scale reproduction", aml_all()));
    results.push((8, "selection-benefit direction", selection_benefit()));
    results.push((9, "GLAD properties", glad_properties()));
    results.push((10, "paired t-test", t_test()));
    results.push((11, "determinism", determinism()));

    let mut failed = Vec::new();
    let mut unavailable = Vec::new();
    for (n, name, outcome) in &results {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed.push(*n);
                ("FAIL", d)
            }
            Outcome::Unavailable(d) => {
                unavailable.push(*n);
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2} {tag} {name}: {detail}");
    }
    let passed = results.len() - failed.len() - unavailable.len();
    println!(
        "acceptance: {passed} passed, {} failed, {} unavailable {:?}",
        failed.len(),
        unavailable.len(),
        unavailable
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
