//! Genetic feature-subset search scored on labelled and unlabelled data.
//!
//! A chromosome is a feature bit mask. Its fitness is
//! `ω · LOOCV accuracy of two-class LDA on the labelled samples
//!  + (1 − ω) · cluster score of 2-means on the unlabelled samples`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, Label};
use crate::eval::{FoldPrediction, Trainer};

#[derive(Debug, Error, PartialEq)]
pub enum GladError {
    #[error("LOOCV needs at least 2 labelled samples per class, got {pos} and {neg}")]
    TooFewPerClass { pos: usize, neg: usize },
    #[error("mask selects no features")]
    EmptyMask,
    #[error("mask has length {mask}, data has {features} features")]
    MaskLength { mask: usize, features: usize },
    #[error("k-means needs two distinct points")]
    AllIdentical,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

impl From<DataError> for GladError {
    fn from(e: DataError) -> Self {
        GladError::InvalidParams(e.to_string())
    }
}

fn check_mask(mask: &[bool], n: usize) -> Result<Vec<usize>, GladError> {
    if mask.len() != n {
        return Err(GladError::MaskLength {
            mask: mask.len(),
            features: n,
        });
    }
    let active: Vec<usize> = (0..n).filter(|&t| mask[t]).collect();
    if active.is_empty() {
        return Err(GladError::EmptyMask);
    }
    Ok(active)
}

fn project(d: &Dataset, rows: &[usize], active: &[usize]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|&i| {
            let r = d.row(i);
            active.iter().map(|&t| r[t]).collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ridge added to the pooled covariance: `1e-6 · trace / p`, or 1 when the
/// trace vanishes.
fn ridge(trace: f64, p: usize) -> f64 {
    if trace > 0.0 {
        1e-6 * trace / p as f64
    } else {
        1.0
    }
}

/// LDA discriminant for `x` trained on `train` (rows `xs`, signs `ys`),
/// solved in feature space.
fn lda_primal(xs: &[Vec<f64>], ys: &[f64], train: &[usize], x: &[f64]) -> f64 {
    let p = x.len();
    let (mut mu_p, mut mu_n) = (DVector::zeros(p), DVector::zeros(p));
    let (mut np, mut nn) = (0usize, 0usize);
    for &j in train {
        let v = DVector::from_column_slice(&xs[j]);
        if ys[j] > 0.0 {
            mu_p += v;
            np += 1;
        } else {
            mu_n += v;
            nn += 1;
        }
    }
    mu_p /= np as f64;
    mu_n /= nn as f64;
    let nu = (train.len().saturating_sub(2)).max(1) as f64;
    let mut s = DMatrix::zeros(p, p);
    for &j in train {
        let mu = if ys[j] > 0.0 { &mu_p } else { &mu_n };
        let c = DVector::from_column_slice(&xs[j]) - mu;
        s.ger(1.0 / nu, &c, &c, 1.0);
    }
    let lambda = ridge(s.trace(), p);
    for t in 0..p {
        s[(t, t)] += lambda;
    }
    let v = &mu_p - &mu_n;
    let w = s.cholesky().expect("ridge makes the covariance positive definite").solve(&v);
    let mid = (&mu_p + &mu_n) * 0.5;
    w.dot(&(DVector::from_column_slice(x) - mid)) + (np as f64 / nn as f64).ln()
}

/// The same discriminant through the Woodbury identity on the Gram matrix
/// `g` of all rows; cost is cubic in the training size, not the feature
/// count.
fn lda_dual(g: &DMatrix<f64>, ys: &[f64], train: &[usize], q: usize, p: usize) -> f64 {
    let m = train.len();
    let np = train.iter().filter(|&&j| ys[j] > 0.0).count();
    let nn = m - np;
    let k = DMatrix::from_fn(m, m, |a, b| g[(train[a], train[b])]);
    let gx = DVector::from_fn(m, |a, _| g[(train[a], q)]);
    // row-space coefficients of the class means
    let mean_of = |positive: bool| {
        let count = if positive { np } else { nn } as f64;
        DVector::from_fn(m, |a, _| if (ys[train[a]] > 0.0) == positive { 1.0 / count } else { 0.0 })
    };
    let (a_p, a_n) = (mean_of(true), mean_of(false));
    let a = &a_p - &a_n;
    let b = (&a_p + &a_n) * 0.5;
    // centring operator C = I − M, M averaging each row's class
    let c = DMatrix::from_fn(m, m, |r, s| {
        let same = (ys[train[r]] > 0.0) == (ys[train[s]] > 0.0);
        let count = if ys[train[r]] > 0.0 { np } else { nn } as f64;
        f64::from(u8::from(r == s)) - if same { 1.0 / count } else { 0.0 }
    });
    let ckc = &c * &k * c.transpose();
    let nu = (m.saturating_sub(2)).max(1) as f64;
    let lambda = ridge(ckc.trace() / nu, p);
    let xv = &c * (&k * &a);
    let offset = &gx - &k * &b;
    let xq = &c * &offset;
    let mut system = ckc;
    for t in 0..m {
        system[(t, t)] += nu * lambda;
    }
    let solved = system.cholesky().expect("ridge makes the system positive definite").solve(&xv);
    (a.dot(&offset) - xq.dot(&solved)) / lambda + (np as f64 / nn as f64).ln()
}

/// LDA discriminants of `queries` from a fit on `train`, both indexing
/// `xs`; positive values vote `+1`.
fn discriminants(xs: &[Vec<f64>], ys: &[f64], train: &[usize], queries: &[usize]) -> Vec<f64> {
    let p = xs[0].len();
    if p >= train.len() {
        let m = xs.len();
        let g = DMatrix::from_fn(m, m, |a, b| dot(&xs[a], &xs[b]));
        queries.iter().map(|&q| lda_dual(&g, ys, train, q, p)).collect()
    } else {
        queries.iter().map(|&q| lda_primal(xs, ys, train, &xs[q])).collect()
    }
}

fn vote(delta: f64) -> Label {
    if delta >= 0.0 {
        Label::Positive
    } else {
        Label::Negative
    }
}

/// Fraction of labelled samples that two-class LDA (pooled covariance with a
/// ridge, log prior ratio) trained on all other labelled samples classifies
/// correctly, using only the masked features.
pub fn loocv_lda_accuracy(d: &Dataset, mask: &[bool]) -> Result<f64, GladError> {
    let active = check_mask(mask, d.n_features())?;
    let labelled = d.labelled_indices();
    let (pos, neg) = d.class_counts();
    if pos < 2 || neg < 2 {
        return Err(GladError::TooFewPerClass { pos, neg });
    }
    let xs = project(d, &labelled, &active);
    let ys: Vec<f64> = labelled.iter().map(|&i| d.labels()[i].sign().expect("labelled")).collect();
    let m = xs.len();
    let p = active.len();
    let gram = (p >= m - 1).then(|| DMatrix::from_fn(m, m, |a, b| dot(&xs[a], &xs[b])));
    let correct = (0..m)
        .filter(|&i| {
            let train: Vec<usize> = (0..m).filter(|&j| j != i).collect();
            let delta = match &gram {
                Some(g) => lda_dual(g, &ys, &train, i, p),
                None => lda_primal(&xs, &ys, &train, &xs[i]),
            };
            vote(delta).sign() == Some(ys[i])
        })
        .count();
    Ok(correct as f64 / m as f64)
}

/// Cross-validation trainer: LDA on a fixed feature mask. Unlabelled
/// samples are ignored.
pub struct LdaTrainer<'a> {
    pub data: &'a Dataset,
    pub mask: Vec<bool>,
}

impl Trainer for LdaTrainer<'_> {
    type Error = GladError;

    fn fit_predict(&self, train: &[usize], _: &[usize], test: &[usize]) -> Result<FoldPrediction, GladError> {
        let active = check_mask(&self.mask, self.data.n_features())?;
        let labels = self.data.labels();
        let pos = train.iter().filter(|&&i| labels[i] == Label::Positive).count();
        let neg = train.len() - pos;
        if pos < 1 || neg < 1 {
            return Err(GladError::TooFewPerClass { pos, neg });
        }
        let rows: Vec<usize> = train.iter().chain(test).copied().collect();
        let xs = project(self.data, &rows, &active);
        let ys: Vec<f64> = rows.iter().map(|&i| labels[i].sign().unwrap_or(0.0)).collect();
        let local_train: Vec<usize> = (0..train.len()).collect();
        let queries: Vec<usize> = (train.len()..rows.len()).collect();
        Ok(FoldPrediction {
            predictions: discriminants(&xs, &ys, &local_train, &queries).into_iter().map(vote).collect(),
            converged: true,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub centroids: Vec<Vec<f64>>,
    pub ratios: Vec<f64>,
    pub sizes: Vec<usize>,
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares after initialization and after every
    /// Lloyd step.
    pub wcss_trace: Vec<f64>,
    pub iterations: usize,
}

impl ClusterStats {
    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn wcss(points: &[Vec<f64>], centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
    points.iter().zip(assignment).map(|(x, &c)| dist2(x, &centroids[c])).sum()
}

fn centroid_of(points: &[Vec<f64>], assignment: &[usize], c: usize, dim: usize) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for (x, &a) in points.iter().zip(assignment) {
        if a == c {
            for (s, v) in sum.iter_mut().zip(x) {
                *s += v;
            }
            count += 1;
        }
    }
    (count > 0).then(|| sum.into_iter().map(|s| s / count as f64).collect())
}

/// Lloyd's 2-means from two distinct seeded data points, at most 300
/// iterations. An emptied cluster takes over the point farthest from its
/// centroid.
pub fn kmeans2(points: &[Vec<f64>], seed: u64) -> Result<ClusterStats, GladError> {
    let m = points.len();
    let first_distinct = (1..m).find(|&i| points[i] != points[0]);
    if m < 2 || first_distinct.is_none() {
        return Err(GladError::AllIdentical);
    }
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = rng.random_range(0..m);
    let others: Vec<usize> = (0..m).filter(|&i| points[i] != points[a]).collect();
    let b = others[rng.random_range(0..others.len())];
    let mut centroids = vec![points[a].clone(), points[b].clone()];
    let assign = |centroids: &[Vec<f64>]| -> Vec<usize> {
        points
            .iter()
            .map(|x| usize::from(dist2(x, &centroids[1]) < dist2(x, &centroids[0])))
            .collect()
    };
    let mut assignment = assign(&centroids);
    let mut trace = vec![wcss(points, &centroids, &assignment)];
    let mut iterations = 0;
    for _ in 0..300 {
        iterations += 1;
        for c in 0..2 {
            match centroid_of(points, &assignment, c, dim) {
                Some(mu) => centroids[c] = mu,
                None => {
                    let far = (0..m)
                        .max_by(|&i, &j| {
                            let di = dist2(&points[i], &centroids[assignment[i]]);
                            let dj = dist2(&points[j], &centroids[assignment[j]]);
                            di.total_cmp(&dj).then(j.cmp(&i))
                        })
                        .expect("non-empty");
                    assignment[far] = c;
                    centroids[c] = points[far].clone();
                    let other = 1 - c;
                    if let Some(mu) = centroid_of(points, &assignment, other, dim) {
                        centroids[other] = mu;
                    }
                }
            }
        }
        trace.push(wcss(points, &centroids, &assignment));
        let next = assign(&centroids);
        if next == assignment {
            break;
        }
        assignment = next;
        trace.push(wcss(points, &centroids, &assignment));
    }
    let sizes: Vec<usize> = (0..2).map(|c| assignment.iter().filter(|&&a| a == c).count()).collect();
    Ok(ClusterStats {
        ratios: sizes.iter().map(|&s| s as f64 / m as f64).collect(),
        centroids,
        sizes,
        assignment,
        wcss_trace: trace,
        iterations,
    })
}

/// How the separation and ratio terms of the cluster score are joined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreCombination {
    /// `separation · (1 − penalty)`.
    #[default]
    Product,
    /// `separation − penalty`.
    Difference,
}

impl ScoreCombination {
    fn join(self, separation: f64, penalty: f64) -> f64 {
        match self {
            ScoreCombination::Product => separation * (1.0 - penalty),
            ScoreCombination::Difference => separation - penalty,
        }
    }
}

/// [`unlabelled_score_with`] under [`ScoreCombination::Product`].
pub fn unlabelled_score(stats: &ClusterStats, points: &[Vec<f64>], expected: &[f64]) -> f64 {
    unlabelled_score_with(stats, points, expected, ScoreCombination::Product)
}

/// Separation and ratio terms joined by `rule`, clamped to `[0, 1]`.
///
/// `separation` is the centroid distance over itself plus the summed mean
/// within-cluster distances; `ratio_penalty` is the RMS gap between cluster
/// ratios and `expected`, under whichever cluster-to-class matching makes it
/// smallest.
pub fn unlabelled_score_with(stats: &ClusterStats, points: &[Vec<f64>], expected: &[f64], rule: ScoreCombination) -> f64 {
    let k = stats.n_clusters();
    let mut between = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            between += dist2(&stats.centroids[i], &stats.centroids[j]).sqrt();
        }
    }
    let mut scatter = 0.0;
    for c in 0..k {
        if stats.sizes[c] == 0 {
            continue;
        }
        let within: f64 = points
            .iter()
            .zip(&stats.assignment)
            .filter(|(_, &a)| a == c)
            .map(|(x, _)| dist2(x, &stats.centroids[c]).sqrt())
            .sum();
        scatter += within / stats.sizes[c] as f64;
    }
    let denom = between + scatter;
    if denom == 0.0 {
        return 0.0;
    }
    let separation = between / denom;
    let penalty = |order: &[usize]| -> f64 {
        let msq = (0..k).map(|i| (stats.ratios[i] - expected[order[i]]).powi(2)).sum::<f64>() / k as f64;
        msq.sqrt()
    };
    let penalty = if k == 2 { penalty(&[0, 1]).min(penalty(&[1, 0])) } else { penalty(&(0..k).collect::<Vec<_>>()) };
    rule.join(separation, penalty).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GladParams {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// `None` means `1 / n` for `n` features.
    pub mutation_rate: Option<f64>,
    /// `ω` in `ω · labelled + (1 − ω) · unlabelled`.
    pub mixing_weight: f64,
    /// Expected cluster ratios; `None` uses the labelled class prior.
    pub expected_ratios: Option<Vec<f64>>,
    /// Seed of the genetic operators.
    pub seed: u64,
    /// Seed of the 2-means initialization inside the fitness.
    pub kmeans_seed: u64,
    pub tournament_size: usize,
    /// Probability that a bit is set in the initial population.
    pub p_init: f64,
    pub combination: ScoreCombination,
}

impl Default for GladParams {
    fn default() -> Self {
        GladParams {
            population_size: 50,
            generations: 100,
            crossover_rate: 0.9,
            mutation_rate: None,
            mixing_weight: 0.5,
            expected_ratios: None,
            seed: 0,
            kmeans_seed: 0,
            tournament_size: 3,
            p_init: 0.05,
            combination: ScoreCombination::Product,
        }
    }
}

impl GladParams {
    pub fn validate(&self) -> Result<(), GladError> {
        let bad = |m: String| Err(GladError::InvalidParams(m));
        if self.population_size < 2 {
            return bad(format!("population must be at least 2, got {}", self.population_size));
        }
        if self.tournament_size < 1 {
            return bad("tournament size must be positive".into());
        }
        for (name, v) in [
            ("crossover_rate", self.crossover_rate),
            ("mixing_weight", self.mixing_weight),
            ("p_init", self.p_init),
            ("mutation_rate", self.mutation_rate.unwrap_or(0.0)),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if let Some(r) = &self.expected_ratios {
            if r.len() != 2 || r.iter().any(|&v| v < 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad(format!("expected ratios must be 2 non-negative values summing to 1, got {r:?}"));
            }
        }
        Ok(())
    }

    pub fn expected(&self, d: &Dataset) -> Vec<f64> {
        self.expected_ratios.clone().unwrap_or_else(|| {
            let (pos, neg) = d.class_counts();
            let total = (pos + neg) as f64;
            vec![pos as f64 / total, neg as f64 / total]
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GladChromosome {
    pub mask: Vec<bool>,
    /// `None` until evaluated.
    pub fitness: Option<f64>,
}

impl GladChromosome {
    pub fn popcount(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

/// Unlabelled cluster score of `mask` on the unlabelled samples of `d`;
/// 0 when they cannot be split into two clusters.
pub fn unlabelled_component(
    d: &Dataset,
    mask: &[bool],
    expected: &[f64],
    seed: u64,
    rule: ScoreCombination,
) -> Result<f64, GladError> {
    let active = check_mask(mask, d.n_features())?;
    let points = project(d, &d.unlabelled_indices(), &active);
    Ok(match kmeans2(&points, seed) {
        Ok(stats) => unlabelled_score_with(&stats, &points, expected, rule),
        Err(GladError::AllIdentical) => 0.0,
        Err(e) => return Err(e),
    })
}

/// `ω · LOOCV + (1 − ω) · unlabelled score`; with no unlabelled samples the
/// fitness is the LOOCV accuracy.
pub fn glad_fitness(d: &Dataset, chrom: &GladChromosome, params: &GladParams) -> Result<f64, GladError> {
    let labelled = loocv_lda_accuracy(d, &chrom.mask)?;
    let w = params.mixing_weight;
    if d.unlabelled_indices().is_empty() || w == 1.0 {
        return Ok(labelled);
    }
    let unlabelled = unlabelled_component(d, &chrom.mask, &params.expected(d), params.kmeans_seed, params.combination)?;
    if w == 0.0 {
        return Ok(unlabelled);
    }
    Ok((w * labelled + (1.0 - w) * unlabelled).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_popcount: usize,
    /// Best fitness seen in this or any earlier generation.
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GladResult {
    pub best: GladChromosome,
    pub history: Vec<GenerationStats>,
}

impl GladResult {
    pub const CSV_HEADER: [&'static str; 5] = ["generation", "best_fitness", "mean_fitness", "best_popcount", "best_so_far"];

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.history
            .iter()
            .map(|h| {
                vec![
                    h.generation.to_string(),
                    h.best_fitness.to_string(),
                    h.mean_fitness.to_string(),
                    h.best_popcount.to_string(),
                    h.best_so_far.to_string(),
                ]
            })
            .collect()
    }

    pub fn selected_features(&self, d: &Dataset) -> Vec<String> {
        (0..self.best.mask.len())
            .filter(|&t| self.best.mask[t])
            .map(|t| d.feature_ids()[t].clone())
            .collect()
    }
}

/// Random stream for chromosome `c` of generation `g`.
fn stream(seed: u64, g: usize, c: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((g as u64) << 32) | c as u64);
    rng
}

fn repair(mask: &mut [bool], rng: &mut ChaCha8Rng) {
    if !mask.iter().any(|&b| b) {
        let t = rng.random_range(0..mask.len());
        mask[t] = true;
    }
}

fn tournament(fitness: &[f64], size: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut best = rng.random_range(0..fitness.len());
    for _ in 1..size {
        let c = rng.random_range(0..fitness.len());
        if fitness[c] > fitness[best] || (fitness[c] == fitness[best] && c < best) {
            best = c;
        }
    }
    best
}

fn evaluate(
    d: &Dataset,
    population: &[Vec<bool>],
    params: &GladParams,
    cache: &mut HashMap<Vec<bool>, f64>,
) -> Result<Vec<f64>, GladError> {
    let mut pending: Vec<&Vec<bool>> = population.iter().filter(|m| !cache.contains_key(*m)).collect();
    pending.sort();
    pending.dedup();
    let scored: Vec<(Vec<bool>, f64)> = pending
        .par_iter()
        .map(|mask| {
            let chrom = GladChromosome {
                mask: (*mask).clone(),
                fitness: None,
            };
            glad_fitness(d, &chrom, params).map(|f| ((*mask).clone(), f))
        })
        .collect::<Result<_, _>>()?;
    cache.extend(scored);
    Ok(population.iter().map(|m| cache[m]).collect())
}

fn summarize(generation: usize, population: &[Vec<bool>], fitness: &[f64], best_so_far: f64) -> (GenerationStats, usize) {
    let best = (0..fitness.len())
        .max_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(b.cmp(&a)))
        .expect("non-empty population");
    let stats = GenerationStats {
        generation,
        best_fitness: fitness[best],
        mean_fitness: fitness.iter().sum::<f64>() / fitness.len() as f64,
        best_popcount: population[best].iter().filter(|&&b| b).count(),
        best_so_far: best_so_far.max(fitness[best]),
    };
    (stats, best)
}

/// Generational GA with tournament selection, uniform crossover, per-bit
/// mutation and one elite.
pub fn run_glad(d: &Dataset, params: &GladParams) -> Result<GladResult, GladError> {
    params.validate()?;
    let n = d.n_features();
    if n == 0 {
        return Err(GladError::EmptyMask);
    }
    let (pos, neg) = d.class_counts();
    if pos < 2 || neg < 2 {
        return Err(GladError::TooFewPerClass { pos, neg });
    }
    let mutation = params.mutation_rate.unwrap_or(1.0 / n as f64);
    let mut cache = HashMap::new();

    let mut population: Vec<Vec<bool>> = (0..params.population_size)
        .map(|c| {
            let mut rng = stream(params.seed, 0, c);
            let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(params.p_init)).collect();
            repair(&mut mask, &mut rng);
            mask
        })
        .collect();
    let mut fitness = evaluate(d, &population, params, &mut cache)?;
    let (stats, mut elite) = summarize(0, &population, &fitness, f64::NEG_INFINITY);
    let mut best = GladChromosome {
        mask: population[elite].clone(),
        fitness: Some(fitness[elite]),
    };
    let mut history = vec![stats];

    for g in 1..=params.generations {
        let mut next = Vec::with_capacity(params.population_size);
        next.push(population[elite].clone());
        for c in 1..params.population_size {
            let mut rng = stream(params.seed, g, c);
            let a = tournament(&fitness, params.tournament_size, &mut rng);
            let b = tournament(&fitness, params.tournament_size, &mut rng);
            let mut child = if rng.random_bool(params.crossover_rate) {
                (0..n)
                    .map(|t| if rng.random_bool(0.5) { population[a][t] } else { population[b][t] })
                    .collect()
            } else {
                population[a].clone()
            };
            for bit in child.iter_mut() {
                if rng.random_bool(mutation) {
                    *bit = !*bit;
                }
            }
            repair(&mut child, &mut rng);
            next.push(child);
        }
        population = next;
        fitness = evaluate(d, &population, params, &mut cache)?;
        let previous = history.last().expect("history is non-empty").best_so_far;
        let (stats, e) = summarize(g, &population, &fitness, previous);
        elite = e;
        if fitness[elite] > best.fitness.expect("evaluated") {
            best = GladChromosome {
                mask: population[elite].clone(),
                fitness: Some(fitness[elite]),
            };
        }
        history.push(stats);
    }
    Ok(GladResult { best, history })
}
