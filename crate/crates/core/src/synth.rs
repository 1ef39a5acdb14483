//! Two-Gaussian synthetic data with known informative features.
//!
//! Class `y ∈ {+1, −1}` samples have informative coordinates drawn from
//! `N(y · separation / 2, 1)` and noise coordinates from `N(0, 1)`.
//! Informative features sit at seeded random column positions.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, DataError, Dataset, Label};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid dimensions: {0}")]
    Dimensions(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_informative: usize,
    pub n_noise: usize,
    pub n_labelled: usize,
    pub n_unlabelled: usize,
    /// Distance between the class means along each informative feature.
    pub separation: f64,
    /// Probability of `+1`; the labelled set gets `round(p · n_labelled)`
    /// positives, at least one of each class.
    pub positive_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_informative: 2,
            n_noise: 98,
            n_labelled: 8,
            n_unlabelled: 100,
            separation: 3.0,
            positive_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn n_features(&self) -> usize {
        self.n_informative + self.n_noise
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Dimensions(m));
        if self.n_features() == 0 {
            return bad("at least one feature is required".into());
        }
        if self.n_labelled < 2 {
            return bad(format!("need at least 2 labelled samples, got {}", self.n_labelled));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return bad(format!("separation must be finite and non-negative, got {}", self.separation));
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return bad(format!("positive fraction must lie in (0, 1), got {}", self.positive_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    /// Labelled samples first, then unlabelled ones.
    pub dataset: Dataset,
    /// Column indices of the informative features, ascending.
    pub informative: Vec<usize>,
    /// True class of every sample, labelled or not.
    pub truth: Vec<Label>,
}

/// Ground-truth sidecar written next to the dataset files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub spec: SynthSpec,
    pub informative_feature_ids: Vec<String>,
    pub informative_indices: Vec<usize>,
    pub sample_ids: Vec<String>,
    pub true_labels: Vec<String>,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_features();
    let mut columns: Vec<usize> = (0..n).collect();
    columns.shuffle(&mut rng);
    let mut informative = columns[..spec.n_informative].to_vec();
    informative.sort_unstable();
    let mut is_informative = vec![false; n];
    for &t in &informative {
        is_informative[t] = true;
    }

    let n_pos = ((spec.positive_fraction * spec.n_labelled as f64).round() as usize).clamp(1, spec.n_labelled - 1);
    let mut labelled: Vec<Label> = (0..spec.n_labelled)
        .map(|i| if i < n_pos { Label::Positive } else { Label::Negative })
        .collect();
    labelled.shuffle(&mut rng);
    let unlabelled: Vec<Label> = (0..spec.n_unlabelled)
        .map(|_| {
            if rng.random_bool(spec.positive_fraction) {
                Label::Positive
            } else {
                Label::Negative
            }
        })
        .collect();
    let truth: Vec<Label> = labelled.iter().chain(&unlabelled).copied().collect();

    let m = truth.len();
    let half = spec.separation / 2.0;
    let mut values = Vec::with_capacity(m * n);
    for label in &truth {
        let y = label.sign().expect("truth is labelled");
        for &inf in &is_informative {
            let noise: f64 = StandardNormal.sample(&mut rng);
            values.push(if inf { y * half + noise } else { noise });
        }
    }
    let matrix = ndarray::Array2::from_shape_vec((m, n), values).expect("shape matches");
    let labels: Vec<Label> = labelled
        .iter()
        .copied()
        .chain(std::iter::repeat_n(Label::Unlabelled, spec.n_unlabelled))
        .collect();
    let feature_ids = (0..n).map(|t| format!("g{t}")).collect();
    let sample_ids = (0..m).map(|i| format!("s{i}")).collect();
    let dataset = Dataset::new(matrix, labels, feature_ids, sample_ids)?;
    Ok(SynthData {
        dataset,
        informative,
        truth,
    })
}

impl SynthData {
    pub fn sidecar(&self, spec: &SynthSpec) -> Sidecar {
        Sidecar {
            spec: *spec,
            informative_feature_ids: self
                .informative
                .iter()
                .map(|&t| self.dataset.feature_ids()[t].clone())
                .collect(),
            informative_indices: self.informative.clone(),
            sample_ids: self.dataset.sample_ids().to_vec(),
            true_labels: self.truth.iter().map(|l| l.token().to_string()).collect(),
        }
    }

    /// Fraction of `indices` whose prediction matches the true class.
    pub fn accuracy_on(&self, indices: &[usize], predictions: &[Label]) -> f64 {
        let hits = indices.iter().zip(predictions).filter(|(&i, &p)| self.truth[i] == p).count();
        hits as f64 / indices.len().max(1) as f64
    }
}

/// File names used by [`write_synth`].
pub const MATRIX_FILE: &str = "matrix.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const TRUTH_FILE: &str = "truth.json";

/// Writes matrix, labels and the ground-truth sidecar into `dir`.
pub fn write_synth(dir: &Path, data: &SynthData, spec: &SynthSpec) -> Result<(), SynthError> {
    data::write_dataset(&data.dataset, dir.join(MATRIX_FILE), dir.join(LABELS_FILE))?;
    let text = serde_json::to_string_pretty(&data.sidecar(spec))?;
    std::fs::write(dir.join(TRUTH_FILE), text + "\n")?;
    Ok(())
}
