//! Kernels on masked feature vectors, Gram matrices and an LRU Gram cache.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::FeatureMask;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("vector lengths differ: {a} vs {b} (mask {mask})")]
    LengthMismatch { a: usize, b: usize, mask: usize },
    #[error("RBF width must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("polynomial degree must be at least 1")]
    InvalidDegree,
    #[error("empty sample set")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
    Poly,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Rbf => "rbf",
            KernelKind::Poly => "poly",
        }
    }
}

/// `Linear`: `<a, b>`; `Rbf`: `exp(-|a - b|^2 / (2 sigma^2))`;
/// `Poly`: `(<a, b> + 1)^degree`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { sigma: f64 },
    Poly { degree: u32 },
}

impl Kernel {
    pub fn rbf(sigma: f64) -> Result<Kernel, KernelError> {
        let k = Kernel::Rbf { sigma };
        k.validate()?;
        Ok(k)
    }

    pub fn poly(degree: u32) -> Result<Kernel, KernelError> {
        let k = Kernel::Poly { degree };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        match *self {
            Kernel::Rbf { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(KernelError::InvalidSigma(sigma)),
            Kernel::Poly { degree: 0 } => Err(KernelError::InvalidDegree),
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            Kernel::Linear => KernelKind::Linear,
            Kernel::Rbf { .. } => KernelKind::Rbf,
            Kernel::Poly { .. } => KernelKind::Poly,
        }
    }

    /// Kernel on vectors that already carry the mask.
    #[inline]
    pub(crate) fn apply(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Rbf { sigma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
            Kernel::Poly { degree } => (dot(a, b) + 1.0).powi(degree as i32),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Linear => write!(f, "linear"),
            Kernel::Rbf { sigma } => write!(f, "rbf(sigma={sigma})"),
            Kernel::Poly { degree } => write!(f, "poly(degree={degree})"),
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `z * x`, dropping inactive coordinates when the mask is binary. Dropped
/// coordinates contribute exact zeros, so every kernel value is unchanged.
pub(crate) fn masked(x: &[f64], z: &FeatureMask) -> Vec<f64> {
    if z.is_binary() {
        x.iter()
            .zip(z.values())
            .filter(|(_, &w)| w != 0.0)
            .map(|(v, _)| *v)
            .collect()
    } else {
        x.iter().zip(z.values()).map(|(v, w)| v * w).collect()
    }
}

pub fn kernel_eval(kernel: &Kernel, a: &[f64], b: &[f64], z: &FeatureMask) -> Result<f64, KernelError> {
    if a.len() != b.len() || a.len() != z.len() {
        return Err(KernelError::LengthMismatch {
            a: a.len(),
            b: b.len(),
            mask: z.len(),
        });
    }
    let za: Vec<f64> = a.iter().zip(z.values()).map(|(v, w)| v * w).collect();
    let zb: Vec<f64> = b.iter().zip(z.values()).map(|(v, w)| v * w).collect();
    Ok(kernel.apply(&za, &zb))
}

/// Dense symmetric kernel matrix over a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    size: usize,
    values: Vec<f64>,
    kernel: Kernel,
    mask_fingerprint: String,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.size..(i + 1) * self.size]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn mask_fingerprint(&self) -> &str {
        &self.mask_fingerprint
    }

    pub fn bytes(&self) -> usize {
        self.values.len() * std::mem::size_of::<f64>()
    }
}

/// Upper triangle computed (rows in parallel), then mirrored.
pub fn gram<R: AsRef<[f64]> + Sync>(kernel: &Kernel, rows: &[R], z: &FeatureMask) -> Result<GramMatrix, KernelError> {
    if rows.is_empty() {
        return Err(KernelError::Empty);
    }
    kernel.validate()?;
    for r in rows {
        if r.as_ref().len() != z.len() {
            return Err(KernelError::LengthMismatch {
                a: r.as_ref().len(),
                b: z.len(),
                mask: z.len(),
            });
        }
    }
    let compact: Vec<Vec<f64>> = rows.iter().map(|r| masked(r.as_ref(), z)).collect();
    let m = compact.len();
    let upper: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| (i..m).map(|j| kernel.apply(&compact[i], &compact[j])).collect())
        .collect();
    let mut values = vec![0.0; m * m];
    for (i, row) in upper.iter().enumerate() {
        for (offset, &v) in row.iter().enumerate() {
            let j = i + offset;
            values[i * m + j] = v;
            values[j * m + i] = v;
        }
    }
    Ok(GramMatrix {
        size: m,
        values,
        kernel: *kernel,
        mask_fingerprint: z.fingerprint(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    kernel: String,
    mask: String,
    samples: String,
}

impl CacheKey {
    /// `samples` identifies the row set (e.g. a dataset digest).
    pub fn new(kernel: &Kernel, mask: &FeatureMask, samples: impl Into<String>) -> Self {
        CacheKey {
            kernel: format!("{kernel:?}"),
            mask: mask.fingerprint(),
            samples: samples.into(),
        }
    }
}

#[derive(Default)]
struct CacheState {
    entries: HashMap<CacheKey, (Arc<GramMatrix>, u64)>,
    clock: u64,
    bytes: usize,
}

/// Least-recently-used Gram cache bounded by a byte budget.
pub struct GramCache {
    budget: usize,
    state: Mutex<CacheState>,
}

impl GramCache {
    pub fn new(budget_bytes: usize) -> Self {
        GramCache {
            budget: budget_bytes,
            state: Mutex::new(CacheState::default()),
        }
    }

    pub fn get(&self, key: &CacheKey) -> Option<Arc<GramMatrix>> {
        let mut state = self.state.lock().expect("gram cache poisoned");
        state.clock += 1;
        let now = state.clock;
        state.entries.get_mut(key).map(|(g, used)| {
            *used = now;
            Arc::clone(g)
        })
    }

    /// Builds outside the lock; a concurrent insert of the same key wins.
    pub fn get_or_try_insert<E>(
        &self,
        key: CacheKey,
        build: impl FnOnce() -> Result<GramMatrix, E>,
    ) -> Result<Arc<GramMatrix>, E> {
        if let Some(g) = self.get(&key) {
            return Ok(g);
        }
        let built = Arc::new(build()?);
        let mut state = self.state.lock().expect("gram cache poisoned");
        state.clock += 1;
        let now = state.clock;
        if let Some((g, used)) = state.entries.get_mut(&key) {
            *used = now;
            return Ok(Arc::clone(g));
        }
        let size = built.bytes();
        while state.bytes + size > self.budget && !state.entries.is_empty() {
            let oldest = state
                .entries
                .iter()
                .min_by_key(|(_, (_, used))| *used)
                .map(|(k, _)| k.clone())
                .expect("non-empty");
            if let Some((g, _)) = state.entries.remove(&oldest) {
                state.bytes -= g.bytes();
            }
        }
        if size <= self.budget {
            state.bytes += size;
            state.entries.insert(key, (Arc::clone(&built), now));
        }
        Ok(built)
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("gram cache poisoned").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bytes(&self) -> usize {
        self.state.lock().expect("gram cache poisoned").bytes
    }
}

impl Default for GramCache {
    fn default() -> Self {
        GramCache::new(256 << 20)
    }
}
