use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Per-feature activation vector `z`; kernels see `z * x`.
///
/// Entries are 0 or 1 except transiently while a pruning step rescales them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMask {
    z: Vec<f64>,
}

impl FeatureMask {
    pub fn ones(n: usize) -> Self {
        FeatureMask { z: vec![1.0; n] }
    }

    pub fn from_weights(z: Vec<f64>) -> Self {
        FeatureMask { z }
    }

    /// Binary mask with exactly the listed features active.
    pub fn from_active(n: usize, active: &[usize]) -> Self {
        let mut z = vec![0.0; n];
        for &t in active {
            z[t] = 1.0;
        }
        FeatureMask { z }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    pub fn get(&self, t: usize) -> f64 {
        self.z[t]
    }

    pub fn is_active(&self, t: usize) -> bool {
        self.z[t] != 0.0
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.z.len()).filter(|&t| self.z[t] != 0.0).collect()
    }

    pub fn popcount(&self) -> usize {
        self.z.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn is_binary(&self) -> bool {
        self.z.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Non-zero entries become 1.
    pub fn binarized(&self) -> Self {
        FeatureMask {
            z: self.z.iter().map(|&v| if v != 0.0 { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Elementwise product `z * s`.
    pub fn scaled(&self, s: &[f64]) -> Self {
        FeatureMask {
            z: self.z.iter().zip(s).map(|(a, b)| a * b).collect(),
        }
    }

    /// Hex SHA-256 over the little-endian bytes of every entry.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.z.len() as u64).to_le_bytes());
        for v in &self.z {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn active_set_and_fingerprint() {
        let m = FeatureMask::from_active(5, &[1, 3]);
        assert_eq!(m.active_indices(), vec![1, 3]);
        assert_eq!(m.popcount(), 2);
        assert!(m.is_binary());
        assert_ne!(m.fingerprint(), FeatureMask::from_active(5, &[1, 4]).fingerprint());
        assert_eq!(m.fingerprint(), FeatureMask::from_active(5, &[3, 1]).fingerprint());
    }

    #[test]
    fn scale_then_binarize() {
        let m = FeatureMask::ones(3).scaled(&[0.2, 0.0, 3.0]);
        assert!(!m.is_binary());
        assert_eq!(m.binarized().values(), &[1.0, 0.0, 1.0]);
    }
}
