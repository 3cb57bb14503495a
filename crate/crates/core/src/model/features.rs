//! Per-patch feature vectors, one per grid cell. The real visual encoder is
//! out of scope here; a seeded generator keyed by the image reference stands
//! in for it, so each "image" is a distinct, reproducible feature field.

use alloc::vec::Vec;

use crate::rng::{hash_str, Rng};

/// Feature matrix `[count, dim]`, row per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchFeatures {
    count: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PatchFeatures {
    /// Deterministic synthetic features for `(image_ref, seed)`.
    pub fn synthetic(image_ref: &str, seed: u64, count: usize, dim: usize) -> Self {
        let mut rng = Rng::new(seed ^ hash_str(image_ref));
        let data = (0..count * dim).map(|_| rng.next_gaussian()).collect();
        PatchFeatures { count, dim, data }
    }

    /// Wraps an explicit matrix; `data.len()` must equal `count * dim`.
    pub fn from_raw(count: usize, dim: usize, data: Vec<f64>) -> Option<Self> {
        if data.len() == count * dim {
            Some(PatchFeatures { count, dim, data })
        } else {
            None
        }
    }

    pub fn zeros(count: usize, dim: usize) -> Self {
        PatchFeatures {
            count,
            dim,
            data: alloc::vec![0.0; count * dim],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic_and_keyed() {
        let a = PatchFeatures::synthetic("img-001", 42, 64, 8);
        let b = PatchFeatures::synthetic("img-001", 42, 64, 8);
        let c = PatchFeatures::synthetic("img-002", 42, 64, 8);
        let d = PatchFeatures::synthetic("img-001", 43, 64, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_eq!(a.count(), 64);
        assert_eq!(a.row(63).len(), 8);
    }

    #[test]
    fn from_raw_checks_shape() {
        assert!(PatchFeatures::from_raw(2, 3, alloc::vec![0.0; 6]).is_some());
        assert!(PatchFeatures::from_raw(2, 3, alloc::vec![0.0; 5]).is_none());
    }
}
