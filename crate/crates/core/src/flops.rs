//! Analytic floating-point operation counters, partitioned by how often a
//! computation must be repeated: once per dataset, once per Gibbs scan, or
//! once per evaluated value of the global scale.

use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Default)]
pub struct FlopCounter {
    per_dataset: AtomicU64,
    per_scan: AtomicU64,
    per_tau: AtomicU64,
    decompositions: AtomicU64,
    tau_evaluations: AtomicU64,
}

/// Point-in-time copy of a [`FlopCounter`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopCounts {
    pub per_dataset: u64,
    pub per_scan: u64,
    pub per_tau: u64,
    /// Number of symmetric eigendecompositions performed.
    pub decompositions: u64,
    /// Number of per-tau kernel evaluations (log-determinant or quadratic form).
    pub tau_evaluations: u64,
}

impl FlopCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add_per_dataset(&self, flops: u64) {
        self.per_dataset.fetch_add(flops, Ordering::Relaxed);
    }

    #[inline]
    pub fn add_per_scan(&self, flops: u64) {
        self.per_scan.fetch_add(flops, Ordering::Relaxed);
    }

    #[inline]
    pub fn add_per_tau(&self, flops: u64) {
        self.per_tau.fetch_add(flops, Ordering::Relaxed);
        self.tau_evaluations.fetch_add(1, Ordering::Relaxed);
    }

    #[inline]
    pub fn add_decomposition(&self, flops: u64) {
        self.per_scan.fetch_add(flops, Ordering::Relaxed);
        self.decompositions.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> FlopCounts {
        FlopCounts {
            per_dataset: self.per_dataset.load(Ordering::Relaxed),
            per_scan: self.per_scan.load(Ordering::Relaxed),
            per_tau: self.per_tau.load(Ordering::Relaxed),
            decompositions: self.decompositions.load(Ordering::Relaxed),
            tau_evaluations: self.tau_evaluations.load(Ordering::Relaxed),
        }
    }
}

impl FlopCounts {
    pub fn total(&self) -> u64 {
        self.per_dataset + self.per_scan + self.per_tau
    }

    pub fn since(&self, earlier: &FlopCounts) -> FlopCounts {
        FlopCounts {
            per_dataset: self.per_dataset - earlier.per_dataset,
            per_scan: self.per_scan - earlier.per_scan,
            per_tau: self.per_tau - earlier.per_tau,
            decompositions: self.decompositions - earlier.decompositions,
            tau_evaluations: self.tau_evaluations - earlier.tau_evaluations,
        }
    }
}

impl std::ops::Add for FlopCounts {
    type Output = FlopCounts;

    fn add(self, rhs: FlopCounts) -> FlopCounts {
        FlopCounts {
            per_dataset: self.per_dataset + rhs.per_dataset,
            per_scan: self.per_scan + rhs.per_scan,
            per_tau: self.per_tau + rhs.per_tau,
            decompositions: self.decompositions + rhs.decompositions,
            tau_evaluations: self.tau_evaluations + rhs.tau_evaluations,
        }
    }
}

/// Dense product `A B` with `A` of size `rows x inner` and `B` of size `inner x cols`.
pub(crate) fn gemm(rows: usize, inner: usize, cols: usize) -> u64 {
    2 * (rows as u64) * (inner as u64) * (cols as u64)
}

/// Symmetric eigendecomposition of an `m x m` matrix, using the `8m^3/3`
/// operation count for tridiagonal reduction plus QR iteration.
pub(crate) fn symmetric_eigen(m: usize) -> u64 {
    let m = m as u64;
    8 * m * m * m / 3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_accumulate_independently() {
        let c = FlopCounter::new();
        c.add_per_dataset(10);
        c.add_decomposition(100);
        c.add_per_tau(3);
        c.add_per_tau(3);
        let s = c.snapshot();
        assert_eq!(s.per_dataset, 10);
        assert_eq!(s.per_scan, 100);
        assert_eq!(s.per_tau, 6);
        assert_eq!(s.decompositions, 1);
        assert_eq!(s.tau_evaluations, 2);
        assert_eq!(s.total(), 116);
    }
}
