//! Scalar abstraction shared by the linear-algebra kernel, the integrator and
//! the diagnostics.

use nalgebra::{DMatrix, DVector, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type usable by the numeric core: `f32` or `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("scalar converts to f64")
    }

    #[inline]
    fn infinity() -> Self {
        Self::lit(f64::INFINITY)
    }

    #[inline]
    fn neg_infinity() -> Self {
        Self::lit(f64::NEG_INFINITY)
    }

    #[inline]
    fn machine_epsilon() -> Self {
        Self::default_epsilon()
    }

    /// Relative tolerance under which a negative eigenvalue of a PSD matrix is
    /// attributed to rounding.
    #[inline]
    fn eigen_clamp_tolerance() -> Self {
        let floor = Self::lit(1e-8);
        let scaled = Self::machine_epsilon() * Self::lit(100.0);
        if scaled > floor {
            scaled
        } else {
            floor
        }
    }


    /// Eigenvalues and eigenvectors (as columns) of a symmetric matrix, read
    /// from its lower triangle. `None` if the iteration fails.
    fn symmetric_eigen(k: &DMatrix<Self>) -> Option<(DVector<Self>, DMatrix<Self>)>;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            fn symmetric_eigen(k: &DMatrix<Self>) -> Option<(DVector<Self>, DMatrix<Self>)> {
                let m = k.nrows();
                let a = faer::Mat::<$t>::from_fn(m, m, |i, j| k[(i, j)]);
                let eig = a.self_adjoint_eigen(faer::Side::Lower).ok()?;
                let values = eig.S().column_vector();
                let vectors = eig.U();
                Some((
                    DVector::from_fn(m, |i, _| values[i]),
                    DMatrix::from_fn(m, m, |i, j| vectors[(i, j)]),
                ))
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_round_trip() {
        assert_eq!(f64::lit(0.25).as_f64(), 0.25);
        assert_eq!(f32::lit(0.5).as_f64(), 0.5);
        assert!(f64::neg_infinity() < f64::lit(-1e300));
    }

    #[test]
    fn clamp_tolerance_depends_on_precision() {
        assert_eq!(f64::eigen_clamp_tolerance(), 1e-8);
        assert!(f32::eigen_clamp_tolerance().as_f64() > 1e-6);
    }
}
