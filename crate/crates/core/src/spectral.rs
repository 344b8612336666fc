//! Per-scan spectral caches for the collapsed density of the global scale.
//!
//! Each Gibbs scan decomposes one `m x m` symmetric matrix, `m = min(n, p)`
//! in the automatically selected regime, that does not depend on `tau`:
//!
//! | regime       | decomposed matrix           | projected vector `w`     |
//! |--------------|-----------------------------|--------------------------|
//! | `LinearPN`   | `X L^2 X^T`                 | `V^T y`                  |
//! | `LinearNP`   | `L X^T X L`                 | `V^T L X^T y`            |
//! | `LogisticPN` | `W^½ X L^2 X^T W^½`          | `V^T W^-½ kappa`         |
//! | `LogisticNP` | `L X^T W X L`               | `V^T L X^T kappa`        |
//!
//! with `L = diag(lambda)` and `W = diag(omega)`. After the decomposition the
//! eigenvectors are dropped from the cache and every evaluation of
//! `log |M_tau|` or of the `tau`-dependent quadratic term costs `O(m)`.
//!
//! Write `A` for the whitened design (`X`, or `W^½ X`), `r` for the whitened
//! target (`y`, or `W^-½ kappa`) and `a` for the whitened intercept column
//! (`1`, or `W^½ 1`). With `Mt = I + tau^2 A L^2 A^T`, every bilinear form
//! `u^T Mt^-1 v` reduces to `u^T v - sum_i g_i(tau) (proj u)_i (proj v)_i`
//! where `g_i = tau^2 d_i / (1 + tau^2 d_i)` for the `n x n` decomposition and
//! `g_i = tau^2 / (1 + tau^2 d_i)` for the `p x p` one (projections through
//! `L A^T` first). An unpenalized intercept adds the rank-one term
//! `sigma0^2 a a^T`, handled with the matrix determinant lemma and a
//! Sherman-Morrison correction; in the `p x p` regime that correction is the
//! Schur complement of the intercept block of `Sigma^-1 + A_+^T A_+`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flops::{self, FlopCounter};
use crate::model::{Dataset, ModelKind};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    LinearPN,
    LinearNP,
    LogisticPN,
    LogisticNP,
}

impl Regime {
    /// The `n x n` decomposition when `p > n`, the `p x p` one otherwise.
    pub fn auto(kind: ModelKind, n: usize, p: usize) -> Self {
        match (kind, p > n) {
            (ModelKind::Linear, true) => Regime::LinearPN,
            (ModelKind::Linear, false) => Regime::LinearNP,
            (ModelKind::Logistic, true) => Regime::LogisticPN,
            (ModelKind::Logistic, false) => Regime::LogisticNP,
        }
    }

    pub fn for_dataset<T: Real>(d: &Dataset<T>) -> Self {
        Self::auto(d.kind(), d.n(), d.p())
    }

    pub fn kind(self) -> ModelKind {
        match self {
            Regime::LinearPN | Regime::LinearNP => ModelKind::Linear,
            Regime::LogisticPN | Regime::LogisticNP => ModelKind::Logistic,
        }
    }

    /// True when the decomposed matrix is `n x n`.
    pub fn is_pn(self) -> bool {
        matches!(self, Regime::LinearPN | Regime::LogisticPN)
    }
}

/// Projections of the whitened intercept column.
#[derive(Debug, Clone, PartialEq)]
pub struct InterceptBlock<T: Real> {
    pub w1: DVector<T>,
    /// `a^T a`.
    pub s1: T,
    /// `a^T r`.
    pub s1z: T,
    // `n x n` regime only: parts of s1 and s1z orthogonal to the eigenbasis,
    // which lets the bilinear forms be summed without cancellation.
    s1_resid: T,
    s1z_resid: T,
}

/// `tau`-independent summary of one scan's decomposition.
#[derive(Debug, Clone)]
pub struct SpectralCache<T: Real> {
    pub regime: Regime,
    /// Eigenvalues of the decomposed matrix, clamped to be nonnegative.
    pub d: DVector<T>,
    pub w: DVector<T>,
    /// `y^T y` for linear regimes, zero for logistic ones.
    pub q0: T,
    /// `-sum log omega_i` for logistic regimes, zero for linear ones.
    pub logdet0: T,
    pub intercept: Option<InterceptBlock<T>>,
    /// `(n, p)` of the dataset.
    pub dims: (usize, usize),
    q_resid: T,
    counter: Option<Arc<FlopCounter>>,
}

/// A scan's cache together with the eigenvectors, which only the coefficient
/// update needs.
#[derive(Debug, Clone)]
pub struct ScanDecomposition<T: Real> {
    pub cache: SpectralCache<T>,
    pub basis: DMatrix<T>,
    /// `X^T W X` when it was formed for a logistic `p x p` decomposition.
    pub weighted_gram: Option<DMatrix<T>>,
}

/// Builds a cache without operation counting.
pub fn build_cache<T: Real>(
    d: &Dataset<T>,
    lambda: &DVector<T>,
    omega: Option<&DVector<T>>,
    regime: Regime,
) -> Result<SpectralCache<T>> {
    build_decomposition(d, lambda, omega, regime, None).map(|s| s.cache)
}

/// Performs the per-scan decomposition for the given local scales (and
/// Polya-Gamma auxiliaries in logistic regimes).
pub fn build_decomposition<T: Real>(
    d: &Dataset<T>,
    lambda: &DVector<T>,
    omega: Option<&DVector<T>>,
    regime: Regime,
    counter: Option<&Arc<FlopCounter>>,
) -> Result<ScanDecomposition<T>> {
    let (n, p) = (d.n(), d.p());
    if regime.kind() != d.kind() {
        return Err(Error::DomainError(format!(
            "regime {regime:?} does not match a {:?} dataset",
            d.kind()
        )));
    }
    if lambda.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "lambda has length {}, expected {p}",
            lambda.len()
        )));
    }
    if lambda.iter().any(|l| !(*l > T::zero()) || !l.is_finite()) {
        return Err(Error::DomainError("local scales must be positive and finite".into()));
    }
    let omega = match (regime.kind(), omega) {
        (ModelKind::Logistic, Some(w)) => {
            if w.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "omega has length {}, expected {n}",
                    w.len()
                )));
            }
            if w.iter().any(|v| !(*v > T::zero()) || !v.is_finite()) {
                return Err(Error::DomainError(
                    "Polya-Gamma auxiliaries must be positive and finite".into(),
                ));
            }
            Some(w)
        }
        (ModelKind::Logistic, None) => {
            return Err(Error::DomainError("logistic regimes require omega".into()))
        }
        (ModelKind::Linear, Some(_)) => {
            return Err(Error::DomainError("linear regimes take no omega".into()))
        }
        (ModelKind::Linear, None) => None,
    };
    let counter = counter.cloned();
    if regime.is_pn() {
        build_pn(d, lambda, omega, regime, counter)
    } else {
        build_np(d, lambda, omega, regime, counter)
    }
}

fn build_pn<T: Real>(
    d: &Dataset<T>,
    lambda: &DVector<T>,
    omega: Option<&DVector<T>>,
    regime: Regime,
    counter: Option<Arc<FlopCounter>>,
) -> Result<ScanDecomposition<T>> {
    let (n, p) = (d.n(), d.p());
    let sqrt_omega = omega.map(|w| w.map(|v| v.sqrt()));

    // B = W^½ X L, K = B B^T.
    let mut b = d.x().clone();
    for (j, mut col) in b.column_iter_mut().enumerate() {
        col *= lambda[j];
    }
    if let Some(s) = &sqrt_omega {
        for (i, mut row) in b.row_iter_mut().enumerate() {
            row *= s[i];
        }
    }
    let k = &b * b.transpose();
    drop(b);

    let (r, a) = match &sqrt_omega {
        None => (d.target().clone(), DVector::from_element(n, T::one())),
        Some(s) => (d.target().component_div(s), s.clone()),
    };
    let (values, basis) = decompose(k)?;
    let w = basis.tr_mul(&r);

    if let Some(c) = &counter {
        let scale = (n * p + if omega.is_some() { n * p } else { 0 }) as u64;
        c.add_per_scan(flops::gemm(n, p, n) + scale + flops::gemm(n, n, 1));
        c.add_decomposition(flops::symmetric_eigen(n));
    }

    let (q0, logdet0) = match regime.kind() {
        ModelKind::Linear => (r.norm_squared(), T::zero()),
        ModelKind::Logistic => {
            let w = omega.expect("logistic omega");
            (T::zero(), -w.iter().fold(T::zero(), |acc, v| acc + v.ln()))
        }
    };
    let q_resid = r.norm_squared() - w.norm_squared();

    let intercept = if d.has_intercept() {
        let w1 = basis.tr_mul(&a);
        if let Some(c) = &counter {
            c.add_per_scan(flops::gemm(n, n, 1));
        }
        let s1 = a.norm_squared();
        let s1z = a.dot(&r);
        Some(InterceptBlock {
            s1_resid: s1 - w1.norm_squared(),
            s1z_resid: s1z - w1.dot(&w),
            w1,
            s1,
            s1z,
        })
    } else {
        None
    };

    Ok(ScanDecomposition {
        cache: SpectralCache {
            regime,
            d: values,
            w,
            q0,
            logdet0,
            intercept,
            dims: (n, p),
            q_resid,
            counter,
        },
        basis,
        weighted_gram: None,
    })
}

fn build_np<T: Real>(
    d: &Dataset<T>,
    lambda: &DVector<T>,
    omega: Option<&DVector<T>>,
    regime: Regime,
    counter: Option<Arc<FlopCounter>>,
) -> Result<ScanDecomposition<T>> {
    let (n, p) = (d.n(), d.p());
    let gram = d.gram(counter.as_deref());

    let weighted_gram = omega.map(|w| {
        let mut xw = d.x().transpose();
        for (i, mut col) in xw.column_iter_mut().enumerate() {
            col *= w[i];
        }
        &xw * d.x()
    });
    let g = weighted_gram.as_ref().unwrap_or(&gram.xtx);
    let k = DMatrix::from_fn(p, p, |i, j| lambda[i] * g[(i, j)] * lambda[j]);

    let (values, basis) = decompose(k)?;
    let w = basis.tr_mul(&gram.xt_target.component_mul(lambda));

    if let Some(c) = &counter {
        let product = if omega.is_some() {
            flops::gemm(p, n, p) + (n * p) as u64
        } else {
            0
        };
        c.add_per_scan(product + 2 * (p * p) as u64 + flops::gemm(p, p, 1));
        c.add_decomposition(flops::symmetric_eigen(p));
    }

    let (q0, logdet0) = match (regime.kind(), omega) {
        (ModelKind::Logistic, Some(w)) => (T::zero(), -w.iter().fold(T::zero(), |acc, v| acc + v.ln())),
        _ => (d.target().norm_squared(), T::zero()),
    };

    let intercept = if d.has_intercept() {
        let (xt_a, s1) = match omega {
            Some(w) => (d.x().tr_mul(w), w.sum()),
            None => (gram.xt_ones.clone(), T::lit(n as f64)),
        };
        let w1 = basis.tr_mul(&xt_a.component_mul(lambda));
        if let Some(c) = &counter {
            let product = if omega.is_some() { flops::gemm(p, n, 1) } else { 0 };
            c.add_per_scan(product + flops::gemm(p, p, 1));
        }
        Some(InterceptBlock {
            w1,
            s1,
            s1z: d.target().sum(),
            s1_resid: T::zero(),
            s1z_resid: T::zero(),
        })
    } else {
        None
    };

    Ok(ScanDecomposition {
        cache: SpectralCache {
            regime,
            d: values,
            w,
            q0,
            logdet0,
            intercept,
            dims: (n, p),
            q_resid: q0,
            counter,
        },
        basis,
        weighted_gram,
    })
}

/// Symmetric eigendecomposition with clamping of round-off negatives.
fn decompose<T: Real>(k: DMatrix<T>) -> Result<(DVector<T>, DMatrix<T>)> {
    let m = k.nrows();
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("matrix has non-finite entries".into()));
    }
    let (mut values, vectors) = T::symmetric_eigen(&k)
        .ok_or_else(|| Error::EigenFailure(format!("no convergence for a {m} x {m} matrix")))?;
    let scale = values.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let tol = T::eigen_clamp_tolerance() * scale;
    for v in values.iter_mut() {
        if !v.is_finite() {
            return Err(Error::EigenFailure("non-finite eigenvalue".into()));
        }
        if *v < T::zero() {
            if -*v <= tol {
                *v = T::zero();
            } else {
                return Err(Error::EigenFailure(format!(
                    "eigenvalue {} is too negative for a PSD matrix",
                    v.as_f64()
                )));
            }
        }
    }
    Ok((values, vectors))
}

impl<T: Real> SpectralCache<T> {
    pub fn m(&self) -> usize {
        self.d.len()
    }

    pub fn kind(&self) -> ModelKind {
        self.regime.kind()
    }

    fn count(&self, flops_per_entry: u64) {
        if let Some(c) = &self.counter {
            c.add_per_tau(flops_per_entry * self.m() as u64);
        }
    }

    /// Accumulates `sum_i f(weight_i) u_i v_i`, where the weight is the
    /// regime's `g_i` (`n x n`: `tau^2 d / (1 + tau^2 d)`, `p x p`:
    /// `tau^2 / (1 + tau^2 d)`) or, with `complement`, `1 / (1 + tau^2 d)`.
    #[inline]
    fn weighted_sum(&self, tau_sq: T, u: &DVector<T>, v: &DVector<T>, complement: bool) -> T {
        let pn = self.regime.is_pn();
        let mut acc = T::zero();
        for i in 0..self.d.len() {
            let denom = T::one() + tau_sq * self.d[i];
            let weight = if complement {
                T::one() / denom
            } else if pn {
                tau_sq * self.d[i] / denom
            } else {
                tau_sq / denom
            };
            acc += weight * u[i] * v[i];
        }
        acc
    }

    /// `log |M_tau| = logdet0 + sum_i log(1 + tau^2 d_i)`.
    pub fn eval_logdet(&self, tau: T) -> T {
        self.count(4);
        let tau_sq = tau * tau;
        self.d
            .iter()
            .fold(self.logdet0, |acc, &di| acc + (tau_sq * di).ln_1p())
    }

    /// Linear regimes: `y^T M_tau^-1 y`. Logistic regimes: the
    /// `tau`-dependent exponent `E(tau)` of the collapsed density, which enters
    /// the log density with a positive sign.
    pub fn eval_quad(&self, tau: T) -> T {
        self.count(5);
        let tau_sq = tau * tau;
        match (self.kind(), self.regime.is_pn()) {
            (ModelKind::Linear, true) => {
                self.q_resid + self.weighted_sum(tau_sq, &self.w, &self.w, true)
            }
            (ModelKind::Linear, false) => {
                self.q0 - self.weighted_sum(tau_sq, &self.w, &self.w, false)
            }
            (ModelKind::Logistic, _) => {
                T::lit(0.5) * self.weighted_sum(tau_sq, &self.w, &self.w, false)
            }
        }
    }

    /// Log-determinant and quadratic term with an unpenalized intercept of
    /// prior variance `sigma0_sq`. The quadratic term follows the convention
    /// of [`eval_quad`](Self::eval_quad).
    pub fn eval_with_intercept(&self, tau: T, sigma0_sq: T) -> Result<(T, T)> {
        let block = self.intercept.as_ref().ok_or(Error::MissingInterceptBlock)?;
        let logdet = self.eval_logdet(tau);
        let quad = self.eval_quad(tau);
        self.count(9);
        let tau_sq = tau * tau;
        // a^T Mt^-1 a and a^T Mt^-1 r.
        let (a_a, a_r) = if self.regime.is_pn() {
            (
                block.s1_resid + self.weighted_sum(tau_sq, &block.w1, &block.w1, true),
                block.s1z_resid + self.weighted_sum(tau_sq, &block.w1, &self.w, true),
            )
        } else {
            (
                block.s1 - self.weighted_sum(tau_sq, &block.w1, &block.w1, false),
                block.s1z - self.weighted_sum(tau_sq, &block.w1, &self.w, false),
            )
        };
        let logdet = logdet + (sigma0_sq * a_a).ln_1p();
        let correction = a_r * a_r / (T::one() / sigma0_sq + a_a);
        let quad = match self.kind() {
            ModelKind::Linear => quad - correction,
            ModelKind::Logistic => quad + T::lit(0.5) * correction,
        };
        Ok((logdet, quad))
    }

    /// [`eval_with_intercept`](Self::eval_with_intercept) when the cache has
    /// an intercept block, the plain evaluations otherwise.
    pub fn eval_marginal(&self, tau: T, sigma0_sq: T) -> (T, T) {
        match self.intercept {
            Some(_) => self
                .eval_with_intercept(tau, sigma0_sq)
                .expect("intercept block present"),
            None => (self.eval_logdet(tau), self.eval_quad(tau)),
        }
    }

    /// Attaches an operation counter to subsequent evaluations.
    pub fn with_counter(mut self, counter: Arc<FlopCounter>) -> Self {
        self.counter = Some(counter);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones_dataset() -> Dataset<f64> {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        Dataset::linear(x, DVector::from_vec(vec![1.0, 0.0]), false).unwrap()
    }

    #[test]
    fn ones_matrix_eigenvalues() {
        let d = ones_dataset();
        let cache = build_cache(&d, &DVector::from_element(1, 1.0), None, Regime::LinearPN).unwrap();
        let mut ev: Vec<f64> = cache.d.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-14);
        assert!((ev[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn ones_matrix_logdet_and_quad() {
        let d = ones_dataset();
        let cache = build_cache(&d, &DVector::from_element(1, 1.0), None, Regime::LinearPN).unwrap();
        assert!((cache.eval_logdet(1.0) - 3f64.ln()).abs() < 1e-14);
        assert!((cache.eval_quad(1.0) - 2.0 / 3.0).abs() < 1e-14);
        assert!(cache.eval_logdet(1e-12).abs() < 1e-20);
        assert!((cache.eval_quad(1e-12) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn regimes_share_nonzero_spectrum() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -0.5, 0.3, 0.7, 1.1]);
        let d = Dataset::linear(x, DVector::from_vec(vec![0.2, -1.0, 0.4]), false).unwrap();
        let lambda = DVector::from_vec(vec![0.8, 1.7]);
        let pn = build_cache(&d, &lambda, None, Regime::LinearPN).unwrap();
        let np = build_cache(&d, &lambda, None, Regime::LinearNP).unwrap();
        let nonzero = |c: &SpectralCache<f64>| {
            let mut v: Vec<f64> = c.d.iter().copied().filter(|x| *x > 1e-10).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let (a, b) = (nonzero(&pn), nonzero(&np));
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12 * x.max(1.0));
        }
        for tau in [0.01, 1.0, 100.0] {
            let (qa, qb) = (pn.eval_quad(tau), np.eval_quad(tau));
            assert!((qa - qb).abs() <= 1e-10 * qa.abs());
        }
    }

    #[test]
    fn vanishing_local_scales() {
        let d = ones_dataset();
        let cache =
            build_cache(&d, &DVector::from_element(1, 1e-300), None, Regime::LinearPN).unwrap();
        assert!(cache.d.iter().all(|v| *v == 0.0));
        assert_eq!(cache.eval_logdet(10.0), 0.0);
        assert!(cache.eval_quad(10.0).is_finite());
    }

    #[test]
    fn missing_intercept_block() {
        let d = ones_dataset();
        let cache = build_cache(&d, &DVector::from_element(1, 1.0), None, Regime::LinearPN).unwrap();
        assert_eq!(cache.eval_with_intercept(1.0, 1.0), Err(Error::MissingInterceptBlock));
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = ones_dataset();
        let bad = DVector::from_element(1, 0.0);
        assert!(matches!(
            build_cache(&d, &bad, None, Regime::LinearPN),
            Err(Error::DomainError(_))
        ));
        let lam = DVector::from_element(1, 1.0);
        assert!(build_cache(&d, &lam, None, Regime::LogisticPN).is_err());
        let omega = DVector::from_element(2, 1.0);
        assert!(build_cache(&d, &lam, Some(&omega), Regime::LinearPN).is_err());
    }

    #[test]
    fn single_precision_kernel() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0f32, 1.0]);
        let d = Dataset::linear(x, DVector::from_vec(vec![1.0f32, 0.0]), false).unwrap();
        let cache = build_cache(&d, &DVector::from_element(1, 1.0f32), None, Regime::LinearPN).unwrap();
        assert!((cache.eval_logdet(1.0) - 3f32.ln()).abs() < 1e-5);
        assert!((cache.eval_quad(1.0) - 2.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn flop_counts_split_by_category() {
        let x = DMatrix::from_fn(4, 10, |i, j| ((i * 10 + j) as f64).sin());
        let d = Dataset::linear(x, DVector::from_element(4, 1.0), false).unwrap();
        let counter = Arc::new(FlopCounter::new());
        let s = build_decomposition(&d, &DVector::from_element(10, 1.0), None, Regime::LinearPN, Some(&counter))
            .unwrap();
        let after_build = counter.snapshot();
        assert_eq!(after_build.decompositions, 1);
        for k in 0..100 {
            s.cache.eval_logdet(0.01 * (k + 1) as f64);
        }
        let after = counter.snapshot();
        assert_eq!(after.per_scan, after_build.per_scan);
        assert_eq!(after.per_tau, 100 * 4 * 4);
    }
}
