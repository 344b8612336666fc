//! Shared oracles and test statistics for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use sshk::model::{Dataset, ModelKind};

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// One-sample Kolmogorov-Smirnov statistic.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let s = sorted(sample);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0f64, |d, (i, x)| {
        let f = cdf(*x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample critical value at level `alpha`.
pub fn ks_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    (-0.5 * (alpha / 2.0).ln()).sqrt() * ((n + m) / (n * m)).sqrt()
}

pub fn normal_matrix<R: Rng>(n: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

/// Design with an intercept column first when the dataset has one.
pub fn augmented_design(d: &Dataset<f64>) -> DMatrix<f64> {
    let (n, p) = (d.n(), d.p());
    let off = usize::from(d.has_intercept());
    let mut x = DMatrix::from_element(n, p + off, 1.0);
    x.view_mut((0, off), (n, p)).copy_from(d.x());
    x
}

/// Prior standard deviations of the augmented coefficients.
pub fn prior_sd(d: &Dataset<f64>, lambda: &DVector<f64>, tau: f64, sigma0_sq: f64) -> DVector<f64> {
    let off = usize::from(d.has_intercept());
    DVector::from_fn(d.p() + off, |j, _| {
        if j < off {
            sigma0_sq.sqrt()
        } else {
            tau * lambda[j - off]
        }
    })
}

fn log1p_eigen_sum(g: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(g).eigenvalues.iter().map(|v| v.ln_1p()).sum()
}

/// `||R^-T v||^2` for the triangular factor of `C^T C`, from a QR
/// factorization of the stacked matrix `C`.
fn stacked_quad(c: DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let r = c.qr().r();
    let z = r.transpose().solve_lower_triangular(v).expect("nonsingular factor");
    z.norm_squared()
}

/// Dense log-determinant and quadratic term of the collapsed density, with
/// the intercept (if any) treated as one more coefficient of prior variance
/// `sigma0_sq`.
///
/// Linear: `log |I + B B^T|` and `y^T (I + B B^T)^-1 y` with `B = X_+ S`.
/// Logistic: `log |W^-1 + B B^T|` and
/// `1/2 h^T (S^-2 + X_+^T W X_+)^-1 h`, `h = X_+^T kappa`.
pub fn dense_logdet_quad(
    d: &Dataset<f64>,
    lambda: &DVector<f64>,
    omega: Option<&DVector<f64>>,
    tau: f64,
    sigma0_sq: f64,
) -> (f64, f64) {
    let n = d.n();
    let xp = augmented_design(d);
    let s = prior_sd(d, lambda, tau, sigma0_sq);
    let k = s.len();
    let b = &xp * DMatrix::from_diagonal(&s);
    match d.kind() {
        ModelKind::Linear => {
            let logdet = log1p_eigen_sum(&b * b.transpose());
            let mut c = DMatrix::zeros(n + k, n);
            c.view_mut((0, 0), (n, n)).fill_with_identity();
            c.view_mut((n, 0), (k, n)).copy_from(&b.transpose());
            (logdet, stacked_quad(c, d.target()))
        }
        ModelKind::Logistic => {
            let w = omega.expect("logistic model needs omega");
            let sw = w.map(f64::sqrt);
            let wb = DMatrix::from_diagonal(&sw) * &b;
            let logdet = -w.iter().map(|v| v.ln()).sum::<f64>() + log1p_eigen_sum(&wb * wb.transpose());
            let mut c = DMatrix::zeros(k + n, k);
            c.view_mut((0, 0), (k, k)).fill_with_identity();
            c.view_mut((k, 0), (n, k)).copy_from(&wb);
            let h = xp.transpose() * d.target();
            (logdet, 0.5 * stacked_quad(c, &h.component_mul(&s)))
        }
    }
}

/// The matrix decomposed by each regime, formed densely.
pub fn decomposed_matrix(
    d: &Dataset<f64>,
    lambda: &DVector<f64>,
    omega: Option<&DVector<f64>>,
    pn: bool,
) -> DMatrix<f64> {
    let mut a = d.x().clone();
    if let Some(w) = omega {
        for (i, mut row) in a.row_iter_mut().enumerate() {
            row *= w[i].sqrt();
        }
    }
    let al = a * DMatrix::from_diagonal(lambda);
    if pn {
        &al * al.transpose()
    } else {
        al.transpose() * &al
    }
}

/// Inverse-gamma draw via the reciprocal of a gamma variate.
pub fn inverse_gamma<R: Rng>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("valid gamma");
    1.0 / g.sample(rng)
}

/// Polya-Gamma draw from the truncated sum-of-gammas representation
/// `PG(b, c) = 1/(2 pi^2) sum_k g_k / ((k - 1/2)^2 + c^2 / (4 pi^2))`,
/// `g_k ~ Gamma(b, 1)`, with the omitted tail replaced by its mean.
pub fn pg_sum_of_gammas<R: Rng>(b: f64, c: f64, terms: usize, rng: &mut R) -> f64 {
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    let shift = c * c / (4.0 * pi2);
    let g = Gamma::new(b, 1.0).expect("valid gamma");
    let mut acc = 0.0;
    for k in 1..=terms {
        let kh = k as f64 - 0.5;
        acc += g.sample(rng) / (kh * kh + shift);
    }
    let mut tail = 0.0;
    for k in terms + 1..terms * 200 {
        let kh = k as f64 - 0.5;
        tail += b / (kh * kh + shift);
    }
    (acc + tail) / (2.0 * pi2)
}

/// Tabulated CDF on a sorted grid, built from log-density values by the
/// trapezoid rule, with linear interpolation between grid points.
pub struct TabulatedCdf {
    pub x: Vec<f64>,
    pub cum: Vec<f64>,
}

impl TabulatedCdf {
    pub fn from_log_density(x: Vec<f64>, logf: impl Fn(f64) -> f64) -> Self {
        let lf: Vec<f64> = x.iter().map(|v| logf(*v)).collect();
        let top = lf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let f: Vec<f64> = lf.iter().map(|v| (v - top).exp()).collect();
        let mut cum = vec![0.0; x.len()];
        for i in 1..x.len() {
            cum[i] = cum[i - 1] + 0.5 * (f[i] + f[i - 1]) * (x[i] - x[i - 1]);
        }
        let total = cum[x.len() - 1];
        cum.iter_mut().for_each(|c| *c /= total);
        Self { x, cum }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        let n = self.x.len();
        if v <= self.x[0] {
            return 0.0;
        }
        if v >= self.x[n - 1] {
            return 1.0;
        }
        let i = self.x.partition_point(|g| *g <= v);
        let t = (v - self.x[i - 1]) / (self.x[i] - self.x[i - 1]);
        self.cum[i - 1] + t * (self.cum[i] - self.cum[i - 1])
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let i = self.cum.partition_point(|c| *c < u).clamp(1, self.x.len() - 1);
        let span = self.cum[i] - self.cum[i - 1];
        let t = if span > 0.0 { (u - self.cum[i - 1]) / span } else { 0.0 };
        self.x[i - 1] + t.clamp(0.0, 1.0) * (self.x[i] - self.x[i - 1])
    }
}

pub fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var)
}

/// Standard errors of the sample mean and sample variance.
pub fn moment_standard_errors(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let (m, var) = mean_var(v);
    let m4 = v.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    ((var / n).sqrt(), ((m4 - var * var) / n).sqrt())
}
