//! Data, prior and sampler-state types, plus the synthetic liability-threshold
//! phenotype generator used for desk-scale experiments.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::flops::{self, FlopCounter};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Linear,
    Logistic,
}

/// Observed outcome of a regression dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome<T: Real> {
    /// Continuous response for the linear model.
    Continuous(DVector<T>),
    /// Binomial successes out of a number of trials, per row.
    Binomial { successes: Vec<u32>, trials: Vec<u32> },
}

/// Per-dataset products reused every scan.
#[derive(Debug, Clone)]
pub struct Gram<T: Real> {
    /// `X^T X`.
    pub xtx: DMatrix<T>,
    /// `X^T y` (linear) or `X^T kappa` (logistic).
    pub xt_target: DVector<T>,
    /// Column sums `X^T 1`.
    pub xt_ones: DVector<T>,
}

/// Design matrix and outcome. Immutable once constructed.
#[derive(Debug)]
pub struct Dataset<T: Real> {
    x: DMatrix<T>,
    outcome: Outcome<T>,
    has_intercept: bool,
    kappa: Option<DVector<T>>,
    gram: OnceLock<Gram<T>>,
}

impl<T: Real> Clone for Dataset<T> {
    fn clone(&self) -> Self {
        Self {
            x: self.x.clone(),
            outcome: self.outcome.clone(),
            has_intercept: self.has_intercept,
            kappa: self.kappa.clone(),
            gram: OnceLock::new(),
        }
    }
}

impl<T: Real> Dataset<T> {
    pub fn new(x: DMatrix<T>, outcome: Outcome<T>, has_intercept: bool) -> Result<Self> {
        let kappa = match &outcome {
            Outcome::Continuous(_) => None,
            Outcome::Binomial { successes, trials } => Some(DVector::from_iterator(
                successes.len(),
                successes
                    .iter()
                    .zip(trials)
                    .map(|(&y, &t)| T::lit(y as f64) - T::lit(t as f64) * T::lit(0.5)),
            )),
        };
        let d = Self {
            x,
            outcome,
            has_intercept,
            kappa,
            gram: OnceLock::new(),
        };
        validate_dataset(&d)?;
        Ok(d)
    }

    pub fn linear(x: DMatrix<T>, y: DVector<T>, has_intercept: bool) -> Result<Self> {
        Self::new(x, Outcome::Continuous(y), has_intercept)
    }

    pub fn binomial(
        x: DMatrix<T>,
        successes: Vec<u32>,
        trials: Vec<u32>,
        has_intercept: bool,
    ) -> Result<Self> {
        Self::new(x, Outcome::Binomial { successes, trials }, has_intercept)
    }

    /// Bernoulli outcomes (one trial per row).
    pub fn logistic(x: DMatrix<T>, y: Vec<u32>, has_intercept: bool) -> Result<Self> {
        let trials = vec![1; y.len()];
        Self::binomial(x, y, trials, has_intercept)
    }

    pub fn x(&self) -> &DMatrix<T> {
        &self.x
    }

    pub fn outcome(&self) -> &Outcome<T> {
        &self.outcome
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    pub fn kind(&self) -> ModelKind {
        match self.outcome {
            Outcome::Continuous(_) => ModelKind::Linear,
            Outcome::Binomial { .. } => ModelKind::Logistic,
        }
    }

    /// Continuous response, if this is a linear dataset.
    pub fn y(&self) -> Option<&DVector<T>> {
        match &self.outcome {
            Outcome::Continuous(y) => Some(y),
            Outcome::Binomial { .. } => None,
        }
    }

    pub fn trials(&self) -> Option<&[u32]> {
        match &self.outcome {
            Outcome::Continuous(_) => None,
            Outcome::Binomial { trials, .. } => Some(trials),
        }
    }

    /// `kappa_i = y_i - n_i / 2`, precomputed at construction for logistic data.
    pub fn kappa(&self) -> Option<&DVector<T>> {
        self.kappa.as_ref()
    }

    /// The vector whose marginal quadratic form enters the collapsed density:
    /// `y` for linear data and `kappa` for logistic data.
    pub fn target(&self) -> &DVector<T> {
        match &self.outcome {
            Outcome::Continuous(y) => y,
            Outcome::Binomial { .. } => self.kappa.as_ref().expect("kappa set for binomial data"),
        }
    }

    /// Per-dataset products, computed on first use.
    pub fn gram(&self, counter: Option<&FlopCounter>) -> &Gram<T> {
        self.gram.get_or_init(|| {
            let (n, p) = (self.n(), self.p());
            if let Some(c) = counter {
                c.add_per_dataset(flops::gemm(p, n, p) + 2 * flops::gemm(p, n, 1));
            }
            let xt = self.x.transpose();
            Gram {
                xtx: &xt * &self.x,
                xt_target: &xt * self.target(),
                xt_ones: DVector::from_iterator(p, self.x.column_iter().map(|c| c.sum())),
            }
        })
    }

    /// Linear predictor `X beta` (plus intercept when present); `beta` carries
    /// the intercept in its first slot when `has_intercept`.
    pub fn linear_predictor(&self, beta: &DVector<T>) -> DVector<T> {
        if self.has_intercept {
            let slopes = beta.rows(1, self.p());
            let mut eta = &self.x * slopes;
            eta.add_scalar_mut(beta[0]);
            eta
        } else {
            &self.x * beta
        }
    }
}

/// Checks every dataset invariant.
pub fn validate_dataset<T: Real>(d: &Dataset<T>) -> Result<()> {
    let (n, p) = (d.x.nrows(), d.x.ncols());
    if n == 0 || p == 0 {
        return Err(Error::DimensionMismatch(format!(
            "design matrix must be non-empty, got {n} x {p}"
        )));
    }
    if d.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::DomainError("design matrix has a non-finite entry".into()));
    }
    match &d.outcome {
        Outcome::Continuous(y) => {
            if y.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "outcome has {} rows, design matrix has {n}",
                    y.len()
                )));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::DomainError("outcome has a non-finite entry".into()));
            }
        }
        Outcome::Binomial { successes, trials } => {
            if successes.len() != n || trials.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "outcome has {} successes and {} trials, design matrix has {n} rows",
                    successes.len(),
                    trials.len()
                )));
            }
            for (i, (&y, &t)) in successes.iter().zip(trials).enumerate() {
                if t == 0 {
                    return Err(Error::DomainError(format!("row {i}: zero trials")));
                }
                if y > t {
                    return Err(Error::DomainError(format!(
                        "row {i}: {y} successes exceed {t} trials"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Prior on the global scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauPrior<T: Real> {
    /// Uniform on `(0, upper]`.
    UniformTruncated { upper: T },
    /// Half-Cauchy with the given scale.
    HalfCauchy { scale: T },
}

impl<T: Real> TauPrior<T> {
    /// Log prior density up to an additive constant; `-inf` outside the support.
    pub fn log_density(&self, tau: T) -> T {
        if !(tau > T::zero()) {
            return T::neg_infinity();
        }
        match *self {
            TauPrior::UniformTruncated { upper } => {
                if tau <= upper {
                    T::zero()
                } else {
                    T::neg_infinity()
                }
            }
            TauPrior::HalfCauchy { scale } => {
                let r = tau / scale;
                -(r * r).ln_1p()
            }
        }
    }

    /// [`log_density`](Self::log_density) at `tau = exp(psi)`, with the
    /// support checked on the log scale so that `psi = log upper` is inside.
    pub fn log_density_psi(&self, psi: T) -> T {
        match *self {
            TauPrior::UniformTruncated { upper } => {
                if psi <= upper.ln() {
                    T::zero()
                } else {
                    T::neg_infinity()
                }
            }
            TauPrior::HalfCauchy { .. } => self.log_density(psi.exp()),
        }
    }

    /// Largest admissible `log tau`, if the support is bounded.
    pub fn log_upper(&self) -> Option<T> {
        match *self {
            TauPrior::UniformTruncated { upper } => Some(upper.ln()),
            TauPrior::HalfCauchy { .. } => None,
        }
    }
}

/// Hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConfig<T: Real> {
    /// Inverse-gamma shape for the noise variance (linear model only).
    pub a: T,
    /// Inverse-gamma rate for the noise variance (linear model only).
    pub b: T,
    pub tau_prior: TauPrior<T>,
    /// Prior variance of the unpenalized intercept.
    pub sigma0_sq: T,
}

impl<T: Real> Default for PriorConfig<T> {
    fn default() -> Self {
        Self {
            a: T::one(),
            b: T::one(),
            tau_prior: TauPrior::UniformTruncated { upper: T::one() },
            sigma0_sq: T::lit(100.0),
        }
    }
}

impl<T: Real> PriorConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: T, name: &str| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::DomainError(format!("{name} must be positive and finite")))
            }
        };
        positive(self.a, "a")?;
        positive(self.b, "b")?;
        positive(self.sigma0_sq, "sigma0_sq")?;
        match self.tau_prior {
            TauPrior::UniformTruncated { upper } => positive(upper, "tau prior upper bound"),
            TauPrior::HalfCauchy { scale } => positive(scale, "tau prior scale"),
        }
    }
}

/// Current values of all sampled parameters of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub tau: f64,
    /// `log tau`, kept alongside `tau`.
    pub psi: f64,
    pub lambda: DVector<f64>,
    /// Coefficients; intercept first when the dataset has one.
    pub beta: DVector<f64>,
    /// Noise variance (linear model).
    pub sigma_sq: f64,
    /// Polya-Gamma auxiliaries (logistic model); empty for linear.
    pub omega: DVector<f64>,
}

impl ModelState {
    pub fn set_psi(&mut self, psi: f64) {
        self.psi = psi;
        self.tau = psi.exp();
    }

    pub fn set_tau(&mut self, tau: f64) {
        self.tau = tau;
        self.psi = tau.ln();
    }

    /// Coefficients under shrinkage (the intercept excluded).
    pub fn shrunk_beta(&self, has_intercept: bool) -> nalgebra::DVectorView<'_, f64> {
        let offset = usize::from(has_intercept);
        self.beta.rows(offset, self.lambda.len())
    }
}

/// Number of nonzero coefficients drawn for a given sparsity fraction.
pub fn support_size(sparsity: f64, p: usize) -> usize {
    // Absorbs rounding in products like 0.001 * 1000.
    let k = (sparsity * p as f64 * (1.0 - 1e-12)).ceil() as usize;
    k.clamp(1, p)
}

/// Centered genotype dosages: column `j` holds `Binomial(2, f_j) - 2 f_j` with
/// allele frequency `f_j ~ Uniform(0.05, 0.5)`.
pub fn simulate_genotypes<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, p);
    for j in 0..p {
        let f: f64 = rng.random_range(0.05..0.5);
        let dist = Binomial::new(2, f).expect("valid allele frequency");
        for i in 0..n {
            x[(i, j)] = dist.sample(rng) as f64 - 2.0 * f;
        }
    }
    x
}

/// Liability-threshold phenotype: a random `ceil(sparsity p)`-subset of
/// coefficients is drawn standard normal, the latent liability is
/// `N(X beta, noise_sd^2)`, and the binary outcome indicates liability above
/// `threshold`.
pub fn simulate_liability_phenotype<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    sparsity: f64,
    noise_sd: f64,
    threshold: f64,
    rng: &mut R,
) -> Result<(DVector<f64>, Vec<u32>)> {
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::DomainError(format!(
            "sparsity must lie in (0, 1], got {sparsity}"
        )));
    }
    if !(noise_sd > 0.0 && noise_sd.is_finite()) {
        return Err(Error::DomainError(format!(
            "noise_sd must be positive, got {noise_sd}"
        )));
    }
    if threshold.is_nan() {
        return Err(Error::DomainError("threshold is NaN".into()));
    }
    let (n, p) = x.shape();
    let k = support_size(sparsity, p);
    let mut support = rand::seq::index::sample(rng, p, k).into_vec();
    support.sort_unstable();
    let mut beta = DVector::zeros(p);
    for j in support {
        beta[j] = rng.sample::<f64, _>(StandardNormal);
    }
    let signal = x * &beta;
    let y = (0..n)
        .map(|i| {
            let liability = signal[i] + noise_sd * rng.sample::<f64, _>(StandardNormal);
            u32::from(liability > threshold)
        })
        .collect();
    Ok((beta, y))
}
