//! Full-conditional updates of the coefficients, noise variance, local scales
//! and Polya-Gamma auxiliaries.
//!
//! The coefficients use the scaled parametrization of the linear model,
//! `y ~ N(sigma X beta, sigma^2 I)`, so the conventional coefficients are
//! `sigma * beta`. Writing `A` for the whitened design (`X`, or `W^½ X` with
//! `W = diag(omega)`), `alpha` for the whitened response (`y / sigma`, or
//! `W^-½ kappa`) and `D` for the prior covariance, the conditional of `beta`
//! is Gaussian with precision `A^T A + D^-1` and mean `(A^T A + D^-1)^-1 A^T
//! alpha`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{Dataset, ModelKind, ModelState, PriorConfig};
use crate::polya_gamma::{pg_draw, PgParams};
use crate::spectral::{ScanDecomposition, SpectralCache};

/// Floor on the exponential rate of the local-scale conditional, which is
/// improper when a coefficient is exactly zero.
const MIN_LAMBDA_RATE: f64 = 1e-12;

fn standard_normals<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Prior standard deviations of the coefficients: `sigma0` for the intercept,
/// `tau lambda_j` for the rest.
fn prior_scales(d: &Dataset<f64>, state: &ModelState, prior: &PriorConfig<f64>) -> DVector<f64> {
    let offset = usize::from(d.has_intercept());
    DVector::from_fn(d.p() + offset, |j, _| {
        if j < offset {
            prior.sigma0_sq.sqrt()
        } else {
            state.tau * state.lambda[j - offset]
        }
    })
}

/// Draws the coefficients (intercept first when present) from their
/// conditional given the scales, the noise variance or the auxiliaries, and
/// the data. Reuses the scan's eigenbasis when it is `n x n`; otherwise
/// factorizes the scaled `(p + 1) x (p + 1)` precision.
pub fn draw_beta<R: Rng + ?Sized>(
    d: &Dataset<f64>,
    state: &ModelState,
    prior: &PriorConfig<f64>,
    decomp: &ScanDecomposition<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    check_state(d, state)?;
    if decomp.cache.dims != (d.n(), d.p()) {
        return Err(Error::DimensionMismatch(
            "decomposition was built for a different dataset".into(),
        ));
    }
    if decomp.cache.regime.is_pn() {
        draw_beta_pn(d, state, prior, decomp, rng)
    } else {
        draw_beta_np(d, state, prior, decomp, rng)
    }
}

fn check_state(d: &Dataset<f64>, state: &ModelState) -> Result<()> {
    if state.lambda.len() != d.p() {
        return Err(Error::DimensionMismatch(format!(
            "{} local scales for {} covariates",
            state.lambda.len(),
            d.p()
        )));
    }
    if d.kind() == ModelKind::Logistic && state.omega.len() != d.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} auxiliaries for {} observations",
            state.omega.len(),
            d.n()
        )));
    }
    if !(state.tau > 0.0) || (d.kind() == ModelKind::Linear && !(state.sigma_sq > 0.0)) {
        return Err(Error::DomainError("scales must be positive".into()));
    }
    Ok(())
}

/// Whitening weights `W^½` (ones for linear data) and the whitened response.
fn whitened(d: &Dataset<f64>, state: &ModelState) -> (DVector<f64>, DVector<f64>) {
    match d.kind() {
        ModelKind::Linear => (
            DVector::from_element(d.n(), 1.0),
            d.target() / state.sigma_sq.sqrt(),
        ),
        ModelKind::Logistic => {
            let s = state.omega.map(f64::sqrt);
            let alpha = d.target().component_div(&s);
            (s, alpha)
        }
    }
}

/// Auxiliary-variable draw for `p > n`: with `u ~ N(0, D)` and `e ~ N(0, I)`,
/// `beta = u + D A_+^T (A_+ D A_+^T + I)^-1 (alpha - A_+ u - e)`. The `n x n`
/// system is `M_tau + sigma0^2 a a^T` and is solved with the scan's
/// eigenbasis plus a Sherman-Morrison correction.
fn draw_beta_pn<R: Rng + ?Sized>(
    d: &Dataset<f64>,
    state: &ModelState,
    prior: &PriorConfig<f64>,
    decomp: &ScanDecomposition<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = d.n();
    let offset = usize::from(d.has_intercept());
    let scales = prior_scales(d, state, prior);
    let (sqrt_w, alpha) = whitened(d, state);

    let u = standard_normals(scales.len(), rng).component_mul(&scales);
    let e = standard_normals(n, rng);
    let mut fitted = d.linear_predictor(&u);
    fitted.component_mul_assign(&sqrt_w);
    let rhs = alpha - fitted - e;

    let tau_sq = state.tau * state.tau;
    let basis = &decomp.basis;
    let shrink = decomp.cache.d.map(|v| 1.0 / (1.0 + tau_sq * v));
    let solve_m = |v: &DVector<f64>| basis * basis.tr_mul(v).component_mul(&shrink);

    let mut sol = solve_m(&rhs);
    if offset == 1 {
        let m_a = solve_m(&sqrt_w);
        let denom = 1.0 + prior.sigma0_sq * sqrt_w.dot(&m_a);
        let coef = prior.sigma0_sq * sqrt_w.dot(&sol) / denom;
        sol.axpy(-coef, &m_a, 1.0);
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::FactorizationFailure(
            "non-finite solve in the coefficient update".into(),
        ));
    }

    // beta = u + D A_+^T sol.
    let weighted = sol.component_mul(&sqrt_w);
    let xt = d.x().tr_mul(&weighted);
    let mut beta = u;
    if offset == 1 {
        beta[0] += prior.sigma0_sq * weighted.sum();
    }
    for j in 0..d.p() {
        beta[j + offset] += scales[j + offset] * scales[j + offset] * xt[j];
    }
    Ok(beta)
}

/// Dense draw for `n >= p`: with `S = diag(prior scales)` the scaled
/// precision `Q = I + S A_+^T A_+ S` is factorized and `beta = S gamma`,
/// `gamma ~ N(Q^-1 S A_+^T alpha, Q^-1)`.
fn draw_beta_np<R: Rng + ?Sized>(
    d: &Dataset<f64>,
    state: &ModelState,
    prior: &PriorConfig<f64>,
    decomp: &ScanDecomposition<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let (n, p) = (d.n(), d.p());
    let offset = usize::from(d.has_intercept());
    let k = p + offset;
    let scales = prior_scales(d, state, prior);
    let gram = d.gram(None);

    // A_+^T A_+ blocks and A_+^T alpha.
    let (ata, ata1, a1a1, at_alpha, a1_alpha) = match d.kind() {
        ModelKind::Linear => {
            let s = state.sigma_sq.sqrt();
            (
                &gram.xtx,
                gram.xt_ones.clone(),
                n as f64,
                &gram.xt_target / s,
                d.target().sum() / s,
            )
        }
        ModelKind::Logistic => {
            let wg = decomp.weighted_gram.as_ref().ok_or_else(|| {
                Error::FactorizationFailure("logistic decomposition lacks X^T W X".into())
            })?;
            let xt_w = if offset == 1 {
                d.x().tr_mul(&state.omega)
            } else {
                DVector::zeros(p)
            };
            (
                wg,
                xt_w,
                state.omega.sum(),
                gram.xt_target.clone(),
                d.target().sum(),
            )
        }
    };

    let mut q = DMatrix::<f64>::identity(k, k);
    for i in 0..p {
        for j in 0..p {
            q[(i + offset, j + offset)] += scales[i + offset] * ata[(i, j)] * scales[j + offset];
        }
    }
    let mut b = DVector::zeros(k);
    for j in 0..p {
        b[j + offset] = scales[j + offset] * at_alpha[j];
    }
    if offset == 1 {
        let s0 = scales[0];
        q[(0, 0)] += s0 * s0 * a1a1;
        for j in 0..p {
            let v = s0 * ata1[j] * scales[j + 1];
            q[(0, j + 1)] += v;
            q[(j + 1, 0)] += v;
        }
        b[0] = s0 * a1_alpha;
    }

    let chol = Cholesky::new(q).ok_or_else(|| {
        Error::FactorizationFailure("scaled coefficient precision is not positive definite".into())
    })?;
    let mean = chol.solve(&b);
    // L^T x = z gives x ~ N(0, Q^-1).
    let z = standard_normals(k, rng);
    let noise = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::FactorizationFailure("singular Cholesky factor".into()))?;
    let gamma = mean + noise;
    let beta = gamma.component_mul(&scales);
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::FactorizationFailure(
            "non-finite coefficient draw".into(),
        ));
    }
    Ok(beta)
}

/// Draws the noise variance from its conditional with the coefficients
/// integrated out: `InvGamma(a + n/2, b + q/2)` with `q` the marginal
/// quadratic form at `tau`.
pub fn draw_sigma2<R: Rng + ?Sized>(
    cache: &SpectralCache<f64>,
    tau: f64,
    prior: &PriorConfig<f64>,
    rng: &mut R,
) -> Result<f64> {
    if cache.kind() != ModelKind::Linear {
        return Err(Error::DomainError(
            "the noise variance exists only in the linear model".into(),
        ));
    }
    let (_, quad) = cache.eval_marginal(tau, prior.sigma0_sq);
    let shape = prior.a + 0.5 * cache.dims.0 as f64;
    let rate = prior.b + 0.5 * quad.max(0.0);
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::DomainError(format!("invalid inverse-gamma parameters: {e}")))?;
    loop {
        let x: f64 = g.sample(rng);
        if x > 0.0 {
            return Ok(1.0 / x);
        }
    }
}

/// One slice-sampling step per local scale. With `eta = lambda^-2` the
/// conditional is proportional to `exp(-m eta) / (1 + eta)`, `m = beta^2 /
/// (2 tau^2)`: draw `s ~ U(0, 1 / (1 + eta))`, then `eta` from the
/// exponential with rate `m` truncated to `eta < 1/s - 1`.
pub fn draw_lambda<R: Rng + ?Sized>(
    beta: &DVector<f64>,
    lambda: &DVector<f64>,
    tau: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if beta.len() != lambda.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} local scales",
            beta.len(),
            lambda.len()
        )));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::DomainError("tau must be positive and finite".into()));
    }
    let mut out = DVector::zeros(lambda.len());
    for j in 0..lambda.len() {
        let eta = 1.0 / (lambda[j] * lambda[j]);
        let rate = (beta[j] * beta[j] / (2.0 * tau * tau)).max(MIN_LAMBDA_RATE);
        let eta_new = slice_step(eta, rate, rng);
        out[j] = 1.0 / eta_new.sqrt();
    }
    Ok(out)
}

fn slice_step<R: Rng + ?Sized>(eta: f64, rate: f64, rng: &mut R) -> f64 {
    let level = rng.random::<f64>() / (1.0 + eta);
    let bound = if level > 0.0 {
        1.0 / level - 1.0
    } else {
        f64::INFINITY
    };
    // Inverse CDF of Exp(rate) on (0, bound).
    let mass = -(-rate * bound).exp_m1();
    let v = rng.random::<f64>();
    let draw = -(-v * mass).ln_1p() / rate;
    if draw > 0.0 && draw.is_finite() {
        draw
    } else {
        f64::MIN_POSITIVE
    }
}

/// Draws `omega_i ~ PG(n_i, x_i^T beta)` in row order.
pub fn draw_omega<R: Rng + ?Sized>(
    d: &Dataset<f64>,
    beta: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let trials = d.trials().ok_or_else(|| {
        Error::DomainError("auxiliaries exist only in the logistic model".into())
    })?;
    if beta.len() != d.p() + usize::from(d.has_intercept()) {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} covariates",
            beta.len(),
            d.p()
        )));
    }
    let eta = d.linear_predictor(beta);
    Ok(DVector::from_fn(d.n(), |i, _| {
        pg_draw(PgParams::new(trials[i], eta[i]), rng)
    }))
}
