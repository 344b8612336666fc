use crate::model::{ModelKind, PriorConfig};
use crate::scalar::Real;
use crate::spectral::SpectralCache;

/// Unnormalized log density of `psi = log tau` given the scan's cache,
/// with `beta` (and `sigma^2` for the linear model) integrated out. Includes
/// the `+psi` Jacobian of `tau -> psi`; `-inf` outside the prior support.
pub fn collapsed_logdensity_psi<T: Real>(
    cache: &SpectralCache<T>,
    prior: &PriorConfig<T>,
    psi: T,
) -> T {
    let tau = psi.exp();
    let log_prior = prior.tau_prior.log_density_psi(psi);
    if log_prior == T::neg_infinity() {
        return log_prior;
    }
    let (logdet, quad) = cache.eval_marginal(tau, prior.sigma0_sq);
    let half = T::lit(0.5);
    let likelihood = match cache.kind() {
        ModelKind::Linear => {
            let n = T::lit(cache.dims.0 as f64);
            -half * logdet - (n * half + prior.a) * (prior.b + half * quad).ln()
        }
        ModelKind::Logistic => -half * logdet + quad,
    };
    likelihood + log_prior + psi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dataset, TauPrior};
    use crate::spectral::{build_cache, Regime};
    use nalgebra::{DMatrix, DVector};

    fn linear_instance() -> Dataset<f64> {
        let x = DMatrix::from_row_slice(4, 2, &[0.3, -1.2, 1.1, 0.4, -0.7, 0.9, 0.2, 0.5]);
        let y = DVector::from_vec(vec![1.0, -0.4, 0.8, 0.1]);
        Dataset::linear(x, y, false).unwrap()
    }

    #[test]
    fn outside_uniform_support() {
        let d = linear_instance();
        let c = build_cache(&d, &DVector::from_element(2, 1.0), None, Regime::LinearNP).unwrap();
        let prior = PriorConfig::default();
        assert_eq!(collapsed_logdensity_psi(&c, &prior, 0.1), f64::NEG_INFINITY);
        assert!(collapsed_logdensity_psi(&c, &prior, -0.1).is_finite());
    }

    #[test]
    fn flat_likelihood_when_spectrum_vanishes() {
        let d = linear_instance();
        let c = build_cache(&d, &DVector::from_element(2, 1e-300), None, Regime::LinearNP).unwrap();
        let prior = PriorConfig {
            tau_prior: TauPrior::HalfCauchy { scale: 1.0 },
            ..PriorConfig::default()
        };
        let f = |psi: f64| collapsed_logdensity_psi(&c, &prior, psi);
        for (a, b) in [(-2.0, 0.5), (-5.0, -1.0)] {
            let expected = (b - a) + prior.tau_prior.log_density(f64::exp(b))
                - prior.tau_prior.log_density(f64::exp(a));
            assert!((f(b) - f(a) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_dense_evaluation() {
        let d = linear_instance();
        let lambda = DVector::from_vec(vec![0.7, 1.9]);
        let c = build_cache(&d, &lambda, None, Regime::LinearPN).unwrap();
        let prior = PriorConfig::<f64>::default();
        let psi = -1.0f64;
        let tau = psi.exp();
        let x = d.x();
        let l2 = DMatrix::from_diagonal(&lambda.map(|v| v * v));
        let m = DMatrix::identity(4, 4) + x * l2 * x.transpose() * (tau * tau);
        let y = d.y().unwrap();
        let logdet = m.clone().cholesky().unwrap().determinant().ln();
        let quad = y.dot(&m.lu().solve(y).unwrap());
        let expected = -0.5 * logdet - (2.0 + prior.a) * (prior.b + 0.5 * quad).ln() + psi;
        assert!((collapsed_logdensity_psi(&c, &prior, psi) - expected).abs() < 1e-10);
    }
}
