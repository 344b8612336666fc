use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::model::{PriorConfig, TauPrior};

/// Upper regularized incomplete gamma `Q(shape, x)`, equal to 1 for `x <= 0`.
fn upper_q(shape: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x == f64::INFINITY {
        0.0
    } else {
        gamma_ur(shape, x)
    }
}

/// Below this tail mass the incomplete gamma function loses too much relative
/// precision for root finding, and a rejection sampler takes over.
const INVERSION_FLOOR: f64 = 1e-8;

/// Draws `X ~ Gamma(shape, 1)` conditioned on `X >= x0`.
pub fn truncated_gamma_tail<R: Rng + ?Sized>(shape: f64, x0: f64, rng: &mut R) -> f64 {
    let q0 = upper_q(shape, x0);
    if q0 >= INVERSION_FLOOR {
        invert_tail(shape, x0, q0, rng.random::<f64>())
    } else {
        reject_tail(shape, x0, rng)
    }
}

/// Solves `Q(shape, x) = u q0` on `[x0, inf)` by Newton steps on `log Q`,
/// safeguarded by bisection.
fn invert_tail(shape: f64, x0: f64, q0: f64, u: f64) -> f64 {
    let u = u.max(f64::MIN_POSITIVE);
    let log_target = u.ln() + q0.ln();
    let x0 = x0.max(0.0);
    let mut lo = x0;
    let mut hi = x0 + shape.max(1.0);
    while upper_q(shape, hi).ln() > log_target {
        lo = hi;
        hi = 2.0 * hi + 1.0;
    }
    let log_norm = ln_gamma(shape);
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let q = upper_q(shape, x);
        let f = q.ln() - log_target;
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        // d/dx log Q = -pdf / Q.
        let log_pdf = (shape - 1.0) * x.ln() - x - log_norm;
        let slope = -(log_pdf - q.ln()).exp();
        let newton = x - f / slope;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-14 * x.abs().max(1.0) || hi - lo <= 1e-14 * hi {
            return next.max(x0);
        }
        x = next;
    }
    x.max(x0)
}

/// Far in the tail: an exponential proposal anchored at `x0` whose rate
/// matches the log density's slope there (`shape >= 1`), or a unit-rate one
/// (`shape < 1`, decreasing density).
fn reject_tail<R: Rng + ?Sized>(shape: f64, x0: f64, rng: &mut R) -> f64 {
    let rate = if shape >= 1.0 {
        1.0 - (shape - 1.0) / x0
    } else {
        1.0
    };
    loop {
        let e: f64 = Exp1.sample(rng);
        let x = x0 + e / rate;
        let log_accept = (shape - 1.0) * (x / x0).ln() - (1.0 - rate) * (x - x0);
        if rng.random::<f64>().ln() <= log_accept {
            return x;
        }
    }
}

/// Draws the global scale from its conditional given coefficients and local
/// scales under a uniform prior on `(0, upper]`: `phi = tau^-2` is gamma with
/// shape `(p - 1) / 2` and rate `sum_j beta_j^2 / (2 lambda_j^2)`, truncated
/// to `phi >= upper^-2`.
pub fn draw_tau_uncollapsed<R: Rng + ?Sized>(
    beta: &DVector<f64>,
    lambda: &DVector<f64>,
    prior: &PriorConfig<f64>,
    rng: &mut R,
) -> Result<f64> {
    let upper = match prior.tau_prior {
        TauPrior::UniformTruncated { upper } => upper,
        TauPrior::HalfCauchy { .. } => {
            return Err(Error::Unsupported(
                "the uncollapsed global scale update needs a truncated uniform prior".into(),
            ))
        }
    };
    let p = lambda.len();
    if beta.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {p} local scales",
            beta.len()
        )));
    }
    if p < 2 {
        return Err(Error::DegenerateConditional(
            "at least two coefficients are needed".into(),
        ));
    }
    let rate: f64 = 0.5
        * beta
            .iter()
            .zip(lambda.iter())
            .map(|(b, l)| (b / l) * (b / l))
            .sum::<f64>();
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::DegenerateConditional(format!(
            "gamma rate must be positive and finite, got {rate}"
        )));
    }
    let shape = 0.5 * (p as f64 - 1.0);
    let phi0 = 1.0 / (upper * upper);
    let x = truncated_gamma_tail(shape, rate * phi0, rng);
    let tau = (rate / x).sqrt();
    Ok(tau.min(upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn untruncated_shape_one_is_exponential() {
        let prior = PriorConfig {
            tau_prior: TauPrior::UniformTruncated { upper: 1e12 },
            ..PriorConfig::default()
        };
        // p = 3 and S = 1.
        let beta = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let lambda = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let phis: Vec<f64> = (0..n)
            .map(|_| draw_tau_uncollapsed(&beta, &lambda, &prior, &mut rng).unwrap().powi(-2))
            .collect();
        let mean = phis.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn rate_of_single_matched_coefficient() {
        // lambda_1 = |beta_1| gives S = 1/2; with p = 3 the draw is phi ~
        // Gamma(1, 1/2) truncated to phi >= 1, so phi - 1 ~ Exp(1/2).
        let beta = DVector::from_vec(vec![-0.7, 0.0, 0.0]);
        let lambda = DVector::from_vec(vec![0.7, 1.0, 1.0]);
        let prior = PriorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 50_000;
        let mean = (0..n)
            .map(|_| draw_tau_uncollapsed(&beta, &lambda, &prior, &mut rng).unwrap().powi(-2))
            .sum::<f64>()
            / n as f64;
        assert!((mean - 3.0).abs() < 4.0 * 2.0 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn degenerate_inputs() {
        let prior = PriorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let one = DVector::from_vec(vec![1.0]);
        assert!(matches!(
            draw_tau_uncollapsed(&one, &one, &prior, &mut rng),
            Err(Error::DegenerateConditional(_))
        ));
        let zeros = DVector::zeros(3);
        assert!(matches!(
            draw_tau_uncollapsed(&zeros, &DVector::from_element(3, 1.0), &prior, &mut rng),
            Err(Error::DegenerateConditional(_))
        ));
        let cauchy = PriorConfig {
            tau_prior: TauPrior::HalfCauchy { scale: 1.0 },
            ..PriorConfig::default()
        };
        assert!(matches!(
            draw_tau_uncollapsed(&DVector::from_element(3, 1.0), &DVector::from_element(3, 1.0), &cauchy, &mut rng),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn tail_samplers_agree_with_tail_mean() {
        // For shape 1 the truncated draw is x0 + Exp(1) whichever path is used.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for x0 in [0.5, 30.0] {
            let n = 40_000;
            let mean = (0..n).map(|_| truncated_gamma_tail(1.0, x0, &mut rng)).sum::<f64>() / n as f64;
            assert!((mean - x0 - 1.0).abs() < 4.0 / (n as f64).sqrt(), "{x0} {mean}");
        }
    }

    #[test]
    fn tail_draws_respect_truncation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(shape, x0) in &[(0.5, 0.01), (0.5, 50.0), (20.0, 5.0), (20.0, 80.0), (499.5, 400.0)] {
            for _ in 0..500 {
                let x = truncated_gamma_tail(shape, x0, &mut rng);
                assert!(x >= x0 && x.is_finite());
            }
        }
    }
}
