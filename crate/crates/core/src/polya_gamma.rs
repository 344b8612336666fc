//! Polya-Gamma variates `PG(b, c)` for integer `b`, by summing `b` exact
//! draws of `PG(1, c)` from Devroye's alternating-series rejection sampler.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use statrs::function::erf::erfc;

/// Split point between the inverse-Gaussian and exponential proposal pieces.
const TRUNC: f64 = 0.64;
/// Tilts beyond this magnitude are clamped; `cosh(c / 2)` stays finite.
pub const MAX_TILT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgParams {
    /// Number of trials; at least 1.
    pub b: u32,
    /// Tilt; finite.
    pub c: f64,
}

impl PgParams {
    pub fn new(b: u32, c: f64) -> Self {
        debug_assert!(b >= 1 && c.is_finite());
        Self { b, c }
    }

    fn half_tilt(&self) -> f64 {
        0.5 * self.c.abs().min(MAX_TILT)
    }
}

/// Mean `b tanh(c/2) / (2c)`, with limit `b/4` at `c = 0`.
pub fn pg_mean(p: PgParams) -> f64 {
    let c = p.c.abs().min(MAX_TILT);
    let b = f64::from(p.b);
    if c == 0.0 {
        0.25 * b
    } else {
        b * (0.5 * c).tanh() / (2.0 * c)
    }
}

/// Variance `b (sinh c - c) / (4 c^3 cosh^2(c/2))`, with limit `b/24` at `c = 0`.
pub fn pg_variance(p: PgParams) -> f64 {
    let c = p.c.abs().min(MAX_TILT);
    let b = f64::from(p.b);
    let half = 0.5 * c;
    if c < 0.1 {
        // Series of sinh c - c avoids cancellation.
        let c2 = c * c;
        let num = 1.0 / 6.0 + c2 / 120.0 + c2 * c2 / 5040.0 + c2 * c2 * c2 / 362_880.0;
        b * num / (4.0 * half.cosh().powi(2))
    } else {
        let sech = 1.0 / half.cosh();
        b * (2.0 * half.tanh() - c * sech * sech) / (4.0 * c * c * c)
    }
}

/// One draw from `PG(b, c)`; strictly positive.
pub fn pg_draw<R: Rng + ?Sized>(p: PgParams, rng: &mut R) -> f64 {
    let z = p.half_tilt();
    let prob_exp = exponential_piece_probability(z);
    let mut total = 0.0;
    for _ in 0..p.b {
        total += draw_pg1(z, prob_exp, rng);
    }
    total
}

/// `log Phi(x)` for the standard normal CDF, using the asymptotic series
/// where `erfc` underflows.
fn log_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        (0.5 * erfc(-x * FRAC_1_SQRT_2)).ln()
    } else {
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}

/// Probability of proposing from the exponential piece (right of `TRUNC`).
fn exponential_piece_probability(z: f64) -> f64 {
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let root = (1.0 / TRUNC).sqrt();
    let b = root * (TRUNC * z - 1.0);
    let a = -root * (TRUNC * z + 1.0);
    let x0 = fz.ln() + fz * TRUNC;
    let xb = x0 - z + log_norm_cdf(b);
    let xa = x0 + z + log_norm_cdf(a);
    let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

/// Coefficient `a_n(x)` of the alternating series for the `J*(1)` density.
fn series_coefficient(n: u32, x: f64) -> f64 {
    let k = f64::from(n) + 0.5;
    if x > TRUNC {
        PI * k * (-0.5 * k * k * PI * PI * x).exp()
    } else {
        (2.0 / (PI * x)).powf(1.5) * PI * k * (-2.0 * k * k / x).exp()
    }
}

/// Inverse Gaussian with mean `1/z` and unit shape, truncated to `(0, TRUNC)`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let mu = if z > 0.0 { 1.0 / z } else { f64::INFINITY };
    if mu > TRUNC {
        loop {
            let (e1, e2) = loop {
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                if e1 * e1 <= 2.0 * e2 / TRUNC {
                    break (e1, e2);
                }
            };
            let _ = e2;
            let s = 1.0 + TRUNC * e1;
            let x = TRUNC / (s * s);
            let alpha = (-0.5 * z * z * x).exp();
            if rng.random::<f64>() <= alpha {
                return x;
            }
        }
    }
    loop {
        let y: f64 = rng.sample(StandardNormal);
        let y = y * y;
        let my = mu * y;
        let mut x = mu + 0.5 * mu * my - 0.5 * mu * (4.0 * my + my * my).sqrt();
        if rng.random::<f64>() > mu / (mu + x) {
            x = mu * mu / x;
        }
        if x < TRUNC {
            return x;
        }
    }
}

/// `PG(1, 2z)` via `J*(1, z) / 4`.
fn draw_pg1<R: Rng + ?Sized>(z: f64, prob_exp: f64, rng: &mut R) -> f64 {
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    loop {
        let x = if rng.random::<f64>() < prob_exp {
            let e: f64 = Exp1.sample(rng);
            TRUNC + e / fz
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        let mut s = series_coefficient(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0u32;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coefficient(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coefficient(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}
