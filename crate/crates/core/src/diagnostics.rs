//! Convergence and mixing diagnostics: rank-normalized split R-hat, effective
//! sample size with Geyer's initial monotone sequence, and quantiles.

use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Draws of one scalar quantity from several chains of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet<T: Real> {
    chains: Vec<Vec<T>>,
}

impl<T: Real> ChainSet<T> {
    /// Requires at least two chains of a common length of at least four, with
    /// finite entries.
    pub fn new(chains: Vec<Vec<T>>) -> Result<Self> {
        if chains.len() < 2 {
            return Err(Error::DimensionMismatch("need at least two chains".into()));
        }
        let len = chains[0].len();
        if chains.iter().any(|c| c.len() != len) {
            return Err(Error::DimensionMismatch("chains differ in length".into()));
        }
        if len < 4 {
            return Err(Error::DimensionMismatch(format!(
                "need at least four iterations, got {len}"
            )));
        }
        if chains.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::DomainError("non-finite draw".into()));
        }
        Ok(Self { chains })
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_iter(&self) -> usize {
        self.chains[0].len()
    }

    pub fn chains(&self) -> &[Vec<T>] {
        &self.chains
    }

    /// The first `len` iterations of every chain.
    pub fn prefix(&self, len: usize) -> Result<Self> {
        let len = len.min(self.n_iter());
        Self::new(self.chains.iter().map(|c| c[..len].to_vec()).collect())
    }

    /// The last `len` iterations of every chain.
    pub fn tail(&self, len: usize) -> Result<Self> {
        let n = self.n_iter();
        let len = len.min(n);
        Self::new(self.chains.iter().map(|c| c[n - len..].to_vec()).collect())
    }

    fn as_f64(&self) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| c.iter().map(|v| v.as_f64()).collect())
            .collect()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Standard normal quantile.
fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Pooled ranks, ties averaged, mapped to normal scores
/// `Phi^-1((r - 3/8) / (S + 1/4))`.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(Vec::len).sum();
    let mut order: Vec<(f64, usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(c, v)| v.iter().enumerate().map(move |(i, x)| (*x, c, i)))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<Vec<f64>> = chains.iter().map(|v| vec![0.0; v.len()]).collect();
    let denom = total as f64 + 0.25;
    let mut start = 0;
    while start < total {
        let mut end = start + 1;
        while end < total && order[end].0 == order[start].0 {
            end += 1;
        }
        // Ranks start..end (1-based start+1..=end) share their average.
        let rank = 0.5 * ((start + 1) as f64 + end as f64);
        let z = normal_quantile((rank - 0.375) / denom);
        for &(_, c, i) in &order[start..end] {
            out[c][i] = z;
        }
        start = end;
    }
    out
}

fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Between/within R-hat of equal-length chains.
fn classic_rhat(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| sample_variance(c)).collect::<Vec<_>>());
    let b_over_n = sample_variance(&means);
    if w == 0.0 {
        return if b_over_n == 0.0 { 1.0 } else { f64::INFINITY };
    }
    (((n - 1.0) / n * w + b_over_n) / w).sqrt()
}

/// Rank-normalized split R-hat.
pub fn rank_normalized_rhat<T: Real>(cs: &ChainSet<T>) -> Result<f64> {
    let chains = cs.as_f64();
    let first = chains[0][0];
    if chains.iter().flatten().all(|v| *v == first) {
        return Err(Error::ZeroVariance);
    }
    Ok(classic_rhat(&rank_normalize(&split(&chains))))
}

/// Effective sample size of all draws in the set, combining per-chain
/// autocovariances and truncating the autocorrelation sum with Geyer's
/// initial monotone sequence. Clamped to `[1, total draws]`.
pub fn ess<T: Real>(cs: &ChainSet<T>) -> Result<f64> {
    ess_chains(&cs.as_f64())
}

/// [`ess`] of a single sequence.
pub fn ess_vector<T: Real>(values: &[T]) -> Result<f64> {
    if values.len() < 4 {
        return Err(Error::DimensionMismatch("need at least four draws".into()));
    }
    ess_chains(&[values.iter().map(|v| v.as_f64()).collect()])
}

fn ess_chains(chains: &[Vec<f64>]) -> Result<f64> {
    let m = chains.len();
    let n = chains[0].len();
    let total = (m * n) as f64;
    let centered: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| {
            let mu = mean(c);
            c.iter().map(|v| v - mu).collect()
        })
        .collect();
    let autocov = |lag: usize| -> f64 {
        centered
            .iter()
            .map(|c| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
            .sum::<f64>()
            / m as f64
    };
    let nf = n as f64;
    let acov0 = autocov(0);
    let w = acov0 * nf / (nf - 1.0);
    let b_over_n = if m > 1 {
        sample_variance(&chains.iter().map(|c| mean(c)).collect::<Vec<_>>())
    } else {
        0.0
    };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    if !(var_plus > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let rho = |lag: usize, acov: f64| -> f64 {
        if lag == 0 {
            1.0
        } else {
            1.0 - (w - acov) / var_plus
        }
    };

    // Sum of positive, monotonically decreasing pair sums.
    let mut sum = 0.0;
    let mut previous = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let a = rho(2 * k, if k == 0 { acov0 } else { autocov(2 * k) });
        let b = rho(2 * k + 1, autocov(2 * k + 1));
        let mut pair = a + b;
        if pair < 0.0 {
            break;
        }
        if pair > previous {
            pair = previous;
        }
        sum += pair;
        previous = pair;
        k += 1;
    }
    let tau = (-1.0 + 2.0 * sum).max(1.0 / total.log10().max(1.0));
    Ok((total / tau).clamp(1.0, total))
}

/// Outcome of scanning growing prefixes for convergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convergence {
    /// Shortest prefix length meeting the threshold.
    Reached(usize),
    NotReached,
}

/// Smallest prefix length, a multiple of `stride`, whose rank-normalized
/// R-hat is below `threshold`.
pub fn iterations_until_rhat<T: Real>(
    cs: &ChainSet<T>,
    threshold: f64,
    stride: usize,
) -> Result<Convergence> {
    if !(threshold > 1.0) || stride == 0 {
        return Err(Error::DomainError(
            "threshold must exceed 1 and stride must be positive".into(),
        ));
    }
    let mut len = stride;
    while len < 4 {
        len += stride;
    }
    while len <= cs.n_iter() {
        if rank_normalized_rhat(&cs.prefix(len)?)? < threshold {
            return Ok(Convergence::Reached(len));
        }
        len += stride;
    }
    Ok(Convergence::NotReached)
}

/// R-hat of every prefix whose length is a multiple of `stride`.
pub fn rhat_trajectory<T: Real>(cs: &ChainSet<T>, stride: usize) -> Result<Vec<(usize, f64)>> {
    if stride == 0 {
        return Err(Error::DomainError("stride must be positive".into()));
    }
    let mut out = Vec::new();
    let mut len = stride;
    while len <= cs.n_iter() {
        if len >= 4 {
            out.push((len, rank_normalized_rhat(&cs.prefix(len)?)?));
        }
        len += stride;
    }
    Ok(out)
}

/// Linearly interpolated sample quantiles (the `(n - 1) p` rule).
pub fn quantiles<T: Real>(values: &[T], probs: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = values.iter().map(|v| v.as_f64()).collect();
    s.sort_by(f64::total_cmp);
    probs
        .iter()
        .map(|&p| {
            if s.is_empty() {
                return f64::NAN;
            }
            let h = (s.len() - 1) as f64 * p.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(s.len() - 1);
            s[lo] + (h - lo as f64) * (s[hi] - s[lo])
        })
        .collect()
}
