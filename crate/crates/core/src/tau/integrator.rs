//! Adaptive trapezoid integration of a one-dimensional unnormalized density
//! and inverse transform sampling from the resulting CDF approximation.
//!
//! The grid starts at a single point, grows by `delta` on both ends until the
//! total integral stabilizes and both endpoint densities are negligible
//! relative to the maximum, then has its spacing halved until two successive
//! integrals agree. Log densities are exponentiated after subtracting the
//! running maximum, and integrals are tracked on the log scale so that
//! successive approximations stay comparable when the maximum moves.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig<T: Real> {
    /// Relative change in the integral below which the grid is accepted.
    pub eps_integral: T,
    /// Max-normalized endpoint density below which expansion stops.
    pub eps_density: T,
    /// Expansion step, in units of the integration variable.
    pub delta: T,
    /// Largest admissible grid.
    pub max_grid: usize,
}

impl<T: Real> Default for IntegratorConfig<T> {
    fn default() -> Self {
        Self {
            eps_integral: T::lit(1e-3),
            eps_density: T::lit(1e-4),
            delta: T::one(),
            max_grid: 4096,
        }
    }
}

impl<T: Real> IntegratorConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eps_integral > T::zero()
            && self.eps_density > T::zero()
            && self.delta > T::zero()
            && self.delta.is_finite()
            && self.max_grid >= 8;
        if ok {
            Ok(())
        } else {
            Err(Error::DomainError(
                "integrator thresholds must be positive and max_grid at least 8".into(),
            ))
        }
    }
}

/// Normalized density and CDF tabulated on an increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfGrid<T: Real> {
    pub psi: Vec<T>,
    /// Density values normalized to unit trapezoid integral.
    pub density: Vec<T>,
    /// Cumulative trapezoid integrals, from exactly 0 to exactly 1.
    pub cum: Vec<T>,
}

impl<T: Real> CdfGrid<T> {
    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    /// Final grid spacing.
    pub fn spacing(&self) -> T {
        self.psi[1] - self.psi[0]
    }

    /// Checks the structural invariants, including the endpoint criterion.
    pub fn check_invariants(&self, eps_density: T) -> std::result::Result<(), String> {
        let n = self.psi.len();
        if n < 2 || self.density.len() != n || self.cum.len() != n {
            return Err("grid arrays must have equal length of at least 2".into());
        }
        if self.psi.windows(2).any(|w| !(w[1] > w[0])) {
            return Err("grid is not strictly increasing".into());
        }
        if self.density.iter().any(|f| !(*f >= T::zero()) || !f.is_finite()) {
            return Err("density must be finite and nonnegative".into());
        }
        if self.cum.windows(2).any(|w| w[1] < w[0]) {
            return Err("cumulative integral decreases".into());
        }
        if self.cum[0] != T::zero() || self.cum[n - 1] != T::one() {
            return Err("cumulative integral must run from 0 to 1".into());
        }
        let fmax = self.density.iter().fold(T::zero(), |a, b| a.max(*b));
        if self.density[0] > eps_density * fmax || self.density[n - 1] > eps_density * fmax {
            return Err("endpoint densities exceed the threshold".into());
        }
        Ok(())
    }

    /// Interpolated CDF at `psi`, consistent with [`inverse_transform`].
    pub fn cdf(&self, psi: T) -> T {
        let n = self.psi.len();
        if psi <= self.psi[0] {
            return T::zero();
        }
        if psi >= self.psi[n - 1] {
            return T::one();
        }
        let k = self.psi.partition_point(|v| *v <= psi) - 1;
        if self.cum[k + 1] == self.cum[k] {
            return self.cum[k];
        }
        let h = self.psi[k + 1] - self.psi[k];
        let x = psi - self.psi[k];
        let slope = (self.density[k + 1] - self.density[k]) / h;
        let area = self.density[k] * x + T::lit(0.5) * slope * x * x;
        (self.cum[k] + area).min(T::one())
    }
}

struct LogGrid<T: Real> {
    psi: Vec<T>,
    logf: Vec<T>,
}

impl<T: Real> LogGrid<T> {
    fn max_log(&self) -> T {
        self.logf.iter().fold(T::neg_infinity(), |a, b| a.max(*b))
    }

    /// Log of the trapezoid integral; `-inf` while the density is zero
    /// everywhere on the grid.
    fn log_integral(&self) -> T {
        let m = self.max_log();
        if m == T::neg_infinity() {
            return m;
        }
        let f: Vec<T> = self.logf.iter().map(|l| (*l - m).exp()).collect();
        let total = (1..f.len()).fold(T::zero(), |acc, k| {
            acc + cell_area(self.psi[k] - self.psi[k - 1], &self.logf[k - 1..=k], f[k - 1], f[k])
        });
        if self.psi.len() == 1 {
            // A single point carries the placeholder unit mass.
            return m;
        }
        m + total.ln()
    }

    fn endpoints_negligible(&self, eps_density: T) -> bool {
        let m = self.max_log();
        if m == T::neg_infinity() {
            return false;
        }
        let first = (self.logf[0] - m).exp();
        let last = (self.logf[self.logf.len() - 1] - m).exp();
        first <= eps_density && last <= eps_density
    }
}

/// Trapezoid area of one cell. A cell with an endpoint outside the support
/// (log density `-inf`) is taken to lie outside it entirely, so a support
/// edge on the grid contributes no spurious mass.
fn cell_area<T: Real>(h: T, logf: &[T], f0: T, f1: T) -> T {
    if logf[0] == T::neg_infinity() || logf[1] == T::neg_infinity() {
        T::zero()
    } else {
        T::lit(0.5) * h * (f0 + f1)
    }
}

fn evaluate<T: Real, F: FnMut(T) -> T>(logdensity: &mut F, psi: T) -> Result<T> {
    let v = logdensity(psi);
    if v != v || v == T::infinity() {
        return Err(Error::NonFiniteDensity {
            psi: psi.as_f64(),
            value: v.as_f64(),
        });
    }
    Ok(v)
}

/// Relative change between two log-scale integrals; infinite while either is
/// still zero.
fn relative_change<T: Real>(log_new: T, log_old: T) -> T {
    if log_old == T::neg_infinity() || log_new == T::neg_infinity() {
        return T::infinity();
    }
    ((log_new - log_old).exp() - T::one()).abs()
}

/// Builds a high-fidelity CDF approximation of the density whose logarithm is
/// `logdensity`, starting the grid at `psi_init`.
pub fn adaptive_cdf<T: Real, F: FnMut(T) -> T>(
    logdensity: F,
    psi_init: T,
    cfg: &IntegratorConfig<T>,
) -> Result<CdfGrid<T>> {
    adaptive_cdf_anchored(logdensity, psi_init, None, cfg)
}

/// [`adaptive_cdf`] on a lattice that contains `anchor` exactly at every
/// refinement level. Placing the anchor at a point where the density jumps
/// (the edge of a bounded support) keeps the trapezoid rule's error smooth
/// in the spacing. The grid starts at the lattice point nearest `psi_init`
/// on the anchor's side.
pub fn adaptive_cdf_anchored<T: Real, F: FnMut(T) -> T>(
    mut logdensity: F,
    psi_init: T,
    anchor: Option<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<CdfGrid<T>> {
    cfg.validate()?;
    if !psi_init.is_finite() || anchor.is_some_and(|a| !a.is_finite()) {
        return Err(Error::DomainError("grid points must be finite".into()));
    }
    let overflow = Error::GridOverflow {
        max_grid: cfg.max_grid,
    };
    let (origin, start) = match anchor {
        Some(a) => {
            let steps = ((a - psi_init) / cfg.delta).ceil();
            (a, -steps.as_f64() as i64)
        }
        None => (psi_init, 0),
    };
    // Grid points are origin + index * spacing; indices double on refinement.
    let mut spacing = cfg.delta;
    let at = |index: i64, spacing: T| origin + T::lit(index as f64) * spacing;

    let mut index = vec![start];
    let mut grid = LogGrid {
        psi: vec![at(start, spacing)],
        logf: vec![evaluate(&mut logdensity, at(start, spacing))?],
    };
    // Placeholders (F_old, F_new) = (0, 1), the latter on the scale of the
    // initial point's density.
    let mut log_old = T::neg_infinity();
    let mut log_new = grid.log_integral();

    // Expansion.
    while relative_change(log_new, log_old) > cfg.eps_integral
        || !grid.endpoints_negligible(cfg.eps_density)
    {
        if grid.psi.len() + 2 > cfg.max_grid {
            return Err(overflow);
        }
        log_old = log_new;
        let lo = index[0] - 1;
        let hi = index[index.len() - 1] + 1;
        let f_lo = evaluate(&mut logdensity, at(lo, spacing))?;
        let f_hi = evaluate(&mut logdensity, at(hi, spacing))?;
        index.insert(0, lo);
        grid.psi.insert(0, at(lo, spacing));
        grid.logf.insert(0, f_lo);
        index.push(hi);
        grid.psi.push(at(hi, spacing));
        grid.logf.push(f_hi);
        log_new = grid.log_integral();
    }

    // Refinement: halve the spacing at least once so that two successive
    // approximations are compared.
    loop {
        let n = grid.psi.len();
        if 2 * n - 1 > cfg.max_grid {
            return Err(overflow);
        }
        log_old = log_new;
        spacing = spacing * T::lit(0.5);
        let mut next_index = Vec::with_capacity(2 * n - 1);
        let mut psi = Vec::with_capacity(2 * n - 1);
        let mut logf = Vec::with_capacity(2 * n - 1);
        for k in 0..n {
            next_index.push(2 * index[k]);
            psi.push(grid.psi[k]);
            logf.push(grid.logf[k]);
            if k + 1 < n {
                let mid = 2 * index[k] + 1;
                next_index.push(mid);
                psi.push(at(mid, spacing));
                logf.push(evaluate(&mut logdensity, at(mid, spacing))?);
            }
        }
        index = next_index;
        grid = LogGrid { psi, logf };
        log_new = grid.log_integral();
        if relative_change(log_new, log_old) <= cfg.eps_integral {
            break;
        }
    }

    Ok(normalize(grid))
}

fn normalize<T: Real>(grid: LogGrid<T>) -> CdfGrid<T> {
    let m = grid.max_log();
    let f: Vec<T> = grid.logf.iter().map(|l| (*l - m).exp()).collect();
    let mut cum = Vec::with_capacity(f.len());
    cum.push(T::zero());
    for k in 1..f.len() {
        let area = cell_area(grid.psi[k] - grid.psi[k - 1], &grid.logf[k - 1..=k], f[k - 1], f[k]);
        cum.push(cum[k - 1] + area);
    }
    let total = cum[cum.len() - 1];
    let density = f.into_iter().map(|v| v / total).collect();
    for c in cum.iter_mut() {
        *c /= total;
    }
    let last = cum.len() - 1;
    cum[last] = T::one();
    CdfGrid {
        psi: grid.psi,
        density,
        cum,
    }
}

/// Inverts the grid's CDF at `u`. Within a cell the density is the linear
/// interpolant used by the trapezoid rule, so the CDF is quadratic there and
/// is inverted exactly.
pub fn inverse_transform<T: Real>(g: &CdfGrid<T>, u: T) -> T {
    let n = g.psi.len();
    if u <= T::zero() {
        return g.psi[0];
    }
    if u >= T::one() {
        return g.psi[n - 1];
    }
    // First cell whose upper cumulative value reaches u.
    let k = g.cum[1..].partition_point(|c| *c < u).min(n - 2);
    let h = g.psi[k + 1] - g.psi[k];
    let mass = g.cum[k + 1] - g.cum[k];
    if !(mass > T::zero()) {
        return g.psi[k];
    }
    let r = (u - g.cum[k]).max(T::zero()).min(mass);
    let f0 = g.density[k];
    let slope = (g.density[k + 1] - f0) / h;
    // Root of f0 x + slope x^2 / 2 = r in the cancellation-free form.
    let disc = (f0 * f0 + T::lit(2.0) * slope * r).max(T::zero());
    let denom = f0 + disc.sqrt();
    let x = if denom > T::zero() {
        T::lit(2.0) * r / denom
    } else {
        h * r / mass
    };
    g.psi[k] + x.max(T::zero()).min(h)
}
