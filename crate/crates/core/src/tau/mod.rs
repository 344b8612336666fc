//! Updates of the global scale: direct draws from the collapsed conditional,
//! random-walk Metropolis on the same target, and the conditional given the
//! coefficients.

mod density;
mod integrator;
mod metropolis;
mod uncollapsed;

pub use density::collapsed_logdensity_psi;
pub use integrator::{
    adaptive_cdf, adaptive_cdf_anchored, inverse_transform, CdfGrid, IntegratorConfig,
};
pub use metropolis::{draw_tau_metropolis, tune_metropolis_step, StepAdapter};
pub use uncollapsed::{draw_tau_uncollapsed, truncated_gamma_tail};

use rand::Rng;

use crate::error::Result;
use crate::model::PriorConfig;
use crate::scalar::Real;
use crate::spectral::SpectralCache;

/// Draws `psi = log tau` from its collapsed conditional by building the
/// adaptive CDF around `psi_prev` and inverting it at a uniform variate. A
/// bounded prior support puts its edge on the grid lattice.
/// Returns the draw together with the grid it was drawn from.
pub fn draw_psi_spectral<T: Real, R: Rng + ?Sized>(
    cache: &SpectralCache<T>,
    prior: &PriorConfig<T>,
    psi_prev: T,
    cfg: &IntegratorConfig<T>,
    rng: &mut R,
) -> Result<(T, CdfGrid<T>)> {
    let upper = prior.tau_prior.log_upper();
    let start = match upper {
        Some(hi) if psi_prev > hi => hi,
        _ => psi_prev,
    };
    let logdensity = |psi| collapsed_logdensity_psi(cache, prior, psi);
    let grid = adaptive_cdf_anchored(logdensity, start, upper, cfg)?;
    let u = T::lit(rng.random::<f64>());
    let mut psi = inverse_transform(&grid, u);
    if let Some(hi) = upper {
        psi = psi.min(hi);
    }
    Ok((psi, grid))
}

/// [`draw_psi_spectral`] on the `tau` scale.
pub fn draw_tau_spectral<T: Real, R: Rng + ?Sized>(
    cache: &SpectralCache<T>,
    prior: &PriorConfig<T>,
    psi_prev: T,
    cfg: &IntegratorConfig<T>,
    rng: &mut R,
) -> Result<T> {
    draw_psi_spectral(cache, prior, psi_prev, cfg, rng).map(|(psi, _)| psi.exp())
}
