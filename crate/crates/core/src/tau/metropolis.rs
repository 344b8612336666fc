use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::PriorConfig;
use crate::scalar::Real;
use crate::spectral::SpectralCache;

use super::collapsed_logdensity_psi;

const TARGET_ACCEPTANCE: f64 = 0.44;
const MIN_STEP: f64 = 1e-4;
const MAX_STEP: f64 = 10.0;

/// One Gaussian random-walk Metropolis step on `psi = log tau` targeting the
/// collapsed conditional. Returns the new `psi` and whether the proposal was
/// accepted.
pub fn draw_tau_metropolis<T: Real, R: Rng + ?Sized>(
    cache: &SpectralCache<T>,
    prior: &PriorConfig<T>,
    psi_current: T,
    step_sd: f64,
    rng: &mut R,
) -> (T, bool) {
    let z: f64 = rng.sample(StandardNormal);
    let proposal = psi_current + T::lit(step_sd * z);
    let log_u = rng.random::<f64>().ln();
    let target = collapsed_logdensity_psi(cache, prior, proposal);
    if target == T::neg_infinity() {
        return (psi_current, false);
    }
    let log_ratio = (target - collapsed_logdensity_psi(cache, prior, psi_current)).as_f64();
    if log_u < log_ratio {
        (proposal, true)
    } else {
        (psi_current, false)
    }
}

/// Adaptive step size for burn-in: after the `t`-th proposal the step is
/// multiplied by `exp(t^-0.6 (accepted - 0.44))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepAdapter {
    step: f64,
    t: u64,
}

impl StepAdapter {
    pub fn new(step: f64) -> Self {
        Self {
            step: step.clamp(MIN_STEP, MAX_STEP),
            t: 0,
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn update(&mut self, accepted: bool) -> f64 {
        self.t += 1;
        self.step = adapt(self.step, self.t, accepted);
        self.step
    }
}

fn adapt(step: f64, t: u64, accepted: bool) -> f64 {
    let acc = if accepted { 1.0 } else { 0.0 };
    let gamma = (t as f64).powf(-0.6);
    (step * (gamma * (acc - TARGET_ACCEPTANCE)).exp()).clamp(MIN_STEP, MAX_STEP)
}

/// Next step size given the burn-in history of `(step_sd, accepted)` pairs,
/// oldest first. An empty history yields `None`.
pub fn tune_metropolis_step(history: &[(f64, bool)]) -> Option<f64> {
    let &(step, accepted) = history.last()?;
    Some(adapt(step, history.len() as u64, accepted))
}
