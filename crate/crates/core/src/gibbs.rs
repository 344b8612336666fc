//! Gibbs scans, chains and multi-chain experiments.
//!
//! Collapsed scans decompose once and use the result for both the global
//! scale and the coefficients:
//!
//! * linear: decompose(lambda), tau, sigma^2, beta, lambda
//! * logistic: decompose(lambda, omega), tau, beta, lambda, omega
//!
//! The uncollapsed sampler draws tau from its conditional given the
//! coefficients first and then continues with the same order.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::conditionals::{draw_beta, draw_lambda, draw_omega, draw_sigma2};
use crate::error::{Error, Result};
use crate::flops::{self, FlopCounter, FlopCounts};
use crate::model::{Dataset, ModelKind, ModelState, PriorConfig};
use crate::polya_gamma::{pg_mean, PgParams};
use crate::spectral::{build_decomposition, Regime, ScanDecomposition};
use crate::tau::{
    collapsed_logdensity_psi, draw_psi_spectral, draw_tau_metropolis, draw_tau_uncollapsed,
    IntegratorConfig, StepAdapter,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TauUpdate {
    /// Direct draw from the collapsed conditional by numerical inversion.
    Spectral,
    /// Random-walk Metropolis on `log tau` targeting the collapsed conditional.
    Metropolis,
    /// Draw from the conditional given the coefficients.
    Uncollapsed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Monitor {
    Tau,
    /// Median local scale.
    LambdaSummary,
    Beta,
    SigmaSq,
    /// Collapsed log density of `log tau` at the recorded draw.
    LogDensity,
    Acceptance,
}

/// Updates performed within a scan, in order, recorded when
/// [`RunConfig::record_steps`] is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    Decompose,
    Tau,
    SigmaSq,
    Beta,
    Lambda,
    Omega,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelKind,
    pub tau_update: TauUpdate,
    pub n_iter: usize,
    pub n_burnin: usize,
    pub tau_inits: Vec<f64>,
    pub seeds: Vec<u64>,
    pub metropolis_step_init: f64,
    pub integrator: IntegratorConfig<f64>,
    pub prior: PriorConfig<f64>,
    pub monitor: Vec<Monitor>,
    /// Keep the local scales at their initial values.
    pub freeze_lambda: bool,
    /// Keep the auxiliaries at their initial values.
    pub freeze_omega: bool,
    /// Forces a decomposition regime instead of choosing by shape.
    pub regime: Option<Regime>,
    pub record_steps: bool,
}

/// The initialization ladder `1, 0.1, ..., 1e-5`.
pub fn default_tau_inits() -> Vec<f64> {
    (0..6).map(|k| 10f64.powi(-k)).collect()
}

impl RunConfig {
    pub fn new(model: ModelKind, tau_update: TauUpdate, n_iter: usize) -> Self {
        Self {
            model,
            tau_update,
            n_iter,
            n_burnin: n_iter / 5,
            tau_inits: default_tau_inits(),
            seeds: vec![1, 2, 3],
            metropolis_step_init: 1.0,
            integrator: IntegratorConfig::default(),
            prior: PriorConfig::default(),
            monitor: vec![Monitor::Tau, Monitor::SigmaSq, Monitor::Acceptance],
            freeze_lambda: false,
            freeze_omega: false,
            regime: None,
            record_steps: false,
        }
    }

    pub fn chains(&self) -> usize {
        self.tau_inits.len() * self.seeds.len()
    }

    /// `(tau_init index, seed index)` of a chain; chains are ordered by
    /// initial value, then seed.
    pub fn chain_coordinates(&self, chain_index: usize) -> (usize, usize) {
        (chain_index / self.seeds.len(), chain_index % self.seeds.len())
    }

    fn monitors(&self, m: Monitor) -> bool {
        self.monitor.contains(&m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 || self.n_burnin >= self.n_iter {
            return Err(Error::DomainError(format!(
                "need n_iter > n_burnin >= 0, got {} and {}",
                self.n_iter, self.n_burnin
            )));
        }
        if self.tau_inits.is_empty() || self.seeds.is_empty() {
            return Err(Error::DomainError("need at least one initial value and seed".into()));
        }
        for &t in &self.tau_inits {
            if !(t > 0.0 && t.is_finite()) || self.prior.tau_prior.log_density(t) == f64::NEG_INFINITY {
                return Err(Error::DomainError(format!(
                    "initial tau {t} is outside the prior support"
                )));
            }
        }
        if !(self.metropolis_step_init > 0.0 && self.metropolis_step_init.is_finite()) {
            return Err(Error::DomainError("Metropolis step must be positive".into()));
        }
        self.integrator.validate()?;
        self.prior.validate()
    }
}

/// Per-iteration record of the monitored quantities. Vectors for unmonitored
/// quantities stay empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Draws {
    pub tau: Vec<f64>,
    pub sigma_sq: Vec<f64>,
    pub accept: Vec<bool>,
    pub lambda_median: Vec<f64>,
    pub logdensity: Vec<f64>,
    /// Row-major, `beta.len() / n_iter` coefficients per iteration.
    pub beta: Vec<f64>,
}

impl Draws {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn log_tau(&self) -> Vec<f64> {
        self.tau.iter().map(|t| t.ln()).collect()
    }

    /// Coefficients recorded at iteration `t`.
    pub fn beta_row(&self, t: usize) -> &[f64] {
        let width = self.beta.len() / self.tau.len().max(1);
        &self.beta[t * width..(t + 1) * width]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    pub burnin: Duration,
    pub sampling: Duration,
    /// Time spent in the global scale update, all iterations.
    pub tau_update: Duration,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub chain_index: usize,
    pub seed: u64,
    pub tau_init: f64,
    pub draws: Draws,
    /// Post-burn-in acceptance rate (Metropolis only).
    pub acceptance_rate: Option<f64>,
    /// Step size after adaptation (Metropolis only).
    pub metropolis_step: Option<f64>,
    pub times: PhaseTimes,
    /// Per-scan and per-tau operation counts of this chain.
    pub flops: FlopCounts,
    pub final_state: ModelState,
    pub steps: Vec<Step>,
}

/// Random stream of a chain: seeded by the seed, with the initial value's
/// position as the stream number.
pub fn chain_rng(seed: u64, init_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(init_index as u64);
    rng
}

fn half_cauchy<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        let v = (0.5 * std::f64::consts::PI * u).tan();
        if v > 0.0 && v.is_finite() {
            return v;
        }
    }
}

fn regime_for(cfg: &RunConfig, d: &Dataset<f64>) -> Regime {
    cfg.regime.unwrap_or_else(|| Regime::for_dataset(d))
}

fn decompose(
    cfg: &RunConfig,
    d: &Dataset<f64>,
    state: &ModelState,
    counter: &Arc<FlopCounter>,
) -> Result<ScanDecomposition<f64>> {
    let omega = (d.kind() == ModelKind::Logistic).then_some(&state.omega);
    build_decomposition(d, &state.lambda, omega, regime_for(cfg, d), Some(counter))
}

/// Initial state: `tau` as given, half-Cauchy local scales, auxiliaries at
/// their conditional mean for zero coefficients, unit noise variance. The
/// uncollapsed sampler also draws initial coefficients from their
/// conditional.
pub fn init_state<R: Rng + ?Sized>(
    cfg: &RunConfig,
    d: &Dataset<f64>,
    tau_init: f64,
    rng: &mut R,
) -> Result<ModelState> {
    let p = d.p();
    let lambda = DVector::from_fn(p, |_, _| half_cauchy(rng));
    let omega = match d.trials() {
        Some(trials) => DVector::from_fn(d.n(), |i, _| pg_mean(PgParams::new(trials[i], 0.0))),
        None => DVector::zeros(0),
    };
    let mut state = ModelState {
        tau: tau_init,
        psi: tau_init.ln(),
        lambda,
        beta: DVector::zeros(p + usize::from(d.has_intercept())),
        sigma_sq: 1.0,
        omega,
    };
    if cfg.tau_update == TauUpdate::Uncollapsed {
        let omega = (d.kind() == ModelKind::Logistic).then_some(&state.omega);
        let dec = build_decomposition(d, &state.lambda, omega, regime_for(cfg, d), None)?;
        state.beta = draw_beta(d, &state, &cfg.prior, &dec, rng)?;
    }
    Ok(state)
}

fn median(v: &DVector<f64>) -> f64 {
    let mut s: Vec<f64> = v.iter().copied().collect();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Runs one chain of the experiment; the random stream depends only on the
/// chain's seed and initial value.
pub fn run_chain(cfg: &RunConfig, d: &Dataset<f64>, chain_index: usize) -> Result<ChainOutput> {
    cfg.validate()?;
    if d.kind() != cfg.model {
        return Err(Error::DomainError(format!(
            "configured for a {:?} model but the data are {:?}",
            cfg.model,
            d.kind()
        )));
    }
    if chain_index >= cfg.chains() {
        return Err(Error::DomainError(format!(
            "chain {chain_index} out of range for {} chains",
            cfg.chains()
        )));
    }
    let (init_index, seed_index) = cfg.chain_coordinates(chain_index);
    let seed = cfg.seeds[seed_index];
    let tau_init = cfg.tau_inits[init_index];
    let mut rng = chain_rng(seed, init_index);
    // Per-dataset products are shared and excluded from the chain's counts.
    if !regime_for(cfg, d).is_pn() {
        d.gram(None);
    }

    let counter = Arc::new(FlopCounter::new());
    let mut state = init_state(cfg, d, tau_init, &mut rng)?;
    let start_counts = counter.snapshot();
    let mut adapter = StepAdapter::new(cfg.metropolis_step_init);
    let mut draws = Draws::default();
    let mut steps = Vec::new();
    let mut times = PhaseTimes::default();
    let mut accepted_after_burnin = 0usize;
    let phase_start = Instant::now();
    let mut burnin_end = phase_start;

    for t in 0..cfg.n_iter {
        if t == cfg.n_burnin {
            burnin_end = Instant::now();
        }
        let accepted = scan(
            cfg,
            d,
            &mut state,
            &mut adapter,
            t < cfg.n_burnin,
            &counter,
            &mut rng,
            &mut times,
            cfg.record_steps.then_some(&mut steps),
            &mut draws,
        )
        .map_err(|e| e.at_iteration(t))?;
        if t >= cfg.n_burnin && accepted {
            accepted_after_burnin += 1;
        }
    }
    let end = Instant::now();
    times.burnin = burnin_end - phase_start;
    times.sampling = end - burnin_end;

    let metropolis = cfg.tau_update == TauUpdate::Metropolis;
    Ok(ChainOutput {
        chain_index,
        seed,
        tau_init,
        draws,
        acceptance_rate: metropolis
            .then(|| accepted_after_burnin as f64 / (cfg.n_iter - cfg.n_burnin) as f64),
        metropolis_step: metropolis.then(|| adapter.step()),
        times,
        flops: counter.snapshot().since(&start_counts),
        final_state: state,
        steps,
    })
}

#[allow(clippy::too_many_arguments)]
fn scan<R: Rng + ?Sized>(
    cfg: &RunConfig,
    d: &Dataset<f64>,
    state: &mut ModelState,
    adapter: &mut StepAdapter,
    burnin: bool,
    counter: &Arc<FlopCounter>,
    rng: &mut R,
    times: &mut PhaseTimes,
    mut steps: Option<&mut Vec<Step>>,
    draws: &mut Draws,
) -> Result<bool> {
    let mut log = |s: Step| {
        if let Some(v) = steps.as_mut() {
            v.push(s);
        }
    };
    let prior = &cfg.prior;
    let mut accepted = true;

    let dec = match cfg.tau_update {
        TauUpdate::Uncollapsed => {
            let clock = Instant::now();
            let beta = state.shrunk_beta(d.has_intercept()).into_owned();
            let tau = draw_tau_uncollapsed(&beta, &state.lambda, prior, rng)?;
            state.set_tau(tau);
            times.tau_update += clock.elapsed();
            log(Step::Tau);
            let dec = decompose(cfg, d, state, counter)?;
            log(Step::Decompose);
            dec
        }
        TauUpdate::Spectral | TauUpdate::Metropolis => {
            let dec = decompose(cfg, d, state, counter)?;
            log(Step::Decompose);
            let clock = Instant::now();
            if cfg.tau_update == TauUpdate::Spectral {
                let (psi, _) = draw_psi_spectral(&dec.cache, prior, state.psi, &cfg.integrator, rng)?;
                state.set_psi(psi);
            } else {
                let (psi, acc) =
                    draw_tau_metropolis(&dec.cache, prior, state.psi, adapter.step(), rng);
                if burnin {
                    adapter.update(acc);
                }
                accepted = acc;
                state.set_psi(psi);
            }
            times.tau_update += clock.elapsed();
            log(Step::Tau);
            dec
        }
    };

    let logdensity = cfg
        .monitors(Monitor::LogDensity)
        .then(|| collapsed_logdensity_psi(&dec.cache, prior, state.psi));

    if d.kind() == ModelKind::Linear {
        state.sigma_sq = draw_sigma2(&dec.cache, state.tau, prior, rng)?;
        log(Step::SigmaSq);
    }
    state.beta = draw_beta(d, state, prior, &dec, rng)?;
    log(Step::Beta);
    drop(dec);
    if !cfg.freeze_lambda {
        let beta = state.shrunk_beta(d.has_intercept()).into_owned();
        state.lambda = draw_lambda(&beta, &state.lambda, state.tau, rng)?;
        log(Step::Lambda);
    }
    if d.kind() == ModelKind::Logistic && !cfg.freeze_omega {
        state.omega = draw_omega(d, &state.beta, rng)?;
        log(Step::Omega);
    }

    draws.tau.push(state.tau);
    if d.kind() == ModelKind::Linear && cfg.monitors(Monitor::SigmaSq) {
        draws.sigma_sq.push(state.sigma_sq);
    }
    if cfg.tau_update == TauUpdate::Metropolis && cfg.monitors(Monitor::Acceptance) {
        draws.accept.push(accepted);
    }
    if cfg.monitors(Monitor::LambdaSummary) {
        draws.lambda_median.push(median(&state.lambda));
    }
    if let Some(v) = logdensity {
        draws.logdensity.push(v);
    }
    if cfg.monitors(Monitor::Beta) {
        draws.beta.extend(state.beta.iter());
    }
    Ok(accepted)
}

/// Per-dataset operation count of the products reused by `n >= p` regimes.
pub fn per_dataset_flops(cfg: &RunConfig, d: &Dataset<f64>) -> u64 {
    if regime_for(cfg, d).is_pn() {
        0
    } else {
        let (n, p) = (d.n(), d.p());
        flops::gemm(p, n, p) + 2 * flops::gemm(p, n, 1)
    }
}

/// Runs every chain of the experiment concurrently on the current rayon
/// pool. Results are ordered by chain index; a failing chain does not stop
/// the others.
pub fn run_experiment(cfg: &RunConfig, d: &Dataset<f64>) -> Vec<Result<ChainOutput>> {
    run_experiment_with(cfg, d, run_chain)
}

/// [`run_experiment`] with a custom per-chain runner.
pub fn run_experiment_with<F>(cfg: &RunConfig, d: &Dataset<f64>, runner: F) -> Vec<Result<ChainOutput>>
where
    F: Fn(&RunConfig, &Dataset<f64>, usize) -> Result<ChainOutput> + Sync,
{
    if !regime_for(cfg, d).is_pn() {
        d.gram(None);
    }
    (0..cfg.chains())
        .into_par_iter()
        .map(|c| runner(cfg, d, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn linear_data() -> Dataset<f64> {
        let x = DMatrix::from_fn(20, 5, |i, j| ((i * 3 + j * 7) % 11) as f64 / 5.0 - 1.0);
        let y = DVector::from_fn(20, |i, _| x[(i, 0)] * 1.5 - x[(i, 3)] + 0.3 * (i as f64).sin());
        Dataset::linear(x, y, false).unwrap()
    }

    fn logistic_data() -> Dataset<f64> {
        let x = DMatrix::from_fn(15, 4, |i, j| ((i * 5 + j * 3) % 7) as f64 / 3.0 - 1.0);
        let y = (0..15).map(|i| u32::from(x[(i, 1)] > 0.0)).collect();
        Dataset::logistic(x, y, true).unwrap()
    }

    #[test]
    fn smoke_run_records_taus_in_support() {
        let d = linear_data();
        for update in [TauUpdate::Spectral, TauUpdate::Metropolis, TauUpdate::Uncollapsed] {
            let mut cfg = RunConfig::new(ModelKind::Linear, update, 10);
            cfg.seeds = vec![7];
            cfg.tau_inits = vec![1.0];
            let out = run_chain(&cfg, &d, 0).unwrap();
            assert_eq!(out.draws.tau.len(), 10);
            assert!(out.draws.tau.iter().all(|t| *t > 0.0 && *t <= 1.0));
        }
    }

    #[test]
    fn init_state_is_seeded_and_valid() {
        let d = logistic_data();
        let cfg = RunConfig::new(ModelKind::Logistic, TauUpdate::Spectral, 10);
        let a = init_state(&cfg, &d, 0.1, &mut chain_rng(3, 0)).unwrap();
        let b = init_state(&cfg, &d, 0.1, &mut chain_rng(3, 0)).unwrap();
        assert_eq!(a, b);
        assert!(a.lambda.iter().all(|l| *l > 0.0));
        assert!(a.omega.iter().all(|w| *w == 0.25));
    }

    #[test]
    fn one_decomposition_per_scan() {
        let d = logistic_data();
        for update in [TauUpdate::Spectral, TauUpdate::Metropolis] {
            let mut cfg = RunConfig::new(ModelKind::Logistic, update, 25);
            cfg.seeds = vec![1];
            cfg.tau_inits = vec![0.1];
            let out = run_chain(&cfg, &d, 0).unwrap();
            assert_eq!(out.flops.decompositions, 25);
            assert!(out.flops.tau_evaluations > 0);
        }
    }

    #[test]
    fn update_order() {
        let lin = linear_data();
        let logi = logistic_data();
        let cases = [
            (&lin, TauUpdate::Spectral, vec![Step::Decompose, Step::Tau, Step::SigmaSq, Step::Beta, Step::Lambda]),
            (&lin, TauUpdate::Uncollapsed, vec![Step::Tau, Step::Decompose, Step::SigmaSq, Step::Beta, Step::Lambda]),
            (&logi, TauUpdate::Metropolis, vec![Step::Decompose, Step::Tau, Step::Beta, Step::Lambda, Step::Omega]),
            (&logi, TauUpdate::Uncollapsed, vec![Step::Tau, Step::Decompose, Step::Beta, Step::Lambda, Step::Omega]),
        ];
        for (d, update, order) in cases {
            let mut cfg = RunConfig::new(d.kind(), update, 3);
            cfg.seeds = vec![1];
            cfg.tau_inits = vec![1.0];
            cfg.record_steps = true;
            let out = run_chain(&cfg, d, 0).unwrap();
            let expected: Vec<Step> = order.iter().cycle().take(3 * order.len()).copied().collect();
            assert_eq!(out.steps, expected, "{update:?}");
        }
    }

    #[test]
    fn experiment_is_ordered_and_isolated() {
        let d = linear_data();
        let mut cfg = RunConfig::new(ModelKind::Linear, TauUpdate::Spectral, 6);
        cfg.n_burnin = 1;
        assert_eq!(cfg.chains(), 18);
        let outs = run_experiment_with(&cfg, &d, |cfg, d, c| {
            if c == 4 {
                Err(Error::GridOverflow { max_grid: 4096 })
            } else {
                run_chain(cfg, d, c)
            }
        });
        assert_eq!(outs.len(), 18);
        assert_eq!(outs.iter().filter(|o| o.is_err()).count(), 1);
        for (c, o) in outs.iter().enumerate() {
            if let Ok(o) = o {
                assert_eq!(o.chain_index, c);
                let (i, s) = cfg.chain_coordinates(c);
                assert_eq!((o.tau_init, o.seed), (cfg.tau_inits[i], cfg.seeds[s]));
            }
        }
        // Reversed launch order yields the same chains.
        let again = run_chain(&cfg, &d, 17).unwrap();
        assert_eq!(again.draws, outs[17].as_ref().unwrap().draws);
    }

    #[test]
    fn errors_carry_iteration() {
        let d = linear_data();
        let mut cfg = RunConfig::new(ModelKind::Linear, TauUpdate::Spectral, 5);
        cfg.seeds = vec![1];
        cfg.tau_inits = vec![0.5];
        cfg.integrator.max_grid = 8;
        let err = run_chain(&cfg, &d, 0).unwrap_err();
        assert!(matches!(err, Error::AtIteration { iteration: 0, .. }));
        assert!(matches!(err.root(), Error::GridOverflow { .. }));
    }

    #[test]
    fn metropolis_reports_acceptance() {
        let d = linear_data();
        let mut cfg = RunConfig::new(ModelKind::Linear, TauUpdate::Metropolis, 400);
        cfg.seeds = vec![2];
        cfg.tau_inits = vec![0.3];
        let out = run_chain(&cfg, &d, 0).unwrap();
        let rate = out.acceptance_rate.unwrap();
        assert!((0.0..=1.0).contains(&rate));
        assert_eq!(out.draws.accept.len(), 400);
    }
}
