use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use super::{ChainConfig, ChainResult, RandomWalk};
use crate::error::{Error, Result};
use crate::likelihood::{ln_response_factorials, ln_rate_marginal, preference_terms, RatePrior};
use crate::preference::{PreferenceKind, PreferenceParams};
use crate::priors::{HyperConfig, SinglePriors};
use crate::store::SufficientStats;

/// Posterior of the preference parameters for one preference function with
/// `μ` integrated out. Parameters are handled on the log scale.
#[derive(Debug, Clone)]
pub struct SingleModel<'a> {
    stats: &'a SufficientStats,
    kind: PreferenceKind,
    delta_fixed: bool,
    priors: SinglePriors,
    rate_prior: RatePrior<f64>,
    ln_factorials: f64,
}

/// Starting point: linear attachment with unit zero-appeal and the kink at
/// the median positive degree.
pub fn initial_params(stats: &SufficientStats, kind: PreferenceKind, delta_fixed: bool) -> PreferenceParams<f64> {
    let gamma = stats.positive_degree_quantile(0.5).unwrap_or(1.0);
    PreferenceParams { kind, alpha: 1.0, beta: 1.0, gamma, delta: if delta_fixed { 0.0 } else { 1.0 }, delta_fixed }
}

impl<'a> SingleModel<'a> {
    pub fn new(stats: &'a SufficientStats, kind: PreferenceKind, delta_fixed: bool, priors: &SinglePriors) -> Result<Self> {
        if stats.num_steps() == 0 {
            return Err(Error::InsufficientData("no informative time steps".into()));
        }
        Ok(Self {
            stats,
            kind,
            delta_fixed,
            priors: *priors,
            rate_prior: priors.rate_prior()?,
            ln_factorials: ln_response_factorials(stats),
        })
    }

    pub fn kind(&self) -> PreferenceKind {
        self.kind
    }

    pub fn delta_fixed(&self) -> bool {
        self.delta_fixed
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.kind.param_names(self.delta_fixed)
    }

    pub fn params(&self, log_values: &[f64]) -> PreferenceParams<f64> {
        let values: Vec<f64> = log_values.iter().map(|u| u.exp()).collect();
        PreferenceParams::from_free_values(self.kind, self.delta_fixed, &values)
    }

    pub fn rate_prior(&self) -> &RatePrior<f64> {
        &self.rate_prior
    }

    /// Collapsed log-likelihood; `-∞` for impossible or non-finite evaluations.
    pub fn log_likelihood(&self, params: &PreferenceParams<f64>) -> f64 {
        match preference_terms(self.stats, params) {
            Ok(t) if t.log_b.is_finite() => {
                t.log_b - self.ln_factorials + ln_rate_marginal(&self.rate_prior, self.stats.total_increment(), t.steps)
            }
            _ => f64::NEG_INFINITY,
        }
    }

    /// Prior density of the log parameters.
    pub fn log_prior(&self, log_values: &[f64]) -> f64 {
        log_values.iter().map(|&u| self.priors.ln_density_log_scale(u)).sum()
    }

    /// Log posterior density of the log parameters, up to a constant.
    pub fn log_target(&self, log_values: &[f64]) -> f64 {
        let ll = self.log_likelihood(&self.params(log_values));
        if ll == f64::NEG_INFINITY {
            return ll;
        }
        ll + self.log_prior(log_values)
    }

    /// One component-wise Metropolis sweep; `ld` must equal `log_target(u)`.
    pub fn sweep<R: Rng + ?Sized>(&self, rng: &mut R, walk: &mut RandomWalk, u: &mut [f64], ld: &mut f64, burn_in: bool) {
        for i in 0..u.len() {
            let mut trial = u.to_vec();
            let (value, new_ld) = walk.update(rng, i, u[i], *ld, burn_in, |x| {
                trial[i] = x;
                self.log_target(&trial)
            });
            u[i] = value;
            *ld = new_ld;
        }
    }

    /// Draw of `μ` from its conditional posterior Gamma(a + A_T, b + T).
    pub fn draw_rate<R: Rng + ?Sized>(&self, rng: &mut R, params: &PreferenceParams<f64>) -> f64 {
        let steps = preference_terms(self.stats, params).map(|t| t.steps).unwrap_or(self.stats.num_steps() as u64);
        let shape = self.rate_prior.shape + self.stats.total_increment() as f64;
        let rate = self.rate_prior.rate + steps as f64;
        Gamma::new(shape, 1.0 / rate).expect("positive parameters").sample(rng)
    }
}

/// Random-walk Metropolis for the single model with preference function `kind`.
///
/// Recorded draws contain the preference parameters on their natural scale
/// followed by `mu`, drawn from its conjugate conditional.
pub fn fit_single(
    stats: &SufficientStats,
    kind: PreferenceKind,
    delta_fixed: bool,
    hyper: &HyperConfig,
    chain: &ChainConfig,
) -> Result<ChainResult> {
    chain.validate()?;
    let model = SingleModel::new(stats, kind, delta_fixed, &hyper.single)?;
    let names = model.names();
    let init = initial_params(stats, kind, delta_fixed);
    let mut u: Vec<f64> = init.free_values().iter().map(|v| v.ln()).collect();
    let mut ld = model.log_target(&u);
    if !ld.is_finite() {
        return Err(Error::Initialization(format!("log posterior is {ld} at {init:?}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(chain.seed);
    let mut walk = RandomWalk::new(names.iter().map(|n| chain.step_for(n)).collect(), chain.adapt);
    let mut out_names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    out_names.push("mu".into());
    let mut result = ChainResult::new(out_names);

    for iter in 0..chain.iterations {
        let burn = iter < chain.burn_in;
        model.sweep(&mut rng, &mut walk, &mut u, &mut ld, burn);
        if iter + 1 == chain.burn_in {
            for i in walk.stuck_in_burn_in() {
                let msg = format!("no proposal for {} was accepted during burn-in", names[i]);
                log::warn!("{msg}");
                result.warnings.push(msg);
            }
        }
        if chain.records(iter) {
            let params = model.params(&u);
            let mut row = params.free_values();
            row.push(model.draw_rate(&mut rng, &params));
            result.samples.push(row);
            result.log_posterior.push(ld - u.iter().sum::<f64>());
        }
    }

    for (i, n) in names.iter().enumerate() {
        result.acceptance.insert(n.to_string(), walk.acceptance_rates()[i]);
        result.final_scales.insert(n.to_string(), walk.scales()[i]);
    }
    result.finalize();
    Ok(result)
}
