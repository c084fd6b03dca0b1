//! Hierarchical model: per-period preference parameters tied together by
//! normal priors whose means and sds get normal and half-Cauchy hyperpriors.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{ln_rate_marginal, ln_response_factorials, loglik_collapsed, preference_terms, RatePrior};
use crate::mcmc::{initial_params, ChainConfig, ChainResult, RandomWalk};
use crate::preference::{PreferenceKind, PreferenceParams};
use crate::priors::{ln_normal_pdf, HyperConfig, Hyperprior, PriorScale};
use crate::store::SufficientStats;

pub use crate::priors::half_cauchy_logpdf;

/// Gamma prior on the per-period rate in the `(μ_μ, σ_μ)` parametrisation:
/// shape `μ_μ²/σ_μ²`, rate `μ_μ/σ_μ²`.
pub fn rate_prior_from_moments(mu_mu: f64, sigma_mu: f64) -> Result<RatePrior<f64>> {
    if !(mu_mu > 0.0 && sigma_mu > 0.0) {
        return Err(Error::InvalidParams(format!("mu_mu and sigma_mu must be positive, got {mu_mu}, {sigma_mu}")));
    }
    let v = sigma_mu * sigma_mu;
    RatePrior::new(mu_mu * mu_mu / v, mu_mu / v)
}

/// Collapsed log-likelihood of one period under the reparametrised rate prior.
pub fn loglik_period(stats: &SufficientStats, params: &PreferenceParams<f64>, mu_mu: f64, sigma_mu: f64) -> Result<f64> {
    loglik_collapsed(stats, params, &rate_prior_from_moments(mu_mu, sigma_mu)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HierOptions {
    /// Accept a single period. Only meant for consistency checks against
    /// the single model.
    #[serde(default)]
    pub allow_single_period: bool,
    /// Hold every hyperparameter at its starting value (`μ_η = m_η`,
    /// `σ_η = r_η`).
    #[serde(default)]
    pub freeze_hyperparameters: bool,
}

/// One point of the joint parameter space, on the natural scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierState {
    pub kind: PreferenceKind,
    pub delta_fixed: bool,
    pub theta: Vec<PreferenceParams<f64>>,
    /// `(μ_η, σ_η)` per free preference parameter, in `param_names` order.
    pub phi: Vec<(f64, f64)>,
    pub mu_mu: f64,
    pub sigma_mu: f64,
}

impl HierState {
    pub fn num_periods(&self) -> usize {
        self.theta.len()
    }

    pub fn dimension(&self) -> usize {
        let j = self.kind.param_names(self.delta_fixed).len();
        self.num_periods() * j + 2 * j + 2
    }

    /// Column names: `alpha_s1..alpha_sS, beta_s1.., mu_alpha, sigma_alpha, .., mu_mu, sigma_mu`.
    pub fn names(kind: PreferenceKind, delta_fixed: bool, periods: usize) -> Vec<String> {
        let params = kind.param_names(delta_fixed);
        let mut names: Vec<String> =
            params.iter().flat_map(|p| (1..=periods).map(move |s| format!("{p}_s{s}"))).collect();
        for p in &params {
            names.push(format!("mu_{p}"));
            names.push(format!("sigma_{p}"));
        }
        names.push("mu_mu".into());
        names.push("sigma_mu".into());
        names
    }

    fn from_row(kind: PreferenceKind, delta_fixed: bool, periods: usize, row: &[f64]) -> Self {
        let j = kind.param_names(delta_fixed).len();
        let theta = (0..periods)
            .map(|s| {
                let v: Vec<f64> = (0..j).map(|p| row[p * periods + s]).collect();
                PreferenceParams::from_free_values(kind, delta_fixed, &v)
            })
            .collect();
        let base = j * periods;
        let phi = (0..j).map(|p| (row[base + 2 * p], row[base + 2 * p + 1])).collect();
        Self { kind, delta_fixed, theta, phi, mu_mu: row[base + 2 * j], sigma_mu: row[base + 2 * j + 1] }
    }
}

/// Per-period pieces that do not depend on the parameters.
struct PeriodData<'a> {
    stats: &'a SufficientStats,
    ln_fact: f64,
    total: u64,
}

struct Model<'a> {
    periods: Vec<PeriodData<'a>>,
    kind: PreferenceKind,
    delta_fixed: bool,
    hyper: Vec<Hyperprior>,
    rate_hyper: Hyperprior,
    scale: PriorScale,
}

impl Model<'_> {
    /// Log prior of one per-period coordinate `u = ln θ`, Jacobian included.
    fn ln_prior_u(&self, u: f64, mean: f64, sd: f64) -> f64 {
        match self.scale {
            PriorScale::Natural => ln_normal_pdf(u.exp(), mean, sd) + u,
            PriorScale::Log => ln_normal_pdf(u, mean, sd),
        }
    }

    fn params(&self, u: &[f64]) -> PreferenceParams<f64> {
        let v: Vec<f64> = u.iter().map(|x| x.exp()).collect();
        PreferenceParams::from_free_values(self.kind, self.delta_fixed, &v)
    }

    /// `(log B_s, T_s)`, or `None` when the likelihood vanishes.
    fn pref_terms(&self, s: usize, u: &[f64]) -> Option<(f64, u64)> {
        match preference_terms(self.periods[s].stats, &self.params(u)) {
            Ok(t) if t.log_b.is_finite() => Some((t.log_b, t.steps)),
            _ => None,
        }
    }

    fn rate_term(&self, s: usize, steps: u64, log_mu_mu: f64, log_sigma_mu: f64) -> f64 {
        let (m, sd) = (log_mu_mu.exp(), log_sigma_mu.exp());
        let v = sd * sd;
        let prior = RatePrior { shape: m * m / v, rate: m / v };
        let p = &self.periods[s];
        let r = ln_rate_marginal(&prior, p.total, steps) - p.ln_fact;
        if r.is_nan() {
            f64::NEG_INFINITY
        } else {
            r
        }
    }

    fn ln_rate_hyperprior(&self, log_mu_mu: f64, log_sigma_mu: f64) -> f64 {
        ln_normal_pdf(log_mu_mu.exp(), self.rate_hyper.mean, self.rate_hyper.sd)
            + log_mu_mu
            + half_cauchy_logpdf(log_sigma_mu.exp(), self.rate_hyper.scale)
            + log_sigma_mu
    }
}

/// Mutable sampler state on the unconstrained scale with per-period caches.
struct Chain {
    /// `u[s][j] = ln θ_sj`.
    u: Vec<Vec<f64>>,
    mu: Vec<f64>,
    log_sigma: Vec<f64>,
    log_mu_mu: f64,
    log_sigma_mu: f64,
    log_b: Vec<f64>,
    steps: Vec<u64>,
}

impl Chain {
    fn period_target(&self, m: &Model<'_>, s: usize, u: &[f64], log_b: f64, steps: u64) -> f64 {
        let prior: f64 = u
            .iter()
            .enumerate()
            .map(|(j, &x)| m.ln_prior_u(x, self.mu[j], self.log_sigma[j].exp()))
            .sum();
        log_b + m.rate_term(s, steps, self.log_mu_mu, self.log_sigma_mu) + prior
    }

    /// Log density of everything that involves `(μ_j, σ_j)`, on the `(μ, ln σ)` scale.
    fn phi_target(&self, m: &Model<'_>, j: usize, mu: f64, log_sigma: f64) -> f64 {
        let sd = log_sigma.exp();
        let h = &m.hyper[j];
        let sum: f64 = self.u.iter().map(|u| m.ln_prior_u(u[j], mu, sd)).sum();
        sum + ln_normal_pdf(mu, h.mean, h.sd) + half_cauchy_logpdf(sd, h.scale) + log_sigma
    }

    fn rate_target(&self, m: &Model<'_>, log_mu_mu: f64, log_sigma_mu: f64) -> f64 {
        let sum: f64 = (0..self.u.len()).map(|s| m.rate_term(s, self.steps[s], log_mu_mu, log_sigma_mu)).sum();
        sum + m.ln_rate_hyperprior(log_mu_mu, log_sigma_mu)
    }

    /// Joint log posterior density on the natural scale, up to a constant.
    fn log_posterior(&self, m: &Model<'_>) -> f64 {
        let mut total = 0.0;
        for (s, u) in self.u.iter().enumerate() {
            total += self.period_target(m, s, u, self.log_b[s], self.steps[s]) - u.iter().sum::<f64>();
        }
        for j in 0..self.mu.len() {
            let h = &m.hyper[j];
            total += ln_normal_pdf(self.mu[j], h.mean, h.sd) + half_cauchy_logpdf(self.log_sigma[j].exp(), h.scale);
        }
        total + m.ln_rate_hyperprior(self.log_mu_mu, self.log_sigma_mu) - self.log_mu_mu - self.log_sigma_mu
    }

    fn row(&self) -> Vec<f64> {
        let (s_count, j_count) = (self.u.len(), self.mu.len());
        let mut row = Vec::with_capacity(s_count * j_count + 2 * j_count + 2);
        for j in 0..j_count {
            row.extend(self.u.iter().map(|u| u[j].exp()));
        }
        for j in 0..j_count {
            row.push(self.mu[j]);
            row.push(self.log_sigma[j].exp());
        }
        row.push(self.log_mu_mu.exp());
        row.push(self.log_sigma_mu.exp());
        row
    }
}

/// Fits the hierarchical model to per-period statistics.
///
/// Each sweep updates every per-period block, then each `(μ_η, σ_η)` pair,
/// then `(μ_μ, σ_μ)`. Columns follow [`HierState::names`].
pub fn fit_hier(
    stats: &[SufficientStats],
    kind: PreferenceKind,
    delta_fixed: bool,
    hyper: &HyperConfig,
    chain: &ChainConfig,
    options: HierOptions,
) -> Result<ChainResult> {
    let s_count = stats.len();
    if s_count == 0 || (s_count == 1 && !options.allow_single_period) {
        return Err(Error::SinglePeriod(s_count));
    }
    hyper.validate()?;
    chain.validate()?;
    if let Some((s, _)) = stats.iter().enumerate().find(|(_, st)| st.num_steps() == 0) {
        return Err(Error::InsufficientData(format!("period {} has no informative steps", s + 1)));
    }

    let param_names = kind.param_names(delta_fixed);
    let model = Model {
        periods: stats
            .iter()
            .map(|st| PeriodData { stats: st, ln_fact: ln_response_factorials(st), total: st.total_increment() })
            .collect(),
        kind,
        delta_fixed,
        hyper: param_names.iter().map(|n| *hyper.hyperprior(n).expect("known parameter")).collect(),
        rate_hyper: hyper.mu,
        scale: hyper.scale,
    };
    let j_count = param_names.len();

    let mut state = Chain {
        u: stats
            .iter()
            .map(|st| initial_params(st, kind, delta_fixed).free_values().iter().map(|v| v.ln()).collect())
            .collect(),
        mu: model.hyper.iter().map(|h| h.mean).collect(),
        log_sigma: model.hyper.iter().map(|h| h.scale.ln()).collect(),
        log_mu_mu: hyper.mu.mean.ln(),
        log_sigma_mu: hyper.mu.scale.ln(),
        log_b: vec![0.0; s_count],
        steps: vec![0; s_count],
    };
    for s in 0..s_count {
        let (lb, st) = model
            .pref_terms(s, &state.u[s])
            .ok_or_else(|| Error::Initialization(format!("likelihood of period {} is zero at the start", s + 1)))?;
        state.log_b[s] = lb;
        state.steps[s] = st;
    }
    let start = state.log_posterior(&model);
    if !start.is_finite() {
        return Err(Error::Initialization(format!("joint log posterior is {start} at the start")));
    }

    let names = HierState::names(kind, delta_fixed, s_count);
    let mut walk = RandomWalk::new(names.iter().map(|n| chain.step_for(n)).collect(), chain.adapt);
    let mut rng = ChaCha8Rng::seed_from_u64(chain.seed);
    let mut result = ChainResult::new(names.clone());
    let hyper_base = j_count * s_count;

    for iter in 0..chain.iterations {
        let burn = iter < chain.burn_in;

        for s in 0..s_count {
            let mut u = state.u[s].clone();
            let mut ld = state.period_target(&model, s, &u, state.log_b[s], state.steps[s]);
            for j in 0..j_count {
                let mut cached = None;
                let (value, new_ld) = walk.update(&mut rng, j * s_count + s, u[j], ld, burn, |x| {
                    let mut trial = u.clone();
                    trial[j] = x;
                    match model.pref_terms(s, &trial) {
                        Some((lb, st)) => {
                            cached = Some((x, lb, st));
                            state.period_target(&model, s, &trial, lb, st)
                        }
                        None => f64::NEG_INFINITY,
                    }
                });
                if let Some((x, lb, st)) = cached.filter(|&(x, _, _)| x == value && value != u[j]) {
                    u[j] = x;
                    state.log_b[s] = lb;
                    state.steps[s] = st;
                }
                ld = new_ld;
            }
            state.u[s] = u;
        }

        if !options.freeze_hyperparameters {
            for j in 0..j_count {
                let ld = state.phi_target(&model, j, state.mu[j], state.log_sigma[j]);
                let ls = state.log_sigma[j];
                let (mu, ld) = walk.update(&mut rng, hyper_base + 2 * j, state.mu[j], ld, burn, |x| {
                    state.phi_target(&model, j, x, ls)
                });
                state.mu[j] = mu;
                let (ls, _) = walk.update(&mut rng, hyper_base + 2 * j + 1, ls, ld, burn, |x| {
                    state.phi_target(&model, j, mu, x)
                });
                state.log_sigma[j] = ls;
            }
            let (lm, lsd) = (state.log_mu_mu, state.log_sigma_mu);
            let ld = state.rate_target(&model, lm, lsd);
            let (lm, ld) = walk.update(&mut rng, hyper_base + 2 * j_count, lm, ld, burn, |x| {
                state.rate_target(&model, x, lsd)
            });
            state.log_mu_mu = lm;
            let (lsd, _) =
                walk.update(&mut rng, hyper_base + 2 * j_count + 1, lsd, ld, burn, |x| state.rate_target(&model, lm, x));
            state.log_sigma_mu = lsd;
        }

        if iter + 1 == chain.burn_in {
            for i in walk.stuck_in_burn_in() {
                let msg = format!("no proposal for {} was accepted during burn-in", names[i]);
                log::warn!("{msg}");
                result.warnings.push(msg);
            }
        }
        if chain.records(iter) {
            result.samples.push(state.row());
            result.log_posterior.push(state.log_posterior(&model));
        }
    }

    let rates = walk.acceptance_rates();
    for (i, n) in names.iter().enumerate() {
        if options.freeze_hyperparameters && i >= hyper_base {
            continue;
        }
        result.acceptance.insert(n.clone(), rates[i]);
        result.final_scales.insert(n.clone(), walk.scales()[i]);
    }
    result.finalize();
    Ok(result)
}

/// Reads draw `i` of a hierarchical chain back into a [`HierState`].
pub fn state_at(result: &ChainResult, kind: PreferenceKind, delta_fixed: bool, i: usize) -> Option<HierState> {
    let j = kind.param_names(delta_fixed).len();
    let periods = result.names.len().checked_sub(2 * j + 2)? / j;
    result.samples.get(i).map(|row| HierState::from_row(kind, delta_fixed, periods, row))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::Category;

    fn stats(text: &str) -> SufficientStats {
        SufficientStats::read_csv(text.as_bytes(), Category::External, None).unwrap()
    }

    #[test]
    fn names_and_dimension() {
        let names = HierState::names(PreferenceKind::Piecewise, false, 3);
        assert_eq!(names.len(), 4 * 3 + 10);
        assert_eq!(names[0], "alpha_s1");
        assert_eq!(names[3], "beta_s1");
        assert_eq!(&names[12..14], ["mu_alpha", "sigma_alpha"]);
        assert_eq!(names.last().unwrap(), "sigma_mu");
        assert_eq!(HierState::names(PreferenceKind::Power, false, 5).len(), 2 * 5 + 6);

        let row: Vec<f64> = (0..names.len()).map(|i| i as f64 + 1.0).collect();
        let mut c = ChainResult::new(names);
        c.samples.push(row);
        let st = state_at(&c, PreferenceKind::Piecewise, false, 0).unwrap();
        assert_eq!(st.dimension(), 22);
        assert_eq!(st.theta[1].alpha, 2.0);
        assert_eq!(st.theta[1].beta, 5.0);
        assert_eq!(st.phi[0], (13.0, 14.0));
        assert_eq!((st.mu_mu, st.sigma_mu), (21.0, 22.0));
    }

    #[test]
    fn period_likelihood_reduces() {
        // A = 0 with b = 1: the rate factor is −a·ln(1 + T).
        let st = stats("t,k,y,count\n1,1,-1,2\n2,1,-1,2\n3,2,-1,1\n");
        let p = PreferenceParams::power(1.0, 1.0).unwrap();
        let sigma: f64 = 1.7;
        let mu_mu = sigma * sigma;
        let a = mu_mu * mu_mu / (sigma * sigma);
        let value = loglik_period(&st, &p, mu_mu, sigma).unwrap();
        assert!((value - (-a * 4f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn single_period_matches_collapsed() {
        let st = stats("t,k,y,count\n1,1,-1,3\n1,3,-1,1\n1,3,2,1\n2,1,-1,2\n2,1,1,1\n");
        let p = PreferenceParams::piecewise(1.2, 0.7, 2.0, 0.5).unwrap();
        let direct = loglik_collapsed(&st, &p, &RatePrior::new(1.0, 0.01).unwrap()).unwrap();
        assert_eq!(loglik_period(&st, &p, 100.0, 100.0).unwrap(), direct);
        assert!(loglik_period(&st, &p, 0.0, 1.0).is_err());
    }

    #[test]
    fn single_period_needs_opt_in() {
        let st = stats("t,k,y,count\n1,1,-1,3\n1,1,1,1\n");
        let hyper = HyperConfig::defaults_for(&st, PriorScale::Natural);
        let chain = ChainConfig::with_draws(10, 1, 10, 3);
        let err = fit_hier(std::slice::from_ref(&st), PreferenceKind::Power, false, &hyper, &chain, HierOptions::default());
        assert!(matches!(err, Err(Error::SinglePeriod(1))));
        let opts = HierOptions { allow_single_period: true, ..Default::default() };
        let res = fit_hier(std::slice::from_ref(&st), PreferenceKind::Power, false, &hyper, &chain, opts).unwrap();
        assert_eq!(res.len(), 10);
        assert!(res.log_posterior.iter().all(|v| v.is_finite()));
    }
}
