//! Carlin–Chib selection between the power (r = 0) and piecewise (r = 1)
//! preference functions.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{ess, fit_single, initial_params, ChainConfig, ChainResult, RandomWalk, SingleModel};
use crate::preference::PreferenceKind;
use crate::priors::{HyperConfig, SinglePriors};
use crate::store::SufficientStats;

const MIN_PILOT_DRAWS: usize = 100;
const P_FLOOR: f64 = 1e-10;

/// Multivariate normal on the log scale of some preference parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianParts", into = "GaussianParts")]
pub struct LogNormal {
    names: Vec<String>,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    chol: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GaussianParts {
    names: Vec<String>,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl TryFrom<GaussianParts> for LogNormal {
    type Error = Error;

    fn try_from(s: GaussianParts) -> Result<Self> {
        LogNormal::new(s.names, s.mean, s.cov)
    }
}

impl From<LogNormal> for GaussianParts {
    fn from(g: LogNormal) -> Self {
        GaussianParts { names: g.names, mean: g.mean, cov: g.cov }
    }
}

/// Lower Cholesky factor; `None` unless `a` is numerically positive definite.
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 1e-24 * a[i][i].abs().max(1.0)) || !d.is_finite() {
                    return None;
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

impl LogNormal {
    pub fn new(names: Vec<String>, mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let n = names.len();
        if mean.len() != n || cov.len() != n || cov.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidConfig("pseudoprior dimensions disagree".into()));
        }
        if mean.iter().chain(cov.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("pseudoprior has non-finite entries".into()));
        }
        let chol = cholesky(&cov)
            .ok_or_else(|| Error::InvalidConfig("pseudoprior covariance is not positive definite".into()))?;
        Ok(Self { names, mean, cov, chol })
    }

    /// Independent components with the given means and sds.
    pub fn independent(names: &[&str], mean: &[f64], sd: &[f64]) -> Result<Self> {
        let n = names.len();
        let cov = (0..n).map(|i| (0..n).map(|j| if i == j { sd[i] * sd[i] } else { 0.0 }).collect()).collect();
        Self::new(names.iter().map(|s| s.to_string()).collect(), mean.to_vec(), cov)
    }

    /// Sample mean and covariance of the logs of `draws` (rows in `names` order).
    pub fn from_draws(names: &[&str], draws: &[Vec<f64>]) -> Result<Self> {
        let n = draws.len() as f64;
        let d = names.len();
        let logs: Vec<Vec<f64>> = draws.iter().map(|r| r.iter().map(|v| v.ln()).collect()).collect();
        let mean: Vec<f64> = (0..d).map(|j| logs.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let cov = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| logs.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1.0))
                    .collect()
            })
            .collect();
        Self::new(names.iter().map(|s| s.to_string()).collect(), mean, cov)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sd(&self, i: usize) -> f64 {
        self.cov[i][i].sqrt()
    }

    /// Marginal over the named components.
    pub fn marginal(&self, names: &[&str]) -> Result<Self> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.names
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| Error::InvalidConfig(format!("pseudoprior has no component {n}")))
            })
            .collect::<Result<_>>()?;
        let mean = idx.iter().map(|&i| self.mean[i]).collect();
        let cov = idx.iter().map(|&i| idx.iter().map(|&j| self.cov[i][j]).collect()).collect();
        Self::new(names.iter().map(|s| s.to_string()).collect(), mean, cov)
    }

    pub fn ln_density(&self, u: &[f64]) -> f64 {
        let n = self.mean.len();
        let mut z = vec![0.0; n];
        for i in 0..n {
            let s: f64 = (0..i).map(|k| self.chol[i][k] * z[k]).sum();
            z[i] = (u[i] - self.mean[i] - s) / self.chol[i][i];
        }
        let log_det: f64 = (0..n).map(|i| self.chol[i][i].ln()).sum();
        -0.5 * z.iter().map(|v| v * v).sum::<f64>() - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.mean.len()).map(|_| rng.sample(StandardNormal)).collect();
        (0..z.len()).map(|i| self.mean[i] + (0..=i).map(|k| self.chol[i][k] * z[k]).sum::<f64>()).collect()
    }
}

/// How the two models share parameters inside the selection chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linking {
    /// Each model keeps its own parameter vector; the idle model's vector is
    /// drawn from its pseudoprior.
    #[default]
    Separate,
    /// α and δ are common to both models; only (β, γ) has a pseudoprior.
    Shared,
}

impl std::str::FromStr for Linking {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "separate" => Ok(Linking::Separate),
            "shared" => Ok(Linking::Shared),
            other => Err(Error::InvalidConfig(format!("unknown linking {other:?} (expected separate or shared)"))),
        }
    }
}

/// Pseudopriors for the parameters of the model the chain is not in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pseudoprior {
    /// Used while r = 1; unused under [`Linking::Shared`].
    pub power: LogNormal,
    /// Used while r = 0; only its (β, γ) marginal under [`Linking::Shared`].
    pub piecewise: LogNormal,
    /// False when any part fell back to the prior.
    #[serde(default)]
    pub tuned: bool,
}

impl Pseudoprior {
    pub fn from_prior(priors: &SinglePriors, delta_fixed: bool) -> Self {
        Self {
            power: prior_as_pseudoprior(priors, PreferenceKind::Power, delta_fixed),
            piecewise: prior_as_pseudoprior(priors, PreferenceKind::Piecewise, delta_fixed),
            tuned: false,
        }
    }
}

fn prior_as_pseudoprior(priors: &SinglePriors, kind: PreferenceKind, delta_fixed: bool) -> LogNormal {
    let names = kind.param_names(delta_fixed);
    let n = names.len();
    LogNormal::independent(&names, &vec![priors.log_mean; n], &vec![priors.log_sd; n]).expect("valid prior")
}

/// Moment-matched normal on the log scale of every preference parameter of
/// a pilot chain.
///
/// Falls back to the prior (with a warning) when the pilot covariance is
/// degenerate; the second value reports whether tuning succeeded.
pub fn tune_pseudoprior(pilot: &ChainResult, priors: &SinglePriors) -> Result<(LogNormal, bool)> {
    if pilot.len() < MIN_PILOT_DRAWS {
        return Err(Error::InsufficientData(format!(
            "pilot has {} draws; at least {MIN_PILOT_DRAWS} are needed to tune the pseudoprior",
            pilot.len()
        )));
    }
    let names: Vec<&str> = pilot.names.iter().map(String::as_str).filter(|n| *n != "mu").collect();
    let idx: Vec<usize> = names.iter().map(|n| pilot.names.iter().position(|m| m == n).expect("present")).collect();
    let rows: Vec<Vec<f64>> = pilot.samples.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect();
    match LogNormal::from_draws(&names, &rows) {
        Ok(g) => Ok((g, true)),
        Err(_) => {
            log::warn!("pilot covariance is degenerate; using the prior as pseudoprior");
            let n = names.len();
            Ok((LogNormal::independent(&names, &vec![priors.log_mean; n], &vec![priors.log_sd; n])?, false))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Prior probability of the piecewise function.
    pub p: f64,
    pub pseudoprior: Pseudoprior,
    pub chain: ChainConfig,
    #[serde(default)]
    pub delta_fixed: bool,
    #[serde(default)]
    pub linking: Linking,
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidConfig(format!("p must lie in (0, 1), got {}", self.p)));
        }
        for (kind, g) in [(PreferenceKind::Power, &self.pseudoprior.power), (PreferenceKind::Piecewise, &self.pseudoprior.piecewise)] {
            if g.names() != kind.param_names(self.delta_fixed) {
                return Err(Error::InvalidConfig(format!(
                    "{kind} pseudoprior covers {:?}, expected {:?}",
                    g.names(),
                    kind.param_names(self.delta_fixed)
                )));
            }
        }
        self.chain.validate()
    }
}

/// Estimated B₁₀, or a bound when every draw of r took the same value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum BayesFactor {
    Estimate(f64),
    GreaterThan(f64),
    LessThan(f64),
}

impl BayesFactor {
    /// Point estimate or the bound itself.
    pub fn value(&self) -> f64 {
        match *self {
            BayesFactor::Estimate(v) | BayesFactor::GreaterThan(v) | BayesFactor::LessThan(v) => v,
        }
    }

    pub fn bound_flag(&self) -> &'static str {
        match self {
            BayesFactor::Estimate(_) => "none",
            BayesFactor::GreaterThan(_) => "greater_than",
            BayesFactor::LessThan(_) => "less_than",
        }
    }

    /// Converts a posterior probability of r = 1 from `n` draws under prior
    /// probability `p`.
    pub fn from_proportion(prob_r1: f64, n: usize, p: f64) -> Self {
        let prior_odds = (1.0 - p) / p;
        let n1 = n.saturating_sub(1).max(1) as f64;
        if prob_r1 >= 1.0 {
            BayesFactor::GreaterThan(n1 * prior_odds)
        } else if prob_r1 <= 0.0 {
            BayesFactor::LessThan(prior_odds / n1)
        } else {
            BayesFactor::Estimate(prob_r1 / (1.0 - prob_r1) * prior_odds)
        }
    }
}

impl std::fmt::Display for BayesFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BayesFactor::Estimate(v) => write!(f, "{v}"),
            BayesFactor::GreaterThan(v) => write!(f, "greater than {v}"),
            BayesFactor::LessThan(v) => write!(f, "less than {v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub r_trace: Vec<u8>,
    pub posterior_prob_r1: f64,
    pub bayes_factor: BayesFactor,
    /// 95% Monte Carlo interval for B₁₀ from the ESS of the r trace; `None`
    /// when the trace is constant. An infinite upper end is stored as `None`.
    pub mc_interval: Option<(f64, Option<f64>)>,
    pub r_ess: Option<f64>,
    pub p: f64,
    pub pseudoprior: Pseudoprior,
    /// Draws recorded while r = 0.
    pub power: ChainResult,
    /// Draws recorded while r = 1.
    pub piecewise: ChainResult,
    pub warnings: Vec<String>,
}

impl SelectionResult {
    pub fn posterior_prob_r0(&self) -> f64 {
        1.0 - self.posterior_prob_r1
    }
}

fn odds_to_bf(prob: f64, p: f64) -> Option<f64> {
    if prob >= 1.0 {
        None
    } else {
        Some(prob / (1.0 - prob) * (1.0 - p) / p)
    }
}

/// Runs the Carlin–Chib chain with a fixed prior probability and pseudoprior.
pub fn select(stats: &SufficientStats, cfg: &SelectionConfig, hyper: &HyperConfig) -> Result<SelectionResult> {
    cfg.validate()?;
    let df = cfg.delta_fixed;
    let m0 = SingleModel::new(stats, PreferenceKind::Power, df, &hyper.single)?;
    let m1 = SingleModel::new(stats, PreferenceKind::Piecewise, df, &hyper.single)?;
    let chain = &cfg.chain;
    let shared = cfg.linking == Linking::Shared;
    let shape_pseudo = cfg.pseudoprior.piecewise.marginal(&["beta", "gamma"])?;

    // Log-scale parameter vectors of both models. Under shared linking the
    // power vector mirrors α (and δ) of the piecewise one.
    let mut u1: Vec<f64> = initial_params(stats, PreferenceKind::Piecewise, df).free_values().iter().map(|v| v.ln()).collect();
    let mut u0: Vec<f64> = initial_params(stats, PreferenceKind::Power, df).free_values().iter().map(|v| v.ln()).collect();
    let sync_to_power = |u1: &[f64], u0: &mut Vec<f64>| {
        u0[0] = u1[0];
        if !df {
            u0[1] = u1[3];
        }
    };
    let sync_to_piecewise = |u0: &[f64], u1: &mut Vec<f64>| {
        u1[0] = u0[0];
        if !df {
            u1[3] = u0[1];
        }
    };
    if shared {
        sync_to_power(&u1, &mut u0);
    }

    let ln_p = cfg.p.ln();
    let ln_q = (-cfg.p).ln_1p();
    let mut rng = ChaCha8Rng::seed_from_u64(chain.seed);

    let l1 = m1.log_target(&u1);
    let l0 = m0.log_target(&u0);
    if !(l1.is_finite() || l0.is_finite()) {
        return Err(Error::Initialization("log posterior is -inf under both preference functions".into()));
    }
    let mut r: u8 = if l1.is_finite() { 1 } else { 0 };

    let names0 = m0.names();
    let names1 = m1.names();
    let mut walk0 = RandomWalk::new(names0.iter().map(|n| chain.step_for(n)).collect(), chain.adapt);
    let mut walk1 = RandomWalk::new(names1.iter().map(|n| chain.step_for(n)).collect(), chain.adapt);
    let with_mu = |names: &[&str]| {
        let mut v: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        v.push("mu".into());
        v
    };
    let mut power = ChainResult::new(with_mu(&names0));
    let mut piecewise = ChainResult::new(with_mu(&names1));
    let mut r_trace = Vec::with_capacity(chain.recorded());
    let mut warnings = Vec::new();
    let mut ld0 = l0;
    let mut ld1 = l1;

    for iter in 0..chain.iterations {
        let burn = iter < chain.burn_in;
        // Update the current model's parameters, then refresh the idle model's
        // parameters from their pseudoprior.
        if r == 1 {
            m1.sweep(&mut rng, &mut walk1, &mut u1, &mut ld1, burn);
            if shared {
                sync_to_power(&u1, &mut u0);
            } else {
                u0 = cfg.pseudoprior.power.sample(&mut rng);
            }
            ld0 = m0.log_target(&u0);
        } else {
            m0.sweep(&mut rng, &mut walk0, &mut u0, &mut ld0, burn);
            if shared {
                sync_to_piecewise(&u0, &mut u1);
                let bg = shape_pseudo.sample(&mut rng);
                (u1[1], u1[2]) = (bg[0], bg[1]);
            } else {
                u1 = cfg.pseudoprior.piecewise.sample(&mut rng);
            }
            ld1 = m1.log_target(&u1);
        }

        // Model indicator given both parameter vectors.
        let (lp0, lp1) = if shared {
            (ld0 + shape_pseudo.ln_density(&u1[1..3]) + ln_q, ld1 + ln_p)
        } else {
            (
                ld0 + cfg.pseudoprior.piecewise.ln_density(&u1) + ln_q,
                ld1 + cfg.pseudoprior.power.ln_density(&u0) + ln_p,
            )
        };
        let prob0 = if lp0 == f64::NEG_INFINITY && lp1 == f64::NEG_INFINITY {
            if r == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            let m = lp0.max(lp1);
            let (e0, e1) = ((lp0 - m).exp(), (lp1 - m).exp());
            e0 / (e0 + e1)
        };
        r = if rng.gen::<f64>() < prob0 { 0 } else { 1 };

        if iter + 1 == chain.burn_in {
            for (walk, names) in [(&walk0, &names0), (&walk1, &names1)] {
                for i in walk.stuck_in_burn_in() {
                    let msg = format!("no proposal for {} was accepted during burn-in", names[i]);
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
            }
        }

        if chain.records(iter) {
            r_trace.push(r);
            let (model, u, ld, out) =
                if r == 1 { (&m1, &u1, ld1, &mut piecewise) } else { (&m0, &u0, ld0, &mut power) };
            let params = model.params(u);
            let mut row = params.free_values();
            row.push(model.draw_rate(&mut rng, &params));
            out.samples.push(row);
            out.log_posterior.push(ld - u.iter().sum::<f64>());
        }
    }

    for (walk, names, out) in [(&walk0, &names0, &mut power), (&walk1, &names1, &mut piecewise)] {
        for (i, n) in names.iter().enumerate() {
            out.acceptance.insert(n.to_string(), walk.acceptance_rates()[i]);
            out.final_scales.insert(n.to_string(), walk.scales()[i]);
        }
        out.finalize();
    }

    let n = r_trace.len();
    let prob1 = r_trace.iter().map(|&r| r as f64).sum::<f64>() / n as f64;
    let bayes_factor = BayesFactor::from_proportion(prob1, n, cfg.p);
    let trace: Vec<f64> = r_trace.iter().map(|&r| r as f64).collect();
    let r_ess = ess(&trace).ok();
    let mc_interval = r_ess.map(|e| {
        let se = (prob1 * (1.0 - prob1) / e).sqrt();
        let lo = (prob1 - 1.96 * se).max(0.0);
        let hi = (prob1 + 1.96 * se).min(1.0);
        (odds_to_bf(lo, cfg.p).unwrap_or(f64::INFINITY), odds_to_bf(hi, cfg.p))
    });

    Ok(SelectionResult {
        r_trace,
        posterior_prob_r1: prob1,
        bayes_factor,
        mc_interval,
        r_ess,
        p: cfg.p,
        pseudoprior: cfg.pseudoprior.clone(),
        power,
        piecewise,
        warnings,
    })
}

/// Pilots, pseudoprior tuning, optional prior-probability retuning and the
/// final selection chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPlan {
    /// Starting prior probability of the piecewise function.
    pub p: f64,
    /// Move `p` towards `1 / (1 + B̂)` while short runs see one model only.
    pub auto_p: bool,
    pub max_p_rounds: usize,
    pub delta_fixed: bool,
    pub linking: Linking,
    /// Settings of both pilot fits; the power pilot uses `seed + 1`.
    pub pilot: ChainConfig,
    /// Chain used for each `p` retuning round.
    pub tuning: ChainConfig,
    pub chain: ChainConfig,
}

impl SelectionPlan {
    /// Pilot and tuning chains of `pilot_draws` draws with seeds derived from
    /// the final chain's seed.
    pub fn new(p: f64, auto_p: bool, delta_fixed: bool, pilot_draws: usize, chain: ChainConfig) -> Self {
        let reduced = |offset: u64| ChainConfig {
            seed: chain.seed.wrapping_add(offset),
            step_scales: chain.step_scales.clone(),
            adapt: chain.adapt,
            ..ChainConfig::with_draws(chain.burn_in, chain.thin, pilot_draws, 0)
        };
        Self {
            p,
            auto_p,
            max_p_rounds: 8,
            delta_fixed,
            linking: Linking::default(),
            pilot: reduced(1),
            tuning: reduced(3),
            chain,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRun {
    pub result: SelectionResult,
    pub pilot_piecewise: ChainResult,
    pub pilot_power: ChainResult,
    /// Values of `p` tried before the final chain, in order.
    pub p_history: Vec<f64>,
}

/// Fits both pilots and moment-matches the pseudopriors to them.
pub fn tuned_pseudoprior(
    stats: &SufficientStats,
    plan: &SelectionPlan,
    hyper: &HyperConfig,
) -> Result<(Pseudoprior, ChainResult, ChainResult)> {
    let pilot1 = fit_single(stats, PreferenceKind::Piecewise, plan.delta_fixed, hyper, &plan.pilot)?;
    let power_chain = ChainConfig { seed: plan.pilot.seed.wrapping_add(1), ..plan.pilot.clone() };
    let pilot0 = fit_single(stats, PreferenceKind::Power, plan.delta_fixed, hyper, &power_chain)?;
    let (piecewise, ok1) = tune_pseudoprior(&pilot1, &hyper.single)?;
    let (power, ok0) = tune_pseudoprior(&pilot0, &hyper.single)?;
    Ok((Pseudoprior { power, piecewise, tuned: ok0 && ok1 }, pilot1, pilot0))
}

pub fn run_selection(stats: &SufficientStats, plan: &SelectionPlan, hyper: &HyperConfig) -> Result<SelectionRun> {
    let (pseudoprior, pilot_piecewise, pilot_power) = tuned_pseudoprior(stats, plan, hyper)?;
    let config = |p: f64, chain: ChainConfig| SelectionConfig {
        p,
        pseudoprior: pseudoprior.clone(),
        chain,
        delta_fixed: plan.delta_fixed,
        linking: plan.linking,
    };
    let mut p = plan.p;
    let mut p_history = vec![p];
    if plan.auto_p {
        for round in 0..plan.max_p_rounds {
            let mut tuning = plan.tuning.clone();
            tuning.seed = tuning.seed.wrapping_add(round as u64);
            let short = select(stats, &config(p, tuning), hyper)?;
            if (0.1..=0.9).contains(&short.posterior_prob_r1) {
                break;
            }
            let next = (1.0 / (1.0 + short.bayes_factor.value())).clamp(P_FLOOR, 1.0 - P_FLOOR);
            if next == p {
                break;
            }
            p = next;
            p_history.push(p);
        }
    }
    let mut result = select(stats, &config(p, plan.chain.clone()), hyper)?;
    if !pseudoprior.tuned {
        result.warnings.push("pilot covariance was degenerate; the prior served as pseudoprior".into());
    }
    Ok(SelectionRun { result, pilot_piecewise, pilot_power, p_history })
}
