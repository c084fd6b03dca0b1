//! Prior and hyperprior constants shared by the single and hierarchical models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::RatePrior;
use crate::store::SufficientStats;

/// Independent normal priors on the log of each preference parameter, plus
/// the Gamma prior on the rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinglePriors {
    pub log_mean: f64,
    pub log_sd: f64,
    pub rate_shape: f64,
    pub rate_rate: f64,
}

impl Default for SinglePriors {
    fn default() -> Self {
        Self { log_mean: 0.0, log_sd: 10.0, rate_shape: 1.0, rate_rate: 0.01 }
    }
}

impl SinglePriors {
    pub fn rate_prior(&self) -> Result<RatePrior<f64>> {
        RatePrior::new(self.rate_shape, self.rate_rate)
    }

    /// Log density of one parameter on the log scale.
    pub fn ln_density_log_scale(&self, u: f64) -> f64 {
        ln_normal_pdf(u, self.log_mean, self.log_sd)
    }
}

/// Normal hyperprior `N(mean, sd²)` on a mean hyperparameter and half-Cauchy
/// with `scale` on the matching standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperprior {
    pub mean: f64,
    pub sd: f64,
    pub scale: f64,
}

impl Hyperprior {
    pub fn new(mean: f64, sd: f64, scale: f64) -> Self {
        Self { mean, sd, scale }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.mean.is_finite() && self.sd > 0.0 && self.scale > 0.0 && self.sd.is_finite() && self.scale.is_finite())
        {
            return Err(Error::InvalidConfig(format!("hyperprior for {name} needs finite mean and sd, scale > 0")));
        }
        Ok(())
    }
}

/// Scale on which the per-period parameters receive their normal prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorScale {
    /// Normal on the parameter itself, truncated to positive values.
    #[default]
    Natural,
    /// Normal on the logarithm of the parameter.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    #[serde(default)]
    pub single: SinglePriors,
    pub alpha: Hyperprior,
    pub beta: Hyperprior,
    pub gamma: Hyperprior,
    pub delta: Hyperprior,
    /// Hyperprior for the rate mean `μ_μ` and sd `σ_μ`.
    pub mu: Hyperprior,
    #[serde(default)]
    pub scale: PriorScale,
}

impl HyperConfig {
    /// Weakly informative defaults: means 1 for α, β, δ, the median positive
    /// degree for γ, the mean increment per step for the rate; sd 10; scale 5.
    pub fn defaults_for(stats: &SufficientStats, scale: PriorScale) -> Self {
        let median = stats.positive_degree_quantile(0.5).unwrap_or(1.0);
        let mean_rate = if stats.num_steps() > 0 {
            (stats.total_increment() as f64 / stats.num_steps() as f64).max(1e-3)
        } else {
            1.0
        };
        let centre = |v: f64| match scale {
            PriorScale::Natural => v,
            PriorScale::Log => v.ln(),
        };
        Self {
            single: SinglePriors::default(),
            alpha: Hyperprior::new(centre(1.0), 10.0, 5.0),
            beta: Hyperprior::new(centre(1.0), 10.0, 5.0),
            gamma: Hyperprior::new(centre(median), 10.0, 5.0),
            delta: Hyperprior::new(centre(1.0), 10.0, 5.0),
            mu: Hyperprior::new(mean_rate, 10.0, 5.0),
            scale,
        }
    }

    pub fn hyperprior(&self, name: &str) -> Option<&Hyperprior> {
        match name {
            "alpha" => Some(&self.alpha),
            "beta" => Some(&self.beta),
            "gamma" => Some(&self.gamma),
            "delta" => Some(&self.delta),
            "mu" => Some(&self.mu),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for name in ["alpha", "beta", "gamma", "delta", "mu"] {
            self.hyperprior(name).expect("known name").validate(name)?;
        }
        if self.mu.mean <= 0.0 {
            return Err(Error::InvalidConfig("the rate hyperprior mean must be positive".into()));
        }
        if !(self.single.log_sd > 0.0 && self.single.log_mean.is_finite()) {
            return Err(Error::InvalidConfig("single-model prior needs log_sd > 0".into()));
        }
        self.single.rate_prior()?;
        Ok(())
    }
}

pub fn ln_normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Log density of the half-Cauchy distribution with the given scale;
/// `-∞` for `sigma ≤ 0`.
pub fn half_cauchy_logpdf(sigma: f64, scale: f64) -> f64 {
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let z = sigma / scale;
    (2.0 / (std::f64::consts::PI * scale)).ln() - z.mul_add(z, 1.0).ln()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    #[test]
    fn half_cauchy_closed_forms() {
        for r in [0.1, 1.0, 5.0] {
            assert!((half_cauchy_logpdf(r, r) - (1.0 / (PI * r)).ln()).abs() < 1e-14);
            assert!((half_cauchy_logpdf(1e-300, r) - (2.0 / (PI * r)).ln()).abs() < 1e-14);
        }
        assert_eq!(half_cauchy_logpdf(0.0, 1.0), f64::NEG_INFINITY);
        assert_eq!(half_cauchy_logpdf(-1.0, 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn normal_density() {
        assert!((ln_normal_pdf(0.0, 0.0, 1.0) + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        assert!((ln_normal_pdf(3.0, 1.0, 2.0) - (-0.5 - 2f64.ln() - 0.5 * (2.0 * PI).ln())).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        let stats = crate::store::SufficientStats::read_csv(
            "t,k,y,count\n1,2,-1,3\n1,2,1,1\n".as_bytes(),
            crate::store::Category::External,
            None,
        )
        .unwrap();
        let mut cfg = HyperConfig::defaults_for(&stats, PriorScale::Natural);
        assert_eq!(cfg.gamma.mean, 2.0);
        assert_eq!(cfg.mu.mean, 1.0);
        cfg.validate().unwrap();
        cfg.alpha.scale = 0.0;
        assert!(cfg.validate().is_err());
        let log = HyperConfig::defaults_for(&stats, PriorScale::Log);
        assert!((log.gamma.mean - 2f64.ln()).abs() < 1e-15);
    }
}
