//! Run configuration read from TOML and the fully resolved form that is
//! written next to every output and hashed into its summary.

use std::collections::BTreeMap;
use std::path::Path;

use prefattach::mcmc::ChainConfig;
use prefattach::priors::{HyperConfig, Hyperprior, PriorScale, SinglePriors};
use prefattach::selection::Linking;
use prefattach::store::SufficientStats;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub draws: Option<usize>,
    pub adapt: Option<bool>,
    pub step_scales: BTreeMap<String, f64>,
}

impl ChainSection {
    pub fn resolve(&self, default: ChainConfig, seed: u64) -> ChainConfig {
        let burn_in = self.burn_in.unwrap_or(default.burn_in);
        let thin = self.thin.unwrap_or(default.thin);
        let draws = self.draws.unwrap_or(default.recorded());
        ChainConfig {
            step_scales: self.step_scales.clone(),
            adapt: self.adapt.unwrap_or(default.adapt),
            ..ChainConfig::with_draws(burn_in, thin, draws, seed)
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperSection {
    pub scale: Option<PriorScale>,
    pub alpha: Option<Hyperprior>,
    pub beta: Option<Hyperprior>,
    pub gamma: Option<Hyperprior>,
    pub delta: Option<Hyperprior>,
    pub mu: Option<Hyperprior>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSection {
    pub p: Option<f64>,
    pub auto_p: Option<bool>,
    pub pilot_draws: Option<usize>,
    pub linking: Option<Linking>,
}

/// Everything a config file may set; command-line flags take precedence.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub delta_fixed: Option<bool>,
    pub periods: Option<String>,
    pub chain: ChainSection,
    pub hier_chain: ChainSection,
    pub priors: SinglePriors,
    pub hyper: HyperSection,
    pub selection: SelectionSection,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn hyper_for(&self, stats: &SufficientStats) -> HyperConfig {
        let h = &self.hyper;
        let mut cfg = HyperConfig::defaults_for(stats, h.scale.unwrap_or_default());
        cfg.single = self.priors;
        for (slot, over) in [
            (&mut cfg.alpha, h.alpha),
            (&mut cfg.beta, h.beta),
            (&mut cfg.gamma, h.gamma),
            (&mut cfg.delta, h.delta),
            (&mut cfg.mu, h.mu),
        ] {
            if let Some(v) = over {
                *slot = v;
            }
        }
        cfg
    }
}

/// Hex SHA-256 of the resolved configuration text.
pub fn config_hash(text: &str) -> String {
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let cfg: RunConfig = toml::from_str(
            r#"
            seed = 7
            [chain]
            burn_in = 10
            draws = 20
            step_scales = { alpha = 0.05 }
            [hyper]
            scale = "log"
            [hyper.alpha]
            mean = 0.0
            sd = 2.0
            scale = 1.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        let chain = cfg.chain.resolve(ChainConfig::single_default(0), 3);
        assert_eq!((chain.burn_in, chain.thin, chain.recorded(), chain.seed), (10, 10, 20, 3));
        assert_eq!(chain.step_for("alpha"), 0.05);
        assert_eq!(cfg.hyper.scale, Some(PriorScale::Log));
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(config_hash("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
