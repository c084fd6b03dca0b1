//! Chain configuration, results and the random-walk Metropolis machinery.

mod ess;
mod rwm;
mod single;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use ess::ess;
pub use rwm::{RandomWalk, TARGET_ACCEPTANCE};
pub use single::{fit_single, initial_params, SingleModel};

use crate::error::{Error, Result};

/// Default proposal sd on the log scale.
pub const DEFAULT_STEP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Total iterations, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Proposal sd per parameter name on the unconstrained scale; missing
    /// names use [`DEFAULT_STEP`].
    #[serde(default)]
    pub step_scales: BTreeMap<String, f64>,
    pub seed: u64,
    #[serde(default = "yes")]
    pub adapt: bool,
}

fn yes() -> bool {
    true
}

impl ChainConfig {
    /// `burn_in` discarded iterations followed by `draws` recorded every `thin`.
    pub fn with_draws(burn_in: usize, thin: usize, draws: usize, seed: u64) -> Self {
        Self { iterations: burn_in + thin * draws, burn_in, thin, step_scales: BTreeMap::new(), seed, adapt: true }
    }

    /// Burn-in 1000, thinning 10, 10000 recorded draws.
    pub fn single_default(seed: u64) -> Self {
        Self::with_draws(1000, 10, 10_000, seed)
    }

    /// Burn-in 10000, thinning 20, 10000 recorded draws.
    pub fn hierarchical_default(seed: u64) -> Self {
        Self::with_draws(10_000, 20, 10_000, seed)
    }

    pub fn recorded(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.thin == 0 || self.burn_in >= self.iterations {
            return Err(Error::InvalidConfig(format!(
                "chain needs iterations > burn_in and thin >= 1 (iterations {}, burn_in {}, thin {})",
                self.iterations, self.burn_in, self.thin
            )));
        }
        if let Some((name, s)) = self.step_scales.iter().find(|(_, &s)| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidConfig(format!("step scale for {name} must be positive, got {s}")));
        }
        Ok(())
    }

    pub fn step_for(&self, name: &str) -> f64 {
        self.step_scales.get(name).copied().unwrap_or(DEFAULT_STEP)
    }

    /// Whether iteration `iter` (0-based) is kept.
    pub fn records(&self, iter: usize) -> bool {
        iter >= self.burn_in && (iter + 1 - self.burn_in) % self.thin == 0
    }
}

/// Posterior summary of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    /// `None` when the trace is constant.
    pub ess: Option<f64>,
}

impl ParamSummary {
    pub fn of(draws: &[f64]) -> Self {
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = if draws.len() > 1 {
            (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean,
            sd,
            q025: quantile(&sorted, 0.025),
            q50: quantile(&sorted, 0.5),
            q975: quantile(&sorted, 0.975),
            ess: ess(draws).ok(),
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.q025 <= value && value <= self.q975
    }

    /// Monte Carlo standard error of the mean.
    pub fn mcse(&self) -> f64 {
        self.sd / self.ess.unwrap_or(1.0).sqrt()
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Recorded draws of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainResult {
    pub names: Vec<String>,
    /// Draw-major samples on the constrained scale.
    pub samples: Vec<Vec<f64>>,
    pub log_posterior: Vec<f64>,
    /// Post-burn-in acceptance rate per updated parameter.
    pub acceptance: BTreeMap<String, f64>,
    pub ess: BTreeMap<String, Option<f64>>,
    /// Proposal scales in effect after burn-in.
    pub final_scales: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl ChainResult {
    pub(crate) fn new(names: Vec<String>) -> Self {
        Self {
            names,
            samples: Vec::new(),
            log_posterior: Vec::new(),
            acceptance: BTreeMap::new(),
            ess: BTreeMap::new(),
            final_scales: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub(crate) fn finalize(&mut self) {
        self.ess = self.names.iter().map(|n| (n.clone(), ess(&self.column(n).unwrap_or_default()).ok())).collect();
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(self.samples.iter().map(|row| row[j]).collect())
    }

    pub fn summary(&self) -> BTreeMap<String, ParamSummary> {
        self.names
            .iter()
            .map(|n| (n.clone(), ParamSummary::of(&self.column(n).expect("known name"))))
            .collect()
    }

    /// Writes `draw,<names>,log_post`.
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["draw".to_string()];
        header.extend(self.names.iter().cloned());
        header.push("log_post".into());
        wtr.write_record(&header)?;
        for (i, (row, lp)) in self.samples.iter().zip(&self.log_posterior).enumerate() {
            let mut rec = vec![(i + 1).to_string()];
            rec.extend(row.iter().map(|v| format!("{v:e}")));
            rec.push(format!("{lp:e}"));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<trace writer>", e))?;
        Ok(())
    }

    /// Concatenates independent chains of the same model.
    pub fn merge(chains: &[ChainResult]) -> Result<ChainResult> {
        let first = chains.first().ok_or_else(|| Error::InsufficientData("no chains to merge".into()))?;
        let mut out = ChainResult::new(first.names.clone());
        for c in chains {
            if c.names != first.names {
                return Err(Error::InvalidConfig("chains have different parameters".into()));
            }
            out.samples.extend(c.samples.iter().cloned());
            out.log_posterior.extend(&c.log_posterior);
            out.warnings.extend(c.warnings.iter().cloned());
        }
        for name in first.acceptance.keys() {
            let rates: Vec<f64> = chains.iter().filter_map(|c| c.acceptance.get(name).copied()).collect();
            out.acceptance.insert(name.clone(), rates.iter().sum::<f64>() / rates.len() as f64);
        }
        out.final_scales = first.final_scales.clone();
        // Per-chain ESS adds up; batch means over the concatenation would see the seams.
        out.ess = first
            .names
            .iter()
            .map(|n| {
                let total: Option<f64> = chains.iter().map(|c| c.ess.get(n).copied().flatten()).sum();
                (n.clone(), total)
            })
            .collect();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_config_counts() {
        let c = ChainConfig::single_default(1);
        assert_eq!(c.recorded(), 10_000);
        assert_eq!(c.iterations, 101_000);
        assert_eq!((0..c.iterations).filter(|&i| c.records(i)).count(), 10_000);
        assert_eq!(ChainConfig::hierarchical_default(1).recorded(), 10_000);
        let mut bad = c.clone();
        bad.burn_in = bad.iterations;
        assert!(bad.validate().is_err());
        bad = c;
        bad.thin = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn quantiles() {
        let s: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(quantile(&s, 0.5), 50.0);
        assert_eq!(quantile(&s, 0.025), 2.5);
        let summary = ParamSummary::of(&s);
        assert!(summary.covers(50.0) && !summary.covers(1.0));
    }

    #[test]
    fn trace_csv_layout() {
        let mut r = ChainResult::new(vec!["alpha".into(), "delta".into()]);
        r.samples.push(vec![1.5, 0.25]);
        r.log_posterior.push(-3.0);
        let mut buf = Vec::new();
        r.write_trace_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "draw,alpha,delta,log_post\n1,1.5e0,2.5e-1,-3e0\n");
    }
}
