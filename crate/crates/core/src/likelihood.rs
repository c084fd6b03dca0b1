//! Poisson log-likelihood of increments given in-degrees.
//!
//! Each existing vertex's increment at step `t` is Poisson with mean
//! `μ·g̃(k_{i,t-1})`. Because the normalised weights sum to one at every
//! step, the likelihood factorises into `μ^{A_T} e^{-μT} B_T(θ)`, and a
//! Gamma(a, b) prior on `μ` integrates out in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preference::PreferenceParams;
use crate::real::{ln_factorial, CompensatedSum, Real};
use crate::store::SufficientStats;

/// Gamma(shape, rate) prior on the Poisson rate `μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePrior<T> {
    pub shape: T,
    pub rate: T,
}

impl<T: Real> RatePrior<T> {
    pub fn new(shape: T, rate: T) -> Result<Self> {
        if !(shape > T::zero() && rate > T::zero() && shape.is_finite() && rate.is_finite()) {
            return Err(Error::InvalidParams(format!("Gamma prior needs shape, rate > 0; got {shape}, {rate}")));
        }
        Ok(Self { shape, rate })
    }

    /// Prior with the given mean and standard deviation: `a = m²/s²`, `b = m/s²`.
    pub fn from_mean_sd(mean: T, sd: T) -> Result<Self> {
        let var = sd * sd;
        Self::new(mean * mean / var, mean / var)
    }

    pub fn mean(&self) -> T {
        self.shape / self.rate
    }

    pub fn sd(&self) -> T {
        self.shape.sqrt() / self.rate
    }

    pub fn variance(&self) -> T {
        self.shape / (self.rate * self.rate)
    }

    pub fn ln_pdf(&self, x: T) -> T {
        if x <= T::zero() {
            return T::neg_infinity();
        }
        self.shape * self.rate.ln() - self.shape.lgamma() + (self.shape - T::one()) * x.ln() - self.rate * x
    }
}

/// Terms of the log-likelihood that depend on the preference parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreferenceTerms<T> {
    /// `log B_T(k, Y, θ)`
    pub log_b: T,
    /// Number of steps whose weights sum to one (all steps unless every
    /// existing vertex has zero weight at some step).
    pub steps: u64,
}

/// `log B_T = Σ_t Σ_{k,y} n_{t,k,y}·y·(log g(k) − log Σ_j g(k_j))`.
///
/// Returns `-∞` when a vertex with zero weight received an increment. A step
/// where every weight is zero and nothing happened carries no information
/// and is not counted in `steps`.
pub fn preference_terms<T: Real>(stats: &SufficientStats, params: &PreferenceParams<T>) -> Result<PreferenceTerms<T>> {
    let g: Vec<T> = stats.distinct_degrees().iter().map(|&k| params.g(k)).collect();

    let mut acc = CompensatedSum::default();
    for (slot, &w) in stats.slot_weights().iter().enumerate() {
        if w == 0 {
            continue;
        }
        if g[slot] <= T::zero() {
            return Ok(PreferenceTerms { log_b: T::neg_infinity(), steps: 0 });
        }
        acc.add(T::of_u64(w) * g[slot].ln());
    }

    let mut steps = 0;
    for step in stats.steps() {
        let mut total = CompensatedSum::default();
        for &(_, slot, c) in &step.histogram {
            total.add(T::of_u64(c) * g[slot as usize]);
        }
        let total = total.value();
        if total <= T::zero() {
            if step.total > 0 {
                return Ok(PreferenceTerms { log_b: T::neg_infinity(), steps: 0 });
            }
            continue;
        }
        steps += 1;
        if step.total > 0 {
            acc.add(-T::of_u64(step.total) * total.ln());
        }
    }

    let log_b = acc.value();
    if log_b.is_nan() {
        return Err(Error::NonFinite(format!("log B_T is NaN for {params:?}")));
    }
    Ok(PreferenceTerms { log_b, steps })
}

/// `Σ log y!` over all observed responses.
pub fn ln_response_factorials<T: Real>(stats: &SufficientStats) -> T {
    stats
        .response_counts()
        .iter()
        .map(|&(y, n)| T::of_u64(n) * ln_factorial::<T>(y))
        .sum()
}

/// `a log b − log Γ(a) + log Γ(a + A) − (a + A) log(b + T)`: the factor left
/// after integrating `μ` out against its Gamma prior.
pub fn ln_rate_marginal<T: Real>(prior: &RatePrior<T>, total_increment: u64, steps: u64) -> T {
    let a = prior.shape;
    let b = prior.rate;
    let big_a = T::of_u64(total_increment);
    let big_t = T::of_u64(steps);
    a * b.ln() - a.lgamma() + (a + big_a).lgamma() - (a + big_a) * (b + big_t).ln()
}

/// Full Poisson log-likelihood at a given rate `μ`, including the `log y!` terms.
pub fn loglik_full<T: Real>(stats: &SufficientStats, params: &PreferenceParams<T>, mu: T) -> Result<T> {
    if !(mu > T::zero()) {
        return Err(Error::InvalidParams(format!("mu must be positive, got {mu}")));
    }
    let terms = preference_terms(stats, params)?;
    if terms.log_b == T::neg_infinity() {
        return Ok(T::neg_infinity());
    }
    let a = T::of_u64(stats.total_increment());
    Ok(-mu * T::of_u64(terms.steps) + a * mu.ln() + terms.log_b - ln_response_factorials::<T>(stats))
}

/// Log-likelihood with `μ` integrated out against `prior`, including the
/// `log y!` terms so that values are comparable across preference functions.
pub fn loglik_collapsed<T: Real>(
    stats: &SufficientStats,
    params: &PreferenceParams<T>,
    prior: &RatePrior<T>,
) -> Result<T> {
    let terms = preference_terms(stats, params)?;
    if terms.log_b == T::neg_infinity() {
        return Ok(T::neg_infinity());
    }
    Ok(terms.log_b - ln_response_factorials::<T>(stats) + ln_rate_marginal(prior, stats.total_increment(), terms.steps))
}

/// Conjugate posterior of `μ`: Gamma(a + A_T, b + T).
pub fn posterior_mu<T: Real>(stats: &SufficientStats, prior: &RatePrior<T>) -> RatePrior<T> {
    RatePrior {
        shape: prior.shape + T::of_u64(stats.total_increment()),
        rate: prior.rate + T::of_u64(stats.num_steps() as u64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preference::PreferenceParams;
    use crate::store::{Category, SufficientStats};

    fn stats(text: &str) -> SufficientStats {
        SufficientStats::read_csv(text.as_bytes(), Category::External, None).unwrap()
    }

    #[test]
    fn single_quiet_vertex() {
        let s = stats("t,k,y,count\n1,1,-1,1\n");
        for p in [PreferenceParams::power(1.7f64, 0.3).unwrap(), PreferenceParams::piecewise(0.5, 2.0, 3.0, 1.0).unwrap()] {
            let ll = loglik_full(&s, &p, 1.0).unwrap();
            assert!((ll + 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_vertices_one_increment() {
        let s = stats("t,k,y,count\n1,1,-1,2\n1,1,1,1\n");
        let p = PreferenceParams::power(1.0f64, 0.0).unwrap();
        // Both means equal μ/2 = 1: (−1 + 1·log 1 − log 1!) + (−1).
        let ll = loglik_full(&s, &p, 2.0).unwrap();
        assert!((ll + 2.0).abs() < 1e-14, "{ll}");
    }

    #[test]
    fn impossible_observation_is_negative_infinity() {
        let s = stats("t,k,y,count\n1,0,-1,1\n1,2,-1,1\n1,0,1,1\n");
        let p = PreferenceParams::power(1.0f64, 0.0).unwrap();
        assert_eq!(loglik_full(&s, &p, 1.0).unwrap(), f64::NEG_INFINITY);
        let prior = RatePrior::new(1.0, 1.0).unwrap();
        assert_eq!(loglik_collapsed(&s, &p, &prior).unwrap(), f64::NEG_INFINITY);
        assert!(loglik_full(&s, &p, 0.0).is_err());
    }

    #[test]
    fn no_increments_reduces_to_gamma_ratio() {
        let s = stats("t,k,y,count\n1,1,-1,3\n2,1,-1,3\n3,4,-1,1\n3,1,-1,2\n");
        let p = PreferenceParams::piecewise(1.2, 0.7, 2.0, 0.5).unwrap();
        let prior = RatePrior::new(2.5, 0.8).unwrap();
        let ll = loglik_collapsed(&s, &p, &prior).unwrap();
        let expected = 2.5 * 0.8f64.ln() - 2.5 * (0.8f64 + 3.0).ln();
        assert!((ll - expected).abs() < 1e-13, "{ll} vs {expected}");
    }

    #[test]
    fn conjugate_update() {
        let s = stats("t,k,y,count\n1,1,-1,3\n2,1,-1,3\n3,1,-1,3\n");
        let post = posterior_mu(&s, &RatePrior::new(1.0, 1.0).unwrap());
        assert_eq!((post.shape, post.rate), (1.0, 4.0));

        let mut rows = String::from("t,k,y,count\n");
        for t in 1..=5 {
            rows += &format!("{t},1,-1,4\n");
        }
        rows += "1,1,3,2\n2,1,4,1\n";
        let s = stats(&rows);
        assert_eq!(s.total_increment(), 10);
        let post = posterior_mu(&s, &RatePrior::new(2.0, 1.0).unwrap());
        assert_eq!((post.shape, post.rate), (12.0, 6.0));
        assert_eq!(post.mean(), 2.0);
    }

    #[test]
    fn mean_sd_reparametrisation() {
        let p = RatePrior::from_mean_sd(3.0f64, 1.5).unwrap();
        assert!((p.mean() - 3.0).abs() < 1e-15);
        assert!((p.sd() - 1.5).abs() < 1e-15);
        assert!(RatePrior::new(0.0, 1.0).is_err());
    }

    #[test]
    fn generic_over_precision() {
        let s = stats("t,k,y,count\n1,1,-1,2\n1,3,-1,1\n1,3,2,1\n");
        let p64 = PreferenceParams::power(1.1, 0.5).unwrap();
        let p32 = PreferenceParams::<f32>::power(1.1, 0.5).unwrap();
        let a = loglik_full(&s, &p64, 2.0).unwrap();
        let b = loglik_full(&s, &p32, 2.0).unwrap();
        assert!((a - b as f64).abs() < 1e-5);
    }

    #[test]
    fn degenerate_step_without_events_is_skipped() {
        // Step 1: only degree-0 vertices, nothing happens. Step 2: informative.
        let s = stats("t,k,y,count\n1,0,-1,2\n2,0,-1,1\n2,2,-1,1\n2,2,1,1\n");
        let p = PreferenceParams::power(1.0f64, 0.0).unwrap();
        let terms = preference_terms(&s, &p).unwrap();
        assert_eq!(terms.steps, 1);
        assert_eq!(terms.log_b, 0.0);
    }
}
