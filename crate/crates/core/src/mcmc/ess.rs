use crate::error::{Error, Result};

/// Effective sample size from the overlapping batch means estimate of the
/// asymptotic variance, with batch length `⌊√n⌋`. The result lies in `(0, n]`.
///
/// A constant trace has no defined ESS and yields [`Error::DegenerateTrace`].
pub fn ess(trace: &[f64]) -> Result<f64> {
    let n = trace.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!("ESS needs at least 10 draws, got {n}")));
    }
    let nf = n as f64;
    let mean = trace.iter().sum::<f64>() / nf;
    let var = trace.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::DegenerateTrace);
    }

    let b = (nf.sqrt().floor() as usize).max(1);
    let bf = b as f64;
    let mut window: f64 = trace[..b].iter().sum();
    let mut ss = 0.0;
    for j in 0..=(n - b) {
        if j > 0 {
            window += trace[j + b - 1] - trace[j - 1];
        }
        ss += (window / bf - mean).powi(2);
    }
    let sigma2 = nf * bf / ((nf - bf) * (nf - bf + 1.0)) * ss;
    if !(sigma2 > 0.0) {
        return Ok(nf);
    }
    Ok((nf * var / sigma2).min(nf))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    #[test]
    fn iid_draws_are_nearly_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e = ess(&x).unwrap();
        assert!((8000.0..=10_000.0).contains(&e), "{e}");
    }

    #[test]
    fn ar1_matches_analytic_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho: f64 = 0.9;
        let mut x = Vec::with_capacity(10_000);
        let mut cur: f64 = StandardNormal.sample(&mut rng);
        cur /= (1.0 - rho * rho).sqrt();
        for _ in 0..10_000 {
            let e: f64 = StandardNormal.sample(&mut rng);
            cur = rho * cur + e;
            x.push(cur);
        }
        let expected = 10_000.0 * (1.0 - rho) / (1.0 + rho);
        let e = ess(&x).unwrap();
        assert!(e > expected / 2.0 && e < expected * 2.0, "{e} vs {expected}");
    }

    #[test]
    fn short_alternating_trace() {
        let x: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let e = ess(&x).unwrap();
        assert!(e.is_finite() && e > 0.0 && e <= 10.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(ess(&[3.0; 50]), Err(Error::DegenerateTrace)));
        assert!(matches!(ess(&[1.0, 2.0]), Err(Error::InsufficientData(_))));
    }
}
