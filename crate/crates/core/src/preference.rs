//! Preference functions `g(k)` and their normalised weights.
//!
//! The power form is `k^α + δ`. The piecewise form follows the power form up
//! to the threshold `γ` and grows linearly with slope `β` above it, so the
//! degree distribution it implies keeps a heavy tail.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{CompensatedSum, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreferenceKind {
    Power,
    Piecewise,
}

impl PreferenceKind {
    /// The model indicator `r`: 0 for power, 1 for piecewise.
    pub fn indicator(self) -> u8 {
        match self {
            PreferenceKind::Power => 0,
            PreferenceKind::Piecewise => 1,
        }
    }

    pub fn from_indicator(r: u8) -> Self {
        if r == 0 {
            PreferenceKind::Power
        } else {
            PreferenceKind::Piecewise
        }
    }

    /// Names of the free parameters, in the order used by [`PreferenceParams::free_values`].
    pub fn param_names(self, delta_fixed: bool) -> Vec<&'static str> {
        let mut names = match self {
            PreferenceKind::Power => vec!["alpha"],
            PreferenceKind::Piecewise => vec!["alpha", "beta", "gamma"],
        };
        if !delta_fixed {
            names.push("delta");
        }
        names
    }
}

impl fmt::Display for PreferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PreferenceKind::Power => "power",
            PreferenceKind::Piecewise => "piecewise",
        })
    }
}

impl FromStr for PreferenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "power" => Ok(PreferenceKind::Power),
            "piecewise" => Ok(PreferenceKind::Piecewise),
            other => Err(Error::InvalidConfig(format!("unknown preference function {other:?}"))),
        }
    }
}

/// Parameters of a preference function. `beta` and `gamma` are ignored for
/// the power form; `delta` is exactly zero when `delta_fixed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceParams<T> {
    pub kind: PreferenceKind,
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
    pub delta: T,
    pub delta_fixed: bool,
}

impl<T: Real> PreferenceParams<T> {
    /// `k^α + δ`; a zero `delta` fixes the zero-appeal at 0.
    pub fn power(alpha: T, delta: T) -> Result<Self> {
        let p = Self {
            kind: PreferenceKind::Power,
            alpha,
            beta: T::one(),
            gamma: T::one(),
            delta,
            delta_fixed: delta == T::zero(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Piecewise power/linear function; a zero `delta` fixes the zero-appeal at 0.
    pub fn piecewise(alpha: T, beta: T, gamma: T, delta: T) -> Result<Self> {
        let p = Self { kind: PreferenceKind::Piecewise, alpha, beta, gamma, delta, delta_fixed: delta == T::zero() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: T, name: &str| {
            if v.is_finite() && v > T::zero() {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive(self.alpha, "alpha")?;
        if self.kind == PreferenceKind::Piecewise {
            positive(self.beta, "beta")?;
            positive(self.gamma, "gamma")?;
        }
        if self.delta_fixed {
            if self.delta != T::zero() {
                return Err(Error::InvalidParams("delta is fixed but non-zero".into()));
            }
        } else {
            positive(self.delta, "delta")?;
        }
        Ok(())
    }

    /// Free parameters in [`PreferenceKind::param_names`] order.
    pub fn free_values(&self) -> Vec<T> {
        let mut v = vec![self.alpha];
        if self.kind == PreferenceKind::Piecewise {
            v.extend([self.beta, self.gamma]);
        }
        if !self.delta_fixed {
            v.push(self.delta);
        }
        v
    }

    /// Inverse of [`free_values`](Self::free_values). Values are not validated.
    pub fn from_free_values(kind: PreferenceKind, delta_fixed: bool, values: &[T]) -> Self {
        let mut it = values.iter().copied();
        let mut next = || it.next().expect("enough parameter values");
        let alpha = next();
        let (beta, gamma) = match kind {
            PreferenceKind::Power => (T::one(), T::one()),
            PreferenceKind::Piecewise => (next(), next()),
        };
        let delta = if delta_fixed { T::zero() } else { next() };
        Self { kind, alpha, beta, gamma, delta, delta_fixed }
    }

    #[inline]
    fn pow(&self, k: T) -> T {
        if k == T::zero() {
            T::zero()
        } else {
            (self.alpha * k.ln()).exp()
        }
    }

    /// Preference weight of a vertex with in-degree `k`. `0^α` is taken as 0.
    #[inline]
    pub fn g(&self, k: u32) -> T {
        self.g_at(T::of_u64(k as u64))
    }

    /// `g` extended to real arguments `k ≥ 0`.
    #[inline]
    pub fn g_at(&self, kf: T) -> T {
        match self.kind {
            PreferenceKind::Piecewise if kf >= self.gamma => {
                self.pow(self.gamma) + self.beta * (kf - self.gamma) + self.delta
            }
            _ => self.pow(kf) + self.delta,
        }
    }
}

/// `Σ_k count(k)·g(k)` over a degree histogram, with its logarithm.
pub fn normalize<T: Real>(
    histogram: impl IntoIterator<Item = (u32, u64)>,
    params: &PreferenceParams<T>,
) -> Result<(T, T)> {
    let mut acc = CompensatedSum::default();
    let mut any = false;
    for (k, c) in histogram {
        any = true;
        acc.add(T::of_u64(c) * params.g(k));
    }
    let total = acc.value();
    if !any || total <= T::zero() {
        return Err(Error::DegenerateWeights);
    }
    Ok((total, total.ln()))
}

/// Normalised weights `g̃(k_i)` of individual vertices.
pub fn normalized_weights<T: Real>(degrees: &[u32], params: &PreferenceParams<T>) -> Result<Vec<T>> {
    let g: Vec<T> = degrees.iter().map(|&k| params.g(k)).collect();
    let mut acc = CompensatedSum::default();
    g.iter().for_each(|&w| acc.add(w));
    let total = acc.value();
    if degrees.is_empty() || total <= T::zero() {
        return Err(Error::DegenerateWeights);
    }
    Ok(g.into_iter().map(|w| w / total).collect())
}
