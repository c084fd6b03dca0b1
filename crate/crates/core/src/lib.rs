//! Bayesian measurement of preferential attachment from network evolution logs.
//!
//! The numeric kernels in [`preference`] and [`likelihood`] are generic over
//! [`Real`]; the samplers work in `f64`, and the aliases below fix that choice.

pub mod diagnostics;
pub mod error;
pub mod hierarchical;
pub mod likelihood;
pub mod mcmc;
pub mod preference;
pub mod priors;
pub mod real;
pub mod selection;
pub mod simulator;
pub mod store;

pub use error::{Error, Result};
pub use real::Real;

pub type Params = preference::PreferenceParams<f64>;
pub type GammaPrior = likelihood::RatePrior<f64>;
pub type Terms = likelihood::PreferenceTerms<f64>;
