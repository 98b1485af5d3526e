//! Sarmanov copulas built from latent Bernoulli mixtures.
//!
//! A bivariate Sarmanov copula `C(u, v) = uv + a g1(u) g2(v)` is the cdf of
//! `((1 - I1) U0 + I1 U1, (1 - I2) V0 + I2 V1)`, where each margin mixes two
//! auxiliary cdfs built from its kernel and `(I1, I2)` is a Bernoulli pair.
//! Admissibility of `a` then reduces to nonnegativity of a Bernoulli pmf.
//! The same mechanism with a d-variate Bernoulli index yields d-variate
//! copulas with a subset expansion, and block maxima of the bivariate
//! construction give powered copulas.
//!
//! Modules:
//! - [`kernel`]: kernel catalog, slope bounds and areas.
//! - [`calibration`]: calibrated cdf pairs and component quantiles.
//! - [`bernoulli`]: latent Bernoulli laws, mixed moments and admissibility.
//! - [`copula`]: copula assembly, cdf/density, intervals and powered copulas.
//! - [`oracle`]: brute-force d-increasing check.
//! - [`sampler`]: exact, reproducible sampling.
//! - [`measures`]: closed-form and empirical dependence measures.
//! - [`config`]: the versioned JSON configuration.

pub mod bernoulli;
pub mod calibration;
pub mod config;
pub mod copula;
pub mod error;
pub mod kernel;
pub mod measures;
pub mod numeric;
pub mod oracle;
pub mod sampler;

pub use bernoulli::{BernoulliLaw, BernoulliSpec, Certificate, NamedCoupling};
pub use calibration::CalibratedPair;
pub use copula::{admissible_a_interval, PoweredCopula, SarmanovCopula};
pub use numeric::Interval;
pub use error::{Error, Result};
pub use kernel::{catalog_lookup, Kernel, Slopes};
pub use sampler::SampleBatch;
