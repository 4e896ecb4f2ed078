//! Disordered quartic scalar-field Markov random field for multivariate
//! financial return series.
//!
//! Each stock's daily log-return is a continuous field on a complete graph;
//! pair weights capture co-movement, site biases capture directional
//! pressure, and the quadratic/quartic site terms shape the marginals. The
//! crate trains the couplings by moment-matched KL minimization, samples the
//! model (unconditionally or with observed fields clamped) for imputation
//! and one-day-ahead forecasting, and provides the market-statistics,
//! finite-size-scaling and baseline pipelines around it.
//!
//! Everything randomized is seeded and deterministic, including across
//! thread counts; small-volume correctness is anchored to an independent
//! quadrature oracle in [`quadrature`].

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod forecast;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod scaling;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{CouplingGrad, CouplingSet, FieldConfig, MomentAccumulator, Moments, LAMBDA_MIN};
pub use sampler::{Clamp, ChainState, SamplerConfig};
pub use trainer::{InitSpec, TrainConfig};
