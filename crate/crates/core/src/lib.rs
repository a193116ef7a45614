//! Rate-distortion and distortion-rate regions of the two-user two-layer
//! Gaussian successive refinement problem, with its multiple-description
//! special cases, the achieving test channel, finite-alphabet region
//! evaluation and comparison studies.

pub mod analysis;
pub mod channel;
pub mod discrete;
pub mod error;
pub mod mmse;
pub mod model;
pub mod regions;
pub mod search;
pub mod selfcheck;

pub use error::{Error, Result};
pub use model::{
    convert_rate, feasible_individual, rate_of, DistortionTuple, FirstDistortion, GaussianSource,
    RateTuple, RateUnit, RegimeTag,
};
