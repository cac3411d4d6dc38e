//! Direct and spillover treatment effects under network interference.
//!
//! Outcomes follow a Markov random field `exp(½yᵀAy + yᵀ(τt + xθ))` over a
//! base measure on `[-1, 1]`; treatments follow an Ising-type propensity
//! model. The crate provides
//!
//! * base measures and their exponential tilts ([`measure`]),
//! * interaction matrix generators and diagnostics ([`network`]),
//! * Gibbs samplers and an exact enumeration oracle ([`model`]),
//! * the mean-field estimator ([`meanfield`]) and AMP estimator ([`amp`]),
//! * pseudo-likelihood fitting ([`mple`]),
//! * replicated estimates with quantile intervals and experiment drivers
//!   ([`pipeline`]).

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod amp;
pub mod error;
pub mod estimand;
pub mod meanfield;
pub mod measure;
pub mod model;
pub mod mple;
pub mod network;
pub mod pipeline;
pub mod validate;

pub use error::{Error, Result};
pub use estimand::{Allocation, Effects};
pub use measure::{BaseMeasure, TiltParams};
pub use model::{Covariates, CovariateDist, Dataset, ModelParams, OutcomeModel, PropensityModel};
pub use network::InteractionMatrix;
pub use pipeline::{Algorithm, EffectEstimate, ExperimentReport, ExperimentSpec};
