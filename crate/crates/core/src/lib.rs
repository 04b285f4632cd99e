//! Estimation and measurement-property diagnostics for diagnostic
//! classification models with binary attributes.
//!
//! Two item response families are supported: the single-attribute LCDM, in
//! which every item carries its own intercept and main effect, and the
//! one-parameter LCDM, in which items keep their own intercepts but share a
//! single main effect per attribute. The crate is `no_std` (it needs `alloc`)
//! so the numerical core can be embedded anywhere; file formats, the command
//! line and parallel study drivers live in the companion `dcm` crate.
//!
//! Module map:
//!
//! * [`model`]: domain types, item response function, exact likelihoods
//! * [`em`]: marginal maximum likelihood by EM, fit indices, LR statistic
//! * [`inference`]: numerical Hessian, standard errors and Wald intervals
//! * [`classify`]: posteriors, thresholds, score tables and cutscores
//! * [`diagnostics`]: sufficiency, monotonicity, item/person ordering checks
//! * [`invariance`]: item-free and person-free measurement experiments
//! * [`simulate`]: data generation, recovery and robustness studies

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod classify;
pub mod diagnostics;
pub mod em;
mod error;
pub mod inference;
pub mod invariance;
pub(crate) mod math;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod truth;

pub use error::{DcmError, Result};
pub use model::{
    enumerate_classes, Family, LatentClassSpace, ModelSpec, ParameterSet, ResponseMatrix,
};
