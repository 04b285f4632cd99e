//! Reference generating values modelled on a published nine-item calibration.
//!
//! Eight intercepts and the shared main effect are the complete-sample point
//! estimates of that calibration; the ninth intercept (never tabulated) is
//! set to the rounded mean of the other eight. Proficient and non-proficient
//! examinees are equally likely.

use alloc::vec;
use alloc::vec::Vec;

use crate::model::{Family, ModelSpec, ParameterSet};

pub const REFERENCE_INTERCEPTS: [f64; 8] = [-0.92, -2.23, -1.13, -0.81, -4.87, -0.21, -2.05, -2.40];
pub const NINTH_INTERCEPT: f64 = -1.83;
pub const REFERENCE_MAIN_EFFECT: f64 = 2.15;

/// Intercepts of the nine-item reference test.
pub fn nine_item_intercepts() -> Vec<f64> {
    let mut v = REFERENCE_INTERCEPTS.to_vec();
    v.push(NINTH_INTERCEPT);
    v
}

/// One-parameter LCDM truth for the nine-item reference test.
pub fn nine_item_truth() -> (ModelSpec, ParameterSet) {
    let spec = ModelSpec::single_attribute(Family::OnePlcdm, 9).expect("valid");
    let params = ParameterSet {
        intercepts: nine_item_intercepts(),
        main_effects: vec![REFERENCE_MAIN_EFFECT],
        structural: vec![0.5, 0.5],
    };
    (spec, params)
}

/// Eight-item variant using only the tabulated intercepts.
pub fn eight_item_truth() -> (ModelSpec, ParameterSet) {
    let spec = ModelSpec::single_attribute(Family::OnePlcdm, 8).expect("valid");
    let params = ParameterSet {
        intercepts: REFERENCE_INTERCEPTS.to_vec(),
        main_effects: vec![REFERENCE_MAIN_EFFECT],
        structural: vec![0.5, 0.5],
    };
    (spec, params)
}
