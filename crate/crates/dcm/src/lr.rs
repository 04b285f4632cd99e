//! Likelihood-ratio test of the one-parameter LCDM against the LCDM.

use dcm_core::em::{likelihood_ratio, FitResult};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LrTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Statistic before clamping at zero.
    pub raw: f64,
}

pub fn lr_test(full: &FitResult, reduced: &FitResult) -> Result<LrTest> {
    let lr = likelihood_ratio(full, reduced)?;
    let p_value = if lr.df == 0 {
        1.0
    } else {
        ChiSquared::new(lr.df as f64).map(|d| d.sf(lr.statistic)).unwrap_or(f64::NAN)
    };
    Ok(LrTest {
        statistic: lr.statistic,
        df: lr.df,
        p_value,
        raw: lr.raw,
    })
}
