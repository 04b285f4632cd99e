//! Parallel drivers for replicated studies.
//!
//! Each replicate derives its seeds from the study seed and its index, so
//! these return exactly what the sequential drivers in `dcm_core::simulate`
//! return.

use dcm_core::em::{fit, EmConfig};
use dcm_core::inference::standard_errors;
use dcm_core::invariance::{assemble, draw_groups, PersonFreeReport, ResampleMode};
use dcm_core::simulate::{
    recovery_replicate, robustness_replicate, robustness_truth, summarize_recovery, summarize_robustness, GenSpec,
    RecoveryReport, RobustnessRow,
};
use dcm_core::{DcmError, ModelSpec, ResponseMatrix};
use rayon::prelude::*;

/// `f(0..n)` in parallel, results in index order.
pub fn replicated<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

pub fn recovery_study(gen: &GenSpec, n_replicates: usize, config: &EmConfig) -> Result<RecoveryReport, DcmError> {
    if n_replicates < 2 {
        return Err(DcmError::Input("a recovery study needs at least 2 replicates".into()));
    }
    gen.validate()?;
    let outcomes = replicated(n_replicates, |r| recovery_replicate(gen, config, r));
    summarize_recovery(gen, outcomes)
}

pub fn robustness_study(
    grid: &[f64],
    base: &GenSpec,
    n_replicates: usize,
    config: &EmConfig,
) -> Result<Vec<RobustnessRow>, DcmError> {
    if n_replicates < 1 {
        return Err(DcmError::Input("a robustness study needs at least 1 replicate".into()));
    }
    for &s in grid {
        robustness_truth(base, s)?;
    }
    let cells: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..n_replicates).map(move |r| (g, r))).collect();
    let mut outcomes: Vec<_> = cells
        .par_iter()
        .map(|&(g, r)| robustness_replicate(base, grid[g], config, r))
        .collect();
    let mut rows = Vec::with_capacity(grid.len());
    for &s in grid.iter().rev() {
        let cell = outcomes.split_off(outcomes.len() - n_replicates);
        rows.push(summarize_robustness(s, cell)?);
    }
    rows.reverse();
    Ok(rows)
}

/// Person-free experiment with the three calibrations run in parallel.
pub fn person_free_experiment(
    data: &ResponseMatrix,
    spec: &ModelSpec,
    config: &EmConfig,
    seed: u64,
    mode: ResampleMode,
) -> Result<PersonFreeReport, DcmError> {
    if spec.n_attributes != 1 {
        return Err(DcmError::ModelMismatch("invariance experiments need a single attribute".into()));
    }
    let draws = draw_groups(data, seed, mode)?;
    let low_data = data.resample_rows(&draws.low_rows)?;
    let high_data = data.resample_rows(&draws.high_rows)?;
    let calibrate = |d: &ResponseMatrix| -> Result<_, DcmError> {
        let f = fit(d, spec, config)?;
        Ok(standard_errors(&f, d)?.estimates)
    };
    let (complete, (low, high)) = rayon::join(
        || calibrate(data),
        || rayon::join(|| calibrate(&low_data), || calibrate(&high_data)),
    );
    assemble(spec, mode, draws, complete?, low?, high?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dcm_core::truth::nine_item_truth;

    fn quick() -> EmConfig {
        EmConfig {
            n_starts: 2,
            ..EmConfig::default()
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let (spec, p) = nine_item_truth();
        let gen = GenSpec::new(spec.clone(), p, 300, 12);
        let par = recovery_study(&gen, 4, &quick()).unwrap();
        let seq = dcm_core::simulate::recovery_study(&gen, 4, &quick()).unwrap();
        assert_eq!(par, seq);

        let par = robustness_study(&[0.0, 1.0], &gen, 2, &quick()).unwrap();
        let seq = dcm_core::simulate::robustness_study(&[0.0, 1.0], &gen, 2, &quick()).unwrap();
        assert_eq!(par, seq);

        let data = dcm_core::simulate::simulate(&gen).unwrap().data;
        let par = person_free_experiment(&data, &spec, &quick(), 3, ResampleMode::MedianSplit).unwrap();
        let seq = dcm_core::invariance::person_free_experiment(&data, &spec, &quick(), 3).unwrap();
        assert_eq!(par, seq);
    }
}
