//! Item-free and person-free measurement experiments.
//!
//! Item-free: split the test into an Easy and a Hard subtest by the
//! proficient-class correct-response probability, recalibrate each subtest
//! on its own, and compare the examinee posteriors. Person-free: recalibrate
//! on samples drawn mostly from low or mostly from high scorers and compare
//! the item parameters with the complete-sample calibration.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{proficiency_posterior, DEFAULT_THRESHOLD};
use crate::em::{fit, EmConfig, FitResult};
use crate::error::{DcmError, Result};
use crate::inference::{standard_errors, ParameterEstimate};
use crate::math::{mean, median, pearson, sigmoid};
use crate::model::{ModelSpec, ResponseMatrix};

pub const MIN_PERSON_FREE_N: usize = 50;
pub const MIN_POOL_SIZE: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultySplit {
    pub easy: Vec<String>,
    pub hard: Vec<String>,
    pub easy_indices: Vec<usize>,
    pub hard_indices: Vec<usize>,
    /// Item pairs with equal proficient-class probabilities, ordered by index.
    pub ties: Vec<(String, String)>,
}

fn single_attribute(spec: &ModelSpec) -> Result<()> {
    if spec.n_attributes != 1 {
        return Err(DcmError::ModelMismatch(format!(
            "invariance experiments need a single attribute, got {}",
            spec.n_attributes
        )));
    }
    Ok(())
}

/// The `k` easiest and `k` hardest items by proficient-class probability.
pub fn split_by_difficulty(fit: &FitResult, k: usize) -> Result<DifficultySplit> {
    let spec = &fit.spec;
    single_attribute(spec)?;
    let n_items = spec.n_items();
    if k == 0 || k > n_items {
        return Err(DcmError::Input(format!("k must be in 1..={n_items}, got {k}")));
    }
    let p: Vec<f64> = (0..n_items).map(|i| sigmoid(fit.params.logit(spec, i, 1))).collect();
    let mut order: Vec<usize> = (0..n_items).collect();
    order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    let mut ties = Vec::new();
    for w in order.windows(2) {
        if p[w[0]] == p[w[1]] {
            ties.push((fit.item_ids[w[0]].clone(), fit.item_ids[w[1]].clone()));
        }
    }
    let easy_indices: Vec<usize> = order[..k].to_vec();
    let hard_indices: Vec<usize> = order[n_items - k..].iter().rev().cloned().collect();
    let name = |v: &[usize]| v.iter().map(|&i| fit.item_ids[i].clone()).collect();
    Ok(DifficultySplit {
        easy: name(&easy_indices),
        hard: name(&hard_indices),
        easy_indices,
        hard_indices,
        ties,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtestFit {
    pub items: Vec<String>,
    pub fit: FitResult,
    pub proportion_proficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFreeReport {
    pub easy_items: Vec<String>,
    pub hard_items: Vec<String>,
    /// Share classified proficient by the Easy and by the Hard test.
    pub proficiency_proportions: (f64, f64),
    pub posterior_correlation: f64,
    pub classification_agreement: f64,
    pub threshold: f64,
    /// Examinees with at least one response on both subtests.
    pub n_compared: usize,
    pub ties: Vec<(String, String)>,
    pub easy: SubtestFit,
    pub hard: SubtestFit,
}

fn check_item_variance(data: &ResponseMatrix) -> Result<()> {
    for i in 0..data.n_items() {
        let mut seen = [false; 2];
        for e in 0..data.n_examinees() {
            if let Some(x) = data.get(e, i) {
                seen[x as usize] = true;
            }
        }
        if !(seen[0] && seen[1]) {
            return Err(DcmError::DegenerateData(format!(
                "item {} has no response variance in the subtest",
                data.item_ids()[i]
            )));
        }
    }
    Ok(())
}

/// Posterior of proficiency per examinee of `data` (by original row), `None`
/// for rows dropped from the subtest.
fn subtest_posteriors(
    data: &ResponseMatrix,
    spec: &ModelSpec,
    config: &EmConfig,
    items: &[usize],
) -> Result<(FitResult, Vec<Option<f64>>)> {
    let (sub, kept) = data.select_items(items)?;
    check_item_variance(&sub)?;
    let sub_spec = ModelSpec::single_attribute(spec.family, items.len())?.with_floor(spec.main_effect_floor)?;
    let fitted = fit(&sub, &sub_spec, config)?;
    let mut out = alloc::vec![None; data.n_examinees()];
    for (r, &orig) in kept.iter().enumerate() {
        out[orig] = Some(proficiency_posterior(&fitted.params, &sub_spec, sub.row(r))?);
    }
    Ok((fitted, out))
}

pub fn item_free_experiment(data: &ResponseMatrix, spec: &ModelSpec, config: &EmConfig, k: usize) -> Result<ItemFreeReport> {
    single_attribute(spec)?;
    let full = fit(data, spec, config)?;
    let split = split_by_difficulty(&full, k)?;
    let (easy_fit, easy_post) = subtest_posteriors(data, spec, config, &split.easy_indices)?;
    let (hard_fit, hard_post) = subtest_posteriors(data, spec, config, &split.hard_indices)?;
    let proportion = |v: &[Option<f64>]| {
        let seen: Vec<f64> = v.iter().flatten().map(|&p| if p >= DEFAULT_THRESHOLD { 1.0 } else { 0.0 }).collect();
        mean(&seen)
    };
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (x, y) in easy_post.iter().zip(&hard_post) {
        if let (Some(x), Some(y)) = (x, y) {
            a.push(*x);
            b.push(*y);
        }
    }
    let agree = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| (**x >= DEFAULT_THRESHOLD) == (**y >= DEFAULT_THRESHOLD))
        .count();
    let easy_prop = proportion(&easy_post);
    let hard_prop = proportion(&hard_post);
    Ok(ItemFreeReport {
        easy_items: split.easy.clone(),
        hard_items: split.hard.clone(),
        proficiency_proportions: (easy_prop, hard_prop),
        posterior_correlation: pearson(&a, &b),
        classification_agreement: if a.is_empty() { f64::NAN } else { agree as f64 / a.len() as f64 },
        threshold: DEFAULT_THRESHOLD,
        n_compared: a.len(),
        ties: split.ties,
        easy: SubtestFit {
            items: split.easy,
            fit: easy_fit,
            proportion_proficient: easy_prop,
        },
        hard: SubtestFit {
            items: split.hard,
            fit: hard_fit,
            proportion_proficient: hard_prop,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResampleMode {
    /// Low group: two thirds of draws from low scorers; High group mirrored.
    MedianSplit,
    /// Both groups drawn from the whole sample.
    Pooled,
}

/// Rows drawn (with replacement) for the Low and High groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDraws {
    pub median_score: f64,
    pub low_pool: usize,
    pub high_pool: usize,
    pub n_majority: usize,
    pub n_minority: usize,
    pub low_rows: Vec<usize>,
    pub high_rows: Vec<usize>,
}

/// Splits at the median total score (examinees at the median go to a side by
/// a fair coin) and draws both groups.
pub fn draw_groups(data: &ResponseMatrix, seed: u64, mode: ResampleMode) -> Result<GroupDraws> {
    let n = data.n_examinees();
    if n < MIN_PERSON_FREE_N {
        return Err(DcmError::Input(format!(
            "person-free experiment needs at least {MIN_PERSON_FREE_N} examinees, got {n}"
        )));
    }
    let scores: Vec<f64> = (0..n).map(|e| data.total_score(e) as f64).collect();
    let med = median(&scores);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut low, mut high) = (Vec::new(), Vec::new());
    for (e, &s) in scores.iter().enumerate() {
        if s < med || (s == med && rng.random_bool(0.5)) {
            low.push(e);
        } else {
            high.push(e);
        }
    }
    if mode == ResampleMode::MedianSplit && (low.len() < MIN_POOL_SIZE || high.len() < MIN_POOL_SIZE) {
        return Err(DcmError::Input(format!(
            "score groups too small for calibration: {} low, {} high (minimum {MIN_POOL_SIZE})",
            low.len(),
            high.len()
        )));
    }
    let n_majority = 2 * n / 3;
    let n_minority = n - n_majority;
    let all: Vec<usize> = (0..n).collect();
    let draw = |pool: &[usize], count: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        (0..count).map(|_| pool[rng.random_range(0..pool.len())]).collect()
    };
    let (low_rows, high_rows) = match mode {
        ResampleMode::MedianSplit => {
            let mut l = draw(&low, n_majority, &mut rng);
            l.extend(draw(&high, n_minority, &mut rng));
            let mut h = draw(&high, n_majority, &mut rng);
            h.extend(draw(&low, n_minority, &mut rng));
            (l, h)
        }
        ResampleMode::Pooled => (draw(&all, n, &mut rng), draw(&all, n, &mut rng)),
    };
    Ok(GroupDraws {
        median_score: med,
        low_pool: low.len(),
        high_pool: high.len(),
        n_majority,
        n_minority,
        low_rows,
        high_rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonFreeReport {
    pub mode: ResampleMode,
    pub rounding_rule: String,
    pub draws: GroupDraws,
    pub labels: Vec<String>,
    pub complete_params: Vec<ParameterEstimate>,
    pub low_params: Vec<ParameterEstimate>,
    pub high_params: Vec<ParameterEstimate>,
    /// Complete estimate inside the Low / High interval, per parameter.
    pub within_low_ci: Vec<bool>,
    pub within_high_ci: Vec<bool>,
    /// Low and High intervals overlap, per parameter.
    pub ci_overlap: Vec<bool>,
    /// Mean of (group - complete) over intercepts.
    pub bias_low: f64,
    pub bias_high: f64,
    /// Share of (intercept, group) pairs whose interval holds the complete estimate.
    pub intercept_within_ci_rate: f64,
    /// Every item parameter (intercepts and main effects) has overlapping group intervals.
    pub item_ci_overlap: bool,
}

fn calibrate(data: &ResponseMatrix, spec: &ModelSpec, config: &EmConfig) -> Result<Vec<ParameterEstimate>> {
    let fitted = fit(data, spec, config)?;
    Ok(standard_errors(&fitted, data)?.estimates)
}

pub fn person_free_experiment(data: &ResponseMatrix, spec: &ModelSpec, config: &EmConfig, seed: u64) -> Result<PersonFreeReport> {
    person_free_experiment_with(data, spec, config, seed, ResampleMode::MedianSplit)
}

pub fn person_free_experiment_with(
    data: &ResponseMatrix,
    spec: &ModelSpec,
    config: &EmConfig,
    seed: u64,
    mode: ResampleMode,
) -> Result<PersonFreeReport> {
    single_attribute(spec)?;
    let draws = draw_groups(data, seed, mode)?;
    let complete = calibrate(data, spec, config)?;
    let low = calibrate(&data.resample_rows(&draws.low_rows)?, spec, config)?;
    let high = calibrate(&data.resample_rows(&draws.high_rows)?, spec, config)?;
    assemble(spec, mode, draws, complete, low, high)
}

/// Builds the report from three calibrations of the same model.
pub fn assemble(
    spec: &ModelSpec,
    mode: ResampleMode,
    draws: GroupDraws,
    complete: Vec<ParameterEstimate>,
    low: Vec<ParameterEstimate>,
    high: Vec<ParameterEstimate>,
) -> Result<PersonFreeReport> {
    if complete.len() != low.len() || complete.len() != high.len() {
        return Err(DcmError::Input("calibrations have different parameter counts".into()));
    }
    let n_items = spec.n_items();
    let n_item_params = n_items + spec.n_main_effects();
    let within_low_ci: Vec<bool> = complete.iter().zip(&low).map(|(c, g)| g.contains(c.estimate)).collect();
    let within_high_ci: Vec<bool> = complete.iter().zip(&high).map(|(c, g)| g.contains(c.estimate)).collect();
    let ci_overlap: Vec<bool> = low.iter().zip(&high).map(|(l, h)| l.overlaps(h)).collect();
    let bias = |g: &[ParameterEstimate]| {
        let d: Vec<f64> = (0..n_items).map(|i| g[i].estimate - complete[i].estimate).collect();
        mean(&d)
    };
    let hits = within_low_ci[..n_items].iter().chain(&within_high_ci[..n_items]).filter(|b| **b).count();
    Ok(PersonFreeReport {
        mode,
        rounding_rule: format!(
            "each group has N = {} draws: floor(2N/3) = {} from its own side of the median, the remaining {} from the other side",
            draws.n_majority + draws.n_minority,
            draws.n_majority,
            draws.n_minority
        ),
        labels: complete.iter().map(|e| e.label.clone()).collect(),
        bias_low: bias(&low),
        bias_high: bias(&high),
        intercept_within_ci_rate: hits as f64 / (2 * n_items) as f64,
        item_ci_overlap: ci_overlap[..n_item_params].iter().all(|b| *b),
        within_low_ci,
        within_high_ci,
        ci_overlap,
        draws,
        complete_params: complete,
        low_params: low,
        high_params: high,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{default_item_ids, Family, ParameterSet};
    use crate::simulate::{simulate, GenSpec};
    use crate::truth::{eight_item_truth, nine_item_truth};

    fn fake_fit(spec: ModelSpec, params: ParameterSet) -> FitResult {
        let data = ResponseMatrix::from_binary_rows(&[alloc::vec![0; 1]]).unwrap();
        let n = spec.n_items();
        let post = crate::em::PosteriorMatrix::new(2, alloc::vec![0.5, 0.5]).unwrap();
        FitResult {
            n_params: spec.n_free_params(),
            spec,
            params,
            loglik: 0.0,
            loglik_trace: Vec::new(),
            aic: 0.0,
            bic: 0.0,
            converged: true,
            n_iterations: 0,
            posteriors: post,
            standard_errors: None,
            ci95: None,
            warnings: Vec::new(),
            n_examinees: 1,
            item_ids: default_item_ids(n),
            data_fingerprint: data.fingerprint(),
        }
    }

    #[test]
    fn split_on_reference_estimates() {
        let (spec, p) = eight_item_truth();
        let f = fake_fit(spec, p);
        let s = split_by_difficulty(&f, 2).unwrap();
        assert_eq!(s.easy, alloc::vec![String::from("Item6"), String::from("Item4")]);
        assert_eq!(s.hard, alloc::vec![String::from("Item5"), String::from("Item8")]);
        let all = split_by_difficulty(&f, 8).unwrap();
        let mut e = all.easy_indices.clone();
        e.sort();
        let mut h = all.hard_indices.clone();
        h.sort();
        assert_eq!(e, h);
        assert!(split_by_difficulty(&f, 9).is_err());
        assert!(split_by_difficulty(&f, 0).is_err());
    }

    #[test]
    fn nine_items_six_each_overlap_in_three() {
        let (spec, p) = nine_item_truth();
        let s = split_by_difficulty(&fake_fit(spec, p), 6).unwrap();
        let common = s.easy.iter().filter(|x| s.hard.contains(x)).count();
        assert_eq!(common, 3);
    }

    #[test]
    fn tied_items_are_flagged() {
        let spec = ModelSpec::single_attribute(Family::OnePlcdm, 3).unwrap();
        let p = ParameterSet::new(&spec, alloc::vec![-1.0, -1.0, 0.0], alloc::vec![1.0], alloc::vec![0.5, 0.5]).unwrap();
        let s = split_by_difficulty(&fake_fit(spec, p), 1).unwrap();
        assert_eq!(s.easy, alloc::vec![String::from("Item3")]);
        assert_eq!(s.hard, alloc::vec![String::from("Item2")]);
        assert_eq!(s.ties, alloc::vec![(String::from("Item1"), String::from("Item2"))]);
    }

    #[test]
    fn constant_item_in_subtest_is_named() {
        let (spec, p) = nine_item_truth();
        let mut data = simulate(&GenSpec::new(spec.clone(), p, 200, 1)).unwrap().data;
        let rows: Vec<Vec<Option<bool>>> = data
            .rows()
            .map(|r| {
                let mut r = r.to_vec();
                r[5] = Some(true);
                r
            })
            .collect();
        data = ResponseMatrix::from_rows(&rows).unwrap();
        let err = item_free_experiment(&data, &spec, &EmConfig::default(), 6).unwrap_err();
        match err {
            DcmError::DegenerateData(m) => assert!(m.contains("Item6"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn separated_classes_agree() {
        let spec = ModelSpec::single_attribute(Family::OnePlcdm, 9).unwrap();
        let p = ParameterSet::new(&spec, alloc::vec![-5.0, -4.0, -6.0, -5.5, -4.5, -5.0, -6.0, -4.0, -5.0], alloc::vec![10.0], alloc::vec![0.5, 0.5]).unwrap();
        let data = simulate(&GenSpec::new(spec.clone(), p, 400, 3)).unwrap().data;
        let cfg = EmConfig { n_starts: 2, ..EmConfig::default() };
        let r = item_free_experiment(&data, &spec, &cfg, 6).unwrap();
        assert!(r.classification_agreement > 0.99);
        assert_eq!(r.n_compared, 400);
    }

    #[test]
    fn group_draws_sizes_and_determinism() {
        let (spec, p) = nine_item_truth();
        let data = simulate(&GenSpec::new(spec, p, 301, 2)).unwrap().data;
        let d = draw_groups(&data, 5, ResampleMode::MedianSplit).unwrap();
        assert_eq!(d.low_rows.len(), 301);
        assert_eq!(d.high_rows.len(), 301);
        assert_eq!(d.n_majority, 200);
        assert_eq!(d.n_minority, 101);
        assert_eq!(d.low_pool + d.high_pool, 301);
        let from_low = d.low_rows.iter().filter(|&&e| (data.total_score(e) as f64) < d.median_score).count();
        assert!(from_low <= 200);
        assert_eq!(draw_groups(&data, 5, ResampleMode::MedianSplit).unwrap(), d);
        let small = ResponseMatrix::from_binary_rows(&alloc::vec![alloc::vec![1, 0]; 49]).unwrap();
        assert!(matches!(draw_groups(&small, 1, ResampleMode::MedianSplit), Err(DcmError::Input(_))));
    }

    #[test]
    fn small_pools_are_rejected() {
        // every score ties at the median, so pool sizes follow coin flips
        let data = ResponseMatrix::from_binary_rows(&alloc::vec![alloc::vec![1u8, 0]; 50]).unwrap();
        let mut rejected = 0;
        for seed in 0..20 {
            match draw_groups(&data, seed, ResampleMode::MedianSplit) {
                Ok(d) => assert!(d.low_pool >= MIN_POOL_SIZE && d.high_pool >= MIN_POOL_SIZE),
                Err(DcmError::Input(_)) => rejected += 1,
                Err(e) => panic!("{e:?}"),
            }
        }
        assert!(rejected > 0);
        assert!(draw_groups(&data, 0, ResampleMode::Pooled).is_ok());
    }
}
