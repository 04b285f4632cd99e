//! Data generation from a known truth, parameter-recovery and robustness
//! studies, and the multi-attribute sufficiency probe.
//!
//! Study drivers here run replicates one after another. Each replicate is
//! also exposed on its own (`*_replicate`) together with a summariser so a
//! caller can run replicates in parallel and get identical results; see
//! [`crate::rng`] for the seed scheme.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::attribute_posteriors;
use crate::diagnostics::{sufficiency, SufficiencyReport};
use crate::em::{fit, EmConfig, FitResult, PosteriorMatrix};
use crate::error::{DcmError, Result};
use crate::inference::standard_errors;
use crate::math::{mean, median, sigmoid, sqrt};
use crate::model::{class_bit, default_item_ids, Family, ModelSpec, ParameterSet, ResponseMatrix};
use crate::rng::derive_seed;

/// Studies fail when more than this fraction of replicates fail.
pub const MAX_FAILURE_RATE: f64 = 0.2;
pub const MAX_MISSING_RATE: f64 = 0.5;
pub const PROBE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub true_params: ParameterSet,
    pub spec: ModelSpec,
    pub n_examinees: usize,
    pub seed: u64,
    #[serde(default)]
    pub missing_rate: f64,
}

impl GenSpec {
    pub fn new(spec: ModelSpec, true_params: ParameterSet, n_examinees: usize, seed: u64) -> Self {
        GenSpec {
            true_params,
            spec,
            n_examinees,
            seed,
            missing_rate: 0.0,
        }
    }

    pub fn with_missing_rate(mut self, rate: f64) -> Self {
        self.missing_rate = rate;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.true_params.validate(&self.spec)?;
        if self.n_examinees == 0 {
            return Err(DcmError::Input("n_examinees must be positive".into()));
        }
        if !(0.0..=MAX_MISSING_RATE).contains(&self.missing_rate) {
            return Err(DcmError::Input(format!(
                "missing_rate {} outside [0, {MAX_MISSING_RATE}]",
                self.missing_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub data: ResponseMatrix,
    /// Generating class index per examinee (see [`crate::model::class_bit`]).
    pub true_classes: Vec<usize>,
}

/// Draws, per examinee and in this order: the latent class, every response,
/// then the missingness indicators. A row that comes out fully missing keeps
/// one uniformly chosen response.
pub fn simulate(gen: &GenSpec) -> Result<Simulated> {
    gen.validate()?;
    let spec = &gen.spec;
    let params = &gen.true_params;
    let n_items = spec.n_items();
    let n_classes = spec.n_classes();
    let probs: Vec<f64> = (0..n_classes)
        .flat_map(|c| (0..n_items).map(move |i| (c, i)))
        .map(|(c, i)| sigmoid(params.logit(spec, i, c)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(gen.seed);
    let mut rows = Vec::with_capacity(gen.n_examinees * n_items);
    let mut classes = Vec::with_capacity(gen.n_examinees);
    for _ in 0..gen.n_examinees {
        let u: f64 = rng.random();
        let mut class = n_classes - 1;
        let mut acc = 0.0;
        for (c, w) in params.structural.iter().enumerate() {
            acc += w;
            if u < acc {
                class = c;
                break;
            }
        }
        let p = &probs[class * n_items..(class + 1) * n_items];
        let mut row: Vec<Option<bool>> = p.iter().map(|&q| Some(rng.random::<f64>() < q)).collect();
        if gen.missing_rate > 0.0 {
            let full = row.clone();
            for cell in row.iter_mut() {
                if rng.random::<f64>() < gen.missing_rate {
                    *cell = None;
                }
            }
            if row.iter().all(Option::is_none) {
                let keep = rng.random_range(0..n_items);
                row[keep] = full[keep];
            }
        }
        rows.extend(row);
        classes.push(class);
    }
    let ids = (1..=gen.n_examinees).map(|e| format!("E{e}")).collect();
    let data = ResponseMatrix::new(ids, default_item_ids(n_items), rows)?;
    Ok(Simulated {
        data,
        true_classes: classes,
    })
}

/// Share of examinees whose MAP class is the generating class; a tie among
/// `k` top classes that includes the truth earns `1/k`.
pub fn map_accuracy(posteriors: &PosteriorMatrix, true_classes: &[usize]) -> Result<f64> {
    if posteriors.n_rows() != true_classes.len() {
        return Err(DcmError::Input(format!(
            "{} posterior rows for {} true classes",
            posteriors.n_rows(),
            true_classes.len()
        )));
    }
    let mut credit = 0.0;
    for (row, &truth) in posteriors.rows().zip(true_classes) {
        let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ties = row.iter().filter(|&&w| w == best).count();
        if row[truth] == best {
            credit += 1.0 / ties as f64;
        }
    }
    Ok(credit / true_classes.len() as f64)
}

/// MAP class per row, lowest index on ties.
pub fn map_classes(posteriors: &PosteriorMatrix) -> Vec<usize> {
    posteriors
        .rows()
        .map(|row| {
            let mut best = 0;
            for (c, w) in row.iter().enumerate() {
                if *w > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn replicate_seeds(study_seed: u64, r: usize) -> (u64, u64) {
    let master = derive_seed(study_seed, r as u64);
    (derive_seed(master, 0), derive_seed(master, 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub estimates: Vec<f64>,
    /// `None` when the standard errors could not be computed.
    pub ci95: Option<Vec<(f64, f64)>>,
    pub classification_accuracy: f64,
    pub converged: bool,
}

/// Simulate, fit and record one recovery replicate.
pub fn recovery_replicate(gen: &GenSpec, config: &EmConfig, replicate: usize) -> Result<ReplicateOutcome> {
    let (data_seed, fit_seed) = replicate_seeds(gen.seed, replicate);
    let sim = simulate(&gen.clone().with_seed(data_seed))?;
    let fitted = fit(&sim.data, &gen.spec, &config.clone().with_seed(fit_seed))?;
    let ci95 = standard_errors(&fitted, &sim.data).ok().map(|inf| inf.ci95());
    Ok(ReplicateOutcome {
        replicate,
        estimates: fitted.params.to_vector(),
        ci95,
        classification_accuracy: map_accuracy(&fitted.posteriors, &sim.true_classes)?,
        converged: fitted.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRecovery {
    pub label: String,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub rmse: f64,
    /// `None` when no replicate produced an interval.
    pub coverage: Option<f64>,
    pub n_intervals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub n_replicates: usize,
    pub n_failed: usize,
    pub failures: Vec<String>,
    pub n_without_intervals: usize,
    pub n_not_converged: usize,
    pub parameters: Vec<ParameterRecovery>,
    pub classification_accuracy: f64,
}

impl RecoveryReport {
    pub fn parameter(&self, label: &str) -> Option<&ParameterRecovery> {
        self.parameters.iter().find(|p| p.label == label)
    }
}

fn check_failures(n_total: usize, failures: &[String]) -> Result<()> {
    if failures.len() as f64 > MAX_FAILURE_RATE * n_total as f64 || failures.len() == n_total {
        return Err(DcmError::Estimation(format!(
            "{} of {n_total} replicates failed; first failure: {}",
            failures.len(),
            failures.first().map(String::as_str).unwrap_or("")
        )));
    }
    Ok(())
}

/// Aggregates replicate outcomes (in any order) into bias, RMSE and coverage.
pub fn summarize_recovery(gen: &GenSpec, outcomes: Vec<Result<ReplicateOutcome>>) -> Result<RecoveryReport> {
    let n_total = outcomes.len();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(o) => ok.push(o),
            Err(e) => failures.push(format!("replicate {r}: {e}")),
        }
    }
    check_failures(n_total, &failures)?;
    ok.sort_by_key(|o| o.replicate);
    let truth = gen.true_params.to_vector();
    let labels = ParameterSet::labels(&gen.spec, &default_item_ids(gen.spec.n_items()));
    let n = ok.len() as f64;
    let parameters = truth
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let est: Vec<f64> = ok.iter().map(|o| o.estimates[k]).collect();
            let m = mean(&est);
            let mse = est.iter().map(|e| (e - t) * (e - t)).sum::<f64>() / n;
            let intervals: Vec<(f64, f64)> = ok.iter().filter_map(|o| o.ci95.as_ref().map(|c| c[k])).collect();
            let hits = intervals.iter().filter(|(lo, hi)| *lo <= t && t <= *hi).count();
            ParameterRecovery {
                label: labels[k].clone(),
                truth: t,
                mean_estimate: m,
                bias: m - t,
                rmse: sqrt(mse),
                coverage: (!intervals.is_empty()).then(|| hits as f64 / intervals.len() as f64),
                n_intervals: intervals.len(),
            }
        })
        .collect();
    let accuracy: Vec<f64> = ok.iter().map(|o| o.classification_accuracy).collect();
    Ok(RecoveryReport {
        n_replicates: n_total,
        n_failed: failures.len(),
        failures,
        n_without_intervals: ok.iter().filter(|o| o.ci95.is_none()).count(),
        n_not_converged: ok.iter().filter(|o| !o.converged).count(),
        parameters,
        classification_accuracy: mean(&accuracy),
    })
}

pub fn recovery_study(gen: &GenSpec, n_replicates: usize, config: &EmConfig) -> Result<RecoveryReport> {
    if n_replicates < 2 {
        return Err(DcmError::Input("a recovery study needs at least 2 replicates".into()));
    }
    gen.validate()?;
    let outcomes = (0..n_replicates).map(|r| recovery_replicate(gen, config, r)).collect();
    summarize_recovery(gen, outcomes)
}

/// LCDM truth whose item main effects are evenly spaced over
/// `[base - spread, base + spread]` (floored), where `base` is the shared
/// main effect of the single-attribute one-parameter truth in `base`.
pub fn robustness_truth(base: &GenSpec, spread: f64) -> Result<GenSpec> {
    base.validate()?;
    if base.spec.n_attributes != 1 || base.spec.family != Family::OnePlcdm {
        return Err(DcmError::ModelMismatch(
            "robustness studies start from a single-attribute one-parameter truth".into(),
        ));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(DcmError::Input(format!("spread must be finite and non-negative, got {spread}")));
    }
    let n_items = base.spec.n_items();
    let centre = base.true_params.main_effects[0];
    let floor = base.spec.main_effect_floor;
    let effects = (0..n_items)
        .map(|i| {
            let t = if n_items == 1 { 0.5 } else { i as f64 / (n_items - 1) as f64 };
            (centre - spread + 2.0 * spread * t).max(floor)
        })
        .collect();
    let spec = ModelSpec::single_attribute(Family::Lcdm, n_items)?.with_floor(floor)?;
    let params = ParameterSet::new(&spec, base.true_params.intercepts.clone(), effects, base.true_params.structural.clone())?;
    Ok(GenSpec {
        true_params: params,
        spec,
        n_examinees: base.n_examinees,
        seed: base.seed,
        missing_rate: base.missing_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessOutcome {
    pub accuracy_one_pl: f64,
    pub accuracy_lcdm: f64,
    /// Share of examinees given the same MAP class by both fits.
    pub agreement: f64,
}

/// One replicate at one spread. Replicate `r` uses the same seeds at every
/// spread, so cells of the grid differ only through the violation.
pub fn robustness_replicate(base: &GenSpec, spread: f64, config: &EmConfig, replicate: usize) -> Result<RobustnessOutcome> {
    let truth = robustness_truth(base, spread)?;
    let (data_seed, fit_seed) = replicate_seeds(base.seed, replicate);
    let sim = simulate(&truth.clone().with_seed(data_seed))?;
    let config = config.clone().with_seed(fit_seed);
    let one = ModelSpec::single_attribute(Family::OnePlcdm, truth.spec.n_items())?.with_floor(truth.spec.main_effect_floor)?;
    let fit_one = fit(&sim.data, &one, &config)?;
    let fit_lcdm = fit(&sim.data, &truth.spec, &config)?;
    let a = map_classes(&fit_one.posteriors);
    let b = map_classes(&fit_lcdm.posteriors);
    let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    Ok(RobustnessOutcome {
        accuracy_one_pl: map_accuracy(&fit_one.posteriors, &sim.true_classes)?,
        accuracy_lcdm: map_accuracy(&fit_lcdm.posteriors, &sim.true_classes)?,
        agreement: same as f64 / a.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub spread: f64,
    pub accuracy_one_pl: f64,
    pub accuracy_lcdm: f64,
    pub median_accuracy_one_pl: f64,
    pub median_accuracy_lcdm: f64,
    pub agreement: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

pub fn summarize_robustness(spread: f64, outcomes: Vec<Result<RobustnessOutcome>>) -> Result<RobustnessRow> {
    let n_total = outcomes.len();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(o) => ok.push(o),
            Err(e) => failures.push(format!("spread {spread}, replicate {r}: {e}")),
        }
    }
    check_failures(n_total, &failures)?;
    let one: Vec<f64> = ok.iter().map(|o| o.accuracy_one_pl).collect();
    let lcdm: Vec<f64> = ok.iter().map(|o| o.accuracy_lcdm).collect();
    let agree: Vec<f64> = ok.iter().map(|o| o.agreement).collect();
    Ok(RobustnessRow {
        spread,
        accuracy_one_pl: mean(&one),
        accuracy_lcdm: mean(&lcdm),
        median_accuracy_one_pl: median(&one),
        median_accuracy_lcdm: median(&lcdm),
        agreement: mean(&agree),
        n_ok: ok.len(),
        n_failed: failures.len(),
    })
}

pub fn robustness_study(grid: &[f64], base: &GenSpec, n_replicates: usize, config: &EmConfig) -> Result<Vec<RobustnessRow>> {
    if n_replicates < 1 {
        return Err(DcmError::Input("a robustness study needs at least 1 replicate".into()));
    }
    grid.iter()
        .map(|&s| {
            robustness_truth(base, s)?;
            let outcomes = (0..n_replicates).map(|r| robustness_replicate(base, s, config, r)).collect();
            summarize_robustness(s, outcomes)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubscoreRow {
    pub subscore: usize,
    pub count: usize,
    pub min_posterior: f64,
    pub max_posterior: f64,
}

/// Whether the posterior of one attribute depends only on that attribute's
/// subscore, over the complete rows of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSufficiency {
    pub attribute: usize,
    pub items: Vec<usize>,
    pub max_spread: f64,
    pub holds: bool,
    pub per_subscore: Vec<SubscoreRow>,
}

pub fn attribute_sufficiency(
    params: &ParameterSet,
    spec: &ModelSpec,
    data: &ResponseMatrix,
    tolerance: f64,
) -> Result<Vec<AttributeSufficiency>> {
    params.validate_shape(spec)?;
    if data.n_items() != spec.n_items() {
        return Err(DcmError::Input(format!(
            "data has {} items, model has {}",
            data.n_items(),
            spec.n_items()
        )));
    }
    let mut groups: Vec<BTreeMap<usize, (usize, f64, f64)>> = vec![BTreeMap::new(); spec.n_attributes];
    for row in data.rows().filter(|r| r.iter().all(Option::is_some)) {
        let post = attribute_posteriors(params, spec, row)?;
        for (a, g) in groups.iter_mut().enumerate() {
            let sub = spec.items_of_attribute(a).iter().filter(|&&i| row[i] == Some(true)).count();
            let e = g.entry(sub).or_insert((0, f64::INFINITY, f64::NEG_INFINITY));
            e.0 += 1;
            e.1 = e.1.min(post[a]);
            e.2 = e.2.max(post[a]);
        }
    }
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(a, g)| {
            let per_subscore: Vec<SubscoreRow> = g
                .into_iter()
                .map(|(s, (count, lo, hi))| SubscoreRow {
                    subscore: s,
                    count,
                    min_posterior: lo,
                    max_posterior: hi,
                })
                .collect();
            let max_spread = per_subscore.iter().map(|r| r.max_posterior - r.min_posterior).fold(0.0, f64::max);
            AttributeSufficiency {
                attribute: a,
                items: spec.items_of_attribute(a),
                max_spread,
                holds: max_spread < tolerance,
                per_subscore,
            }
        })
        .collect())
}

/// Phi coefficient between two attributes implied by class weights.
pub fn attribute_phi(structural: &[f64], n_attributes: usize, a: usize, b: usize) -> f64 {
    let (mut pa, mut pb, mut pab) = (0.0, 0.0, 0.0);
    for (c, w) in structural.iter().enumerate() {
        let x = class_bit(c, a, n_attributes) == 1;
        let y = class_bit(c, b, n_attributes) == 1;
        if x {
            pa += w;
        }
        if y {
            pb += w;
        }
        if x && y {
            pab += w;
        }
    }
    let denom = sqrt(pa * (1.0 - pa) * pb * (1.0 - pb));
    if denom == 0.0 {
        return f64::NAN;
    }
    (pab - pa * pb) / denom
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub n_attributes: usize,
    /// Phi between attributes 0 and 1 under the generating weights.
    pub true_phi: Option<f64>,
    pub fitted_phi: Option<f64>,
    pub tolerance: f64,
    /// Posteriors computed from the generating parameters.
    pub at_truth: Vec<AttributeSufficiency>,
    /// Posteriors computed from the fitted parameters.
    pub at_fit: Vec<AttributeSufficiency>,
    pub max_spread_truth: f64,
    pub max_spread_fit: f64,
    /// Filled only for a single attribute, where the probe is the ordinary
    /// total-score sufficiency check of the fitted model.
    pub single_attribute: Option<SufficiencyReport>,
    pub fit: FitResult,
}

/// Generates data from `gen`, fits the one-parameter LCDM with the same
/// attribute structure, and measures how far each attribute posterior
/// departs from being a function of that attribute's subscore.
pub fn multiattribute_sufficiency_probe(gen: &GenSpec, config: &EmConfig) -> Result<ProbeReport> {
    gen.validate()?;
    let spec = ModelSpec::new(Family::OnePlcdm, gen.spec.n_attributes, gen.spec.item_attribute.clone())?
        .with_floor(gen.spec.main_effect_floor)?;
    let (data_seed, fit_seed) = replicate_seeds(gen.seed, 0);
    let sim = simulate(&gen.clone().with_seed(data_seed))?;
    let fitted = fit(&sim.data, &spec, &config.clone().with_seed(fit_seed))?;
    let at_truth = attribute_sufficiency(&gen.true_params, &gen.spec, &sim.data, PROBE_TOL)?;
    let at_fit = attribute_sufficiency(&fitted.params, &spec, &sim.data, PROBE_TOL)?;
    let max = |v: &[AttributeSufficiency]| v.iter().map(|a| a.max_spread).fold(0.0, f64::max);
    let phi = |w: &[f64]| (spec.n_attributes >= 2).then(|| attribute_phi(w, spec.n_attributes, 0, 1));
    let single_attribute = if spec.n_attributes == 1 {
        Some(sufficiency(&fitted.params, &spec, &sim.data, PROBE_TOL)?)
    } else {
        None
    };
    Ok(ProbeReport {
        n_attributes: spec.n_attributes,
        true_phi: phi(&gen.true_params.structural),
        fitted_phi: phi(&fitted.params.structural),
        tolerance: PROBE_TOL,
        max_spread_truth: max(&at_truth),
        max_spread_fit: max(&at_fit),
        at_truth,
        at_fit,
        single_attribute,
        fit: fitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::truth::nine_item_truth;

    fn reference(n: usize, seed: u64) -> GenSpec {
        let (spec, p) = nine_item_truth();
        GenSpec::new(spec, p, n, seed)
    }

    fn quick() -> EmConfig {
        EmConfig {
            n_starts: 2,
            ..EmConfig::default()
        }
    }

    #[test]
    fn generator_matches_model_probabilities() {
        let gen = reference(10_000, 5);
        let sim = simulate(&gen).unwrap();
        for c in 0..2 {
            let members: Vec<usize> = (0..10_000).filter(|&e| sim.true_classes[e] == c).collect();
            for i in 0..9 {
                let hits = members.iter().filter(|&&e| sim.data.get(e, i) == Some(true)).count();
                let emp = hits as f64 / members.len() as f64;
                let model = sigmoid(gen.true_params.logit(&gen.spec, i, c));
                assert!((emp - model).abs() < 0.02, "item {i} class {c}: {emp} vs {model}");
            }
        }
    }

    #[test]
    fn floor_effect_gives_no_class_signal() {
        let mut gen = reference(10_000, 9);
        gen.true_params.main_effects = vec![gen.spec.main_effect_floor];
        let sim = simulate(&gen).unwrap();
        for i in 0..9 {
            let rate = |c: usize| {
                let m: Vec<usize> = (0..10_000).filter(|&e| sim.true_classes[e] == c).collect();
                m.iter().filter(|&&e| sim.data.get(e, i) == Some(true)).count() as f64 / m.len() as f64
            };
            assert!((rate(1) - rate(0)).abs() < 0.02);
        }
    }

    #[test]
    fn missing_rate_is_honoured_and_deterministic() {
        let gen = reference(10_000, 3).with_missing_rate(0.1);
        let sim = simulate(&gen).unwrap();
        let frac = sim.data.missing_count() as f64 / 90_000.0;
        assert!((frac - 0.1).abs() < 0.01, "{frac}");
        assert_eq!(simulate(&gen).unwrap().data, sim.data);
        assert!(simulate(&reference(10, 1).with_missing_rate(0.6)).is_err());
    }

    #[test]
    fn map_accuracy_tie_credit() {
        let post = PosteriorMatrix::new(2, vec![0.5, 0.5, 0.2, 0.8, 0.9, 0.1]).unwrap();
        let acc = map_accuracy(&post, &[0, 1, 1]).unwrap();
        assert!((acc - 1.5 / 3.0).abs() < 1e-15);
        assert_eq!(map_classes(&post), vec![0, 1, 0]);
    }

    #[test]
    fn separated_classes_are_recovered() {
        let (spec, mut p) = nine_item_truth();
        p.intercepts = vec![-6.0; 9];
        p.main_effects = vec![12.0];
        let gen = GenSpec::new(spec, p, 300, 4);
        let rep = recovery_study(&gen, 2, &quick()).unwrap();
        assert!(rep.classification_accuracy > 0.99);
        assert_eq!(rep.n_failed, 0);
    }

    #[test]
    fn recovery_error_shrinks_with_sample_size() {
        let small = recovery_study(&reference(50, 11), 8, &quick()).unwrap();
        let large = recovery_study(&reference(2000, 11), 8, &quick()).unwrap();
        let rmse = |r: &RecoveryReport| r.parameter("lambda1").unwrap().rmse;
        assert!(rmse(&small) > rmse(&large));
        for p in &large.parameters {
            assert!(p.rmse + 1e-15 >= p.bias.abs());
            if let Some(c) = p.coverage {
                assert!((0.0..=1.0).contains(&c));
            }
        }
    }

    #[test]
    fn too_many_failures_is_an_error() {
        let outcomes: Vec<Result<ReplicateOutcome>> = (0..5)
            .map(|r| {
                if r < 2 {
                    Err(DcmError::Estimation("boom".into()))
                } else {
                    Ok(ReplicateOutcome {
                        replicate: r,
                        estimates: reference(1, 0).true_params.to_vector(),
                        ci95: None,
                        classification_accuracy: 1.0,
                        converged: true,
                    })
                }
            })
            .collect();
        assert!(matches!(summarize_recovery(&reference(1, 0), outcomes), Err(DcmError::Estimation(_))));
    }

    #[test]
    fn robustness_truth_spacing() {
        let gen = robustness_truth(&reference(100, 0), 1.0).unwrap();
        let me = &gen.true_params.main_effects;
        assert!((me[0] - 1.15).abs() < 1e-12 && (me[8] - 3.15).abs() < 1e-12);
        let wide = robustness_truth(&reference(100, 0), 5.0).unwrap();
        assert_eq!(wide.true_params.main_effects[0], wide.spec.main_effect_floor);
        let flat = robustness_truth(&reference(100, 0), 0.0).unwrap();
        assert!(flat.true_params.main_effects.iter().all(|&m| m == 2.15));
        assert!(robustness_truth(&reference(100, 0), -1.0).is_err());
    }

    #[test]
    fn single_cell_grid() {
        let rows = robustness_study(&[0.5], &reference(300, 2), 2, &quick()).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].agreement > 0.8);
    }

    fn two_attribute(structural: Vec<f64>) -> GenSpec {
        let spec = ModelSpec::new(Family::OnePlcdm, 2, vec![0, 0, 0, 1, 1, 1]).unwrap();
        let p = ParameterSet::new(&spec, vec![-1.0, -0.3, -2.0, -1.5, 0.2, -0.8], vec![2.0, 2.5], structural).unwrap();
        GenSpec::new(spec, p, 1500, 17)
    }

    #[test]
    fn factorised_weights_keep_attribute_sufficiency() {
        let pa: f64 = 0.6;
        let pb: f64 = 0.3;
        let w = vec![(1.0 - pa) * (1.0 - pb), (1.0 - pa) * pb, pa * (1.0 - pb), pa * pb];
        let report = multiattribute_sufficiency_probe(&two_attribute(w), &quick()).unwrap();
        assert!(report.max_spread_truth < PROBE_TOL, "{}", report.max_spread_truth);
        assert!(report.true_phi.unwrap().abs() < 1e-12);
    }

    #[test]
    fn correlated_weights_break_attribute_sufficiency() {
        let report = multiattribute_sufficiency_probe(&two_attribute(vec![0.4, 0.1, 0.1, 0.4]), &quick()).unwrap();
        assert!(report.max_spread_truth > 1e-3);
        assert!(report.max_spread_fit > 1e-3);
        assert!((report.true_phi.unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn probe_reduces_to_sufficiency_for_one_attribute() {
        let report = multiattribute_sufficiency_probe(&reference(500, 8), &quick()).unwrap();
        let single = report.single_attribute.as_ref().unwrap();
        assert!(single.holds);
        assert!((report.max_spread_fit - single.max_within_score_spread).abs() < 1e-12);
    }
}
