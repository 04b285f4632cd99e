//! Marginal maximum likelihood by EM.
//!
//! The E-step computes class responsibilities per distinct response pattern.
//! The item M-step exploits the fact that, for simple-structure items, the
//! expected complete-data log-likelihood only depends on four weighted counts
//! per item (observed and correct responses among masters and non-masters of
//! the item's attribute). Each main-effect block (one item under the LCDM,
//! all items of an attribute under the one-parameter LCDM) is then a concave
//! problem in `(intercepts, slope)` with the slope bounded below by the
//! model's floor. It is solved by profiling: intercepts are exact 1-D roots
//! for a given slope, and the profiled slope score is monotone, so the bound
//! is active exactly when the score is non-positive at the floor.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DcmError, Result};
use crate::math::{exp, fabs, log, logit, log_sum_exp, sigmoid, softplus};
use crate::model::{
    check_compatible, class_bit, pattern_string, Family, LogTables, ModelSpec, ParameterSet,
    PatternTable, ResponseMatrix,
};
use crate::rng;

/// Item parameters are confined to `[-LOGIT_BOUND, LOGIT_BOUND]`. The bound
/// only binds when the likelihood has no finite maximiser (an item answered
/// identically by everyone, or perfectly separated classes).
pub const LOGIT_BOUND: f64 = 30.0;

/// Two multistart optima closer than this in log-likelihood count as tied.
pub const START_TIE_TOL: f64 = 1e-8;

const BISECTION_MAX: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub max_iterations: usize,
    pub loglik_tol: f64,
    pub param_tol: f64,
    pub n_starts: usize,
    pub seed: u64,
    pub inner_newton_max: usize,
    pub inner_tol: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            loglik_tol: 1e-8,
            param_tol: 1e-6,
            n_starts: 5,
            seed: 0,
            inner_newton_max: 50,
            inner_tol: 1e-10,
        }
    }
}

impl EmConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.max_iterations == 0 || self.n_starts == 0 || self.inner_newton_max == 0 {
            return Err(DcmError::Input(
                "max_iterations, n_starts and inner_newton_max must be at least 1".into(),
            ));
        }
        if !positive(self.loglik_tol) || !positive(self.param_tol) || !positive(self.inner_tol) {
            return Err(DcmError::Input("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// N x 2^A table of class responsibilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMatrix {
    n_classes: usize,
    values: Vec<f64>,
}

impl PosteriorMatrix {
    /// Validates that every row is a probability vector (sum within 1e-10).
    pub fn new(n_classes: usize, values: Vec<f64>) -> Result<Self> {
        if n_classes == 0 || values.len() % n_classes != 0 {
            return Err(DcmError::Input("posterior table has a ragged shape".into()));
        }
        for (e, row) in values.chunks(n_classes).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|w| !(0.0..=1.0).contains(w)) || fabs(sum - 1.0) > 1e-10 {
                return Err(DcmError::Input(format!("posterior row {e} is not normalised")));
            }
        }
        Ok(Self { n_classes, values })
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.n_classes
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, e: usize) -> &[f64] {
        &self.values[e * self.n_classes..(e + 1) * self.n_classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_classes)
    }
}

/// Converged (or best-effort) estimates plus bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub params: ParameterSet,
    pub loglik: f64,
    pub loglik_trace: Vec<f64>,
    pub n_params: usize,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    pub n_iterations: usize,
    pub posteriors: PosteriorMatrix,
    pub standard_errors: Option<Vec<f64>>,
    pub ci95: Option<Vec<(f64, f64)>>,
    pub warnings: Vec<String>,
    pub n_examinees: usize,
    pub item_ids: Vec<String>,
    pub data_fingerprint: String,
}

impl FitResult {
    /// Labels matching `standard_errors` / `ci95` / `params.to_vector()`.
    pub fn parameter_labels(&self) -> Vec<String> {
        ParameterSet::labels(&self.spec, &self.item_ids)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitIndices {
    pub loglik: f64,
    pub n_params: usize,
    pub aic: f64,
    pub bic: f64,
}

pub fn fit_indices(fit: &FitResult) -> FitIndices {
    information_criteria(fit.loglik, fit.n_params, fit.n_examinees)
}

pub fn information_criteria(loglik: f64, n_params: usize, n_examinees: usize) -> FitIndices {
    let k = n_params as f64;
    FitIndices {
        loglik,
        n_params,
        aic: -2.0 * loglik + 2.0 * k,
        bic: -2.0 * loglik + k * log(n_examinees as f64),
    }
}

/// Likelihood-ratio statistic for the one-parameter LCDM nested in the LCDM.
/// The p-value needs a chi-square tail and is added by the `dcm` crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrStatistic {
    pub statistic: f64,
    pub df: usize,
    /// `2 (l_full - l_reduced)` before clamping at zero.
    pub raw: f64,
}

pub fn likelihood_ratio(full: &FitResult, reduced: &FitResult) -> Result<LrStatistic> {
    if full.data_fingerprint != reduced.data_fingerprint {
        return Err(DcmError::Input("fits were computed on different data".into()));
    }
    if full.spec.family != Family::Lcdm || reduced.spec.family != Family::OnePlcdm {
        return Err(DcmError::ModelMismatch(
            "expected an LCDM full model and a one-parameter LCDM reduced model".into(),
        ));
    }
    if full.spec.item_attribute != reduced.spec.item_attribute
        || full.spec.n_attributes != reduced.spec.n_attributes
    {
        return Err(DcmError::Input("fits use different attribute structures".into()));
    }
    let raw = 2.0 * (full.loglik - reduced.loglik);
    Ok(LrStatistic {
        statistic: raw.max(0.0),
        df: full.n_params - reduced.n_params,
        raw,
    })
}

/// Weighted counts entering the expected complete-data log-likelihood of one
/// item: observed (`n`) and correct (`r`) responses among non-masters (`0`)
/// and masters (`1`) of the item's attribute.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemStats {
    pub n0: f64,
    pub r0: f64,
    pub n1: f64,
    pub r1: f64,
}

impl ItemStats {
    fn add(&mut self, bit: u8, x: bool, w: f64) {
        if bit == 0 {
            self.n0 += w;
            if x {
                self.r0 += w;
            }
        } else {
            self.n1 += w;
            if x {
                self.r1 += w;
            }
        }
    }

    fn total_correct(&self) -> f64 {
        self.r0 + self.r1
    }

    fn total_observed(&self) -> f64 {
        self.n0 + self.n1
    }
}

/// Accumulates [`ItemStats`] from row-level responsibilities.
pub fn item_stats(
    posteriors: &PosteriorMatrix,
    data: &ResponseMatrix,
    spec: &ModelSpec,
) -> Result<Vec<ItemStats>> {
    if posteriors.n_rows() != data.n_examinees() || posteriors.n_classes() != spec.n_classes() {
        return Err(DcmError::Input("posterior table does not match the data".into()));
    }
    if data.n_items() != spec.n_items() {
        return Err(DcmError::Input("data and model item counts differ".into()));
    }
    let mut stats = vec![ItemStats::default(); spec.n_items()];
    for (row, w) in data.rows().zip(posteriors.rows()) {
        accumulate(&mut stats, spec, row, w, 1.0);
    }
    Ok(stats)
}

fn accumulate(stats: &mut [ItemStats], spec: &ModelSpec, row: &[Option<bool>], w: &[f64], count: f64) {
    for (i, x) in row.iter().enumerate() {
        let Some(x) = *x else { continue };
        let a = spec.item_attribute[i];
        for (c, wc) in w.iter().enumerate() {
            stats[i].add(class_bit(c, a, spec.n_attributes), x, count * wc);
        }
    }
}

/// Expected complete-data log-likelihood of the item parameters.
pub fn expected_item_objective(stats: &[ItemStats], spec: &ModelSpec, params: &ParameterSet) -> f64 {
    stats
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let eta0 = params.intercepts[i];
            let eta1 = eta0 + params.main_effect_for(spec, i);
            s.r0 * eta0 - s.n0 * softplus(eta0) + s.r1 * eta1 - s.n1 * softplus(eta1)
        })
        .sum()
}

/// Gradient of [`expected_item_objective`] with respect to
/// `(intercepts, main_effects)` on the natural scale.
pub fn expected_item_gradient(stats: &[ItemStats], spec: &ModelSpec, params: &ParameterSet) -> Vec<f64> {
    let n_items = spec.n_items();
    let mut grad = vec![0.0; n_items + spec.n_main_effects()];
    for (i, s) in stats.iter().enumerate() {
        let eta0 = params.intercepts[i];
        let eta1 = eta0 + params.main_effect_for(spec, i);
        let g1 = s.r1 - s.n1 * sigmoid(eta1);
        grad[i] = s.r0 - s.n0 * sigmoid(eta0) + g1;
        grad[n_items + spec.main_effect_index(i)] += g1;
    }
    grad
}

/// Responsibilities `pi_c L_ec / sum_c' pi_c' L_ec'` for every examinee.
pub fn e_step(params: &ParameterSet, spec: &ModelSpec, data: &ResponseMatrix) -> Result<PosteriorMatrix> {
    check_compatible(params, spec, data)?;
    let patterns = PatternTable::new(data);
    let (_, post) = pattern_e_step(params, spec, &patterns, data.examinee_ids())?;
    Ok(expand_posteriors(&post, &patterns, spec.n_classes()))
}

/// Item M-step from row-level responsibilities.
pub fn m_step_items(
    posteriors: &PosteriorMatrix,
    data: &ResponseMatrix,
    spec: &ModelSpec,
    current: &ParameterSet,
    config: &EmConfig,
) -> Result<ParameterSet> {
    current.validate_shape(spec)?;
    let stats = item_stats(posteriors, data, spec)?;
    let (intercepts, main_effects, _) = solve_items(&stats, spec, current, config)?;
    Ok(ParameterSet {
        intercepts,
        main_effects,
        structural: current.structural.clone(),
    })
}

/// Column means of the responsibility table, renormalised to sum to one.
pub fn m_step_structural(posteriors: &PosteriorMatrix) -> Vec<f64> {
    let n = posteriors.n_rows() as f64;
    let mut pi = vec![0.0; posteriors.n_classes()];
    for row in posteriors.rows() {
        for (p, w) in pi.iter_mut().zip(row) {
            *p += w;
        }
    }
    for p in &mut pi {
        *p /= n;
    }
    normalise(&mut pi);
    pi
}

fn normalise(pi: &mut [f64]) {
    let total: f64 = pi.iter().sum();
    for p in pi.iter_mut() {
        *p /= total;
    }
}

/// Fits the model by EM with `config.n_starts` random starts and returns the
/// best solution.
pub fn fit(data: &ResponseMatrix, spec: &ModelSpec, config: &EmConfig) -> Result<FitResult> {
    config.validate()?;
    spec.validate()?;
    if data.n_items() != spec.n_items() {
        return Err(DcmError::Input(format!(
            "data has {} items, model has {}",
            data.n_items(),
            spec.n_items()
        )));
    }
    let patterns = PatternTable::new(data);
    if patterns.patterns.len() == 1 {
        return Err(DcmError::DegenerateData(format!(
            "every examinee has the identical response pattern '{}'",
            pattern_string(&patterns.patterns[0])
        )));
    }
    let p_values = item_p_values(data);

    let mut best: Option<EmRun> = None;
    let mut first_error = None;
    for start in 0..config.n_starts {
        let mut rng = rng::stream(config.seed, start as u64);
        let init = initial_values(spec, &p_values, &mut rng);
        match run_em(&patterns, data.examinee_ids(), spec, config, init) {
            Ok(run) => {
                best = Some(match best {
                    None => run,
                    Some(b) => pick_better(b, run),
                })
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let Some(run) = best else {
        return Err(first_error.expect("at least one start ran"));
    };

    let (_, post) = pattern_e_step(&run.params, spec, &patterns, data.examinee_ids())?;
    let posteriors = expand_posteriors(&post, &patterns, spec.n_classes());
    let loglik = *run.trace.last().expect("trace is never empty");
    let n_params = spec.n_free_params();
    let ic = information_criteria(loglik, n_params, data.n_examinees());

    let mut warnings = Vec::new();
    if !run.converged {
        warnings.push(format!(
            "EM did not converge within {} iterations",
            config.max_iterations
        ));
    }
    if run.bound_hit {
        warnings.push(format!(
            "an item parameter reached the +/-{LOGIT_BOUND} logit bound; the likelihood has no finite maximiser"
        ));
    }
    if let Some(k) = run.params.main_effects.iter().position(|&m| m <= spec.main_effect_floor) {
        warnings.push(format!("main effect {k} is pinned at the floor {}", spec.main_effect_floor));
    }

    Ok(FitResult {
        spec: spec.clone(),
        params: run.params,
        loglik,
        loglik_trace: run.trace,
        n_params,
        aic: ic.aic,
        bic: ic.bic,
        converged: run.converged,
        n_iterations: run.iterations,
        posteriors,
        standard_errors: None,
        ci95: None,
        warnings,
        n_examinees: data.n_examinees(),
        item_ids: data.item_ids().to_vec(),
        data_fingerprint: data.fingerprint(),
    })
}

#[derive(Debug, Clone)]
struct EmRun {
    params: ParameterSet,
    trace: Vec<f64>,
    converged: bool,
    iterations: usize,
    bound_hit: bool,
}

fn pick_better(a: EmRun, b: EmRun) -> EmRun {
    let la = *a.trace.last().unwrap();
    let lb = *b.trace.last().unwrap();
    if fabs(la - lb) < START_TIE_TOL {
        if b.params.norm() < a.params.norm() {
            b
        } else {
            a
        }
    } else if lb > la {
        b
    } else {
        a
    }
}

fn item_p_values(data: &ResponseMatrix) -> Vec<f64> {
    (0..data.n_items())
        .map(|i| {
            let (mut n, mut r) = (0usize, 0usize);
            for e in 0..data.n_examinees() {
                if let Some(x) = data.get(e, i) {
                    n += 1;
                    r += usize::from(x);
                }
            }
            if n == 0 {
                0.5
            } else {
                r as f64 / n as f64
            }
        })
        .collect()
}

/// Start values: slope(s) uniform on [0.5, 2.5], intercept = logit(p-value)
/// minus half the item's slope, mixing weights drawn around uniform.
fn initial_values<R: Rng>(spec: &ModelSpec, p_values: &[f64], rng: &mut R) -> ParameterSet {
    let main_effects: Vec<f64> = (0..spec.n_main_effects())
        .map(|_| rng.random_range(0.5..2.5))
        .collect();
    let intercepts = p_values
        .iter()
        .enumerate()
        .map(|(i, p)| logit(p.clamp(0.01, 0.99)) - 0.5 * main_effects[spec.main_effect_index(i)])
        .collect();
    let structural = if spec.n_attributes == 1 {
        let p1: f64 = rng.random_range(0.3..0.7);
        vec![1.0 - p1, p1]
    } else {
        let mut w: Vec<f64> = (0..spec.n_classes()).map(|_| rng.random_range(0.3..0.7)).collect();
        normalise(&mut w);
        w
    };
    ParameterSet {
        intercepts,
        main_effects,
        structural,
    }
}

fn run_em(
    patterns: &PatternTable,
    ids: &[String],
    spec: &ModelSpec,
    config: &EmConfig,
    init: ParameterSet,
) -> Result<EmRun> {
    let mut params = init;
    let (mut ll, mut post) = pattern_e_step(&params, spec, patterns, ids)?;
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let mut bound_hit = false;
    for it in 1..=config.max_iterations {
        let mut stats = vec![ItemStats::default(); spec.n_items()];
        let mut pi = vec![0.0; spec.n_classes()];
        for (k, pattern) in patterns.patterns.iter().enumerate() {
            let w = &post[k * spec.n_classes()..(k + 1) * spec.n_classes()];
            accumulate(&mut stats, spec, pattern, w, patterns.counts[k]);
            for (p, wc) in pi.iter_mut().zip(w) {
                *p += patterns.counts[k] * wc;
            }
        }
        normalise(&mut pi);
        let (intercepts, main_effects, hit) = solve_items(&stats, spec, &params, config)?;
        bound_hit |= hit;
        let next = ParameterSet {
            intercepts,
            main_effects,
            structural: pi,
        };
        let (next_ll, next_post) = pattern_e_step(&next, spec, patterns, ids)?;
        let step = params
            .to_vector()
            .iter()
            .zip(next.to_vector())
            .map(|(a, b)| fabs(a - b))
            .fold(0.0, f64::max);
        trace.push(next_ll);
        iterations = it;
        params = next;
        post = next_post;
        if fabs(next_ll - ll) < config.loglik_tol || step < config.param_tol {
            converged = true;
            break;
        }
        ll = next_ll;
    }
    Ok(EmRun {
        params,
        trace,
        converged,
        iterations,
        bound_hit,
    })
}

/// Log-likelihood and per-pattern responsibilities (row-major, pattern x class).
pub(crate) fn pattern_e_step(
    params: &ParameterSet,
    spec: &ModelSpec,
    patterns: &PatternTable,
    ids: &[String],
) -> Result<(f64, Vec<f64>)> {
    let n_classes = spec.n_classes();
    let tables = LogTables::new(params, spec);
    let log_pi: Vec<f64> = params.structural.iter().map(|p| log(*p)).collect();
    let mut post = vec![0.0; patterns.patterns.len() * n_classes];
    let mut ll = 0.0;
    let mut joint = vec![0.0; n_classes];
    for (k, pattern) in patterns.patterns.iter().enumerate() {
        tables.joint(pattern, &log_pi, &mut joint);
        let lse = log_sum_exp(&joint);
        if !lse.is_finite() {
            return Err(DcmError::NumericalDegeneracy(format!(
                "examinee '{}' has zero total likelihood",
                ids[patterns.first_row[k]]
            )));
        }
        ll += patterns.counts[k] * lse;
        for (c, j) in joint.iter().enumerate() {
            post[k * n_classes + c] = exp(j - lse);
        }
    }
    Ok((ll, post))
}

fn expand_posteriors(post: &[f64], patterns: &PatternTable, n_classes: usize) -> PosteriorMatrix {
    let mut values = Vec::with_capacity(patterns.row_pattern.len() * n_classes);
    for &k in &patterns.row_pattern {
        values.extend_from_slice(&post[k * n_classes..(k + 1) * n_classes]);
    }
    PosteriorMatrix { n_classes, values }
}

/// Maximises the expected complete-data objective over all item parameters.
/// Returns `(intercepts, main_effects, bound_hit)`.
fn solve_items(
    stats: &[ItemStats],
    spec: &ModelSpec,
    current: &ParameterSet,
    config: &EmConfig,
) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    let mut intercepts = current.intercepts.clone();
    let mut main_effects = current.main_effects.clone();
    let mut bound_hit = false;
    let blocks: Vec<Vec<usize>> = match spec.family {
        Family::Lcdm => (0..spec.n_items()).map(|i| vec![i]).collect(),
        Family::OnePlcdm => (0..spec.n_attributes).map(|a| spec.items_of_attribute(a)).collect(),
    };
    for (k, items) in blocks.iter().enumerate() {
        let block_stats: Vec<ItemStats> = items.iter().map(|&i| stats[i]).collect();
        let warm: Vec<f64> = items.iter().map(|&i| intercepts[i]).collect();
        let sol = solve_block(
            &block_stats,
            spec.main_effect_floor,
            main_effects[k],
            &warm,
            config,
        )
        .map_err(|e| match e {
            DcmError::Estimation(msg) => {
                DcmError::Estimation(format!("M-step for main effect {k}: {msg}"))
            }
            other => other,
        })?;
        for (slot, &i) in items.iter().enumerate() {
            intercepts[i] = sol.intercepts[slot];
        }
        main_effects[k] = sol.slope;
        bound_hit |= sol.bound_hit;
    }
    Ok((intercepts, main_effects, bound_hit))
}

struct BlockSolution {
    intercepts: Vec<f64>,
    slope: f64,
    bound_hit: bool,
}

/// Maximises `sum_i r0 e0 - n0 sp(e0) + r1 (e0 + s) - n1 sp(e0 + s)` over the
/// block's intercepts `e0` and a shared slope `s >= floor`.
fn solve_block(
    stats: &[ItemStats],
    floor: f64,
    slope_start: f64,
    warm: &[f64],
    config: &EmConfig,
) -> Result<BlockSolution> {
    let mut intercepts = warm.to_vec();
    let mut bound_hit = false;

    // profiled slope score and its derivative; updates `intercepts` in place
    let profile = |s: f64, intercepts: &mut [f64], bound_hit: &mut bool| -> Result<(f64, f64)> {
        let mut g = 0.0;
        let mut dg = 0.0;
        for (st, e0) in stats.iter().zip(intercepts.iter_mut()) {
            let (root, hit) = intercept_given_slope(st, s, *e0, config)?;
            *bound_hit |= hit;
            *e0 = root;
            let p0 = sigmoid(root);
            let p1 = sigmoid(root + s);
            let h0 = st.n0 * p0 * (1.0 - p0);
            let h1 = st.n1 * p1 * (1.0 - p1);
            g += st.r1 - st.n1 * p1;
            if h0 + h1 > 0.0 {
                dg -= h0 * h1 / (h0 + h1);
            }
        }
        Ok((g, dg))
    };

    let (g_floor, _) = profile(floor, &mut intercepts, &mut bound_hit)?;
    if g_floor <= 0.0 {
        return Ok(BlockSolution {
            intercepts,
            slope: floor,
            bound_hit,
        });
    }
    let mut probe = intercepts.clone();
    let (g_top, _) = profile(LOGIT_BOUND, &mut probe, &mut bound_hit)?;
    if g_top >= 0.0 {
        return Ok(BlockSolution {
            intercepts: probe,
            slope: LOGIT_BOUND,
            bound_hit: true,
        });
    }
    let start = slope_start.clamp(floor, LOGIT_BOUND);
    let slope = find_root_decreasing(
        |s| profile(s, &mut intercepts, &mut bound_hit),
        floor,
        LOGIT_BOUND,
        start,
        config,
    )?;
    // leave the intercepts consistent with the returned slope
    profile(slope, &mut intercepts, &mut bound_hit)?;
    Ok(BlockSolution {
        intercepts,
        slope,
        bound_hit,
    })
}

/// Root in the intercept of `r0 + r1 - n0 s(e) - n1 s(e + slope)`.
fn intercept_given_slope(st: &ItemStats, slope: f64, warm: f64, config: &EmConfig) -> Result<(f64, bool)> {
    let correct = st.total_correct();
    let observed = st.total_observed();
    if correct <= 0.0 {
        return Ok((-LOGIT_BOUND, true));
    }
    if correct >= observed {
        return Ok((LOGIT_BOUND, true));
    }
    let f = |e: f64| -> Result<(f64, f64)> {
        let p0 = sigmoid(e);
        let p1 = sigmoid(e + slope);
        Ok((
            correct - st.n0 * p0 - st.n1 * p1,
            -(st.n0 * p0 * (1.0 - p0) + st.n1 * p1 * (1.0 - p1)),
        ))
    };
    let (lo_val, _) = f(-LOGIT_BOUND)?;
    if lo_val <= 0.0 {
        return Ok((-LOGIT_BOUND, true));
    }
    let (hi_val, _) = f(LOGIT_BOUND)?;
    if hi_val >= 0.0 {
        return Ok((LOGIT_BOUND, true));
    }
    let root = find_root_decreasing(f, -LOGIT_BOUND, LOGIT_BOUND, warm, config)?;
    Ok((root, false))
}

/// Safeguarded Newton for a decreasing function with `f(lo) > 0 > f(hi)`.
/// After `inner_newton_max` Newton iterations it falls back to bisection.
fn find_root_decreasing<F>(mut f: F, lo: f64, hi: f64, start: f64, config: &EmConfig) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let (mut lo, mut hi) = (lo, hi);
    let mut x = start.clamp(lo, hi);
    let close = |a: f64, b: f64| fabs(a - b) <= config.inner_tol * (1.0 + fabs(a));
    for _ in 0..config.inner_newton_max {
        let (fx, dfx) = f(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = if dfx < 0.0 { x - fx / dfx } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if close(x, next) || close(lo, hi) {
            return Ok(next);
        }
        x = next;
    }
    for _ in 0..BISECTION_MAX {
        let mid = 0.5 * (lo + hi);
        let (fm, _) = f(mid)?;
        if fm == 0.0 || close(lo, hi) {
            return Ok(mid);
        }
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(DcmError::Estimation(format!(
        "root search did not converge (bracket [{lo}, {hi}])"
    )))
}
