//! Command-line front end.
//!
//! Every flag may also be set in a TOML file given with `--config`; flags on
//! the command line win. Exit codes: 0 success, 2 usage, 3 parse, 4
//! estimation, 5 I/O. Failures print a JSON error record on stderr.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use clap::{Args, Parser, Subcommand};
use dcm_core::classify::{attribute_posteriors, classify, classify_examinees, cutscore, score_table, ScorePosteriorTable};
use dcm_core::diagnostics::{
    bar_chart, check_monotonicity, item_ordering, person_ordering, sufficiency, MonotonicityReport, OrderingReport,
    SortClass, SufficiencyReport, DEFAULT_SUFFICIENCY_TOL,
};
use dcm_core::em::{fit, fit_indices, EmConfig, FitIndices, FitResult};
use dcm_core::inference::{standard_errors, ParameterEstimate};
use dcm_core::invariance::{item_free_experiment, ItemFreeReport, PersonFreeReport, ResampleMode};
use dcm_core::model::{pattern_string, total_score};
use dcm_core::simulate::{multiattribute_sufficiency_probe, simulate, GenSpec, ProbeReport, RecoveryReport, RobustnessRow};
use dcm_core::truth::nine_item_truth;
use dcm_core::{enumerate_classes, DcmError, Family, ModelSpec, ParameterSet, ResponseMatrix};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::{ingest_qmatrix, ingest_responses, load_fit, ReadOptions, DEFAULT_MISSING_TOKEN};
use crate::lr::{lr_test, LrTest};
use crate::report::*;
use crate::studies;

#[derive(Debug, Parser)]
#[command(name = "dcm", version, about = "Diagnostic classification with the LCDM and the one-parameter LCDM")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate a model and report parameters with standard errors
    Fit(Flags),
    /// Posterior probability of proficiency and status per examinee
    Classify(Flags),
    /// Sufficiency, monotonicity, item and person ordering checks
    Diagnose(Flags),
    /// Item-free and person-free measurement experiments
    Invariance(Flags),
    /// Generate data or run recovery / robustness / probe studies
    Simulate(Flags),
    /// Fit both models, likelihood-ratio test and score tables
    Compare(Flags),
}

impl Command {
    fn parts(&self) -> (&'static str, &Flags) {
        match self {
            Command::Fit(f) => ("fit", f),
            Command::Classify(f) => ("classify", f),
            Command::Diagnose(f) => ("diagnose", f),
            Command::Invariance(f) => ("invariance", f),
            Command::Simulate(f) => ("simulate", f),
            Command::Compare(f) => ("compare", f),
        }
    }
}

/// Options shared by all commands. The same keys are accepted in the config
/// file (with underscores, e.g. `max_iter`).
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    /// TOML file with default values for any flag
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Response CSV (header row, first column examinee ids)
    #[arg(long)]
    pub responses: Option<PathBuf>,
    /// Q-matrix CSV for more than one attribute
    #[arg(long)]
    pub qmatrix: Option<PathBuf>,
    /// Saved fit (fit.json) to use instead of calibrating
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// lcdm or 1plcdm
    #[arg(long)]
    pub model: Option<String>,
    /// Posterior threshold for PROFICIENT (default 0.5)
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of EM starts
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Log-likelihood convergence tolerance
    #[arg(long)]
    pub tol: Option<f64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// json, csv or both
    #[arg(long)]
    pub format: Option<String>,
    /// Token marking a missing response (default NA)
    #[arg(long)]
    pub missing_token: Option<String>,
    /// Subtest length for the item-free experiment
    #[arg(long)]
    pub k: Option<usize>,
    /// simulate: generate, recovery, robustness or probe
    #[arg(long)]
    pub study: Option<String>,
    /// simulate: examinees per dataset
    #[arg(long)]
    pub n_examinees: Option<usize>,
    /// simulate: number of replicates
    #[arg(long)]
    pub replicates: Option<usize>,
    /// simulate: comma-separated main-effect spreads for robustness
    #[arg(long, value_delimiter = ',')]
    pub spreads: Option<Vec<f64>>,
    /// simulate: share of responses set missing at random
    #[arg(long)]
    pub missing_rate: Option<f64>,
}

impl Flags {
    fn or(self, file: Flags) -> Flags {
        Flags {
            config: self.config,
            responses: self.responses.or(file.responses),
            qmatrix: self.qmatrix.or(file.qmatrix),
            params: self.params.or(file.params),
            model: self.model.or(file.model),
            threshold: self.threshold.or(file.threshold),
            seed: self.seed.or(file.seed),
            starts: self.starts.or(file.starts),
            max_iter: self.max_iter.or(file.max_iter),
            tol: self.tol.or(file.tol),
            out: self.out.or(file.out),
            format: self.format.or(file.format),
            missing_token: self.missing_token.or(file.missing_token),
            k: self.k.or(file.k),
            study: self.study.or(file.study),
            n_examinees: self.n_examinees.or(file.n_examinees),
            replicates: self.replicates.or(file.replicates),
            spreads: self.spreads.or(file.spreads),
            missing_rate: self.missing_rate.or(file.missing_rate),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    Generate,
    Recovery,
    Robustness,
    Probe,
}

/// Fully resolved settings; echoed in every report manifest.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub responses: Option<PathBuf>,
    pub qmatrix: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub model: Family,
    pub model_given: bool,
    pub threshold: f64,
    pub em: EmConfig,
    pub out: PathBuf,
    pub formats: Formats,
    pub missing_token: String,
    pub k: Option<usize>,
    pub study: Study,
    pub n_examinees: usize,
    pub replicates: usize,
    pub spreads: Vec<f64>,
    pub missing_rate: f64,
}

pub const DEFAULT_OUT: &str = "dcm-output";
pub const DEFAULT_SPREADS: [f64; 4] = [0.0, 0.5, 1.0, 1.5];

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl RunConfig {
    pub fn resolve(command: &str, flags: Flags) -> Result<RunConfig> {
        let flags = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                let file: Flags = toml::from_str(&text).map_err(|e| CliError::Format {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                flags.or(file)
            }
            None => flags,
        };
        let model = match &flags.model {
            Some(m) => m.parse::<Family>().map_err(|_| usage(format!("unknown model '{m}' (use lcdm or 1plcdm)")))?,
            None => Family::OnePlcdm,
        };
        let threshold = flags.threshold.unwrap_or(0.5);
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(usage(format!("threshold must be in (0, 1), got {threshold}")));
        }
        let format = flags.format.as_deref().unwrap_or("both");
        let formats = Formats::parse(format).ok_or_else(|| usage(format!("unknown format '{format}' (use json, csv or both)")))?;
        let mut em = EmConfig::default();
        if let Some(s) = flags.seed {
            em.seed = s;
        }
        if let Some(s) = flags.starts {
            em.n_starts = s;
        }
        if let Some(m) = flags.max_iter {
            em.max_iterations = m;
        }
        if let Some(t) = flags.tol {
            em.loglik_tol = t;
        }
        em.validate().map_err(|e| usage(e.to_string()))?;
        let study = match flags.study.as_deref().unwrap_or("generate") {
            "generate" => Study::Generate,
            "recovery" => Study::Recovery,
            "robustness" => Study::Robustness,
            "probe" => Study::Probe,
            other => return Err(usage(format!("unknown study '{other}'"))),
        };
        let cfg = RunConfig {
            command: command.into(),
            responses: flags.responses,
            qmatrix: flags.qmatrix,
            params: flags.params,
            model_given: flags.model.is_some(),
            model,
            threshold,
            em,
            out: flags.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            formats,
            missing_token: flags.missing_token.unwrap_or_else(|| DEFAULT_MISSING_TOKEN.into()),
            k: flags.k,
            study,
            n_examinees: flags.n_examinees.unwrap_or(873),
            replicates: flags.replicates.unwrap_or(100),
            spreads: flags.spreads.unwrap_or_else(|| DEFAULT_SPREADS.to_vec()),
            missing_rate: flags.missing_rate.unwrap_or(0.0),
        };
        cfg.check_paths()?;
        Ok(cfg)
    }

    fn check_paths(&self) -> Result<()> {
        let need_responses = matches!(self.command.as_str(), "fit" | "classify" | "invariance" | "compare");
        if need_responses && self.responses.is_none() {
            return Err(usage(format!("{} needs --responses", self.command)));
        }
        if self.command == "diagnose" && self.responses.is_none() && self.params.is_none() {
            return Err(usage("diagnose needs --params or --responses"));
        }
        for p in [&self.responses, &self.qmatrix, &self.params].into_iter().flatten() {
            if !p.exists() {
                return Err(CliError::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
                ));
            }
        }
        Ok(())
    }

    fn read_options(&self) -> ReadOptions {
        ReadOptions {
            missing_token: self.missing_token.clone(),
        }
    }

    fn responses(&self) -> Result<ResponseMatrix> {
        let path = self.responses.as_ref().ok_or_else(|| usage("--responses is required"))?;
        ingest_responses(path, &self.read_options())
    }

    fn spec_for(&self, family: Family, data: &ResponseMatrix) -> Result<ModelSpec> {
        match &self.qmatrix {
            Some(q) => {
                let q = ingest_qmatrix(q, data.item_ids())?;
                Ok(ModelSpec::new(family, q.attribute_names.len(), q.item_attribute)?)
            }
            None => Ok(ModelSpec::single_attribute(family, data.n_items())?),
        }
    }
}

/// Parameter table row: estimate, standard error and 95% interval.
#[derive(Debug, Clone, Serialize)]
pub struct ParamRow {
    pub label: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub boundary_warning: bool,
}

fn param_rows(fit: &FitResult, estimates: Option<&[ParameterEstimate]>) -> Vec<ParamRow> {
    let labels = fit.parameter_labels();
    let values = fit.params.to_vector();
    labels
        .into_iter()
        .zip(values)
        .enumerate()
        .map(|(k, (label, estimate))| {
            let e = estimates.map(|e| &e[k]);
            ParamRow {
                label,
                estimate,
                se: e.map(|e| e.se),
                ci_lower: e.map(|e| e.lower),
                ci_upper: e.map(|e| e.upper),
                boundary_warning: e.is_some_and(|e| e.boundary_warning),
            }
        })
        .collect()
}

fn param_csv(model: Option<Family>, rows: &[ParamRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let mut v = Vec::new();
            if let Some(m) = model {
                v.push(m.as_str().to_string());
            }
            v.extend([
                r.label.clone(),
                num(r.estimate),
                opt_num(r.se),
                opt_num(r.ci_lower),
                opt_num(r.ci_upper),
            ]);
            v
        })
        .collect()
}

const PARAM_HEADER: [&str; 5] = ["parameter", "estimate", "se", "ci_lower", "ci_upper"];

fn with_model<'a>(header: &[&'a str]) -> Vec<&'a str> {
    let mut h = vec!["model"];
    h.extend_from_slice(header);
    h
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelFit {
    pub model: Family,
    pub indices: FitIndices,
    pub parameters: Vec<ParamRow>,
    pub fit: FitResult,
}

/// Calibrates and attaches standard errors when the Hessian allows it.
fn calibrate(data: &ResponseMatrix, spec: &ModelSpec, em: &EmConfig) -> Result<ModelFit> {
    let mut fitted = fit(data, spec, em)?;
    let inference = match standard_errors(&fitted, data) {
        Ok(inf) => Some(inf),
        Err(e) => {
            warn!("standard errors unavailable: {e}");
            fitted.warnings.push(format!("standard errors unavailable: {e}"));
            None
        }
    };
    if let Some(inf) = &inference {
        fitted.attach_inference(inf);
    }
    for w in &fitted.warnings {
        warn!("{w}");
    }
    Ok(ModelFit {
        model: spec.family,
        indices: fit_indices(&fitted),
        parameters: param_rows(&fitted, inference.as_ref().map(|i| i.estimates.as_slice())),
        fit: fitted,
    })
}

const SCORE_HEADER: [&str; 6] = [
    "total_score",
    "count",
    "n_distinct_posteriors",
    "mean_posterior",
    "min_posterior",
    "max_posterior",
];

fn score_csv(model: Option<Family>, table: &ScorePosteriorTable) -> Vec<Vec<String>> {
    table
        .rows
        .iter()
        .map(|r| {
            let mut v = Vec::new();
            if let Some(m) = model {
                v.push(m.as_str().to_string());
            }
            v.extend([
                r.total_score.to_string(),
                r.count.to_string(),
                r.posteriors.len().to_string(),
                num(r.mean_posterior),
                num(r.min_posterior),
                num(r.max_posterior),
            ]);
            v
        })
        .collect()
}

/// What a successful run produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub command: String,
    pub files: Vec<PathBuf>,
}

pub fn run(command: &Command) -> Result<RunOutcome> {
    let started = SystemTime::now();
    let (name, flags) = command.parts();
    let cfg = RunConfig::resolve(name, flags.clone())?;
    let mut out = OutputDir::create(&cfg.out, cfg.formats)?;
    match name {
        "fit" => run_fit(&cfg, &mut out)?,
        "classify" => run_classify(&cfg, &mut out)?,
        "diagnose" => run_diagnose(&cfg, &mut out)?,
        "invariance" => run_invariance(&cfg, &mut out)?,
        "simulate" => run_simulate(&cfg, &mut out)?,
        "compare" => run_compare(&cfg, &mut out)?,
        other => return Err(usage(format!("unknown command '{other}'"))),
    }
    out.manifest(name, started)?;
    Ok(RunOutcome {
        command: name.into(),
        files: out.written,
    })
}

#[derive(Serialize)]
struct FitBody<'a> {
    model: Family,
    indices: FitIndices,
    parameters: &'a [ParamRow],
    fit: &'a FitResult,
}

fn run_fit(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let data = cfg.responses()?;
    let spec = cfg.spec_for(cfg.model, &data)?;
    let m = calibrate(&data, &spec, &cfg.em)?;
    info!("{} fit: loglik {} after {} iterations", m.model.as_str(), m.fit.loglik, m.fit.n_iterations);
    let manifest = Manifest::new("fit", cfg, Some(data.fingerprint()));
    out.json(
        FIT_JSON,
        &Bundle::new(
            manifest,
            FitBody {
                model: m.model,
                indices: m.indices,
                parameters: &m.parameters,
                fit: &m.fit,
            },
        ),
    )?;
    out.csv(PARAMS_CSV, &PARAM_HEADER, &param_csv(None, &m.parameters))
}

/// A saved fit when `--params` is given, otherwise a fresh calibration.
fn fit_or_load(cfg: &RunConfig, data: Option<&ResponseMatrix>) -> Result<FitResult> {
    if let Some(p) = &cfg.params {
        let fit = load_fit(p, cfg.model_given.then_some(cfg.model))?;
        if let Some(d) = data {
            if d.item_ids() != fit.item_ids.as_slice() {
                return Err(DcmError::Input(format!(
                    "items in the response file do not match the saved fit ({} vs {} items, or different ids/order)",
                    d.n_items(),
                    fit.item_ids.len()
                ))
                .into());
            }
        }
        return Ok(fit);
    }
    let data = data.ok_or_else(|| usage("--responses or --params is required"))?;
    let spec = cfg.spec_for(cfg.model, data)?;
    Ok(calibrate(data, &spec, &cfg.em)?.fit)
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationRow {
    pub examinee_id: String,
    pub total_score: usize,
    pub complete: bool,
    pub pattern: String,
    /// Posterior of proficiency per attribute.
    pub posteriors: Vec<f64>,
    pub status: Vec<dcm_core::classify::Status>,
}

pub fn classification_rows(fit: &FitResult, data: &ResponseMatrix, threshold: f64) -> Result<Vec<ClassificationRow>> {
    if fit.spec.n_attributes == 1 {
        return Ok(classify_examinees(fit, data, threshold)?
            .into_iter()
            .enumerate()
            .map(|(e, c)| ClassificationRow {
                examinee_id: c.examinee_id,
                total_score: c.total_score,
                complete: c.complete,
                pattern: pattern_string(data.row(e)),
                posteriors: vec![c.posterior_proficient],
                status: vec![c.status],
            })
            .collect());
    }
    if data.item_ids() != fit.item_ids.as_slice() {
        return Err(DcmError::Input("response items do not match the fit".into()).into());
    }
    data.rows()
        .enumerate()
        .map(|(e, row)| {
            let post = attribute_posteriors(&fit.params, &fit.spec, row)?;
            Ok(ClassificationRow {
                examinee_id: data.examinee_ids()[e].clone(),
                total_score: total_score(row),
                complete: row.iter().all(Option::is_some),
                pattern: pattern_string(row),
                status: post.iter().map(|&p| classify(p, threshold)).collect(),
                posteriors: post,
            })
        })
        .collect()
}

fn classification_csv(rows: &[ClassificationRow], n_attributes: usize) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = ["examinee_id", "total_score", "complete"].iter().map(|s| s.to_string()).collect();
    if n_attributes == 1 {
        header.extend(["posterior_proficient".to_string(), "status".to_string()]);
    } else {
        for a in 1..=n_attributes {
            header.push(format!("posterior_attr{a}"));
            header.push(format!("status_attr{a}"));
        }
    }
    let body = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.examinee_id.clone(), r.total_score.to_string(), r.complete.to_string()];
            for (p, s) in r.posteriors.iter().zip(&r.status) {
                v.push(num(*p));
                v.push(s.as_str().to_string());
            }
            v
        })
        .collect();
    (header, body)
}

#[derive(Serialize)]
struct ClassifyBody<'a> {
    model: Family,
    threshold: f64,
    cutscore: Option<usize>,
    classifications: &'a [ClassificationRow],
    score_table: Option<ScorePosteriorTable>,
}

fn run_classify(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let data = cfg.responses()?;
    let fit = fit_or_load(cfg, Some(&data))?;
    let rows = classification_rows(&fit, &data, cfg.threshold)?;
    let single = fit.spec.n_attributes == 1;
    let table = if single { Some(score_table(&fit.params, &fit.spec, &data)?) } else { None };
    let cut = if single && fit.spec.family == Family::OnePlcdm {
        cutscore(&fit.params, &fit.spec, cfg.threshold)?
    } else {
        None
    };
    let (header, body) = classification_csv(&rows, fit.spec.n_attributes);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(CLASSIFICATIONS_CSV, &header, &body)?;
    if let Some(t) = &table {
        out.csv(SCORE_TABLE_CSV, &SCORE_HEADER, &score_csv(None, t))?;
    }
    let manifest = Manifest::new("classify", cfg, Some(data.fingerprint()));
    out.json(
        CLASSIFICATIONS_JSON,
        &Bundle::new(
            manifest,
            ClassifyBody {
                model: fit.spec.family,
                threshold: cfg.threshold,
                cutscore: cut,
                classifications: &rows,
                score_table: table,
            },
        ),
    )
}

#[derive(Serialize)]
struct DiagnoseBody {
    model: Family,
    sufficiency: Option<SufficiencyReport>,
    monotonicity: Option<MonotonicityReport>,
    invariant_item_ordering: Option<OrderingReport>,
    invariant_person_ordering: OrderingReport,
    cutscore: Option<usize>,
}

fn run_diagnose(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let data = match &cfg.responses {
        Some(_) => Some(cfg.responses()?),
        None => None,
    };
    let fit = fit_or_load(cfg, data.as_ref())?;
    let (spec, params) = (&fit.spec, &fit.params);
    let single = spec.n_attributes == 1;
    let (suff, mono) = match (&data, single) {
        (Some(d), true) => {
            let s = sufficiency(params, spec, d, DEFAULT_SUFFICIENCY_TOL)?;
            let m = check_monotonicity(&s.per_score);
            out.csv(SCORE_TABLE_CSV, &SCORE_HEADER, &score_csv(None, &s.per_score))?;
            (Some(s), Some(m))
        }
        _ => (None, None),
    };
    let iio = if single { Some(item_ordering(params, spec, &fit.item_ids)?) } else { None };
    if single {
        let bars = bar_chart(params, spec, &fit.item_ids, SortClass::NonProficient)?;
        let rows: Vec<Vec<String>> = bars
            .iter()
            .map(|b| vec![b.item_id.clone(), num(b.p_non_proficient), num(b.p_proficient)])
            .collect();
        out.csv(ITEM_BARS_CSV, &["item_id", "p_non_proficient", "p_proficient"], &rows)?;
    }
    let cut = if single && spec.family == Family::OnePlcdm {
        cutscore(params, spec, cfg.threshold)?
    } else {
        None
    };
    let manifest = Manifest::new("diagnose", cfg, Some(fit.data_fingerprint.clone()));
    out.json(
        DIAGNOSTICS_JSON,
        &Bundle::new(
            manifest,
            DiagnoseBody {
                model: spec.family,
                sufficiency: suff,
                monotonicity: mono,
                invariant_item_ordering: iio,
                invariant_person_ordering: person_ordering(params, spec, &fit.item_ids)?,
                cutscore: cut,
            },
        ),
    )
}

#[derive(Serialize)]
struct InvarianceBody {
    model: Family,
    k: usize,
    item_free: ItemFreeReport,
    person_free: PersonFreeReport,
}

/// Default subtest length: two thirds of the test, rounded up.
pub fn default_k(n_items: usize) -> usize {
    (2 * n_items).div_ceil(3)
}

fn run_invariance(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let data = cfg.responses()?;
    let spec = cfg.spec_for(cfg.model, &data)?;
    let k = cfg.k.unwrap_or_else(|| default_k(data.n_items()));
    let item_free = item_free_experiment(&data, &spec, &cfg.em, k)?;
    let person_free = studies::person_free_experiment(&data, &spec, &cfg.em, cfg.em.seed, ResampleMode::MedianSplit)?;
    let manifest = Manifest::new("invariance", cfg, Some(data.fingerprint()));
    out.json(
        INVARIANCE_JSON,
        &Bundle::new(
            manifest,
            InvarianceBody {
                model: spec.family,
                k,
                item_free,
                person_free,
            },
        ),
    )
}

/// Generating values for `simulate`: a saved fit, or the built-in reference
/// truth (nine items; for `--study probe` a six-item two-attribute design
/// with correlated attributes).
fn simulation_truth(cfg: &RunConfig) -> Result<GenSpec> {
    let (spec, params) = if let Some(p) = &cfg.params {
        let fit = load_fit(p, cfg.model_given.then_some(cfg.model))?;
        (fit.spec, fit.params)
    } else if cfg.study == Study::Probe {
        probe_truth()
    } else {
        let (spec, params) = nine_item_truth();
        match cfg.model {
            Family::OnePlcdm => (spec, params),
            Family::Lcdm => {
                let lcdm = ModelSpec::single_attribute(Family::Lcdm, 9)?;
                let me = vec![params.main_effects[0]; 9];
                let p = ParameterSet::new(&lcdm, params.intercepts, me, params.structural)?;
                (lcdm, p)
            }
        }
    };
    let gen = GenSpec::new(spec, params, cfg.n_examinees, cfg.em.seed).with_missing_rate(cfg.missing_rate);
    gen.validate()?;
    Ok(gen)
}

/// Six items, two attributes with three items each, phi = 0.6.
pub fn probe_truth() -> (ModelSpec, ParameterSet) {
    let spec = ModelSpec::new(Family::OnePlcdm, 2, vec![0, 0, 0, 1, 1, 1]).expect("valid");
    let params = ParameterSet {
        intercepts: vec![-1.0, -0.3, -2.0, -1.5, 0.2, -0.8],
        main_effects: vec![2.0, 2.5],
        structural: vec![0.4, 0.1, 0.1, 0.4],
    };
    (spec, params)
}

#[derive(Serialize)]
#[serde(rename_all = "lowercase", tag = "study")]
enum SimulationBody {
    Generate {
        truth: GenSpec,
        n_examinees: usize,
        missing_cells: usize,
        class_counts: Vec<usize>,
    },
    Recovery {
        truth: GenSpec,
        report: RecoveryReport,
    },
    Robustness {
        base: GenSpec,
        rows: Vec<RobustnessRow>,
    },
    Probe {
        truth: GenSpec,
        report: Box<ProbeReport>,
    },
}

fn response_csv(data: &ResponseMatrix, missing: &str) -> Result<Vec<u8>> {
    let mut header = vec!["examinee_id".to_string()];
    header.extend(data.item_ids().iter().cloned());
    let rows: Vec<Vec<String>> = data
        .rows()
        .enumerate()
        .map(|(e, row)| {
            let mut v = vec![data.examinee_ids()[e].clone()];
            v.extend(row.iter().map(|x| match x {
                Some(true) => "1".to_string(),
                Some(false) => "0".to_string(),
                None => missing.to_string(),
            }));
            v
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    to_csv(&header, &rows)
}

fn run_simulate(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let gen = simulation_truth(cfg)?;
    let manifest = Manifest::new("simulate", cfg, None);
    let body = match cfg.study {
        Study::Generate => {
            let sim = simulate(&gen)?;
            let space = enumerate_classes(gen.spec.n_attributes)?;
            out.raw(SIMULATED_RESPONSES_CSV, &response_csv(&sim.data, &cfg.missing_token)?)?;
            let rows: Vec<Vec<String>> = sim
                .true_classes
                .iter()
                .enumerate()
                .map(|(e, &c)| vec![sim.data.examinee_ids()[e].clone(), space.label(c)])
                .collect();
            out.csv(SIMULATION_CSV, &["examinee_id", "true_class"], &rows)?;
            let mut counts = vec![0; space.len()];
            for &c in &sim.true_classes {
                counts[c] += 1;
            }
            SimulationBody::Generate {
                n_examinees: sim.data.n_examinees(),
                missing_cells: sim.data.missing_count(),
                class_counts: counts,
                truth: gen,
            }
        }
        Study::Recovery => {
            let report = studies::recovery_study(&gen, cfg.replicates, &cfg.em)?;
            let rows: Vec<Vec<String>> = report
                .parameters
                .iter()
                .map(|p| {
                    vec![
                        p.label.clone(),
                        num(p.truth),
                        num(p.mean_estimate),
                        num(p.bias),
                        num(p.rmse),
                        opt_num(p.coverage),
                    ]
                })
                .collect();
            out.csv(SIMULATION_CSV, &["parameter", "truth", "mean_estimate", "bias", "rmse", "coverage"], &rows)?;
            SimulationBody::Recovery { truth: gen, report }
        }
        Study::Robustness => {
            let rows = studies::robustness_study(&cfg.spreads, &gen, cfg.replicates, &cfg.em)?;
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        num(r.spread),
                        num(r.accuracy_one_pl),
                        num(r.accuracy_lcdm),
                        num(r.median_accuracy_one_pl),
                        num(r.median_accuracy_lcdm),
                        num(r.agreement),
                        r.n_ok.to_string(),
                        r.n_failed.to_string(),
                    ]
                })
                .collect();
            out.csv(
                SIMULATION_CSV,
                &[
                    "spread",
                    "accuracy_1plcdm",
                    "accuracy_lcdm",
                    "median_accuracy_1plcdm",
                    "median_accuracy_lcdm",
                    "agreement",
                    "n_ok",
                    "n_failed",
                ],
                &table,
            )?;
            SimulationBody::Robustness { base: gen, rows }
        }
        Study::Probe => {
            let report = multiattribute_sufficiency_probe(&gen, &cfg.em)?;
            let mut rows = Vec::new();
            for (source, list) in [("truth", &report.at_truth), ("fit", &report.at_fit)] {
                for a in list {
                    for s in &a.per_subscore {
                        rows.push(vec![
                            source.to_string(),
                            (a.attribute + 1).to_string(),
                            s.subscore.to_string(),
                            s.count.to_string(),
                            num(s.min_posterior),
                            num(s.max_posterior),
                            num(s.max_posterior - s.min_posterior),
                        ]);
                    }
                }
            }
            out.csv(
                SIMULATION_CSV,
                &["parameters", "attribute", "subscore", "count", "min_posterior", "max_posterior", "spread"],
                &rows,
            )?;
            SimulationBody::Probe {
                truth: gen,
                report: Box::new(report),
            }
        }
    };
    out.json(SIMULATION_JSON, &Bundle::new(manifest, body))
}

#[derive(Serialize)]
struct ModelScoreTable {
    model: Family,
    table: ScorePosteriorTable,
}

#[derive(Serialize)]
struct CompareBody {
    fits: Vec<ModelFit>,
    lr_test: LrTest,
    /// LCDM minus one-parameter LCDM.
    delta_aic: f64,
    delta_bic: f64,
    score_tables: Vec<ModelScoreTable>,
}

fn run_compare(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let data = cfg.responses()?;
    let lcdm_spec = cfg.spec_for(Family::Lcdm, &data)?;
    let one_spec = cfg.spec_for(Family::OnePlcdm, &data)?;
    let (lcdm, one) = rayon::join(
        || calibrate(&data, &lcdm_spec, &cfg.em),
        || calibrate(&data, &one_spec, &cfg.em),
    );
    let (lcdm, one) = (lcdm?, one?);
    let lr = lr_test(&lcdm.fit, &one.fit)?;
    let mut tables = Vec::new();
    if lcdm_spec.n_attributes == 1 {
        for m in [&lcdm, &one] {
            tables.push(ModelScoreTable {
                model: m.model,
                table: score_table(&m.fit.params, &m.fit.spec, &data)?,
            });
        }
    }
    let mut params = param_csv(Some(Family::Lcdm), &lcdm.parameters);
    params.extend(param_csv(Some(Family::OnePlcdm), &one.parameters));
    out.csv(PARAMS_CSV, &with_model(&PARAM_HEADER), &params)?;
    if !tables.is_empty() {
        let mut rows = Vec::new();
        for t in &tables {
            rows.extend(score_csv(Some(t.model), &t.table));
        }
        out.csv(SCORE_TABLE_CSV, &with_model(&SCORE_HEADER), &rows)?;
    }
    let body = CompareBody {
        delta_aic: lcdm.indices.aic - one.indices.aic,
        delta_bic: lcdm.indices.bic - one.indices.bic,
        lr_test: lr,
        fits: vec![lcdm, one],
        score_tables: tables,
    };
    let manifest = Manifest::new("compare", cfg, Some(data.fingerprint()));
    out.json(FIT_JSON, &Bundle::new(manifest, body))
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::Usage(e.render().to_string().trim().to_string());
            report_error(&err);
            return err.exit_code();
        }
    };
    match run(&cli.command) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", display_path(f));
            }
            0
        }
        Err(e) => {
            report_error(&e);
            e.exit_code()
        }
    }
}

fn display_path(p: &Path) -> String {
    p.display().to_string()
}

fn report_error(e: &CliError) {
    let record = e.record();
    match serde_json::to_string(&record) {
        Ok(s) => eprintln!("{s}"),
        Err(_) => eprintln!("{e}"),
    }
}
