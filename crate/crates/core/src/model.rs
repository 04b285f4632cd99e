//! Domain types, the item response function and exact likelihoods over the
//! latent class space.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{DcmError, Result};
use crate::math::{log, log_sigmoid, log_sum_exp, sigmoid};

/// Default lower bound standing in for the strict `main effect > 0` constraint.
pub const DEFAULT_MAIN_EFFECT_FLOOR: f64 = 1e-4;

/// Largest attribute count accepted by [`enumerate_classes`].
pub const MAX_ATTRIBUTES: usize = 10;

/// Tolerance on `sum(structural) == 1`.
pub const STRUCTURAL_SUM_TOL: f64 = 1e-12;

/// N x I table of dichotomous responses; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    examinee_ids: Vec<String>,
    item_ids: Vec<String>,
    cells: Vec<Option<bool>>,
}

impl ResponseMatrix {
    /// Builds a matrix from row-major cells, validating ids and rows.
    pub fn new(
        examinee_ids: Vec<String>,
        item_ids: Vec<String>,
        cells: Vec<Option<bool>>,
    ) -> Result<Self> {
        if examinee_ids.is_empty() {
            return Err(DcmError::Input("response matrix has no examinees".into()));
        }
        if item_ids.is_empty() {
            return Err(DcmError::Input("response matrix has no items".into()));
        }
        if cells.len() != examinee_ids.len() * item_ids.len() {
            return Err(DcmError::Input(format!(
                "cell count {} does not match {} examinees x {} items",
                cells.len(),
                examinee_ids.len(),
                item_ids.len()
            )));
        }
        check_unique("examinee", &examinee_ids)?;
        check_unique("item", &item_ids)?;
        let n_items = item_ids.len();
        for (e, row) in cells.chunks(n_items).enumerate() {
            if row.iter().all(Option::is_none) {
                return Err(DcmError::Input(format!(
                    "examinee '{}' has no non-missing responses",
                    examinee_ids[e]
                )));
            }
        }
        Ok(Self {
            examinee_ids,
            item_ids,
            cells,
        })
    }

    /// Convenience constructor with generated ids `E1..` and `Item1..`.
    pub fn from_rows(rows: &[Vec<Option<bool>>]) -> Result<Self> {
        let n_items = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_items) {
            return Err(DcmError::Input("ragged response rows".into()));
        }
        let examinee_ids = (1..=rows.len()).map(|e| format!("E{e}")).collect();
        let item_ids = default_item_ids(n_items);
        Self::new(examinee_ids, item_ids, rows.concat())
    }

    /// Like [`from_rows`](Self::from_rows) for complete 0/1 data.
    pub fn from_binary_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let rows: Vec<Vec<Option<bool>>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Some(x != 0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn n_examinees(&self) -> usize {
        self.examinee_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn examinee_ids(&self) -> &[String] {
        &self.examinee_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn row(&self, examinee: usize) -> &[Option<bool>] {
        let i = self.n_items();
        &self.cells[examinee * i..(examinee + 1) * i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Option<bool>]> {
        self.cells.chunks(self.n_items())
    }

    pub fn get(&self, examinee: usize, item: usize) -> Option<bool> {
        self.cells[examinee * self.n_items() + item]
    }

    /// Number of correct responses among the non-missing cells of a row.
    pub fn total_score(&self, examinee: usize) -> usize {
        total_score(self.row(examinee))
    }

    pub fn is_complete(&self, examinee: usize) -> bool {
        self.row(examinee).iter().all(Option::is_some)
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    /// Keeps the listed items (in the given order). Examinees left without
    /// any response are dropped; the surviving original row indices are
    /// returned alongside the matrix.
    pub fn select_items(&self, items: &[usize]) -> Result<(ResponseMatrix, Vec<usize>)> {
        if let Some(&bad) = items.iter().find(|&&i| i >= self.n_items()) {
            return Err(DcmError::Input(format!("item index {bad} out of range")));
        }
        let mut kept = Vec::new();
        let mut cells = Vec::new();
        for e in 0..self.n_examinees() {
            let row: Vec<Option<bool>> = items.iter().map(|&i| self.get(e, i)).collect();
            if row.iter().any(Option::is_some) {
                kept.push(e);
                cells.extend(row);
            }
        }
        let ids = kept.iter().map(|&e| self.examinee_ids[e].clone()).collect();
        let item_ids = items.iter().map(|&i| self.item_ids[i].clone()).collect();
        Ok((ResponseMatrix::new(ids, item_ids, cells)?, kept))
    }

    /// Builds a new matrix from (possibly repeated) row indices. Rows are
    /// relabelled `<id>#<draw>` so ids stay unique.
    pub fn resample_rows(&self, rows: &[usize]) -> Result<ResponseMatrix> {
        if let Some(&bad) = rows.iter().find(|&&e| e >= self.n_examinees()) {
            return Err(DcmError::Input(format!("examinee index {bad} out of range")));
        }
        let ids = rows
            .iter()
            .enumerate()
            .map(|(k, &e)| format!("{}#{}", self.examinee_ids[e], k + 1))
            .collect();
        let cells = rows.iter().flat_map(|&e| self.row(e).iter().copied()).collect();
        ResponseMatrix::new(ids, self.item_ids.clone(), cells)
    }

    /// Stacks `other` below `self`; examinee ids of `other` get a `'` suffix
    /// when they collide.
    pub fn stack(&self, other: &ResponseMatrix) -> Result<ResponseMatrix> {
        if self.item_ids != other.item_ids {
            return Err(DcmError::Input("cannot stack matrices with different items".into()));
        }
        let mut ids = self.examinee_ids.clone();
        for id in &other.examinee_ids {
            let mut candidate = id.clone();
            while ids.contains(&candidate) {
                candidate.push('\'');
            }
            ids.push(candidate);
        }
        let mut cells = self.cells.clone();
        cells.extend_from_slice(&other.cells);
        ResponseMatrix::new(ids, self.item_ids.clone(), cells)
    }

    /// Lower-case hex SHA-256 over dimensions, ids and cells.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_examinees() as u64).to_le_bytes());
        h.update((self.n_items() as u64).to_le_bytes());
        for id in self.examinee_ids.iter().chain(&self.item_ids) {
            h.update((id.len() as u64).to_le_bytes());
            h.update(id.as_bytes());
        }
        let codes: Vec<u8> = self.cells.iter().map(|c| cell_code(*c)).collect();
        h.update(&codes);
        let digest = h.finalize();
        let mut out = String::with_capacity(64);
        for b in digest.iter() {
            let _ = write!(out, "{b:02x}");
        }
        out
    }
}

fn check_unique(kind: &str, ids: &[String]) -> Result<()> {
    let mut seen = BTreeMap::new();
    for (k, id) in ids.iter().enumerate() {
        if let Some(first) = seen.insert(id.as_str(), k) {
            return Err(DcmError::Input(format!(
                "duplicate {kind} id '{id}' (positions {} and {})",
                first + 1,
                k + 1
            )));
        }
    }
    Ok(())
}

pub(crate) fn default_item_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("Item{i}")).collect()
}

#[inline]
pub(crate) fn cell_code(c: Option<bool>) -> u8 {
    match c {
        Some(false) => 0,
        Some(true) => 1,
        None => 2,
    }
}

/// Renders a response row as `0`/`1`/`.` characters.
pub fn pattern_string(row: &[Option<bool>]) -> String {
    row.iter()
        .map(|c| match c {
            Some(true) => '1',
            Some(false) => '0',
            None => '.',
        })
        .collect()
}

pub fn total_score(row: &[Option<bool>]) -> usize {
    row.iter().filter(|c| **c == Some(true)).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "lcdm")]
    Lcdm,
    #[serde(rename = "1plcdm")]
    OnePlcdm,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Lcdm => "lcdm",
            Family::OnePlcdm => "1plcdm",
        }
    }
}

impl core::str::FromStr for Family {
    type Err = DcmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "lcdm" => Ok(Family::Lcdm),
            "1plcdm" | "oneplcdm" => Ok(Family::OnePlcdm),
            other => Err(DcmError::Input(format!("unknown model family '{other}'"))),
        }
    }
}

/// Model family plus a simple-structure item -> attribute map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub n_attributes: usize,
    pub item_attribute: Vec<usize>,
    pub main_effect_floor: f64,
}

impl ModelSpec {
    pub fn new(family: Family, n_attributes: usize, item_attribute: Vec<usize>) -> Result<Self> {
        let spec = Self {
            family,
            n_attributes,
            item_attribute,
            main_effect_floor: DEFAULT_MAIN_EFFECT_FLOOR,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Every item measures the single attribute.
    pub fn single_attribute(family: Family, n_items: usize) -> Result<Self> {
        Self::new(family, 1, vec![0; n_items])
    }

    pub fn with_floor(mut self, floor: f64) -> Result<Self> {
        self.main_effect_floor = floor;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_attributes == 0 || self.n_attributes > MAX_ATTRIBUTES {
            return Err(DcmError::Input(format!(
                "attribute count {} outside 1..={MAX_ATTRIBUTES}",
                self.n_attributes
            )));
        }
        if self.item_attribute.is_empty() {
            return Err(DcmError::Input("model has no items".into()));
        }
        if let Some((i, a)) =
            self.item_attribute.iter().enumerate().find(|(_, &a)| a >= self.n_attributes)
        {
            return Err(DcmError::Input(format!(
                "item {} maps to attribute {a}, but only {} attributes exist",
                i + 1,
                self.n_attributes
            )));
        }
        for a in 0..self.n_attributes {
            if !self.item_attribute.contains(&a) {
                return Err(DcmError::Input(format!("attribute {a} is measured by no item")));
            }
        }
        if !(self.main_effect_floor > 0.0 && self.main_effect_floor.is_finite()) {
            return Err(DcmError::Input("main_effect_floor must be a positive real".into()));
        }
        Ok(())
    }

    pub fn n_items(&self) -> usize {
        self.item_attribute.len()
    }

    pub fn n_classes(&self) -> usize {
        1 << self.n_attributes
    }

    /// Number of main-effect parameters: one per item (LCDM) or per attribute.
    pub fn n_main_effects(&self) -> usize {
        match self.family {
            Family::Lcdm => self.n_items(),
            Family::OnePlcdm => self.n_attributes,
        }
    }

    /// Index into `ParameterSet::main_effects` used by `item`.
    pub fn main_effect_index(&self, item: usize) -> usize {
        match self.family {
            Family::Lcdm => item,
            Family::OnePlcdm => self.item_attribute[item],
        }
    }

    /// Free parameter count: intercepts, main effects and `2^A - 1` mixing weights.
    pub fn n_free_params(&self) -> usize {
        self.n_items() + self.n_main_effects() + self.n_classes() - 1
    }

    /// Items measuring attribute `a`, in item order.
    pub fn items_of_attribute(&self, a: usize) -> Vec<usize> {
        (0..self.n_items()).filter(|&i| self.item_attribute[i] == a).collect()
    }
}

/// All binary attribute patterns in counting order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentClassSpace {
    pub n_attributes: usize,
    pub classes: Vec<Vec<u8>>,
}

impl LatentClassSpace {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Label such as `"01"` for a class index.
    pub fn label(&self, class: usize) -> String {
        self.classes[class].iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
    }
}

pub fn enumerate_classes(n_attributes: usize) -> Result<LatentClassSpace> {
    if n_attributes == 0 || n_attributes > MAX_ATTRIBUTES {
        return Err(DcmError::Input(format!(
            "attribute count {n_attributes} outside 1..={MAX_ATTRIBUTES}"
        )));
    }
    let classes = (0..1usize << n_attributes)
        .map(|c| (0..n_attributes).map(|a| class_bit(c, a, n_attributes)).collect())
        .collect();
    Ok(LatentClassSpace {
        n_attributes,
        classes,
    })
}

/// Mastery bit of attribute `a` in class `c`; attribute 0 is the most
/// significant bit so that classes follow binary counting order.
#[inline]
pub fn class_bit(class: usize, attribute: usize, n_attributes: usize) -> u8 {
    ((class >> (n_attributes - 1 - attribute)) & 1) as u8
}

/// Intercepts, main effects and structural (mixing) probabilities, all in
/// log-odds units except `structural`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub intercepts: Vec<f64>,
    pub main_effects: Vec<f64>,
    pub structural: Vec<f64>,
}

impl ParameterSet {
    pub fn new(
        spec: &ModelSpec,
        intercepts: Vec<f64>,
        main_effects: Vec<f64>,
        structural: Vec<f64>,
    ) -> Result<Self> {
        let p = Self {
            intercepts,
            main_effects,
            structural,
        };
        p.validate(spec)?;
        Ok(p)
    }

    /// Dimension and structural checks only; main effects may have any sign.
    /// Used for hand-built diagnostic inputs.
    pub fn validate_shape(&self, spec: &ModelSpec) -> Result<()> {
        if self.intercepts.len() != spec.n_items() {
            return Err(DcmError::Input(format!(
                "{} intercepts for {} items",
                self.intercepts.len(),
                spec.n_items()
            )));
        }
        if self.main_effects.len() != spec.n_main_effects() {
            return Err(DcmError::Input(format!(
                "{} main effects, model needs {}",
                self.main_effects.len(),
                spec.n_main_effects()
            )));
        }
        if self.structural.len() != spec.n_classes() {
            return Err(DcmError::Input(format!(
                "{} structural weights for {} classes",
                self.structural.len(),
                spec.n_classes()
            )));
        }
        if self.intercepts.iter().chain(&self.main_effects).any(|v| !v.is_finite()) {
            return Err(DcmError::Input("non-finite item parameter".into()));
        }
        if self.structural.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(DcmError::Input("structural weight outside [0, 1]".into()));
        }
        let sum: f64 = self.structural.iter().sum();
        if (sum - 1.0).abs() > STRUCTURAL_SUM_TOL {
            return Err(DcmError::Input(format!("structural weights sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Shape checks plus main-effect positivity (`>= main_effect_floor`).
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        self.validate_shape(spec)?;
        if let Some((k, v)) = self
            .main_effects
            .iter()
            .enumerate()
            .find(|(_, &v)| v < spec.main_effect_floor)
        {
            return Err(DcmError::Input(format!(
                "main effect {k} = {v} is below the floor {}",
                spec.main_effect_floor
            )));
        }
        Ok(())
    }

    pub fn main_effect_for(&self, spec: &ModelSpec, item: usize) -> f64 {
        self.main_effects[spec.main_effect_index(item)]
    }

    /// Logit of a correct response on `item` for latent class `class`.
    #[inline]
    pub fn logit(&self, spec: &ModelSpec, item: usize, class: usize) -> f64 {
        let bit = class_bit(class, spec.item_attribute[item], spec.n_attributes);
        self.intercepts[item] + self.main_effect_for(spec, item) * f64::from(bit)
    }

    /// Natural-scale free parameters: intercepts, main effects, then
    /// `structural[1..]` (class 0 is the reference).
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = self.intercepts.clone();
        v.extend_from_slice(&self.main_effects);
        v.extend_from_slice(&self.structural[1..]);
        v
    }

    /// Names matching [`to_vector`](Self::to_vector).
    pub fn labels(spec: &ModelSpec, item_ids: &[String]) -> Vec<String> {
        let mut out: Vec<String> = item_ids.iter().map(|id| format!("lambda0[{id}]")).collect();
        match spec.family {
            Family::Lcdm => out.extend(item_ids.iter().map(|id| format!("lambda1[{id}]"))),
            Family::OnePlcdm if spec.n_attributes == 1 => out.push("lambda1".into()),
            Family::OnePlcdm => {
                out.extend((0..spec.n_attributes).map(|a| format!("lambda1[attr{}]", a + 1)))
            }
        }
        let space = enumerate_classes(spec.n_attributes).expect("validated spec");
        out.extend((1..space.len()).map(|c| format!("pi[{}]", space.label(c))));
        out
    }

    /// Euclidean norm of [`to_vector`](Self::to_vector).
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.to_vector().iter().map(|v| v * v).sum())
    }
}

/// Probability of a correct response on `item` for latent class `class`.
pub fn item_response_prob(
    params: &ParameterSet,
    spec: &ModelSpec,
    item: usize,
    class: usize,
) -> Result<f64> {
    if item >= spec.n_items() || item >= params.intercepts.len() {
        return Err(DcmError::Input(format!("item index {item} out of range")));
    }
    if class >= spec.n_classes() {
        return Err(DcmError::Input(format!("class index {class} out of range")));
    }
    if spec.main_effect_index(item) >= params.main_effects.len() {
        return Err(DcmError::Input("parameter set does not match the model".into()));
    }
    Ok(sigmoid(params.logit(spec, item, class)))
}

/// Likelihood of one response row given a latent class; missing cells
/// contribute a factor of one.
pub fn class_conditional_likelihood(
    params: &ParameterSet,
    spec: &ModelSpec,
    row: &[Option<bool>],
    class: usize,
) -> Result<f64> {
    if row.len() != spec.n_items() {
        return Err(DcmError::Input(format!(
            "row has {} responses, model has {} items",
            row.len(),
            spec.n_items()
        )));
    }
    let mut lik = 1.0;
    for (item, x) in row.iter().enumerate() {
        if let Some(x) = x {
            let p = item_response_prob(params, spec, item, class)?;
            lik *= if *x { p } else { 1.0 - p };
        }
    }
    Ok(lik)
}

/// Sum over examinees of `log sum_c pi_c L(row | c)`, evaluated in log space.
pub fn marginal_loglik(params: &ParameterSet, spec: &ModelSpec, data: &ResponseMatrix) -> Result<f64> {
    check_compatible(params, spec, data)?;
    let patterns = PatternTable::new(data);
    let tables = LogTables::new(params, spec);
    let log_pi: Vec<f64> = params.structural.iter().map(|p| log(*p)).collect();
    let mut joint = vec![0.0; spec.n_classes()];
    let mut total = 0.0;
    for (k, pattern) in patterns.patterns.iter().enumerate() {
        tables.joint(pattern, &log_pi, &mut joint);
        let lse = log_sum_exp(&joint);
        if !lse.is_finite() {
            return Err(DcmError::NumericalDegeneracy(format!(
                "examinee '{}' has zero likelihood under every class with positive weight",
                data.examinee_ids()[patterns.first_row[k]]
            )));
        }
        total += patterns.counts[k] * lse;
    }
    Ok(total)
}

pub(crate) fn check_compatible(
    params: &ParameterSet,
    spec: &ModelSpec,
    data: &ResponseMatrix,
) -> Result<()> {
    spec.validate()?;
    if data.n_items() != spec.n_items() {
        return Err(DcmError::Input(format!(
            "data has {} items, model has {}",
            data.n_items(),
            spec.n_items()
        )));
    }
    params.validate_shape(spec)
}

/// Distinct response patterns with multiplicities, in order of first
/// appearance.
#[derive(Debug, Clone)]
pub(crate) struct PatternTable {
    pub patterns: Vec<Vec<Option<bool>>>,
    pub counts: Vec<f64>,
    pub row_pattern: Vec<usize>,
    pub first_row: Vec<usize>,
}

impl PatternTable {
    pub fn new(data: &ResponseMatrix) -> Self {
        let mut index: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        let mut patterns = Vec::new();
        let mut counts = Vec::new();
        let mut first_row = Vec::new();
        let mut row_pattern = Vec::with_capacity(data.n_examinees());
        for (e, row) in data.rows().enumerate() {
            let key: Vec<u8> = row.iter().map(|c| cell_code(*c)).collect();
            let k = *index.entry(key).or_insert_with(|| {
                patterns.push(row.to_vec());
                counts.push(0.0);
                first_row.push(e);
                patterns.len() - 1
            });
            counts[k] += 1.0;
            row_pattern.push(k);
        }
        Self {
            patterns,
            counts,
            row_pattern,
            first_row,
        }
    }
}

/// Per item and class: `ln p` and `ln (1 - p)`.
pub(crate) struct LogTables {
    n_classes: usize,
    log_p: Vec<f64>,
    log_q: Vec<f64>,
}

impl LogTables {
    pub fn new(params: &ParameterSet, spec: &ModelSpec) -> Self {
        let n_classes = spec.n_classes();
        let mut log_p = Vec::with_capacity(spec.n_items() * n_classes);
        let mut log_q = Vec::with_capacity(spec.n_items() * n_classes);
        for i in 0..spec.n_items() {
            for c in 0..n_classes {
                let eta = params.logit(spec, i, c);
                log_p.push(log_sigmoid(eta));
                log_q.push(log_sigmoid(-eta));
            }
        }
        Self {
            n_classes,
            log_p,
            log_q,
        }
    }

    /// `out[c] = log_pi[c] + ln L(row | c)`.
    pub fn joint(&self, row: &[Option<bool>], log_pi: &[f64], out: &mut [f64]) {
        out.copy_from_slice(log_pi);
        for (i, x) in row.iter().enumerate() {
            let table = match x {
                Some(true) => &self.log_p,
                Some(false) => &self.log_q,
                None => continue,
            };
            let base = i * self.n_classes;
            for (c, o) in out.iter_mut().enumerate() {
                *o += table[base + c];
            }
        }
    }
}
