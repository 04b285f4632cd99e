//! Checks for the measurement properties of a fitted model: score
//! sufficiency, monotone score -> posterior mapping, invariant item ordering
//! (IIO) and invariant person ordering (IPO), plus plot-ready bar data.
//!
//! Orderings are evaluated on the class-conditional correct-response
//! probabilities (two points per item for a single attribute).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::classify::{score_table, ScorePosteriorTable};
use crate::em::FitResult;
use crate::error::{DcmError, Result};
use crate::math::sigmoid;
use crate::model::{enumerate_classes, class_bit, ModelSpec, ParameterSet, ResponseMatrix};

pub const DEFAULT_SUFFICIENCY_TOL: f64 = 1e-9;
/// Probability differences at or below this are ties, not order flips.
pub const ORDER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyReport {
    pub max_within_score_spread: f64,
    pub per_score: ScorePosteriorTable,
    pub tolerance: f64,
    pub holds: bool,
}

pub fn check_sufficiency(fit: &FitResult, data: &ResponseMatrix, tolerance: f64) -> Result<SufficiencyReport> {
    sufficiency(&fit.params, &fit.spec, data, tolerance)
}

pub fn sufficiency(params: &ParameterSet, spec: &ModelSpec, data: &ResponseMatrix, tolerance: f64) -> Result<SufficiencyReport> {
    let per_score = score_table(params, spec, data)?;
    let spread = per_score.rows.iter().map(|r| r.spread()).fold(0.0, f64::max);
    Ok(SufficiencyReport {
        max_within_score_spread: spread,
        per_score,
        tolerance,
        holds: spread < tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub lower_score: usize,
    pub higher_score: usize,
    pub lower_score_posterior: f64,
    pub higher_score_posterior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub holds: bool,
    pub strict: bool,
    pub violations: Vec<MonotonicityViolation>,
}

/// Compares the mean posterior of consecutive observed scores.
pub fn check_monotonicity(table: &ScorePosteriorTable) -> MonotonicityReport {
    let mut violations = Vec::new();
    let mut strict = true;
    for w in table.rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.mean_posterior < a.mean_posterior {
            violations.push(MonotonicityViolation {
                lower_score: a.total_score,
                higher_score: b.total_score,
                lower_score_posterior: a.mean_posterior,
                higher_score_posterior: b.mean_posterior,
            });
        }
        if b.mean_posterior <= a.mean_posterior {
            strict = false;
        }
    }
    MonotonicityReport {
        holds: violations.is_empty(),
        strict: violations.is_empty() && strict,
        violations,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ordering {
    pub label: String,
    pub order: Vec<String>,
}

/// An order flip. For item ordering `items` holds the pair and `gaps[k]` is
/// `p(items[0]) - p(items[1])` in `classes[k]`; for person ordering `items`
/// holds one item and `gaps[0]` is `p(classes[1]) - p(classes[0])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingViolation {
    pub items: Vec<String>,
    pub classes: Vec<String>,
    pub gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingTie {
    pub items: Vec<String>,
    pub class: String,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub ordering_by_class: Vec<Ordering>,
    pub violations: Vec<OrderingViolation>,
    pub ties: Vec<OrderingTie>,
    pub holds: bool,
}

fn single_attribute(spec: &ModelSpec) -> Result<()> {
    if spec.n_attributes != 1 {
        return Err(DcmError::ModelMismatch(format!(
            "ordering diagnostics need a single attribute, got {}",
            spec.n_attributes
        )));
    }
    Ok(())
}

fn probabilities(params: &ParameterSet, spec: &ModelSpec) -> Result<Vec<[f64; 2]>> {
    params.validate_shape(spec)?;
    Ok((0..spec.n_items())
        .map(|i| [sigmoid(params.logit(spec, i, 0)), sigmoid(params.logit(spec, i, 1))])
        .collect())
}

const CLASS_LABELS: [&str; 2] = ["non-proficient", "proficient"];

pub fn check_invariant_item_ordering(fit: &FitResult) -> Result<OrderingReport> {
    item_ordering(&fit.params, &fit.spec, &fit.item_ids)
}

pub fn item_ordering(params: &ParameterSet, spec: &ModelSpec, item_ids: &[String]) -> Result<OrderingReport> {
    single_attribute(spec)?;
    let probs = probabilities(params, spec)?;
    let ordering_by_class = (0..2)
        .map(|c| Ordering {
            label: CLASS_LABELS[c].into(),
            order: sorted_items(&probs, c).into_iter().map(|i| item_ids[i].clone()).collect(),
        })
        .collect();
    let mut violations = Vec::new();
    let mut ties = Vec::new();
    for a in 0..probs.len() {
        for b in a + 1..probs.len() {
            let d = [probs[a][0] - probs[b][0], probs[a][1] - probs[b][1]];
            let mut tied = false;
            for (c, diff) in d.iter().enumerate() {
                if diff.abs() <= ORDER_TOL {
                    tied = true;
                    ties.push(OrderingTie {
                        items: [item_ids[a].clone(), item_ids[b].clone()].into(),
                        class: CLASS_LABELS[c].into(),
                        difference: *diff,
                    });
                }
            }
            let flipped = (d[0] > ORDER_TOL && d[1] < -ORDER_TOL) || (d[0] < -ORDER_TOL && d[1] > ORDER_TOL);
            if flipped && !tied {
                violations.push(OrderingViolation {
                    items: [item_ids[a].clone(), item_ids[b].clone()].into(),
                    classes: CLASS_LABELS.iter().map(|s| String::from(*s)).collect(),
                    gaps: d.into(),
                });
            }
        }
    }
    Ok(OrderingReport {
        ordering_by_class,
        holds: violations.is_empty(),
        violations,
        ties,
    })
}

/// Item indices sorted by ascending probability in class `c` (hardest
/// first); equal probabilities keep item order.
fn sorted_items(probs: &[[f64; 2]], c: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[a][c].total_cmp(&probs[b][c]).then(a.cmp(&b)));
    idx
}

pub fn check_invariant_person_ordering(fit: &FitResult) -> Result<OrderingReport> {
    person_ordering(&fit.params, &fit.spec, &fit.item_ids)
}

/// For each item, masters of its attribute must have a strictly higher
/// correct-response probability than non-masters (all other attributes held
/// fixed).
pub fn person_ordering(params: &ParameterSet, spec: &ModelSpec, item_ids: &[String]) -> Result<OrderingReport> {
    params.validate_shape(spec)?;
    let space = enumerate_classes(spec.n_attributes)?;
    let mut orderings = Vec::new();
    let mut violations = Vec::new();
    for i in 0..spec.n_items() {
        let a = spec.item_attribute[i];
        let mut probs: Vec<(usize, f64)> =
            (0..space.len()).map(|c| (c, sigmoid(params.logit(spec, i, c)))).collect();
        for &(c, p) in &probs {
            if class_bit(c, a, spec.n_attributes) == 1 {
                continue;
            }
            let master = c | (1 << (spec.n_attributes - 1 - a));
            let gap = sigmoid(params.logit(spec, i, master)) - p;
            if gap <= 0.0 {
                violations.push(OrderingViolation {
                    items: [item_ids[i].clone()].into(),
                    classes: [space.label(c), space.label(master)].into(),
                    gaps: [gap].into(),
                });
            }
        }
        probs.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
        orderings.push(Ordering {
            label: item_ids[i].clone(),
            order: probs.iter().map(|(c, _)| space.label(*c)).collect(),
        });
    }
    Ok(OrderingReport {
        ordering_by_class: orderings,
        holds: violations.is_empty(),
        violations,
        ties: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SortClass {
    NonProficient,
    Proficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarRow {
    pub item_id: String,
    pub p_non_proficient: f64,
    pub p_proficient: f64,
}

pub fn item_bar_chart_data(fit: &FitResult, sort_class: SortClass) -> Result<Vec<BarRow>> {
    bar_chart(&fit.params, &fit.spec, &fit.item_ids, sort_class)
}

/// Class-conditional probabilities per item, hardest first in `sort_class`.
pub fn bar_chart(params: &ParameterSet, spec: &ModelSpec, item_ids: &[String], sort_class: SortClass) -> Result<Vec<BarRow>> {
    single_attribute(spec)?;
    let probs = probabilities(params, spec)?;
    let c = match sort_class {
        SortClass::NonProficient => 0,
        SortClass::Proficient => 1,
    };
    Ok(sorted_items(&probs, c)
        .into_iter()
        .map(|i| BarRow {
            item_id: item_ids[i].clone(),
            p_non_proficient: probs[i][0],
            p_proficient: probs[i][1],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{ScoreRow, DISTINCT_TOL};
    use crate::model::{default_item_ids, Family};
    use crate::truth::eight_item_truth;
    use alloc::vec;

    fn row(score: usize, mean: f64) -> ScoreRow {
        ScoreRow {
            total_score: score,
            posteriors: vec![mean],
            count: 1,
            mean_posterior: mean,
            min_posterior: mean,
            max_posterior: mean,
        }
    }

    fn table(rows: Vec<ScoreRow>) -> ScorePosteriorTable {
        ScorePosteriorTable {
            rows,
            incomplete_examinees: Vec::new(),
            distinct_tol: DISTINCT_TOL,
        }
    }

    #[test]
    fn monotonicity_cases() {
        let bad = check_monotonicity(&table(vec![row(0, 0.2), row(1, 0.1)]));
        assert!(!bad.holds);
        assert_eq!(bad.violations.len(), 1);
        assert_eq!((bad.violations[0].lower_score, bad.violations[0].higher_score), (0, 1));
        let flat = check_monotonicity(&table(vec![row(0, 0.3), row(1, 0.3), row(2, 0.3)]));
        assert!(flat.holds && !flat.strict);
        let up = check_monotonicity(&table(vec![row(0, 0.1), row(2, 0.6)]));
        assert!(up.holds && up.strict);
    }

    #[test]
    fn one_pl_reference_ordering_is_invariant() {
        let (spec, p) = eight_item_truth();
        let ids = default_item_ids(8);
        let r = item_ordering(&p, &spec, &ids).unwrap();
        assert!(r.holds);
        assert_eq!(r.ordering_by_class[0].order, r.ordering_by_class[1].order);
        assert_eq!(r.ordering_by_class[0].order[0], "Item5");
        assert!(person_ordering(&p, &spec, &ids).unwrap().holds);
    }

    #[test]
    fn lcdm_crossing_pair_is_reported() {
        // Item 6 harder than Item 1 for non-proficient, easier for proficient
        let spec = ModelSpec::single_attribute(Family::Lcdm, 6).unwrap();
        let l0 = vec![-0.92, -2.23, -4.87, -2.05, -2.40, -1.2];
        let l1 = vec![2.15, 2.15, 2.15, 2.15, 2.15, 3.0];
        let p = ParameterSet::new(&spec, l0, l1, vec![0.5, 0.5]).unwrap();
        let ids = default_item_ids(6);
        let r = item_ordering(&p, &spec, &ids).unwrap();
        assert!(!r.holds);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].items, vec![String::from("Item1"), String::from("Item6")]);
        assert!(r.violations[0].gaps[0] > 0.0 && r.violations[0].gaps[1] < 0.0);
    }

    #[test]
    fn equal_intercepts_are_ties() {
        let spec = ModelSpec::single_attribute(Family::OnePlcdm, 2).unwrap();
        let p = ParameterSet::new(&spec, vec![-0.5, -0.5], vec![1.3], vec![0.5, 0.5]).unwrap();
        let r = item_ordering(&p, &spec, &default_item_ids(2)).unwrap();
        assert!(r.holds);
        assert_eq!(r.ties.len(), 2);
    }

    #[test]
    fn person_ordering_floor_and_negative_effects() {
        let spec = ModelSpec::single_attribute(Family::Lcdm, 2).unwrap();
        let floor = spec.main_effect_floor;
        let p = ParameterSet::new(&spec, vec![0.4, -3.0], vec![floor, 1.0], vec![0.5, 0.5]).unwrap();
        let r = person_ordering(&p, &spec, &default_item_ids(2)).unwrap();
        assert!(r.holds);
        let min_gap = sigmoid(0.4 + floor) - sigmoid(0.4);
        assert!(min_gap > 0.0);

        let bad = ParameterSet {
            intercepts: vec![0.4, -3.0],
            main_effects: vec![-0.7, 1.0],
            structural: vec![0.5, 0.5],
        };
        let r = person_ordering(&bad, &spec, &default_item_ids(2)).unwrap();
        assert!(!r.holds);
        assert_eq!(r.violations[0].items, vec![String::from("Item1")]);
        assert!(r.violations[0].gaps[0] < 0.0);
    }

    #[test]
    fn bar_chart_reference_order() {
        let (spec, p) = eight_item_truth();
        let ids = default_item_ids(8);
        let bars = bar_chart(&p, &spec, &ids, SortClass::NonProficient).unwrap();
        assert_eq!(bars[0].item_id, "Item5");
        assert!((bars[0].p_non_proficient - 0.0076).abs() < 5e-5);
        assert_eq!(bars[7].item_id, "Item6");
        assert!((bars[7].p_non_proficient - 0.4477).abs() < 5e-5);
        let by_prof = bar_chart(&p, &spec, &ids, SortClass::Proficient).unwrap();
        let a: Vec<_> = bars.iter().map(|b| &b.item_id).collect();
        let b: Vec<_> = by_prof.iter().map(|b| &b.item_id).collect();
        assert_eq!(a, b);

        let one = ModelSpec::single_attribute(Family::OnePlcdm, 1).unwrap();
        let p1 = ParameterSet::new(&one, vec![0.1], vec![1.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(bar_chart(&p1, &one, &default_item_ids(1), SortClass::Proficient).unwrap().len(), 1);
    }
}
