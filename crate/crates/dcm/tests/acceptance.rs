//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use dcm::io::{load_fit, ReadOptions};
use dcm::studies;
use dcm_core::classify::{classify, closed_form_posterior, cutscore, proficiency_posterior, score_table, Status, DISTINCT_TOL};
use dcm_core::diagnostics::{check_monotonicity, item_ordering, person_ordering};
use dcm_core::em::{e_step, expected_item_gradient, fit, item_stats, EmConfig, FitResult, ItemStats};
use dcm_core::invariance::{item_free_experiment, person_free_experiment};
use dcm_core::model::total_score;
use dcm_core::rng::derive_seed;
use dcm_core::simulate::{multiattribute_sufficiency_probe, robustness_truth, simulate, GenSpec};
use dcm_core::truth::nine_item_truth;
use dcm_core::{DcmError, Family, ModelSpec, ParameterSet, ResponseMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

const SUITE_SEED: u64 = 20_240_601;

fn reference(n: usize, seed: u64) -> GenSpec {
    let (spec, p) = nine_item_truth();
    GenSpec::new(spec, p, n, seed)
}

fn ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("Item{i}")).collect()
}

fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn trace_ascends(fit: &FitResult) -> bool {
    fit.loglik_trace.windows(2).all(|w| w[1] >= w[0] - 1e-10)
}

/// Fits shared by criteria 1, 3, 4 and 5.
struct SufficiencySuite {
    fits: Vec<(ResponseMatrix, FitResult, Duration)>,
}

fn sufficiency_suite() -> SufficiencySuite {
    let config = EmConfig::default();
    let fits = (0..20)
        .map(|r| {
            let seed = derive_seed(SUITE_SEED, r);
            let data = simulate(&reference(873, derive_seed(seed, 0))).unwrap().data;
            let (spec, _) = nine_item_truth();
            let t = Instant::now();
            let f = fit(&data, &spec, &config.clone().with_seed(derive_seed(seed, 1))).unwrap();
            (data, f, t.elapsed())
        })
        .collect();
    SufficiencySuite { fits }
}

fn criterion_1(s: &SufficiencySuite) -> Verdict {
    let mut max_spread: f64 = 0.0;
    let mut all_single = true;
    let mut all_strict = true;
    let mut slowest = Duration::ZERO;
    for (data, f, dt) in &s.fits {
        let table = score_table(&f.params, &f.spec, data).unwrap();
        for row in &table.rows {
            max_spread = max_spread.max(row.spread());
            all_single &= row.posteriors.len() == 1;
        }
        all_strict &= check_monotonicity(&table).strict;
        slowest = slowest.max(*dt);
    }
    let pass = all_single && all_strict && max_spread < 1e-9 && slowest < Duration::from_secs(60);
    verdict(
        pass,
        format!(
            "{} datasets, one posterior per score: {all_single}, max spread {max_spread:.2e}, strictly increasing: {all_strict}, slowest fit {:.3}s",
            s.fits.len(),
            slowest.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Verdict {
    let config = EmConfig::default();
    let mut split = 0;
    let mut traces_ok = true;
    let n = 10;
    for r in 0..n {
        let seed = derive_seed(SUITE_SEED ^ 2, r);
        let truth = robustness_truth(&reference(873, 0), 1.0).unwrap().with_seed(derive_seed(seed, 0));
        let data = simulate(&truth).unwrap().data;
        let f = fit(&data, &truth.spec, &config.clone().with_seed(derive_seed(seed, 1))).unwrap();
        traces_ok &= trace_ascends(&f);
        let table = score_table(&f.params, &f.spec, &data).unwrap();
        if table.rows.iter().any(|row| row.posteriors.len() > 1) {
            split += 1;
        }
    }
    verdict(
        split == n && traces_ok,
        format!("spread 1.0: {split}/{n} LCDM fits have a score with several distinct posteriors (tol {DISTINCT_TOL:e})"),
    )
}

/// Bayes rule with explicit products over both classes.
fn enumerated_posterior(p: &ParameterSet, spec: &ModelSpec, row: &[Option<bool>]) -> f64 {
    let mut l = [p.structural[0].ln(), p.structural[1].ln()];
    for (c, lc) in l.iter_mut().enumerate() {
        for (i, x) in row.iter().enumerate() {
            let eta = p.intercepts[i] + p.main_effects[spec.main_effect_index(i)] * c as f64;
            let q = 1.0 / (1.0 + (-eta).exp());
            if let Some(x) = x {
                *lc += if *x { q.ln() } else { (1.0 - q).ln() };
            }
        }
    }
    1.0 / (1.0 + (l[0] - l[1]).exp())
}

fn criterion_3(s: &SufficiencySuite) -> Verdict {
    let mut max_diff: f64 = 0.0;
    let mut rows = 0;
    let mut agree = 0;
    for (data, f, _) in &s.fits {
        let cut = cutscore(&f.params, &f.spec, 0.5).unwrap();
        for row in data.rows().filter(|r| r.iter().all(Option::is_some)) {
            let s = total_score(row);
            let cf = closed_form_posterior(&f.params, &f.spec, s).unwrap();
            let en = enumerated_posterior(&f.params, &f.spec, row);
            let direct = proficiency_posterior(&f.params, &f.spec, row).unwrap();
            max_diff = max_diff.max((cf - en).abs()).max((cf - direct).abs());
            let by_cut = match cut {
                Some(c) if s >= c => Status::Proficient,
                _ => Status::NotProficient,
            };
            rows += 1;
            if classify(direct, 0.5) == by_cut {
                agree += 1;
            }
        }
    }
    verdict(
        max_diff < 1e-12 && agree == rows,
        format!("max |closed form - enumeration| {max_diff:.2e} over {rows} rows; posterior vs cutscore agreement {agree}/{rows}"),
    )
}

fn criterion_4(s: &SufficiencySuite) -> Verdict {
    let mut iio = 0;
    let mut ipo = 0;
    for (_, f, _) in &s.fits {
        iio += item_ordering(&f.params, &f.spec, &f.item_ids).unwrap().holds as usize;
        ipo += person_ordering(&f.params, &f.spec, &f.item_ids).unwrap().holds as usize;
    }
    // one item harder for non-proficient examinees and easier for proficient ones
    let spec = ModelSpec::single_attribute(Family::Lcdm, 6).unwrap();
    let p = ParameterSet::new(
        &spec,
        vec![-0.92, -2.23, -4.87, -2.05, -2.40, -1.2],
        vec![2.15, 2.15, 2.15, 2.15, 2.15, 3.0],
        vec![0.5, 0.5],
    )
    .unwrap();
    let crossing = item_ordering(&p, &spec, &ids(6)).unwrap();
    let flagged: Vec<Vec<String>> = crossing.violations.iter().map(|v| v.items.clone()).collect();
    let exact = flagged == vec![vec!["Item1".to_string(), "Item6".to_string()]];
    let n = s.fits.len();
    verdict(
        iio == n && ipo == n && exact,
        format!("IIO holds {iio}/{n}, IPO holds {ipo}/{n}; constructed crossing flagged {flagged:?}"),
    )
}

/// Expected complete-data item log-likelihood computed straight from
/// posteriors and responses.
fn q_items(p: &ParameterSet, spec: &ModelSpec, data: &ResponseMatrix, post: &[Vec<f64>]) -> f64 {
    let mut q = 0.0;
    for (e, row) in data.rows().enumerate() {
        for (c, w) in post[e].iter().enumerate() {
            for (i, x) in row.iter().enumerate() {
                let Some(x) = x else { continue };
                let eta = p.intercepts[i] + p.main_effects[spec.main_effect_index(i)] * c as f64;
                let lp = -(1.0 + (-eta).exp()).ln();
                let lq = -(1.0 + eta.exp()).ln();
                q += w * if *x { lp } else { lq };
            }
        }
    }
    q
}

fn gradient_check() -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED ^ 5);
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for family in [Family::Lcdm, Family::OnePlcdm] {
        let (spec9, truth) = nine_item_truth();
        let spec = ModelSpec::single_attribute(family, 9).unwrap();
        let data = simulate(&GenSpec::new(spec9, truth, 200, rng.random()).with_missing_rate(0.1))
            .unwrap()
            .data;
        for _ in 0..10 {
            let p = ParameterSet {
                intercepts: (0..9).map(|_| rng.random_range(-3.0..3.0)).collect(),
                main_effects: (0..spec.n_main_effects()).map(|_| rng.random_range(0.1..4.0)).collect(),
                structural: {
                    let a: f64 = rng.random_range(0.2..0.8);
                    vec![1.0 - a, a]
                },
            };
            let post_m = e_step(&p, &spec, &data).unwrap();
            let post: Vec<Vec<f64>> = post_m.rows().map(|r| r.to_vec()).collect();
            let stats: Vec<ItemStats> = item_stats(&post_m, &data, &spec).unwrap();
            let g = expected_item_gradient(&stats, &spec, &p);
            let mut fd = Vec::with_capacity(g.len());
            for k in 0..g.len() {
                let mut up = p.clone();
                let mut dn = p.clone();
                let x = if k < 9 { &mut up.intercepts[k] } else { &mut up.main_effects[k - 9] };
                let h = 1e-5 * x.abs().max(1.0);
                *x += h;
                let y = if k < 9 { &mut dn.intercepts[k] } else { &mut dn.main_effects[k - 9] };
                *y -= h;
                fd.push((q_items(&up, &spec, &data, &post) - q_items(&dn, &spec, &data, &post)) / (2.0 * h));
            }
            let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let norm: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
            worst = worst.max(diff / norm);
            points += 1;
        }
    }
    (worst, points)
}

/// Maximum of the marginal log-likelihood over a coarse parameter grid.
fn grid_oracle(spec: &ModelSpec, data: &ResponseMatrix) -> f64 {
    let n_items = spec.n_items();
    let (l0_grid, l1_grid, pi_grid): (&[f64], &[f64], &[f64]) = match spec.family {
        Family::OnePlcdm => (&[-3.0, -1.5, 0.0, 1.5, 3.0], &[0.25, 1.0, 2.5, 5.0], &[0.2, 0.5, 0.8]),
        Family::Lcdm => (&[-2.0, 0.0, 2.0], &[0.5, 2.0, 4.0], &[0.25, 0.5, 0.75]),
    };
    let n_me = spec.n_main_effects();
    let dims: Vec<usize> = std::iter::repeat_n(l0_grid.len(), n_items)
        .chain(std::iter::repeat_n(l1_grid.len(), n_me))
        .chain([pi_grid.len()])
        .collect();
    let mut idx = vec![0usize; dims.len()];
    let mut best = f64::NEG_INFINITY;
    loop {
        let p = ParameterSet {
            intercepts: (0..n_items).map(|i| l0_grid[idx[i]]).collect(),
            main_effects: (0..n_me).map(|m| l1_grid[idx[n_items + m]]).collect(),
            structural: {
                let a = pi_grid[idx[n_items + n_me]];
                vec![1.0 - a, a]
            },
        };
        let mut ll = 0.0;
        for row in data.rows() {
            let mut lik = [p.structural[0], p.structural[1]];
            for (c, l) in lik.iter_mut().enumerate() {
                for (i, x) in row.iter().enumerate() {
                    let eta = p.intercepts[i] + p.main_effects[spec.main_effect_index(i)] * c as f64;
                    let q = 1.0 / (1.0 + (-eta).exp());
                    if let Some(x) = x {
                        *l *= if *x { q } else { 1.0 - q };
                    }
                }
            }
            ll += (lik[0] + lik[1]).ln();
        }
        best = best.max(ll);
        let mut k = 0;
        loop {
            if k == dims.len() {
                return best;
            }
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn criterion_5(s: &SufficiencySuite) -> Verdict {
    let mut traces = 0;
    let mut traces_ok = 0;
    for (_, f, _) in &s.fits {
        traces += 1;
        traces_ok += trace_ascends(f) as usize;
    }
    let (worst_grad, points) = gradient_check();

    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED ^ 55);
    let config = EmConfig::default();
    let mut instances = 0;
    let mut beaten = 0;
    let mut degenerate = 0;
    let mut worst_gap = f64::INFINITY;
    for n in 2..=8 {
        for n_items in 1..=4 {
            for family in [Family::OnePlcdm, Family::Lcdm] {
                for _ in 0..2 {
                    let rows: Vec<Vec<u8>> =
                        (0..n).map(|_| (0..n_items).map(|_| rng.random_range(0..2u8)).collect()).collect();
                    let data = ResponseMatrix::from_binary_rows(&rows).unwrap();
                    let spec = ModelSpec::single_attribute(family, n_items).unwrap();
                    match fit(&data, &spec, &config.clone().with_seed(rng.random())) {
                        Ok(f) => {
                            instances += 1;
                            traces += 1;
                            traces_ok += trace_ascends(&f) as usize;
                            let gap = f.loglik - grid_oracle(&spec, &data);
                            worst_gap = worst_gap.min(gap);
                            if gap >= -1e-9 {
                                beaten += 1;
                            }
                        }
                        Err(DcmError::DegenerateData(_)) => degenerate += 1,
                        Err(e) => panic!("unexpected fit error: {e}"),
                    }
                }
            }
        }
    }
    verdict(
        traces_ok == traces && worst_grad < 1e-6 && beaten == instances,
        format!(
            "ascending traces {traces_ok}/{traces}; gradient worst rel err {worst_grad:.2e} over {points} points; \
             fit >= grid oracle {beaten}/{instances} (worst margin {worst_gap:.3e}, {degenerate} single-pattern datasets rejected)"
        ),
    )
}

fn criterion_6() -> Verdict {
    let t = Instant::now();
    let gen = reference(2000, SUITE_SEED ^ 6);
    let report = studies::recovery_study(&gen, 100, &EmConfig::default()).unwrap();
    let elapsed = t.elapsed();
    let slope = report.parameter("lambda1").unwrap();
    let intercepts: Vec<_> = report.parameters.iter().filter(|p| p.label.starts_with("lambda0")).collect();
    let worst_int_rmse = intercepts.iter().map(|p| p.rmse).fold(0.0, f64::max);
    let cov: Vec<f64> = intercepts.iter().map(|p| p.coverage.unwrap_or(f64::NAN)).collect();
    let mean_int_cov = cov.iter().sum::<f64>() / cov.len() as f64;
    let slope_cov = slope.coverage.unwrap_or(f64::NAN);
    let in_band = |c: f64| (0.90..=0.99).contains(&c);
    let pass = slope.bias.abs() < 0.05
        && slope.rmse < 0.15
        && worst_int_rmse < 0.25
        && in_band(slope_cov)
        && in_band(mean_int_cov)
        && elapsed < Duration::from_secs(600);
    let per_int: Vec<String> = cov.iter().map(|c| format!("{c:.2}")).collect();
    verdict(
        pass,
        format!(
            "lambda1 bias {:+.4} rmse {:.4} coverage {slope_cov:.2}; max intercept rmse {worst_int_rmse:.4}; \
             mean intercept coverage {mean_int_cov:.3} (per item {}); failed {}, no SE {}; accuracy {:.3}; {:.1}s",
            slope.bias,
            slope.rmse,
            per_int.join(" "),
            report.n_failed,
            report.n_without_intervals,
            report.classification_accuracy,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Verdict {
    let config = EmConfig::default();
    let (spec, _) = nine_item_truth();
    let outcomes = studies::replicated(50, |r| {
        let seed = derive_seed(SUITE_SEED ^ 7, r as u64);
        let data = simulate(&reference(873, derive_seed(seed, 0))).unwrap().data;
        let cfg = config.clone().with_seed(derive_seed(seed, 1));
        let item = item_free_experiment(&data, &spec, &cfg, 6).unwrap();
        let person = person_free_experiment(&data, &spec, &cfg, derive_seed(seed, 2)).unwrap();
        let n_item_params = spec.n_items() + spec.n_main_effects();
        let overlap = person.ci_overlap[..n_item_params].iter().filter(|b| **b).count() as f64 / n_item_params as f64;
        (
            item.posterior_correlation,
            item.classification_agreement,
            person.intercept_within_ci_rate,
            overlap,
            person.bias_low,
            person.bias_high,
        )
    });
    let col = |k: usize| -> Vec<f64> {
        outcomes
            .iter()
            .map(|o| [o.0, o.1, o.2, o.3, o.4, o.5][k])
            .collect()
    };
    let (corr, agree, within, overlap) = (median(&col(0)), median(&col(1)), median(&col(2)), median(&col(3)));
    let full_overlap = col(3).iter().filter(|&&x| x == 1.0).count();
    let min_within = col(2).iter().cloned().fold(1.0, f64::min);
    let pass = corr >= 0.75 && agree >= 0.80 && within >= 0.90 && overlap == 1.0;
    verdict(
        pass,
        format!(
            "item-free median r {corr:.3}, agreement {agree:.3}; person-free median intercept within-CI {within:.3} \
             (min {min_within:.3}), median item CI overlap {overlap:.3} ({full_overlap}/50 replicates fully overlapping), \
             median bias low {:+.3} high {:+.3}",
            median(&col(4)),
            median(&col(5))
        ),
    )
}

fn criterion_8() -> Verdict {
    let config = EmConfig::default();
    let (spec, base) = dcm::cli::probe_truth();
    let (pa, pb) = (0.5f64, 0.5f64);
    let factorised = ParameterSet {
        structural: vec![(1.0 - pa) * (1.0 - pb), (1.0 - pa) * pb, pa * (1.0 - pb), pa * pb],
        ..base.clone()
    };
    let mut worst_independent: f64 = 0.0;
    let mut worst_independent_fit: f64 = 0.0;
    for r in 0..5 {
        let gen = GenSpec::new(spec.clone(), factorised.clone(), 1000, derive_seed(SUITE_SEED ^ 8, r));
        let rep = multiattribute_sufficiency_probe(&gen, &config).unwrap();
        worst_independent = worst_independent.max(rep.max_spread_truth);
        worst_independent_fit = worst_independent_fit.max(rep.max_spread_fit);
    }
    let gen = GenSpec::new(spec, base, 1000, SUITE_SEED ^ 88);
    let corr = multiattribute_sufficiency_probe(&gen, &config).unwrap();
    let pass = worst_independent < 1e-8 && corr.max_spread_truth > 1e-3 && corr.max_spread_fit > 1e-3;
    verdict(
        pass,
        format!(
            "factorised weights: max spread {worst_independent:.2e} at generating values ({worst_independent_fit:.2e} at fitted); \
             weights (0.4,0.1,0.1,0.4), phi {:.2}: spread {:.3} at generating values, {:.3} at fitted",
            corr.true_phi.unwrap_or(f64::NAN),
            corr.max_spread_truth,
            corr.max_spread_fit
        ),
    )
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_dcm"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn criterion_9() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let p = |x: &Path| x.to_str().unwrap().to_string();
    let sim = root.join("sim");
    let gen_args = ["simulate", "--n-examinees", "873", "--seed", "31", "--missing-rate", "0.05", "--out", &p(&sim)];
    let mut ok = run_cli(&gen_args);
    let responses_bytes = fs::read(sim.join("simulated_responses.csv")).unwrap_or_default();
    ok &= run_cli(&gen_args);
    let same_data = fs::read(sim.join("simulated_responses.csv")).unwrap_or_default() == responses_bytes;

    let responses = sim.join("simulated_responses.csv");
    let files = ["fit.json", "params.csv"];
    let out = root.join("fit");
    let fit_args = ["fit", "--responses", &p(&responses), "--seed", "7", "--out", &p(&out)];
    ok &= run_cli(&fit_args);
    let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(out.join(f)).unwrap_or_default()).collect();
    ok &= run_cli(&fit_args);
    let second: Vec<Vec<u8>> = files.iter().map(|f| fs::read(out.join(f)).unwrap_or_default()).collect();
    let identical_fit = first == second && !first[0].is_empty();

    let cls = root.join("cls");
    let cls_args = ["classify", "--responses", &p(&responses), "--params", &p(&out.join("fit.json")), "--out", &p(&cls)];
    ok &= run_cli(&cls_args);
    let cls_first = fs::read(cls.join("classifications.csv")).unwrap_or_default();
    ok &= run_cli(&cls_args);
    let identical_cls = cls_first == fs::read(cls.join("classifications.csv")).unwrap_or_default();

    // posteriors from an in-process fit with the same settings
    let data = dcm::io::ingest_responses(&responses, &ReadOptions::default()).unwrap();
    let (spec, _) = nine_item_truth();
    let direct = fit(&data, &spec, &EmConfig::default().with_seed(7)).unwrap();
    let saved = load_fit(&out.join("fit.json"), None).unwrap();
    let text = String::from_utf8_lossy(&cls_first).to_string();
    let mut max_diff: f64 = 0.0;
    let mut rows = 0;
    for (e, line) in text.lines().skip(1).enumerate() {
        let written: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        let reference = proficiency_posterior(&direct.params, &direct.spec, data.row(e)).unwrap();
        max_diff = max_diff.max((written - reference).abs()).max((written - direct.posteriors.row(e)[1]).abs());
        rows += 1;
    }
    let params_equal = saved.params == direct.params;

    let rec_a = studies::recovery_study(&reference(300, 5), 3, &EmConfig::default()).unwrap();
    let rec_b = dcm_core::simulate::recovery_study(&reference(300, 5), 3, &EmConfig::default()).unwrap();
    let studies_equal = rec_a == rec_b;

    let pass = ok && same_data && identical_fit && identical_cls && params_equal && max_diff < 1e-12 && rows == 873 && studies_equal;
    verdict(
        pass,
        format!(
            "commands ok {ok}; identical data {same_data}, fit.json/params.csv {identical_fit}, classifications {identical_cls}; \
             saved params bit-equal {params_equal}; max posterior diff {max_diff:.2e} over {rows} rows; parallel = sequential study {studies_equal}"
        ),
    )
}

fn main() {
    let started = Instant::now();
    let suite = sufficiency_suite();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("sufficiency", Box::new(|| criterion_1(&suite))),
        ("LCDM contrast", Box::new(criterion_2)),
        ("cutscore", Box::new(|| criterion_3(&suite))),
        ("IIO/IPO", Box::new(|| criterion_4(&suite))),
        ("EM correctness", Box::new(|| criterion_5(&suite))),
        ("recovery", Box::new(criterion_6)),
        ("invariance experiments", Box::new(criterion_7)),
        ("multi-attribute probe", Box::new(criterion_8)),
        ("determinism and round trip", Box::new(criterion_9)),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!(
            "{} [{}] {name}: {} ({:.1}s)",
            if v.pass { "PASS" } else { "FAIL" },
            k + 1,
            v.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
