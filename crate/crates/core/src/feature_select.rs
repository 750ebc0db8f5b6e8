//! Wrapper feature selection: sequential forward and backward greedy search
//! scored by the holdout AUC of a pluggable tree evaluator (single decision
//! tree or bagged forest presets).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gbt::{self, GbtError, GbtHyperparams};
use crate::metrics::{roc_auc, MetricsError};
use crate::preprocess::{Dataset, PreprocessError};

/// AUC attributed to the empty feature set: chance level. A forward step must
/// beat it to add anything at all.
pub const EMPTY_SET_SCORE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("cannot evaluate an empty feature list")]
    EmptyFeatures,
    #[error("backward selection needs at least 2 features")]
    NeedTwoFeatures,
    #[error(transparent)]
    Gbt(#[from] GbtError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

/// How subsets are scored: which evaluator, the stratified holdout fraction
/// carved out of the training split, and the seed that fixes both the holdout
/// partition and the evaluator's subsampling. J is a pure function of
/// (dataset, features, criterion).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionCriterion {
    /// `DT` or `RF`; prefixes the method label.
    pub label: String,
    pub evaluator: GbtHyperparams,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl SelectionCriterion {
    pub fn dt(seed: u64) -> Self {
        Self {
            label: "DT".to_string(),
            evaluator: GbtHyperparams::preset_dt(),
            holdout_fraction: 0.25,
            seed,
        }
    }

    pub fn rf(seed: u64) -> Self {
        Self {
            label: "RF".to_string(),
            evaluator: GbtHyperparams::preset_rf(),
            holdout_fraction: 0.25,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionAction {
    Added,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub feature: String,
    pub action: SelectionAction,
    pub j_before: f64,
    pub j_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: String,
    pub selected: Vec<String>,
    pub steps: Vec<SelectionStep>,
}

/// Trains the criterion's evaluator on the non-holdout portion restricted to
/// `features` and returns the holdout AUC.
pub fn evaluate_subset(
    train_set: &Dataset,
    features: &[String],
    criterion: &SelectionCriterion,
) -> Result<f64, SelectError> {
    if features.is_empty() {
        return Err(SelectError::EmptyFeatures);
    }
    let (fit, holdout) = train_set.split(1.0 - criterion.holdout_fraction, true, criterion.seed)?;
    let fit = fit.select_features(features)?;
    let holdout = holdout.select_features(features)?;

    let mut rng = ChaCha8Rng::seed_from_u64(criterion.seed);
    let model = gbt::train(&fit, &criterion.evaluator, &mut rng)?;
    let scores: Vec<f64> = (0..holdout.n_rows())
        .map(|i| model.predict_proba(&holdout.row(i)))
        .collect::<Result<_, _>>()?;
    Ok(roc_auc(holdout.labels(), &scores)?)
}

/// Sequential forward selection: starts empty and adds the best-scoring
/// candidate while it strictly improves J. Ties go to the lowest feature
/// index.
pub fn sfs(
    train_set: &Dataset,
    criterion: &SelectionCriterion,
) -> Result<SelectionResult, SelectError> {
    if train_set.n_features() == 0 {
        return Err(SelectError::EmptyFeatures);
    }
    let all: Vec<String> = train_set.feature_names().to_vec();
    let mut selected: Vec<String> = Vec::new();
    let mut current = EMPTY_SET_SCORE;
    let mut steps = Vec::new();

    while selected.len() < all.len() {
        let mut best: Option<(String, f64)> = None;
        for feature in all.iter().filter(|f| !selected.contains(f)) {
            let mut candidate = selected.clone();
            candidate.push(feature.clone());
            let score = evaluate_subset(train_set, &candidate, criterion)?;
            if best.as_ref().is_none_or(|(_, b)| score > *b) {
                best = Some((feature.clone(), score));
            }
        }
        let (feature, score) = best.expect("remaining features is non-empty");
        if score > current {
            steps.push(SelectionStep {
                feature: feature.clone(),
                action: SelectionAction::Added,
                j_before: current,
                j_after: score,
            });
            selected.push(feature);
            current = score;
        } else {
            break;
        }
    }

    Ok(SelectionResult {
        method: format!("{}_SFS", criterion.label),
        selected,
        steps,
    })
}

/// Sequential backward selection: starts from all features and removes the
/// best removal while it does not decrease J. Ties go to the lowest feature
/// index; stops when one feature remains.
pub fn sbs(
    train_set: &Dataset,
    criterion: &SelectionCriterion,
) -> Result<SelectionResult, SelectError> {
    if train_set.n_features() < 2 {
        return Err(SelectError::NeedTwoFeatures);
    }
    let mut selected: Vec<String> = train_set.feature_names().to_vec();
    let mut current = evaluate_subset(train_set, &selected, criterion)?;
    let mut steps = Vec::new();

    while selected.len() > 1 {
        let mut best: Option<(usize, f64)> = None;
        for (index, _) in selected.iter().enumerate() {
            let mut candidate = selected.clone();
            candidate.remove(index);
            let score = evaluate_subset(train_set, &candidate, criterion)?;
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((index, score));
            }
        }
        let (index, score) = best.expect("selected is non-empty");
        if score >= current {
            let feature = selected.remove(index);
            steps.push(SelectionStep {
                feature,
                action: SelectionAction::Removed,
                j_before: current,
                j_after: score,
            });
            current = score;
        } else {
            break;
        }
    }

    Ok(SelectionResult {
        method: format!("{}_SBS", criterion.label),
        selected,
        steps,
    })
}

/// One feature's row in the selection report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub feature: String,
    pub marks: Vec<bool>,
    pub total: usize,
}

/// Per-feature selection marks across methods, with row totals and per-method
/// column totals. Rows sort by total descending, then original feature order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub methods: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub column_totals: Vec<usize>,
}

pub fn selection_report(results: &[SelectionResult], all_features: &[String]) -> SelectionReport {
    let methods: Vec<String> = results.iter().map(|r| r.method.clone()).collect();
    let mut rows: Vec<(usize, ReportRow)> = all_features
        .iter()
        .enumerate()
        .map(|(index, feature)| {
            let marks: Vec<bool> = results
                .iter()
                .map(|r| r.selected.contains(feature))
                .collect();
            let total = marks.iter().filter(|&&m| m).count();
            (
                index,
                ReportRow {
                    feature: feature.clone(),
                    marks,
                    total,
                },
            )
        })
        .collect();
    rows.sort_by(|a, b| b.1.total.cmp(&a.1.total).then(a.0.cmp(&b.0)));

    let column_totals = results
        .iter()
        .map(|r| r.selected.len())
        .collect();
    SelectionReport {
        methods,
        rows: rows.into_iter().map(|(_, row)| row).collect(),
        column_totals,
    }
}

impl SelectionReport {
    /// Delimited text mirroring the selection-results table: one feature per
    /// row, a 1 under each method that kept it, a row total, and a final row
    /// of per-method totals.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("feature,");
        out.push_str(&self.methods.join(","));
        out.push_str(",total\n");
        for row in &self.rows {
            out.push_str(&row.feature);
            for mark in &row.marks {
                out.push_str(if *mark { ",1" } else { ",0" });
            }
            out.push_str(&format!(",{}\n", row.total));
        }
        out.push_str("Total");
        for total in &self.column_totals {
            out.push_str(&format!(",{total}"));
        }
        out.push_str(",\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn dataset(columns: Vec<(&str, Vec<f64>)>, labels: Vec<u8>) -> Dataset {
        let names = columns.iter().map(|(n, _)| n.to_string()).collect();
        let values = columns.into_iter().map(|(_, v)| v).collect();
        Dataset::new(names, values, labels).unwrap()
    }

    fn label_copy_fixture(n: usize, noise_features: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 4 == 0)).collect();
        let mut columns = vec![(
            "signal",
            labels.iter().map(|&l| l as f64).collect::<Vec<f64>>(),
        )];
        let noise_names = ["noise_a", "noise_b", "noise_c", "noise_d"];
        for name in noise_names.iter().take(noise_features) {
            columns.push((name, (0..n).map(|_| rng.random_range(0.0..1.0)).collect()));
        }
        dataset(columns, labels)
    }

    #[test]
    fn label_copy_feature_scores_perfectly() {
        let ds = label_copy_fixture(200, 0, 1);
        let j = evaluate_subset(&ds, &["signal".to_string()], &SelectionCriterion::dt(7)).unwrap();
        assert_eq!(j, 1.0);
    }

    #[test]
    fn pure_noise_scores_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1000;
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
        let noise: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let ds = dataset(vec![("noise", noise)], labels);
        let j = evaluate_subset(&ds, &["noise".to_string()], &SelectionCriterion::dt(7)).unwrap();
        assert!((0.4..=0.6).contains(&j), "noise J = {j}");
    }

    #[test]
    fn informative_feature_helps_over_noise_alone() {
        let ds = label_copy_fixture(400, 1, 5);
        let criterion = SelectionCriterion::dt(11);
        let with_signal = evaluate_subset(
            &ds,
            &["signal".to_string(), "noise_a".to_string()],
            &criterion,
        )
        .unwrap();
        let noise_only = evaluate_subset(&ds, &["noise_a".to_string()], &criterion).unwrap();
        assert!(with_signal >= noise_only);
    }

    #[test]
    fn evaluate_subset_rejects_empty_features() {
        let ds = label_copy_fixture(100, 1, 0);
        assert!(matches!(
            evaluate_subset(&ds, &[], &SelectionCriterion::dt(0)),
            Err(SelectError::EmptyFeatures)
        ));
    }

    #[test]
    fn evaluate_subset_is_deterministic() {
        let ds = label_copy_fixture(300, 2, 9);
        let criterion = SelectionCriterion::rf(13);
        let features = vec!["noise_a".to_string(), "noise_b".to_string()];
        let a = evaluate_subset(&ds, &features, &criterion).unwrap();
        let b = evaluate_subset(&ds, &features, &criterion).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sfs_picks_the_planted_signal_first() {
        let ds = label_copy_fixture(400, 3, 2);
        let result = sfs(&ds, &SelectionCriterion::dt(5)).unwrap();
        assert_eq!(result.steps[0].feature, "signal");
        assert_eq!(result.steps[0].j_before, EMPTY_SET_SCORE);
        assert_eq!(result.steps[0].j_after, 1.0);
        assert!(result.selected.contains(&"signal".to_string()));
    }

    #[test]
    fn sfs_on_constant_features_selects_nothing() {
        // Constant features cannot split, so every candidate scores exactly
        // the tied-prediction chance AUC and never beats the empty baseline.
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i % 5 == 0)).collect();
        let ds = dataset(
            vec![
                ("c1", vec![3.0; 100]),
                ("c2", vec![7.0; 100]),
                ("c3", vec![1.0; 100]),
            ],
            labels,
        );
        let result = sfs(&ds, &SelectionCriterion::dt(3)).unwrap();
        assert!(result.selected.is_empty());
        assert!(result.steps.is_empty());
    }

    #[test]
    fn sbs_drops_noise_and_keeps_signal() {
        let ds = label_copy_fixture(400, 1, 4);
        let result = sbs(&ds, &SelectionCriterion::dt(5)).unwrap();
        assert!(result.selected.contains(&"signal".to_string()));
        assert!(!result.selected.contains(&"noise_a".to_string()));
        assert_eq!(result.method, "DT_SBS");
    }

    #[test]
    fn sbs_retains_a_jointly_predictive_pair() {
        // XOR pair with unequal cell counts: neither bit separates well alone,
        // but a depth-2 tree on both is perfect. Cell counts are unbalanced;
        // an exactly balanced XOR has zero root gain and greedy trees cannot
        // enter it at all.
        let mut columns = (Vec::new(), Vec::new());
        let mut labels = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut noise = Vec::new();
        for (a, b, count) in [(0, 0, 30), (0, 1, 20), (1, 0, 30), (1, 1, 20)] {
            for _ in 0..count {
                columns.0.push(a as f64);
                columns.1.push(b as f64);
                labels.push((a ^ b) as u8);
                noise.push(rng.random_range(0.0..1.0));
            }
        }
        let ds = dataset(
            vec![("x1", columns.0), ("x2", columns.1), ("noise", noise)],
            labels,
        );
        let result = sbs(&ds, &SelectionCriterion::dt(8)).unwrap();
        assert!(result.selected.contains(&"x1".to_string()));
        assert!(result.selected.contains(&"x2".to_string()));
        assert!(!result.selected.contains(&"noise".to_string()));
    }

    /// Independent greedy recomputation oracle for both directions.
    fn greedy_forward_oracle(ds: &Dataset, criterion: &SelectionCriterion) -> Vec<String> {
        let all: Vec<String> = ds.feature_names().to_vec();
        let mut selected: Vec<String> = Vec::new();
        let mut current = EMPTY_SET_SCORE;
        loop {
            let remaining: Vec<&String> =
                all.iter().filter(|f| !selected.contains(f)).collect();
            if remaining.is_empty() {
                break;
            }
            let mut best: Option<(String, f64)> = None;
            for feature in remaining {
                let mut candidate = selected.clone();
                candidate.push(feature.clone());
                let j = evaluate_subset(ds, &candidate, criterion).unwrap();
                if best.as_ref().is_none_or(|(_, b)| j > *b) {
                    best = Some((feature.clone(), j));
                }
            }
            let (feature, j) = best.unwrap();
            if j > current {
                selected.push(feature);
                current = j;
            } else {
                break;
            }
        }
        selected
    }

    fn greedy_backward_oracle(ds: &Dataset, criterion: &SelectionCriterion) -> Vec<String> {
        let mut selected: Vec<String> = ds.feature_names().to_vec();
        let mut current = evaluate_subset(ds, &selected, criterion).unwrap();
        while selected.len() > 1 {
            let mut best: Option<(usize, f64)> = None;
            for index in 0..selected.len() {
                let mut candidate = selected.clone();
                candidate.remove(index);
                let j = evaluate_subset(ds, &candidate, criterion).unwrap();
                if best.is_none_or(|(_, b)| j > b) {
                    best = Some((index, j));
                }
            }
            let (index, j) = best.unwrap();
            if j >= current {
                selected.remove(index);
                current = j;
            } else {
                break;
            }
        }
        selected
    }

    #[test]
    fn four_feature_toy_matches_independent_greedy_recomputation() {
        let ds = label_copy_fixture(240, 3, 12);
        for criterion in [SelectionCriterion::dt(21), SelectionCriterion::rf(21)] {
            let forward = sfs(&ds, &criterion).unwrap();
            assert_eq!(forward.selected, greedy_forward_oracle(&ds, &criterion));
            let backward = sbs(&ds, &criterion).unwrap();
            assert_eq!(backward.selected, greedy_backward_oracle(&ds, &criterion));
        }
    }

    #[test]
    fn step_logs_are_monotone_and_bounded() {
        let ds = label_copy_fixture(300, 3, 14);
        let criterion = SelectionCriterion::dt(2);
        let forward = sfs(&ds, &criterion).unwrap();
        let mut last = EMPTY_SET_SCORE;
        for step in &forward.steps {
            assert!(step.j_after > last);
            last = step.j_after;
        }
        assert!(forward.steps.len() <= ds.n_features());

        let backward = sbs(&ds, &criterion).unwrap();
        let mut last = f64::NEG_INFINITY;
        for step in &backward.steps {
            assert!(step.j_after >= last);
            last = step.j_after;
        }
        assert!(backward.steps.len() <= ds.n_features());
    }

    #[test]
    fn selection_is_reproducible() {
        let ds = label_copy_fixture(300, 2, 17);
        let criterion = SelectionCriterion::rf(4);
        assert_eq!(sfs(&ds, &criterion).unwrap(), sfs(&ds, &criterion).unwrap());
        assert_eq!(sbs(&ds, &criterion).unwrap(), sbs(&ds, &criterion).unwrap());
    }

    #[test]
    fn sbs_requires_two_features() {
        let ds = label_copy_fixture(100, 0, 0);
        assert!(matches!(
            sbs(&ds, &SelectionCriterion::dt(0)),
            Err(SelectError::NeedTwoFeatures)
        ));
    }

    #[test]
    fn report_counts_and_layout() {
        let features = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let result = |method: &str, selected: &[&str]| SelectionResult {
            method: method.to_string(),
            selected: selected.iter().map(|s| s.to_string()).collect(),
            steps: vec![],
        };
        let results = vec![
            result("DT_SFS", &["a", "b"]),
            result("DT_SBS", &["a"]),
            result("RF_SFS", &["a", "c"]),
            result("RF_SBS", &["a"]),
        ];
        let report = selection_report(&results, &features);

        assert_eq!(report.rows[0].feature, "a");
        assert_eq!(report.rows[0].total, 4);
        let b_row = report.rows.iter().find(|r| r.feature == "b").unwrap();
        assert_eq!(b_row.total, 1);
        assert_eq!(report.column_totals, vec![2, 1, 2, 1]);

        let csv = report.to_csv();
        assert!(csv.starts_with("feature,DT_SFS,DT_SBS,RF_SFS,RF_SBS,total\n"));
        assert!(csv.contains("a,1,1,1,1,4\n"));
        assert!(csv.contains("Total,2,1,2,1,\n"));
    }

    #[test]
    fn report_zero_total_for_unselected_feature() {
        let features = vec!["a".to_string(), "z".to_string()];
        let results = vec![SelectionResult {
            method: "DT_SFS".to_string(),
            selected: vec!["a".to_string()],
            steps: vec![],
        }];
        let report = selection_report(&results, &features);
        let z_row = report.rows.iter().find(|r| r.feature == "z").unwrap();
        assert_eq!(z_row.total, 0);
    }
}
