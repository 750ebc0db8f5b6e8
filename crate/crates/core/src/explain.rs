//! Monte-Carlo permutation estimator of Shapley feature attributions for any
//! prediction function, plus signed per-feature mean reports over a row
//! sample. Missing features are masked by substituting a background row's
//! values (marginal sampling).

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error("background sample is empty")]
    EmptyBackground,
    #[error("need at least one permutation")]
    NoPermutations,
    #[error("instance has {got} features, background rows have {expected}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("row sample is empty")]
    EmptySample,
    #[error("feature name count {names} does not match row width {width}")]
    NameMismatch { names: usize, width: usize },
}

/// Per-feature contributions for one instance plus the background base value.
/// The contributions sum to `f(instance) - mean f(sampled background rows)`,
/// which approaches `f(instance) - base_value` as permutations grow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub contributions: Vec<f64>,
    pub base_value: f64,
}

/// Signed per-feature mean contributions over a row sample, sorted most
/// positive first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub entries: Vec<FeatureScore>,
    pub n_instances: usize,
    pub n_permutations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: String,
    pub mean_score: f64,
}

impl AttributionReport {
    pub fn score_for(&self, feature: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.feature == feature)
            .map(|e| e.mean_score)
    }

    /// Delimited text sorted by score, most positive first.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,mean_score\n");
        for entry in &self.entries {
            out.push_str(&format!("{},{}\n", entry.feature, entry.mean_score));
        }
        out
    }
}

/// Estimates one instance's Shapley contributions from `permutations` random
/// feature orderings. Each ordering starts from a random background row and
/// toggles features to the instance's values, crediting each feature with the
/// prediction change it causes.
pub fn shapley_sample<F, R>(
    predict: F,
    background: &[Vec<f64>],
    instance: &[f64],
    permutations: usize,
    rng: &mut R,
) -> Result<Attribution, ExplainError>
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    if background.is_empty() {
        return Err(ExplainError::EmptyBackground);
    }
    if permutations == 0 {
        return Err(ExplainError::NoPermutations);
    }
    let width = instance.len();
    for row in background {
        if row.len() != width {
            return Err(ExplainError::FeatureMismatch {
                expected: row.len(),
                got: width,
            });
        }
    }

    let base_value =
        background.iter().map(|row| predict(row)).sum::<f64>() / background.len() as f64;

    let mut order: Vec<usize> = (0..width).collect();
    let mut contributions = vec![0.0; width];
    for _ in 0..permutations {
        let start = &background[rng.random_range(0..background.len())];
        order.shuffle(rng);
        let mut point = start.clone();
        let mut previous = predict(&point);
        for &feature in &order {
            point[feature] = instance[feature];
            let current = predict(&point);
            contributions[feature] += current - previous;
            previous = current;
        }
    }
    for value in &mut contributions {
        *value /= permutations as f64;
    }

    Ok(Attribution {
        contributions,
        base_value,
    })
}

/// Runs [`shapley_sample`] for every sampled row (the sample doubles as the
/// background) and reports the signed per-feature means.
pub fn mean_shap_report<F>(
    predict: F,
    feature_names: &[String],
    sample: &[Vec<f64>],
    permutations: usize,
    seed: u64,
) -> Result<AttributionReport, ExplainError>
where
    F: Fn(&[f64]) -> f64,
{
    if sample.is_empty() {
        return Err(ExplainError::EmptySample);
    }
    if feature_names.len() != sample[0].len() {
        return Err(ExplainError::NameMismatch {
            names: feature_names.len(),
            width: sample[0].len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums = vec![0.0; feature_names.len()];
    for instance in sample {
        let attribution = shapley_sample(&predict, sample, instance, permutations, &mut rng)?;
        for (sum, value) in sums.iter_mut().zip(&attribution.contributions) {
            *sum += value;
        }
    }

    let mut entries: Vec<FeatureScore> = feature_names
        .iter()
        .zip(&sums)
        .map(|(feature, &sum)| FeatureScore {
            feature: feature.clone(),
            mean_score: sum / sample.len() as f64,
        })
        .collect();
    entries.sort_by(|a, b| b.mean_score.partial_cmp(&a.mean_score).unwrap());

    Ok(AttributionReport {
        entries,
        n_instances: sample.len(),
        n_permutations: permutations,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_background(n: usize, width: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..width).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect()
    }

    fn column_mean(rows: &[Vec<f64>], j: usize) -> f64 {
        rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64
    }

    fn column_sd(rows: &[Vec<f64>], j: usize) -> f64 {
        let mean = column_mean(rows, j);
        (rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / rows.len() as f64).sqrt()
    }

    #[test]
    fn ignored_feature_gets_exactly_zero() {
        let background = uniform_background(30, 3, 1);
        let instance = vec![0.9, 0.1, 0.4];
        let predict = |row: &[f64]| row[0] * 2.0 + row[2];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let attribution =
            shapley_sample(predict, &background, &instance, 500, &mut rng).unwrap();
        assert_eq!(attribution.contributions[1], 0.0);
    }

    #[test]
    fn additive_model_matches_closed_form() {
        let background = uniform_background(200, 2, 2);
        let instance = vec![0.8, 0.2];
        let predict = |row: &[f64]| row[0] + row[1];
        let m = 2000;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let attribution = shapley_sample(predict, &background, &instance, m, &mut rng).unwrap();
        for j in 0..2 {
            let expected = instance[j] - column_mean(&background, j);
            let tolerance = 3.0 * column_sd(&background, j) / (m as f64).sqrt();
            assert!(
                (attribution.contributions[j] - expected).abs() <= tolerance,
                "feature {j}: {} vs {expected} (tol {tolerance})",
                attribution.contributions[j]
            );
        }
    }

    #[test]
    fn two_feature_estimate_matches_exact_enumeration() {
        // Exact Shapley over both feature orderings against the full
        // background, for a model with an interaction term.
        let background = uniform_background(60, 2, 3);
        let instance = vec![0.7, 0.9];
        let predict = |row: &[f64]| 0.4 * row[0] + 0.2 * row[1] + 0.5 * row[0] * row[1];

        let n = background.len() as f64;
        let mut exact = [0.0, 0.0];
        for b in &background {
            // Order (0, 1): feature 0 toggles first.
            let f_b = predict(b);
            let f_0 = predict(&[instance[0], b[1]]);
            let f_01 = predict(&instance);
            // Order (1, 0): feature 1 toggles first.
            let f_1 = predict(&[b[0], instance[1]]);
            exact[0] += 0.5 * ((f_0 - f_b) + (f_01 - f_1)) / n;
            exact[1] += 0.5 * ((f_01 - f_0) + (f_1 - f_b)) / n;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let attribution =
            shapley_sample(predict, &background, &instance, 5000, &mut rng).unwrap();
        for j in 0..2 {
            assert!(
                (attribution.contributions[j] - exact[j]).abs() <= 0.02,
                "feature {j}: {} vs exact {}",
                attribution.contributions[j],
                exact[j]
            );
        }
    }

    #[test]
    fn efficiency_holds_within_monte_carlo_error() {
        let background = uniform_background(100, 3, 4);
        let instance = vec![0.9, 0.8, 0.1];
        let predict = |row: &[f64]| (row[0] * 1.5 + row[1] * row[2]).sin();
        let m = 2000;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let attribution = shapley_sample(predict, &background, &instance, m, &mut rng).unwrap();

        let total: f64 = attribution.contributions.iter().sum();
        let gap = predict(&instance) - attribution.base_value;
        let f_values: Vec<f64> = background.iter().map(|r| predict(r)).collect();
        let f_mean = f_values.iter().sum::<f64>() / f_values.len() as f64;
        let f_sd = (f_values.iter().map(|v| (v - f_mean).powi(2)).sum::<f64>()
            / f_values.len() as f64)
            .sqrt();
        let tolerance = 3.0 * f_sd / (m as f64).sqrt();
        assert!(
            (total - gap).abs() <= tolerance,
            "sum {total} vs gap {gap} (tol {tolerance})"
        );
    }

    #[test]
    fn symmetric_features_get_symmetric_scores() {
        // Background symmetric in the two features by construction.
        let mut background = uniform_background(100, 2, 8);
        let mirrored: Vec<Vec<f64>> = background.iter().map(|r| vec![r[1], r[0]]).collect();
        background.extend(mirrored);
        let instance = vec![0.75, 0.75];
        let predict = |row: &[f64]| row[0] + row[1] + (row[0] * row[1]).cos();
        let m = 4000;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let attribution = shapley_sample(predict, &background, &instance, m, &mut rng).unwrap();
        let diff = (attribution.contributions[0] - attribution.contributions[1]).abs();
        assert!(diff < 0.05, "asymmetry {diff}");
    }

    #[test]
    fn estimator_variance_shrinks_like_one_over_m() {
        let background = uniform_background(150, 2, 21);
        let instance = vec![0.9, 0.3];
        let predict = |row: &[f64]| row[0] * 2.0 + row[1];
        let variance_at = |m: usize| {
            let estimates: Vec<f64> = (0..30)
                .map(|rep| {
                    let mut rng = ChaCha8Rng::seed_from_u64(1000 + rep);
                    shapley_sample(&predict, &background, &instance, m, &mut rng)
                        .unwrap()
                        .contributions[0]
                })
                .collect();
            let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
            estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / estimates.len() as f64
        };
        let ms = [100usize, 400, 1600];
        let variances: Vec<f64> = ms.iter().map(|&m| variance_at(m)).collect();
        // Least-squares slope of log(var) on log(m).
        let xs: Vec<f64> = ms.iter().map(|&m| (m as f64).ln()).collect();
        let ys: Vec<f64> = variances.iter().map(|v| v.ln()).collect();
        let x_mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let y_mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let slope = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - x_mean) * (y - y_mean))
            .sum::<f64>()
            / xs.iter().map(|x| (x - x_mean).powi(2)).sum::<f64>();
        assert!(
            (-1.35..=-0.65).contains(&slope),
            "log-log slope {slope} is not -1-ish"
        );
    }

    #[test]
    fn constant_model_reports_all_zeros() {
        let sample = uniform_background(20, 3, 30);
        let names: Vec<String> = (0..3).map(|i| format!("f{i}")).collect();
        let report = mean_shap_report(|_: &[f64]| 0.42, &names, &sample, 50, 9).unwrap();
        for entry in &report.entries {
            assert_eq!(entry.mean_score, 0.0);
        }
    }

    #[test]
    fn report_is_sorted_and_deterministic() {
        let sample = uniform_background(25, 3, 31);
        let names: Vec<String> = vec!["up".into(), "down".into(), "flat".into()];
        let predict = |row: &[f64]| row[0] - row[1];
        let a = mean_shap_report(predict, &names, &sample, 200, 3).unwrap();
        let b = mean_shap_report(predict, &names, &sample, 200, 3).unwrap();
        assert_eq!(a, b);
        for window in a.entries.windows(2) {
            assert!(window[0].mean_score >= window[1].mean_score);
        }
        assert_eq!(a.score_for("flat"), Some(0.0));
    }

    #[test]
    fn errors_on_degenerate_inputs() {
        let background = uniform_background(5, 2, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            shapley_sample(|_: &[f64]| 0.0, &[], &[0.0, 0.0], 10, &mut rng),
            Err(ExplainError::EmptyBackground)
        ));
        assert!(matches!(
            shapley_sample(|_: &[f64]| 0.0, &background, &[0.0, 0.0], 0, &mut rng),
            Err(ExplainError::NoPermutations)
        ));
        assert!(matches!(
            shapley_sample(|_: &[f64]| 0.0, &background, &[0.0], 10, &mut rng),
            Err(ExplainError::FeatureMismatch { .. })
        ));
    }
}
