//! Reproducible experiment pipeline: data synthesis, preprocessing, the four
//! feature-selection runs, the data-group x annealer optimization matrix,
//! final evaluation, and attribution reports.
//!
//! Each stage reads only prior-stage artifacts under the output directory
//! plus the config, so deleting later-stage outputs and re-running
//! regenerates them byte-identically. Every random source is a ChaCha stream
//! seeded from `(master seed, purpose string)`, which keeps stages and the
//! parallel model matrix independent of execution order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annealer::{
    self, Algorithm, AnnealError, AnnealerConfig, ObjectiveError, OptimizationResult,
};
use crate::explain::{self, ExplainError};
use crate::feature_select::{self, SelectError, SelectionCriterion, SelectionResult};
use crate::gbt::{self, GbtError, GbtHyperparams};
use crate::metrics::{self, EvalReport, MetricsError};
use crate::param_space::{ParamSpace, ParamSpaceError, ParamSpec};
use crate::preprocess::{synth_ed, ColumnRole, ColumnSchema, Dataset, Frame, PreprocessError};

/// The five data groups, in reporting order.
pub const GROUP_NAMES: [&str; 5] = ["DT_SFS", "DT_SBS", "RF_SFS", "RF_SBS", "X_all"];

/// The three optimizers, in reporting order.
pub const ALGORITHMS: [Algorithm; 3] = [Algorithm::Sa, Algorithm::Asa, Algorithm::Atsa];

/// Canonical model naming: `<group>_<ALG>-XGB`.
pub fn model_name(group: &str, algorithm: Algorithm) -> String {
    format!("{group}_{}-XGB", algorithm.label())
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage {stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Space(#[from] ParamSpaceError),
    #[error(transparent)]
    Gbt(#[from] GbtError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Anneal(#[from] AnnealError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Budget presets: `desk` completes the full matrix in minutes, `paper`
/// uses the reference schedule budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSettings {
    pub n: usize,
    pub prevalence: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            n: 3000,
            prevalence: 0.06,
        }
    }
}

/// Where the raw table comes from: explicit paths, or the synth stage.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct InputSettings {
    pub table: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub synth: SynthSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSettings {
    pub ratio: f64,
    pub stratified: bool,
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self {
            ratio: 0.8,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealerSettings {
    pub sa: AnnealerConfig,
    pub asa: AnnealerConfig,
    pub atsa: AnnealerConfig,
}

impl Default for AnnealerSettings {
    fn default() -> Self {
        Self {
            sa: AnnealerConfig::for_algorithm(Algorithm::Sa),
            asa: AnnealerConfig::for_algorithm(Algorithm::Asa),
            atsa: AnnealerConfig::for_algorithm(Algorithm::Atsa),
        }
    }
}

impl AnnealerSettings {
    pub fn for_algorithm(&self, algorithm: Algorithm) -> AnnealerConfig {
        let mut config = match algorithm {
            Algorithm::Sa => self.sa.clone(),
            Algorithm::Asa => self.asa.clone(),
            Algorithm::Atsa => self.atsa.clone(),
        };
        // The slot decides the algorithm; the field is along for serialization.
        config.algorithm = algorithm;
        config
    }
}

/// Which (group, algorithm) cells of the matrix to run; `None` means all.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MatrixSettings {
    pub groups: Option<Vec<String>>,
    pub algorithms: Option<Vec<Algorithm>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainSettings {
    pub permutations: usize,
    pub sample_size: usize,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        Self {
            permutations: 500,
            sample_size: 100,
        }
    }
}

/// Everything a run needs besides the output directory: a run is reproducible
/// from this config plus its seed alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub input: InputSettings,
    pub split: SplitSettings,
    pub knn_k: usize,
    pub space: Vec<ParamSpec>,
    pub annealers: AnnealerSettings,
    /// Stratified fraction of the training split held out by the annealer
    /// objective; fixed once per run and shared by every model.
    pub objective_holdout: f64,
    pub selection_holdout: f64,
    pub matrix: MatrixSettings,
    pub threshold: f64,
    pub explain: ExplainSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            input: InputSettings::default(),
            split: SplitSettings::default(),
            knn_k: 5,
            space: ParamSpace::xgb_default().specs().to_vec(),
            annealers: AnnealerSettings::default(),
            objective_holdout: 0.25,
            selection_holdout: 0.25,
            matrix: MatrixSettings::default(),
            threshold: 0.5,
            explain: ExplainSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn apply_profile(&mut self, profile: Profile) {
        match profile {
            Profile::Desk => {
                self.input.synth.n = 3000;
                for config in [
                    &mut self.annealers.sa,
                    &mut self.annealers.asa,
                    &mut self.annealers.atsa,
                ] {
                    config.max_iterations = 60;
                    config.moves_per_iteration = 4;
                }
                self.explain.permutations = 120;
                self.explain.sample_size = 40;
            }
            Profile::Paper => {
                for config in [
                    &mut self.annealers.sa,
                    &mut self.annealers.asa,
                    &mut self.annealers.atsa,
                ] {
                    config.max_iterations = 1000;
                    config.moves_per_iteration = 8;
                }
                self.explain.permutations = 500;
                self.explain.sample_size = 100;
            }
        }
    }

    pub fn param_space(&self) -> Result<ParamSpace, ParamSpaceError> {
        ParamSpace::new(self.space.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Stable per-purpose seed stream: SHA-256 of the master seed and a purpose
/// tag, truncated to 64 bits.
pub fn derive_seed(master: u64, purpose: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(purpose.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is wide enough"))
}

/// Artifact layout under the output directory.
pub struct Paths {
    pub out: PathBuf,
}

impl Paths {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self { out: out.into() }
    }

    pub fn synth_table(&self) -> PathBuf {
        self.out.join("synth/table.csv")
    }
    pub fn synth_schema(&self) -> PathBuf {
        self.out.join("synth/schema.json")
    }
    pub fn synth_truth(&self) -> PathBuf {
        self.out.join("synth/truth.json")
    }
    pub fn train(&self) -> PathBuf {
        self.out.join("preprocess/train.csv")
    }
    pub fn test(&self) -> PathBuf {
        self.out.join("preprocess/test.csv")
    }
    pub fn scaling(&self) -> PathBuf {
        self.out.join("preprocess/scaling.json")
    }
    pub fn selection(&self, method: &str) -> PathBuf {
        self.out.join(format!("select/{method}.json"))
    }
    pub fn selection_report(&self) -> PathBuf {
        self.out.join("select/selection_report.csv")
    }
    pub fn trace(&self, model: &str) -> PathBuf {
        self.out.join(format!("optimize/{model}.trace.csv"))
    }
    pub fn best_params(&self, model: &str) -> PathBuf {
        self.out.join(format!("optimize/{model}.best.json"))
    }
    pub fn eval(&self, model: &str) -> PathBuf {
        self.out.join(format!("evaluate/{model}.eval.json"))
    }
    pub fn aggregate(&self) -> PathBuf {
        self.out.join("evaluate/aggregate.csv")
    }
    pub fn best_model(&self) -> PathBuf {
        self.out.join("evaluate/best_model.json")
    }
    pub fn attribution(&self, tag: &str) -> PathBuf {
        self.out.join(format!("explain/{tag}_attribution.json"))
    }
    pub fn attribution_table(&self, tag: &str) -> PathBuf {
        self.out.join(format!("explain/{tag}_attribution.csv"))
    }
    pub fn config(&self) -> PathBuf {
        self.out.join("config.json")
    }
    pub fn manifest(&self) -> PathBuf {
        self.out.join("manifest.json")
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::Invalid(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes a fully numeric dataset as delimited text: feature columns plus a
/// trailing `label` column.
pub fn write_dataset_csv(dataset: &Dataset, path: &Path) -> Result<(), PipelineError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = dataset.feature_names().to_vec();
    header.push("label".to_string());
    writer
        .write_record(&header)
        .map_err(PreprocessError::from)?;
    for i in 0..dataset.n_rows() {
        let mut record: Vec<String> = dataset.row(i).iter().map(|v| format!("{v}")).collect();
        record.push(format!("{}", dataset.labels()[i]));
        writer.write_record(&record).map_err(PreprocessError::from)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| PipelineError::Invalid(e.to_string()))?;
    write_file(path, std::str::from_utf8(&bytes).expect("csv is utf-8"))
}

/// Reads a dataset written by [`write_dataset_csv`].
pub fn read_dataset_csv(path: &Path) -> Result<Dataset, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::Invalid(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(PreprocessError::from)?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let schema: Vec<ColumnSchema> = header
        .iter()
        .map(|name| {
            let role = if name == "label" {
                ColumnRole::Label
            } else {
                ColumnRole::Numeric
            };
            ColumnSchema::new(name.clone(), role)
        })
        .collect();
    Ok(Frame::from_csv(&text, &schema)?.into_dataset()?)
}

/// Saved outcome of one model's hyperparameter search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestParams {
    pub model: String,
    pub group: String,
    pub algorithm: Algorithm,
    /// Inner-validation AUC of the best solution.
    pub best_score: f64,
    pub evaluations: usize,
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestModel {
    pub model: String,
    pub auc: f64,
}

/// Generates the synthetic table, schema, and ground-truth sidecar. Skipped
/// when the config points at an explicit input table.
pub fn stage_synth(config: &RunConfig, paths: &Paths) -> Result<(), PipelineError> {
    if config.input.table.is_some() {
        return Ok(());
    }
    let seed = derive_seed(config.seed, "synth");
    let output = synth_ed(config.input.synth.n, config.input.synth.prevalence, seed)?;
    write_file(&paths.synth_table(), &output.table_csv)?;
    write_file(
        &paths.synth_schema(),
        &serde_json::to_string_pretty(&output.schema)?,
    )?;
    write_file(
        &paths.synth_truth(),
        &serde_json::to_string_pretty(&output.truth)?,
    )?;
    Ok(())
}

fn resolve_input(config: &RunConfig, paths: &Paths) -> Result<(PathBuf, PathBuf), PipelineError> {
    match (&config.input.table, &config.input.schema) {
        (Some(table), Some(schema)) => Ok((table.clone(), schema.clone())),
        (None, None) => {
            let table = paths.synth_table();
            if !table.exists() {
                return Err(PipelineError::Invalid(
                    "no input table configured and no synth output found; run `synth` first"
                        .to_string(),
                ));
            }
            Ok((table, paths.synth_schema()))
        }
        _ => Err(PipelineError::Invalid(
            "input.table and input.schema must be set together".to_string(),
        )),
    }
}

/// Load, impute, encode, expand, split, and scale. Scaling ranges are fitted
/// on the training split only and reapplied verbatim to the test split.
pub fn stage_preprocess(config: &RunConfig, paths: &Paths) -> Result<(), PipelineError> {
    let (table_path, schema_path) = resolve_input(config, paths)?;
    let schema: Vec<ColumnSchema> = read_json(&schema_path)?;
    let frame = Frame::load_table(&table_path, &schema)?;
    let dataset = frame
        .knn_impute(config.knn_k)?
        .encode(&schema)?
        .expand_arrival_time()?
        .into_dataset()?;

    let split_seed = derive_seed(config.seed, "split");
    let (train, test) = dataset.split(config.split.ratio, config.split.stratified, split_seed)?;
    let (train_scaled, scaling) = train.scale_minmax();
    let test_scaled = test.apply_scaling(&scaling)?;

    write_dataset_csv(&train_scaled, &paths.train())?;
    write_dataset_csv(&test_scaled, &paths.test())?;
    write_file(&paths.scaling(), &serde_json::to_string_pretty(&scaling)?)?;
    Ok(())
}

/// Runs the four selection methods and writes their results plus the marks
/// table.
pub fn stage_select(config: &RunConfig, paths: &Paths) -> Result<(), PipelineError> {
    let train = read_dataset_csv(&paths.train())?;
    let seed = derive_seed(config.seed, "select");
    let criterion = |label: &str| {
        let mut criterion = match label {
            "DT" => SelectionCriterion::dt(seed),
            _ => SelectionCriterion::rf(seed),
        };
        criterion.holdout_fraction = config.selection_holdout;
        criterion
    };

    let jobs: Vec<(&str, bool)> = vec![
        ("DT", true),
        ("DT", false),
        ("RF", true),
        ("RF", false),
    ];
    let results: Vec<SelectionResult> = jobs
        .par_iter()
        .map(|&(label, forward)| {
            let criterion = criterion(label);
            if forward {
                feature_select::sfs(&train, &criterion)
            } else {
                feature_select::sbs(&train, &criterion)
            }
        })
        .collect::<Result<_, _>>()?;

    for result in &results {
        write_file(
            &paths.selection(&result.method),
            &serde_json::to_string_pretty(result)?,
        )?;
    }
    let report = feature_select::selection_report(&results, train.feature_names());
    write_file(&paths.selection_report(), &report.to_csv())?;
    Ok(())
}

fn selected_groups(config: &RunConfig) -> Vec<String> {
    GROUP_NAMES
        .iter()
        .map(|g| g.to_string())
        .filter(|g| {
            config
                .matrix
                .groups
                .as_ref()
                .is_none_or(|wanted| wanted.contains(g))
        })
        .collect()
}

fn selected_algorithms(config: &RunConfig) -> Vec<Algorithm> {
    ALGORITHMS
        .iter()
        .copied()
        .filter(|a| {
            config
                .matrix
                .algorithms
                .as_ref()
                .is_none_or(|wanted| wanted.contains(a))
        })
        .collect()
}

fn group_features(
    group: &str,
    train: &Dataset,
    paths: &Paths,
) -> Result<Vec<String>, PipelineError> {
    if group == "X_all" {
        return Ok(train.feature_names().to_vec());
    }
    let result: SelectionResult = read_json(&paths.selection(group))?;
    if result.selected.is_empty() {
        // A selection that kept nothing still needs a trainable group.
        return Ok(train.feature_names().to_vec());
    }
    Ok(result.selected)
}

/// Runs the (group x algorithm) matrix: each model anneals the XGB space
/// against the inner-holdout AUC objective and writes a trace plus its best
/// parameters. Completed models are skipped on resume.
pub fn stage_optimize(config: &RunConfig, paths: &Paths) -> Result<(), PipelineError> {
    let train = read_dataset_csv(&paths.train())?;
    let space = config.param_space()?;
    let objective_seed = derive_seed(config.seed, "objective_split");
    let (inner_train, inner_val) = train.split(
        1.0 - config.objective_holdout,
        config.split.stratified,
        objective_seed,
    )?;

    let mut models = Vec::new();
    for algorithm in selected_algorithms(config) {
        for group in selected_groups(config) {
            models.push((group, algorithm));
        }
    }

    models
        .par_iter()
        .map(|(group, algorithm)| {
            let model = model_name(group, *algorithm);
            if paths.trace(&model).exists() && paths.best_params(&model).exists() {
                return Ok(());
            }
            let features = group_features(group, &train, paths)?;
            let fit = inner_train.select_features(&features)?;
            let val = inner_val.select_features(&features)?;
            let val_rows: Vec<Vec<f64>> = (0..val.n_rows()).map(|i| val.row(i)).collect();

            let space = space.clone();
            let train_seed = derive_seed(config.seed, &format!("train:{model}"));
            let objective = |solution: &crate::param_space::Solution| {
                let hp = GbtHyperparams::from_solution(&space, solution)
                    .map_err(|e| ObjectiveError(e.to_string()))?;
                let mut rng = ChaCha8Rng::seed_from_u64(train_seed);
                let ensemble =
                    gbt::train(&fit, &hp, &mut rng).map_err(|e| ObjectiveError(e.to_string()))?;
                let scores: Vec<f64> = val_rows
                    .iter()
                    .map(|row| ensemble.predict_proba(row))
                    .collect::<Result<_, _>>()
                    .map_err(|e| ObjectiveError(e.to_string()))?;
                metrics::roc_auc(val.labels(), &scores)
                    .map_err(|e| ObjectiveError(e.to_string()))
            };

            let annealer_config = config.annealers.for_algorithm(*algorithm);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &model));
            let result: OptimizationResult =
                annealer::run(objective, &space, &annealer_config, &mut rng)?;

            let params: BTreeMap<String, f64> = space
                .specs()
                .iter()
                .zip(result.best_solution.values())
                .map(|(spec, &value)| (spec.name.clone(), value))
                .collect();
            let best = BestParams {
                model: model.clone(),
                group: group.clone(),
                algorithm: *algorithm,
                best_score: result.best_score,
                evaluations: result.evaluations,
                params,
            };
            write_file(&paths.trace(&model), &annealer::trace_to_csv(&result.trace))?;
            write_file(&paths.best_params(&model), &serde_json::to_string_pretty(&best)?)?;
            Ok(())
        })
        .collect::<Result<Vec<()>, PipelineError>>()?;
    Ok(())
}

fn all_best_params(config: &RunConfig, paths: &Paths) -> Result<Vec<BestParams>, PipelineError> {
    let mut results = Vec::new();
    for algorithm in selected_algorithms(config) {
        for group in selected_groups(config) {
            let model = model_name(&group, algorithm);
            let path = paths.best_params(&model);
            if path.exists() {
                results.push(read_json::<BestParams>(&path)?);
            }
        }
    }
    if results.is_empty() {
        return Err(PipelineError::Invalid(
            "no optimized models found; run `optimize` first".to_string(),
        ));
    }
    Ok(results)
}

fn retrain_final(
    config: &RunConfig,
    paths: &Paths,
    best: &BestParams,
    train: &Dataset,
) -> Result<(gbt::BoostedEnsemble, Vec<String>), PipelineError> {
    let features = group_features(&best.group, train, paths)?;
    let fit = train.select_features(&features)?;
    let hp = GbtHyperparams::from_named(&best.params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("final:{}", best.model)));
    let ensemble = gbt::train(&fit, &hp, &mut rng)?;
    Ok((ensemble, features))
}

/// Retrains each optimized model on the full training split and scores it on
/// the held-out test split; writes per-model reports, the aggregate table,
/// and the best-model marker (highest AUC).
pub fn stage_evaluate(config: &RunConfig, paths: &Paths) -> Result<(), PipelineError> {
    let train = read_dataset_csv(&paths.train())?;
    let test = read_dataset_csv(&paths.test())?;
    let all_best = all_best_params(config, paths)?;

    let reports: Vec<EvalReport> = all_best
        .par_iter()
        .map(|best| {
            let (ensemble, features) = retrain_final(config, paths, best, &train)?;
            let test_group = test.select_features(&features)?;
            let scores: Vec<f64> = (0..test_group.n_rows())
                .map(|i| ensemble.predict_proba(&test_group.row(i)))
                .collect::<Result<_, _>>()?;
            let auc = metrics::roc_auc(test_group.labels(), &scores)?;
            let predictions = metrics::binarize(&scores, config.threshold);
            let confusion = metrics::confusion(test_group.labels(), &predictions)?;
            let summary = metrics::classification_metrics(&confusion)?;
            Ok(EvalReport {
                model: best.model.clone(),
                accuracy: summary.accuracy,
                auc,
                sensitivity: summary.sensitivity,
                specificity: summary.specificity,
                f1: summary.f1,
            })
        })
        .collect::<Result<_, PipelineError>>()?;

    for report in &reports {
        write_file(&paths.eval(&report.model), &serde_json::to_string_pretty(report)?)?;
    }

    let best_index = reports
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.auc.partial_cmp(&b.auc).expect("AUCs are finite"))
        .map(|(i, _)| i)
        .expect("at least one report");
    let fmt = |value: Option<f64>| value.map_or("NA".to_string(), |v| format!("{v:.6}"));
    let mut aggregate =
        String::from("model,accuracy,auc,sensitivity,specificity,f1,best\n");
    for (i, report) in reports.iter().enumerate() {
        aggregate.push_str(&format!(
            "{},{:.6},{:.6},{},{},{},{}\n",
            report.model,
            report.accuracy,
            report.auc,
            fmt(report.sensitivity),
            fmt(report.specificity),
            fmt(report.f1),
            u8::from(i == best_index),
        ));
    }
    write_file(&paths.aggregate(), &aggregate)?;
    write_file(
        &paths.best_model(),
        &serde_json::to_string_pretty(&BestModel {
            model: reports[best_index].model.clone(),
            auc: reports[best_index].auc,
        })?,
    )?;
    Ok(())
}

/// Attribution reports for (a) the best all-features model and (b) the
/// overall best model, over a seeded sample of test rows.
pub fn stage_explain(config: &RunConfig, paths: &Paths) -> Result<(), PipelineError> {
    let train = read_dataset_csv(&paths.train())?;
    let test = read_dataset_csv(&paths.test())?;
    let all_best = all_best_params(config, paths)?;

    let eval_auc = |model: &str| -> Result<f64, PipelineError> {
        let report: EvalReport = read_json(&paths.eval(model))?;
        Ok(report.auc)
    };
    let best_of = |candidates: Vec<&BestParams>| -> Result<Option<BestParams>, PipelineError> {
        let mut best: Option<(f64, &BestParams)> = None;
        for params in candidates {
            let auc = eval_auc(&params.model)?;
            if best.is_none_or(|(b, _)| auc > b) {
                best = Some((auc, params));
            }
        }
        Ok(best.map(|(_, p)| p.clone()))
    };

    let overall = best_of(all_best.iter().collect())?
        .ok_or_else(|| PipelineError::Invalid("no evaluated models".to_string()))?;
    let all_features = best_of(all_best.iter().filter(|b| b.group == "X_all").collect())?;

    let mut targets = Vec::new();
    if let Some(model) = all_features {
        targets.push(("x_all", model));
    }
    targets.push(("best_model", overall));

    for (tag, best) in targets {
        let (ensemble, features) = retrain_final(config, paths, &best, &train)?;
        let test_group = test.select_features(&features)?;

        let sample_seed = derive_seed(config.seed, &format!("explain_sample:{}", best.model));
        let mut indices: Vec<usize> = (0..test_group.n_rows()).collect();
        indices.shuffle(&mut ChaCha8Rng::seed_from_u64(sample_seed));
        indices.truncate(config.explain.sample_size.max(1));
        indices.sort_unstable();
        let rows: Vec<Vec<f64>> = indices.iter().map(|&i| test_group.row(i)).collect();

        let predict = |row: &[f64]| {
            ensemble
                .predict_proba(row)
                .expect("sampled rows match the model's features")
        };
        let report = explain::mean_shap_report(
            predict,
            test_group.feature_names(),
            &rows,
            config.explain.permutations,
            derive_seed(config.seed, &format!("explain:{}", best.model)),
        )?;
        write_file(&paths.attribution(tag), &serde_json::to_string_pretty(&report)?)?;
        write_file(&paths.attribution_table(tag), &report.to_csv())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
    pub config: RunConfig,
}

fn collect_files(dir: &Path, root: &Path, into: &mut Vec<PathBuf>) -> Result<(), PipelineError> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, root, into)?;
        } else {
            into.push(path);
        }
    }
    Ok(())
}

/// Hashes every artifact under the output directory (except the manifest
/// itself) into `manifest.json`, alongside the resolved config.
pub fn write_manifest(config: &RunConfig, paths: &Paths) -> Result<Manifest, PipelineError> {
    let mut files = Vec::new();
    collect_files(&paths.out, &paths.out, &mut files)?;
    let manifest_path = paths.manifest();
    let mut entries = Vec::new();
    for path in files {
        if path == manifest_path {
            continue;
        }
        let bytes = fs::read(&path)?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        let relative = path
            .strip_prefix(&paths.out)
            .expect("collected under out dir")
            .to_string_lossy()
            .replace('\\', "/");
        entries.push(ManifestEntry {
            path: relative,
            sha256: hex,
            bytes: bytes.len() as u64,
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        files: entries,
        config: config.clone(),
    };
    write_file(&manifest_path, &serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// The full framework end to end. The first failing stage aborts the run,
/// tagged with its name.
pub fn run_pipeline(config: &RunConfig, paths: &Paths) -> Result<Manifest, PipelineError> {
    let tag = |stage: &'static str| {
        move |e: PipelineError| PipelineError::Stage {
            stage,
            message: e.to_string(),
        }
    };
    write_file(&paths.config(), &config.to_json()).map_err(tag("config"))?;
    stage_synth(config, paths).map_err(tag("synth"))?;
    stage_preprocess(config, paths).map_err(tag("preprocess"))?;
    stage_select(config, paths).map_err(tag("select"))?;
    stage_optimize(config, paths).map_err(tag("optimize"))?;
    stage_evaluate(config, paths).map_err(tag("evaluate"))?;
    stage_explain(config, paths).map_err(tag("explain"))?;
    write_manifest(config, paths).map_err(tag("manifest"))
}
