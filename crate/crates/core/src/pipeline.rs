//! Config-driven orchestration: load or generate a cohort, split, preprocess,
//! select variables, fit the model grid, and evaluate both partitions.
//!
//! Imputation tables, selections, and fits see only the training partition
//! (the `paper_faithful` flag switches to whole-dataset imputation
//! statistics). Reports are deterministic for a fixed config and seed:
//! re-running writes byte-identical `report.json` and `report.txt`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{load_csv, temporal_split, DataError, Dataset, Schema, SplitSpec};
use crate::eda;
use crate::forest::{
    self, fit_forest, importance, predict_forest_dataset, rf_wrapper_select, Forest, ForestConfig,
    ForestError,
};
use crate::infosel::{self, hybrid_filter_select, InfoError};
use crate::logit::{
    balanced_weights, build_design, build_design_with_layout, stepwise_select, ClassWeights,
    DesignLayout, Direction, LogitError, LogitFit,
};
use crate::metrics::{evaluate, EvaluationReport, MetricsError, ProbPrediction};
use crate::nbkde::{fit_nb, nb_wrapper_select, predict_nb_dataset, NbError, NbModel, PriorMode};
use crate::preprocess::{
    apply_encodings, eras_mst_plan, EncodingRule, FittedImputer, ImputationPlan, PreprocessError,
};
use crate::synthgen::{generate, preset, SynthError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Logit(#[from] LogitError),
    #[error(transparent)]
    Nb(#[from] NbError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Info(#[from] InfoError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logit,
    Wlogit,
    Nbkde,
    Forest,
}

impl ModelKind {
    pub fn display_name(&self) -> &'static str {
        match self {
            ModelKind::Logit => "Logistic regression",
            ModelKind::Wlogit => "W. logistic regression",
            ModelKind::Nbkde => "Naive Bayes (kde)",
            ModelKind::Forest => "Random forests",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    All,
    Filter,
    Wrapper,
}

impl SelectionMode {
    pub fn display_name(&self) -> &'static str {
        match self {
            SelectionMode::All => "All",
            SelectionMode::Filter => "Filtering",
            SelectionMode::Wrapper => "Wrapper",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    Csv { path: PathBuf, schema: PathBuf },
    Preset {
        name: String,
        #[serde(default)]
        n_rows: Option<usize>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessConfig {
    /// A named shipped plan (currently `eras-mst`).
    Preset(String),
    /// Inline encoding rules and imputation plan.
    Inline {
        #[serde(default)]
        encodings: Vec<EncodingRule>,
        #[serde(default)]
        imputation: ImputationPlan,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: InputSource,
    pub outcome: String,
    pub split: SplitSpec,
    pub models: Vec<ModelKind>,
    pub selections: Vec<SelectionMode>,
    pub seed: u64,
    #[serde(default)]
    pub preprocess: Option<PreprocessConfig>,
    /// Impute from whole-dataset statistics before splitting, as in the
    /// original study, instead of the default train-only tables.
    #[serde(default)]
    pub paper_faithful: bool,
    #[serde(default)]
    pub n_trees: Option<usize>,
    #[serde(default)]
    pub min_node_size: Option<usize>,
}

impl RunConfig {
    fn validate(&self) -> Result<(), PipelineError> {
        if self.models.is_empty() {
            return Err(PipelineError::Config("model list is empty".into()));
        }
        if self.selections.is_empty() {
            return Err(PipelineError::Config("selection list is empty".into()));
        }
        Ok(())
    }

    fn forest_config(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.n_trees.unwrap_or(500),
            min_node_size: self.min_node_size.unwrap_or(50),
            seed: self.seed,
            ..ForestConfig::default()
        }
    }
}

/// One evaluated grid cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellReport {
    pub model: ModelKind,
    pub selection: SelectionMode,
    pub selected_vars: Vec<String>,
    pub in_sample: EvaluationReport,
    pub out_sample: EvaluationReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellError {
    pub model: ModelKind,
    pub selection: SelectionMode,
    pub error: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub outcome: String,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub cells: Vec<CellReport>,
    pub errors: Vec<CellError>,
}

/// A fitted classifier bundled with what it needs to score new data.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainedModel {
    Logit {
        fit: LogitFit,
        layout: DesignLayout,
    },
    Nb(NbModel),
    Forest(Forest),
}

impl TrainedModel {
    pub fn predict(&self, ds: &Dataset) -> Result<Vec<ProbPrediction>, PipelineError> {
        match self {
            TrainedModel::Logit { fit, layout } => {
                let dm = build_design_with_layout(ds, layout)?;
                Ok(crate::logit::predict(fit, &dm)?)
            }
            TrainedModel::Nb(model) => Ok(predict_nb_dataset(model, ds)?),
            TrainedModel::Forest(forest) => Ok(predict_forest_dataset(forest, ds)?),
        }
    }
}

/// Fit one model kind on the training partition.
pub fn train_model(
    kind: ModelKind,
    train: &Dataset,
    vars: &[String],
    outcome: &str,
    forest_cfg: &ForestConfig,
) -> Result<TrainedModel, PipelineError> {
    let labels = train.outcome(outcome)?;
    match kind {
        ModelKind::Logit | ModelKind::Wlogit => {
            let weights = match kind {
                ModelKind::Logit => ClassWeights::equal(),
                _ => balanced_weights(&labels)?,
            };
            let dm = build_design(train, vars)?;
            let fit = crate::logit::fit(&dm, &labels, weights)?;
            Ok(TrainedModel::Logit {
                fit,
                layout: dm.layout().clone(),
            })
        }
        ModelKind::Nbkde => Ok(TrainedModel::Nb(fit_nb(
            train,
            vars,
            outcome,
            PriorMode::Empirical,
        )?)),
        ModelKind::Forest => Ok(TrainedModel::Forest(fit_forest(
            train, vars, outcome, forest_cfg,
        )?)),
    }
}

/// Load a CSV against its schema file, or generate a preset cohort.
pub fn resolve_input(input: &InputSource, seed: u64) -> Result<Dataset, PipelineError> {
    match input {
        InputSource::Csv { path, schema } => {
            let schema: Schema = serde_json::from_str(&std::fs::read_to_string(schema)?)?;
            Ok(load_csv(path, &schema)?)
        }
        InputSource::Preset { name, n_rows } => {
            let mut spec = preset(name)?.with_seed(seed);
            if let Some(n) = n_rows {
                spec = spec.with_rows(*n);
            }
            Ok(generate(&spec)?.dataset)
        }
    }
}

fn resolve_preprocess(
    config: &PreprocessConfig,
) -> Result<(Vec<EncodingRule>, ImputationPlan), PipelineError> {
    match config {
        PreprocessConfig::Preset(name) if name == "eras-mst" => Ok((vec![], eras_mst_plan())),
        PreprocessConfig::Preset(name) => Err(PipelineError::Config(format!(
            "unknown preprocess preset `{name}`"
        ))),
        PreprocessConfig::Inline {
            encodings,
            imputation,
        } => Ok((encodings.clone(), imputation.clone())),
    }
}

/// Modeling candidates: every schema variable except a threshold-mode split
/// column, which is metadata.
fn candidate_vars(ds: &Dataset, split: &SplitSpec) -> Vec<String> {
    let excluded = match split {
        SplitSpec::ByColumnThreshold { column, .. } => Some(column.as_str()),
        SplitSpec::ByRowIndexList { .. } => None,
    };
    ds.schema()
        .variables()
        .iter()
        .map(|v| v.name.clone())
        .filter(|name| Some(name.as_str()) != excluded)
        .collect()
}

struct Prepared {
    train: Dataset,
    test: Dataset,
    candidates: Vec<String>,
    filter_trace: Option<infosel::FilterSelection>,
}

fn prepare(config: &RunConfig) -> Result<Prepared, PipelineError> {
    let mut ds = resolve_input(&config.input, config.seed)?;

    let preprocess = config
        .preprocess
        .as_ref()
        .map(resolve_preprocess)
        .transpose()?;
    if let Some((encodings, _)) = &preprocess {
        ds = apply_encodings(&ds, encodings)?;
    }

    let (train, test) = if config.paper_faithful {
        // Whole-dataset imputation statistics, then split.
        if let Some((_, plan)) = &preprocess {
            ds = crate::preprocess::impute(&ds, plan)?;
        }
        temporal_split(&ds, &config.split)?
    } else {
        let (train, test) = temporal_split(&ds, &config.split)?;
        match &preprocess {
            Some((_, plan)) => {
                let (imputer, train) = FittedImputer::fit(&train, plan)?;
                let test = imputer.apply(&test)?;
                (train, test)
            }
            None => (train, test),
        }
    };

    let candidates = candidate_vars(&train, &config.split);
    Ok(Prepared {
        train,
        test,
        candidates,
        filter_trace: None,
    })
}

fn wrapper_vars(
    model: ModelKind,
    prepared: &Prepared,
    config: &RunConfig,
) -> Result<Vec<String>, PipelineError> {
    let train = &prepared.train;
    let outcome = &config.outcome;
    let candidates = &prepared.candidates;
    match model {
        ModelKind::Logit | ModelKind::Wlogit => {
            let labels = train.outcome(outcome)?;
            let weights = match model {
                ModelKind::Logit => ClassWeights::equal(),
                _ => balanced_weights(&labels)?,
            };
            let result =
                stepwise_select(train, outcome, candidates, Direction::Backward, weights)?;
            Ok(result.selected)
        }
        ModelKind::Nbkde => {
            let result = nb_wrapper_select(train, outcome, candidates, config.seed)?;
            Ok(result.selected)
        }
        ModelKind::Forest => {
            let d = candidates.len();
            let mut sizes: Vec<usize> =
                [5usize, 10, 15, 20].into_iter().filter(|&k| k <= d).collect();
            if sizes.is_empty() {
                sizes.push(d);
            }
            let result = rf_wrapper_select(
                train,
                outcome,
                candidates,
                &config.forest_config(),
                &sizes,
                10,
                config.seed,
            )?;
            Ok(result.selected)
        }
    }
}

/// Execute the full grid. Cell failures are recorded in the report instead
/// of aborting the remaining cells.
pub fn run(config: &RunConfig) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let mut prepared = prepare(config)?;

    // Variable sets per (selection, model); selection happens on train only.
    let mut jobs: Vec<(SelectionMode, ModelKind, Result<Vec<String>, String>)> = Vec::new();
    for &selection in &config.selections {
        match selection {
            SelectionMode::All => {
                for &model in &config.models {
                    jobs.push((selection, model, Ok(prepared.candidates.clone())));
                }
            }
            SelectionMode::Filter => {
                let filtered = hybrid_filter_select(
                    &prepared.train,
                    &config.outcome,
                    &prepared.candidates,
                );
                match filtered {
                    Ok(result) => {
                        for &model in &config.models {
                            jobs.push((selection, model, Ok(result.selected.clone())));
                        }
                        prepared.filter_trace = Some(result);
                    }
                    Err(err) => {
                        for &model in &config.models {
                            jobs.push((selection, model, Err(err.to_string())));
                        }
                    }
                }
            }
            SelectionMode::Wrapper => {
                for &model in &config.models {
                    let vars =
                        wrapper_vars(model, &prepared, config).map_err(|e| e.to_string());
                    jobs.push((selection, model, vars));
                }
            }
        }
    }

    let forest_cfg = config.forest_config();
    let train_labels = prepared.train.outcome(&config.outcome)?;
    let test_labels = prepared.test.outcome(&config.outcome)?;

    let outcomes: Vec<Result<CellReport, CellError>> = jobs
        .par_iter()
        .map(|(selection, model, vars)| {
            let fail = |error: String| CellError {
                model: *model,
                selection: *selection,
                error,
            };
            let vars = vars.as_ref().map_err(|e| fail(e.clone()))?;
            let cell = (|| -> Result<CellReport, PipelineError> {
                let trained =
                    train_model(*model, &prepared.train, vars, &config.outcome, &forest_cfg)?;
                let in_preds = trained.predict(&prepared.train)?;
                let out_preds = trained.predict(&prepared.test)?;
                Ok(CellReport {
                    model: *model,
                    selection: *selection,
                    selected_vars: vars.clone(),
                    in_sample: evaluate(&train_labels, &in_preds)?,
                    out_sample: evaluate(&test_labels, &out_preds)?,
                })
            })();
            cell.map_err(|e| fail(e.to_string()))
        })
        .collect();

    let mut cells = Vec::new();
    let mut errors = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(cell) => cells.push(cell),
            Err(err) => errors.push(err),
        }
    }
    Ok(RunReport {
        outcome: config.outcome.clone(),
        seed: config.seed,
        n_train: prepared.train.n_rows(),
        n_test: prepared.test.n_rows(),
        cells,
        errors,
    })
}

/// Half-up rounding to two decimals, with a one-nano tolerance so decimal
/// ties stored in binary still round up.
fn round2(x: f64) -> f64 {
    ((x * 100.0 + 0.5 + 1e-9).floor()) / 100.0
}

fn fmt2(x: f64) -> String {
    format!("{:.2}", round2(x))
}

/// Render the report as an aligned text table, one block per selection mode.
pub fn render_table(report: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "Outcome: {}   (train {}, test {})\n",
        report.outcome, report.n_train, report.n_test
    ));
    let header = format!(
        "{:<24}| {:<14}| {:>7} {:>10} {:>10} | {:>7} {:>10} {:>10}\n",
        "Method", "Variable set", "AUC", "Brier(0)", "Brier(1)", "AUC", "Brier(0)", "Brier(1)"
    );
    let rule = "-".repeat(header.len() - 1);
    out.push_str(&format!(
        "{:<24}| {:<14}| {:^30} | {:^30}\n",
        "", "", "In-sample", "Out-of-sample"
    ));
    out.push_str(&header);
    out.push_str(&rule);
    out.push('\n');

    let mut selections: Vec<SelectionMode> = Vec::new();
    for cell in &report.cells {
        if !selections.contains(&cell.selection) {
            selections.push(cell.selection);
        }
    }
    for selection in selections {
        for cell in report.cells.iter().filter(|c| c.selection == selection) {
            out.push_str(&format!(
                "{:<24}| {:<14}| {:>7} {:>10} {:>10} | {:>7} {:>10} {:>10}\n",
                cell.model.display_name(),
                selection.display_name(),
                fmt2(cell.in_sample.auc),
                fmt2(cell.in_sample.brier0),
                fmt2(cell.in_sample.brier1),
                fmt2(cell.out_sample.auc),
                fmt2(cell.out_sample.brier0),
                fmt2(cell.out_sample.brier1),
            ));
        }
        out.push_str(&rule);
        out.push('\n');
    }
    for err in &report.errors {
        out.push_str(&format!(
            "{:<24}| {:<14}| error: {}\n",
            err.model.display_name(),
            err.selection.display_name(),
            err.error
        ));
    }
    out
}

/// Run and write `report.json`, `report.txt`, and per-module CSV traces
/// under the output directory.
pub fn run_to_dir(config: &RunConfig, out_dir: impl AsRef<Path>) -> Result<RunReport, PipelineError> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let mut prepared = prepare(config)?;

    // Trace artifacts that the grid run would not otherwise keep.
    if config.selections.contains(&SelectionMode::Filter) {
        if let Ok(result) =
            hybrid_filter_select(&prepared.train, &config.outcome, &prepared.candidates)
        {
            let mut buf = Vec::new();
            infosel::write_filter_trace_csv(&result, &mut buf)?;
            std::fs::write(out_dir.join("filter_trace.csv"), buf)?;
            prepared.filter_trace = Some(result);
        }
    }
    if config.models.contains(&ModelKind::Forest) {
        if let Ok(full) = fit_forest(
            &prepared.train,
            &prepared.candidates,
            &config.outcome,
            &config.forest_config(),
        ) {
            let table = importance(&full);
            let mut buf = Vec::new();
            forest::write_importance_csv(&table, &mut buf)?;
            std::fs::write(out_dir.join("forest_importance.csv"), buf)?;
        }
    }

    let report = run(config)?;
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    std::fs::write(out_dir.join("report.txt"), render_table(&report))?;
    Ok(report)
}

/// Per-variable empirical-logit CSVs for every candidate variable.
pub fn write_eda_curves(
    ds: &Dataset,
    outcome: &str,
    vars: &[String],
    out_dir: impl AsRef<Path>,
) -> Result<(), PipelineError> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    for name in vars {
        let points = eda::marginal_logit_curve(ds, name, outcome)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let mut buf = Vec::new();
        eda::write_logit_curve_csv(&points, &mut buf)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let safe: String = name
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { '_' })
            .collect();
        std::fs::write(out_dir.join(format!("eda_{safe}.csv")), buf)?;
    }
    Ok(())
}
