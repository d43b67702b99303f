//! Seeded synthetic cohort generation.
//!
//! A [`CohortSpec`] draws predictors independently from per-variable
//! marginals and attaches binary outcomes through a logistic model on
//! (optionally centered and scaled) variable values, so every generated row
//! carries an analytically known ground-truth probability. Missingness is
//! stamped on after outcomes are drawn; outcome columns are never missing.

mod presets;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{write_csv, Cell, DataError, Dataset, Schema, VariableDef, VariableKind};

pub use presets::{preset, preset_names, PresetName};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Sampling distribution of one variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marginal {
    Bernoulli { p: f64 },
    /// Probabilities aligned with the variable's declared levels.
    Categorical { probs: Vec<f64> },
    /// Normal clipped to `[min, max]` by rejection.
    TruncNormal { mean: f64, sd: f64, min: f64, max: f64 },
    Uniform { min: f64, max: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
    pub marginal: Marginal,
    #[serde(default)]
    pub missing_rate: f64,
}

impl VariableSpec {
    pub fn new(name: impl Into<String>, kind: VariableKind, marginal: Marginal) -> Self {
        Self {
            name: name.into(),
            kind,
            marginal,
            missing_rate: 0.0,
        }
    }

    pub fn with_missing(mut self, rate: f64) -> Self {
        self.missing_rate = rate;
        self
    }
}

/// One additive term of a logistic outcome model. The contribution is
/// `coeff * (value - center) / scale`, where a discrete value is its level
/// index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTerm {
    pub var: String,
    pub coeff: f64,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl OutcomeTerm {
    pub fn new(var: impl Into<String>, coeff: f64) -> Self {
        Self {
            var: var.into(),
            coeff,
            center: 0.0,
            scale: 1.0,
        }
    }

    pub fn standardized(var: impl Into<String>, coeff: f64, center: f64, scale: f64) -> Self {
        Self {
            var: var.into(),
            coeff,
            center,
            scale,
        }
    }
}

/// Product term linking two variables in the linear predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionTerm {
    pub a: OutcomeTerm,
    pub b: OutcomeTerm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub name: String,
    pub intercept: f64,
    #[serde(default)]
    pub terms: Vec<OutcomeTerm>,
    #[serde(default)]
    pub interactions: Vec<InteractionTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_rows: usize,
    pub variables: Vec<VariableSpec>,
    pub outcomes: Vec<OutcomeModel>,
    pub seed: u64,
}

/// Generated dataset plus the per-outcome ground-truth probabilities the
/// labels were drawn from.
#[derive(Clone, Debug)]
pub struct GeneratedCohort {
    pub dataset: Dataset,
    /// `(outcome name, per-row probability of class 1)`.
    pub ground_truth: Vec<(String, Vec<f64>)>,
}

impl CohortSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_rows(mut self, n_rows: usize) -> Self {
        self.n_rows = n_rows;
        self
    }

    pub fn variable_names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }

    fn validate(&self) -> Result<(), SynthError> {
        let invalid = |msg: String| Err(SynthError::InvalidSpec(msg));
        if self.n_rows == 0 {
            return invalid("n_rows must be positive".into());
        }
        if self.outcomes.is_empty() {
            return invalid("at least one outcome model is required".into());
        }
        for v in &self.variables {
            if !(0.0..1.0).contains(&v.missing_rate) {
                return invalid(format!("missing rate of `{}` out of [0,1)", v.name));
            }
            match (&v.kind, &v.marginal) {
                (VariableKind::Binary, Marginal::Bernoulli { p }) => {
                    if !(0.0..=1.0).contains(p) {
                        return invalid(format!("Bernoulli p of `{}` out of [0,1]", v.name));
                    }
                }
                (
                    VariableKind::Ordinal { levels } | VariableKind::Nominal { levels },
                    Marginal::Categorical { probs },
                ) => {
                    if probs.len() != levels.len() {
                        return invalid(format!(
                            "`{}` has {} levels but {} probabilities",
                            v.name,
                            levels.len(),
                            probs.len()
                        ));
                    }
                    if probs.iter().any(|p| *p < 0.0 || *p > 1.0)
                        || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
                    {
                        return invalid(format!("probabilities of `{}` must sum to 1", v.name));
                    }
                }
                (VariableKind::Continuous, Marginal::TruncNormal { sd, min, max, .. }) => {
                    if *sd <= 0.0 || min >= max {
                        return invalid(format!("degenerate truncated normal for `{}`", v.name));
                    }
                }
                (VariableKind::Continuous, Marginal::Uniform { min, max }) => {
                    if min >= max {
                        return invalid(format!("degenerate uniform range for `{}`", v.name));
                    }
                }
                _ => {
                    return invalid(format!(
                        "marginal of `{}` does not match its kind",
                        v.name
                    ))
                }
            }
        }
        for outcome in &self.outcomes {
            for term in outcome
                .terms
                .iter()
                .chain(outcome.interactions.iter().flat_map(|i| [&i.a, &i.b]))
            {
                if !self.variables.iter().any(|v| v.name == term.var) {
                    return invalid(format!(
                        "outcome `{}` references undeclared variable `{}`",
                        outcome.name, term.var
                    ));
                }
                if term.scale == 0.0 {
                    return invalid(format!("term on `{}` has zero scale", term.var));
                }
            }
        }
        Ok(())
    }
}

fn draw_value(marginal: &Marginal, rng: &mut ChaCha12Rng) -> Cell {
    match marginal {
        Marginal::Bernoulli { p } => Cell::Number((rng.random::<f64>() < *p) as u8 as f64),
        Marginal::Categorical { probs } => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut level = probs.len() - 1;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    level = i;
                    break;
                }
            }
            Cell::Level(level)
        }
        Marginal::TruncNormal { mean, sd, min, max } => {
            // Rejection sampling; preset ranges keep acceptance near 1.
            for _ in 0..10_000 {
                let z: f64 = rng.sample(StandardNormal);
                let v = mean + sd * z;
                if v >= *min && v <= *max {
                    return Cell::Number(v);
                }
            }
            Cell::Number(mean.clamp(*min, *max))
        }
        Marginal::Uniform { min, max } => Cell::Number(rng.random_range(*min..*max)),
    }
}

fn term_value(term: &OutcomeTerm, cell: &Cell) -> f64 {
    let raw = cell.as_f64().expect("values are drawn before missingness");
    (raw - term.center) / term.scale
}

/// Draw a cohort. The generation is a single seeded stream: variable values
/// row by row, then labels per outcome, then missingness.
pub fn generate(spec: &CohortSpec) -> Result<GeneratedCohort, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let n = spec.n_rows;
    let d = spec.variables.len();

    let mut values = vec![Cell::Missing; n * d];
    for row in 0..n {
        for (j, v) in spec.variables.iter().enumerate() {
            values[row * d + j] = draw_value(&v.marginal, &mut rng);
        }
    }

    let var_index = |name: &str| {
        spec.variables
            .iter()
            .position(|v| v.name == name)
            .expect("validated")
    };
    let mut ground_truth = Vec::with_capacity(spec.outcomes.len());
    let mut labels: Vec<Vec<u8>> = Vec::with_capacity(spec.outcomes.len());
    for outcome in &spec.outcomes {
        let mut probs = Vec::with_capacity(n);
        for row in 0..n {
            let mut eta = outcome.intercept;
            for term in &outcome.terms {
                eta += term.coeff * term_value(term, &values[row * d + var_index(&term.var)]);
            }
            for inter in &outcome.interactions {
                let a = term_value(&inter.a, &values[row * d + var_index(&inter.a.var)]);
                let b = term_value(&inter.b, &values[row * d + var_index(&inter.b.var)]);
                eta += inter.a.coeff * inter.b.coeff * a * b;
            }
            probs.push(1.0 / (1.0 + (-eta).exp()));
        }
        let drawn: Vec<u8> = probs
            .iter()
            .map(|&p| (rng.random::<f64>() < p) as u8)
            .collect();
        labels.push(drawn);
        ground_truth.push((outcome.name.clone(), probs));
    }

    // Missingness after the outcome draw.
    for (j, v) in spec.variables.iter().enumerate() {
        if v.missing_rate > 0.0 {
            for row in 0..n {
                if rng.random::<f64>() < v.missing_rate {
                    values[row * d + j] = Cell::Missing;
                }
            }
        }
    }

    let schema = Schema::new(
        spec.variables
            .iter()
            .map(|v| VariableDef::new(v.name.clone(), v.kind.clone()))
            .collect(),
        spec.outcomes.iter().map(|o| o.name.clone()).collect(),
    )?;
    let n_cols = schema.n_cols();
    let mut cells = Vec::with_capacity(n * n_cols);
    for row in 0..n {
        cells.extend_from_slice(&values[row * d..(row + 1) * d]);
        for outcome_labels in &labels {
            cells.push(Cell::Number(outcome_labels[row] as f64));
        }
    }
    Ok(GeneratedCohort {
        dataset: Dataset::new(schema, cells, n)?,
        ground_truth,
    })
}

/// Sidecar metadata written next to a generated cohort CSV.
#[derive(Serialize, Deserialize)]
pub struct CohortSidecar {
    pub spec: CohortSpec,
    pub ground_truth: Vec<(String, Vec<f64>)>,
}

/// Write `cohort.csv`, `schema.json`, and `cohort_meta.json` under a
/// directory.
pub fn write_cohort_files(
    cohort: &GeneratedCohort,
    spec: &CohortSpec,
    dir: impl AsRef<Path>,
) -> Result<(), SynthError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_csv(&cohort.dataset, dir.join("cohort.csv"))?;
    let schema_json = serde_json::to_string_pretty(cohort.dataset.schema())?;
    std::fs::write(dir.join("schema.json"), schema_json)?;
    let sidecar = CohortSidecar {
        spec: spec.clone(),
        ground_truth: cohort.ground_truth.clone(),
    };
    std::fs::write(
        dir.join("cohort_meta.json"),
        serde_json::to_string(&sidecar)?,
    )?;
    Ok(())
}
