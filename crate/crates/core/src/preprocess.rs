//! Variable encoding and conditional-table imputation.
//!
//! Encodings rewrite a column in place (merging factor levels, binarizing, or
//! cutting a continuous column into bins). Imputation fills missing cells with
//! the conditional mean (continuous targets) or conditional mode (discrete
//! targets) over cells of a conditioning table, falling back to the marginal
//! statistic for conditioner combinations never observed during fitting.
//! Plan entries run in order, so later entries may condition on columns
//! completed by earlier ones.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Cell, DataError, Dataset, VariableKind};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("level `{level}` of `{target}` has no mapping")]
    UnmappedLevel { target: String, level: String },
    #[error("rule on `{target}` does not fit the column kind: {why}")]
    IncompatibleKind { target: String, why: String },
    #[error("invalid rule: {0}")]
    InvalidRule(String),
    #[error("target `{0}` has no observed values")]
    NoObservedValues(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Cutpoint discretization: `labels[i]` covers `[cutpoints[i-1], cutpoints[i])`
/// with the first and last bins open-ended. A value equal to a cutpoint falls
/// in the higher bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinsByCutpoints {
    pub cutpoints: Vec<f64>,
    pub labels: Vec<String>,
}

impl BinsByCutpoints {
    pub fn new(cutpoints: Vec<f64>, labels: Vec<String>) -> Result<Self, PreprocessError> {
        if cutpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PreprocessError::InvalidRule(
                "cutpoints must be strictly increasing".into(),
            ));
        }
        if labels.len() != cutpoints.len() + 1 {
            return Err(PreprocessError::InvalidRule(format!(
                "{} cutpoints require {} labels, got {}",
                cutpoints.len(),
                cutpoints.len() + 1,
                labels.len()
            )));
        }
        Ok(Self { cutpoints, labels })
    }

    pub fn bin_index(&self, value: f64) -> usize {
        self.cutpoints.iter().filter(|&&c| c <= value).count()
    }
}

/// How one column is rewritten.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingAction {
    /// Map old factor levels onto (fewer) new labels; every old level needs
    /// an entry. New level order follows first appearance over old levels.
    MergeLevels(HashMap<String, String>),
    /// Collapse a factor to 0/1: levels in `positive` become 1.
    Binarize { positive: Vec<String> },
    /// Cut a continuous column into ordinal bins.
    Bins(BinsByCutpoints),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingRule {
    pub target: String,
    #[serde(flatten)]
    pub action: EncodingAction,
}

/// Apply encoding rules in order, returning a dataset with rewritten columns
/// and an updated schema. Missing cells stay missing; observed cells never
/// become missing.
pub fn apply_encodings(ds: &Dataset, rules: &[EncodingRule]) -> Result<Dataset, PreprocessError> {
    let mut out = ds.clone();
    for rule in rules {
        out = apply_one(&out, rule)?;
    }
    Ok(out)
}

fn apply_one(ds: &Dataset, rule: &EncodingRule) -> Result<Dataset, PreprocessError> {
    let var = ds.schema().var_index(&rule.target)?;
    let kind = ds.schema().var_kind(var).clone();
    let incompatible = |why: &str| PreprocessError::IncompatibleKind {
        target: rule.target.clone(),
        why: why.to_string(),
    };
    match &rule.action {
        EncodingAction::MergeLevels(map) => {
            let levels = match &kind {
                VariableKind::Ordinal { levels } | VariableKind::Nominal { levels } => levels,
                _ => return Err(incompatible("merge_levels needs a factor column")),
            };
            // New level order: first appearance scanning old levels in order.
            let mut new_levels: Vec<String> = Vec::new();
            let mut old_to_new: Vec<usize> = Vec::with_capacity(levels.len());
            for old in levels {
                let new = map.get(old).ok_or_else(|| PreprocessError::UnmappedLevel {
                    target: rule.target.clone(),
                    level: old.clone(),
                })?;
                let idx = match new_levels.iter().position(|l| l == new) {
                    Some(i) => i,
                    None => {
                        new_levels.push(new.clone());
                        new_levels.len() - 1
                    }
                };
                old_to_new.push(idx);
            }
            let new_kind = match kind {
                VariableKind::Ordinal { .. } => VariableKind::Ordinal { levels: new_levels },
                _ => VariableKind::Nominal { levels: new_levels },
            };
            let column = ds
                .var_column(var)
                .into_iter()
                .map(|c| match c {
                    Cell::Level(l) => Cell::Level(old_to_new[l]),
                    other => other,
                })
                .collect();
            Ok(ds.with_column(var, new_kind, column)?)
        }
        EncodingAction::Binarize { positive } => {
            let levels = match &kind {
                VariableKind::Ordinal { levels } | VariableKind::Nominal { levels } => levels,
                _ => return Err(incompatible("binarize needs a factor column")),
            };
            for p in positive {
                if !levels.contains(p) {
                    return Err(PreprocessError::UnmappedLevel {
                        target: rule.target.clone(),
                        level: p.clone(),
                    });
                }
            }
            let column = ds
                .var_column(var)
                .into_iter()
                .map(|c| match c {
                    Cell::Level(l) => {
                        Cell::Number(positive.contains(&levels[l]) as u8 as f64)
                    }
                    other => other,
                })
                .collect();
            Ok(ds.with_column(var, VariableKind::Binary, column)?)
        }
        EncodingAction::Bins(bins) => {
            if kind != VariableKind::Continuous {
                return Err(incompatible("bins need a continuous column"));
            }
            let column = ds
                .var_column(var)
                .into_iter()
                .map(|c| match c {
                    Cell::Number(v) => Cell::Level(bins.bin_index(v)),
                    other => other,
                })
                .collect();
            let new_kind = VariableKind::Ordinal {
                levels: bins.labels.clone(),
            };
            Ok(ds.with_column(var, new_kind, column)?)
        }
    }
}

/// A conditioning column: either an existing discrete column, or a continuous
/// column discretized on the fly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Conditioner {
    Column(String),
    Derived(DerivedDiscretization),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedDiscretization {
    pub source: String,
    #[serde(flatten)]
    pub scheme: BinsByCutpoints,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeStatistic {
    ConditionalMean,
    ConditionalMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationEntry {
    pub target: String,
    pub conditioners: Vec<Conditioner>,
    pub statistic: ImputeStatistic,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputationPlan {
    pub entries: Vec<ImputationEntry>,
}

/// Per-cell statistics for one target: conditional statistic per observed
/// conditioner combination plus the marginal fallback.
#[derive(Clone, Debug)]
pub struct ConditionalTable {
    cells: HashMap<Vec<usize>, Cell>,
    marginal: Cell,
}

impl ConditionalTable {
    /// Statistic for a conditioner combination; `None` keys (a missing
    /// conditioner) and unseen combinations get the marginal fallback.
    pub fn lookup(&self, key: Option<&[usize]>) -> Cell {
        match key {
            Some(k) => *self.cells.get(k).unwrap_or(&self.marginal),
            None => self.marginal,
        }
    }

    pub fn marginal(&self) -> Cell {
        self.marginal
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }
}

fn conditioner_key(
    ds: &Dataset,
    row: usize,
    conditioners: &[(usize, Option<&BinsByCutpoints>)],
) -> Option<Vec<usize>> {
    let mut key = Vec::with_capacity(conditioners.len());
    for (var, scheme) in conditioners {
        let cell = ds.cell(row, *var);
        let level = match scheme {
            Some(bins) => match cell {
                Cell::Number(v) => bins.bin_index(*v),
                _ => return None,
            },
            None => cell.as_level(ds.schema().var_kind(*var))?,
        };
        key.push(level);
    }
    Some(key)
}

fn resolve_conditioners<'a>(
    ds: &Dataset,
    target: &str,
    conditioners: &'a [Conditioner],
) -> Result<Vec<(usize, Option<&'a BinsByCutpoints>)>, PreprocessError> {
    let mut resolved = Vec::with_capacity(conditioners.len());
    for c in conditioners {
        let (name, scheme) = match c {
            Conditioner::Column(name) => (name.as_str(), None),
            Conditioner::Derived(d) => (d.source.as_str(), Some(&d.scheme)),
        };
        if name == target {
            return Err(PreprocessError::InvalidRule(format!(
                "`{target}` cannot condition on itself"
            )));
        }
        let var = ds.schema().var_index(name)?;
        let kind = ds.schema().var_kind(var);
        match scheme {
            None if !kind.is_discrete() => {
                return Err(PreprocessError::IncompatibleKind {
                    target: target.to_string(),
                    why: format!("conditioner `{name}` is continuous; discretize it"),
                })
            }
            Some(_) if kind.is_discrete() => {
                return Err(PreprocessError::IncompatibleKind {
                    target: target.to_string(),
                    why: format!("conditioner `{name}` is already discrete"),
                })
            }
            _ => {}
        }
        resolved.push((var, scheme));
    }
    Ok(resolved)
}

fn statistic_of(values: &[Cell], kind: &VariableKind, stat: ImputeStatistic) -> Cell {
    match stat {
        ImputeStatistic::ConditionalMean => {
            let (sum, n) = values.iter().fold((0.0, 0usize), |(s, n), c| match c {
                Cell::Number(v) => (s + v, n + 1),
                _ => (s, n),
            });
            Cell::Number(sum / n as f64)
        }
        ImputeStatistic::ConditionalMode => {
            let n_levels = kind.level_count().unwrap_or(0);
            let mut counts = vec![0usize; n_levels];
            for c in values {
                if let Some(l) = c.as_level(kind) {
                    counts[l] += 1;
                }
            }
            // Ties break toward the lowest level index.
            let best = counts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(l, _)| l)
                .unwrap_or(0);
            match kind {
                VariableKind::Binary => Cell::Number(best as f64),
                _ => Cell::Level(best),
            }
        }
    }
}

/// Build the conditional statistic table for one target on one dataset.
pub fn build_conditional_table(
    ds: &Dataset,
    target: &str,
    conditioners: &[Conditioner],
) -> Result<ConditionalTable, PreprocessError> {
    let var = ds.schema().var_index(target)?;
    let kind = ds.schema().var_kind(var).clone();
    let stat = if kind.is_discrete() {
        ImputeStatistic::ConditionalMode
    } else {
        ImputeStatistic::ConditionalMean
    };
    let resolved = resolve_conditioners(ds, target, conditioners)?;

    let mut groups: HashMap<Vec<usize>, Vec<Cell>> = HashMap::new();
    let mut observed = Vec::new();
    for row in 0..ds.n_rows() {
        let cell = *ds.cell(row, var);
        if cell.is_missing() {
            continue;
        }
        observed.push(cell);
        if let Some(key) = conditioner_key(ds, row, &resolved) {
            groups.entry(key).or_default().push(cell);
        }
    }
    if observed.is_empty() {
        return Err(PreprocessError::NoObservedValues(target.to_string()));
    }
    let cells = groups
        .into_iter()
        .map(|(k, vals)| (k, statistic_of(&vals, &kind, stat)))
        .collect();
    Ok(ConditionalTable {
        cells,
        marginal: statistic_of(&observed, &kind, stat),
    })
}

/// Conditional tables learned from one dataset, applicable to another.
///
/// Fitting walks the plan in order and fills the fitting dataset as it goes,
/// so a later entry's table is built on columns already completed by earlier
/// entries.
pub struct FittedImputer {
    entries: Vec<(ImputationEntry, ConditionalTable)>,
}

impl FittedImputer {
    pub fn fit(ds: &Dataset, plan: &ImputationPlan) -> Result<(Self, Dataset), PreprocessError> {
        validate_plan(ds, plan)?;
        let mut current = ds.clone();
        let mut entries = Vec::with_capacity(plan.entries.len());
        for entry in &plan.entries {
            let table = build_conditional_table(&current, &entry.target, &entry.conditioners)?;
            current = fill_target(&current, entry, &table)?;
            entries.push((entry.clone(), table));
        }
        Ok((Self { entries }, current))
    }

    /// Fill a dataset using the fitted tables, in plan order.
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset, PreprocessError> {
        let mut current = ds.clone();
        for (entry, table) in &self.entries {
            current = fill_target(&current, entry, table)?;
        }
        Ok(current)
    }
}

fn validate_plan(ds: &Dataset, plan: &ImputationPlan) -> Result<(), PreprocessError> {
    for entry in &plan.entries {
        let var = ds.schema().var_index(&entry.target)?;
        let discrete = ds.schema().var_kind(var).is_discrete();
        match entry.statistic {
            ImputeStatistic::ConditionalMean if discrete => {
                return Err(PreprocessError::IncompatibleKind {
                    target: entry.target.clone(),
                    why: "discrete targets use the conditional mode".into(),
                })
            }
            ImputeStatistic::ConditionalMode if !discrete => {
                return Err(PreprocessError::IncompatibleKind {
                    target: entry.target.clone(),
                    why: "continuous targets use the conditional mean".into(),
                })
            }
            _ => {}
        }
    }
    Ok(())
}

fn fill_target(
    ds: &Dataset,
    entry: &ImputationEntry,
    table: &ConditionalTable,
) -> Result<Dataset, PreprocessError> {
    let var = ds.schema().var_index(&entry.target)?;
    let kind = ds.schema().var_kind(var).clone();
    let resolved = resolve_conditioners(ds, &entry.target, &entry.conditioners)?;
    let mut column = ds.var_column(var);
    for (row, cell) in column.iter_mut().enumerate() {
        if cell.is_missing() {
            let key = conditioner_key(ds, row, &resolved);
            *cell = table.lookup(key.as_deref());
        }
    }
    Ok(ds.with_column(var, kind, column)?)
}

/// Fill every plan target so that no missing cells remain among them;
/// observed cells are untouched.
pub fn impute(ds: &Dataset, plan: &ImputationPlan) -> Result<Dataset, PreprocessError> {
    FittedImputer::fit(ds, plan).map(|(_, filled)| filled)
}

fn age_decades() -> BinsByCutpoints {
    BinsByCutpoints::new(
        vec![20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0],
        [
            "<20", "20-29", "30-39", "40-49", "50-59", "60-69", "70-79", "80-89", "90+",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    )
    .expect("static cutpoints")
}

fn bmi_groups() -> BinsByCutpoints {
    BinsByCutpoints::new(
        vec![18.5, 25.0, 30.0],
        ["Underweight", "Normal weight", "Overweight", "Obese"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    )
    .expect("static cutpoints")
}

fn surgerytime_groups() -> BinsByCutpoints {
    BinsByCutpoints::new(
        vec![90.0, 150.0],
        ["Short", "Medium", "Long"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    )
    .expect("static cutpoints")
}

fn derived(source: &str, scheme: BinsByCutpoints) -> Conditioner {
    Conditioner::Derived(DerivedDiscretization {
        source: source.into(),
        scheme,
    })
}

fn column(name: &str) -> Conditioner {
    Conditioner::Column(name.into())
}

/// The shipped `eras-mst` imputation plan for the bowel-surgery cohort layout.
///
/// Conditioning follows the published table for this cohort, with two
/// substitutions forced by the final 34-variable schema: `ifanemia` conditions
/// on `ifcancer` (the original conditioner, a diagnosis field, is not among
/// the 34 variables), and `anaesthesiatype` drops the absent
/// nerve/local-anesthesia indicator, keeping `ifepiorspinanaest` and
/// `procedure`.
pub fn eras_mst_plan() -> ImputationPlan {
    let mean = ImputeStatistic::ConditionalMean;
    let mode = ImputeStatistic::ConditionalMode;
    let age = || derived("age", age_decades());
    let bmi = || derived("BMI", bmi_groups());
    let stime = || derived("surgerytime", surgerytime_groups());
    let entry = |target: &str, conditioners: Vec<Conditioner>, statistic| ImputationEntry {
        target: target.into(),
        conditioners,
        statistic,
    };
    ImputationPlan {
        entries: vec![
            entry("BMI", vec![age(), column("gender"), column("ifdiabet")], mean),
            entry("ifsmoke", vec![age(), bmi(), column("gender")], mode),
            entry("ifalcohol", vec![age(), bmi(), column("gender")], mode),
            entry("ASA12.34", vec![age(), bmi()], mode),
            entry("WHO", vec![age(), bmi(), column("gender")], mode),
            entry(
                "prenutritioncond",
                vec![age(), bmi(), column("ASA12.34"), column("gender")],
                mode,
            ),
            entry(
                "ifpresurgery",
                vec![age(), bmi(), column("ASA12.34"), column("ifpredisease")],
                mode,
            ),
            entry(
                "ifstomacounsel",
                vec![age(), bmi(), column("ASA12.34"), column("ifpredisease")],
                mode,
            ),
            entry(
                "ifcarbohydrate",
                vec![age(), bmi(), column("ASA12.34"), column("ifpredisease")],
                mode,
            ),
            entry(
                "iflaxat",
                vec![age(), bmi(), column("ASA12.34"), column("ifpredisease")],
                mode,
            ),
            entry(
                "ifanemia",
                vec![age(), bmi(), column("ASA12.34"), column("ifcancer")],
                mode,
            ),
            entry("bloodloss", vec![stime(), column("procedure")], mode),
            entry(
                "ifothermajors",
                vec![column("bloodloss"), stime(), column("procedure")],
                mode,
            ),
            entry(
                "givencrystalloids",
                vec![column("bloodloss"), stime(), column("procedure")],
                mode,
            ),
            entry(
                "ifgivencolloids",
                vec![column("bloodloss"), stime(), column("procedure")],
                mode,
            ),
            entry(
                "anaesthesiatype",
                vec![column("ifepiorspinanaest"), column("procedure")],
                mode,
            ),
        ],
    }
}
