//! Typed tabular data model for mixed clinical variables.
//!
//! A [`Dataset`] couples a [`Schema`] (ordered, typed predictor columns plus
//! binary outcome columns) with a row-major cell grid. Cells are numbers,
//! factor levels, or missing; outcome cells are never missing. Datasets are
//! immutable after construction and safe to share across threads.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Missing-value sentinel accepted on input and written on output.
pub const MISSING_SENTINEL: &str = "NA";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot parse cell at row {row}, column `{column}`: `{raw}`")]
    UnparseableCell {
        row: usize,
        column: String,
        raw: String,
    },
    #[error("column `{0}` does not match the schema")]
    UnknownColumn(String),
    #[error("missing outcome value at row {0}")]
    MissingOutcome(usize),
    #[error("unknown outcome `{0}`")]
    UnknownOutcome(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("split produced an empty partition")]
    EmptyPartition,
    #[error("missing value in split column `{column}` at row {row}")]
    MissingInSplitColumn { column: String, row: usize },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("row {row} has {got} cells, expected {expected}")]
    RowLength {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Statistical type of one column.
///
/// `Binary` admits exactly the values 0 and 1. `Ordinal` levels are ordered;
/// `Nominal` labels are not. Level lists must be non-empty and duplicate-free.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariableKind {
    Continuous,
    Binary,
    Ordinal { levels: Vec<String> },
    Nominal { levels: Vec<String> },
}

impl VariableKind {
    pub fn is_discrete(&self) -> bool {
        !matches!(self, VariableKind::Continuous)
    }

    /// Number of distinct levels a discrete column can take.
    pub fn level_count(&self) -> Option<usize> {
        match self {
            VariableKind::Continuous => None,
            VariableKind::Binary => Some(2),
            VariableKind::Ordinal { levels } | VariableKind::Nominal { levels } => {
                Some(levels.len())
            }
        }
    }

    /// Display label for a level index.
    pub fn level_label(&self, level: usize) -> Option<String> {
        match self {
            VariableKind::Continuous => None,
            VariableKind::Binary => (level < 2).then(|| level.to_string()),
            VariableKind::Ordinal { levels } | VariableKind::Nominal { levels } => {
                levels.get(level).cloned()
            }
        }
    }

    fn validate(&self, name: &str) -> Result<(), DataError> {
        if let VariableKind::Ordinal { levels } | VariableKind::Nominal { levels } = self {
            if levels.is_empty() {
                return Err(DataError::SchemaViolation(format!(
                    "variable `{name}` has an empty level list"
                )));
            }
            let mut seen = HashSet::new();
            for l in levels {
                if !seen.insert(l.as_str()) {
                    return Err(DataError::SchemaViolation(format!(
                        "variable `{name}` has duplicate level `{l}`"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One named, typed column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableDef {
    pub name: String,
    #[serde(flatten)]
    pub kind: VariableKind,
}

impl VariableDef {
    pub fn new(name: impl Into<String>, kind: VariableKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// Ordered predictor columns plus binary outcome columns.
///
/// The position of a variable in `variables` is its stable index used by
/// every downstream module.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Schema {
    variables: Vec<VariableDef>,
    outcomes: Vec<String>,
}

#[derive(Deserialize)]
struct SchemaRepr {
    variables: Vec<VariableDef>,
    outcomes: Vec<String>,
}

impl<'de> Deserialize<'de> for Schema {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = SchemaRepr::deserialize(d)?;
        Schema::new(repr.variables, repr.outcomes).map_err(serde::de::Error::custom)
    }
}

impl Schema {
    pub fn new(variables: Vec<VariableDef>, outcomes: Vec<String>) -> Result<Self, DataError> {
        let mut names = HashSet::new();
        for v in &variables {
            v.kind.validate(&v.name)?;
            if !names.insert(v.name.as_str()) {
                return Err(DataError::SchemaViolation(format!(
                    "duplicate variable name `{}`",
                    v.name
                )));
            }
        }
        for o in &outcomes {
            if names.contains(o.as_str()) {
                return Err(DataError::SchemaViolation(format!(
                    "outcome `{o}` collides with a variable name"
                )));
            }
            if !outcomes.iter().filter(|x| *x == o).count().eq(&1) {
                return Err(DataError::SchemaViolation(format!(
                    "duplicate outcome name `{o}`"
                )));
            }
        }
        Ok(Self {
            variables,
            outcomes,
        })
    }

    pub fn variables(&self) -> &[VariableDef] {
        &self.variables
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn n_cols(&self) -> usize {
        self.variables.len() + self.outcomes.len()
    }

    pub fn var_index(&self, name: &str) -> Result<usize, DataError> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| DataError::UnknownVariable(name.to_string()))
    }

    pub fn outcome_index(&self, name: &str) -> Result<usize, DataError> {
        self.outcomes
            .iter()
            .position(|o| o == name)
            .ok_or_else(|| DataError::UnknownOutcome(name.to_string()))
    }

    pub fn var_kind(&self, index: usize) -> &VariableKind {
        &self.variables[index].kind
    }

    pub fn var_name(&self, index: usize) -> &str {
        &self.variables[index].name
    }

    /// Header order used by `write_csv`: variables first, then outcomes.
    fn column_names(&self) -> Vec<&str> {
        self.variables
            .iter()
            .map(|v| v.name.as_str())
            .chain(self.outcomes.iter().map(|o| o.as_str()))
            .collect()
    }
}

/// One grid entry: a real number, an index into the column's level list, or
/// a missing marker. Binary columns store `Number(0.0)` / `Number(1.0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Number(f64),
    Level(usize),
    Missing,
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    /// Numeric view: the number itself, or the level index as a real.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(*v),
            Cell::Level(l) => Some(*l as f64),
            Cell::Missing => None,
        }
    }

    /// Discrete view: Binary cells map 0/1 to level 0/1, factor cells map to
    /// their level index. Continuous cells have no level.
    pub fn as_level(&self, kind: &VariableKind) -> Option<usize> {
        match (self, kind) {
            (Cell::Number(v), VariableKind::Binary) => Some(if *v == 0.0 { 0 } else { 1 }),
            (Cell::Level(l), _) => Some(*l),
            _ => None,
        }
    }

    fn conforms(&self, kind: &VariableKind) -> bool {
        match (self, kind) {
            (Cell::Missing, _) => true,
            (Cell::Number(_), VariableKind::Continuous) => true,
            (Cell::Number(v), VariableKind::Binary) => *v == 0.0 || *v == 1.0,
            (Cell::Level(l), VariableKind::Ordinal { levels })
            | (Cell::Level(l), VariableKind::Nominal { levels }) => *l < levels.len(),
            _ => false,
        }
    }
}

/// Immutable typed table. Row-major; columns ordered as in the schema with
/// outcome columns after all predictors.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: Schema,
    cells: Vec<Cell>,
    n_rows: usize,
}

impl Dataset {
    /// Build from row-major cells (predictor columns then outcome columns per
    /// row), validating every cell against its column kind.
    pub fn new(schema: Schema, cells: Vec<Cell>, n_rows: usize) -> Result<Self, DataError> {
        let n_cols = schema.n_cols();
        if cells.len() != n_rows * n_cols {
            return Err(DataError::RowLength {
                row: n_rows,
                got: cells.len(),
                expected: n_rows * n_cols,
            });
        }
        for row in 0..n_rows {
            for (j, var) in schema.variables.iter().enumerate() {
                let cell = &cells[row * n_cols + j];
                if !cell.conforms(&var.kind) {
                    return Err(DataError::UnparseableCell {
                        row,
                        column: var.name.clone(),
                        raw: format!("{cell:?}"),
                    });
                }
            }
            for (k, name) in schema.outcomes.iter().enumerate() {
                let cell = &cells[row * n_cols + schema.n_vars() + k];
                match cell {
                    Cell::Missing => return Err(DataError::MissingOutcome(row)),
                    c if c.conforms(&VariableKind::Binary) => {}
                    _ => {
                        return Err(DataError::UnparseableCell {
                            row,
                            column: name.clone(),
                            raw: format!("{cell:?}"),
                        })
                    }
                }
            }
        }
        Ok(Self {
            schema,
            cells,
            n_rows,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn cell(&self, row: usize, var: usize) -> &Cell {
        &self.cells[row * self.schema.n_cols() + var]
    }

    pub fn outcome_cell(&self, row: usize, outcome: usize) -> &Cell {
        &self.cells[row * self.schema.n_cols() + self.schema.n_vars() + outcome]
    }

    /// Binary outcome column as 0/1 labels.
    pub fn outcome(&self, name: &str) -> Result<Vec<u8>, DataError> {
        let k = self.schema.outcome_index(name)?;
        Ok((0..self.n_rows)
            .map(|r| match self.outcome_cell(r, k) {
                Cell::Number(v) if *v != 0.0 => 1u8,
                _ => 0u8,
            })
            .collect())
    }

    /// Predictor column as cells.
    pub fn var_column(&self, var: usize) -> Vec<Cell> {
        (0..self.n_rows).map(|r| *self.cell(r, var)).collect()
    }

    /// New dataset holding the given rows in the given order.
    pub fn subset_rows(&self, rows: &[usize]) -> Dataset {
        let n_cols = self.schema.n_cols();
        let mut cells = Vec::with_capacity(rows.len() * n_cols);
        for &r in rows {
            cells.extend_from_slice(&self.cells[r * n_cols..(r + 1) * n_cols]);
        }
        Dataset {
            schema: self.schema.clone(),
            cells,
            n_rows: rows.len(),
        }
    }

    /// Copy with one predictor column replaced; used by preprocessing.
    pub(crate) fn with_column(
        &self,
        var: usize,
        kind: VariableKind,
        column: Vec<Cell>,
    ) -> Result<Dataset, DataError> {
        assert_eq!(column.len(), self.n_rows);
        let mut schema = self.schema.clone();
        schema.variables[var].kind = kind;
        let n_cols = schema.n_cols();
        let mut cells = self.cells.clone();
        for (r, cell) in column.into_iter().enumerate() {
            cells[r * n_cols + var] = cell;
        }
        Dataset::new(schema, cells, self.n_rows)
    }
}

/// How to partition rows into a training and a test set.
///
/// Threshold mode sends rows with `column < cutoff` to the training side; the
/// split column is ordinary numeric metadata (e.g. surgery year), not one of
/// the modeled predictors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    ByColumnThreshold { column: String, cutoff: f64 },
    ByRowIndexList { train_rows: Vec<usize> },
}

/// Parse a CSV file against a schema. Header names must be a permutation of
/// the schema's columns; empty cells and the literal `NA` parse as missing.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let header = reader.headers()?.clone();

    let wanted = schema.column_names();
    // Map each schema column to its position in the file.
    let mut file_pos = Vec::with_capacity(wanted.len());
    for name in &wanted {
        let pos = header
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| DataError::UnknownColumn((*name).to_string()))?;
        file_pos.push(pos);
    }
    for h in header.iter() {
        if !wanted.contains(&h) {
            return Err(DataError::UnknownColumn(h.to_string()));
        }
    }

    let n_vars = schema.n_vars();
    let mut cells = Vec::new();
    let mut n_rows = 0usize;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != wanted.len() {
            return Err(DataError::RowLength {
                row,
                got: record.len(),
                expected: wanted.len(),
            });
        }
        for (j, name) in wanted.iter().enumerate() {
            let raw = record.get(file_pos[j]).unwrap_or("");
            let cell = if j < n_vars {
                parse_cell(raw, &schema.variables[j].kind, row, name)?
            } else {
                match parse_cell(raw, &VariableKind::Binary, row, name)? {
                    Cell::Missing => return Err(DataError::MissingOutcome(row)),
                    c => c,
                }
            };
            cells.push(cell);
        }
        n_rows += 1;
    }
    Dataset::new(schema.clone(), cells, n_rows)
}

fn parse_cell(raw: &str, kind: &VariableKind, row: usize, column: &str) -> Result<Cell, DataError> {
    let raw = raw.trim();
    if raw.is_empty() || raw == MISSING_SENTINEL {
        return Ok(Cell::Missing);
    }
    let unparseable = || DataError::UnparseableCell {
        row,
        column: column.to_string(),
        raw: raw.to_string(),
    };
    match kind {
        VariableKind::Continuous => raw
            .parse::<f64>()
            .map(Cell::Number)
            .map_err(|_| unparseable()),
        VariableKind::Binary => match raw.parse::<f64>() {
            Ok(v) if v == 0.0 || v == 1.0 => Ok(Cell::Number(v)),
            _ => Err(unparseable()),
        },
        VariableKind::Ordinal { levels } | VariableKind::Nominal { levels } => levels
            .iter()
            .position(|l| l == raw)
            .map(Cell::Level)
            .ok_or_else(unparseable),
    }
}

/// Write a dataset as CSV in schema column order. Non-missing cells round-trip
/// bit-exact through `load_csv`; missing cells are written as the sentinel.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(ds.schema.column_names())?;
    let n_cols = ds.schema.n_cols();
    let n_vars = ds.schema.n_vars();
    for row in 0..ds.n_rows {
        let mut record = Vec::with_capacity(n_cols);
        for j in 0..n_cols {
            let cell = &ds.cells[row * n_cols + j];
            let kind = if j < n_vars {
                &ds.schema.variables[j].kind
            } else {
                &VariableKind::Binary
            };
            record.push(render_cell(cell, kind));
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

fn render_cell(cell: &Cell, kind: &VariableKind) -> String {
    match cell {
        Cell::Missing => MISSING_SENTINEL.to_string(),
        Cell::Number(v) => {
            if matches!(kind, VariableKind::Binary) {
                format!("{}", *v as u8)
            } else {
                format!("{v}")
            }
        }
        Cell::Level(l) => kind.level_label(*l).unwrap_or_else(|| l.to_string()),
    }
}

/// Partition rows into train and test sets with identical schemas; row order
/// is preserved within each side, and the two sides cover the dataset.
pub fn temporal_split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset), DataError> {
    let (train_rows, test_rows): (Vec<usize>, Vec<usize>) = match spec {
        SplitSpec::ByColumnThreshold { column, cutoff } => {
            let var = ds.schema.var_index(column)?;
            let mut train = Vec::new();
            let mut test = Vec::new();
            for row in 0..ds.n_rows {
                let value =
                    ds.cell(row, var)
                        .as_f64()
                        .ok_or_else(|| DataError::MissingInSplitColumn {
                            column: column.clone(),
                            row,
                        })?;
                if value < *cutoff {
                    train.push(row);
                } else {
                    test.push(row);
                }
            }
            (train, test)
        }
        SplitSpec::ByRowIndexList { train_rows } => {
            let train_set: HashSet<usize> = train_rows.iter().copied().collect();
            if let Some(&bad) = train_rows.iter().find(|&&r| r >= ds.n_rows) {
                return Err(DataError::RowLength {
                    row: bad,
                    got: bad,
                    expected: ds.n_rows,
                });
            }
            let test = (0..ds.n_rows).filter(|r| !train_set.contains(r)).collect();
            (train_rows.clone(), test)
        }
    };
    if train_rows.is_empty() || test_rows.is_empty() {
        return Err(DataError::EmptyPartition);
    }
    Ok((ds.subset_rows(&train_rows), ds.subset_rows(&test_rows)))
}

/// Count class-0 and class-1 rows of a binary outcome.
pub fn class_counts(ds: &Dataset, outcome: &str) -> Result<(usize, usize), DataError> {
    let labels = ds.outcome(outcome)?;
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    Ok((labels.len() - n1, n1))
}
