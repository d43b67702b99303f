//! Model-free variable filtering with plug-in information measures.
//!
//! Mutual information and conditional mutual information are computed in nats
//! from empirical cell frequencies, with the 0·log 0 = 0 convention and
//! zero-count conditioning cells skipped. Selection follows a hybrid rule:
//! one variable by MI, two more by CMI, then an elbow cut on the CMI curve of
//! the remaining variables conditioned on that triple.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Cell, DataError, Dataset, VariableKind};
use crate::eda::percentile_cutpoints;

#[derive(Debug, Error)]
pub enum InfoError {
    #[error("empty input")]
    EmptyInput,
    #[error("columns have different lengths")]
    LengthMismatch,
    #[error("need at least 2 values for an elbow, got {0}")]
    TooShort(usize),
    #[error("need at least {needed} candidate variables, got {got}")]
    NotEnoughCandidates { needed: usize, got: usize },
    #[error("variable `{0}` has missing values; impute before filtering")]
    MissingValue(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Joint frequency table over a list of discrete columns.
#[derive(Clone, Debug)]
pub struct JointTable {
    dims: Vec<usize>,
    counts: HashMap<Vec<usize>, usize>,
    n: usize,
}

impl JointTable {
    /// Count joint cells; `dims[i]` is the level cardinality of column `i`.
    pub fn from_columns(columns: &[&[usize]], dims: Vec<usize>) -> Result<Self, InfoError> {
        let n = columns.first().map_or(0, |c| c.len());
        if n == 0 {
            return Err(InfoError::EmptyInput);
        }
        if columns.iter().any(|c| c.len() != n) {
            return Err(InfoError::LengthMismatch);
        }
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for row in 0..n {
            let key: Vec<usize> = columns.iter().map(|c| c[row]).collect();
            debug_assert!(key.iter().zip(&dims).all(|(k, d)| k < d));
            *counts.entry(key).or_insert(0) += 1;
        }
        Ok(Self { counts, dims, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn count(&self, key: &[usize]) -> usize {
        self.counts.get(key).copied().unwrap_or(0)
    }
}

/// Plug-in mutual information `I(X; Y)` in nats.
pub fn mutual_information(x: &[usize], y: &[usize]) -> Result<f64, InfoError> {
    conditional_mutual_information(x, y, &[])
}

/// Plug-in conditional mutual information `I(X; Y | Z)` in nats; with an
/// empty conditioning set this is exactly `I(X; Y)`.
///
/// Cells accumulate in sorted key order, so the floating-point sum is
/// identical across calls and processes.
pub fn conditional_mutual_information(
    x: &[usize],
    y: &[usize],
    z: &[&[usize]],
) -> Result<f64, InfoError> {
    let n = x.len();
    if n == 0 {
        return Err(InfoError::EmptyInput);
    }
    if y.len() != n || z.iter().any(|c| c.len() != n) {
        return Err(InfoError::LengthMismatch);
    }

    // Group rows by conditioning cell; the empty key covers the plain-MI case.
    let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for row in 0..n {
        let key: Vec<usize> = z.iter().map(|c| c[row]).collect();
        groups.entry(key).or_default().push(row);
    }

    let mut total = 0.0;
    for rows in groups.values() {
        let m = rows.len() as f64;
        let mut nx: BTreeMap<usize, usize> = BTreeMap::new();
        let mut ny: BTreeMap<usize, usize> = BTreeMap::new();
        let mut nxy: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for &r in rows {
            *nx.entry(x[r]).or_insert(0) += 1;
            *ny.entry(y[r]).or_insert(0) += 1;
            *nxy.entry((x[r], y[r])).or_insert(0) += 1;
        }
        let mut inner = 0.0;
        for (&(xv, yv), &c) in &nxy {
            let p_xy = c as f64 / m;
            let p_x = nx[&xv] as f64 / m;
            let p_y = ny[&yv] as f64 / m;
            inner += p_xy * (p_xy / (p_x * p_y)).ln();
        }
        total += (m / n as f64) * inner;
    }
    Ok(total)
}

/// Bin continuous columns at the empirical 10/30/50/70/90 percentiles into
/// ordinal levels; discrete columns pass through unchanged.
pub fn discretize_for_info(ds: &Dataset, vars: &[String]) -> Result<Dataset, InfoError> {
    let mut out = ds.clone();
    for name in vars {
        let var = out.schema().var_index(name)?;
        if out.schema().var_kind(var).is_discrete() {
            continue;
        }
        let column = out.var_column(var);
        let observed: Vec<f64> = column.iter().filter_map(|c| c.as_f64()).collect();
        if observed.is_empty() {
            return Err(InfoError::MissingValue(name.clone()));
        }
        let cuts = percentile_cutpoints(&observed);
        let levels: Vec<String> = (0..=cuts.len()).map(|b| format!("q{}", b + 1)).collect();
        let binned: Vec<Cell> = column
            .into_iter()
            .map(|c| match c {
                Cell::Number(v) => Cell::Level(cuts.iter().filter(|&&cut| cut <= v).count()),
                other => other,
            })
            .collect();
        out = out
            .with_column(var, VariableKind::Ordinal { levels }, binned)
            .map_err(InfoError::Data)?;
    }
    Ok(out)
}

/// Index of the point with maximum perpendicular distance to the chord from
/// the first to the last point of a nonincreasing curve; exactly collinear
/// curves return 0.
pub fn elbow_index(values: &[f64]) -> Result<usize, InfoError> {
    let m = values.len();
    if m < 2 {
        return Err(InfoError::TooShort(m));
    }
    let (y_first, y_last) = (values[0], values[m - 1]);
    let x_last = (m - 1) as f64;
    let mut best_idx = 0usize;
    let mut best = 0.0f64;
    for (i, &v) in values.iter().enumerate() {
        // |cross| is proportional to the distance; the chord length cancels.
        let cross = (x_last * (y_first - v) + (i as f64) * (y_last - y_first)).abs();
        if cross > best {
            best = cross;
            best_idx = i;
        }
    }
    Ok(best_idx)
}

/// CMI ranking of the variables left after the seed triple, with the elbow
/// position (inclusive).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ElbowResult {
    pub ranked: Vec<(String, f64)>,
    pub elbow_index: usize,
}

/// Outcome of the hybrid filter: selected names in selection order plus the
/// diagnostic trace behind them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FilterSelection {
    pub selected: Vec<String>,
    /// The seed steps: (variable, criterion value) for MI, then the two CMIs.
    pub seed_trace: Vec<(String, f64)>,
    pub elbow: ElbowResult,
}

fn level_column(ds: &Dataset, var: usize) -> Result<Vec<usize>, InfoError> {
    let kind = ds.schema().var_kind(var);
    (0..ds.n_rows())
        .map(|r| {
            ds.cell(r, var)
                .as_level(kind)
                .ok_or_else(|| InfoError::MissingValue(ds.schema().var_name(var).to_string()))
        })
        .collect()
}

fn argmax_by_value(scores: &[(usize, f64)]) -> usize {
    // Entries arrive in ascending variable-index order, so keeping the first
    // maximum breaks ties toward the lowest index.
    let mut best = scores[0];
    for &(idx, v) in &scores[1..] {
        if v > best.1 {
            best = (idx, v);
        }
    }
    best.0
}

/// Hybrid greedy + elbow filter over the given candidate variables.
pub fn hybrid_filter_select(
    ds: &Dataset,
    outcome: &str,
    candidates: &[String],
) -> Result<FilterSelection, InfoError> {
    if candidates.len() < 4 {
        return Err(InfoError::NotEnoughCandidates {
            needed: 4,
            got: candidates.len(),
        });
    }
    let discretized = discretize_for_info(ds, candidates)?;
    let y: Vec<usize> = discretized
        .outcome(outcome)
        .map_err(InfoError::Data)?
        .into_iter()
        .map(|v| v as usize)
        .collect();

    let mut columns: Vec<(usize, String, Vec<usize>)> = Vec::with_capacity(candidates.len());
    for name in candidates {
        let var = discretized.schema().var_index(name)?;
        columns.push((var, name.clone(), level_column(&discretized, var)?));
    }
    columns.sort_by_key(|(var, _, _)| *var);

    let mut chosen: Vec<usize> = Vec::new(); // positions into `columns`
    let mut seed_trace = Vec::new();
    for _step in 0..3 {
        let cond: Vec<&[usize]> = chosen.iter().map(|&c| columns[c].2.as_slice()).collect();
        let mut scores = Vec::new(); // (position, value) in ascending var order
        for (pos, (_, _, col)) in columns.iter().enumerate() {
            if chosen.contains(&pos) {
                continue;
            }
            let value = conditional_mutual_information(col, &y, &cond)?;
            scores.push((pos, value));
        }
        let best_pos = argmax_by_value(&scores);
        let value = scores.iter().find(|(p, _)| *p == best_pos).unwrap().1;
        chosen.push(best_pos);
        seed_trace.push((columns[best_pos].1.clone(), value));
    }

    // CMI of everything else conditioned on the chosen triple.
    let cond: Vec<&[usize]> = chosen.iter().map(|&c| columns[c].2.as_slice()).collect();
    let mut tail: Vec<(usize, String, f64)> = Vec::new();
    for (pos, (var, name, col)) in columns.iter().enumerate() {
        if chosen.contains(&pos) {
            continue;
        }
        let value = conditional_mutual_information(col, &y, &cond)?;
        tail.push((*var, name.clone(), value));
    }
    tail.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));

    let ranked: Vec<(String, f64)> = tail.iter().map(|(_, n, v)| (n.clone(), *v)).collect();
    let elbow_pos = if ranked.len() >= 2 {
        elbow_index(&ranked.iter().map(|(_, v)| *v).collect::<Vec<_>>())?
    } else {
        0 // a single leftover variable is its own elbow
    };

    let mut selected: Vec<String> = seed_trace.iter().map(|(n, _)| n.clone()).collect();
    selected.extend(ranked.iter().take(elbow_pos + 1).map(|(n, _)| n.clone()));
    Ok(FilterSelection {
        selected,
        seed_trace,
        elbow: ElbowResult {
            ranked,
            elbow_index: elbow_pos,
        },
    })
}

/// Write the selection trace as CSV: stage, variable, value, selected, elbow.
pub fn write_filter_trace_csv(
    selection: &FilterSelection,
    mut out: impl Write,
) -> Result<(), std::io::Error> {
    writeln!(out, "stage,variable,value,selected,elbow")?;
    for (step, (name, value)) in selection.seed_trace.iter().enumerate() {
        writeln!(out, "seed{},{},{},1,0", step + 1, name, value)?;
    }
    for (i, (name, value)) in selection.elbow.ranked.iter().enumerate() {
        writeln!(
            out,
            "tail,{},{},{},{}",
            name,
            value,
            (i <= selection.elbow.elbow_index) as u8,
            (i == selection.elbow.elbow_index) as u8
        )?;
    }
    Ok(())
}
