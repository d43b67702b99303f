//! Empirical-logit exploration of marginal and joint risk patterns.
//!
//! Group counts are turned into adjusted log odds `ln((n1+0.5)/(n0+0.5))`
//! with 90% Wald bands on the logit scale; the +0.5 adjustment keeps
//! zero-count cells finite. Continuous variables are discretized at the
//! 10th/30th/50th/70th/90th percentiles, and points sit at bin midpoints.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Cell, DataError, Dataset};
use crate::preprocess::BinsByCutpoints;

/// Percentile grid shared by the logit plots and the information filter.
pub const PERCENTILE_GRID: [f64; 5] = [0.10, 0.30, 0.50, 0.70, 0.90];

/// Band label written into output metadata.
pub const BAND_LABEL: &str = "wald90";

const Z90: f64 = 1.645;

#[derive(Debug, Error)]
pub enum EdaError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("empty group")]
    EmptyGroup,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One plotted point: a bin or level with its adjusted logit and 90% band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogitPoint {
    pub label: String,
    /// Bin midpoint for continuous variables, level index for discrete ones.
    pub x: f64,
    pub logit: f64,
    pub lo90: f64,
    pub hi90: f64,
    pub n0: usize,
    pub n1: usize,
}

/// Cross-tabulated logits for a variable pair.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct InteractionGrid {
    pub points: Vec<InteractionPoint>,
    /// One record per omitted empty cell.
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionPoint {
    pub level_a: String,
    pub level_b: String,
    pub a_index: usize,
    pub b_index: usize,
    #[serde(flatten)]
    pub point: LogitPoint,
}

/// Adjusted empirical logit with its 90% Wald band: `(logit, lo90, hi90)`.
pub fn empirical_logit(n1: usize, n0: usize) -> Result<(f64, f64, f64), EdaError> {
    if n0 + n1 == 0 {
        return Err(EdaError::EmptyGroup);
    }
    let a1 = n1 as f64 + 0.5;
    let a0 = n0 as f64 + 0.5;
    let logit = (a1 / a0).ln();
    let half = Z90 * (1.0 / a1 + 1.0 / a0).sqrt();
    Ok((logit, logit - half, logit + half))
}

/// Linear-interpolation quantile of a sorted sample (R type 7).
pub(crate) fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile-grid cutpoints of a column, deduplicated.
pub(crate) fn percentile_cutpoints(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut cuts: Vec<f64> = PERCENTILE_GRID
        .iter()
        .map(|&p| quantile(&sorted, p))
        .collect();
    cuts.dedup();
    cuts
}

/// How to group one axis of an interaction plot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinSpec {
    /// Use the declared levels of a discrete variable.
    Levels,
    /// Cut a continuous variable at fixed cutpoints.
    Cutpoints(BinsByCutpoints),
    /// Cut a continuous variable at its empirical percentile grid.
    Quantiles,
}

struct Binned {
    /// Per-row bin index, `None` for missing cells.
    assignment: Vec<Option<usize>>,
    labels: Vec<String>,
    midpoints: Vec<f64>,
}

fn bin_variable(ds: &Dataset, var: usize, spec: &BinSpec) -> Result<Binned, EdaError> {
    let kind = ds.schema().var_kind(var);
    let column = ds.var_column(var);
    match (spec, kind.is_discrete()) {
        (BinSpec::Levels, true) => {
            let n_levels = kind.level_count().expect("discrete kind");
            let labels = (0..n_levels)
                .map(|l| kind.level_label(l).expect("valid level"))
                .collect();
            let assignment = column.iter().map(|c| c.as_level(kind)).collect();
            Ok(Binned {
                assignment,
                labels,
                midpoints: (0..n_levels).map(|l| l as f64).collect(),
            })
        }
        (BinSpec::Levels, false) | (BinSpec::Quantiles, false) => {
            let observed: Vec<f64> = column.iter().filter_map(|c| c.as_f64()).collect();
            if observed.is_empty() {
                return Err(EdaError::EmptyGroup);
            }
            let cuts = percentile_cutpoints(&observed);
            let scheme = cutpoint_bins(&observed, &cuts);
            Ok(assign_bins(&column, &scheme))
        }
        (BinSpec::Cutpoints(bins), false) => {
            let observed: Vec<f64> = column.iter().filter_map(|c| c.as_f64()).collect();
            if observed.is_empty() {
                return Err(EdaError::EmptyGroup);
            }
            let scheme = cutpoint_bins(&observed, &bins.cutpoints);
            Ok(assign_bins(&column, &scheme))
        }
        (BinSpec::Quantiles, true) | (BinSpec::Cutpoints(_), true) => {
            // Discrete columns keep their levels regardless of the requested bins.
            bin_variable(ds, var, &BinSpec::Levels)
        }
    }
}

struct CutScheme {
    cuts: Vec<f64>,
    labels: Vec<String>,
    midpoints: Vec<f64>,
}

fn cutpoint_bins(observed: &[f64], cuts: &[f64]) -> CutScheme {
    let lo = observed.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = observed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut edges = vec![lo];
    edges.extend_from_slice(cuts);
    edges.push(hi);
    let n_bins = cuts.len() + 1;
    let mut labels = Vec::with_capacity(n_bins);
    let mut midpoints = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let (left, right) = (edges[b], edges[b + 1]);
        labels.push(format!("[{left:.4},{right:.4})"));
        midpoints.push((left + right) / 2.0);
    }
    CutScheme {
        cuts: cuts.to_vec(),
        labels,
        midpoints,
    }
}

fn assign_bins(column: &[Cell], scheme: &CutScheme) -> Binned {
    let assignment = column
        .iter()
        .map(|c| {
            c.as_f64()
                .map(|v| scheme.cuts.iter().filter(|&&cut| cut <= v).count())
        })
        .collect();
    Binned {
        assignment,
        labels: scheme.labels.clone(),
        midpoints: scheme.midpoints.clone(),
    }
}

/// Per-bin adjusted logits of one variable against a binary outcome; one
/// point per non-empty bin, rows with a missing cell excluded.
pub fn marginal_logit_curve(
    ds: &Dataset,
    var: &str,
    outcome: &str,
) -> Result<Vec<LogitPoint>, EdaError> {
    let var_idx = ds.schema().var_index(var)?;
    let labels = ds.outcome(outcome)?;
    let binned = bin_variable(ds, var_idx, &BinSpec::Levels)?;
    let n_bins = binned.labels.len();
    let mut counts = vec![(0usize, 0usize); n_bins];
    for (row, bin) in binned.assignment.iter().enumerate() {
        if let Some(b) = bin {
            if labels[row] == 1 {
                counts[*b].1 += 1;
            } else {
                counts[*b].0 += 1;
            }
        }
    }
    let mut points = Vec::new();
    for (b, &(n0, n1)) in counts.iter().enumerate() {
        if n0 + n1 == 0 {
            continue;
        }
        let (logit, lo90, hi90) = empirical_logit(n1, n0)?;
        points.push(LogitPoint {
            label: binned.labels[b].clone(),
            x: binned.midpoints[b],
            logit,
            lo90,
            hi90,
            n0,
            n1,
        });
    }
    Ok(points)
}

/// Cross-tabulated logits per (binA, binB) cell; empty cells are omitted and
/// recorded as warnings.
pub fn interaction_grid(
    ds: &Dataset,
    var_a: &str,
    var_b: &str,
    outcome: &str,
    bins_a: &BinSpec,
    bins_b: &BinSpec,
) -> Result<InteractionGrid, EdaError> {
    let a_idx = ds.schema().var_index(var_a)?;
    let b_idx = ds.schema().var_index(var_b)?;
    let labels = ds.outcome(outcome)?;
    let a = bin_variable(ds, a_idx, bins_a)?;
    let b = bin_variable(ds, b_idx, bins_b)?;

    let mut counts = vec![vec![(0usize, 0usize); b.labels.len()]; a.labels.len()];
    for row in 0..ds.n_rows() {
        if let (Some(ba), Some(bb)) = (a.assignment[row], b.assignment[row]) {
            if labels[row] == 1 {
                counts[ba][bb].1 += 1;
            } else {
                counts[ba][bb].0 += 1;
            }
        }
    }

    let mut grid = InteractionGrid::default();
    for (ia, row) in counts.iter().enumerate() {
        for (ib, &(n0, n1)) in row.iter().enumerate() {
            if n0 + n1 == 0 {
                grid.warnings.push(format!(
                    "empty cell omitted: {var_a}={} x {var_b}={}",
                    a.labels[ia], b.labels[ib]
                ));
                continue;
            }
            let (logit, lo90, hi90) = empirical_logit(n1, n0)?;
            grid.points.push(InteractionPoint {
                level_a: a.labels[ia].clone(),
                level_b: b.labels[ib].clone(),
                a_index: ia,
                b_index: ib,
                point: LogitPoint {
                    label: format!("{}|{}", a.labels[ia], b.labels[ib]),
                    x: a.midpoints[ia],
                    logit,
                    lo90,
                    hi90,
                    n0,
                    n1,
                },
            });
        }
    }
    Ok(grid)
}

/// Write a marginal curve as CSV: bin, midpoint, logit, lo90, hi90, n0, n1, band.
pub fn write_logit_curve_csv(points: &[LogitPoint], mut out: impl Write) -> Result<(), EdaError> {
    writeln!(out, "bin,midpoint,logit,lo90,hi90,n0,n1,band")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            escape(&p.label), p.x, p.logit, p.lo90, p.hi90, p.n0, p.n1, BAND_LABEL
        )?;
    }
    Ok(())
}

/// Write an interaction grid as CSV: one row per populated cell.
pub fn write_interaction_csv(grid: &InteractionGrid, mut out: impl Write) -> Result<(), EdaError> {
    writeln!(out, "bin_a,bin_b,logit,lo90,hi90,n0,n1,band")?;
    for p in &grid.points {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            escape(&p.level_a),
            escape(&p.level_b),
            p.point.logit,
            p.point.lo90,
            p.point.hi90,
            p.point.n0,
            p.point.n1,
            BAND_LABEL
        )?;
    }
    Ok(())
}

fn escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}
