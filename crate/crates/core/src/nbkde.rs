//! Naive Bayes with kernel-density and smoothed-frequency marginals.
//!
//! Class-conditional densities factor across variables: continuous marginals
//! are Gaussian-kernel density estimates with a per-class Silverman bandwidth
//! `0.9 * min(sd, IQR/1.34) * m^(-1/5)`, discrete marginals are add-0.5
//! smoothed level frequencies. Posteriors are evaluated in log space, so
//! products of many small densities stay finite.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Cell, DataError, Dataset, VariableKind};
use crate::metrics::{brier_per_class, MetricsError, ProbPrediction};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Error)]
pub enum NbError {
    #[error("both outcome classes must be present")]
    OneClassOnly,
    #[error("variable `{0}` has missing values")]
    MissingValuePresent(String),
    #[error("need at least 2 candidate variables, got {0}")]
    TooFewCandidates(usize),
    #[error("class {class} has {got} rows; the 75/25 split needs at least 2")]
    ClassTooSmall { class: u8, got: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// One class-conditional marginal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalDensity {
    /// Gaussian-kernel mixture over the class sample.
    Kde { points: Vec<f64>, bandwidth: f64 },
    /// Smoothed pmf over the declared levels; entries are strictly positive
    /// and sum to one.
    Pmf { probs: Vec<f64> },
}

impl MarginalDensity {
    /// Log density (continuous) or log mass (discrete) at one cell.
    pub fn log_density(&self, cell: &Cell, kind: &VariableKind) -> Option<f64> {
        match self {
            MarginalDensity::Kde { points, bandwidth } => {
                let x = match cell {
                    Cell::Number(v) => *v,
                    _ => return None,
                };
                let m = points.len() as f64;
                let h = *bandwidth;
                // log( (1/(m h)) sum phi((x - xi)/h) ) via log-sum-exp.
                let max_exponent = points
                    .iter()
                    .map(|&xi| -((x - xi) / h).powi(2) / 2.0)
                    .fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = points
                    .iter()
                    .map(|&xi| (-((x - xi) / h).powi(2) / 2.0 - max_exponent).exp())
                    .sum();
                Some(max_exponent + sum.ln() - (m * h).ln() - LN_SQRT_2PI)
            }
            MarginalDensity::Pmf { probs } => {
                let level = cell.as_level(kind)?;
                probs.get(level).map(|p| p.ln())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    Empirical,
    Equal,
}

/// Fitted Naive Bayes classifier.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NbModel {
    pub priors: (f64, f64),
    pub vars: Vec<String>,
    /// Marginals for class 0 and class 1, aligned with `vars`.
    pub marginals: [Vec<MarginalDensity>; 2],
}

fn silverman_bandwidth(values: &[f64]) -> f64 {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let iqr = crate::eda::quantile(&sorted, 0.75) - crate::eda::quantile(&sorted, 0.25);
    let spread = sd.min(iqr / 1.34);
    let h = 0.9 * spread * m.powf(-0.2);
    if h > 0.0 && h.is_finite() {
        h
    } else {
        // Degenerate spread: fall back to a floor on the sample range.
        let range = sorted.last().unwrap() - sorted.first().unwrap();
        1e-6 * if range > 0.0 { range } else { 1.0 }
    }
}

fn smoothed_pmf(levels: &[usize], n_levels: usize) -> Vec<f64> {
    let mut counts = vec![0.5f64; n_levels];
    for &l in levels {
        counts[l] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

/// Fit class priors and per-class marginals for the given variables.
pub fn fit_nb(
    ds: &Dataset,
    vars: &[String],
    outcome: &str,
    prior_mode: PriorMode,
) -> Result<NbModel, NbError> {
    let labels = ds.outcome(outcome)?;
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = labels.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(NbError::OneClassOnly);
    }
    let class_rows: [Vec<usize>; 2] = [
        (0..ds.n_rows()).filter(|&r| labels[r] == 0).collect(),
        (0..ds.n_rows()).filter(|&r| labels[r] == 1).collect(),
    ];

    let mut marginals: [Vec<MarginalDensity>; 2] = [Vec::new(), Vec::new()];
    for name in vars {
        let var = ds.schema().var_index(name)?;
        let kind = ds.schema().var_kind(var);
        for class in 0..2 {
            let rows = &class_rows[class];
            let marginal = if kind.is_discrete() {
                let n_levels = kind.level_count().expect("discrete kind");
                let mut levels = Vec::with_capacity(rows.len());
                for &r in rows {
                    levels.push(
                        ds.cell(r, var)
                            .as_level(kind)
                            .ok_or_else(|| NbError::MissingValuePresent(name.clone()))?,
                    );
                }
                MarginalDensity::Pmf {
                    probs: smoothed_pmf(&levels, n_levels),
                }
            } else {
                let mut points = Vec::with_capacity(rows.len());
                for &r in rows {
                    match ds.cell(r, var) {
                        Cell::Number(v) => points.push(*v),
                        _ => return Err(NbError::MissingValuePresent(name.clone())),
                    }
                }
                let bandwidth = silverman_bandwidth(&points);
                MarginalDensity::Kde { points, bandwidth }
            };
            marginals[class].push(marginal);
        }
    }

    let priors = match prior_mode {
        PriorMode::Empirical => {
            let n = (n0 + n1) as f64;
            (n0 as f64 / n, n1 as f64 / n)
        }
        PriorMode::Equal => (0.5, 0.5),
    };
    Ok(NbModel {
        priors,
        vars: vars.to_vec(),
        marginals,
    })
}

/// Posterior probability of class 1 for one row, computed in log space and
/// normalized.
pub fn predict_nb(model: &NbModel, ds: &Dataset, row: usize) -> Result<ProbPrediction, NbError> {
    let mut log_post = [model.priors.0.ln(), model.priors.1.ln()];
    for (p, name) in model.vars.iter().enumerate() {
        let var = ds.schema().var_index(name)?;
        let kind = ds.schema().var_kind(var);
        let cell = ds.cell(row, var);
        for class in 0..2 {
            log_post[class] += model.marginals[class][p]
                .log_density(cell, kind)
                .ok_or_else(|| NbError::MissingValuePresent(name.clone()))?;
        }
    }
    // p1 = exp(lp1) / (exp(lp0) + exp(lp1)) = sigmoid(lp1 - lp0).
    let p1 = 1.0 / (1.0 + (log_post[0] - log_post[1]).exp());
    Ok(ProbPrediction::new(
        p1.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON),
    ))
}

/// Posterior for every row of a dataset.
pub fn predict_nb_dataset(model: &NbModel, ds: &Dataset) -> Result<Vec<ProbPrediction>, NbError> {
    (0..ds.n_rows()).map(|r| predict_nb(model, ds, r)).collect()
}

/// Trace of the greedy wrapper: the learning-set criterion per selected
/// variable (the seed pair shares its value) and the validation-set criterion
/// per accepted step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NbWrapperTrace {
    pub learning: Vec<f64>,
    pub validation: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NbSelection {
    pub selected: Vec<String>,
    pub trace: NbWrapperTrace,
}

/// Average of the two class-specific Brier scores; lower is better.
fn class_average_brier(labels: &[u8], preds: &[ProbPrediction]) -> Result<f64, NbError> {
    let (bs0, bs1) = brier_per_class(labels, preds)?;
    Ok((bs0 + bs1) / 2.0)
}

fn criterion(
    learn: &Dataset,
    eval: &Dataset,
    eval_labels: &[u8],
    vars: &[String],
    outcome: &str,
) -> Result<f64, NbError> {
    let model = fit_nb(learn, vars, outcome, PriorMode::Empirical)?;
    let preds = predict_nb_dataset(&model, eval)?;
    class_average_brier(eval_labels, &preds)
}

/// Stratified 75/25 row split; learning rows first, both sides keep both
/// classes.
fn stratified_split(
    labels: &[u8],
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), NbError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut learning = Vec::new();
    let mut validation = Vec::new();
    for class in [0u8, 1] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&r| labels[r] == class).collect();
        if rows.len() < 2 {
            return Err(NbError::ClassTooSmall {
                class,
                got: rows.len(),
            });
        }
        rows.shuffle(&mut rng);
        let take = ((rows.len() as f64 * 0.75).round() as usize).clamp(1, rows.len() - 1);
        learning.extend_from_slice(&rows[..take]);
        validation.extend_from_slice(&rows[take..]);
    }
    learning.sort_unstable();
    validation.sort_unstable();
    Ok((learning, validation))
}

/// Greedy Brier-driven wrapper: exhaustive best pair on the learning set,
/// then forward additions chosen on the learning set and stopped by the
/// validation set.
pub fn nb_wrapper_select(
    ds: &Dataset,
    outcome: &str,
    candidates: &[String],
    seed: u64,
) -> Result<NbSelection, NbError> {
    let d = candidates.len();
    if d < 2 {
        return Err(NbError::TooFewCandidates(d));
    }
    let labels = ds.outcome(outcome)?;
    let (learn_rows, valid_rows) = stratified_split(&labels, seed)?;
    let learn = ds.subset_rows(&learn_rows);
    let valid = ds.subset_rows(&valid_rows);
    let learn_labels: Vec<u8> = learn_rows.iter().map(|&r| labels[r]).collect();
    let valid_labels: Vec<u8> = valid_rows.iter().map(|&r| labels[r]).collect();

    // Exhaustive seed-pair search on the learning set.
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
        .collect();
    let scored: Vec<Result<((usize, usize), f64), NbError>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let vars = vec![candidates[i].clone(), candidates[j].clone()];
            let l = criterion(&learn, &learn, &learn_labels, &vars, outcome)?;
            Ok(((i, j), l))
        })
        .collect();
    let mut best_pair = None;
    for result in scored {
        let ((i, j), l) = result?;
        best_pair = match best_pair {
            // Ties keep the lexicographically smallest index pair.
            Some((_, b)) if l >= b => best_pair,
            _ => Some(((i, j), l)),
        };
    }
    let ((i, j), pair_learn_l) = best_pair.expect("at least one pair");

    let mut selected = vec![candidates[i].clone(), candidates[j].clone()];
    let mut in_set = vec![false; d];
    in_set[i] = true;
    in_set[j] = true;
    let mut learning_trace = vec![pair_learn_l, pair_learn_l];
    // The validation criterion always scores a learning-set fit.
    let mut current_valid_l = criterion(&learn, &valid, &valid_labels, &selected, outcome)?;
    let mut validation_trace = vec![current_valid_l];

    loop {
        let remaining: Vec<usize> = (0..d).filter(|&k| !in_set[k]).collect();
        if remaining.is_empty() {
            break;
        }
        let scored: Vec<Result<(usize, f64), NbError>> = remaining
            .par_iter()
            .map(|&k| {
                let mut vars = selected.clone();
                vars.push(candidates[k].clone());
                let l = criterion(&learn, &learn, &learn_labels, &vars, outcome)?;
                Ok((k, l))
            })
            .collect();
        let mut best = None;
        for result in scored {
            let (k, l) = result?;
            best = match best {
                Some((_, b)) if l >= b => best,
                _ => Some((k, l)),
            };
        }
        let (k, learn_l) = best.expect("nonempty remaining");

        let mut trial = selected.clone();
        trial.push(candidates[k].clone());
        let valid_l = criterion(&learn, &valid, &valid_labels, &trial, outcome)?;
        if valid_l >= current_valid_l {
            break; // validation stopped improving; keep the set chosen so far
        }
        selected = trial;
        in_set[k] = true;
        learning_trace.push(learn_l);
        validation_trace.push(valid_l);
        current_valid_l = valid_l;
    }

    Ok(NbSelection {
        selected,
        trace: NbWrapperTrace {
            learning: learning_trace,
            validation: validation_trace,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Schema, VariableDef};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn dataset_from_columns(vars: Vec<(VariableDef, Vec<Cell>)>, labels: &[u8]) -> Dataset {
        let n = labels.len();
        let defs: Vec<VariableDef> = vars.iter().map(|(d, _)| d.clone()).collect();
        let schema = Schema::new(defs, vec!["y".into()]).unwrap();
        let mut cells = Vec::new();
        for row in 0..n {
            for (_, col) in &vars {
                cells.push(col[row]);
            }
            cells.push(Cell::Number(labels[row] as f64));
        }
        Dataset::new(schema, cells, n).unwrap()
    }

    #[test]
    fn empirical_priors_match_class_shares() {
        let mut labels = vec![0u8; 518];
        labels.extend(vec![1u8; 62]);
        let col: Vec<Cell> = (0..580).map(|i| Cell::Number((i % 7) as f64)).collect();
        let ds = dataset_from_columns(
            vec![(VariableDef::new("x", VariableKind::Continuous), col)],
            &labels,
        );
        let model = fit_nb(&ds, &["x".into()], "y", PriorMode::Empirical).unwrap();
        assert_abs_diff_eq!(model.priors.0, 518.0 / 580.0, epsilon = 1e-12);
        assert_abs_diff_eq!(model.priors.1, 62.0 / 580.0, epsilon = 1e-12);

        let equal = fit_nb(&ds, &["x".into()], "y", PriorMode::Equal).unwrap();
        assert_eq!(equal.priors, (0.5, 0.5));
    }

    #[test]
    fn kernel_density_at_single_training_point() {
        let h = 0.5;
        let marginal = MarginalDensity::Kde {
            points: vec![0.0],
            bandwidth: h,
        };
        let log_d = marginal
            .log_density(&Cell::Number(0.0), &VariableKind::Continuous)
            .unwrap();
        let expected = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
        assert_abs_diff_eq!(log_d.exp(), expected, epsilon = 1e-12);
    }

    #[test]
    fn class_constant_variable_gets_floor_bandwidth() {
        let col = vec![
            Cell::Number(2.0),
            Cell::Number(2.0),
            Cell::Number(1.0),
            Cell::Number(3.0),
        ];
        let ds = dataset_from_columns(
            vec![(VariableDef::new("x", VariableKind::Continuous), col)],
            &[1, 1, 0, 0],
        );
        let model = fit_nb(&ds, &["x".into()], "y", PriorMode::Empirical).unwrap();
        match &model.marginals[1][0] {
            MarginalDensity::Kde { bandwidth, .. } => {
                assert!(*bandwidth > 0.0 && *bandwidth <= 1e-6);
            }
            _ => panic!("expected kde marginal"),
        }
    }

    #[test]
    fn identical_class_densities_return_the_prior() {
        // Same sample in both classes, so likelihoods cancel exactly.
        let values = [1.0, 2.0, 3.0];
        let mut col = Vec::new();
        let mut labels = Vec::new();
        for &v in &values {
            col.push(Cell::Number(v));
            labels.push(0u8);
        }
        for &v in &values {
            col.push(Cell::Number(v));
            labels.push(1u8);
        }
        let ds = dataset_from_columns(
            vec![(VariableDef::new("x", VariableKind::Continuous), col)],
            &labels,
        );
        let model = fit_nb(&ds, &["x".into()], "y", PriorMode::Empirical).unwrap();
        let p = predict_nb(&model, &ds, 0).unwrap();
        assert_abs_diff_eq!(p.p1, 0.5, epsilon = 1e-12);

        let skewed = NbModel {
            priors: (0.8, 0.2),
            ..model
        };
        let p = predict_nb(&skewed, &ds, 0).unwrap();
        assert_abs_diff_eq!(p.p1, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn posterior_arithmetic_from_known_likelihoods() {
        // Priors (0.5, 0.5), likelihoods (0.1, 0.2) at level 0 -> p1 = 2/3.
        let model = NbModel {
            priors: (0.5, 0.5),
            vars: vec!["g".into()],
            marginals: [
                vec![MarginalDensity::Pmf {
                    probs: vec![0.1, 0.9],
                }],
                vec![MarginalDensity::Pmf {
                    probs: vec![0.2, 0.8],
                }],
            ],
        };
        let ds = dataset_from_columns(
            vec![(
                VariableDef::new("g", VariableKind::Binary),
                vec![Cell::Number(0.0)],
            )],
            &[0],
        );
        let p = predict_nb(&model, &ds, 0).unwrap();
        assert_abs_diff_eq!(p.p1, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn toy_posterior_matches_direct_bayes_evaluation() {
        // 8 rows, 2 binary variables; oracle evaluates priors and smoothed
        // frequencies directly.
        let a = [0u8, 0, 1, 1, 0, 1, 1, 1];
        let b = [1u8, 0, 0, 1, 1, 1, 0, 1];
        let y = [0u8, 0, 0, 0, 0, 1, 1, 1];
        let ds = dataset_from_columns(
            vec![
                (
                    VariableDef::new("a", VariableKind::Binary),
                    a.iter().map(|&v| Cell::Number(v as f64)).collect(),
                ),
                (
                    VariableDef::new("b", VariableKind::Binary),
                    b.iter().map(|&v| Cell::Number(v as f64)).collect(),
                ),
            ],
            &y,
        );
        let model = fit_nb(&ds, &["a".into(), "b".into()], "y", PriorMode::Empirical).unwrap();

        // Independent oracle.
        let count = |class: u8, var: &[u8], level: u8| -> f64 {
            y.iter()
                .zip(var)
                .filter(|(&yi, &v)| yi == class && v == level)
                .count() as f64
        };
        let n_class = |class: u8| y.iter().filter(|&&yi| yi == class).count() as f64;
        let pmf = |class: u8, var: &[u8], level: u8| {
            (count(class, var, level) + 0.5) / (n_class(class) + 1.0)
        };
        for row in 0..8 {
            let mut post = [0.0f64; 2];
            for class in 0..2u8 {
                post[class as usize] = (n_class(class) / 8.0)
                    * pmf(class, &a, a[row])
                    * pmf(class, &b, b[row]);
            }
            let expected = post[1] / (post[0] + post[1]);
            let got = predict_nb(&model, &ds, row).unwrap();
            assert_abs_diff_eq!(got.p1, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn smoothed_pmf_is_positive_and_normalized() {
        let probs = smoothed_pmf(&[0, 0, 0], 4);
        assert_abs_diff_eq!(probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(probs.iter().all(|&p| p > 0.0));
        // Unseen levels get mass 0.5 / (3 + 2).
        assert_abs_diff_eq!(probs[3], 0.5 / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn thirty_small_densities_do_not_underflow() {
        let mut rng = ChaCha12Rng::seed_from_u64(3030);
        let n = 60;
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let mut vars = Vec::new();
        for p in 0..30 {
            let col: Vec<Cell> = (0..n)
                .map(|_| Cell::Number(rng.random_range(-0.01..0.01)))
                .collect();
            vars.push((
                VariableDef::new(format!("x{p}"), VariableKind::Continuous),
                col,
            ));
        }
        let names: Vec<String> = vars.iter().map(|(d, _)| d.name.clone()).collect();
        let ds = dataset_from_columns(vars, &labels);
        let model = fit_nb(&ds, &names, "y", PriorMode::Empirical).unwrap();

        // Probe far outside the training support: every marginal is tiny.
        let probe_cols: Vec<(VariableDef, Vec<Cell>)> = (0..30)
            .map(|p| {
                (
                    VariableDef::new(format!("x{p}"), VariableKind::Continuous),
                    vec![Cell::Number(50.0)],
                )
            })
            .collect();
        let probe = dataset_from_columns(probe_cols, &[0]);
        let p = predict_nb(&model, &probe, 0).unwrap();
        assert!(p.p1.is_finite() && !p.p1.is_nan());
        assert!(p.p1 > 0.0 && p.p1 < 1.0);
    }

    #[test]
    fn equal_prior_duplication_keeps_ranking() {
        let mut rng = ChaCha12Rng::seed_from_u64(515);
        let n = 100;
        let labels: Vec<u8> = (0..n).map(|i| (i < 30) as u8).collect();
        let col: Vec<Cell> = labels
            .iter()
            .map(|&y| {
                let center = if y == 1 { 2.0 } else { -2.0 };
                Cell::Number(center + rng.random_range(-1.0..1.0))
            })
            .collect();
        let ds = dataset_from_columns(
            vec![(VariableDef::new("x", VariableKind::Continuous), col)],
            &labels,
        );
        let doubled_rows: Vec<usize> = (0..n).chain(0..n).collect();
        let ds2 = ds.subset_rows(&doubled_rows);

        let m1 = fit_nb(&ds, &["x".into()], "y", PriorMode::Equal).unwrap();
        let m2 = fit_nb(&ds2, &["x".into()], "y", PriorMode::Equal).unwrap();
        let p1 = predict_nb_dataset(&m1, &ds).unwrap();
        let p2 = predict_nb_dataset(&m2, &ds).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            assert_eq!(a.p1 >= 0.5, b.p1 >= 0.5, "argmax must not flip");
        }
    }

    fn wrapper_dataset(n: usize, seed: u64, n_noise: usize) -> (Dataset, Vec<String>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut labels = Vec::with_capacity(n);
        let mut info1 = Vec::with_capacity(n);
        let mut info2 = Vec::with_capacity(n);
        for _ in 0..n {
            let y = (rng.random::<f64>() < 0.4) as u8;
            labels.push(y);
            let shift = if y == 1 { 1.6 } else { 0.0 };
            info1.push(Cell::Number(
                shift + rng.sample::<f64, _>(rand_distr::StandardNormal),
            ));
            info2.push(Cell::Number(
                -shift + rng.sample::<f64, _>(rand_distr::StandardNormal),
            ));
        }
        let mut vars = vec![
            (VariableDef::new("info1", VariableKind::Continuous), info1),
            (VariableDef::new("info2", VariableKind::Continuous), info2),
        ];
        for k in 0..n_noise {
            let col: Vec<Cell> = (0..n)
                .map(|_| Cell::Number(rng.sample::<f64, _>(rand_distr::StandardNormal)))
                .collect();
            vars.push((
                VariableDef::new(format!("noise{k}"), VariableKind::Continuous),
                col,
            ));
        }
        let names: Vec<String> = vars.iter().map(|(d, _)| d.name.clone()).collect();
        (dataset_from_columns(vars, &labels), names)
    }

    #[test]
    fn wrapper_with_two_candidates_returns_the_pair() {
        let (ds, names) = wrapper_dataset(200, 1, 0);
        let result = nb_wrapper_select(&ds, "y", &names, 9).unwrap();
        assert_eq!(result.selected.len(), 2);
        assert_eq!(result.trace.learning.len(), 2);
        assert_eq!(result.trace.validation.len(), 1);
    }

    #[test]
    fn wrapper_finds_informative_variables() {
        let (ds, names) = wrapper_dataset(2000, 42, 6);
        let result = nb_wrapper_select(&ds, "y", &names, 7).unwrap();
        assert!(
            result.selected.contains(&"info1".to_string())
                && result.selected.contains(&"info2".to_string()),
            "informative variables missing from {:?}",
            result.selected
        );
    }

    #[test]
    fn wrapper_trace_lengths_track_selection() {
        let (ds, names) = wrapper_dataset(800, 3, 4);
        let result = nb_wrapper_select(&ds, "y", &names, 11).unwrap();
        assert_eq!(result.trace.learning.len(), result.selected.len());
        assert_eq!(result.trace.validation.len(), result.selected.len() - 1);
    }

    #[test]
    fn wrapper_needs_both_classes_in_subsplits() {
        let (ds, names) = wrapper_dataset(40, 5, 0);
        // Rebuild with a single positive row: stratification cannot split it.
        let labels: Vec<u8> = (0..40).map(|i| (i == 0) as u8).collect();
        let cols: Vec<(VariableDef, Vec<Cell>)> = names
            .iter()
            .map(|n| {
                (
                    VariableDef::new(n.clone(), VariableKind::Continuous),
                    (0..40)
                        .map(|r| *ds.cell(r, ds.schema().var_index(n).unwrap()))
                        .collect(),
                )
            })
            .collect();
        let ds = dataset_from_columns(cols, &labels);
        assert!(matches!(
            nb_wrapper_select(&ds, "y", &names, 1),
            Err(NbError::ClassTooSmall { .. })
        ));
    }

    #[test]
    fn model_json_round_trip() {
        let (ds, names) = wrapper_dataset(50, 6, 0);
        let model = fit_nb(&ds, &names, "y", PriorMode::Empirical).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: NbModel = serde_json::from_str(&json).unwrap();
        let p1 = predict_nb_dataset(&model, &ds).unwrap();
        let p2 = predict_nb_dataset(&back, &ds).unwrap();
        assert_eq!(p1, p2);
    }
}
