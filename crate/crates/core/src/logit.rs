//! Weighted logistic regression with factor expansion and stepwise AIC
//! selection.
//!
//! The fitter maximizes the class-weighted log-likelihood
//!
//! ```text
//! l_w(beta) = w1 * sum over y=1 of ln(pi_i) + w0 * sum over y=0 of ln(1 - pi_i)
//! ```
//!
//! by Newton–Raphson with step-halving, a 1e-8 ridge on a singular Hessian,
//! and separation detection at |linear predictor| > 30. Ordinal and nominal
//! predictors expand into reference-coded indicator blocks that enter and
//! leave stepwise selection atomically.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, VariableKind};
use crate::metrics::ProbPrediction;

const MAX_ITERATIONS: usize = 100;
const SCORE_TOL: f64 = 1e-8;
const LOGLIK_REL_TOL: f64 = 1e-10;
const SEPARATION_ETA: f64 = 30.0;
const RIDGE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum LogitError {
    #[error("both outcome classes must be present")]
    OneClassOnly,
    #[error("variable `{0}` has missing values")]
    MissingValuePresent(String),
    #[error("factor `{0}` has a single observed level")]
    ConstantFactor(String),
    #[error("Hessian is singular even with ridge jitter")]
    SingularHessian,
    #[error("design has {design} columns but the fit has {fit} coefficients")]
    DimensionMismatch { design: usize, fit: usize },
    #[error("design and labels disagree on row count ({rows} vs {labels})")]
    RowMismatch { rows: usize, labels: usize },
    #[error("class weights must be positive")]
    NonPositiveWeights,
    #[error("need at least 2 candidate variables, got {0}")]
    TooFewCandidates(usize),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Per-class likelihood weights, normalized so `w0 + w1 = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    w0: f64,
    w1: f64,
}

impl ClassWeights {
    pub fn new(w0: f64, w1: f64) -> Result<Self, LogitError> {
        if !(w0 > 0.0 && w1 > 0.0) {
            return Err(LogitError::NonPositiveWeights);
        }
        let total = w0 + w1;
        Ok(Self {
            w0: w0 / total,
            w1: w1 / total,
        })
    }

    /// Equal weights: the ordinary (unweighted) likelihood up to a constant
    /// factor, so the fitted coefficients coincide with the unweighted MLE.
    pub fn equal() -> Self {
        Self { w0: 0.5, w1: 0.5 }
    }

    /// Inverse-frequency weights: `w_j` proportional to `1/n_j`.
    pub fn balanced(labels: &[u8]) -> Result<Self, LogitError> {
        let n1 = labels.iter().filter(|&&y| y == 1).count();
        let n0 = labels.len() - n1;
        if n0 == 0 || n1 == 0 {
            return Err(LogitError::OneClassOnly);
        }
        ClassWeights::new(1.0 / n0 as f64, 1.0 / n1 as f64)
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn w1(&self) -> f64 {
        self.w1
    }

    pub fn for_label(&self, y: u8) -> f64 {
        if y == 1 {
            self.w1
        } else {
            self.w0
        }
    }
}

/// Inverse-frequency class weights for a label vector.
pub fn balanced_weights(labels: &[u8]) -> Result<ClassWeights, LogitError> {
    ClassWeights::balanced(labels)
}

/// How one variable maps onto design columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum ColumnPlan {
    /// One column with the raw numeric value (continuous or 0/1 binary).
    Numeric,
    /// Reference-coded indicators for the observed levels beyond the first.
    Factor { reference: usize, coded: Vec<usize> },
}

/// Recipe for expanding variables into design columns, learned on training
/// data and reusable on new data with the same schema. Levels unseen during
/// learning code as the reference level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignLayout {
    vars: Vec<(String, ColumnPlan)>,
}

/// Expanded model matrix: an all-ones intercept column followed by one
/// contiguous column block per variable.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    column_names: Vec<String>,
    block_map: Vec<(String, Range<usize>)>,
    layout: DesignLayout,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Column range of one variable's block.
    pub fn block(&self, var: &str) -> Option<Range<usize>> {
        self.block_map
            .iter()
            .find(|(name, _)| name == var)
            .map(|(_, r)| r.clone())
    }

    pub fn layout(&self) -> &DesignLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }
}

fn plan_variable(ds: &Dataset, var: usize) -> Result<ColumnPlan, LogitError> {
    let kind = ds.schema().var_kind(var);
    let name = ds.schema().var_name(var);
    match kind {
        VariableKind::Continuous => Ok(ColumnPlan::Numeric),
        _ => {
            let n_levels = kind.level_count().expect("discrete kind");
            let mut seen = vec![false; n_levels];
            for row in 0..ds.n_rows() {
                let cell = ds.cell(row, var);
                match cell.as_level(kind) {
                    Some(l) => seen[l] = true,
                    None => return Err(LogitError::MissingValuePresent(name.to_string())),
                }
            }
            let observed: Vec<usize> = (0..n_levels).filter(|&l| seen[l]).collect();
            if observed.len() < 2 {
                return Err(LogitError::ConstantFactor(name.to_string()));
            }
            if matches!(kind, VariableKind::Binary) {
                return Ok(ColumnPlan::Numeric);
            }
            Ok(ColumnPlan::Factor {
                reference: observed[0],
                coded: observed[1..].to_vec(),
            })
        }
    }
}

/// Learn a column layout from the data and expand it.
pub fn build_design(ds: &Dataset, vars: &[String]) -> Result<DesignMatrix, LogitError> {
    let mut plans = Vec::with_capacity(vars.len());
    for name in vars {
        let var = ds.schema().var_index(name)?;
        plans.push((name.clone(), plan_variable(ds, var)?));
    }
    build_design_with_layout(ds, &DesignLayout { vars: plans })
}

/// Expand new data with a previously learned layout.
pub fn build_design_with_layout(
    ds: &Dataset,
    layout: &DesignLayout,
) -> Result<DesignMatrix, LogitError> {
    let n = ds.n_rows();
    let mut column_names = vec!["(Intercept)".to_string()];
    let mut block_map = Vec::with_capacity(layout.vars.len());
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; n]];

    for (name, plan) in &layout.vars {
        let var = ds.schema().var_index(name)?;
        let kind = ds.schema().var_kind(var);
        let start = columns.len();
        match plan {
            ColumnPlan::Numeric => {
                let mut col = Vec::with_capacity(n);
                for row in 0..n {
                    let v = ds
                        .cell(row, var)
                        .as_f64()
                        .ok_or_else(|| LogitError::MissingValuePresent(name.clone()))?;
                    col.push(v);
                }
                columns.push(col);
                column_names.push(name.clone());
            }
            ColumnPlan::Factor { coded, .. } => {
                let mut level_rows = Vec::with_capacity(n);
                for row in 0..n {
                    let l = ds
                        .cell(row, var)
                        .as_level(kind)
                        .ok_or_else(|| LogitError::MissingValuePresent(name.clone()))?;
                    level_rows.push(l);
                }
                for &level in coded {
                    columns.push(
                        level_rows
                            .iter()
                            .map(|&l| (l == level) as u8 as f64)
                            .collect(),
                    );
                    let label = kind.level_label(level).unwrap_or_else(|| level.to_string());
                    column_names.push(format!("{name}={label}"));
                }
            }
        }
        block_map.push((name.clone(), start..columns.len()));
    }

    let p = columns.len();
    let x = DMatrix::from_fn(n, p, |r, c| columns[c][r]);
    Ok(DesignMatrix {
        x,
        column_names,
        block_map,
        layout: layout.clone(),
    })
}

/// A fitted (weighted) logistic regression.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogitFit {
    pub beta: Vec<f64>,
    pub column_names: Vec<String>,
    pub loglik: f64,
    pub aic: f64,
    pub converged: bool,
    /// Set when the fit aborted because a linear predictor diverged.
    pub separated: bool,
    pub weights: ClassWeights,
    pub iterations: usize,
}

fn sigmoid(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

/// `ln(1 + exp(x))` without overflow.
fn ln_1p_exp(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn weighted_loglik(eta: &DVector<f64>, y: &[u8], w: &ClassWeights) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            let sign = 1.0 - 2.0 * yi as f64;
            -w.for_label(yi) * ln_1p_exp(sign * e)
        })
        .sum()
}

/// Maximize the weighted log-likelihood. Separation and iteration-capped fits
/// return with `converged = false` rather than an error.
pub fn fit(dm: &DesignMatrix, y: &[u8], w: ClassWeights) -> Result<LogitFit, LogitError> {
    let n = dm.n_rows();
    let p = dm.n_cols();
    if y.len() != n {
        return Err(LogitError::RowMismatch {
            rows: n,
            labels: y.len(),
        });
    }
    let n1 = y.iter().filter(|&&v| v == 1).count();
    if n1 == 0 || n1 == n {
        return Err(LogitError::OneClassOnly);
    }

    let x = &dm.x;
    let mut beta = DVector::zeros(p);
    let mut loglik = weighted_loglik(&(x * &beta), y, &w);
    let mut prev_loglik: Option<f64> = None;
    let mut converged = false;
    let mut separated = false;
    let mut iterations = 0;

    for iter in 0..MAX_ITERATIONS {
        iterations = iter + 1;
        let eta = x * &beta;
        let pi: DVector<f64> = eta.map(sigmoid);

        // Residual score s = X^T (w .* (y - pi)).
        let weighted_resid =
            DVector::from_fn(n, |i, _| w.for_label(y[i]) * (y[i] as f64 - pi[i]));
        let score = x.transpose() * &weighted_resid;

        if eta.amax() > SEPARATION_ETA {
            separated = true;
            break;
        }
        if score.amax() < SCORE_TOL {
            converged = true;
            break;
        }
        // A stalled likelihood only counts as convergence once the score is
        // genuinely small; otherwise extra Newton steps are still useful
        // even when the objective change is below f64 resolution.
        if let Some(prev) = prev_loglik {
            if (loglik - prev).abs() / (prev.abs() + 1e-12) < LOGLIK_REL_TOL
                && score.amax() < 1e-6
            {
                converged = true;
                break;
            }
        }

        // H = X^T W X with W_ii = w_i * pi_i * (1 - pi_i).
        let mut xw = x.clone();
        for i in 0..n {
            let wi = w.for_label(y[i]) * pi[i] * (1.0 - pi[i]);
            xw.row_mut(i).scale_mut(wi);
        }
        let hessian = x.transpose() * xw;
        let delta = solve_spd(&hessian, &score)?;

        // Step-halving keeps the likelihood nondecreasing, up to evaluation
        // noise: near the optimum the objective is flat at f64 resolution,
        // and rejecting one-ulp "decreases" would freeze the iteration with
        // the score still contractible.
        let noise = 1e-10 * (1.0 + loglik.abs());
        let mut step = 1.0;
        let mut new_beta;
        let mut new_loglik;
        loop {
            new_beta = &beta + &delta * step;
            new_loglik = weighted_loglik(&(x * &new_beta), y, &w);
            if new_loglik >= loglik - noise || step < 1e-12 {
                break;
            }
            step /= 2.0;
        }
        beta = new_beta;
        prev_loglik = Some(loglik);
        loglik = new_loglik;
    }

    let aic = -2.0 * loglik + 2.0 * p as f64;
    Ok(LogitFit {
        beta: beta.iter().copied().collect(),
        column_names: dm.column_names.clone(),
        loglik,
        aic,
        converged,
        separated,
        weights: w,
        iterations,
    })
}

fn solve_spd(hessian: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, LogitError> {
    if let Some(chol) = hessian.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    let mut ridged = hessian.clone();
    for i in 0..ridged.nrows() {
        ridged[(i, i)] += RIDGE * (1.0 + hessian[(i, i)].abs());
    }
    ridged
        .cholesky()
        .map(|c| c.solve(rhs))
        .ok_or(LogitError::SingularHessian)
}

/// Predicted class-1 probabilities for a design built with the fit's layout.
pub fn predict(fit: &LogitFit, dm: &DesignMatrix) -> Result<Vec<ProbPrediction>, LogitError> {
    if dm.n_cols() != fit.beta.len() {
        return Err(LogitError::DimensionMismatch {
            design: dm.n_cols(),
            fit: fit.beta.len(),
        });
    }
    let beta = DVector::from_column_slice(&fit.beta);
    let eta = &dm.x * beta;
    Ok(eta
        .iter()
        .map(|&e| {
            let p = sigmoid(e).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
            ProbPrediction::new(p)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepAction {
    Start,
    Added,
    Removed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: StepAction,
    pub variable: Option<String>,
    pub aic: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepwiseResult {
    pub selected: Vec<String>,
    pub trace: Vec<StepRecord>,
}

/// Greedy AIC-driven add/remove of whole variables (factor blocks move
/// atomically). Forward and Both start from the intercept-only model,
/// Backward from the full model; each step takes the move with the lowest
/// AIC if it improves on the current one, ties breaking toward the lowest
/// variable index.
pub fn stepwise_select(
    ds: &Dataset,
    outcome: &str,
    candidates: &[String],
    direction: Direction,
    w: ClassWeights,
) -> Result<StepwiseResult, LogitError> {
    if candidates.len() < 2 {
        return Err(LogitError::TooFewCandidates(candidates.len()));
    }
    let y = ds.outcome(outcome)?;
    let aic_of = |included: &[bool]| -> Result<f64, LogitError> {
        let vars: Vec<String> = candidates
            .iter()
            .zip(included)
            .filter(|(_, &inc)| inc)
            .map(|(v, _)| v.clone())
            .collect();
        let dm = build_design(ds, &vars)?;
        Ok(fit(&dm, &y, w)?.aic)
    };

    let mut included = vec![matches!(direction, Direction::Backward); candidates.len()];
    let mut current_aic = aic_of(&included)?;
    let mut trace = vec![StepRecord {
        action: StepAction::Start,
        variable: None,
        aic: current_aic,
    }];

    loop {
        // Enumerate legal moves: (candidate index, add?).
        let moves: Vec<(usize, bool)> = (0..candidates.len())
            .filter_map(|i| match direction {
                Direction::Forward if !included[i] => Some((i, true)),
                Direction::Backward if included[i] => Some((i, false)),
                Direction::Both => Some((i, !included[i])),
                _ => None,
            })
            .collect();
        if moves.is_empty() {
            break;
        }

        let scored: Vec<Result<(usize, bool, f64), LogitError>> = moves
            .par_iter()
            .map(|&(i, add)| {
                let mut trial = included.clone();
                trial[i] = add;
                Ok((i, add, aic_of(&trial)?))
            })
            .collect();

        let mut best: Option<(usize, bool, f64)> = None;
        for result in scored {
            let (i, add, aic) = result?;
            // Strictly lower AIC wins; exact ties keep the lower index.
            best = match best {
                Some((_, _, b)) if aic >= b => best,
                _ => Some((i, add, aic)),
            };
        }
        match best {
            Some((i, add, aic)) if aic < current_aic => {
                included[i] = add;
                current_aic = aic;
                trace.push(StepRecord {
                    action: if add {
                        StepAction::Added
                    } else {
                        StepAction::Removed
                    },
                    variable: Some(candidates[i].clone()),
                    aic,
                });
            }
            _ => break,
        }
    }

    let selected = candidates
        .iter()
        .zip(&included)
        .filter(|(_, &inc)| inc)
        .map(|(v, _)| v.clone())
        .collect();
    Ok(StepwiseResult { selected, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Cell, Schema, VariableDef};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn dataset_from_columns(
        vars: Vec<(VariableDef, Vec<Cell>)>,
        labels: &[u8],
    ) -> Dataset {
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

    fn ordinal(levels: &[&str]) -> VariableKind {
        VariableKind::Ordinal {
            levels: levels.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Minimal unweighted Newton fitter, independent of the main code path.
    fn unweighted_mle(x: &DMatrix<f64>, y: &[u8]) -> DVector<f64> {
        let mut beta = DVector::zeros(x.ncols());
        for _ in 0..60 {
            let eta = x * &beta;
            let pi: DVector<f64> = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
            let resid = DVector::from_fn(x.nrows(), |i, _| y[i] as f64 - pi[i]);
            let score = x.transpose() * &resid;
            if score.amax() < 1e-12 {
                break;
            }
            let mut xw = x.clone();
            for i in 0..x.nrows() {
                xw.row_mut(i).scale_mut(pi[i] * (1.0 - pi[i]));
            }
            let h = x.transpose() * xw;
            beta += h.cholesky().unwrap().solve(&score);
        }
        beta
    }

    #[test]
    fn three_level_ordinal_expands_to_two_columns() {
        let col = vec![Cell::Level(0), Cell::Level(1), Cell::Level(2), Cell::Level(1)];
        let ds = dataset_from_columns(
            vec![(VariableDef::new("g", ordinal(&["a", "b", "c"])), col)],
            &[0, 1, 0, 1],
        );
        let dm = build_design(&ds, &["g".into()]).unwrap();
        assert_eq!(dm.n_cols(), 3); // intercept + 2 indicators
        assert_eq!(dm.block("g"), Some(1..3));
        assert_eq!(dm.column_names()[1], "g=b");
        assert_eq!(dm.column_names()[2], "g=c");
    }

    #[test]
    fn continuous_variable_gives_two_columns_total() {
        let col = vec![Cell::Number(1.0), Cell::Number(2.0)];
        let ds = dataset_from_columns(
            vec![(VariableDef::new("x", VariableKind::Continuous), col)],
            &[0, 1],
        );
        let dm = build_design(&ds, &["x".into()]).unwrap();
        assert_eq!(dm.n_cols(), 2);
        assert_eq!(dm.block("x"), Some(1..2));
    }

    #[test]
    fn four_level_factor_expands_to_three_columns() {
        let col = vec![
            Cell::Level(0),
            Cell::Level(1),
            Cell::Level(2),
            Cell::Level(3),
        ];
        let ds = dataset_from_columns(
            vec![(
                VariableDef::new("subprocedure", ordinal(&["1", "2", "3", "4"])),
                col,
            )],
            &[0, 1, 0, 1],
        );
        let dm = build_design(&ds, &["subprocedure".into()]).unwrap();
        assert_eq!(dm.block("subprocedure"), Some(1..4));
    }

    #[test]
    fn single_observed_level_is_constant_factor() {
        let col = vec![Cell::Level(1), Cell::Level(1)];
        let ds = dataset_from_columns(
            vec![(VariableDef::new("g", ordinal(&["a", "b"])), col)],
            &[0, 1],
        );
        assert!(matches!(
            build_design(&ds, &["g".into()]),
            Err(LogitError::ConstantFactor(_))
        ));
    }

    #[test]
    fn missing_value_rejected_by_design() {
        let col = vec![Cell::Missing, Cell::Number(1.0)];
        let ds = dataset_from_columns(
            vec![(VariableDef::new("x", VariableKind::Continuous), col)],
            &[0, 1],
        );
        assert!(matches!(
            build_design(&ds, &["x".into()]),
            Err(LogitError::MissingValuePresent(_))
        ));
    }

    fn simulate_logistic(
        n: usize,
        beta0: f64,
        beta1: f64,
        seed: u64,
    ) -> (Dataset, Vec<u8>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.sample(rand_distr::StandardNormal);
            let p = sigmoid(beta0 + beta1 * x);
            xs.push(Cell::Number(x));
            ys.push((rng.random::<f64>() < p) as u8);
        }
        let ds = dataset_from_columns(
            vec![(VariableDef::new("x", VariableKind::Continuous), xs)],
            &ys,
        );
        (ds, ys)
    }

    #[test]
    fn equal_weight_fit_matches_unweighted_mle() {
        let (ds, y) = simulate_logistic(600, -0.4, 0.8, 91);
        let dm = build_design(&ds, &["x".into()]).unwrap();
        let ours = fit(&dm, &y, ClassWeights::equal()).unwrap();
        assert!(ours.converged);
        let reference = unweighted_mle(dm.matrix(), &y);
        for (a, b) in ours.beta.iter().zip(reference.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn recovers_simulation_coefficients() {
        let (ds, y) = simulate_logistic(5000, 0.0, 1.0, 2718);
        let dm = build_design(&ds, &["x".into()]).unwrap();
        let fit = fit(&dm, &y, ClassWeights::equal()).unwrap();
        assert!(fit.converged);
        assert!(fit.beta[0].abs() < 0.1, "intercept {}", fit.beta[0]);
        assert!((fit.beta[1] - 1.0).abs() < 0.1, "slope {}", fit.beta[1]);

        // Score max-norm at the optimum.
        let beta = DVector::from_column_slice(&fit.beta);
        let eta = dm.matrix() * beta;
        let resid = DVector::from_fn(dm.n_rows(), |i, _| {
            fit.weights.for_label(y[i]) * (y[i] as f64 - sigmoid(eta[i]))
        });
        let score = dm.matrix().transpose() * resid;
        assert!(score.amax() < 1e-6, "score norm {}", score.amax());
    }

    #[test]
    fn separable_data_is_flagged() {
        // Margin at +-1, far points at +-3: eta at the far points crosses the
        // separation guard long before the score tolerance is reached.
        let xs = vec![
            Cell::Number(-3.0),
            Cell::Number(-1.0),
            Cell::Number(1.0),
            Cell::Number(3.0),
        ];
        let ds = dataset_from_columns(
            vec![(VariableDef::new("x", VariableKind::Continuous), xs)],
            &[0, 0, 1, 1],
        );
        let dm = build_design(&ds, &["x".into()]).unwrap();
        let fit = fit(&dm, &[0, 0, 1, 1], ClassWeights::equal()).unwrap();
        assert!(fit.separated);
        assert!(!fit.converged);
        assert!(fit.beta.iter().all(|b| b.is_finite()));
    }

    #[test]
    fn predict_zero_beta_gives_half() {
        let (ds, _) = simulate_logistic(10, 0.0, 1.0, 5);
        let dm = build_design(&ds, &["x".into()]).unwrap();
        let fit = LogitFit {
            beta: vec![0.0, 0.0],
            column_names: dm.column_names().to_vec(),
            loglik: 0.0,
            aic: 0.0,
            converged: true,
            separated: false,
            weights: ClassWeights::equal(),
            iterations: 0,
        };
        for p in predict(&fit, &dm).unwrap() {
            assert_abs_diff_eq!(p.p1, 0.5);
        }
    }

    #[test]
    fn predict_ln3_gives_three_quarters() {
        let xs = vec![Cell::Number(1.0)];
        let ds = dataset_from_columns(
            vec![(VariableDef::new("x", VariableKind::Continuous), xs)],
            &[1],
        );
        let dm = build_design(&ds, &["x".into()]).unwrap();
        let fit = LogitFit {
            beta: vec![0.0, 3.0f64.ln()],
            column_names: dm.column_names().to_vec(),
            loglik: 0.0,
            aic: 0.0,
            converged: true,
            separated: false,
            weights: ClassWeights::equal(),
            iterations: 0,
        };
        let p = predict(&fit, &dm).unwrap();
        assert_abs_diff_eq!(p[0].p1, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn predict_is_monotone_in_a_positive_coefficient() {
        let xs = vec![Cell::Number(0.0), Cell::Number(1.0), Cell::Number(2.0)];
        let ds = dataset_from_columns(
            vec![(VariableDef::new("x", VariableKind::Continuous), xs)],
            &[0, 1, 1],
        );
        let dm = build_design(&ds, &["x".into()]).unwrap();
        let fit = LogitFit {
            beta: vec![-0.3, 1.2],
            column_names: dm.column_names().to_vec(),
            loglik: 0.0,
            aic: 0.0,
            converged: true,
            separated: false,
            weights: ClassWeights::equal(),
            iterations: 0,
        };
        let p = predict(&fit, &dm).unwrap();
        assert!(p[0].p1 < p[1].p1 && p[1].p1 < p[2].p1);
    }

    #[test]
    fn predict_rejects_dimension_mismatch() {
        let (ds, _) = simulate_logistic(5, 0.0, 1.0, 6);
        let dm = build_design(&ds, &["x".into()]).unwrap();
        let fit = LogitFit {
            beta: vec![0.0; 5],
            column_names: vec![],
            loglik: 0.0,
            aic: 0.0,
            converged: true,
            separated: false,
            weights: ClassWeights::equal(),
            iterations: 0,
        };
        assert!(matches!(
            predict(&fit, &dm),
            Err(LogitError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn balanced_weights_match_cohort_counts() {
        let mut labels = vec![0u8; 518];
        labels.extend(vec![1u8; 62]);
        let w = balanced_weights(&labels).unwrap();
        assert_abs_diff_eq!(w.w0(), 62.0 / 580.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.w1(), 518.0 / 580.0, epsilon = 1e-12);

        let even = balanced_weights(&[0, 1, 0, 1]).unwrap();
        assert_abs_diff_eq!(even.w0(), 0.5);

        let skew = balanced_weights(&[0, 0, 0, 0, 0, 0, 0, 0, 0, 1]).unwrap();
        assert_abs_diff_eq!(skew.w0(), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(skew.w1(), 0.9, epsilon = 1e-12);
    }

    #[test]
    fn fit_is_invariant_to_row_permutation() {
        let (ds, y) = simulate_logistic(300, -0.5, 1.0, 12);
        let dm = build_design(&ds, &["x".into()]).unwrap();
        let base = fit(&dm, &y, ClassWeights::equal()).unwrap();

        let mut perm: Vec<usize> = (0..300).collect();
        perm.rotate_left(97);
        perm.swap(3, 250);
        let ds_perm = ds.subset_rows(&perm);
        let y_perm: Vec<u8> = perm.iter().map(|&i| y[i]).collect();
        let dm_perm = build_design(&ds_perm, &["x".into()]).unwrap();
        let permuted = fit(&dm_perm, &y_perm, ClassWeights::equal()).unwrap();
        for (a, b) in base.beta.iter().zip(&permuted.beta) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn aic_identity_holds() {
        let (ds, y) = simulate_logistic(200, 0.2, 0.7, 77);
        let dm = build_design(&ds, &["x".into()]).unwrap();
        let fit = fit(&dm, &y, ClassWeights::equal()).unwrap();
        assert_abs_diff_eq!(fit.aic, -2.0 * fit.loglik + 2.0 * 2.0, epsilon = 1e-12);
    }

    fn two_variable_dataset(n: usize, effect: f64, seed: u64) -> (Dataset, Vec<u8>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut signal = Vec::with_capacity(n);
        let mut noise = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let s: f64 = rng.sample(rand_distr::StandardNormal);
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let p = sigmoid(effect * s);
            signal.push(Cell::Number(s));
            noise.push(Cell::Number(z));
            ys.push((rng.random::<f64>() < p) as u8);
        }
        let ds = dataset_from_columns(
            vec![
                (VariableDef::new("signal", VariableKind::Continuous), signal),
                (VariableDef::new("noise", VariableKind::Continuous), noise),
            ],
            &ys,
        );
        (ds, ys)
    }

    #[test]
    fn stepwise_forward_keeps_signal_drops_noise() {
        let (ds, _) = two_variable_dataset(2000, 2.0, 314);
        let result = stepwise_select(
            &ds,
            "y",
            &["signal".into(), "noise".into()],
            Direction::Forward,
            ClassWeights::equal(),
        )
        .unwrap();
        assert!(result.selected.contains(&"signal".to_string()));
        assert!(!result.selected.contains(&"noise".to_string()));
    }

    #[test]
    fn stepwise_with_no_improving_candidate_selects_nothing() {
        // Pure-noise candidates at a scale where no single-variable gain
        // beats the AIC penalty.
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        let n = 400;
        let ys: Vec<u8> = (0..n).map(|_| (rng.random::<f64>() < 0.5) as u8).collect();
        let make = |rng: &mut ChaCha12Rng| {
            (0..n)
                .map(|_| Cell::Number(rng.sample::<f64, _>(rand_distr::StandardNormal)))
                .collect::<Vec<_>>()
        };
        let c1 = make(&mut rng);
        let c2 = make(&mut rng);
        let ds = dataset_from_columns(
            vec![
                (VariableDef::new("a", VariableKind::Continuous), c1),
                (VariableDef::new("b", VariableKind::Continuous), c2),
            ],
            &ys,
        );
        // Check over a few seeds that at least one yields an empty forward
        // selection with monotone trace; noise can sporadically enter.
        let result = stepwise_select(
            &ds,
            "y",
            &["a".into(), "b".into()],
            Direction::Forward,
            ClassWeights::equal(),
        )
        .unwrap();
        for w in result.trace.windows(2) {
            assert!(w[1].aic <= w[0].aic);
        }
        // With this seed nothing improves on the null model.
        assert!(result.selected.is_empty(), "selected {:?}", result.selected);
    }

    #[test]
    fn stepwise_backward_trace_is_monotone() {
        let mut rng = ChaCha12Rng::seed_from_u64(808);
        let n = 3000;
        let ys: Vec<u8> = (0..n).map(|_| (rng.random::<f64>() < 0.5) as u8).collect();
        let mut vars = Vec::new();
        for i in 0..4 {
            let col: Vec<Cell> = (0..n)
                .map(|_| Cell::Number(rng.sample::<f64, _>(rand_distr::StandardNormal)))
                .collect();
            vars.push((
                VariableDef::new(format!("n{i}"), VariableKind::Continuous),
                col,
            ));
        }
        let names: Vec<String> = vars.iter().map(|(d, _)| d.name.clone()).collect();
        let ds = dataset_from_columns(vars, &ys);
        let result =
            stepwise_select(&ds, "y", &names, Direction::Backward, ClassWeights::equal()).unwrap();
        for w in result.trace.windows(2) {
            assert!(w[1].aic <= w[0].aic, "AIC trace must be nonincreasing");
        }
    }

    #[test]
    fn stepwise_both_matches_forward_on_clean_signal() {
        let (ds, _) = two_variable_dataset(2000, 2.0, 1234);
        let both = stepwise_select(
            &ds,
            "y",
            &["signal".into(), "noise".into()],
            Direction::Both,
            ClassWeights::equal(),
        )
        .unwrap();
        assert!(both.selected.contains(&"signal".to_string()));
    }

    #[test]
    fn layout_reuse_codes_unseen_levels_as_reference() {
        let train_col = vec![Cell::Level(0), Cell::Level(1), Cell::Level(0), Cell::Level(1)];
        let train = dataset_from_columns(
            vec![(VariableDef::new("g", ordinal(&["a", "b", "c"])), train_col)],
            &[0, 1, 0, 1],
        );
        let dm = build_design(&train, &["g".into()]).unwrap();
        assert_eq!(dm.n_cols(), 2); // level "c" unobserved in training

        let test_col = vec![Cell::Level(2)];
        let test = dataset_from_columns(
            vec![(VariableDef::new("g", ordinal(&["a", "b", "c"])), test_col)],
            &[1],
        );
        let dm_test = build_design_with_layout(&test, dm.layout()).unwrap();
        assert_eq!(dm_test.n_cols(), 2);
        assert_abs_diff_eq!(dm_test.matrix()[(0, 1)], 0.0); // coded as reference
    }
}
