//! Random forest with Gini splitting and stratified per-class bootstrap.
//!
//! Each tree trains on a balanced bootstrap (sample-with-replacement of
//! `n_minority` rows from each class) and grows greedily: at every node an
//! `mtry` random subset of variables is scanned for the split maximizing the
//! Gini decrease `G(t) - (nL/n) G(tL) - (nR/n) G(tR)`, with numeric
//! thresholds at midpoints of consecutive distinct values and exhaustive
//! level subsets for factors. Nodes stop at purity, `min_node_size`, or when
//! no split helps. Per-tree seeds derive from the master seed plus the tree
//! index, so results are identical under any worker count.

use std::io::Write;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, VariableKind};
use crate::metrics::ProbPrediction;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("empty node")]
    EmptyNode,
    #[error("both outcome classes must be present")]
    OneClassOnly,
    #[error("variable `{0}` has missing values")]
    MissingValue(String),
    #[error("factor `{name}` has {levels} levels; subset enumeration supports at most 16")]
    TooManyLevels { name: String, levels: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("need at least {needed} variables, got {got}")]
    TooFewVariables { needed: usize, got: usize },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Gini impurity `1 - p0^2 - p1^2` of a node with the given class counts.
pub fn gini(n0: usize, n1: usize) -> Result<f64, ForestError> {
    let n = n0 + n1;
    if n == 0 {
        return Err(ForestError::EmptyNode);
    }
    let p0 = n0 as f64 / n as f64;
    let p1 = n1 as f64 / n as f64;
    Ok(1.0 - p0 * p0 - p1 * p1)
}

/// How predicted probabilities aggregate across trees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Fraction of trees whose leaf majority is class 1.
    #[default]
    VoteShare,
    /// Mean of leaf class-1 proportions.
    MeanLeaf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate variables per node; `None` means `floor(sqrt(d))`.
    pub mtry: Option<usize>,
    pub min_node_size: usize,
    pub stratified: bool,
    pub seed: u64,
    pub aggregation: Aggregation,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry: None,
            min_node_size: 50,
            stratified: true,
            seed: 0,
            aggregation: Aggregation::VoteShare,
        }
    }
}

/// Split rule on one variable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Rows with value < threshold go left.
    Threshold(f64),
    /// Rows whose level bit is set go left.
    LevelSubset(u16),
}

/// Node of a flattened tree; children are indices into the tree's node array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        /// Position into the forest's variable list.
        var: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
        n: usize,
        delta_gini: f64,
    },
    Leaf {
        p1: f64,
        n: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub vars: Vec<String>,
    pub config: ForestConfig,
    /// Per-tree bootstrap class counts `(n0, n1)`.
    pub bootstrap_counts: Vec<(usize, usize)>,
}

/// Mean decrease in Gini per variable, aligned with `Forest::vars`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub entries: Vec<(String, f64)>,
}

impl ImportanceTable {
    /// Entries sorted by importance descending (ties keep variable order).
    pub fn ranked(&self) -> Vec<(String, f64)> {
        let mut out = self.entries.clone();
        out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        out
    }
}

enum FeatureColumn {
    Numeric(Vec<f64>),
    Levels { values: Vec<u16>, n_levels: usize },
}

struct TrainMatrix {
    columns: Vec<FeatureColumn>,
    labels: Vec<u8>,
}

fn build_matrix(ds: &Dataset, vars: &[String], outcome: &str) -> Result<TrainMatrix, ForestError> {
    let labels = ds.outcome(outcome)?;
    let mut columns = Vec::with_capacity(vars.len());
    for name in vars {
        let var = ds.schema().var_index(name)?;
        let kind = ds.schema().var_kind(var);
        match kind {
            VariableKind::Continuous | VariableKind::Binary => {
                let mut col = Vec::with_capacity(ds.n_rows());
                for row in 0..ds.n_rows() {
                    col.push(
                        ds.cell(row, var)
                            .as_f64()
                            .ok_or_else(|| ForestError::MissingValue(name.clone()))?,
                    );
                }
                columns.push(FeatureColumn::Numeric(col));
            }
            _ => {
                let n_levels = kind.level_count().expect("discrete kind");
                if n_levels > 16 {
                    return Err(ForestError::TooManyLevels {
                        name: name.clone(),
                        levels: n_levels,
                    });
                }
                let mut col = Vec::with_capacity(ds.n_rows());
                for row in 0..ds.n_rows() {
                    let level = ds
                        .cell(row, var)
                        .as_level(kind)
                        .ok_or_else(|| ForestError::MissingValue(name.clone()))?;
                    col.push(level as u16);
                }
                columns.push(FeatureColumn::Levels {
                    values: col,
                    n_levels,
                });
            }
        }
    }
    Ok(TrainMatrix { columns, labels })
}

/// Best split of a node over the candidate variables, if any yields a strict
/// Gini decrease with both children non-empty. Ties break toward the lowest
/// variable index, then the lowest threshold / smallest level mask.
fn best_split(
    matrix: &TrainMatrix,
    rows: &[u32],
    candidates: &[usize],
) -> Option<(usize, SplitRule, f64)> {
    let n = rows.len();
    let n1: usize = rows.iter().filter(|&&r| matrix.labels[r as usize] == 1).count();
    let n0 = n - n1;
    let parent = gini(n0, n1).ok()?;
    if parent == 0.0 {
        return None;
    }

    let mut best: Option<(usize, SplitRule, f64)> = None;
    let mut consider = |var: usize, rule: SplitRule, delta: f64| {
        if delta <= 0.0 {
            return;
        }
        // Candidates are scanned in ascending variable order and rules in
        // canonical order, so only a strictly larger decrease replaces.
        if best.as_ref().is_none_or(|(_, _, b)| delta > *b) {
            best = Some((var, rule, delta));
        }
    };

    for &var in candidates {
        match &matrix.columns[var] {
            FeatureColumn::Numeric(values) => {
                let mut pairs: Vec<(f64, u8)> = rows
                    .iter()
                    .map(|&r| (values[r as usize], matrix.labels[r as usize]))
                    .collect();
                pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                let mut left0 = 0usize;
                let mut left1 = 0usize;
                for i in 0..n - 1 {
                    if pairs[i].1 == 1 {
                        left1 += 1;
                    } else {
                        left0 += 1;
                    }
                    if pairs[i].0 == pairs[i + 1].0 {
                        continue;
                    }
                    let threshold = (pairs[i].0 + pairs[i + 1].0) / 2.0;
                    let delta = gini_decrease(parent, n, left0, left1, n0, n1);
                    consider(var, SplitRule::Threshold(threshold), delta);
                }
            }
            FeatureColumn::Levels { values, n_levels } => {
                let mut per_level = vec![(0usize, 0usize); *n_levels];
                for &r in rows {
                    let l = values[r as usize] as usize;
                    if matrix.labels[r as usize] == 1 {
                        per_level[l].1 += 1;
                    } else {
                        per_level[l].0 += 1;
                    }
                }
                // Each bipartition enumerated once: the highest level stays
                // on the right.
                let top = 1u32 << (n_levels - 1);
                for mask in 1..top {
                    let mut left0 = 0usize;
                    let mut left1 = 0usize;
                    for (l, &(c0, c1)) in per_level.iter().enumerate() {
                        if mask & (1 << l) != 0 {
                            left0 += c0;
                            left1 += c1;
                        }
                    }
                    let delta = gini_decrease(parent, n, left0, left1, n0, n1);
                    consider(var, SplitRule::LevelSubset(mask as u16), delta);
                }
            }
        }
    }
    best
}

fn gini_decrease(
    parent: f64,
    n: usize,
    left0: usize,
    left1: usize,
    n0: usize,
    n1: usize,
) -> f64 {
    let left = left0 + left1;
    let right = n - left;
    if left == 0 || right == 0 {
        return 0.0;
    }
    let (right0, right1) = (n0 - left0, n1 - left1);
    let g_left = gini(left0, left1).expect("non-empty");
    let g_right = gini(right0, right1).expect("non-empty");
    parent - (left as f64 / n as f64) * g_left - (right as f64 / n as f64) * g_right
}

fn route(rule: &SplitRule, column: &FeatureColumn, row: usize) -> bool {
    match (rule, column) {
        (SplitRule::Threshold(t), FeatureColumn::Numeric(values)) => values[row] < *t,
        (SplitRule::LevelSubset(mask), FeatureColumn::Levels { values, .. }) => {
            mask & (1 << values[row]) != 0
        }
        _ => unreachable!("rule kind always matches column kind"),
    }
}

fn grow_tree(
    matrix: &TrainMatrix,
    rows: Vec<u32>,
    cfg: &ForestConfig,
    mtry: usize,
    d: usize,
    rng: &mut ChaCha12Rng,
) -> Tree {
    let mut nodes = Vec::new();
    grow_node(matrix, rows, cfg, mtry, d, rng, &mut nodes);
    Tree { nodes }
}

fn grow_node(
    matrix: &TrainMatrix,
    rows: Vec<u32>,
    cfg: &ForestConfig,
    mtry: usize,
    d: usize,
    rng: &mut ChaCha12Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    let n = rows.len();
    let n1 = rows.iter().filter(|&&r| matrix.labels[r as usize] == 1).count();
    let make_leaf = |nodes: &mut Vec<Node>| {
        nodes.push(Node::Leaf {
            p1: n1 as f64 / n as f64,
            n,
        });
        nodes.len() - 1
    };

    // A node at or below the size floor, or already pure, is a leaf.
    if n <= cfg.min_node_size || n1 == 0 || n1 == n {
        return make_leaf(nodes);
    }

    let mut candidates: Vec<usize> = sample_indices(rng, d, mtry).into_iter().collect();
    candidates.sort_unstable();

    match best_split(matrix, &rows, &candidates) {
        None => make_leaf(nodes),
        Some((var, rule, delta)) => {
            let column = &matrix.columns[var];
            let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
                .iter()
                .partition(|&&r| route(&rule, column, r as usize));
            let index = nodes.len();
            nodes.push(Node::Split {
                var,
                rule,
                left: 0,
                right: 0,
                n,
                delta_gini: delta,
            });
            let left = grow_node(matrix, left_rows, cfg, mtry, d, rng, nodes);
            let right = grow_node(matrix, right_rows, cfg, mtry, d, rng, nodes);
            if let Node::Split {
                left: l, right: r, ..
            } = &mut nodes[index]
            {
                *l = left;
                *r = right;
            }
            index
        }
    }
}

fn bootstrap_rows(
    labels: &[u8],
    stratified: bool,
    rng: &mut ChaCha12Rng,
) -> (Vec<u32>, (usize, usize)) {
    let class0: Vec<u32> = (0..labels.len() as u32)
        .filter(|&r| labels[r as usize] == 0)
        .collect();
    let class1: Vec<u32> = (0..labels.len() as u32)
        .filter(|&r| labels[r as usize] == 1)
        .collect();
    if stratified {
        let n_min = class0.len().min(class1.len());
        let mut rows = Vec::with_capacity(2 * n_min);
        for _ in 0..n_min {
            rows.push(class0[rng.random_range(0..class0.len())]);
        }
        for _ in 0..n_min {
            rows.push(class1[rng.random_range(0..class1.len())]);
        }
        (rows, (n_min, n_min))
    } else {
        let n = labels.len();
        let rows: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
        let n1 = rows.iter().filter(|&&r| labels[r as usize] == 1).count();
        let n0 = rows.len() - n1;
        (rows, (n0, n1))
    }
}

/// Train a forest; trees run in parallel with per-tree seeds
/// `seed + tree_index`, so the result is reproducible bit for bit.
pub fn fit_forest(
    ds: &Dataset,
    vars: &[String],
    outcome: &str,
    cfg: &ForestConfig,
) -> Result<Forest, ForestError> {
    let d = vars.len();
    if d == 0 {
        return Err(ForestError::TooFewVariables { needed: 1, got: 0 });
    }
    if cfg.n_trees == 0 {
        return Err(ForestError::InvalidConfig("n_trees must be >= 1".into()));
    }
    if cfg.min_node_size == 0 {
        return Err(ForestError::InvalidConfig(
            "min_node_size must be >= 1".into(),
        ));
    }
    let mtry = cfg.mtry.unwrap_or_else(|| (d as f64).sqrt().floor() as usize).max(1);
    if mtry > d {
        return Err(ForestError::InvalidConfig(format!(
            "mtry {mtry} exceeds {d} variables"
        )));
    }
    let matrix = build_matrix(ds, vars, outcome)?;
    let n1 = matrix.labels.iter().filter(|&&y| y == 1).count();
    if n1 == 0 || n1 == matrix.labels.len() {
        return Err(ForestError::OneClassOnly);
    }

    let results: Vec<(Tree, (usize, usize))> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed.wrapping_add(t as u64));
            let (rows, counts) = bootstrap_rows(&matrix.labels, cfg.stratified, &mut rng);
            (grow_tree(&matrix, rows, cfg, mtry, d, &mut rng), counts)
        })
        .collect();

    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut bootstrap_counts = Vec::with_capacity(cfg.n_trees);
    for (tree, counts) in results {
        trees.push(tree);
        bootstrap_counts.push(counts);
    }
    Ok(Forest {
        trees,
        vars: vars.to_vec(),
        config: cfg.clone(),
        bootstrap_counts,
    })
}

fn route_to_leaf<'a>(tree: &'a Tree, values: &[CellValue]) -> &'a Node {
    let mut index = 0;
    loop {
        match &tree.nodes[index] {
            leaf @ Node::Leaf { .. } => return leaf,
            Node::Split {
                var, rule, left, right, ..
            } => {
                let go_left = match (rule, &values[*var]) {
                    (SplitRule::Threshold(t), CellValue::Numeric(v)) => v < t,
                    (SplitRule::LevelSubset(mask), CellValue::Level(l)) => {
                        mask & (1 << l) != 0
                    }
                    _ => unreachable!("rule kind always matches value kind"),
                };
                index = if go_left { *left } else { *right };
            }
        }
    }
}

enum CellValue {
    Numeric(f64),
    Level(u16),
}

fn row_values(forest: &Forest, ds: &Dataset, row: usize) -> Result<Vec<CellValue>, ForestError> {
    forest
        .vars
        .iter()
        .map(|name| {
            let var = ds.schema().var_index(name)?;
            let kind = ds.schema().var_kind(var);
            let cell = ds.cell(row, var);
            let value = match kind {
                VariableKind::Continuous | VariableKind::Binary => cell
                    .as_f64()
                    .map(CellValue::Numeric)
                    .ok_or_else(|| ForestError::MissingValue(name.clone()))?,
                _ => cell
                    .as_level(kind)
                    .map(|l| CellValue::Level(l as u16))
                    .ok_or_else(|| ForestError::MissingValue(name.clone()))?,
            };
            Ok(value)
        })
        .collect()
}

/// Forest probability for one row under the configured aggregation.
pub fn predict_forest(
    forest: &Forest,
    ds: &Dataset,
    row: usize,
) -> Result<ProbPrediction, ForestError> {
    let values = row_values(forest, ds, row)?;
    let total = forest.trees.len() as f64;
    let p1 = match forest.config.aggregation {
        Aggregation::VoteShare => {
            let votes = forest
                .trees
                .iter()
                .filter(|tree| match route_to_leaf(tree, &values) {
                    Node::Leaf { p1, .. } => *p1 >= 0.5,
                    _ => unreachable!(),
                })
                .count();
            votes as f64 / total
        }
        Aggregation::MeanLeaf => {
            let sum: f64 = forest
                .trees
                .iter()
                .map(|tree| match route_to_leaf(tree, &values) {
                    Node::Leaf { p1, .. } => *p1,
                    _ => unreachable!(),
                })
                .sum();
            sum / total
        }
    };
    Ok(ProbPrediction::new(p1))
}

/// Forest probabilities for a whole dataset.
pub fn predict_forest_dataset(
    forest: &Forest,
    ds: &Dataset,
) -> Result<Vec<ProbPrediction>, ForestError> {
    (0..ds.n_rows())
        .map(|row| predict_forest(forest, ds, row))
        .collect()
}

/// Mean decrease in Gini: per variable, the sum over its splits of
/// `(n_t / n_root) * delta_gini`, averaged over trees.
pub fn importance(forest: &Forest) -> ImportanceTable {
    let mut totals = vec![0.0f64; forest.vars.len()];
    for tree in &forest.trees {
        let n_root = match &tree.nodes[0] {
            Node::Split { n, .. } => *n,
            Node::Leaf { n, .. } => *n,
        } as f64;
        for node in &tree.nodes {
            if let Node::Split {
                var, n, delta_gini, ..
            } = node
            {
                totals[*var] += (*n as f64 / n_root) * delta_gini;
            }
        }
    }
    let n_trees = forest.trees.len() as f64;
    ImportanceTable {
        entries: forest
            .vars
            .iter()
            .cloned()
            .zip(totals.iter().map(|t| t / n_trees))
            .collect(),
    }
}

/// Write an importance table as CSV sorted descending.
pub fn write_importance_csv(
    table: &ImportanceTable,
    mut out: impl Write,
) -> Result<(), std::io::Error> {
    writeln!(out, "variable,mean_decrease_gini")?;
    for (name, value) in table.ranked() {
        writeln!(out, "{name},{value}")?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RfSelection {
    pub selected: Vec<String>,
    /// One `(subset size, mean CV accuracy)` entry per candidate size.
    pub trace: Vec<(usize, f64)>,
}

/// Importance-ranked subset-size search with stratified k-fold CV: for each
/// size, train on the top-k variables and score fold accuracy at threshold
/// 0.5; the best mean accuracy wins, ties going to the smaller size.
pub fn rf_wrapper_select(
    ds: &Dataset,
    outcome: &str,
    vars: &[String],
    cfg: &ForestConfig,
    sizes: &[usize],
    folds: usize,
    seed: u64,
) -> Result<RfSelection, ForestError> {
    let d = vars.len();
    let max_size = sizes.iter().copied().max().unwrap_or(0);
    if d < max_size {
        return Err(ForestError::TooFewVariables {
            needed: max_size,
            got: d,
        });
    }

    // Rank variables on a full-variable forest.
    let full = fit_forest(ds, vars, outcome, cfg)?;
    let ranked: Vec<String> = importance(&full)
        .ranked()
        .into_iter()
        .map(|(name, _)| name)
        .collect();

    // Stratified folds: shuffle within class, deal round-robin.
    let labels = ds.outcome(outcome)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; labels.len()];
    for class in [0u8, 1] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&r| labels[r] == class).collect();
        use rand::seq::SliceRandom;
        rows.shuffle(&mut rng);
        for (i, row) in rows.into_iter().enumerate() {
            fold_of[row] = i % folds;
        }
    }

    let mut trace = Vec::with_capacity(sizes.len());
    let mut best: Option<(usize, f64)> = None;
    for &k in sizes {
        let top_k: Vec<String> = ranked.iter().take(k).cloned().collect();
        let mut correct = 0usize;
        let mut total = 0usize;
        for fold in 0..folds {
            let train_rows: Vec<usize> =
                (0..labels.len()).filter(|&r| fold_of[r] != fold).collect();
            let test_rows: Vec<usize> =
                (0..labels.len()).filter(|&r| fold_of[r] == fold).collect();
            if test_rows.is_empty() {
                continue;
            }
            let train = ds.subset_rows(&train_rows);
            let test = ds.subset_rows(&test_rows);
            let forest = fit_forest(&train, &top_k, outcome, cfg)?;
            let preds = predict_forest_dataset(&forest, &test)?;
            for (i, &row) in test_rows.iter().enumerate() {
                let predicted = (preds[i].p1 >= 0.5) as u8;
                correct += (predicted == labels[row]) as usize;
                total += 1;
            }
        }
        let accuracy = correct as f64 / total as f64;
        trace.push((k, accuracy));
        // Sizes ascend, so a strict improvement is required to move to a
        // larger subset.
        if best.is_none_or(|(_, b)| accuracy > b) {
            best = Some((k, accuracy));
        }
    }

    let (best_k, _) = best.expect("at least one size");
    Ok(RfSelection {
        selected: ranked.into_iter().take(best_k).collect(),
        trace,
    })
}
