//! `periop`: cohort simulation, preprocessing, exploration, variable
//! selection, model training, and grid evaluation from the command line.
//!
//! Every subcommand exits 0 on success; failures print a machine-readable
//! JSON error object to stderr and exit nonzero.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use periop_core::data::{load_csv, write_csv, Schema, SplitSpec};
use periop_core::eda::{interaction_grid, write_interaction_csv, BinSpec};
use periop_core::forest::{importance, rf_wrapper_select, write_importance_csv};
use periop_core::infosel::{hybrid_filter_select, write_filter_trace_csv};
use periop_core::logit::{balanced_weights, stepwise_select, ClassWeights, Direction};
use periop_core::metrics::evaluate;
use periop_core::nbkde::nb_wrapper_select;
use periop_core::pipeline::{
    render_table, run_to_dir, train_model, InputSource, ModelKind, PreprocessConfig, RunConfig,
    RunReport, SelectionMode, TrainedModel,
};
use periop_core::preprocess::{eras_mst_plan, impute, ImputationPlan};
use periop_core::synthgen::{generate, preset, preset_names, write_cohort_files};

#[derive(Parser)]
#[command(
    name = "periop",
    about = "Perioperative complication-risk modeling pipeline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InputArgs {
    /// Cohort CSV path.
    #[arg(long)]
    input: PathBuf,
    /// Schema JSON path.
    #[arg(long)]
    schema: PathBuf,
}

impl InputArgs {
    fn load(&self) -> Result<periop_core::data::Dataset> {
        let schema: Schema = serde_json::from_str(
            &std::fs::read_to_string(&self.schema)
                .with_context(|| format!("reading {}", self.schema.display()))?,
        )?;
        Ok(load_csv(&self.input, &schema)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort from a named preset.
    Simulate {
        /// Preset name (eras-like, separable, noise-heavy, interaction,
        /// three-signal).
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the preset's row count.
        #[arg(long)]
        rows: Option<usize>,
        /// Output directory for cohort.csv, schema.json, cohort_meta.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill missing values with conditional-table imputation.
    Impute {
        #[command(flatten)]
        input: InputArgs,
        /// Shipped plan name; currently `eras-mst`.
        #[arg(long, conflicts_with = "plan")]
        plan_preset: Option<String>,
        /// JSON file holding an imputation plan.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Empirical-logit curves (and optional interaction grids) as CSV.
    Eda {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        outcome: String,
        /// Variables to plot; defaults to every schema variable.
        #[arg(long, value_delimiter = ',')]
        vars: Vec<String>,
        /// Interaction pairs as `varA:varB`, repeatable.
        #[arg(long)]
        interaction: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Variable selection on the training data.
    Select {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        outcome: String,
        /// filter, stepwise, nb, or rf.
        #[arg(long)]
        method: String,
        /// Stepwise direction (forward, backward, both).
        #[arg(long, default_value = "backward")]
        direction: String,
        /// Weight the stepwise likelihood by inverse class frequencies.
        #[arg(long)]
        weighted: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one model and save it as JSON.
    Train {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        outcome: String,
        /// logit, wlogit, nbkde, or forest.
        #[arg(long)]
        model: String,
        /// Variables to use; defaults to every schema variable.
        #[arg(long, value_delimiter = ',')]
        vars: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trees for forest models.
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a saved model on a dataset and report AUC and per-class Brier.
    Evaluate {
        /// Model JSON written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        outcome: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline: preprocess, select, fit, evaluate, report.
    Run {
        /// RunConfig JSON; other flags are ignored when present.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Preset input for flag-built configs.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        outcome: Option<String>,
        /// First N rows form the training partition.
        #[arg(long)]
        train_prefix: Option<usize>,
        /// Numeric split column for threshold mode.
        #[arg(long)]
        split_column: Option<String>,
        #[arg(long)]
        split_cutoff: Option<f64>,
        /// Comma list of logit, wlogit, nbkde, forest.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        /// Comma list of all, filter, wrapper.
        #[arg(long, value_delimiter = ',')]
        selections: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Apply the shipped eras-mst imputation plan.
        #[arg(long)]
        impute_preset: Option<String>,
        /// Impute from whole-dataset statistics before splitting.
        #[arg(long)]
        paper_faithful: bool,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a report.json as the aligned text table.
    Report {
        #[arg(long)]
        report: PathBuf,
    },
}

fn parse_model(name: &str) -> Result<ModelKind> {
    Ok(match name {
        "logit" => ModelKind::Logit,
        "wlogit" => ModelKind::Wlogit,
        "nbkde" => ModelKind::Nbkde,
        "forest" => ModelKind::Forest,
        other => bail!("unknown model `{other}` (expected logit, wlogit, nbkde, forest)"),
    })
}

fn parse_selection(name: &str) -> Result<SelectionMode> {
    Ok(match name {
        "all" => SelectionMode::All,
        "filter" => SelectionMode::Filter,
        "wrapper" => SelectionMode::Wrapper,
        other => bail!("unknown selection `{other}` (expected all, filter, wrapper)"),
    })
}

fn schema_vars(ds: &periop_core::data::Dataset) -> Vec<String> {
    ds.schema()
        .variables()
        .iter()
        .map(|v| v.name.clone())
        .collect()
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn cmd_simulate(preset_name: &str, seed: u64, rows: Option<usize>, out: &Path) -> Result<()> {
    let mut spec = preset(preset_name)
        .with_context(|| format!("known presets: {}", preset_names().join(", ")))?
        .with_seed(seed);
    if let Some(n) = rows {
        spec = spec.with_rows(n);
    }
    let cohort = generate(&spec)?;
    write_cohort_files(&cohort, &spec, out)?;
    println!(
        "wrote {} rows x {} variables to {}",
        cohort.dataset.n_rows(),
        cohort.dataset.schema().n_vars(),
        out.display()
    );
    Ok(())
}

fn cmd_impute(
    input: &InputArgs,
    plan_preset: Option<&str>,
    plan_path: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let ds = input.load()?;
    let plan: ImputationPlan = match (plan_preset, plan_path) {
        (Some("eras-mst"), None) | (None, None) => eras_mst_plan(),
        (Some(other), None) => bail!("unknown plan preset `{other}`"),
        (None, Some(path)) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    let filled = impute(&ds, &plan)?;
    std::fs::create_dir_all(out)?;
    write_csv(&filled, out.join("imputed.csv"))?;
    write_json(&out.join("schema.json"), filled.schema())?;
    println!("wrote {}", out.join("imputed.csv").display());
    Ok(())
}

fn cmd_eda(
    input: &InputArgs,
    outcome: &str,
    vars: &[String],
    interactions: &[String],
    out: &Path,
) -> Result<()> {
    let ds = input.load()?;
    let vars = if vars.is_empty() {
        schema_vars(&ds)
    } else {
        vars.to_vec()
    };
    periop_core::pipeline::write_eda_curves(&ds, outcome, &vars, out)?;
    for pair in interactions {
        let (a, b) = pair
            .split_once(':')
            .with_context(|| format!("interaction `{pair}` is not varA:varB"))?;
        let grid = interaction_grid(&ds, a, b, outcome, &BinSpec::Quantiles, &BinSpec::Quantiles)?;
        let mut buf = Vec::new();
        write_interaction_csv(&grid, &mut buf)?;
        std::fs::write(out.join(format!("eda_{a}_x_{b}.csv")), buf)?;
    }
    println!("wrote {} curve file(s) to {}", vars.len(), out.display());
    Ok(())
}

fn cmd_select(
    input: &InputArgs,
    outcome: &str,
    method: &str,
    direction: &str,
    weighted: bool,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let ds = input.load()?;
    let candidates = schema_vars(&ds);
    std::fs::create_dir_all(out)?;
    let selected: Vec<String> = match method {
        "filter" => {
            let result = hybrid_filter_select(&ds, outcome, &candidates)?;
            let mut buf = Vec::new();
            write_filter_trace_csv(&result, &mut buf)?;
            std::fs::write(out.join("filter_trace.csv"), buf)?;
            write_json(&out.join("selection.json"), &result)?;
            result.selected
        }
        "stepwise" => {
            let labels = ds.outcome(outcome)?;
            let weights = if weighted {
                balanced_weights(&labels)?
            } else {
                ClassWeights::equal()
            };
            let dir = match direction {
                "forward" => Direction::Forward,
                "backward" => Direction::Backward,
                "both" => Direction::Both,
                other => bail!("unknown direction `{other}`"),
            };
            let result = stepwise_select(&ds, outcome, &candidates, dir, weights)?;
            write_json(&out.join("selection.json"), &result)?;
            result.selected
        }
        "nb" => {
            let result = nb_wrapper_select(&ds, outcome, &candidates, seed)?;
            write_json(&out.join("selection.json"), &result)?;
            result.selected
        }
        "rf" => {
            let cfg = periop_core::forest::ForestConfig {
                seed,
                ..Default::default()
            };
            let d = candidates.len();
            let mut sizes: Vec<usize> =
                [5usize, 10, 15, 20].into_iter().filter(|&k| k <= d).collect();
            if sizes.is_empty() {
                sizes.push(d);
            }
            let result = rf_wrapper_select(&ds, outcome, &candidates, &cfg, &sizes, 10, seed)?;
            write_json(&out.join("selection.json"), &result)?;
            result.selected
        }
        other => bail!("unknown method `{other}` (expected filter, stepwise, nb, rf)"),
    };
    println!("selected {} variable(s): {}", selected.len(), selected.join(", "));
    Ok(())
}

fn cmd_train(
    input: &InputArgs,
    outcome: &str,
    model: &str,
    vars: &[String],
    seed: u64,
    trees: Option<usize>,
    out: &Path,
) -> Result<()> {
    let ds = input.load()?;
    let vars = if vars.is_empty() {
        schema_vars(&ds)
    } else {
        vars.to_vec()
    };
    let kind = parse_model(model)?;
    let cfg = periop_core::forest::ForestConfig {
        n_trees: trees.unwrap_or(500),
        seed,
        ..Default::default()
    };
    let trained = train_model(kind, &ds, &vars, outcome, &cfg)?;
    std::fs::create_dir_all(out)?;
    write_json(&out.join("model.json"), &trained)?;

    if let TrainedModel::Forest(forest) = &trained {
        let mut buf = Vec::new();
        write_importance_csv(&importance(forest), &mut buf)?;
        std::fs::write(out.join("importance.csv"), buf)?;
    }
    println!("wrote {}", out.join("model.json").display());
    Ok(())
}

fn cmd_evaluate(model_path: &Path, input: &InputArgs, outcome: &str, out: &Path) -> Result<()> {
    let trained: TrainedModel = serde_json::from_str(&std::fs::read_to_string(model_path)?)?;
    let ds = input.load()?;
    let labels = ds.outcome(outcome)?;
    let preds = trained.predict(&ds)?;
    let report = evaluate(&labels, &preds)?;
    write_json(&out.join("evaluation.json"), &report)?;
    println!(
        "auc {:.4}  brier0 {:.4}  brier1 {:.4}  (n0 {}, n1 {})",
        report.auc, report.brier0, report.brier1, report.n0, report.n1
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config_path: Option<&Path>,
    preset_name: Option<&str>,
    input: Option<&Path>,
    schema: Option<&Path>,
    outcome: Option<&str>,
    train_prefix: Option<usize>,
    split_column: Option<&str>,
    split_cutoff: Option<f64>,
    models: &[String],
    selections: &[String],
    seed: u64,
    impute_preset: Option<&str>,
    paper_faithful: bool,
    trees: Option<usize>,
    out: &Path,
) -> Result<()> {
    let config = match config_path {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => {
            let input_source = match (preset_name, input, schema) {
                (Some(name), None, None) => InputSource::Preset {
                    name: name.to_string(),
                    n_rows: None,
                },
                (None, Some(csv), Some(schema)) => InputSource::Csv {
                    path: csv.to_path_buf(),
                    schema: schema.to_path_buf(),
                },
                _ => bail!("provide either --preset or --input with --schema"),
            };
            let split = match (train_prefix, split_column) {
                (Some(n), None) => SplitSpec::ByRowIndexList {
                    train_rows: (0..n).collect(),
                },
                (None, Some(column)) => SplitSpec::ByColumnThreshold {
                    column: column.to_string(),
                    cutoff: split_cutoff
                        .context("--split-column requires --split-cutoff")?,
                },
                _ => bail!("provide either --train-prefix or --split-column/--split-cutoff"),
            };
            let models = if models.is_empty() {
                vec![
                    ModelKind::Logit,
                    ModelKind::Wlogit,
                    ModelKind::Nbkde,
                    ModelKind::Forest,
                ]
            } else {
                models
                    .iter()
                    .map(|m| parse_model(m))
                    .collect::<Result<_>>()?
            };
            let selections = if selections.is_empty() {
                vec![
                    SelectionMode::All,
                    SelectionMode::Filter,
                    SelectionMode::Wrapper,
                ]
            } else {
                selections
                    .iter()
                    .map(|s| parse_selection(s))
                    .collect::<Result<_>>()?
            };
            RunConfig {
                input: input_source,
                outcome: outcome.context("--outcome is required")?.to_string(),
                split,
                models,
                selections,
                seed,
                preprocess: impute_preset.map(|p| PreprocessConfig::Preset(p.to_string())),
                paper_faithful,
                n_trees: trees,
                min_node_size: None,
            }
        }
    };
    let report = run_to_dir(&config, out)?;
    print!("{}", render_table(&report));
    if !report.errors.is_empty() {
        eprintln!(
            "{}",
            serde_json::json!({"warning": "some cells failed", "errors": report.errors.len()})
        );
    }
    println!("report written to {}", out.join("report.json").display());
    Ok(())
}

fn cmd_report(path: &Path) -> Result<()> {
    let report: RunReport = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    print!("{}", render_table(&report));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate {
            preset,
            seed,
            rows,
            out,
        } => cmd_simulate(preset, *seed, *rows, out),
        Command::Impute {
            input,
            plan_preset,
            plan,
            out,
        } => cmd_impute(input, plan_preset.as_deref(), plan.as_deref(), out),
        Command::Eda {
            input,
            outcome,
            vars,
            interaction,
            out,
        } => cmd_eda(input, outcome, vars, interaction, out),
        Command::Select {
            input,
            outcome,
            method,
            direction,
            weighted,
            seed,
            out,
        } => cmd_select(input, outcome, method, direction, *weighted, *seed, out),
        Command::Train {
            input,
            outcome,
            model,
            vars,
            seed,
            trees,
            out,
        } => cmd_train(input, outcome, model, vars, *seed, *trees, out),
        Command::Evaluate {
            model,
            input,
            outcome,
            out,
        } => cmd_evaluate(model, input, outcome, out),
        Command::Run {
            config,
            preset,
            input,
            schema,
            outcome,
            train_prefix,
            split_column,
            split_cutoff,
            models,
            selections,
            seed,
            impute_preset,
            paper_faithful,
            trees,
            out,
        } => cmd_run(
            config.as_deref(),
            preset.as_deref(),
            input.as_deref(),
            schema.as_deref(),
            outcome.as_deref(),
            *train_prefix,
            split_column.as_deref(),
            *split_cutoff,
            models,
            selections,
            *seed,
            impute_preset.as_deref(),
            *paper_faithful,
            *trees,
            out,
        ),
        Command::Report { report } => cmd_report(report),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli) {
        eprintln!(
            "{}",
            serde_json::json!({
                "error": err.to_string(),
                "chain": err.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            })
        );
        std::process::exit(1);
    }
}
