//! Probabilistic risk modeling for perioperative complications.
//!
//! The crate covers the full modeling pipeline on typed tabular data:
//! conditional-table imputation, empirical-logit exploration, weighted
//! logistic regression, Naive Bayes with kernel density marginals, stratified
//! random forests, wrapper and information-filter variable selection, and
//! class-specific probabilistic evaluation. A seeded synthetic cohort
//! generator makes every stage verifiable end to end.

pub mod data;
pub mod eda;
pub mod forest;
pub mod infosel;
pub mod logit;
pub mod metrics;
pub mod nbkde;
pub mod pipeline;
pub mod preprocess;
pub mod synthgen;

pub use data::{Cell, DataError, Dataset, Schema, SplitSpec, VariableDef, VariableKind};
pub use metrics::{EvaluationReport, MetricsError, ProbPrediction};
