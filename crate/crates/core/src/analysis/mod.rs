//! Post-processing of learned rules into report tables: accuracy per task,
//! rules repeated across patients, safe value ranges, and cluster event
//! counts.

mod events;
mod ranges;
mod repeated;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::{LabeledDataset, TirClass};
use crate::learner::{objective, Candidate, LearnError};
use crate::stl::{EvalError, ParseError};

pub use events::{count_events, summarize_cluster, ClusterSummary, PatientEvents};
pub use ranges::{derive_ranges, RangeRow, RangeRule, RangeTable, DEFAULT_QUANTUM};
pub use repeated::{group_repeated_rules, signature, write_bounds_csv, PatientRule, RepeatedRuleGroup, RuleRow};
pub use report::{render_text, AccuracyRow, AnalysisReport, EventTable};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("rule `{id}` has class {class}, expected a {expected} class")]
    WrongClass { id: String, class: TirClass, expected: &'static str },
    #[error("rule `{id}` does not mention `{variable}`")]
    MissingVariable { id: String, variable: String },
    #[error("range quantum must be positive, got {0}")]
    InvalidQuantum(f64),
    #[error("rule `{0}` carries no patient id")]
    MissingPatient(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub mcr: f64,
}

/// Accuracy and misclassification rate of a candidate on a dataset.
pub fn metrics(candidate: &Candidate, ds: &LabeledDataset) -> Result<Metrics, AnalysisError> {
    let r = objective(&candidate.ground(), ds)?;
    Ok(Metrics { accuracy: r.accuracy, mcr: r.mcr })
}
