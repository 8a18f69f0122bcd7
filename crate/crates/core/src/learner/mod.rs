//! Bi-level rule learning: a genetic algorithm over parametric formula
//! structures, with each structure's parameters synthesized by GP-UCB.

mod config;
mod ga;
mod genetic;
mod gp;
mod gpucb;
mod objective;
mod templates;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stl::{Assignment, EvalError, Formula, InstantiateError};

pub use config::{Exploration, GaConfig, GpUcbConfig, Target};
pub use ga::{derive_seed, learn, learn_multiclass, learn_with_history, Learned, MulticlassResult};
pub use genetic::{crossover, mutate, mutate_with, Mutation};
pub use gpucb::{gp_ucb_synthesize, Synthesis};
pub use objective::{chunk_robustness, objective, predict, report_from_robustness, FitnessReport};
pub use templates::{seed_population, uniquify_params, NameGen, Template};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("single-label dataset")]
    SingleLabel,
    #[error("robustness is not finite")]
    NonFinite,
    #[error("formula is not ground: `{0}`")]
    NotGround(String),
    #[error("no templates to seed from")]
    NoTemplates,
    #[error("empty variable registry")]
    EmptyRegistry,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Instantiate(#[from] InstantiateError),
}

/// A parametric structure with its synthesized parameters and scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub formula: Formula,
    pub params: Assignment,
    pub fitness: f64,
    pub accuracy: f64,
    pub mcr: f64,
    /// The value the search maximized (fitness or accuracy).
    pub score: f64,
    pub report: FitnessReport,
    pub evaluations: usize,
}

impl Candidate {
    pub fn new(formula: Formula, synthesis: Synthesis, target: Target) -> Self {
        let r = synthesis.report;
        Self {
            formula,
            params: synthesis.params,
            fitness: r.fitness,
            accuracy: r.accuracy,
            mcr: r.mcr,
            score: Self::score_for(target, r.fitness, r.accuracy),
            report: r,
            evaluations: synthesis.evaluations,
        }
    }

    /// The structure with its parameters substituted.
    pub fn ground(&self) -> Formula {
        self.formula.instantiate(&self.params).expect("synthesized parameters are valid")
    }

    pub fn ground_text(&self) -> String {
        self.ground().to_string()
    }

    pub fn record(&self, task: &str, patient_id: Option<&str>, cluster: Option<u8>) -> CandidateRecord {
        CandidateRecord {
            formula: self.ground().rounded(3).to_string(),
            template: self.formula.to_string(),
            params: self.params.clone(),
            fitness: self.fitness,
            accuracy: self.accuracy,
            mcr: self.mcr,
            gap: self.report.gap,
            task: task.to_string(),
            patient_id: patient_id.map(str::to_string),
            cluster,
        }
    }
}

/// JSON form of a learned candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    /// Instantiated formula, numbers rounded to 3 decimals.
    pub formula: String,
    /// Parametric structure the parameters belong to.
    pub template: String,
    pub params: Assignment,
    pub fitness: f64,
    pub accuracy: f64,
    pub mcr: f64,
    pub gap: f64,
    pub task: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub patient_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cluster: Option<u8>,
}
