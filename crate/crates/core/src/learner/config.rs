use serde::{Deserialize, Serialize};

use super::LearnError;

/// Quantity maximized during parameter synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// The composite fitness of [`FitnessReport`](super::FitnessReport),
    /// driven by the normalized robustness gap.
    #[default]
    Fitness,
    /// Accuracy at the sign threshold.
    Accuracy,
}

/// Exploration coefficient `c_i` multiplying the posterior standard
/// deviation at iteration `i` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "snake_case")]
pub enum Exploration {
    /// `sqrt(2 ln(i^2 pi^2 / (6 delta)))`.
    Ucb { delta: f64 },
    Constant { value: f64 },
}

impl Exploration {
    pub fn coefficient(&self, i: usize) -> f64 {
        match *self {
            Exploration::Ucb { delta } => {
                let i = i.max(1) as f64;
                (2.0 * (i * i * std::f64::consts::PI.powi(2) / (6.0 * delta)).ln()).max(0.0).sqrt()
            }
            Exploration::Constant { value } => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub max_depth: usize,
    pub seed: u64,
    pub elitism: usize,
    pub tournament: usize,
    /// Upper end of the search range for time-offset parameters, in minutes.
    pub max_time_offset: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 32,
            generations: 30,
            mutation_rate: 0.3,
            crossover_rate: 0.8,
            max_depth: 4,
            seed: 0,
            elitism: 2,
            tournament: 3,
            max_time_offset: 60.0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidConfig(m.to_string()));
        if self.population < 2 {
            return bad("population must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) || !(0.0..=1.0).contains(&self.crossover_rate) {
            return bad("rates must lie in [0, 1]");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1");
        }
        if self.elitism > self.population {
            return bad("elitism cannot exceed the population");
        }
        if self.tournament < 1 {
            return bad("tournament size must be at least 1");
        }
        if !(self.max_time_offset > 0.0) {
            return bad("max_time_offset must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpUcbConfig {
    /// Total objective evaluations, initial design included.
    pub budget: usize,
    pub initial_design: usize,
    pub exploration: Exploration,
    /// Candidate kernel length scales on the unit box; each fit keeps the
    /// one with the highest marginal likelihood.
    pub length_scales: Vec<f64>,
    /// Observation noise variance relative to the standardized targets.
    pub noise: f64,
    /// Uniform random points scored by the acquisition each iteration, in
    /// addition to perturbations of the best points so far.
    pub acquisition_samples: usize,
    pub seed: u64,
    pub target: Target,
}

impl Default for GpUcbConfig {
    fn default() -> Self {
        Self {
            budget: 80,
            initial_design: 16,
            exploration: Exploration::Ucb { delta: 0.1 },
            length_scales: vec![0.05, 0.1, 0.2, 0.4, 0.8],
            noise: 1e-4,
            acquisition_samples: 256,
            seed: 0,
            target: Target::Fitness,
        }
    }
}

impl GpUcbConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidConfig(m.to_string()));
        if self.initial_design < 1 || self.budget < self.initial_design {
            return bad("need budget >= initial_design >= 1");
        }
        if self.length_scales.is_empty() || self.length_scales.iter().any(|l| !(*l > 0.0)) {
            return bad("length scales must be positive");
        }
        if !(self.noise >= 0.0) {
            return bad("noise must be non-negative");
        }
        if let Exploration::Ucb { delta } = self.exploration {
            if !(delta > 0.0 && delta < 1.0) {
                return bad("exploration delta must lie in (0, 1)");
            }
        }
        Ok(())
    }
}
