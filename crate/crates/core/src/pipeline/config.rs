use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::analysis::DEFAULT_QUANTUM;
use crate::dataset::VariableRegistry;
use crate::labeling::LabelThresholds;
use crate::learner::{GaConfig, GpUcbConfig, Template};
use crate::stl::parse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One learning run per patient and TIR class.
    #[default]
    Individual,
    /// Patients grouped into clusters by average TIR; one run per cluster.
    Population,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "individual" => Ok(Mode::Individual),
            "population" => Ok(Mode::Population),
            other => Err(format!("unknown mode `{other}` (expected individual or population)")),
        }
    }
}

/// Range derivation for one variable under one condition variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub variable: String,
    pub condition_variable: String,
    #[serde(default = "default_quantum")]
    pub quantum: f64,
}

fn default_quantum() -> f64 {
    DEFAULT_QUANTUM
}

/// An event detector counted per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub name: String,
    /// Ground formula evaluated at the start of each chunk.
    pub rule: String,
    /// Variable whose nonzero samples give the amount statistics.
    pub amount_variable: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Candidates kept per task in rule files and used by the analysis.
    pub top_k: usize,
    /// Smallest number of patients for a structure to count as repeated.
    pub min_patients: usize,
    pub ranges: Vec<RangeSpec>,
    pub events: Vec<EventSpec>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            top_k: 5,
            min_patients: 2,
            ranges: vec![RangeSpec {
                variable: "basalBolus".into(),
                condition_variable: "activityLevel".into(),
                quantum: DEFAULT_QUANTUM,
            }],
            events: vec![
                EventSpec {
                    name: "smbg_checks".into(),
                    rule: "F[0,60](smbg >= 1)".into(),
                    amount_variable: "smbg".into(),
                },
                EventSpec {
                    name: "correction_boluses".into(),
                    rule: "F[0,60](corrBolus > 0)".into(),
                    amount_variable: "corrBolus".into(),
                },
            ],
        }
    }
}

/// Everything a pipeline run needs; loaded from TOML, every field optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory of per-patient CSV files.
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    pub mode: Mode,
    /// When set, replaces both the GA and the GP-UCB seed.
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Variables the search may use; empty means all known channels.
    pub variables: Vec<String>,
    pub templates: Vec<Template>,
    pub ga: GaConfig,
    pub gp: GpUcbConfig,
    pub thresholds: LabelThresholds,
    pub analysis: AnalysisConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input_dir: PathBuf::from("data"),
            output_dir: PathBuf::from("out"),
            mode: Mode::Individual,
            seed: None,
            jobs: 1,
            variables: Vec::new(),
            templates: Template::ALL.to_vec(),
            ga: GaConfig::default(),
            gp: GpUcbConfig::default(),
            thresholds: LabelThresholds::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.into(), source })?;
        Self::from_toml(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn effective_ga(&self) -> GaConfig {
        GaConfig { seed: self.seed.unwrap_or(self.ga.seed), ..self.ga.clone() }
    }

    pub fn effective_gp(&self) -> GpUcbConfig {
        GpUcbConfig { seed: self.seed.unwrap_or(self.gp.seed), ..self.gp.clone() }
    }

    pub fn registry(&self) -> Result<VariableRegistry, PipelineError> {
        let all = VariableRegistry::default();
        if self.variables.is_empty() {
            return Ok(all);
        }
        if let Some(unknown) = self.variables.iter().find(|v| !all.contains(v)) {
            return Err(PipelineError::Config(format!("unknown variable `{unknown}`")));
        }
        Ok(all.subset(&self.variables))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let config = |m: String| Err(PipelineError::Config(m));
        self.effective_ga().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.effective_gp().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.registry()?;
        if self.templates.is_empty() {
            return config("at least one template is required".into());
        }
        if self.analysis.top_k == 0 {
            return config("analysis.top_k must be positive".into());
        }
        for e in &self.analysis.events {
            let f = parse(&e.rule).map_err(|err| PipelineError::Config(format!("event `{}`: {err}", e.name)))?;
            if !f.is_ground() {
                return config(format!("event `{}` must not have parameters", e.name));
            }
        }
        for r in &self.analysis.ranges {
            if !(r.quantum > 0.0) {
                return config(format!("range quantum for `{}` must be positive", r.variable));
            }
        }
        Ok(())
    }
}
