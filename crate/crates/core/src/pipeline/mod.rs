//! End-to-end driver: ingest patient files, preprocess, label, learn per
//! patient or per cluster, and write rules and reports under the output
//! directory. Every stage starts from the raw input files so it can run on
//! its own.

mod config;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    count_events, derive_ranges, group_repeated_rules, render_text, summarize_cluster, write_bounds_csv,
    AccuracyRow, AnalysisError, AnalysisReport, EventTable, PatientRule, RangeRule,
};
use crate::dataset::{
    align_resample_span, chunk, detect_exercise, ingest_csv, write_chunks_csv, write_series_csv, Chunk, DatasetError,
    PatientSeries, VariableRegistry, TIMESTAMP_FORMAT,
};
use crate::labeling::{cluster_labels, cluster_patients, write_labels_csv, ClusterAssignment, LabelError, TirClass};
use crate::learner::{learn as learn_rules, learn_multiclass, CandidateRecord, GaConfig, GpUcbConfig, LearnError};
use crate::stl::{parse, Formula, ParseError};

pub use config::{AnalysisConfig, EventSpec, Mode, PipelineConfig, RangeSpec};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no patient CSV files in {}", .0.display())]
    NoInput(PathBuf),
    #[error("no patient could be processed:\n  {}", .0.join("\n  "))]
    AllFailed(Vec<String>),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// One patient after preprocessing.
#[derive(Debug, Clone)]
pub struct PatientData {
    pub patient_id: String,
    pub series: PatientSeries,
    pub chunks: Vec<Chunk>,
}

/// Patients that loaded, plus one message per input that did not.
#[derive(Debug, Clone, Default)]
pub struct Cohort {
    pub patients: Vec<PatientData>,
    pub failures: Vec<String>,
}

impl Cohort {
    pub fn chunks(&self) -> Vec<Chunk> {
        self.patients.iter().flat_map(|p| p.chunks.iter().cloned()).collect()
    }
}

/// Learned rules of one patient (individual mode) or one cluster
/// (population mode), ranked best first per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleFile {
    pub owner: String,
    pub mode: Mode,
    pub tasks: Vec<TaskRules>,
    /// Tasks that could not be learned, with the reason.
    #[serde(default)]
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRules {
    pub task: String,
    pub candidates: Vec<CandidateRecord>,
}

/// Per-file result of the ingest stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub file: String,
    pub patient_id: String,
    pub events: usize,
    pub start: Option<String>,
    pub end: Option<String>,
    pub error: Option<String>,
}

/// Everything a full run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub clusters: ClusterAssignment,
    pub rules: Vec<RuleFile>,
    pub report: AnalysisReport,
}

fn pool(jobs: usize) -> Result<ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| PipelineError::Config(e.to_string()))
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

/// Runs `f`, turning both errors and panics into a message.
fn isolated<T>(f: impl FnOnce() -> Result<T, PipelineError>) -> Result<T, String> {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r.map_err(|e| e.to_string()),
        Err(payload) => Err(format!("panicked: {}", panic_message(payload.as_ref()))),
    }
}

/// Maps `f` over `items` on `pool`, keeping input order.
fn par_isolated<I: Sync, T: Send>(
    pool: &ThreadPool,
    items: &[I],
    f: impl Fn(&I) -> Result<T, PipelineError> + Sync,
) -> Vec<Result<T, String>> {
    pool.install(|| items.par_iter().map(|i| isolated(|| f(i))).collect())
}

/// Patient CSV files in `dir`, sorted by name.
pub fn discover_inputs(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == "csv") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(PipelineError::NoInput(dir.to_path_buf()));
    }
    Ok(files)
}

pub fn load_patient(path: &Path) -> Result<PatientData, PipelineError> {
    let raw = ingest_csv(path)?;
    let series = detect_exercise(&align_resample_span(&raw)?)?;
    let chunks = chunk(&series);
    Ok(PatientData { patient_id: raw.patient_id, series, chunks })
}

fn load_on(pool: &ThreadPool, cfg: &PipelineConfig) -> Result<Cohort, PipelineError> {
    let files = discover_inputs(&cfg.input_dir)?;
    let mut cohort = Cohort::default();
    for (path, result) in files.iter().zip(par_isolated(pool, &files, |p| load_patient(p))) {
        match result {
            Ok(p) => cohort.patients.push(p),
            Err(e) => {
                log::warn!("{}: {e}", path.display());
                cohort.failures.push(format!("{}: {e}", path.display()));
            }
        }
    }
    if cohort.patients.is_empty() {
        return Err(PipelineError::AllFailed(cohort.failures));
    }
    log::info!("loaded {} patients ({} failed)", cohort.patients.len(), cohort.failures.len());
    Ok(cohort)
}

/// Reads and preprocesses every input file. Fails when the input directory
/// is empty or no file could be processed.
pub fn load_cohort(cfg: &PipelineConfig) -> Result<Cohort, PipelineError> {
    load_on(&pool(cfg.jobs)?, cfg)
}

/// Parses every input file and writes `ingest.json` with event counts and
/// time spans.
pub fn ingest(cfg: &PipelineConfig) -> Result<Vec<IngestSummary>, PipelineError> {
    let files = discover_inputs(&cfg.input_dir)?;
    let results = par_isolated(&pool(cfg.jobs)?, &files, |p| Ok(ingest_csv(p)?));
    let summaries: Vec<IngestSummary> = files
        .iter()
        .zip(results)
        .map(|(path, r)| {
            let file = path.display().to_string();
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            match r {
                Ok(raw) => {
                    let span = raw.span();
                    let fmt = |t: chrono::NaiveDateTime| t.format(TIMESTAMP_FORMAT).to_string();
                    IngestSummary {
                        file,
                        patient_id: raw.patient_id.clone(),
                        events: raw.event_count(),
                        start: span.map(|(s, _)| fmt(s)),
                        end: span.map(|(_, e)| fmt(e)),
                        error: None,
                    }
                }
                Err(e) => IngestSummary { file, patient_id: stem, events: 0, start: None, end: None, error: Some(e) },
            }
        })
        .collect();
    write_json(&cfg.output_dir.join("ingest.json"), &summaries)?;
    if summaries.iter().all(|s| s.error.is_some()) {
        return Err(PipelineError::AllFailed(
            summaries.iter().map(|s| format!("{}: {}", s.file, s.error.as_deref().unwrap_or_default())).collect(),
        ));
    }
    Ok(summaries)
}

fn write_series(cfg: &PipelineConfig, cohort: &Cohort) -> Result<(), PipelineError> {
    for p in &cohort.patients {
        let mut buf = Vec::new();
        write_series_csv(&p.series, &mut buf)?;
        write_file(&cfg.output_dir.join("series").join(format!("{}.csv", p.patient_id)), &buf)?;
        let mut buf = Vec::new();
        write_chunks_csv(&p.chunks, &mut buf)?;
        write_file(&cfg.output_dir.join("chunks").join(format!("{}.csv", p.patient_id)), &buf)?;
    }
    Ok(())
}

fn write_labels(cfg: &PipelineConfig, cohort: &Cohort) -> Result<(), PipelineError> {
    for p in &cohort.patients {
        let mut buf = Vec::new();
        write_labels_csv(&p.chunks, &cfg.thresholds, &mut buf)?;
        write_file(&cfg.output_dir.join("labels").join(format!("{}.csv", p.patient_id)), &buf)?;
    }
    Ok(())
}

/// Writes the resampled series and chunk tables of every patient.
pub fn preprocess(cfg: &PipelineConfig) -> Result<Cohort, PipelineError> {
    let cohort = load_cohort(cfg)?;
    write_series(cfg, &cohort)?;
    Ok(cohort)
}

/// Writes per-chunk TIR classes and one-vs-all labels of every patient.
pub fn label(cfg: &PipelineConfig) -> Result<Cohort, PipelineError> {
    let cohort = load_cohort(cfg)?;
    write_labels(cfg, &cohort)?;
    Ok(cohort)
}

/// Assigns patients to clusters by average TIR and writes `clusters.json`.
pub fn cluster(cfg: &PipelineConfig) -> Result<ClusterAssignment, PipelineError> {
    let cohort = load_cohort(cfg)?;
    let clusters = cluster_patients(&cohort.chunks(), &cfg.thresholds);
    write_json(&cfg.output_dir.join("clusters.json"), &clusters)?;
    Ok(clusters)
}

struct Learner<'a> {
    cfg: &'a PipelineConfig,
    registry: VariableRegistry,
    ga: GaConfig,
    gp: GpUcbConfig,
}

impl<'a> Learner<'a> {
    fn new(cfg: &'a PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        Ok(Self { cfg, registry: cfg.registry()?, ga: cfg.effective_ga(), gp: cfg.effective_gp() })
    }

    fn patient(&self, p: &PatientData) -> Result<RuleFile, PipelineError> {
        log::info!("{}: learning {} chunks", p.patient_id, p.chunks.len());
        let result =
            learn_multiclass(&p.chunks, &self.registry, &self.cfg.templates, &self.cfg.thresholds, &self.ga, &self.gp)?;
        let mut file = RuleFile { owner: p.patient_id.clone(), mode: Mode::Individual, tasks: Vec::new(), skipped: Vec::new() };
        for class in TirClass::ALL {
            if let Some(list) = result.per_class.get(&class) {
                let candidates = list
                    .iter()
                    .take(self.cfg.analysis.top_k)
                    .map(|c| c.record(class.name(), Some(&p.patient_id), None))
                    .collect();
                file.tasks.push(TaskRules { task: class.name().into(), candidates });
            }
            if let Some(reason) = result.skipped.get(&class) {
                file.skipped.push(format!("class {class}: {reason}"));
            }
        }
        Ok(file)
    }

    fn cluster(&self, k: u8, chunks: &[Chunk]) -> Result<RuleFile, PipelineError> {
        let ds = cluster_labels(chunks, k, &self.cfg.thresholds);
        let task = format!("cluster{k}");
        log::info!("{task}: learning {} chunks", ds.len());
        let mut file = RuleFile { owner: task.clone(), mode: Mode::Population, tasks: Vec::new(), skipped: Vec::new() };
        match learn_rules(&ds, &self.registry, &self.cfg.templates, &self.ga, &self.gp) {
            Ok(list) => {
                let candidates =
                    list.iter().take(self.cfg.analysis.top_k).map(|c| c.record(&task, None, Some(k))).collect();
                file.tasks.push(TaskRules { task, candidates });
            }
            Err(LearnError::SingleLabel) => {
                let (pos, neg) = ds.counts();
                file.skipped.push(format!("single-label dataset ({pos} positive, {neg} negative)"));
            }
            Err(e) => return Err(e.into()),
        }
        Ok(file)
    }
}

fn cluster_ids(clusters: &ClusterAssignment) -> Vec<u8> {
    let mut ids: Vec<u8> = clusters.patients.values().map(|p| p.cluster).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

fn member_chunks(cohort: &Cohort, clusters: &ClusterAssignment, k: u8) -> Vec<Chunk> {
    cohort
        .patients
        .iter()
        .filter(|p| clusters.cluster_of(&p.patient_id) == Some(k))
        .flat_map(|p| p.chunks.iter().cloned())
        .collect()
}

/// Learns rules for the configured mode. Returns the rule files in owner
/// order and one message per owner whose learning failed.
fn learn_on(
    pool: &ThreadPool,
    cfg: &PipelineConfig,
    cohort: &Cohort,
    clusters: &ClusterAssignment,
) -> Result<(Vec<RuleFile>, Vec<String>), PipelineError> {
    let learner = Learner::new(cfg)?;
    let (owners, results): (Vec<String>, Vec<Result<RuleFile, String>>) = match cfg.mode {
        Mode::Individual => (
            cohort.patients.iter().map(|p| p.patient_id.clone()).collect(),
            par_isolated(pool, &cohort.patients, |p| learner.patient(p)),
        ),
        Mode::Population => {
            let groups: Vec<(u8, Vec<Chunk>)> =
                cluster_ids(clusters).into_iter().map(|k| (k, member_chunks(cohort, clusters, k))).collect();
            (
                groups.iter().map(|(k, _)| format!("cluster{k}")).collect(),
                par_isolated(pool, &groups, |(k, chunks)| learner.cluster(*k, chunks)),
            )
        }
    };
    let mut files = Vec::new();
    let mut failures = Vec::new();
    for (owner, r) in owners.into_iter().zip(results) {
        match r {
            Ok(f) => files.push(f),
            Err(e) => {
                log::warn!("{owner}: {e}");
                failures.push(format!("{owner}: {e}"));
            }
        }
    }
    Ok((files, failures))
}

fn write_rules(cfg: &PipelineConfig, files: &[RuleFile]) -> Result<(), PipelineError> {
    for f in files {
        write_json(&cfg.output_dir.join("rules").join(format!("{}.json", f.owner)), f)?;
    }
    Ok(())
}

/// Learns rules and writes one JSON file per patient or cluster under
/// `rules/`.
pub fn learn(cfg: &PipelineConfig) -> Result<Vec<RuleFile>, PipelineError> {
    cfg.validate()?;
    let pool = pool(cfg.jobs)?;
    let cohort = load_on(&pool, cfg)?;
    let clusters = cluster_patients(&cohort.chunks(), &cfg.thresholds);
    let (files, failures) = learn_on(&pool, cfg, &cohort, &clusters)?;
    if files.is_empty() {
        return Err(PipelineError::AllFailed([cohort.failures, failures].concat()));
    }
    write_rules(cfg, &files)?;
    Ok(files)
}

/// Reads the rule files a previous `learn` wrote under `rules/`.
pub fn read_rule_files(dir: &Path) -> Result<Vec<RuleFile>, PipelineError> {
    let rules = dir.join("rules");
    let mut paths: Vec<PathBuf> = fs::read_dir(&rules)
        .map_err(io_err(&rules))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            Ok(serde_json::from_str(&text)?)
        })
        .collect()
}

fn mentions(formula: &Formula, variable: &str) -> bool {
    formula.predicates().iter().any(|(v, _, t)| v.as_str() == variable && t.as_const().is_some())
}

/// Builds the report tables from learned rules and the cohort they came
/// from.
pub fn build_report(
    cfg: &PipelineConfig,
    rules: &[RuleFile],
    cohort: &Cohort,
    clusters: &ClusterAssignment,
) -> Result<AnalysisReport, PipelineError> {
    let mut report = AnalysisReport { failures: cohort.failures.clone(), ..AnalysisReport::default() };
    for f in rules {
        for t in &f.tasks {
            if let Some(best) = t.candidates.first() {
                report.accuracy.push(AccuracyRow {
                    task: t.task.clone(),
                    patient_id: best.patient_id.clone(),
                    cluster: best.cluster,
                    formula: best.formula.clone(),
                    accuracy: best.accuracy,
                    mcr: best.mcr,
                });
            }
        }
        report.skipped.extend(f.skipped.iter().map(|s| format!("{}: {s}", f.owner)));
    }

    let records: Vec<&CandidateRecord> =
        rules.iter().flat_map(|f| f.tasks.iter().flat_map(|t| t.candidates.iter())).collect();

    let patient_rules: Vec<PatientRule> =
        records.iter().filter(|r| r.patient_id.is_some()).map(|r| PatientRule::from_record(r)).collect::<Result<_, _>>()?;
    report.repeated_rules = group_repeated_rules(&patient_rules)
        .into_iter()
        .filter(|g| g.patients() >= cfg.analysis.min_patients)
        .collect();

    for spec in &cfg.analysis.ranges {
        let mut good = Vec::new();
        let mut bad = Vec::new();
        for (rank, r) in records.iter().enumerate() {
            let Ok(class) = r.task.parse::<TirClass>() else { continue };
            let formula = parse(&r.formula)?;
            if !mentions(&formula, &spec.variable) || !mentions(&formula, &spec.condition_variable) {
                continue;
            }
            let owner = r.patient_id.as_deref().unwrap_or("-");
            let rule = RangeRule { id: format!("{owner}/{}#{rank}", r.task), class, formula, mcr: r.mcr };
            if class.is_good() {
                good.push(rule);
            } else {
                bad.push(rule);
            }
        }
        if !good.is_empty() || !bad.is_empty() {
            report.ranges.push(derive_ranges(&good, &bad, &spec.variable, &spec.condition_variable, spec.quantum)?);
        }
    }

    for e in &cfg.analysis.events {
        let rule = parse(&e.rule)?;
        let mut table = EventTable { name: e.name.clone(), rule: e.rule.clone(), clusters: Vec::new() };
        for k in cluster_ids(clusters) {
            let counts = count_events(&member_chunks(cohort, clusters, k), &rule, &e.amount_variable)?;
            table.clusters.extend(summarize_cluster(k, &counts));
        }
        report.events.push(table);
    }
    Ok(report)
}

fn write_report(cfg: &PipelineConfig, report: &AnalysisReport) -> Result<(), PipelineError> {
    write_json(&cfg.output_dir.join("report.json"), report)?;
    write_file(&cfg.output_dir.join("report.txt"), render_text(report).as_bytes())?;
    let mut buf = Vec::new();
    write_bounds_csv(&report.repeated_rules, &mut buf)?;
    write_file(&cfg.output_dir.join("bounds.csv"), &buf)
}

/// Rebuilds the report from the rule files under the output directory and
/// the raw inputs, writing `report.json`, `report.txt` and `bounds.csv`.
pub fn analyze(cfg: &PipelineConfig) -> Result<AnalysisReport, PipelineError> {
    cfg.validate()?;
    let rules = read_rule_files(&cfg.output_dir)?;
    let cohort = load_cohort(cfg)?;
    let clusters = cluster_patients(&cohort.chunks(), &cfg.thresholds);
    let report = build_report(cfg, &rules, &cohort, &clusters)?;
    write_report(cfg, &report)?;
    Ok(report)
}

/// Runs every stage and writes all artifacts. Patients that fail are listed
/// in the report; the run fails only when none succeeds.
pub fn run(cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let pool = pool(cfg.jobs)?;
    let cohort = load_on(&pool, cfg)?;
    write_series(cfg, &cohort)?;
    write_labels(cfg, &cohort)?;
    let clusters = cluster_patients(&cohort.chunks(), &cfg.thresholds);
    write_json(&cfg.output_dir.join("clusters.json"), &clusters)?;

    let (rules, learn_failures) = learn_on(&pool, cfg, &cohort, &clusters)?;
    if rules.is_empty() {
        return Err(PipelineError::AllFailed([cohort.failures, learn_failures].concat()));
    }
    write_rules(cfg, &rules)?;

    let mut report = build_report(cfg, &rules, &cohort, &clusters)?;
    report.failures.extend(learn_failures);
    write_report(cfg, &report)?;
    Ok(RunOutput { clusters, rules, report })
}
