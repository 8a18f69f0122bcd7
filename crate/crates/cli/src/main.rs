use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use stlmine::pipeline::{self, Mode, PipelineConfig};
use stlmine::synth::{write_cohort, SyntheticCohortSpec};

/// Mine STL rules from hourly glucose, insulin and activity data.
#[derive(Parser)]
#[command(name = "stlmine", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// More log output; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML pipeline configuration; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Directory of per-patient CSV files.
    #[arg(long)]
    input: Option<PathBuf>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Learning mode: individual or population.
    #[arg(long)]
    mode: Option<Mode>,

    /// Seed for both the genetic search and GP-UCB.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads (0 uses every core).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with a ground-truth manifest.
    Synth {
        /// Output directory for patient CSVs and manifest.json.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        patients: usize,
        #[arg(long, default_value_t = 7)]
        days: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Parse input files and summarize them in ingest.json.
    Ingest(Common),
    /// Resample to the 5-minute grid and cut hourly chunks.
    Preprocess(Common),
    /// Write per-chunk TIR classes and labels.
    Label(Common),
    /// Learn rules per patient or per cluster.
    Learn(Common),
    /// Group patients by average TIR.
    Cluster(Common),
    /// Build reports from previously learned rules.
    Analyze(Common),
    /// Run every stage.
    Run(Common),
    /// Print the default configuration as TOML.
    Config,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.input {
            cfg.input_dir = v.clone();
        }
        if let Some(v) = &self.out {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = Some(v);
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match cli.command {
        Command::Synth { out, patients, days, seed } => {
            let spec = SyntheticCohortSpec { patients, days, seed, ..SyntheticCohortSpec::default() };
            let manifest = write_cohort(&spec, &out).with_context(|| format!("writing cohort to {}", out.display()))?;
            println!("wrote {} patients to {}", manifest.patients.len(), out.display());
        }
        Command::Ingest(c) => {
            let cfg = c.config()?;
            for s in pipeline::ingest(&cfg)? {
                match s.error {
                    Some(e) => println!("{}: error: {e}", s.file),
                    None => println!("{}: {} events", s.patient_id, s.events),
                }
            }
        }
        Command::Preprocess(c) => {
            let cfg = c.config()?;
            let cohort = pipeline::preprocess(&cfg)?;
            for p in &cohort.patients {
                let valid = p.chunks.iter().filter(|c| c.valid).count();
                println!("{}: {} samples, {valid}/{} valid chunks", p.patient_id, p.series.len(), p.chunks.len());
            }
            report_failures(&cohort.failures);
        }
        Command::Label(c) => {
            let cfg = c.config()?;
            let cohort = pipeline::label(&cfg)?;
            println!("labeled {} patients into {}", cohort.patients.len(), cfg.output_dir.join("labels").display());
            report_failures(&cohort.failures);
        }
        Command::Cluster(c) => {
            let cfg = c.config()?;
            for (id, p) in pipeline::cluster(&cfg)?.patients {
                println!("{id}: cluster {} (average TIR {:.1}%)", p.cluster, p.average_tir);
            }
        }
        Command::Learn(c) => {
            let cfg = c.config()?;
            for f in pipeline::learn(&cfg)? {
                for t in &f.tasks {
                    if let Some(best) = t.candidates.first() {
                        println!("{} {}: {:.3}  {}", f.owner, t.task, best.accuracy, best.formula);
                    }
                }
            }
        }
        Command::Analyze(c) => {
            let cfg = c.config()?;
            let report = pipeline::analyze(&cfg)?;
            print!("{}", stlmine::analysis::render_text(&report));
        }
        Command::Run(c) => {
            let cfg = c.config()?;
            let out = pipeline::run(&cfg)?;
            print!("{}", stlmine::analysis::render_text(&out.report));
            eprintln!("artifacts written to {}", cfg.output_dir.display());
        }
        Command::Config => print!("{}", PipelineConfig::default().to_toml()),
    }
    Ok(())
}

fn report_failures(failures: &[String]) {
    for f in failures {
        eprintln!("failed: {f}");
    }
}
