//! Time-in-range labels: per-chunk TIR, four-class one-vs-all label sets,
//! patient clusters by average control, and cluster-level binary labels.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Chunk, TIMESTAMP_FORMAT};

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("chunk {index} of patient {patient_id} has missing CGM samples")]
    InvalidChunk { patient_id: String, index: usize },
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Time-in-range class of one chunk. Ordered from worst to best control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TirClass {
    CLt50,
    C50_74,
    C75_99,
    C100,
}

impl TirClass {
    /// Best control first.
    pub const ALL: [TirClass; 4] = [TirClass::C100, TirClass::C75_99, TirClass::C50_74, TirClass::CLt50];

    pub fn name(self) -> &'static str {
        match self {
            TirClass::C100 => "100",
            TirClass::C75_99 => "75-99",
            TirClass::C50_74 => "50-74",
            TirClass::CLt50 => "<50",
        }
    }

    /// The classes reported as good control (at least 75% in range).
    pub fn is_good(self) -> bool {
        self >= TirClass::C75_99
    }
}

impl fmt::Display for TirClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TirClass {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TirClass::ALL
            .into_iter()
            .find(|c| c.name() == s || format!("{c:?}") == s)
            .ok_or_else(|| LabelError::UnknownClass(s.to_string()))
    }
}

/// Glycemic band and the class, cluster and cluster-label cut points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelThresholds {
    pub band_low: f64,
    pub band_high: f64,
    /// Lower edges of `C75_99` and `C50_74`; `C100` needs exactly 100.
    pub class_cuts: [f64; 2],
    /// Cluster 1 is above `cluster_cuts[0]`; cluster 2 reaches down to
    /// `cluster_cuts[1]` inclusive; cluster 3 down to `cluster_cuts[2]`.
    pub cluster_cuts: [f64; 3],
    /// Chunks at or above this TIR are positive in cluster label sets.
    pub cluster_positive: f64,
}

impl Default for LabelThresholds {
    fn default() -> Self {
        Self {
            band_low: 70.0,
            band_high: 180.0,
            class_cuts: [75.0, 50.0],
            cluster_cuts: [79.0, 70.0, 60.0],
            cluster_positive: 75.0,
        }
    }
}

/// Binary label of one example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Label::Pos => 1,
            Label::Neg => -1,
        }
    }
}

/// Which rule produced a label set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Class(TirClass),
    Cluster(u8),
    /// Hand-built label sets (tests, external labels).
    Custom,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Class(c) => write!(f, "class {c}"),
            Task::Cluster(k) => write!(f, "cluster {k}"),
            Task::Custom => f.write_str("custom"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub chunk: Chunk,
    pub label: Label,
}

/// Chunks paired with binary labels for one learning task.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub task: Task,
    pub examples: Vec<Example>,
}

impl LabeledDataset {
    pub fn new(task: Task, examples: Vec<Example>) -> Self {
        Self { task, examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// `(positives, negatives)`.
    pub fn counts(&self) -> (usize, usize) {
        let pos = self.examples.iter().filter(|e| e.label == Label::Pos).count();
        (pos, self.examples.len() - pos)
    }

    pub fn has_both_labels(&self) -> bool {
        let (pos, neg) = self.counts();
        pos > 0 && neg > 0
    }
}

/// Percentage of the chunk's CGM samples inside the band, bounds inclusive.
pub fn time_in_range(chunk: &Chunk, thresholds: &LabelThresholds) -> Result<f64, LabelError> {
    let invalid = || LabelError::InvalidChunk { patient_id: chunk.patient_id.clone(), index: chunk.index };
    if !chunk.valid {
        return Err(invalid());
    }
    let cgm = chunk.trace.channel("cgm").ok_or_else(invalid)?;
    let inside = cgm
        .iter()
        .filter(|&&v| v >= thresholds.band_low && v <= thresholds.band_high)
        .count();
    Ok(100.0 * inside as f64 / cgm.len() as f64)
}

pub fn tir_class(pct: f64, thresholds: &LabelThresholds) -> TirClass {
    if pct >= 100.0 {
        TirClass::C100
    } else if pct >= thresholds.class_cuts[0] {
        TirClass::C75_99
    } else if pct >= thresholds.class_cuts[1] {
        TirClass::C50_74
    } else {
        TirClass::CLt50
    }
}

/// Labels valid chunks `+1` when their class is `target`; invalid chunks are
/// left out.
pub fn one_vs_all(chunks: &[Chunk], target: TirClass, thresholds: &LabelThresholds) -> LabeledDataset {
    let examples = chunks
        .iter()
        .filter_map(|c| {
            let pct = time_in_range(c, thresholds).ok()?;
            Some(Example { chunk: c.clone(), label: Label::from_bool(tir_class(pct, thresholds) == target) })
        })
        .collect();
    LabeledDataset::new(Task::Class(target), examples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientCluster {
    pub cluster: u8,
    pub average_tir: f64,
}

/// Patient id to cluster, for patients with at least one valid chunk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub patients: BTreeMap<String, PatientCluster>,
}

impl ClusterAssignment {
    pub fn cluster_of(&self, patient_id: &str) -> Option<u8> {
        self.patients.get(patient_id).map(|p| p.cluster)
    }

    /// Patient ids in `cluster`, sorted.
    pub fn members(&self, cluster: u8) -> Vec<&str> {
        self.patients
            .iter()
            .filter(|(_, p)| p.cluster == cluster)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

pub fn cluster_of_average(avg: f64, thresholds: &LabelThresholds) -> u8 {
    let [c1, c2, c3] = thresholds.cluster_cuts;
    if avg > c1 {
        1
    } else if avg >= c2 {
        2
    } else if avg >= c3 {
        3
    } else {
        4
    }
}

/// Clusters patients by the mean TIR of their valid chunks. `chunks` may mix
/// patients; patients without valid chunks are skipped with a warning.
pub fn cluster_patients(chunks: &[Chunk], thresholds: &LabelThresholds) -> ClusterAssignment {
    let mut per_patient: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for c in chunks {
        let entry = per_patient.entry(c.patient_id.as_str()).or_default();
        if let Ok(p) = time_in_range(c, thresholds) {
            entry.push(p);
        }
    }
    let mut out = ClusterAssignment::default();
    for (id, tirs) in per_patient {
        if tirs.is_empty() {
            log::warn!("patient {id}: no valid chunks; left out of clustering");
            continue;
        }
        let average_tir = tirs.iter().sum::<f64>() / tirs.len() as f64;
        out.patients.insert(
            id.to_string(),
            PatientCluster { cluster: cluster_of_average(average_tir, thresholds), average_tir },
        );
    }
    out
}

/// Labels valid chunks of one cluster `+1` when their TIR reaches the
/// cluster-positive cut.
pub fn cluster_labels(chunks: &[Chunk], cluster: u8, thresholds: &LabelThresholds) -> LabeledDataset {
    let examples = chunks
        .iter()
        .filter_map(|c| {
            let pct = time_in_range(c, thresholds).ok()?;
            Some(Example { chunk: c.clone(), label: Label::from_bool(pct >= thresholds.cluster_positive) })
        })
        .collect();
    LabeledDataset::new(Task::Cluster(cluster), examples)
}

/// Writes `patient_id,chunk_index,chunk_start,tir_pct,class,label_c100,
/// label_c7599,label_c5074,label_lt50` for every valid chunk.
pub fn write_labels_csv(chunks: &[Chunk], thresholds: &LabelThresholds, out: impl Write) -> Result<(), LabelError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "patient_id",
        "chunk_index",
        "chunk_start",
        "tir_pct",
        "class",
        "label_c100",
        "label_c7599",
        "label_c5074",
        "label_lt50",
    ])?;
    for c in chunks {
        let Ok(pct) = time_in_range(c, thresholds) else { continue };
        let class = tir_class(pct, thresholds);
        let mut row = vec![
            c.patient_id.clone(),
            c.index.to_string(),
            c.start.format(TIMESTAMP_FORMAT).to_string(),
            format!("{pct:.4}"),
            class.name().to_string(),
        ];
        row.extend(TirClass::ALL.iter().map(|&t| Label::from_bool(t == class).sign().to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
