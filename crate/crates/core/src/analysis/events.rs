use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::dataset::Chunk;
use crate::stl::{eval_bool, Formula};

/// Event tallies for one patient.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PatientEvents {
    pub patient_id: String,
    /// Valid chunks inspected.
    pub chunks: usize,
    /// Chunks in which the event rule holds.
    pub events: usize,
    /// Sum and count of the nonzero samples of the amount variable inside
    /// satisfying chunks.
    pub amount_sum: f64,
    pub amount_samples: usize,
}

impl PatientEvents {
    pub fn mean_amount(&self) -> Option<f64> {
        (self.amount_samples > 0).then(|| self.amount_sum / self.amount_samples as f64)
    }

    /// Adds the tallies of a disjoint chunk set of the same patient.
    pub fn merge(&mut self, other: &PatientEvents) {
        self.chunks += other.chunks;
        self.events += other.events;
        self.amount_sum += other.amount_sum;
        self.amount_samples += other.amount_samples;
    }
}

/// Per-patient counts of the valid chunks where `rule` holds at the chunk
/// start, with amount statistics over `amount_variable`. Patients are
/// ordered by id.
pub fn count_events(
    chunks: &[Chunk],
    rule: &Formula,
    amount_variable: &str,
) -> Result<Vec<PatientEvents>, AnalysisError> {
    let mut per: BTreeMap<&str, PatientEvents> = BTreeMap::new();
    for c in chunks.iter().filter(|c| c.valid) {
        let entry = per
            .entry(c.patient_id.as_str())
            .or_insert_with(|| PatientEvents { patient_id: c.patient_id.clone(), ..PatientEvents::default() });
        entry.chunks += 1;
        if eval_bool(rule, &c.trace, 0.0)? {
            entry.events += 1;
            if let Some(values) = c.trace.channel(amount_variable) {
                for v in values.iter().filter(|v| v.is_finite() && **v != 0.0) {
                    entry.amount_sum += v;
                    entry.amount_samples += 1;
                }
            }
        }
    }
    Ok(per.into_values().collect())
}

/// Cluster-level averages of per-patient event tallies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: u8,
    pub patients: usize,
    pub total_events: usize,
    /// Mean of the per-patient event counts.
    pub mean_events: f64,
    /// Mean amount over all nonzero samples of satisfying chunks.
    pub mean_amount: Option<f64>,
    pub per_patient: Vec<PatientEvents>,
}

/// Summary for one cluster, or `None` when it has no patients.
pub fn summarize_cluster(cluster: u8, counts: &[PatientEvents]) -> Option<ClusterSummary> {
    if counts.is_empty() {
        return None;
    }
    let total_events = counts.iter().map(|c| c.events).sum();
    let amount_sum: f64 = counts.iter().map(|c| c.amount_sum).sum();
    let amount_samples: usize = counts.iter().map(|c| c.amount_samples).sum();
    Some(ClusterSummary {
        cluster,
        patients: counts.len(),
        total_events,
        mean_events: total_events as f64 / counts.len() as f64,
        mean_amount: (amount_samples > 0).then(|| amount_sum / amount_samples as f64),
        per_patient: counts.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{parse, Trace};

    fn chunk(patient: &str, index: usize, smbg: Vec<f64>) -> Chunk {
        let trace = Trace::from_channels([("smbg", smbg)]).unwrap();
        Chunk { patient_id: patient.into(), index, start: trace.start(), trace, valid: true }
    }

    #[test]
    fn counts_satisfying_chunks() {
        let mut a = vec![0.0; 12];
        a[3] = 150.0;
        let mut b = vec![0.0; 12];
        b[10] = 90.0;
        let chunks = vec![chunk("p1", 0, a), chunk("p1", 1, vec![0.0; 12]), chunk("p1", 2, b)];
        let rule = parse("F[0,60](smbg >= 1)").unwrap();
        let counts = count_events(&chunks, &rule, "smbg").unwrap();
        assert_eq!(counts.len(), 1);
        assert_eq!((counts[0].chunks, counts[0].events), (3, 2));
        assert_eq!(counts[0].mean_amount(), Some(120.0));
    }

    #[test]
    fn invalid_chunks_are_skipped_and_empty_clusters_omitted() {
        let mut c = chunk("p1", 0, vec![5.0; 12]);
        c.valid = false;
        let rule = parse("F[0,60](smbg >= 1)").unwrap();
        assert!(count_events(&[c], &rule, "smbg").unwrap().is_empty());
        assert!(summarize_cluster(1, &[]).is_none());
    }

    #[test]
    fn cluster_means_average_patients() {
        let p = |id: &str, events| PatientEvents { patient_id: id.into(), chunks: 10, events, ..Default::default() };
        let s = summarize_cluster(2, &[p("a", 2), p("b", 5)]).unwrap();
        assert_eq!((s.patients, s.total_events, s.mean_events), (2, 7, 3.5));
        assert_eq!(s.mean_amount, None);
    }
}
