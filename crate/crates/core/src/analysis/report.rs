use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{ClusterSummary, RangeTable, RepeatedRuleGroup};

/// Best rule of one learning task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub task: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub patient_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cluster: Option<u8>,
    pub formula: String,
    pub accuracy: f64,
    pub mcr: f64,
}

/// Everything the analysis stage reports, in a stable order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub accuracy: Vec<AccuracyRow>,
    pub repeated_rules: Vec<RepeatedRuleGroup>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub ranges: Vec<RangeTable>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub events: Vec<EventTable>,
    /// Tasks that could not be learned, with the reason.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub skipped: Vec<String>,
    /// Inputs that failed to process, with the error.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub failures: Vec<String>,
}

/// Cluster summaries for one event rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTable {
    pub name: String,
    pub rule: String,
    pub clusters: Vec<ClusterSummary>,
}

fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

fn opt3(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), fmt3)
}

/// Left-aligned columns separated by two spaces, headed by a dashed rule.
fn table(out: &mut String, headers: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string()
    };
    let _ = writeln!(out, "{}", line(headers.to_vec()));
    let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    for row in rows {
        let _ = writeln!(out, "{}", line(row.iter().map(String::as_str).collect()));
    }
}

/// Human-readable rendering of a report as aligned text tables.
pub fn render_text(report: &AnalysisReport) -> String {
    let mut out = String::new();
    out.push_str("Accuracy per task\n\n");
    let rows: Vec<Vec<String>> = report
        .accuracy
        .iter()
        .map(|r| {
            let owner = match (&r.patient_id, r.cluster) {
                (Some(p), _) => p.clone(),
                (None, Some(c)) => format!("cluster {c}"),
                (None, None) => "-".into(),
            };
            vec![owner, r.task.clone(), fmt3(r.accuracy), fmt3(r.mcr), r.formula.clone()]
        })
        .collect();
    table(&mut out, &["owner", "task", "accuracy", "mcr", "formula"], &rows);

    for (title, lines) in [("Skipped", &report.skipped), ("Failures", &report.failures)] {
        if !lines.is_empty() {
            let _ = writeln!(out, "\n{title}\n");
            for line in lines {
                let _ = writeln!(out, "{line}");
            }
        }
    }

    if !report.repeated_rules.is_empty() {
        out.push_str("\nRepeated rules\n");
        for g in &report.repeated_rules {
            let _ = writeln!(out, "\n{}  ({} patients)\n", g.signature, g.patients());
            let mut headers = vec!["patient", "task"];
            headers.extend(g.slots.iter().map(String::as_str));
            headers.push("accuracy");
            let rows: Vec<Vec<String>> = g
                .rows
                .iter()
                .map(|r| {
                    let mut row = vec![r.patient_id.clone(), r.task.clone()];
                    row.extend(r.values.iter().map(|v| fmt3(*v)));
                    row.push(fmt3(r.accuracy));
                    row
                })
                .collect();
            table(&mut out, &headers, &rows);
        }
    }

    for t in &report.ranges {
        let _ = writeln!(out, "\nRanges of {} by {}\n", t.variable, t.condition_variable);
        let rows: Vec<Vec<String>> = t
            .rows
            .iter()
            .map(|r| {
                vec![
                    fmt3(r.level),
                    format!("{} - {}", opt3(r.lower), opt3(r.upper)),
                    opt3(r.mcr_good),
                    opt3(r.mcr_bad),
                    if r.conflict { "conflict".into() } else { String::new() },
                    r.sources.join(" "),
                ]
            })
            .collect();
        table(&mut out, &["level", "range", "mcr_good", "mcr_bad", "note", "sources"], &rows);
    }

    for e in &report.events {
        let _ = writeln!(out, "\nEvents by cluster: {} = {}\n", e.name, e.rule);
        let rows: Vec<Vec<String>> = e
            .clusters
            .iter()
            .map(|c| {
                vec![
                    c.cluster.to_string(),
                    c.patients.to_string(),
                    c.total_events.to_string(),
                    fmt3(c.mean_events),
                    opt3(c.mean_amount),
                ]
            })
            .collect();
        table(&mut out, &["cluster", "patients", "events", "mean_events", "mean_amount"], &rows);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_line_up() {
        let report = AnalysisReport {
            accuracy: vec![
                AccuracyRow {
                    task: "100".into(),
                    patient_id: Some("patient01".into()),
                    cluster: None,
                    formula: "G[0,60](cgm >= 70)".into(),
                    accuracy: 0.9,
                    mcr: 0.1,
                },
                AccuracyRow {
                    task: "<50".into(),
                    patient_id: None,
                    cluster: Some(2),
                    formula: "F[0,60](hr >= 120)".into(),
                    accuracy: 1.0,
                    mcr: 0.0,
                },
            ],
            ..AnalysisReport::default()
        };
        let text = render_text(&report);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[2], "owner      task  accuracy  mcr    formula");
        assert_eq!(lines[4], "patient01  100   0.900     0.100  G[0,60](cgm >= 70)");
        assert_eq!(lines[5], "cluster 2  <50   1.000     0.000  F[0,60](hr >= 120)");
    }
}
