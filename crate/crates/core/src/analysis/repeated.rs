use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::learner::CandidateRecord;
use crate::stl::{parse, Formula, Interval, Param, Value};

/// One learned rule attributed to a patient.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRule {
    pub patient_id: String,
    pub task: String,
    /// Ground formula.
    pub formula: Formula,
    pub accuracy: f64,
}

impl PatientRule {
    pub fn from_record(record: &CandidateRecord) -> Result<Self, AnalysisError> {
        let patient_id = record.patient_id.clone().ok_or_else(|| AnalysisError::MissingPatient(record.formula.clone()))?;
        Ok(Self {
            patient_id,
            task: record.task.clone(),
            formula: parse(&record.formula)?,
            accuracy: record.accuracy,
        })
    }
}

fn flatten_and<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) {
    match f {
        Formula::And(l, r) => {
            flatten_and(l, out);
            flatten_and(r, out);
        }
        other => out.push(other),
    }
}

/// Reorders conjunctions so operands appear in signature order; `a & b` and
/// `b & a` end up identical.
fn canonical(f: &Formula) -> Formula {
    match f {
        Formula::Predicate { .. } => f.clone(),
        Formula::Not(c) => Formula::not(canonical(c)),
        Formula::And(..) => {
            let mut parts = Vec::new();
            flatten_and(f, &mut parts);
            let mut parts: Vec<(String, Formula)> = parts
                .into_iter()
                .map(|p| {
                    let c = canonical(p);
                    // `>=` sorts before `<=`, so band lower bounds come first
                    let key = abstract_text(&c)
                        .chars()
                        .map(|ch| match ch {
                            '<' => '>',
                            '>' => '<',
                            other => other,
                        })
                        .collect::<String>();
                    (key, c)
                })
                .collect();
            parts.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.to_string().cmp(&b.1.to_string())));
            let mut iter = parts.into_iter().map(|(_, c)| c);
            let first = iter.next().expect("a conjunction has operands");
            iter.fold(first, Formula::and)
        }
        Formula::Or(l, r) => Formula::or(canonical(l), canonical(r)),
        Formula::Always(i, c) => Formula::always(i.clone(), canonical(c)),
        Formula::Eventually(i, c) => Formula::eventually(i.clone(), canonical(c)),
        Formula::Until(i, l, r) => Formula::until(i.clone(), canonical(l), canonical(r)),
    }
}

/// Renders with every threshold and interval endpoint replaced by a
/// placeholder.
fn abstract_text(f: &Formula) -> String {
    let mut g = f.clone();
    let mut t = 0;
    let mut x = 0;
    g.visit_mut(&mut |node| {
        if let Some(i) = node.interval_mut() {
            for end in [&mut i.lo, &mut i.hi] {
                t += 1;
                *end = Value::Param(Param::new(format!("t{t}"), 0.0, 0.0));
            }
        }
        if let Formula::Predicate { threshold, .. } = node {
            x += 1;
            *threshold = Value::Param(Param::new(format!("x{x}"), 0.0, 0.0));
        }
    });
    // placeholders render as `?name{0,0}`; drop the empty ranges
    g.to_string().replace("{0,0}", "")
}

fn slot_values(f: &Formula) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let (mut t, mut x) = (0, 0);
    let value = |v: &Value| v.as_const().unwrap_or(f64::NAN);
    f.visit(&mut |node| {
        if let Some(Interval { lo, hi }) = node.interval() {
            for end in [lo, hi] {
                t += 1;
                out.push((format!("t{t}"), value(end)));
            }
        }
        if let Formula::Predicate { threshold, .. } = node {
            x += 1;
            out.push((format!("x{x}"), value(threshold)));
        }
    });
    out
}

/// Structure shared by a group of rules: variables, comparators and
/// operators, with thresholds and time bounds abstracted and conjunctions
/// ordered canonically.
pub fn signature(f: &Formula) -> String {
    abstract_text(&canonical(f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleRow {
    pub patient_id: String,
    pub task: String,
    /// One value per slot of the group, in slot order.
    pub values: Vec<f64>,
    pub accuracy: f64,
}

/// Rules sharing one signature, with each patient's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedRuleGroup {
    pub signature: String,
    /// Placeholder names in the signature: `x1, x2, ...` for thresholds and
    /// `t1, t2, ...` for interval endpoints.
    pub slots: Vec<String>,
    pub rows: Vec<RuleRow>,
}

impl RepeatedRuleGroup {
    pub fn patients(&self) -> usize {
        let mut ids: Vec<&str> = self.rows.iter().map(|r| r.patient_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    pub fn column(&self, slot: &str) -> Option<Vec<f64>> {
        let k = self.slots.iter().position(|s| s == slot)?;
        Some(self.rows.iter().map(|r| r.values[k]).collect())
    }
}

/// Partitions rules by signature. Groups are ordered by descending patient
/// count, then signature; rows by patient id, then task.
pub fn group_repeated_rules(rules: &[PatientRule]) -> Vec<RepeatedRuleGroup> {
    let mut groups: BTreeMap<String, RepeatedRuleGroup> = BTreeMap::new();
    for rule in rules {
        let canon = canonical(&rule.formula);
        let sig = abstract_text(&canon);
        let slots = slot_values(&canon);
        let group = groups.entry(sig.clone()).or_insert_with(|| RepeatedRuleGroup {
            signature: sig,
            slots: slots.iter().map(|(n, _)| n.clone()).collect(),
            rows: Vec::new(),
        });
        group.rows.push(RuleRow {
            patient_id: rule.patient_id.clone(),
            task: rule.task.clone(),
            values: slots.into_iter().map(|(_, v)| v).collect(),
            accuracy: rule.accuracy,
        });
    }
    let mut out: Vec<RepeatedRuleGroup> = groups.into_values().collect();
    for g in &mut out {
        g.rows.sort_by(|a, b| {
            a.patient_id.cmp(&b.patient_id).then_with(|| a.task.cmp(&b.task)).then(b.accuracy.total_cmp(&a.accuracy))
        });
    }
    out.sort_by(|a, b| b.patients().cmp(&a.patients()).then_with(|| a.signature.cmp(&b.signature)));
    out
}

/// Long-format bounds table: one line per group, patient and slot.
pub fn write_bounds_csv(groups: &[RepeatedRuleGroup], out: impl Write) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["signature", "patient_id", "task", "slot", "value", "accuracy"])?;
    for g in groups {
        for row in &g.rows {
            for (slot, value) in g.slots.iter().zip(&row.values) {
                w.write_record([
                    g.signature.as_str(),
                    row.patient_id.as_str(),
                    row.task.as_str(),
                    slot.as_str(),
                    &value.to_string(),
                    &row.accuracy.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| AnalysisError::Io(e.to_string()))?;
    Ok(())
}
