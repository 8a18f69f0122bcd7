use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::labeling::TirClass;
use crate::stl::{Comparator, Formula};

/// Default step between a bad-class threshold and the derived bound, in
/// bolus units.
pub const DEFAULT_QUANTUM: f64 = 0.001;

/// A learned rule used as range evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeRule {
    pub id: String,
    pub class: TirClass,
    pub formula: Formula,
    pub mcr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeRow {
    /// Threshold of the condition-variable predicate, e.g. activity level 4.
    pub level: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Ids of the rules that mention this level.
    pub sources: Vec<String>,
    pub mcr_good: Option<f64>,
    pub mcr_bad: Option<f64>,
    /// Set when the evidence puts the lower bound above the upper bound.
    pub conflict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeTable {
    pub variable: String,
    pub condition_variable: String,
    pub quantum: f64,
    /// Ordered by descending level.
    pub rows: Vec<RangeRow>,
}

fn snap(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

fn predicates(f: &Formula, variable: &str) -> Vec<(Comparator, f64)> {
    f.predicates()
        .into_iter()
        .filter(|(v, _, _)| v.as_str() == variable)
        .filter_map(|(_, cmp, t)| t.as_const().map(|c| (cmp, c)))
        .collect()
}

fn is_upper(cmp: Comparator) -> bool {
    matches!(cmp, Comparator::Le | Comparator::Lt)
}

#[derive(Default)]
struct Evidence {
    good_lower: Option<f64>,
    good_upper: Option<f64>,
    bad_lower: Option<f64>,
    bad_upper: Option<f64>,
    sources: Vec<String>,
    mcr_good: Option<f64>,
    mcr_bad: Option<f64>,
}

fn keep_max(slot: &mut Option<f64>, v: f64) {
    *slot = Some(slot.map_or(v, |s| s.max(v)));
}

fn keep_min(slot: &mut Option<f64>, v: f64) {
    *slot = Some(slot.map_or(v, |s| s.min(v)));
}

/// Safe ranges of `variable` per level of `condition_variable`.
///
/// For each level, a good-class `variable <= c` rule gives upper bound `c`
/// and a good-class `>= c` rule lower bound `c`. A bad-class `<= c` rule
/// marks values up to `c` as bad, giving lower bound `c + quantum`; a
/// bad-class `>= c` rule gives upper bound `c - quantum`. Bad-class evidence
/// wins over good-class evidence for the same bound. A level without a lower
/// bound takes the next higher level's upper bound plus one quantum. Levels
/// without rules are omitted; a row whose lower bound exceeds its upper
/// bound is kept and marked as a conflict.
pub fn derive_ranges(
    good_rules: &[RangeRule],
    bad_rules: &[RangeRule],
    variable: &str,
    condition_variable: &str,
    quantum: f64,
) -> Result<RangeTable, AnalysisError> {
    if !(quantum > 0.0 && quantum.is_finite()) {
        return Err(AnalysisError::InvalidQuantum(quantum));
    }
    let mut levels: Vec<(f64, Evidence)> = Vec::new();
    for (rules, good) in [(good_rules, true), (bad_rules, false)] {
        for rule in rules {
            if rule.class.is_good() != good {
                return Err(AnalysisError::WrongClass {
                    id: rule.id.clone(),
                    class: rule.class,
                    expected: if good { "good" } else { "bad" },
                });
            }
            let bounds = predicates(&rule.formula, variable);
            if bounds.is_empty() {
                return Err(AnalysisError::MissingVariable { id: rule.id.clone(), variable: variable.into() });
            }
            let level = predicates(&rule.formula, condition_variable)
                .first()
                .map(|&(_, c)| c)
                .ok_or_else(|| AnalysisError::MissingVariable {
                    id: rule.id.clone(),
                    variable: condition_variable.into(),
                })?;
            let at = match levels.iter().position(|(l, _)| *l == level) {
                Some(at) => at,
                None => {
                    levels.push((level, Evidence::default()));
                    levels.len() - 1
                }
            };
            let ev = &mut levels[at].1;
            ev.sources.push(rule.id.clone());
            for (cmp, c) in bounds {
                match (good, is_upper(cmp)) {
                    (true, true) => keep_min(&mut ev.good_upper, c),
                    (true, false) => keep_max(&mut ev.good_lower, c),
                    (false, true) => keep_max(&mut ev.bad_lower, snap(c + quantum)),
                    (false, false) => keep_min(&mut ev.bad_upper, snap(c - quantum)),
                }
            }
            if good {
                keep_min(&mut ev.mcr_good, rule.mcr);
            } else {
                keep_min(&mut ev.mcr_bad, rule.mcr);
            }
        }
    }

    levels.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut rows: Vec<RangeRow> = Vec::with_capacity(levels.len());
    for (level, ev) in levels {
        let upper = ev.bad_upper.or(ev.good_upper);
        let lower = ev
            .bad_lower
            .or(ev.good_lower)
            .or_else(|| rows.last().and_then(|prev| prev.upper).map(|u| snap(u + quantum)));
        let conflict = matches!((lower, upper), (Some(l), Some(u)) if l > u);
        rows.push(RangeRow {
            level,
            lower,
            upper,
            sources: ev.sources,
            mcr_good: ev.mcr_good,
            mcr_bad: ev.mcr_bad,
            conflict,
        });
    }
    Ok(RangeTable { variable: variable.into(), condition_variable: condition_variable.into(), quantum, rows })
}
