//! Abstract syntax for (parametric) Signal Temporal Logic formulas.
//!
//! A single tree type covers both ground and parametric formulas: thresholds
//! and interval endpoints are [`Value`]s that are either constants or named
//! parameter placeholders with a finite search range. A formula with no
//! placeholders is *ground* and can be evaluated by the monitor.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of a signal channel, e.g. `cgm` or `basalBolus`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct VariableId(String);

impl VariableId {
    /// Validates `[a-zA-Z][a-zA-Z0-9_]*`.
    pub fn new(name: impl Into<String>) -> Result<Self, InvalidVariable> {
        let name = name.into();
        let mut chars = name.chars();
        let valid = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
        if valid {
            Ok(Self(name))
        } else {
            Err(InvalidVariable(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for VariableId {
    type Error = InvalidVariable;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<VariableId> for String {
    fn from(value: VariableId) -> Self {
        value.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid variable name `{0}`")]
pub struct InvalidVariable(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Comparator {
    Ge,
    Le,
    Gt,
    Lt,
}

impl Comparator {
    pub const ALL: [Comparator; 4] = [Comparator::Ge, Comparator::Le, Comparator::Gt, Comparator::Lt];

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Ge => ">=",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Lt => "<",
        }
    }

    /// Boolean satisfaction of `value cmp threshold`.
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Ge => value >= threshold,
            Comparator::Le => value <= threshold,
            Comparator::Gt => value > threshold,
            Comparator::Lt => value < threshold,
        }
    }

    /// Signed distance to the threshold; strictness is ignored.
    pub fn margin(self, value: f64, threshold: f64) -> f64 {
        match self {
            Comparator::Ge | Comparator::Gt => value - threshold,
            Comparator::Le | Comparator::Lt => threshold - value,
        }
    }

    /// Reverses the direction, keeping strictness.
    pub fn flipped(self) -> Self {
        match self {
            Comparator::Ge => Comparator::Le,
            Comparator::Le => Comparator::Ge,
            Comparator::Gt => Comparator::Lt,
            Comparator::Lt => Comparator::Gt,
        }
    }

    /// True for `>=` and `>`.
    pub fn is_lower_bound(self) -> bool {
        matches!(self, Comparator::Ge | Comparator::Gt)
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// A named placeholder with its search range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl Param {
    pub fn new(name: impl Into<String>, min: f64, max: f64) -> Self {
        Self { name: name.into(), min, max }
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Const(f64),
    Param(Param),
}

impl Value {
    pub fn as_const(&self) -> Option<f64> {
        match self {
            Value::Const(v) => Some(*v),
            Value::Param(_) => None,
        }
    }

    pub fn as_param(&self) -> Option<&Param> {
        match self {
            Value::Param(p) => Some(p),
            Value::Const(_) => None,
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Const(v)
    }
}

/// Time window `[lo, hi]` in minutes relative to the evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub lo: Value,
    pub hi: Value,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo: Value::Const(lo), hi: Value::Const(hi) }
    }

    /// `[0, +inf)`, the meaning of an omitted interval.
    pub fn unbounded() -> Self {
        Self::new(0.0, f64::INFINITY)
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        Some((self.lo.as_const()?, self.hi.as_const()?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Predicate { variable: VariableId, cmp: Comparator, threshold: Value },
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Always(Interval, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

/// What a parameter stands for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    Threshold { variable: VariableId },
    TimeOffset,
}

/// A parameter occurrence as seen from outside the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub min: f64,
    pub max: f64,
}

impl ParamSpec {
    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }
}

/// Parameter name to value.
pub type Assignment = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstantiateError {
    #[error("missing value for parameter `{0}`")]
    MissingParameter(String),
    #[error("value {value} for parameter `{name}` is outside its range [{min}, {max}]")]
    OutOfRange { name: String, value: f64, min: f64, max: f64 },
    #[error("interval [{lo}, {hi}] is inverted after substitution")]
    IntervalInverted { lo: f64, hi: f64 },
}

impl Formula {
    pub fn predicate(variable: &str, cmp: Comparator, threshold: impl Into<Value>) -> Self {
        Formula::Predicate {
            variable: VariableId::new(variable).expect("valid variable name"),
            cmp,
            threshold: threshold.into(),
        }
    }

    pub fn not(child: Formula) -> Self {
        Formula::Not(Box::new(child))
    }

    pub fn and(left: Formula, right: Formula) -> Self {
        Formula::And(Box::new(left), Box::new(right))
    }

    pub fn or(left: Formula, right: Formula) -> Self {
        Formula::Or(Box::new(left), Box::new(right))
    }

    pub fn always(interval: Interval, child: Formula) -> Self {
        Formula::Always(interval, Box::new(child))
    }

    pub fn eventually(interval: Interval, child: Formula) -> Self {
        Formula::Eventually(interval, Box::new(child))
    }

    pub fn until(interval: Interval, left: Formula, right: Formula) -> Self {
        Formula::Until(interval, Box::new(left), Box::new(right))
    }

    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::Predicate { .. } => vec![],
            Formula::Not(c) | Formula::Always(_, c) | Formula::Eventually(_, c) => vec![c],
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Until(_, l, r) => vec![l, r],
        }
    }

    fn children_mut(&mut self) -> Vec<&mut Formula> {
        match self {
            Formula::Predicate { .. } => vec![],
            Formula::Not(c) | Formula::Always(_, c) | Formula::Eventually(_, c) => vec![c],
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Until(_, l, r) => vec![l, r],
        }
    }

    pub fn interval(&self) -> Option<&Interval> {
        match self {
            Formula::Always(i, _) | Formula::Eventually(i, _) | Formula::Until(i, _, _) => Some(i),
            _ => None,
        }
    }

    pub fn interval_mut(&mut self) -> Option<&mut Interval> {
        match self {
            Formula::Always(i, _) | Formula::Eventually(i, _) | Formula::Until(i, _, _) => Some(i),
            _ => None,
        }
    }

    /// Height of the tree; a lone predicate has depth 1.
    pub fn depth(&self) -> usize {
        1 + self.children().into_iter().map(Formula::depth).max().unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().into_iter().map(Formula::node_count).sum::<usize>()
    }

    /// Node at pre-order position `index` (the root is 0).
    pub fn node(&self, index: usize) -> Option<&Formula> {
        let mut remaining = index;
        self.node_inner(&mut remaining)
    }

    fn node_inner(&self, remaining: &mut usize) -> Option<&Formula> {
        if *remaining == 0 {
            return Some(self);
        }
        *remaining -= 1;
        for child in self.children() {
            if let Some(found) = child.node_inner(remaining) {
                return Some(found);
            }
        }
        None
    }

    pub fn node_mut(&mut self, index: usize) -> Option<&mut Formula> {
        let mut remaining = index;
        self.node_mut_inner(&mut remaining)
    }

    fn node_mut_inner(&mut self, remaining: &mut usize) -> Option<&mut Formula> {
        if *remaining == 0 {
            return Some(self);
        }
        *remaining -= 1;
        for child in self.children_mut() {
            if let Some(found) = child.node_mut_inner(remaining) {
                return Some(found);
            }
        }
        None
    }

    /// Distance from the root to the node at pre-order `index` (root = 0).
    pub fn node_level(&self, index: usize) -> Option<usize> {
        fn walk(f: &Formula, remaining: &mut usize, level: usize) -> Option<usize> {
            if *remaining == 0 {
                return Some(level);
            }
            *remaining -= 1;
            for child in f.children() {
                if let Some(found) = walk(child, remaining, level + 1) {
                    return Some(found);
                }
            }
            None
        }
        let mut remaining = index;
        walk(self, &mut remaining, 0)
    }

    /// Visits every node in pre-order.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Formula)) {
        f(self);
        for child in self.children() {
            child.visit(f);
        }
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut Formula)) {
        f(self);
        for child in self.children_mut() {
            child.visit_mut(f);
        }
    }

    /// Every `(variable, comparator, threshold)` predicate in pre-order.
    pub fn predicates(&self) -> Vec<(&VariableId, Comparator, &Value)> {
        let mut out = Vec::new();
        self.visit(&mut |node| {
            if let Formula::Predicate { variable, cmp, threshold } = node {
                out.push((variable, *cmp, threshold));
            }
        });
        out
    }

    pub fn variables(&self) -> Vec<&VariableId> {
        let mut out: Vec<&VariableId> = Vec::new();
        for (v, _, _) in self.predicates() {
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }

    /// Parameters in pre-order; interval endpoints come before the children
    /// of their temporal node.
    pub fn params(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        self.visit(&mut |node| match node {
            Formula::Predicate { variable, threshold: Value::Param(p), .. } => out.push(ParamSpec {
                name: p.name.clone(),
                kind: ParamKind::Threshold { variable: variable.clone() },
                min: p.min,
                max: p.max,
            }),
            Formula::Predicate { .. } => {}
            other => {
                if let Some(interval) = other.interval() {
                    for end in [&interval.lo, &interval.hi] {
                        if let Value::Param(p) = end {
                            out.push(ParamSpec {
                                name: p.name.clone(),
                                kind: ParamKind::TimeOffset,
                                min: p.min,
                                max: p.max,
                            });
                        }
                    }
                }
            }
        });
        out
    }

    pub fn is_ground(&self) -> bool {
        self.params().is_empty()
    }

    /// Applies `f` to every placeholder slot (thresholds and interval ends).
    pub fn for_each_value_mut(&mut self, f: &mut impl FnMut(&mut Value)) {
        self.visit_mut(&mut |node| match node {
            Formula::Predicate { threshold, .. } => f(threshold),
            other => {
                if let Some(interval) = other.interval_mut() {
                    f(&mut interval.lo);
                    f(&mut interval.hi);
                }
            }
        });
    }

    /// Substitutes every placeholder from `assignment`.
    pub fn instantiate(&self, assignment: &Assignment) -> Result<Formula, InstantiateError> {
        let mut out = self.clone();
        let mut failure = None;
        out.for_each_value_mut(&mut |value| {
            if failure.is_some() {
                return;
            }
            if let Value::Param(p) = value {
                match assignment.get(&p.name) {
                    None => failure = Some(InstantiateError::MissingParameter(p.name.clone())),
                    Some(&v) if !p.contains(v) => {
                        failure = Some(InstantiateError::OutOfRange {
                            name: p.name.clone(),
                            value: v,
                            min: p.min,
                            max: p.max,
                        })
                    }
                    Some(&v) => *value = Value::Const(v),
                }
            }
        });
        if let Some(err) = failure {
            return Err(err);
        }
        let mut inverted = None;
        out.visit(&mut |node| {
            if let Some((lo, hi)) = node.interval().and_then(Interval::bounds) {
                if lo > hi && inverted.is_none() {
                    inverted = Some(InstantiateError::IntervalInverted { lo, hi });
                }
            }
        });
        match inverted {
            Some(err) => Err(err),
            None => Ok(out),
        }
    }

    /// Rewrites `Or(a, b)` as `Not(And(Not a, Not b))` everywhere.
    pub fn normalized(&self) -> Formula {
        match self {
            Formula::Predicate { .. } => self.clone(),
            Formula::Not(c) => Formula::not(c.normalized()),
            Formula::And(l, r) => Formula::and(l.normalized(), r.normalized()),
            Formula::Or(l, r) => {
                Formula::not(Formula::and(Formula::not(l.normalized()), Formula::not(r.normalized())))
            }
            Formula::Always(i, c) => Formula::always(i.clone(), c.normalized()),
            Formula::Eventually(i, c) => Formula::eventually(i.clone(), c.normalized()),
            Formula::Until(i, l, r) => Formula::until(i.clone(), l.normalized(), r.normalized()),
        }
    }

    /// Replaces every constant threshold and finite interval endpoint with
    /// its value rounded to `decimals` places.
    pub fn rounded(&self, decimals: i32) -> Formula {
        let scale = 10f64.powi(decimals);
        let mut out = self.clone();
        out.for_each_value_mut(&mut |value| {
            if let Value::Const(v) = value {
                if v.is_finite() {
                    *v = (*v * scale).round() / scale;
                }
            }
        });
        out
    }
}

/// Shortest decimal text that parses back to the same `f64`.
pub(crate) fn format_number(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

fn write_value(f: &mut fmt::Formatter<'_>, value: &Value) -> fmt::Result {
    match value {
        Value::Const(v) => f.write_str(&format_number(*v)),
        Value::Param(p) => {
            write!(f, "?{}{{{},{}}}", p.name, format_number(p.min), format_number(p.max))
        }
    }
}

fn write_interval(f: &mut fmt::Formatter<'_>, interval: &Interval) -> fmt::Result {
    f.write_str("[")?;
    write_value(f, &interval.lo)?;
    f.write_str(",")?;
    write_value(f, &interval.hi)?;
    f.write_str("]")
}

/// Operand position: predicates stand alone, everything else is parenthesized.
struct Term<'a>(&'a Formula);

impl fmt::Display for Term<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Formula::Predicate { .. } => write!(f, "{}", self.0),
            other => write!(f, "({other})"),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Predicate { variable, cmp, threshold } => {
                write!(f, "{variable} {cmp} ")?;
                write_value(f, threshold)
            }
            Formula::Not(c) => write!(f, "!{}", Term(c)),
            Formula::And(l, r) => {
                // left-nested chains print flat and re-parse left-associatively
                match l.as_ref() {
                    Formula::And(..) => write!(f, "{l}")?,
                    _ => write!(f, "{}", Term(l))?,
                }
                write!(f, " & {}", Term(r))
            }
            Formula::Or(l, r) => {
                match l.as_ref() {
                    Formula::Or(..) => write!(f, "{l}")?,
                    _ => write!(f, "{}", Term(l))?,
                }
                write!(f, " | {}", Term(r))
            }
            Formula::Always(i, c) => {
                f.write_str("G")?;
                write_interval(f, i)?;
                write!(f, "({c})")
            }
            Formula::Eventually(i, c) => {
                f.write_str("F")?;
                write_interval(f, i)?;
                write!(f, "({c})")
            }
            Formula::Until(i, l, r) => {
                write!(f, "{} U", Term(l))?;
                write_interval(f, i)?;
                write!(f, " {}", Term(r))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band() -> Formula {
        Formula::always(
            Interval::new(0.0, 60.0),
            Formula::and(
                Formula::predicate("cgm", Comparator::Ge, Value::Param(Param::new("a", 0.0, 400.0))),
                Formula::predicate("cgm", Comparator::Le, Value::Param(Param::new("b", 0.0, 400.0))),
            ),
        )
    }

    #[test]
    fn variable_names_are_validated() {
        assert!(VariableId::new("basalBolus").is_ok());
        assert!(VariableId::new("x_1").is_ok());
        assert!(VariableId::new("").is_err());
        assert!(VariableId::new("1x").is_err());
        assert!(VariableId::new("a-b").is_err());
    }

    #[test]
    fn render_band_template() {
        assert_eq!(band().to_string(), "G[0,60](cgm >= ?a{0,400} & cgm <= ?b{0,400})");
    }

    #[test]
    fn depth_and_nodes() {
        let f = band();
        assert_eq!(f.depth(), 3);
        assert_eq!(f.node_count(), 4);
        assert!(matches!(f.node(1), Some(Formula::And(..))));
        assert_eq!(f.node_level(3), Some(2));
        assert!(f.node(4).is_none());
    }

    #[test]
    fn instantiate_band() {
        let assignment: Assignment = [("a".into(), 70.0), ("b".into(), 180.0)].into();
        let ground = band().instantiate(&assignment).unwrap();
        assert_eq!(ground.to_string(), "G[0,60](cgm >= 70 & cgm <= 180)");
        assert!(ground.is_ground());
    }

    #[test]
    fn instantiate_identity_on_ground() {
        let f = Formula::always(Interval::new(0.0, 60.0), Formula::predicate("cgm", Comparator::Ge, 70.0));
        assert_eq!(f.instantiate(&Assignment::new()).unwrap(), f);
    }

    #[test]
    fn instantiate_errors() {
        let only_a: Assignment = [("a".into(), 70.0)].into();
        assert_eq!(
            band().instantiate(&only_a),
            Err(InstantiateError::MissingParameter("b".into()))
        );
        let out_of_range: Assignment = [("a".into(), 500.0), ("b".into(), 10.0)].into();
        assert!(matches!(
            band().instantiate(&out_of_range),
            Err(InstantiateError::OutOfRange { .. })
        ));

        let timed = Formula::eventually(
            Interval {
                lo: Value::Param(Param::new("u", 0.0, 60.0)),
                hi: Value::Param(Param::new("v", 0.0, 60.0)),
            },
            Formula::predicate("meal", Comparator::Ge, 10.0),
        );
        let inverted: Assignment = [("u".into(), 40.0), ("v".into(), 10.0)].into();
        assert_eq!(
            timed.instantiate(&inverted),
            Err(InstantiateError::IntervalInverted { lo: 40.0, hi: 10.0 })
        );
    }

    #[test]
    fn params_report_kinds_in_order() {
        let f = Formula::eventually(
            Interval {
                lo: Value::Param(Param::new("u", 0.0, 60.0)),
                hi: Value::Param(Param::new("v", 0.0, 60.0)),
            },
            Formula::predicate("meal", Comparator::Le, Value::Param(Param::new("k", 0.0, 200.0))),
        );
        let names: Vec<_> = f.params().into_iter().map(|p| (p.name, p.kind)).collect();
        assert_eq!(
            names,
            vec![
                ("u".to_string(), ParamKind::TimeOffset),
                ("v".to_string(), ParamKind::TimeOffset),
                (
                    "k".to_string(),
                    ParamKind::Threshold { variable: VariableId::new("meal").unwrap() }
                ),
            ]
        );
    }

    #[test]
    fn or_normalizes_to_negated_conjunction() {
        let a = Formula::predicate("x", Comparator::Ge, 1.0);
        let b = Formula::predicate("y", Comparator::Lt, 2.0);
        let n = Formula::or(a.clone(), b.clone()).normalized();
        assert_eq!(n, Formula::not(Formula::and(Formula::not(a), Formula::not(b))));
    }

    #[test]
    fn rounding_touches_constants_only() {
        let f = Formula::always(
            Interval::new(0.0, f64::INFINITY),
            Formula::predicate("x", Comparator::Ge, 1.23456),
        );
        assert_eq!(f.rounded(3).to_string(), "G[0,inf](x >= 1.235)");
    }
}
