//! Conversion between minute offsets and wall-clock interval notation.
//!
//! The monitor works in minutes from a trace's start; reports show windows as
//! `[HH:MM, HH:MM]` relative to an absolute start time.

use std::fmt::Write;

use chrono::{Duration, NaiveTime, Timelike};

use super::ast::{Formula, Interval, Value};
use super::parser::{parse, ParseError};

/// Minutes after midnight for `HH:MM`.
pub fn clock_to_minutes(text: &str) -> Option<f64> {
    let time = NaiveTime::parse_from_str(text.trim(), "%H:%M").ok()?;
    Some(f64::from(time.hour() * 60 + time.minute()))
}

/// `start + offset` formatted as `HH:MM` (wrapping past midnight).
pub fn minutes_to_clock(start: NaiveTime, offset: f64) -> String {
    let time = start + Duration::seconds((offset * 60.0).round() as i64);
    time.format("%H:%M").to_string()
}

/// Parses a formula whose interval endpoints may be wall-clock times, e.g.
/// `G[9:00,11:01](basalBolus ≤ 0.072)`; each `H:MM` becomes minutes after
/// midnight.
pub fn parse_with_clock(text: &str) -> Result<Formula, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        let digits = chars[i..].iter().take_while(|c| c.is_ascii_digit()).count();
        let after = i + digits;
        let is_clock = digits > 0
            && (i == 0 || !(chars[i - 1].is_ascii_alphanumeric() || chars[i - 1] == '.'))
            && chars.get(after) == Some(&':')
            && chars.len() >= after + 3
            && chars[after + 1..after + 3].iter().all(char::is_ascii_digit)
            && !chars.get(after + 3).is_some_and(char::is_ascii_digit);
        if is_clock {
            let clock: String = chars[i..after + 3].iter().collect();
            match clock_to_minutes(&clock) {
                Some(m) => out.push_str(&m.to_string()),
                None => out.push_str(&clock),
            }
            i = after + 3;
        } else if digits > 0 {
            out.extend(&chars[i..after]);
            i = after;
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    parse(&out)
}

fn clock_interval(out: &mut String, interval: &Interval, start: NaiveTime) {
    let end = |v: &Value| match v {
        Value::Const(m) if m.is_infinite() => "inf".to_string(),
        Value::Const(m) => minutes_to_clock(start, *m),
        Value::Param(p) => format!("?{}", p.name),
    };
    let _ = write!(out, "[{}, {}]", end(&interval.lo), end(&interval.hi));
}

/// Renders `formula` with intervals as clock times relative to `start`,
/// e.g. `F[18:01, 19:37](meal <= 65 & meal >= 10)`.
///
/// This is a display form only; it does not parse back.
pub fn render_with_clock(formula: &Formula, start: NaiveTime) -> String {
    fn term(f: &Formula, start: NaiveTime) -> String {
        match f {
            Formula::Predicate { .. } => render_with_clock(f, start),
            _ => format!("({})", render_with_clock(f, start)),
        }
    }
    let mut out = String::new();
    match formula {
        Formula::Predicate { .. } => out.push_str(&formula.to_string()),
        Formula::Not(c) => {
            out.push('!');
            out.push_str(&term(c, start));
        }
        Formula::And(l, r) | Formula::Or(l, r) => {
            let op = if matches!(formula, Formula::And(..)) { "&" } else { "|" };
            let _ = write!(out, "{} {op} {}", term(l, start), term(r, start));
        }
        Formula::Always(i, c) | Formula::Eventually(i, c) => {
            out.push(if matches!(formula, Formula::Always(..)) { 'G' } else { 'F' });
            clock_interval(&mut out, i, start);
            let _ = write!(out, "({})", render_with_clock(c, start));
        }
        Formula::Until(i, l, r) => {
            let _ = write!(out, "{} U", term(l, start));
            clock_interval(&mut out, i, start);
            let _ = write!(out, " {}", term(r, start));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::parse;

    #[test]
    fn clock_intervals_parse_as_minutes_after_midnight() {
        let f = parse_with_clock("G[9:00,11:01](basalBolus ≤ 0.072) U[9:10,11:01](activityLevel ≥ 4)").unwrap();
        assert_eq!(f, parse("G[540,661](basalBolus <= 0.072) U[550,661] activityLevel >= 4").unwrap());
        assert!(parse_with_clock("G[25:00,26:00](x >= 1)").is_err());
    }

    #[test]
    fn clock_round_trip() {
        assert_eq!(clock_to_minutes("18:01"), Some(1081.0));
        assert_eq!(clock_to_minutes("19:37"), Some(1177.0));
        assert_eq!(clock_to_minutes("25:00"), None);
        let midnight = NaiveTime::from_hms_opt(0, 0, 0).unwrap();
        assert_eq!(minutes_to_clock(midnight, 1081.0), "18:01");
        let nine = NaiveTime::from_hms_opt(9, 0, 0).unwrap();
        assert_eq!(minutes_to_clock(nine, 121.0), "11:01");
    }

    #[test]
    fn renders_meal_rule_with_clock_times() {
        let f = parse("F[1081,1177](meal <= 65 & meal >= 10)").unwrap();
        let midnight = NaiveTime::from_hms_opt(0, 0, 0).unwrap();
        assert_eq!(
            render_with_clock(&f, midnight),
            "F[18:01, 19:37](meal <= 65 & meal >= 10)"
        );
    }
}
