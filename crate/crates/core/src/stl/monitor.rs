//! Offline monitor computing Boolean satisfaction and robustness over every
//! grid point of a trace.
//!
//! Samples are held constant between grid points and formulas are only
//! evaluated at grid points. A temporal window `[t+lo, t+hi]` covers the grid
//! points inside it, clipped to the end of the trace; an empty window makes
//! `G` vacuously true (robustness `+inf`) and `F`/`U` false (`-inf`).

use thiserror::Error;

use super::ast::{Formula, Interval};
use super::trace::Trace;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("time {0} is not a grid point of the trace")]
    TimeOutsideTrace(f64),
    #[error("formula is not ground: `{0}`")]
    NotGround(String),
    #[error("interval [{lo}, {hi}] is malformed")]
    BadInterval { lo: f64, hi: f64 },
}

/// Grid-index offsets `(first, last)` covered by an interval; `last` is
/// `usize::MAX` for an unbounded window.
fn window_offsets(interval: &Interval, step: f64) -> Result<(usize, usize), EvalError> {
    let (lo, hi) = interval
        .bounds()
        .ok_or_else(|| EvalError::NotGround("interval with parameters".into()))?;
    if !(lo >= 0.0 && lo <= hi) {
        return Err(EvalError::BadInterval { lo, hi });
    }
    const EPS: f64 = 1e-9;
    let first = (lo / step - EPS).ceil().max(0.0) as usize;
    let last = if hi.is_infinite() {
        usize::MAX
    } else {
        (hi / step + EPS).floor() as usize
    };
    Ok((first, last))
}

/// Clipped window `[i + first, i + last] ∩ [0, n)`, or `None` if empty.
fn window(i: usize, (first, last): (usize, usize), n: usize) -> Option<(usize, usize)> {
    let a = i.checked_add(first)?;
    if a >= n || first > last {
        return None;
    }
    let b = i.saturating_add(last).min(n - 1);
    Some((a, b))
}

fn channel<'a>(trace: &'a Trace, name: &str) -> Result<&'a [f64], EvalError> {
    trace
        .channel(name)
        .ok_or_else(|| EvalError::UnknownVariable(name.to_string()))
}

/// Robustness of `formula` at every grid point.
pub fn robustness_signal(formula: &Formula, trace: &Trace) -> Result<Vec<f64>, EvalError> {
    rob(&formula.normalized(), trace)
}

fn rob(f: &Formula, trace: &Trace) -> Result<Vec<f64>, EvalError> {
    let n = trace.len();
    Ok(match f {
        Formula::Predicate { variable, cmp, threshold } => {
            let c = threshold
                .as_const()
                .ok_or_else(|| EvalError::NotGround(f.to_string()))?;
            channel(trace, variable.as_str())?
                .iter()
                .map(|&x| cmp.margin(x, c))
                .collect()
        }
        Formula::Not(c) => rob(c, trace)?.into_iter().map(|v| -v).collect(),
        Formula::And(l, r) => {
            let (l, r) = (rob(l, trace)?, rob(r, trace)?);
            l.into_iter().zip(r).map(|(a, b)| a.min(b)).collect()
        }
        Formula::Or(l, r) => {
            let (l, r) = (rob(l, trace)?, rob(r, trace)?);
            l.into_iter().zip(r).map(|(a, b)| a.max(b)).collect()
        }
        Formula::Always(interval, c) => {
            let offsets = window_offsets(interval, trace.step())?;
            let inner = rob(c, trace)?;
            (0..n)
                .map(|i| match window(i, offsets, n) {
                    Some((a, b)) => inner[a..=b].iter().copied().fold(f64::INFINITY, f64::min),
                    None => f64::INFINITY,
                })
                .collect()
        }
        Formula::Eventually(interval, c) => {
            let offsets = window_offsets(interval, trace.step())?;
            let inner = rob(c, trace)?;
            (0..n)
                .map(|i| match window(i, offsets, n) {
                    Some((a, b)) => inner[a..=b].iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    None => f64::NEG_INFINITY,
                })
                .collect()
        }
        Formula::Until(interval, l, r) => {
            let offsets = window_offsets(interval, trace.step())?;
            let (left, right) = (rob(l, trace)?, rob(r, trace)?);
            (0..n)
                .map(|i| {
                    let Some((a, b)) = window(i, offsets, n) else {
                        return f64::NEG_INFINITY;
                    };
                    // running minimum of the left operand over [i, j)
                    let mut hold = left[i..a].iter().copied().fold(f64::INFINITY, f64::min);
                    let mut best = f64::NEG_INFINITY;
                    for j in a..=b {
                        best = best.max(right[j].min(hold));
                        hold = hold.min(left[j]);
                    }
                    best
                })
                .collect()
        }
    })
}

/// Boolean satisfaction of `formula` at every grid point.
pub fn satisfaction_signal(formula: &Formula, trace: &Trace) -> Result<Vec<bool>, EvalError> {
    sat(&formula.normalized(), trace)
}

fn sat(f: &Formula, trace: &Trace) -> Result<Vec<bool>, EvalError> {
    let n = trace.len();
    Ok(match f {
        Formula::Predicate { variable, cmp, threshold } => {
            let c = threshold
                .as_const()
                .ok_or_else(|| EvalError::NotGround(f.to_string()))?;
            channel(trace, variable.as_str())?
                .iter()
                .map(|&x| cmp.holds(x, c))
                .collect()
        }
        Formula::Not(c) => sat(c, trace)?.into_iter().map(|v| !v).collect(),
        Formula::And(l, r) => {
            let (l, r) = (sat(l, trace)?, sat(r, trace)?);
            l.into_iter().zip(r).map(|(a, b)| a && b).collect()
        }
        Formula::Or(l, r) => {
            let (l, r) = (sat(l, trace)?, sat(r, trace)?);
            l.into_iter().zip(r).map(|(a, b)| a || b).collect()
        }
        Formula::Always(interval, c) => {
            let offsets = window_offsets(interval, trace.step())?;
            let inner = sat(c, trace)?;
            (0..n)
                .map(|i| window(i, offsets, n).is_none_or(|(a, b)| inner[a..=b].iter().all(|&v| v)))
                .collect()
        }
        Formula::Eventually(interval, c) => {
            let offsets = window_offsets(interval, trace.step())?;
            let inner = sat(c, trace)?;
            (0..n)
                .map(|i| window(i, offsets, n).is_some_and(|(a, b)| inner[a..=b].iter().any(|&v| v)))
                .collect()
        }
        Formula::Until(interval, l, r) => {
            let offsets = window_offsets(interval, trace.step())?;
            let (left, right) = (sat(l, trace)?, sat(r, trace)?);
            (0..n)
                .map(|i| {
                    let Some((a, b)) = window(i, offsets, n) else {
                        return false;
                    };
                    let mut hold = left[i..a].iter().all(|&v| v);
                    for j in a..=b {
                        if hold && right[j] {
                            return true;
                        }
                        hold &= left[j];
                        if !hold {
                            return false;
                        }
                    }
                    false
                })
                .collect()
        }
    })
}

/// Boolean satisfaction at time offset `t` (minutes).
pub fn eval_bool(formula: &Formula, trace: &Trace, t: f64) -> Result<bool, EvalError> {
    let i = trace.index_of(t).ok_or(EvalError::TimeOutsideTrace(t))?;
    Ok(satisfaction_signal(formula, trace)?[i])
}

/// Robustness at time offset `t` (minutes).
pub fn robustness(formula: &Formula, trace: &Trace, t: f64) -> Result<f64, EvalError> {
    let i = trace.index_of(t).ok_or(EvalError::TimeOutsideTrace(t))?;
    Ok(robustness_signal(formula, trace)?[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::parse;

    fn cgm(values: Vec<f64>) -> Trace {
        Trace::from_channels([("cgm", values)]).unwrap()
    }

    #[test]
    fn constant_band_hand_checks() {
        let f = parse("G[0,60](cgm >= 70 & cgm <= 180)").unwrap();
        assert_eq!(robustness(&f, &cgm(vec![100.0; 12]), 0.0).unwrap(), 30.0);
        assert!(eval_bool(&f, &cgm(vec![100.0; 12]), 0.0).unwrap());
        assert_eq!(robustness(&f, &cgm(vec![60.0; 12]), 0.0).unwrap(), -10.0);

        let mut spike = vec![100.0; 12];
        spike[7] = 190.0;
        assert!(!eval_bool(&f, &cgm(spike.clone()), 0.0).unwrap());
        assert_eq!(robustness(&f, &cgm(spike), 0.0).unwrap(), -10.0);
    }

    #[test]
    fn windows_clip_to_horizon() {
        let tr = cgm((0..12).map(|i| i as f64).collect());
        let g = parse("G[50,100](cgm >= 10)").unwrap();
        // covers samples 10 and 11 only
        assert_eq!(robustness(&g, &tr, 0.0).unwrap(), 0.0);
        let past_end = parse("G[60,100](cgm >= 1000)").unwrap();
        assert!(eval_bool(&past_end, &tr, 0.0).unwrap());
        assert_eq!(robustness(&past_end, &tr, 0.0).unwrap(), f64::INFINITY);
        let f_past = parse("F[60,100](cgm >= 0)").unwrap();
        assert!(!eval_bool(&f_past, &tr, 0.0).unwrap());
        assert_eq!(robustness(&f_past, &tr, 0.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn fractional_interval_endpoints_round_inward() {
        let tr = cgm((0..12).map(|i| i as f64).collect());
        // [7, 13] minutes contains only the grid point 10 (sample 2)
        let f = parse("F[7,13](cgm >= 0)").unwrap();
        assert_eq!(robustness(&f, &tr, 0.0).unwrap(), 2.0);
        let g = parse("G[7,13](cgm >= 0)").unwrap();
        assert_eq!(robustness(&g, &tr, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn until_excludes_the_witness_from_the_hold_condition() {
        let tr = Trace::from_channels([
            ("a", vec![1.0, 1.0, 0.0, 0.0]),
            ("b", vec![0.0, 0.0, 1.0, 0.0]),
        ])
        .unwrap();
        let f = parse("a > 0.5 U[0,15] b > 0.5").unwrap();
        assert!(eval_bool(&f, &tr, 0.0).unwrap());
        assert_eq!(robustness(&f, &tr, 0.0).unwrap(), 0.5);
        // the witness must fall in the window
        let late = parse("a > 0.5 U[15,15] b > 0.5").unwrap();
        assert!(!eval_bool(&late, &tr, 0.0).unwrap());
        // a must hold from t, not only from the window start
        let tr2 = Trace::from_channels([
            ("a", vec![0.0, 1.0, 1.0, 0.0]),
            ("b", vec![0.0, 0.0, 1.0, 0.0]),
        ])
        .unwrap();
        assert!(!eval_bool(&late, &tr2, 0.0).unwrap());
        assert!(robustness(&late, &tr2, 0.0).unwrap() < 0.0);
    }

    #[test]
    fn evaluation_errors() {
        let tr = cgm(vec![100.0; 12]);
        let f = parse("G[0,60](hr >= 70)").unwrap();
        assert_eq!(
            eval_bool(&f, &tr, 0.0).unwrap_err(),
            EvalError::UnknownVariable("hr".into())
        );
        let g = parse("cgm >= 70").unwrap();
        assert_eq!(robustness(&g, &tr, 60.0).unwrap_err(), EvalError::TimeOutsideTrace(60.0));
        assert_eq!(robustness(&g, &tr, 3.0).unwrap_err(), EvalError::TimeOutsideTrace(3.0));
        let p = parse("cgm >= ?a{0,1}").unwrap();
        assert!(matches!(robustness(&p, &tr, 0.0), Err(EvalError::NotGround(_))));
    }

    #[test]
    fn strict_and_non_strict_differ_only_in_boolean_ties() {
        let tr = cgm(vec![70.0; 3]);
        let ge = parse("cgm >= 70").unwrap();
        let gt = parse("cgm > 70").unwrap();
        assert!(eval_bool(&ge, &tr, 0.0).unwrap());
        assert!(!eval_bool(&gt, &tr, 0.0).unwrap());
        assert_eq!(robustness(&ge, &tr, 0.0).unwrap(), robustness(&gt, &tr, 0.0).unwrap());
    }
}
