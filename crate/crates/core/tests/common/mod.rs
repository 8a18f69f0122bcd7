//! Test-only oracles and generators shared by the integration suites.
//!
//! The STL oracle below evaluates formulas by literal recursion over the
//! semantic definitions, enumerating every grid point for every temporal
//! operator. It shares no code with the library monitor.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stlmine::dataset::Chunk;
use stlmine::labeling::{Example, Label, LabeledDataset, Task};
use stlmine::stl::{Comparator, Formula, Interval, Trace, Value};

pub const FUZZ_VARS: [&str; 3] = ["x", "y", "z"];

fn threshold(value: &Value) -> f64 {
    value.as_const().expect("oracle needs ground formulas")
}

fn bounds(interval: &Interval) -> (f64, f64) {
    (threshold(&interval.lo), threshold(&interval.hi))
}

/// Grid indices `j` with `t_i + lo <= t_j <= t_i + hi`.
fn in_window(trace: &Trace, i: usize, interval: &Interval) -> Vec<usize> {
    let (lo, hi) = bounds(interval);
    let ti = i as f64 * trace.step();
    (0..trace.len())
        .filter(|&j| {
            let d = j as f64 * trace.step() - ti;
            d >= lo && d <= hi
        })
        .collect()
}

pub fn oracle_bool(f: &Formula, trace: &Trace, i: usize) -> bool {
    match f {
        Formula::Predicate { variable, cmp, threshold: c } => {
            let x = trace.channel(variable.as_str()).unwrap()[i];
            let c = threshold(c);
            match cmp {
                Comparator::Ge => x >= c,
                Comparator::Le => x <= c,
                Comparator::Gt => x > c,
                Comparator::Lt => x < c,
            }
        }
        Formula::Not(a) => !oracle_bool(a, trace, i),
        Formula::And(a, b) => oracle_bool(a, trace, i) && oracle_bool(b, trace, i),
        Formula::Or(a, b) => oracle_bool(a, trace, i) || oracle_bool(b, trace, i),
        Formula::Always(iv, a) => in_window(trace, i, iv).into_iter().all(|j| oracle_bool(a, trace, j)),
        Formula::Eventually(iv, a) => in_window(trace, i, iv).into_iter().any(|j| oracle_bool(a, trace, j)),
        Formula::Until(iv, a, b) => in_window(trace, i, iv)
            .into_iter()
            .any(|j| oracle_bool(b, trace, j) && (i..j).all(|k| oracle_bool(a, trace, k))),
    }
}

pub fn oracle_rob(f: &Formula, trace: &Trace, i: usize) -> f64 {
    match f {
        Formula::Predicate { variable, cmp, threshold: c } => {
            let x = trace.channel(variable.as_str()).unwrap()[i];
            let c = threshold(c);
            match cmp {
                Comparator::Ge | Comparator::Gt => x - c,
                Comparator::Le | Comparator::Lt => c - x,
            }
        }
        Formula::Not(a) => -oracle_rob(a, trace, i),
        Formula::And(a, b) => oracle_rob(a, trace, i).min(oracle_rob(b, trace, i)),
        Formula::Or(a, b) => oracle_rob(a, trace, i).max(oracle_rob(b, trace, i)),
        Formula::Always(iv, a) => in_window(trace, i, iv)
            .into_iter()
            .map(|j| oracle_rob(a, trace, j))
            .fold(f64::INFINITY, f64::min),
        Formula::Eventually(iv, a) => in_window(trace, i, iv)
            .into_iter()
            .map(|j| oracle_rob(a, trace, j))
            .fold(f64::NEG_INFINITY, f64::max),
        Formula::Until(iv, a, b) => in_window(trace, i, iv)
            .into_iter()
            .map(|j| {
                let hold = (i..j).map(|k| oracle_rob(a, trace, k)).fold(f64::INFINITY, f64::min);
                oracle_rob(b, trace, j).min(hold)
            })
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

fn random_interval(rng: &mut impl Rng) -> Interval {
    // multiples of 2.5 minutes so some endpoints fall between 5-minute samples
    let lo = f64::from(rng.random_range(0..=24u32)) * 2.5;
    if rng.random_bool(0.1) {
        return Interval::new(lo, f64::INFINITY);
    }
    let hi = lo + f64::from(rng.random_range(0..=24u32)) * 2.5;
    Interval::new(lo, hi)
}

/// Random ground formula with at most `max_nodes` nodes.
pub fn random_formula(rng: &mut impl Rng, max_nodes: usize) -> Formula {
    let max_nodes = max_nodes.max(1);
    if max_nodes < 2 || rng.random_bool(0.25) {
        let var = FUZZ_VARS[rng.random_range(0..FUZZ_VARS.len())];
        let cmp = Comparator::ALL[rng.random_range(0..4)];
        let c = f64::from(rng.random_range(-8..=8i32)) * 0.25;
        return Formula::predicate(var, cmp, c);
    }
    let budget = max_nodes - 1;
    match rng.random_range(0..6) {
        0 => Formula::not(random_formula(rng, budget)),
        1 | 2 | 5 if budget >= 2 => {
            let left_budget = rng.random_range(1..budget);
            let l = random_formula(rng, left_budget);
            let r = random_formula(rng, budget - l.node_count());
            match rng.random_range(0..3) {
                0 => Formula::and(l, r),
                1 => Formula::or(l, r),
                _ => Formula::until(random_interval(rng), l, r),
            }
        }
        3 => Formula::always(random_interval(rng), random_formula(rng, budget)),
        _ => Formula::eventually(random_interval(rng), random_formula(rng, budget)),
    }
}

/// Random trace over the fuzz variables with values on a 0.25 lattice.
pub fn random_trace(rng: &mut impl Rng, max_len: usize) -> Trace {
    let n = rng.random_range(1..=max_len);
    Trace::from_channels(FUZZ_VARS.iter().map(|&v| {
        (v, (0..n).map(|_| f64::from(rng.random_range(-8..=8i32)) * 0.25).collect::<Vec<_>>())
    }))
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Labeled dataset of single-channel `cgm` chunks.
pub fn cgm_dataset(rows: Vec<(Vec<f64>, Label)>) -> LabeledDataset {
    let examples = rows
        .into_iter()
        .enumerate()
        .map(|(index, (cgm, label))| {
            let trace = Trace::from_channels([("cgm", cgm)]).unwrap();
            let chunk = Chunk { patient_id: "p".into(), index, start: trace.start(), trace, valid: true };
            Example { chunk, label }
        })
        .collect();
    LabeledDataset::new(Task::Custom, examples)
}

/// Hour-long rows whose positives stay inside `[lo, hi]` and whose
/// negatives leave it once, alternately dipping below and spiking above.
pub fn planted_band(rng: &mut impl Rng, n_pos: usize, n_neg: usize, lo: f64, hi: f64) -> Vec<(Vec<f64>, Label)> {
    let mut rows = Vec::new();
    for _ in 0..n_pos {
        rows.push(((0..12).map(|_| rng.random_range(lo..=hi)).collect(), Label::Pos));
    }
    for k in 0..n_neg {
        let mut cgm: Vec<f64> = (0..12).map(|_| rng.random_range(lo..=hi)).collect();
        let at = rng.random_range(0..12);
        cgm[at] = if k % 2 == 0 { rng.random_range(lo - 15.0..lo - 1.0) } else { rng.random_range(hi + 1.0..hi + 40.0) };
        rows.push((cgm, Label::Neg));
    }
    rows
}

/// Threshold shapes with a closed-form decision on a chunk's extremes.
#[derive(Debug, Clone, Copy)]
pub enum Shape {
    /// `G[0,60](cgm >= a)`: minimum at least `a`.
    AtLeast,
    /// `G[0,60](cgm <= b)`: maximum at most `b`.
    AtMost,
    /// `F[0,60](cgm >= a)`: maximum at least `a`.
    Reaches,
    /// `G[0,60](cgm >= a & cgm <= b)`.
    Band,
}

impl Shape {
    pub fn template(self) -> &'static str {
        match self {
            Shape::AtLeast => "G[0,60](cgm >= ?a{0,400})",
            Shape::AtMost => "G[0,60](cgm <= ?b{0,400})",
            Shape::Reaches => "F[0,60](cgm >= ?a{0,400})",
            Shape::Band => "G[0,60](cgm >= ?a{0,400} & cgm <= ?b{0,400})",
        }
    }

    fn accepts(self, min: f64, max: f64, a: f64, b: f64) -> bool {
        match self {
            Shape::AtLeast => min >= a,
            Shape::AtMost => max <= b,
            Shape::Reaches => max >= a,
            Shape::Band => min >= a && max <= b,
        }
    }

    /// Best accuracy over the integer grid `0..=400` per parameter.
    pub fn grid_optimum(self, rows: &[(Vec<f64>, Label)]) -> f64 {
        let extremes: Vec<(f64, f64, bool)> = rows
            .iter()
            .map(|(v, l)| {
                let min = v.iter().copied().fold(f64::INFINITY, f64::min);
                let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (min, max, *l == Label::Pos)
            })
            .collect();
        let accuracy = |a: f64, b: f64| {
            let hits = extremes.iter().filter(|&&(mn, mx, pos)| self.accepts(mn, mx, a, b) == pos).count();
            hits as f64 / extremes.len() as f64
        };
        let grid = || (0..=400).map(f64::from);
        match self {
            Shape::Band => grid().flat_map(|a| grid().map(move |b| (a, b))).map(|(a, b)| accuracy(a, b)).fold(0.0, f64::max),
            Shape::AtMost => grid().map(|b| accuracy(0.0, b)).fold(0.0, f64::max),
            _ => grid().map(|a| accuracy(a, 0.0)).fold(0.0, f64::max),
        }
    }
}
