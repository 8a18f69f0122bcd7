//! GP-UCB synthesis of a parametric formula's real-valued parameters.
//!
//! Parameters are searched on the unit box, each axis mapped linearly onto
//! its declared range. Threshold axes are narrowed to the observed range of
//! their variable (plus a small pad), since thresholds beyond the data all
//! classify alike. A Latin-hypercube design seeds the surrogate; each
//! further point maximizes `mean + c_i * stddev` over random candidates and
//! Gaussian perturbations of the best points so far.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::gp::GaussianProcess;
use super::objective::{objective, FitnessReport};
use super::{GpUcbConfig, LearnError, Target};
use crate::labeling::LabeledDataset;
use crate::stl::{Assignment, Formula, ParamKind, ParamSpec, Value};

/// Best assignment found for one structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub params: Assignment,
    pub report: FitnessReport,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Param(usize),
    Const(f64),
}

struct Problem<'a> {
    formula: &'a Formula,
    ds: &'a LabeledDataset,
    specs: Vec<ParamSpec>,
    /// Search range per parameter, inside the declared one.
    bounds: Vec<(f64, f64)>,
    /// `(lo, hi)` of every interval with at least one parameter endpoint.
    intervals: Vec<(Slot, Slot)>,
    target: Target,
}

impl<'a> Problem<'a> {
    fn new(formula: &'a Formula, ds: &'a LabeledDataset, target: Target) -> Self {
        let specs = formula.params();
        let slot = |v: &Value| match v {
            Value::Const(c) => Slot::Const(*c),
            Value::Param(p) => Slot::Param(
                specs.iter().position(|s| s.name == p.name).expect("every parameter is listed"),
            ),
        };
        let mut intervals = Vec::new();
        formula.visit(&mut |node| {
            if let Some(i) = node.interval() {
                if matches!(i.lo, Value::Param(_)) || matches!(i.hi, Value::Param(_)) {
                    intervals.push((slot(&i.lo), slot(&i.hi)));
                }
            }
        });
        let bounds = specs.iter().map(|s| search_bounds(s, ds)).collect();
        Self { formula, ds, specs, bounds, intervals, target }
    }

    fn to_values(&self, u: &[f64]) -> Vec<f64> {
        self.bounds.iter().zip(u).map(|(&(lo, hi), &u)| (lo + u * (hi - lo)).clamp(lo, hi)).collect()
    }

    fn to_unit(&self, values: &[f64]) -> Vec<f64> {
        self.bounds
            .iter()
            .zip(values)
            .map(|(&(lo, hi), &v)| if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 })
            .collect()
    }

    /// Fixes inverted time intervals: two parameter endpoints are swapped
    /// and clamped, a single parameter endpoint is clamped against the
    /// constant one. `None` if no repair stays inside the declared ranges.
    fn repair(&self, values: &mut [f64]) -> Option<()> {
        for &(lo, hi) in &self.intervals {
            match (lo, hi) {
                (Slot::Param(a), Slot::Param(b)) => {
                    if values[a] > values[b] {
                        values.swap(a, b);
                        values[a] = values[a].clamp(self.specs[a].min, self.specs[a].max);
                        values[b] = values[b].clamp(self.specs[b].min, self.specs[b].max);
                    }
                    if values[a] > values[b] {
                        if self.specs[b].contains(values[a]) {
                            values[b] = values[a];
                        } else if self.specs[a].contains(values[b]) {
                            values[a] = values[b];
                        } else {
                            return None;
                        }
                    }
                }
                (Slot::Const(c), Slot::Param(b)) if values[b] < c => {
                    (self.specs[b].max >= c).then_some(())?;
                    values[b] = c.max(self.specs[b].min);
                }
                (Slot::Param(a), Slot::Const(c)) if values[a] > c => {
                    (self.specs[a].min <= c).then_some(())?;
                    values[a] = c.min(self.specs[a].max);
                }
                _ => {}
            }
        }
        Some(())
    }

    fn assignment(&self, values: &[f64]) -> Assignment {
        self.specs.iter().zip(values).map(|(s, &v)| (s.name.clone(), v)).collect()
    }

    /// Evaluates at a unit-box point. Returns the repaired point and its
    /// report, or `None` for an infeasible point (irreparable interval or
    /// non-finite robustness).
    fn evaluate(&self, u: &[f64]) -> Result<(Vec<f64>, Option<FitnessReport>), LearnError> {
        let mut values = self.to_values(u);
        if self.repair(&mut values).is_none() {
            return Ok((u.to_vec(), None));
        }
        let ground = self.formula.instantiate(&self.assignment(&values))?;
        let report = match objective(&ground, self.ds) {
            Ok(r) => Some(r),
            Err(LearnError::NonFinite) => None,
            Err(e) => return Err(e),
        };
        Ok((self.to_unit(&values), report))
    }

    fn value(&self, r: &FitnessReport) -> f64 {
        match self.target {
            Target::Fitness => r.fitness,
            Target::Accuracy => r.accuracy,
        }
    }
}

/// Fraction of the observed span added on each side of a threshold range.
const DATA_PAD: f64 = 0.05;

fn search_bounds(spec: &ParamSpec, ds: &LabeledDataset) -> (f64, f64) {
    let ParamKind::Threshold { variable } = &spec.kind else {
        return (spec.min, spec.max);
    };
    let (lo, hi) = ds
        .examples
        .iter()
        .filter_map(|e| e.chunk.trace.channel(variable.as_str()))
        .flatten()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return (spec.min, spec.max);
    }
    let span = if hi > lo { hi - lo } else { spec.max - spec.min };
    let (lo, hi) = ((lo - DATA_PAD * span).max(spec.min), (hi + DATA_PAD * span).min(spec.max));
    if lo < hi {
        (lo, hi)
    } else {
        (spec.min, spec.max)
    }
}

fn latin_hypercube(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; d]; n];
    for axis in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in points.iter_mut().zip(strata) {
            p[axis] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    points
}

/// Number of best points whose neighborhoods are searched each iteration.
const LOCAL_CENTERS: usize = 3;
const LOCAL_SAMPLES: usize = 16;

/// Maximizes the configured target over the parameter box of `formula`.
/// A formula without parameters is evaluated once.
pub fn gp_ucb_synthesize(
    formula: &Formula,
    ds: &LabeledDataset,
    cfg: &GpUcbConfig,
) -> Result<Synthesis, LearnError> {
    cfg.validate()?;
    if !ds.has_both_labels() {
        return Err(LearnError::SingleLabel);
    }
    let problem = Problem::new(formula, ds, cfg.target);
    let d = problem.specs.len();
    if d == 0 {
        let report = objective(formula, ds)?;
        return Ok(Synthesis { params: Assignment::new(), report, evaluations: 1 });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(cfg.budget);
    let mut reports: Vec<Option<FitnessReport>> = Vec::with_capacity(cfg.budget);
    let mut best: Option<usize> = None;
    let done = |best: Option<usize>, reports: &[Option<FitnessReport>]| {
        cfg.target == Target::Accuracy
            && best.is_some_and(|b| reports[b].is_some_and(|r| r.accuracy >= 1.0))
    };
    let record = |u: &[f64], xs: &mut Vec<Vec<f64>>, reports: &mut Vec<Option<FitnessReport>>, best: &mut Option<usize>| {
        let (point, report) = problem.evaluate(u)?;
        if let Some(r) = &report {
            let better = match *best {
                None => true,
                Some(b) => problem.value(r) > problem.value(reports[b].as_ref().expect("best is feasible")),
            };
            if better {
                *best = Some(xs.len());
            }
        }
        xs.push(point);
        reports.push(report);
        Ok::<(), LearnError>(())
    };

    for u in latin_hypercube(cfg.initial_design, d, &mut rng) {
        record(&u, &mut xs, &mut reports, &mut best)?;
        if done(best, &reports) {
            break;
        }
    }

    let normal_wide = Normal::new(0.0, 0.1).expect("valid sigma");
    let normal_narrow = Normal::new(0.0, 0.02).expect("valid sigma");
    let mut iteration = 0;
    while xs.len() < cfg.budget && !done(best, &reports) {
        iteration += 1;
        let feasible: Vec<f64> = reports.iter().flatten().map(|r| problem.value(r)).collect();
        let next = if feasible.is_empty() {
            (0..d).map(|_| rng.random::<f64>()).collect()
        } else {
            let lo = feasible.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = feasible.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let penalty = lo - (hi - lo).max(1e-3);
            let ys: Vec<f64> = reports
                .iter()
                .map(|r| r.as_ref().map_or(penalty, |r| problem.value(r)))
                .collect();
            match GaussianProcess::fit_best(&xs, &ys, &cfg.length_scales, cfg.noise) {
                None => (0..d).map(|_| rng.random::<f64>()).collect(),
                Some(gp) => {
                    let coef = cfg.exploration.coefficient(iteration);
                    let mut order: Vec<usize> = (0..xs.len()).filter(|&i| reports[i].is_some()).collect();
                    order.sort_by(|&a, &b| ys[b].total_cmp(&ys[a]).then(a.cmp(&b)));
                    let mut pool: Vec<Vec<f64>> = (0..cfg.acquisition_samples)
                        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
                        .collect();
                    for &c in order.iter().take(LOCAL_CENTERS) {
                        for k in 0..2 * LOCAL_SAMPLES {
                            let dist = if k % 2 == 0 { &normal_wide } else { &normal_narrow };
                            pool.push(
                                xs[c].iter().map(|v| (v + dist.sample(&mut rng)).clamp(0.0, 1.0)).collect(),
                            );
                        }
                    }
                    let mut chosen = None;
                    let mut chosen_score = f64::NEG_INFINITY;
                    for p in pool {
                        let (m, s) = gp.predict(&p);
                        let score = m + coef * s;
                        if score > chosen_score {
                            chosen_score = score;
                            chosen = Some(p);
                        }
                    }
                    let p = chosen.expect("pool is nonempty");
                    let seen = xs.iter().any(|x| {
                        x.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() < 1e-14
                    });
                    if seen {
                        (0..d).map(|_| rng.random::<f64>()).collect()
                    } else {
                        p
                    }
                }
            }
        };
        record(&next, &mut xs, &mut reports, &mut best)?;
    }

    let b = best.ok_or(LearnError::NonFinite)?;
    let values = problem.to_values(&xs[b]);
    Ok(Synthesis {
        params: problem.assignment(&values),
        report: reports[b].expect("best is feasible"),
        evaluations: xs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::{Example, Label, Task};
    use crate::stl::{parse, Trace};
    use crate::dataset::Chunk;

    pub(crate) fn dataset(rows: Vec<(Vec<f64>, Label)>) -> LabeledDataset {
        let examples = rows
            .into_iter()
            .enumerate()
            .map(|(i, (cgm, label))| {
                let trace = Trace::from_channels([("cgm", cgm)]).unwrap();
                let chunk = Chunk { patient_id: "p".into(), index: i, start: trace.start(), trace, valid: true };
                Example { chunk, label }
            })
            .collect();
        LabeledDataset::new(Task::Custom, examples)
    }

    #[test]
    fn parameter_free_formula_takes_one_evaluation() {
        let ds = dataset(vec![(vec![100.0; 12], Label::Pos), (vec![60.0; 12], Label::Neg)]);
        let f = parse("G[0,60](cgm >= 70)").unwrap();
        let s = gp_ucb_synthesize(&f, &ds, &GpUcbConfig::default()).unwrap();
        assert_eq!(s.evaluations, 1);
        assert_eq!(s.report.accuracy, 1.0);
    }

    #[test]
    fn finds_separating_threshold() {
        let mut rows = Vec::new();
        for k in 0..10 {
            rows.push((vec![120.0 + 5.0 * k as f64; 12], Label::Pos));
            let mut dip = vec![150.0; 12];
            dip[k] = 80.0 - k as f64;
            rows.push((dip, Label::Neg));
        }
        let ds = dataset(rows);
        let f = parse("G[0,60](cgm >= ?a{0,400})").unwrap();
        let cfg = GpUcbConfig { target: Target::Accuracy, ..GpUcbConfig::default() };
        let s = gp_ucb_synthesize(&f, &ds, &cfg).unwrap();
        assert_eq!(s.report.accuracy, 1.0);
        assert!((80.0..=120.0).contains(&s.params["a"]), "{:?}", s.params);
    }

    #[test]
    fn threshold_boxes_follow_the_data() {
        let ds = dataset(vec![(vec![100.0; 12], Label::Pos), (vec![60.0; 12], Label::Neg)]);
        let f = parse("F[?u{0,60},60](cgm >= ?a{0,400} & cgm <= ?b{0,90})").unwrap();
        let problem = Problem::new(&f, &ds, Target::Fitness);
        assert_eq!(problem.bounds, vec![(0.0, 60.0), (58.0, 102.0), (58.0, 90.0)]);
        let values = problem.to_values(&[1.0, 0.0, 1.0]);
        assert_eq!(values, vec![60.0, 58.0, 90.0]);
    }

    #[test]
    fn inverted_intervals_are_repaired() {
        let ds = dataset(vec![(vec![100.0; 12], Label::Pos), (vec![60.0; 12], Label::Neg)]);
        let f = parse("F[?u{0,60},?v{0,60}](cgm >= 70)").unwrap();
        let problem = Problem::new(&f, &ds, Target::Fitness);
        let mut values = vec![40.0, 10.0];
        problem.repair(&mut values).unwrap();
        assert_eq!(values, vec![10.0, 40.0]);
        let g = parse("F[?u{30,60},20](cgm >= 70)").unwrap();
        let problem = Problem::new(&g, &ds, Target::Fitness);
        assert!(problem.repair(&mut [45.0]).is_none());
    }

    #[test]
    fn empty_windows_are_infeasible_not_fatal() {
        let ds = dataset(vec![(vec![100.0; 12], Label::Pos), (vec![60.0; 12], Label::Neg)]);
        // windows starting after 55 minutes hold no sample of a 12-sample chunk
        let f = parse("F[?u{0,120},120](cgm >= 70)").unwrap();
        let cfg = GpUcbConfig { budget: 20, initial_design: 8, ..GpUcbConfig::default() };
        let s = gp_ucb_synthesize(&f, &ds, &cfg).unwrap();
        assert!(s.params["u"] <= 55.0);
        let never = parse("F[?u{60,120},120](cgm >= 70)").unwrap();
        assert!(matches!(gp_ucb_synthesize(&never, &ds, &cfg), Err(LearnError::NonFinite)));
    }
}
