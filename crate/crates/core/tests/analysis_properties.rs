mod common;

use common::{cgm_dataset, rng};
use proptest::prelude::*;
use rand::Rng;
use stlmine::analysis::{
    count_events, derive_ranges, group_repeated_rules, metrics, summarize_cluster, PatientRule, RangeRule,
    DEFAULT_QUANTUM,
};
use stlmine::dataset::{align_resample_span, chunk, detect_exercise, Chunk};
use stlmine::labeling::{Label, TirClass};
use stlmine::learner::{gp_ucb_synthesize, Candidate, GpUcbConfig, Target};
use stlmine::stl::{parse, Trace};
use stlmine::synth::{generate, SyntheticCohortSpec};

const SHAPES: [&str; 4] = [
    "G[0,{t}](cgm >= {a} & cgm <= {b})",
    "F[0,{t}](cgm >= {a} & hr <= {b})",
    "G[0,{t}](hr <= {b} & cgm >= {a})",
    "cgm <= {a} U[0,{t}] hr >= {b}",
];

fn random_rule(r: &mut impl Rng, patient: usize) -> (usize, PatientRule) {
    let shape = r.random_range(0..SHAPES.len());
    let text = SHAPES[shape]
        .replace("{t}", &r.random_range(1..60).to_string())
        .replace("{a}", &r.random_range(40..120).to_string())
        .replace("{b}", &r.random_range(120..300).to_string());
    let rule = PatientRule {
        patient_id: format!("p{patient}"),
        task: "100".into(),
        formula: parse(&text).unwrap(),
        accuracy: r.random_range(0.0..=1.0),
    };
    (shape, rule)
}

proptest! {
    #[test]
    fn grouping_partitions_the_rules(seed in any::<u64>(), n in 0usize..40) {
        let mut r = rng(seed);
        let tagged: Vec<(usize, PatientRule)> = (0..n).map(|i| random_rule(&mut r, i % 7)).collect();
        let rules: Vec<PatientRule> = tagged.iter().map(|(_, rule)| rule.clone()).collect();
        let groups = group_repeated_rules(&rules);
        prop_assert_eq!(groups.iter().map(|g| g.rows.len()).sum::<usize>(), n);
        // shapes 0 and 2 differ in conjunct order and variables, so each shape is its own group
        let distinct: std::collections::BTreeSet<usize> = tagged.iter().map(|(s, _)| *s).collect();
        prop_assert_eq!(groups.len(), distinct.len());
        for g in &groups {
            for row in &g.rows {
                prop_assert_eq!(row.values.len(), g.slots.len());
            }
        }
    }

    #[test]
    fn range_rows_are_ordered_unless_marked(seed in any::<u64>(), n_good in 0usize..6, n_bad in 0usize..6) {
        let mut r = rng(seed);
        let mut make = |class: TirClass, i: usize| {
            let level = r.random_range(1..=4);
            let cmp = if r.random_bool(0.5) { "<=" } else { ">=" };
            let cond = if r.random_bool(0.5) { "<=" } else { ">=" };
            let c = f64::from(r.random_range(50..=120)) / 1000.0;
            RangeRule {
                id: format!("{class}-{i}"),
                class,
                formula: parse(&format!("G[0,60](activityLevel {cond} {level} & basalBolus {cmp} {c})")).unwrap(),
                mcr: r.random_range(0.0..=1.0),
            }
        };
        let good: Vec<RangeRule> = (0..n_good).map(|i| make(TirClass::C100, i)).collect();
        let bad: Vec<RangeRule> = (0..n_bad).map(|i| make(TirClass::CLt50, i)).collect();
        let table = derive_ranges(&good, &bad, "basalBolus", "activityLevel", DEFAULT_QUANTUM).unwrap();
        for w in table.rows.windows(2) {
            prop_assert!(w[0].level > w[1].level);
        }
        for row in &table.rows {
            if let (Some(lo), Some(hi)) = (row.lower, row.upper) {
                prop_assert!(row.conflict || lo <= hi);
                prop_assert_eq!(row.conflict, lo > hi);
            }
        }
    }

    #[test]
    fn event_counts_add_over_disjoint_chunks(seed in any::<u64>(), n in 1usize..30, split in 0usize..30) {
        let mut r = rng(seed);
        let chunks: Vec<Chunk> = (0..n)
            .map(|i| {
                let smbg: Vec<f64> = (0..12).map(|_| if r.random_bool(0.1) { r.random_range(40.0..300.0) } else { 0.0 }).collect();
                let trace = Trace::from_channels([("smbg", smbg)]).unwrap();
                Chunk { patient_id: format!("p{}", i % 3), index: i, start: trace.start(), trace, valid: r.random_bool(0.9) }
            })
            .collect();
        let rule = parse("F[0,60](smbg >= 1)").unwrap();
        let cut = split.min(n);
        let whole = count_events(&chunks, &rule, "smbg").unwrap();
        let mut parts = count_events(&chunks[..cut], &rule, "smbg").unwrap();
        for other in count_events(&chunks[cut..], &rule, "smbg").unwrap() {
            match parts.iter_mut().find(|p| p.patient_id == other.patient_id) {
                Some(p) => p.merge(&other),
                None => parts.push(other),
            }
        }
        parts.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
        prop_assert_eq!(whole.len(), parts.len());
        for (w, p) in whole.iter().zip(&parts) {
            prop_assert_eq!(&w.patient_id, &p.patient_id);
            prop_assert_eq!((w.chunks, w.events, w.amount_samples), (p.chunks, p.events, p.amount_samples));
            prop_assert!((w.amount_sum - p.amount_sum).abs() < 1e-9);
        }
    }

    #[test]
    fn accuracy_and_mcr_sum_to_one(seed in any::<u64>()) {
        let mut r = rng(seed);
        let rows: Vec<(Vec<f64>, Label)> = (0..20)
            .map(|_| ((0..12).map(|_| r.random_range(40.0..250.0)).collect(), Label::from_bool(r.random_bool(0.5))))
            .collect();
        let mut rows = rows;
        rows[0].1 = Label::Pos;
        rows[1].1 = Label::Neg;
        let ds = cgm_dataset(rows);
        let f = parse("G[0,60](cgm >= ?a{0,400})").unwrap();
        let cfg = GpUcbConfig { budget: 8, initial_design: 4, seed, ..GpUcbConfig::default() };
        let c = Candidate::new(f.clone(), gp_ucb_synthesize(&f, &ds, &cfg).unwrap(), Target::Fitness);
        let m = metrics(&c, &ds).unwrap();
        prop_assert_eq!(m.accuracy + m.mcr, 1.0);
        prop_assert_eq!(m.accuracy, c.accuracy);
    }
}

#[test]
fn smbg_event_counts_track_planted_checks() {
    let spec = SyntheticCohortSpec {
        patients: 4,
        days: 3,
        seed: 9,
        smbg_per_day: 2,
        dropouts_per_day: 0.0,
        ..SyntheticCohortSpec::default()
    };
    let rule = parse("F[0,60](smbg >= 1)").unwrap();
    let mut counts = Vec::new();
    let mut planted = 0.0;
    for p in generate(&spec).unwrap() {
        let chunks = chunk(&detect_exercise(&align_resample_span(&p.raw).unwrap()).unwrap());
        counts.extend(count_events(&chunks, &rule, "smbg").unwrap());
        planted += p.planted.smbg_checks as f64;
    }
    let summary = summarize_cluster(1, &counts).unwrap();
    let k = planted / spec.patients as f64;
    assert!((summary.mean_events - k).abs() <= 1.0, "mean {} vs planted {k}", summary.mean_events);
    assert!(summary.mean_amount.is_some());
}
