mod common;

use common::{oracle_bool, oracle_rob, random_formula, random_trace, rng};
use proptest::prelude::*;
use stlmine::stl::{
    eval_bool, parse, robustness, robustness_signal, satisfaction_signal, Comparator, Formula,
    Interval, Param, Value,
};

#[test]
fn monitor_matches_brute_force_oracle() {
    let mut r = rng(11);
    for case in 0..3000 {
        let f = random_formula(&mut r, 8);
        let tr = random_trace(&mut r, 16);
        let rob = robustness_signal(&f, &tr).unwrap();
        let sat = satisfaction_signal(&f, &tr).unwrap();
        for i in 0..tr.len() {
            assert_eq!(sat[i], oracle_bool(&f, &tr, i), "case {case}: {f} at {i}");
            let expected = oracle_rob(&f, &tr, i);
            assert!(
                rob[i] == expected || (rob[i] - expected).abs() <= 1e-9,
                "case {case}: {f} at {i}: {} vs {expected}",
                rob[i]
            );
        }
    }
}

#[test]
fn robustness_sign_is_sound() {
    let mut r = rng(12);
    for _ in 0..3000 {
        let f = random_formula(&mut r, 8);
        let tr = random_trace(&mut r, 16);
        let rob = robustness_signal(&f, &tr).unwrap();
        let sat = satisfaction_signal(&f, &tr).unwrap();
        for (rho, ok) in rob.iter().zip(&sat) {
            if *rho > 0.0 {
                assert!(ok, "{f}: robustness {rho} but violated");
            }
            if *rho < 0.0 {
                assert!(!ok, "{f}: robustness {rho} but satisfied");
            }
        }
    }
}

#[test]
fn disjunction_agrees_with_de_morgan() {
    let mut r = rng(13);
    for _ in 0..1000 {
        let a = random_formula(&mut r, 4);
        let b = random_formula(&mut r, 4);
        let tr = random_trace(&mut r, 12);
        let or = Formula::or(a.clone(), b.clone());
        let t = 0.0;
        assert_eq!(
            eval_bool(&or, &tr, t).unwrap(),
            eval_bool(&a, &tr, t).unwrap() || eval_bool(&b, &tr, t).unwrap()
        );
    }
}

#[test]
fn widening_windows_is_monotone() {
    let mut r = rng(14);
    for _ in 0..1000 {
        let body = random_formula(&mut r, 5);
        let tr = random_trace(&mut r, 16);
        let (lo, hi) = (2.5 * f64::from(rand::Rng::random_range(&mut r, 0..10u32)), 25.0);
        let wider = Interval::new((lo - 5.0).max(0.0), hi + 10.0);
        let narrow = Interval::new(lo, hi);
        let f_small = robustness(&Formula::eventually(narrow.clone(), body.clone()), &tr, 0.0).unwrap();
        let f_big = robustness(&Formula::eventually(wider.clone(), body.clone()), &tr, 0.0).unwrap();
        assert!(f_big >= f_small);
        let g_small = robustness(&Formula::always(narrow, body.clone()), &tr, 0.0).unwrap();
        let g_big = robustness(&Formula::always(wider, body), &tr, 0.0).unwrap();
        assert!(g_big <= g_small);
    }
}

fn interval_strategy() -> impl Strategy<Value = (f64, f64, bool)> {
    (0u32..100, 0u32..100, any::<bool>()).prop_map(|(a, b, inf)| {
        (f64::from(a) * 0.5, f64::from(a + b) * 0.5, inf)
    })
}

fn formula_strategy() -> impl Strategy<Value = Formula> {
    let var = prop::sample::select(vec!["cgm", "hr", "basalBolus", "activityLevel"]);
    let cmp = prop::sample::select(Comparator::ALL.to_vec());
    let leaf = (var, cmp, -1.0e4f64..1.0e4, any::<bool>()).prop_map(|(v, c, t, param)| {
        let threshold = if param {
            // placeholder names are made unique after generation
            Value::Param(Param::new("p", t.min(0.0), t.max(0.0) + 1.0))
        } else {
            Value::Const(t)
        };
        Formula::predicate(v, c, threshold)
    });
    leaf.prop_recursive(5, 32, 2, move |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (interval_strategy(), inner.clone()).prop_map(|((lo, hi, inf), a)| {
                Formula::always(Interval::new(lo, if inf { f64::INFINITY } else { hi }), a)
            }),
            (interval_strategy(), inner.clone(), any::<bool>()).prop_map(|((lo, hi, _), a, param)| {
                let interval = if param {
                    Interval { lo: Value::Param(Param::new("p", 0.0, 60.0)), hi: Value::Const(hi) }
                } else {
                    Interval::new(lo, hi)
                };
                Formula::eventually(interval, a)
            }),
            (interval_strategy(), inner.clone(), inner).prop_map(|((lo, hi, _), a, b)| {
                Formula::until(Interval::new(lo, hi), a, b)
            }),
        ]
    })
}

fn uniquify(mut f: Formula) -> Formula {
    let mut counter = 0;
    f.for_each_value_mut(&mut |v| {
        if let Value::Param(p) = v {
            p.name = format!("p{counter}");
            counter += 1;
        }
    });
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn render_then_parse_is_identity(f in formula_strategy().prop_map(uniquify)) {
        prop_assert!(f.depth() <= 6);
        let text = f.to_string();
        let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(back, f);
    }
}
