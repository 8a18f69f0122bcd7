//! Structure-level variation operators.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::templates::{uniquify_params, NameGen, Template};
use super::GaConfig;
use crate::dataset::VariableRegistry;
use crate::stl::{Comparator, Formula, Param, ParamKind, Value, VariableId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    SwapComparator,
    SwapVariable,
    /// `G` becomes `F` and vice versa.
    SwapTemporal,
    /// Widens or narrows the search range of one parameter.
    ResizeRange,
    ReplaceSubtree,
}

impl Mutation {
    pub const ALL: [Mutation; 5] = [
        Mutation::SwapComparator,
        Mutation::SwapVariable,
        Mutation::SwapTemporal,
        Mutation::ResizeRange,
        Mutation::ReplaceSubtree,
    ];
}

fn indices_where(f: &Formula, pred: impl Fn(&Formula) -> bool) -> Vec<usize> {
    (0..f.node_count()).filter(|&i| pred(f.node(i).expect("index in range"))).collect()
}

/// Search range allowed for a parameter of the given kind.
fn outer_range(kind: &ParamKind, registry: &VariableRegistry, cfg: &GaConfig) -> (f64, f64) {
    match kind {
        ParamKind::Threshold { variable } => {
            registry.get(variable.as_str()).map_or((f64::MIN, f64::MAX), |c| c.range)
        }
        ParamKind::TimeOffset => (0.0, cfg.max_time_offset),
    }
}

/// Applies one specific mutation, or returns `None` when it has no site in
/// `f` (e.g. no temporal operator to swap).
pub fn mutate_with<R: Rng + ?Sized>(
    f: &Formula,
    kind: Mutation,
    registry: &VariableRegistry,
    cfg: &GaConfig,
    rng: &mut R,
) -> Option<Formula> {
    let mut out = f.clone();
    match kind {
        Mutation::SwapComparator => {
            let sites = indices_where(f, |n| matches!(n, Formula::Predicate { .. }));
            let &i = sites.choose(rng)?;
            if let Some(Formula::Predicate { cmp, .. }) = out.node_mut(i) {
                *cmp = cmp.flipped();
            }
        }
        Mutation::SwapVariable => {
            let sites = indices_where(f, |n| matches!(n, Formula::Predicate { .. }));
            let &i = sites.choose(rng)?;
            let Some(Formula::Predicate { variable, threshold, .. }) = out.node_mut(i) else {
                unreachable!("site is a predicate")
            };
            let others: Vec<_> = registry.channels().iter().filter(|c| c.name != *variable).collect();
            let channel = *others.choose(rng)?;
            *variable = channel.name.clone();
            let (lo, hi) = channel.range;
            match threshold {
                Value::Param(p) => {
                    p.min = lo;
                    p.max = hi;
                }
                Value::Const(c) => *c = c.clamp(lo, hi),
            }
        }
        Mutation::SwapTemporal => {
            let sites = indices_where(f, |n| matches!(n, Formula::Always(..) | Formula::Eventually(..)));
            let &i = sites.choose(rng)?;
            let node = out.node_mut(i).expect("index in range");
            *node = match node.clone() {
                Formula::Always(iv, c) => Formula::Eventually(iv, c),
                Formula::Eventually(iv, c) => Formula::Always(iv, c),
                _ => unreachable!("site is temporal"),
            };
        }
        Mutation::ResizeRange => {
            let specs = f.params();
            let spec = specs.choose(rng)?;
            let (lo, hi) = outer_range(&spec.kind, registry, cfg);
            let width = spec.max - spec.min;
            let (min, max) = if rng.random_bool(0.5) || width <= 0.0 {
                let grow = width.max((hi - lo) * 0.05) / 2.0;
                ((spec.min - grow).max(lo), (spec.max + grow).min(hi))
            } else {
                let center = rng.random_range(spec.min..=spec.max);
                let half = width / 4.0;
                let min = (center - half).max(spec.min);
                (min, (min + width / 2.0).min(spec.max))
            };
            let name = spec.name.clone();
            out.for_each_value_mut(&mut |v| {
                if let Value::Param(p) = v {
                    if p.name == name {
                        *p = Param::new(name.clone(), min, max);
                    }
                }
            });
        }
        Mutation::ReplaceSubtree => {
            let i = rng.random_range(0..f.node_count());
            let level = f.node_level(i).expect("index in range");
            let room = cfg.max_depth.saturating_sub(level);
            let mut names = NameGen::for_formula(f);
            let channels = registry.channels();
            let x = channels.choose(rng)?;
            let fitting: Vec<Template> = Template::ALL.into_iter().filter(|t| t.depth() <= room).collect();
            let replacement = match fitting.choose(rng) {
                Some(t) => {
                    let y = channels.iter().filter(|c| c.name != x.name).collect::<Vec<_>>();
                    let y = y.choose(rng).copied().unwrap_or(x);
                    t.build(x, y, cfg.max_time_offset, &mut names)
                }
                None if room >= 1 => {
                    let cmp = *[Comparator::Ge, Comparator::Le].choose(rng).expect("nonempty");
                    let p = Param::new(names.fresh("c"), x.range.0, x.range.1);
                    Formula::Predicate { variable: VariableId::clone(&x.name), cmp, threshold: Value::Param(p) }
                }
                None => return None,
            };
            *out.node_mut(i).expect("index in range") = replacement;
        }
    }
    uniquify_params(&mut out);
    (out.depth() <= cfg.max_depth).then_some(out)
}

/// Applies exactly one randomly chosen applicable mutation. Falls back to
/// the unchanged formula only if no mutation applies.
pub fn mutate<R: Rng + ?Sized>(f: &Formula, registry: &VariableRegistry, cfg: &GaConfig, rng: &mut R) -> Formula {
    let mut kinds = Mutation::ALL.to_vec();
    while !kinds.is_empty() {
        let k = kinds.swap_remove(rng.random_range(0..kinds.len()));
        if let Some(out) = mutate_with(f, k, registry, cfg, rng) {
            return out;
        }
    }
    f.clone()
}

/// Exchanges a random subtree of `a` with a random subtree of `b`. Swaps
/// that would exceed the depth bound are redrawn a few times before giving
/// up and returning the parents unchanged.
pub fn crossover<R: Rng + ?Sized>(a: &Formula, b: &Formula, cfg: &GaConfig, rng: &mut R) -> (Formula, Formula) {
    for _ in 0..8 {
        let i = rng.random_range(0..a.node_count());
        let j = rng.random_range(0..b.node_count());
        let sa = a.node(i).expect("index in range").clone();
        let sb = b.node(j).expect("index in range").clone();
        let fits_a = a.node_level(i).expect("index in range") + sb.depth() <= cfg.max_depth;
        let fits_b = b.node_level(j).expect("index in range") + sa.depth() <= cfg.max_depth;
        if !(fits_a && fits_b) {
            continue;
        }
        let mut ca = a.clone();
        let mut cb = b.clone();
        *ca.node_mut(i).expect("index in range") = sb;
        *cb.node_mut(j).expect("index in range") = sa;
        uniquify_params(&mut ca);
        uniquify_params(&mut cb);
        return (ca, cb);
    }
    (a.clone(), b.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::parse;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn temporal_swap() {
        let f = parse("G[0,60](cgm >= ?a{0,400})").unwrap();
        let reg = VariableRegistry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = mutate_with(&f, Mutation::SwapTemporal, &reg, &GaConfig::default(), &mut rng).unwrap();
        assert_eq!(g.to_string(), "F[0,60](cgm >= ?a{0,400})");
        let p = parse("cgm >= 3").unwrap();
        assert!(mutate_with(&p, Mutation::SwapTemporal, &reg, &GaConfig::default(), &mut rng).is_none());
    }

    #[test]
    fn variable_swap_adopts_channel_range() {
        let f = parse("cgm >= ?a{0,400}").unwrap();
        let reg = VariableRegistry::default().subset(&["cgm", "hr"]);
        let g = mutate_with(&f, Mutation::SwapVariable, &reg, &GaConfig::default(), &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        assert_eq!(g.to_string(), "hr >= ?a{0,220}");
    }

    #[test]
    fn resize_stays_inside_the_channel_range() {
        let reg = VariableRegistry::default();
        let cfg = GaConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut f = parse("G[?u{0,60},?v{0,60}](cgm >= ?a{0,400})").unwrap();
        for _ in 0..200 {
            f = mutate_with(&f, Mutation::ResizeRange, &reg, &cfg, &mut rng).unwrap();
            for p in f.params() {
                assert!(p.min <= p.max);
                match p.kind {
                    ParamKind::TimeOffset => assert!(p.min >= 0.0 && p.max <= 60.0),
                    ParamKind::Threshold { .. } => assert!(p.min >= 0.0 && p.max <= 400.0),
                }
            }
        }
    }

    #[test]
    fn crossover_respects_depth_and_names() {
        let cfg = GaConfig { max_depth: 4, ..GaConfig::default() };
        let a = parse("G[0,60](cgm >= ?a{0,400} & cgm <= ?b{0,400})").unwrap();
        let b = parse("F[?u{0,60},?v{0,60}](meal <= ?a{0,200} & hr >= ?b{0,220})").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let (x, y) = crossover(&a, &b, &cfg, &mut rng);
            for c in [x, y] {
                assert!(c.depth() <= 4);
                let mut names: Vec<_> = c.params().into_iter().map(|p| p.name).collect();
                let n = names.len();
                names.sort();
                names.dedup();
                assert_eq!(names.len(), n);
            }
        }
    }
}
