//! Parametric rule templates and initial population seeding.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GaConfig, LearnError};
use crate::dataset::{ChannelInfo, VariableRegistry};
use crate::stl::{Comparator, Formula, Interval, Param, Value};

/// Structure families the search starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    /// `G[0,60](x >= ?a & x <= ?b)`: `x` stays inside a band for the hour.
    Band,
    /// `F[?u,?v](x <= ?k & y >= ?l)`.
    EventuallyPair,
    /// `G[?u,?v](x <= ?k & y >= ?l)`.
    AlwaysPair,
    /// `(x <= ?k) U[?u,?v] (y >= ?l)`.
    Until,
}

impl Template {
    pub const ALL: [Template; 4] =
        [Template::Band, Template::EventuallyPair, Template::AlwaysPair, Template::Until];

    pub fn depth(self) -> usize {
        match self {
            Template::Until => 2,
            _ => 3,
        }
    }

    /// Builds the template over `x` (and `y` for pair templates), taking
    /// parameter names from `names`.
    pub fn build(self, x: &ChannelInfo, y: &ChannelInfo, horizon: f64, names: &mut NameGen) -> Formula {
        let threshold = |c: &ChannelInfo, base: &str, names: &mut NameGen| {
            Value::Param(Param::new(names.fresh(base), c.range.0, c.range.1))
        };
        let pred = |c: &ChannelInfo, cmp, v| Formula::predicate(c.name.as_str(), cmp, v);
        let window = |names: &mut NameGen| Interval {
            lo: Value::Param(Param::new(names.fresh("u"), 0.0, horizon)),
            hi: Value::Param(Param::new(names.fresh("v"), 0.0, horizon)),
        };
        match self {
            Template::Band => {
                let a = threshold(x, "a", names);
                let b = threshold(x, "b", names);
                Formula::always(
                    Interval::new(0.0, horizon),
                    Formula::and(pred(x, Comparator::Ge, a), pred(x, Comparator::Le, b)),
                )
            }
            Template::EventuallyPair | Template::AlwaysPair => {
                let w = window(names);
                let k = threshold(x, "k", names);
                let l = threshold(y, "l", names);
                let body = Formula::and(pred(x, Comparator::Le, k), pred(y, Comparator::Ge, l));
                if self == Template::AlwaysPair {
                    Formula::always(w, body)
                } else {
                    Formula::eventually(w, body)
                }
            }
            Template::Until => {
                let k = threshold(x, "k", names);
                let w = window(names);
                let l = threshold(y, "l", names);
                Formula::until(w, pred(x, Comparator::Le, k), pred(y, Comparator::Ge, l))
            }
        }
    }
}

/// Hands out parameter names unused within one formula: `a`, then `a1`,
/// `a2`, ...
#[derive(Debug, Clone, Default)]
pub struct NameGen {
    used: BTreeSet<String>,
}

impl NameGen {
    pub fn for_formula(f: &Formula) -> Self {
        Self { used: f.params().into_iter().map(|p| p.name).collect() }
    }

    pub fn fresh(&mut self, base: &str) -> String {
        let base = base.trim_end_matches(|c: char| c.is_ascii_digit());
        let base = if base.is_empty() { "p" } else { base };
        let name = if !self.used.contains(base) {
            base.to_string()
        } else {
            (1..).map(|k| format!("{base}{k}")).find(|n| !self.used.contains(n)).expect("unbounded")
        };
        self.used.insert(name.clone());
        name
    }
}

/// Renames repeated parameter names (in pre-order, later occurrences are
/// renamed) so every parameter of `f` is unique.
pub fn uniquify_params(f: &mut Formula) {
    let mut names = NameGen::default();
    f.for_each_value_mut(&mut |v| {
        if let Value::Param(p) = v {
            if !names.used.insert(p.name.clone()) {
                p.name = names.fresh(&p.name);
            }
        }
    });
}

fn pick_pair<'a, R: Rng + ?Sized>(registry: &'a VariableRegistry, x: &'a ChannelInfo, rng: &mut R) -> &'a ChannelInfo {
    let others: Vec<&ChannelInfo> = registry.channels().iter().filter(|c| c.name != x.name).collect();
    others.choose(rng).copied().unwrap_or(x)
}

/// Initial population: one of each template over the first registry channel,
/// then random templates over random variables.
pub fn seed_population<R: Rng + ?Sized>(
    templates: &[Template],
    registry: &VariableRegistry,
    cfg: &GaConfig,
    rng: &mut R,
) -> Result<Vec<Formula>, LearnError> {
    if templates.is_empty() {
        return Err(LearnError::NoTemplates);
    }
    if registry.is_empty() {
        return Err(LearnError::EmptyRegistry);
    }
    let usable: Vec<Template> = templates.iter().copied().filter(|t| t.depth() <= cfg.max_depth).collect();
    if usable.is_empty() {
        return Err(LearnError::InvalidConfig(format!(
            "max_depth {} is too small for every template",
            cfg.max_depth
        )));
    }
    let channels = registry.channels();
    let population = (0..cfg.population)
        .map(|i| {
            let (template, x) = if i < usable.len() {
                (usable[i], &channels[0])
            } else {
                (*usable.choose(rng).expect("nonempty"), channels.choose(rng).expect("nonempty"))
            };
            let y = pick_pair(registry, x, rng);
            template.build(x, y, cfg.max_time_offset, &mut NameGen::default())
        })
        .collect();
    Ok(population)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn channel(name: &str) -> ChannelInfo {
        VariableRegistry::default().get(name).unwrap().clone()
    }

    #[test]
    fn band_template_renders() {
        let f = Template::Band.build(&channel("cgm"), &channel("hr"), 60.0, &mut NameGen::default());
        assert_eq!(f.to_string(), "G[0,60](cgm >= ?a{0,400} & cgm <= ?b{0,400})");
    }

    #[test]
    fn eventually_pair_renders() {
        let f = Template::EventuallyPair.build(&channel("meal"), &channel("hr"), 60.0, &mut NameGen::default());
        assert_eq!(f.to_string(), "F[?u{0,60},?v{0,60}](meal <= ?k{0,200} & hr >= ?l{0,220})");
        let g = Template::Until.build(&channel("basalBolus"), &channel("activityLevel"), 60.0, &mut NameGen::default());
        assert_eq!(g.to_string(), "basalBolus <= ?k{0,1} U[?u{0,60},?v{0,60}] activityLevel >= ?l{0,4}");
    }

    #[test]
    fn names_are_fresh() {
        let mut n = NameGen::default();
        assert_eq!(n.fresh("a"), "a");
        assert_eq!(n.fresh("a"), "a1");
        assert_eq!(n.fresh("a1"), "a2");
        let mut f = crate::stl::parse("G[0,60](x >= ?a{0,1}) & F[0,60](x <= ?b{0,1})").unwrap();
        f.for_each_value_mut(&mut |v| {
            if let Value::Param(p) = v {
                p.name = "a".into();
            }
        });
        uniquify_params(&mut f);
        let names: Vec<_> = f.params().into_iter().map(|p| p.name).collect();
        assert_eq!(names, vec!["a", "a1"]);
    }

    #[test]
    fn seeding_is_deterministic_and_starts_with_the_cgm_band() {
        let cfg = GaConfig { population: 20, ..GaConfig::default() };
        let reg = VariableRegistry::default();
        let a = seed_population(&Template::ALL, &reg, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = seed_population(&Template::ALL, &reg, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
        assert_eq!(a[0].to_string(), "G[0,60](cgm >= ?a{0,400} & cgm <= ?b{0,400})");
        assert!(a.iter().all(|f| f.depth() <= cfg.max_depth));
        assert!(matches!(
            seed_population(&[], &reg, &cfg, &mut ChaCha8Rng::seed_from_u64(7)),
            Err(LearnError::NoTemplates)
        ));
        assert!(matches!(
            seed_population(&Template::ALL, &VariableRegistry::new(vec![]), &cfg, &mut ChaCha8Rng::seed_from_u64(7)),
            Err(LearnError::EmptyRegistry)
        ));
    }
}
