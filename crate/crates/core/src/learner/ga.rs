use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::genetic::{crossover, mutate};
use super::gpucb::gp_ucb_synthesize;
use super::templates::{seed_population, Template};
use super::{Candidate, GaConfig, GpUcbConfig, LearnError, Target};
use crate::dataset::{Chunk, VariableRegistry};
use crate::labeling::{one_vs_all, LabelThresholds, LabeledDataset, TirClass};
use crate::stl::Formula;

/// Mixes `parts` into one well-spread 64-bit seed (SplitMix64 finalizer).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Ranked candidates plus the best score after each generation.
#[derive(Debug, Clone)]
pub struct Learned {
    pub candidates: Vec<Candidate>,
    pub best_per_generation: Vec<f64>,
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.fitness.total_cmp(&a.fitness))
        .then_with(|| a.ground_text().cmp(&b.ground_text()))
}

/// Scores structures not seen before, in parallel. Each structure gets a
/// GP seed derived from its first appearance, so results do not depend on
/// thread scheduling.
fn evaluate_new(
    population: &[Formula],
    generation: usize,
    ds: &LabeledDataset,
    gp: &GpUcbConfig,
    cache: &mut HashMap<String, Option<Candidate>>,
) {
    let mut fresh: Vec<(String, &Formula, u64)> = Vec::new();
    for (index, f) in population.iter().enumerate() {
        let key = f.to_string();
        if !cache.contains_key(&key) && !fresh.iter().any(|(k, _, _)| *k == key) {
            let seed = derive_seed(&[gp.seed, generation as u64, index as u64]);
            fresh.push((key, f, seed));
        }
    }
    let results: Vec<(String, Option<Candidate>)> = fresh
        .into_par_iter()
        .map(|(key, f, seed)| {
            let cfg = GpUcbConfig { seed, ..gp.clone() };
            let outcome = match gp_ucb_synthesize(f, ds, &cfg) {
                Ok(s) => Some(Candidate::new(f.clone(), s, gp.target)),
                Err(e) => {
                    log::debug!("candidate `{key}` failed: {e}");
                    None
                }
            };
            (key, outcome)
        })
        .collect();
    cache.extend(results);
}

fn tournament<'a, R: Rng + ?Sized>(pop: &'a [Formula], scores: &[f64], size: usize, rng: &mut R) -> &'a Formula {
    let mut best = rng.random_range(0..pop.len());
    for _ in 1..size {
        let other = rng.random_range(0..pop.len());
        if scores[other] > scores[best] {
            best = other;
        }
    }
    &pop[best]
}

/// Genetic search over formula structures, each scored by GP-UCB parameter
/// synthesis. Returns every successfully scored structure, deduplicated on
/// the instantiated formula rounded to 3 decimals and ranked by score.
pub fn learn_with_history(
    ds: &LabeledDataset,
    registry: &VariableRegistry,
    templates: &[Template],
    ga: &GaConfig,
    gp: &GpUcbConfig,
) -> Result<Learned, LearnError> {
    ga.validate()?;
    gp.validate()?;
    if !ds.has_both_labels() {
        return Err(LearnError::SingleLabel);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ga.seed);
    let mut population = seed_population(templates, registry, ga, &mut rng)?;
    let mut cache: HashMap<String, Option<Candidate>> = HashMap::new();
    let mut best_per_generation = Vec::with_capacity(ga.generations + 1);

    for generation in 0..=ga.generations {
        evaluate_new(&population, generation, ds, gp, &mut cache);
        let scores: Vec<f64> = population
            .iter()
            .map(|f| cache[&f.to_string()].as_ref().map_or(f64::NEG_INFINITY, |c| c.score))
            .collect();
        best_per_generation.push(scores.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        if generation == ga.generations {
            break;
        }

        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b].total_cmp(&scores[a]).then_with(|| population[a].to_string().cmp(&population[b].to_string()))
        });
        let mut next: Vec<Formula> = order.iter().take(ga.elitism).map(|&i| population[i].clone()).collect();
        while next.len() < ga.population {
            let a = tournament(&population, &scores, ga.tournament, &mut rng);
            let b = tournament(&population, &scores, ga.tournament, &mut rng);
            let (mut c1, mut c2) = if rng.random_bool(ga.crossover_rate) {
                crossover(a, b, ga, &mut rng)
            } else {
                (a.clone(), b.clone())
            };
            for child in [&mut c1, &mut c2] {
                if rng.random_bool(ga.mutation_rate) {
                    *child = mutate(child, registry, ga, &mut rng);
                }
            }
            next.push(c1);
            if next.len() < ga.population {
                next.push(c2);
            }
        }
        population = next;
    }

    let mut unique: BTreeMap<String, Candidate> = BTreeMap::new();
    for c in cache.into_values().flatten() {
        let key = c.ground().rounded(3).to_string();
        match unique.get(&key) {
            Some(existing) if rank(existing, &c) != Ordering::Greater => {}
            _ => {
                unique.insert(key, c);
            }
        }
    }
    let mut candidates: Vec<Candidate> = unique.into_values().collect();
    candidates.sort_by(rank);
    Ok(Learned { candidates, best_per_generation })
}

pub fn learn(
    ds: &LabeledDataset,
    registry: &VariableRegistry,
    templates: &[Template],
    ga: &GaConfig,
    gp: &GpUcbConfig,
) -> Result<Vec<Candidate>, LearnError> {
    learn_with_history(ds, registry, templates, ga, gp).map(|l| l.candidates)
}

/// Ranked candidates per class; classes whose label set lacks positives or
/// negatives are listed in `skipped` with the reason.
#[derive(Debug, Clone, Default)]
pub struct MulticlassResult {
    pub per_class: BTreeMap<TirClass, Vec<Candidate>>,
    pub skipped: BTreeMap<TirClass, String>,
}

/// One-vs-all learning for each of the four classes. Every class uses the
/// same GA/GP seeds, so its result does not depend on the others.
pub fn learn_multiclass(
    chunks: &[Chunk],
    registry: &VariableRegistry,
    templates: &[Template],
    thresholds: &LabelThresholds,
    ga: &GaConfig,
    gp: &GpUcbConfig,
) -> Result<MulticlassResult, LearnError> {
    let mut out = MulticlassResult::default();
    for class in TirClass::ALL {
        let ds = one_vs_all(chunks, class, thresholds);
        match learn(&ds, registry, templates, ga, gp) {
            Ok(list) => {
                out.per_class.insert(class, list);
            }
            Err(LearnError::SingleLabel) => {
                let (pos, neg) = ds.counts();
                log::info!("class {class}: skipped ({pos} positive, {neg} negative chunks)");
                out.skipped.insert(class, format!("single-label dataset ({pos} positive, {neg} negative)"));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

impl Candidate {
    pub(crate) fn score_for(target: Target, fitness: f64, accuracy: f64) -> f64 {
        match target {
            Target::Fitness => fitness,
            Target::Accuracy => accuracy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_per_part() {
        assert_ne!(derive_seed(&[1, 0, 0]), derive_seed(&[1, 0, 1]));
        assert_ne!(derive_seed(&[1, 1, 0]), derive_seed(&[1, 0, 1]));
        assert_eq!(derive_seed(&[4, 2]), derive_seed(&[4, 2]));
    }
}
