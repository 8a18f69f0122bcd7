//! Synthetic patient cohorts with a ground-truth manifest.
//!
//! This is a test fixture, not a physiological model. Each patient gets a
//! planted CGM band: glucose follows a mean-reverting walk with Gaussian noise,
//! first-order rises after meals and drops during exercise, and is clamped to
//! the band. Excursions outside the band are planted explicitly: spikes after
//! meals whose bolus was missed, and dips during some exercise sessions.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{parse_timestamp, RawRecordStream, CSV_COLUMNS, TIMESTAMP_FORMAT};
use crate::learner::derive_seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid cohort spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCohortSpec {
    pub patients: usize,
    pub days: usize,
    /// First timestamp of every patient's record, `YYYY-MM-DDTHH:MM:SS`.
    pub start: String,
    pub seed: u64,
    /// Planted band edges are drawn uniformly from these ranges.
    pub band_low: (f64, f64),
    pub band_high: (f64, f64),
    pub meals_per_day: usize,
    pub meal_carbs: (f64, f64),
    /// Chance that a meal's bolus is skipped, producing a spike.
    pub missed_bolus_prob: f64,
    /// Spike peaks are drawn from this range (mg/dL, above the band).
    pub spike_peak: (f64, f64),
    pub exercise_per_day: f64,
    /// Chance that an exercise session drives glucose below the band.
    pub exercise_dip_prob: f64,
    pub dip_floor: (f64, f64),
    /// Excursion length in 5-minute samples.
    pub excursion_samples: (usize, usize),
    pub smbg_per_day: usize,
    /// CGM sensor dropouts per day, each 1 to 4 samples long.
    pub dropouts_per_day: f64,
    pub cgm_noise: f64,
}

impl Default for SyntheticCohortSpec {
    fn default() -> Self {
        Self {
            patients: 4,
            days: 3,
            start: "2016-05-02T00:00:00".into(),
            seed: 1,
            band_low: (71.0, 76.0),
            band_high: (175.0, 179.0),
            meals_per_day: 3,
            meal_carbs: (20.0, 90.0),
            missed_bolus_prob: 0.35,
            spike_peak: (182.0, 215.0),
            exercise_per_day: 1.0,
            exercise_dip_prob: 0.5,
            dip_floor: (54.0, 68.0),
            excursion_samples: (2, 8),
            smbg_per_day: 4,
            dropouts_per_day: 0.15,
            cgm_noise: 6.0,
        }
    }
}

impl SyntheticCohortSpec {
    pub fn validate(&self) -> Result<NaiveDateTime, SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        let start = parse_timestamp(&self.start).ok_or_else(|| SynthError::InvalidSpec("bad start".into()))?;
        if start.and_utc().timestamp() % 300 != 0 {
            return bad("start must lie on the 5-minute grid");
        }
        if self.days == 0 {
            return bad("days must be positive");
        }
        for (lo, hi) in [self.band_low, self.band_high, self.meal_carbs, self.spike_peak, self.dip_floor] {
            if !(lo <= hi) {
                return bad("ranges must be ordered");
            }
        }
        if !(self.band_low.1 < self.band_high.0) {
            return bad("band low edge must lie below the high edge");
        }
        if self.spike_peak.0 <= self.band_high.1 || self.dip_floor.1 >= self.band_low.0 {
            return bad("excursions must leave the band");
        }
        if self.excursion_samples.0 < 1 || self.excursion_samples.0 > self.excursion_samples.1 {
            return bad("excursion length range must be ordered and positive");
        }
        for p in [self.missed_bolus_prob, self.exercise_dip_prob] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        Ok(start)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedMeal {
    pub at: String,
    pub carbs: f64,
    pub bolused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedExercise {
    pub start: String,
    pub minutes: i64,
    pub level: u8,
    pub dip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcursionKind {
    Spike,
    Dip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedExcursion {
    pub kind: ExcursionKind,
    pub start: String,
    pub samples: usize,
    /// Peak for spikes, floor for dips.
    pub extreme: f64,
}

/// Ground truth for one generated patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPatient {
    pub patient_id: String,
    pub band: (f64, f64),
    /// Basal insulin per 5-minute sample outside exercise.
    pub basal_per_sample: f64,
    pub meals: Vec<PlantedMeal>,
    pub exercise: Vec<PlantedExercise>,
    pub excursions: Vec<PlantedExcursion>,
    pub smbg_checks: usize,
    pub cgm_dropouts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SyntheticCohortSpec,
    pub patients: Vec<PlantedPatient>,
}

pub struct GeneratedPatient {
    pub planted: PlantedPatient,
    pub raw: RawRecordStream,
}

fn round(v: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (v * s).round() / s
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn stamp(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

/// Generates one patient; `index` selects an independent random stream.
pub fn generate_patient(spec: &SyntheticCohortSpec, index: usize) -> Result<GeneratedPatient, SynthError> {
    let start = spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[spec.seed, index as u64]));
    let id = format!("patient{:02}", index + 1);
    let minutes = spec.days as i64 * 24 * 60;
    let samples = (minutes / 5) as usize;
    let at_min = |m: i64| start + Duration::minutes(m);

    let band = (round(uniform(&mut rng, spec.band_low), 1), round(uniform(&mut rng, spec.band_high), 1));
    let basal_per_sample = round(rng.random_range(0.06..0.1), 4);

    // per-minute activity plan
    let mut level = vec![1u8; minutes as usize];
    let mut exercise = Vec::new();
    let mut dips = Vec::new();
    for day in 0..spec.days as i64 {
        let sessions = spec.exercise_per_day.floor() as usize
            + usize::from(rng.random_bool(spec.exercise_per_day.fract()));
        for _ in 0..sessions {
            let begin = day * 1440 + rng.random_range(8 * 60..20 * 60) / 5 * 5;
            let length = rng.random_range(6..=12) * 5;
            let lvl = rng.random_range(3..=4);
            let dip = rng.random_bool(spec.exercise_dip_prob);
            for m in begin..(begin + length).min(minutes) {
                level[m as usize] = lvl;
            }
            if dip {
                dips.push(((begin + length / 2) / 5) as usize);
            }
            exercise.push(PlantedExercise { start: stamp(at_min(begin)), minutes: length, level: lvl, dip });
        }
    }

    let mut meals = Vec::new();
    let mut spikes = Vec::new();
    let mut carbs_at = vec![0.0; samples];
    let mut bolus_at = vec![0.0; samples];
    let anchors = [7 * 60 + 30, 12 * 60 + 30, 18 * 60 + 30, 15 * 60, 21 * 60];
    for day in 0..spec.days as i64 {
        for k in 0..spec.meals_per_day {
            let base = anchors[k % anchors.len()] + 60 * (k / anchors.len()) as i64;
            let m = day * 1440 + base + rng.random_range(-30..=30);
            if m < 0 || m >= minutes {
                continue;
            }
            let carbs = round(uniform(&mut rng, spec.meal_carbs), 0);
            let bolused = !rng.random_bool(spec.missed_bolus_prob);
            let s = (m / 5) as usize;
            carbs_at[s] += carbs;
            if bolused {
                bolus_at[s] += round(carbs / 10.0, 2);
            } else {
                spikes.push(s + 6);
            }
            meals.push(PlantedMeal { at: stamp(at_min(m)), carbs, bolused });
        }
    }

    // CGM walk clamped to the band
    let noise = Normal::new(0.0, spec.cgm_noise.max(0.0)).expect("valid sigma");
    let mid = (band.0 + band.1) / 2.0;
    let mut cgm = vec![0.0; samples];
    let mut x = mid;
    let mut meal_drive = 0.0;
    for s in 0..samples {
        meal_drive = 0.85 * meal_drive + 1.6 * carbs_at[s];
        let exercising = level[s * 5..s * 5 + 5].iter().any(|&l| l >= 3);
        let exercise_drive = if exercising { -12.0 } else { 0.0 };
        x += 0.08 * (mid - x) + 0.25 * meal_drive + exercise_drive + noise.sample(&mut rng);
        x = x.clamp(band.0, band.1);
        cgm[s] = round(x, 1);
    }

    let mut excursions = Vec::new();
    let mut corrections = vec![0.0; samples];
    let mut plant = |kind: ExcursionKind, center: usize, rng: &mut ChaCha8Rng, cgm: &mut [f64]| {
        let len = rng.random_range(spec.excursion_samples.0..=spec.excursion_samples.1);
        let first = center.saturating_sub(len / 2);
        if first + len > samples {
            return;
        }
        let range = match kind {
            ExcursionKind::Spike => spec.spike_peak,
            ExcursionKind::Dip => spec.dip_floor,
        };
        let extreme = round(uniform(rng, range), 1);
        for k in 0..len {
            // triangular shape: edges stay just outside the band, the middle reaches the extreme
            let edge = match kind {
                ExcursionKind::Spike => range.0,
                ExcursionKind::Dip => range.1,
            };
            let w = 1.0 - ((k as f64 + 0.5) / len as f64 - 0.5).abs() * 2.0;
            cgm[first + k] = round(edge + (extreme - edge) * w, 1);
        }
        if kind == ExcursionKind::Spike {
            corrections[(first + len / 2).min(samples - 1)] += round(rng.random_range(1.0..3.0), 2);
        }
        excursions.push(PlantedExcursion { kind, start: stamp(at_min(first as i64 * 5)), samples: len, extreme });
    };
    for &s in &spikes {
        plant(ExcursionKind::Spike, s, &mut rng, &mut cgm);
    }
    for &s in &dips {
        plant(ExcursionKind::Dip, s, &mut rng, &mut cgm);
    }
    excursions.sort_by(|a, b| a.start.cmp(&b.start));

    let mut present = vec![true; samples];
    let mut cgm_dropouts = 0;
    for day in 0..spec.days {
        let count = spec.dropouts_per_day.floor() as usize + usize::from(rng.random_bool(spec.dropouts_per_day.fract()));
        for _ in 0..count {
            let s = day * 288 + rng.random_range(0..288);
            let len = rng.random_range(1..=4);
            for k in s..(s + len).min(samples) {
                present[k] = false;
            }
            cgm_dropouts += 1;
        }
    }

    let mut raw = RawRecordStream::new(&id);
    for s in 0..samples {
        let t = at_min(5 * s as i64);
        if present[s] {
            raw.push("cgm", t, cgm[s]);
        }
        let basal = if level[s * 5] >= 3 { basal_per_sample * 0.5 } else { basal_per_sample };
        raw.push("basalBolus", t, round(basal, 4));
        if carbs_at[s] > 0.0 {
            raw.push("meal", t, carbs_at[s]);
        }
        if bolus_at[s] > 0.0 {
            raw.push("mealBolus", t, bolus_at[s]);
        }
        if corrections[s] > 0.0 {
            raw.push("corrBolus", t, corrections[s]);
        }
        raw.push("totalBolus", t, round(bolus_at[s] + corrections[s] + basal, 4));
    }
    for m in 0..minutes {
        let t = at_min(m);
        let lvl = level[m as usize];
        let (hr, steps) = if lvl >= 3 {
            (rng.random_range(115.0..150.0), rng.random_range(105.0..140.0))
        } else if rng.random_bool(0.1) {
            (rng.random_range(70.0..95.0), rng.random_range(10.0..60.0))
        } else {
            (rng.random_range(58.0..72.0), 0.0)
        };
        let steps: f64 = round(steps, 0);
        raw.push("hr", t, round(hr, 0));
        raw.push("activityLevel", t, f64::from(if steps > 0.0 && lvl < 3 { 2 } else { lvl }));
        if steps > 0.0 {
            raw.push("steps", t, steps);
            raw.push("distance", t, round(steps * 0.0005, 4));
        }
        raw.push("calories", t, round(1.2 + steps * 0.045, 2));
    }
    let mut smbg_checks = 0;
    for day in 0..spec.days {
        for _ in 0..spec.smbg_per_day {
            let s = day * 288 + rng.random_range(0..288);
            let value = round(cgm[s] + rng.random_range(-8.0..8.0), 0);
            let t = at_min(5 * s as i64);
            raw.push("smbg", t, value);
            if value < 70.0 {
                raw.push("smbgHypo", t, 1.0);
            }
            smbg_checks += 1;
        }
    }
    raw.sort();

    Ok(GeneratedPatient {
        planted: PlantedPatient {
            patient_id: id,
            band,
            basal_per_sample,
            meals,
            exercise,
            excursions,
            smbg_checks,
            cgm_dropouts,
        },
        raw,
    })
}

pub fn generate(spec: &SyntheticCohortSpec) -> Result<Vec<GeneratedPatient>, SynthError> {
    spec.validate()?;
    (0..spec.patients).map(|i| generate_patient(spec, i)).collect()
}

/// Renders a raw stream in the input CSV schema, one row per distinct
/// timestamp.
pub fn raw_to_csv(raw: &RawRecordStream) -> String {
    let mut rows: std::collections::BTreeMap<NaiveDateTime, [Option<f64>; 13]> = Default::default();
    for (col, name) in CSV_COLUMNS.iter().enumerate() {
        for &(t, v) in raw.events(name) {
            rows.entry(t).or_insert([None; 13])[col] = Some(v);
        }
    }
    let mut out = String::from("timestamp");
    for name in CSV_COLUMNS {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (t, cells) in rows {
        out.push_str(&stamp(t));
        for cell in cells {
            out.push(',');
            if let Some(v) = cell {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    out
}

/// Writes `<patient>.csv` per patient and `manifest.json` into `dir`.
pub fn write_cohort(spec: &SyntheticCohortSpec, dir: &Path) -> Result<Manifest, SynthError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| SynthError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let patients = generate(spec)?;
    for p in &patients {
        let path = dir.join(format!("{}.csv", p.planted.patient_id));
        fs::write(&path, raw_to_csv(&p.raw)).map_err(io(&path))?;
    }
    let manifest = Manifest { spec: spec.clone(), patients: patients.into_iter().map(|p| p.planted).collect() };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(io(&path))?;
    Ok(manifest)
}
