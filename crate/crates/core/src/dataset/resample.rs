use std::collections::BTreeMap;

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::{
    Aggregation, DatasetError, PatientSeries, RawRecordStream, VariableRegistry, STEP_MINUTES,
};
use crate::stl::Trace;

/// Longest run of missing CGM samples that is forward-filled.
pub const MAX_CGM_FILL: usize = 2;
/// Activity level at or above which a sample counts as exercise.
pub const EXERCISE_ACTIVITY_LEVEL: f64 = 3.0;
/// Step total over the trailing window at or above which a sample counts as exercise.
pub const EXERCISE_STEPS: f64 = 3000.0;
/// Trailing window for the step criterion: 6 samples = 30 minutes.
pub const EXERCISE_WINDOW_SAMPLES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleState {
    Observed,
    /// Copied forward from the previous observation.
    Filled,
    Missing,
}

const STEP_SECONDS: i64 = STEP_MINUTES * 60;

fn on_grid(t: NaiveDateTime) -> bool {
    t.second() == 0 && t.nanosecond() == 0 && i64::from(t.minute()) % STEP_MINUTES == 0
}

/// Aligns `raw` on the grid `start, start+5, ...` strictly before `end`.
///
/// Sample `k` at time `t_k` summarizes the events in `(t_k - 5min, t_k]`
/// using each channel's [`Aggregation`]; windows without events hold 0.
/// CGM gaps of up to [`MAX_CGM_FILL`] samples are forward-filled; longer gaps
/// stay `Missing`.
pub fn align_resample(
    raw: &RawRecordStream,
    start: NaiveDateTime,
    end: NaiveDateTime,
) -> Result<PatientSeries, DatasetError> {
    if start >= end || !on_grid(start) {
        return Err(DatasetError::InvalidSpan { start, end });
    }
    let n = ((end - start).num_seconds() + STEP_SECONDS - 1) / STEP_SECONDS;
    let n = n as usize;
    let registry = VariableRegistry::default();

    let mut channels = BTreeMap::new();
    let mut cgm_present = vec![false; n];
    for info in registry.channels() {
        let name = info.name.as_str();
        let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); n];
        for &(at, value) in raw.events(name) {
            let secs = (at - start).num_seconds();
            // ceil division: an event exactly on t_k belongs to sample k
            let k = secs.div_euclid(STEP_SECONDS) + i64::from(secs.rem_euclid(STEP_SECONDS) != 0);
            if (0..n as i64).contains(&k) {
                buckets[k as usize].push(value);
            }
        }
        if name == "cgm" {
            for (k, b) in buckets.iter().enumerate() {
                cgm_present[k] = !b.is_empty();
            }
        }
        let samples = buckets
            .iter()
            .map(|b| {
                if b.is_empty() {
                    return 0.0;
                }
                match info.aggregation {
                    Aggregation::Last => *b.last().unwrap(),
                    Aggregation::Sum => b.iter().sum(),
                    Aggregation::Mean => b.iter().sum::<f64>() / b.len() as f64,
                    Aggregation::Max => b.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Aggregation::Derived => 0.0,
                }
            })
            .collect::<Vec<f64>>();
        channels.insert(name.to_string(), samples);
    }

    let cgm = channels.get_mut("cgm").expect("registry has cgm");
    let cgm_state = fill_cgm(cgm, &cgm_present);
    let trace = Trace::new(start, STEP_MINUTES as f64, channels)?;
    Ok(PatientSeries { patient_id: raw.patient_id.clone(), trace, cgm_state })
}

/// Aligns over the smallest grid span covering every event.
pub fn align_resample_span(raw: &RawRecordStream) -> Result<PatientSeries, DatasetError> {
    let (first, last) = raw.span().ok_or(DatasetError::NoEvents)?;
    let floor = |t: NaiveDateTime| {
        let base = t.date().and_hms_opt(t.hour(), 0, 0).expect("valid hour");
        let secs = (t - base).num_seconds();
        base + chrono::Duration::seconds(secs - secs % STEP_SECONDS)
    };
    let step = chrono::Duration::seconds(STEP_SECONDS);
    let start = floor(first);
    // the sample at ceil(last) holds the last event
    let last_sample = if floor(last) == last { last } else { floor(last) + step };
    align_resample(raw, start, last_sample + step)
}

fn fill_cgm(values: &mut [f64], present: &[bool]) -> Vec<SampleState> {
    let mut state: Vec<SampleState> = present
        .iter()
        .map(|&p| if p { SampleState::Observed } else { SampleState::Missing })
        .collect();
    let mut i = 0;
    while i < values.len() {
        if present[i] {
            i += 1;
            continue;
        }
        let run_end = (i..values.len()).find(|&j| present[j]).unwrap_or(values.len());
        let has_prior = i > 0 && state[i - 1] != SampleState::Missing;
        if has_prior && run_end - i <= MAX_CGM_FILL {
            let fill = values[i - 1];
            for k in i..run_end {
                values[k] = fill;
                state[k] = SampleState::Filled;
            }
        }
        i = run_end;
    }
    state
}

/// Populates `exercising`: 1 where the activity level is at least 3 or the
/// steps over the trailing 30 minutes (including the current sample) reach
/// 3000.
pub fn detect_exercise(series: &PatientSeries) -> Result<PatientSeries, DatasetError> {
    let n = series.len();
    let zeros = vec![0.0; n];
    let activity = series.channel("activityLevel").unwrap_or(&zeros);
    let steps = series.channel("steps").unwrap_or(&zeros);
    let exercising = (0..n)
        .map(|i| {
            let from = (i + 1).saturating_sub(EXERCISE_WINDOW_SAMPLES);
            let recent: f64 = steps[from..=i].iter().sum();
            if activity[i] >= EXERCISE_ACTIVITY_LEVEL || recent >= EXERCISE_STEPS {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    series.with_channel("exercising", exercising)
}
