use chrono::{Duration, NaiveDateTime, Timelike};

use super::{PatientSeries, SampleState, STEP_MINUTES};
use crate::stl::Trace;

/// Samples in one hour-long chunk.
pub const SAMPLES_PER_CHUNK: usize = 12;

/// One hour of aligned patient data, the unit of labeling and learning.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub patient_id: String,
    pub index: usize,
    pub start: NaiveDateTime,
    pub trace: Trace,
    /// False when any CGM sample is missing after gap filling; invalid
    /// chunks are excluded from labeling and learning.
    pub valid: bool,
}

/// Samples from the series start to the first full-hour boundary at or
/// after it.
fn hour_offset(start: NaiveDateTime) -> usize {
    let minutes_past = i64::from(start.minute());
    if minutes_past == 0 && start.second() == 0 {
        0
    } else {
        ((60 - minutes_past) / STEP_MINUTES) as usize
    }
}

/// Splits the series into consecutive non-overlapping 12-sample chunks
/// starting at the first hour boundary; a trailing partial hour is dropped.
pub fn chunk(series: &PatientSeries) -> Vec<Chunk> {
    let offset = hour_offset(series.start());
    let usable = series.len().saturating_sub(offset);
    let count = usable / SAMPLES_PER_CHUNK;
    if count == 0 {
        log::warn!(
            "patient {}: series of {} samples holds no full hour",
            series.patient_id,
            series.len()
        );
        return Vec::new();
    }
    (0..count)
        .map(|k| {
            let from = offset + k * SAMPLES_PER_CHUNK;
            let to = from + SAMPLES_PER_CHUNK;
            let channels = series
                .trace
                .channels()
                .iter()
                .map(|(name, values)| (name.clone(), values[from..to].to_vec()))
                .collect();
            let start = series.start() + Duration::minutes(STEP_MINUTES * from as i64);
            Chunk {
                patient_id: series.patient_id.clone(),
                index: k,
                start,
                trace: Trace::new(start, series.trace.step(), channels)
                    .expect("slices of a valid trace are valid"),
                valid: series.cgm_state[from..to].iter().all(|&s| s != SampleState::Missing),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{align_resample, parse_timestamp, RawRecordStream};

    fn series(start: &str, samples: usize) -> PatientSeries {
        let start = parse_timestamp(start).unwrap();
        let mut raw = RawRecordStream::new("p");
        for k in 0..samples {
            raw.push("cgm", start + Duration::minutes(5 * k as i64), 100.0 + k as f64);
        }
        align_resample(&raw, start, start + Duration::minutes(5 * samples as i64)).unwrap()
    }

    #[test]
    fn whole_hours_only() {
        assert_eq!(chunk(&series("2016-05-01T08:00:00", 36)).len(), 3);
        let c = chunk(&series("2016-05-01T08:00:00", 40));
        assert_eq!(c.len(), 3);
        assert!(c.iter().all(|c| c.trace.len() == SAMPLES_PER_CHUNK && c.valid));
        assert!(chunk(&series("2016-05-01T08:00:00", 11)).is_empty());
    }

    #[test]
    fn chunks_start_on_the_hour() {
        let s = series("2016-05-01T08:00:00", 36);
        for (k, c) in chunk(&s).iter().enumerate() {
            assert_eq!(c.index, k);
            assert_eq!(c.start, s.start() + Duration::minutes(60 * k as i64));
            assert_eq!(c.trace.channel("cgm").unwrap()[0], 100.0 + 12.0 * k as f64);
        }
        let late = series("2016-05-01T08:40:00", 30);
        let c = chunk(&late);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].start, parse_timestamp("2016-05-01T09:00:00").unwrap());
        assert_eq!(c[0].trace.channel("cgm").unwrap()[0], 104.0);
    }

    #[test]
    fn missing_cgm_invalidates_chunk() {
        let start = parse_timestamp("2016-05-01T08:00:00").unwrap();
        let mut raw = RawRecordStream::new("p");
        for k in (0..24).filter(|k| !(14..18).contains(k)) {
            raw.push("cgm", start + Duration::minutes(5 * k), 120.0);
        }
        let s = align_resample(&raw, start, start + Duration::hours(2)).unwrap();
        let c = chunk(&s);
        assert!(c[0].valid);
        assert!(!c[1].valid);
    }
}
