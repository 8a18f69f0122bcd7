//! Raw per-patient streams, alignment on the 5-minute grid, exercise
//! detection and hourly chunking.

mod chunk;
mod ingest;
mod registry;
mod resample;
mod serialize;

use chrono::NaiveDateTime;
use thiserror::Error;

use crate::stl::{Trace, TraceError};

pub use chunk::{chunk, Chunk, SAMPLES_PER_CHUNK};
pub use ingest::{ingest_csv, ingest_reader, parse_timestamp, RawRecordStream};
pub use registry::{Aggregation, ChannelInfo, VariableRegistry, CSV_COLUMNS};
pub use resample::{
    align_resample, align_resample_span, detect_exercise, SampleState, EXERCISE_ACTIVITY_LEVEL,
    EXERCISE_STEPS, EXERCISE_WINDOW_SAMPLES, MAX_CGM_FILL,
};
pub use serialize::{read_series_csv, write_chunks_csv, write_series_csv, TIMESTAMP_FORMAT};

/// Grid spacing of every aligned series, in minutes.
pub const STEP_MINUTES: i64 = 5;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("row {row}: {message}")]
    MalformedRow { row: u64, message: String },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("missing `timestamp` column")]
    MissingTimestamp,
    #[error("invalid span: start {start} must precede end {end} and lie on the 5-minute grid")]
    InvalidSpan { start: NaiveDateTime, end: NaiveDateTime },
    #[error("stream has no events")]
    NoEvents,
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One patient's channels aligned on the 5-minute grid with nulls resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientSeries {
    pub patient_id: String,
    pub trace: Trace,
    /// How each CGM sample was obtained; `Missing` samples hold 0.
    pub cgm_state: Vec<SampleState>,
}

impl PatientSeries {
    pub fn len(&self) -> usize {
        self.trace.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trace.is_empty()
    }

    pub fn start(&self) -> NaiveDateTime {
        self.trace.start()
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.trace.channel(name)
    }

    /// Timestamp of sample `i`.
    pub fn time_of(&self, i: usize) -> NaiveDateTime {
        self.start() + chrono::Duration::minutes(STEP_MINUTES * i as i64)
    }

    /// Copy with one channel replaced (or added).
    pub fn with_channel(&self, name: &str, values: Vec<f64>) -> Result<Self, DatasetError> {
        let mut channels = self.trace.channels().clone();
        channels.insert(name.to_string(), values);
        Ok(Self {
            patient_id: self.patient_id.clone(),
            trace: Trace::new(self.trace.start(), self.trace.step(), channels)?,
            cgm_state: self.cgm_state.clone(),
        })
    }

    /// Re-expresses the series as a raw stream with one event per retained
    /// sample at its grid time. Zero-valued event samples and missing CGM
    /// samples produce no event.
    pub fn to_raw(&self) -> RawRecordStream {
        let mut raw = RawRecordStream::new(&self.patient_id);
        for name in CSV_COLUMNS {
            let Some(values) = self.channel(name) else { continue };
            for (i, &v) in values.iter().enumerate() {
                let keep = if name == "cgm" {
                    self.cgm_state[i] != SampleState::Missing
                } else {
                    v != 0.0
                };
                if keep {
                    raw.push(name, self.time_of(i), v);
                }
            }
        }
        raw
    }
}
