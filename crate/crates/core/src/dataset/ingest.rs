use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use super::{DatasetError, CSV_COLUMNS};

/// Irregularly sampled `(timestamp, value)` events per variable.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawRecordStream {
    pub patient_id: String,
    pub events: BTreeMap<String, Vec<(NaiveDateTime, f64)>>,
}

impl RawRecordStream {
    pub fn new(patient_id: &str) -> Self {
        Self { patient_id: patient_id.to_string(), events: BTreeMap::new() }
    }

    pub fn push(&mut self, variable: &str, at: NaiveDateTime, value: f64) {
        self.events.entry(variable.to_string()).or_default().push((at, value));
    }

    pub fn events(&self, variable: &str) -> &[(NaiveDateTime, f64)] {
        self.events.get(variable).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn event_count(&self) -> usize {
        self.events.values().map(Vec::len).sum()
    }

    /// Earliest and latest event time over all variables.
    pub fn span(&self) -> Option<(NaiveDateTime, NaiveDateTime)> {
        let times = self.events.values().flatten().map(|(t, _)| *t);
        let first = times.clone().min()?;
        let last = times.max()?;
        Some((first, last))
    }

    /// Stable-sorts every variable's events by time, warning when a variable
    /// was out of order.
    pub fn sort(&mut self) {
        for (name, events) in &mut self.events {
            if events.windows(2).any(|w| w[0].0 > w[1].0) {
                log::warn!(
                    "patient {}: `{name}` timestamps are not monotone; sorting",
                    self.patient_id
                );
                events.sort_by_key(|(t, _)| *t);
            }
        }
    }
}

/// Accepts `YYYY-MM-DDTHH:MM[:SS]`, the same with a space separator, or
/// RFC 3339 with an offset (the local wall-clock time is kept).
pub fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    let text = text.trim();
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(text, fmt) {
            return Some(t);
        }
    }
    DateTime::parse_from_rfc3339(text).ok().map(|t| t.naive_local())
}

/// Reads one patient's CSV; the patient id is the file stem.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<RawRecordStream, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ingest_reader(&id, file)
}

pub fn ingest_reader(patient_id: &str, reader: impl Read) -> Result<RawRecordStream, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let mut ts_col = None;
    let mut columns = Vec::new();
    for (idx, name) in header.iter().enumerate() {
        if name == "timestamp" {
            ts_col = Some(idx);
        } else if CSV_COLUMNS.contains(&name) {
            columns.push((idx, name.to_string()));
        } else {
            return Err(DatasetError::UnknownColumn(name.to_string()));
        }
    }
    let ts_col = ts_col.ok_or(DatasetError::MissingTimestamp)?;

    let mut stream = RawRecordStream::new(patient_id);
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let row = e.position().map(|p| p.line()).unwrap_or(0);
            DatasetError::MalformedRow { row, message: e.to_string() }
        })?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        let raw_ts = record.get(ts_col).unwrap_or("");
        let at = parse_timestamp(raw_ts).ok_or_else(|| DatasetError::MalformedRow {
            row,
            message: format!("invalid timestamp `{raw_ts}`"),
        })?;
        for (idx, name) in &columns {
            let cell = record.get(*idx).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            let value: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| DatasetError::MalformedRow {
                    row,
                    message: format!("invalid value `{cell}` in column `{name}`"),
                })?;
            stream.push(name, at, value);
        }
    }
    stream.sort();
    Ok(stream)
}
