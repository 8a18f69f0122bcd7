//! CSV forms of aligned series and chunks.
//!
//! Series: `timestamp,<channels in name order>,cgm_state`, one row per grid
//! sample. Chunks: `patient_id,chunk_index,chunk_start,valid,sample,<channels>`,
//! one row per sample of each chunk. Numbers are written in their shortest
//! round-trip decimal form so the output is bit-stable.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{parse_timestamp, Chunk, DatasetError, PatientSeries, SampleState, STEP_MINUTES};
use crate::stl::Trace;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

fn num(v: f64) -> String {
    crate::stl::format_number(v)
}

fn state_name(s: SampleState) -> &'static str {
    match s {
        SampleState::Observed => "observed",
        SampleState::Filled => "filled",
        SampleState::Missing => "missing",
    }
}

pub fn write_series_csv(series: &PatientSeries, out: impl Write) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    let names: Vec<&String> = series.trace.channels().keys().collect();
    let mut header = vec!["timestamp".to_string()];
    header.extend(names.iter().map(|s| s.to_string()));
    header.push("cgm_state".into());
    w.write_record(&header)?;
    for i in 0..series.len() {
        let mut row = vec![series.time_of(i).format(TIMESTAMP_FORMAT).to_string()];
        row.extend(names.iter().map(|n| num(series.trace.channels()[*n][i])));
        row.push(state_name(series.cgm_state[i]).into());
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| DatasetError::Io { path: "<series>".into(), source })?;
    Ok(())
}

pub fn read_series_csv(patient_id: &str, input: impl Read) -> Result<PatientSeries, DatasetError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let names: Vec<String> = header.iter().skip(1).take(header.len().saturating_sub(2)).map(String::from).collect();
    let mut channels: BTreeMap<String, Vec<f64>> = names.iter().map(|n| (n.clone(), Vec::new())).collect();
    let mut cgm_state = Vec::new();
    let mut start = None;
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| DatasetError::MalformedRow { row, message };
        let at = parse_timestamp(&record[0]).ok_or_else(|| bad(format!("invalid timestamp `{}`", &record[0])))?;
        start.get_or_insert(at);
        for (k, name) in names.iter().enumerate() {
            let v: f64 = record[k + 1].parse().map_err(|_| bad(format!("invalid value in `{name}`")))?;
            channels.get_mut(name).expect("known channel").push(v);
        }
        cgm_state.push(match &record[record.len() - 1] {
            "observed" => SampleState::Observed,
            "filled" => SampleState::Filled,
            "missing" => SampleState::Missing,
            other => return Err(bad(format!("invalid cgm_state `{other}`"))),
        });
    }
    let start = start.ok_or(DatasetError::NoEvents)?;
    Ok(PatientSeries {
        patient_id: patient_id.to_string(),
        trace: Trace::new(start, STEP_MINUTES as f64, channels)?,
        cgm_state,
    })
}

pub fn write_chunks_csv(chunks: &[Chunk], out: impl Write) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = chunks.first() else {
        w.flush().map_err(|source| DatasetError::Io { path: "<chunks>".into(), source })?;
        return Ok(());
    };
    let names: Vec<&String> = first.trace.channels().keys().collect();
    let mut header: Vec<String> =
        ["patient_id", "chunk_index", "chunk_start", "valid", "sample"].map(String::from).to_vec();
    header.extend(names.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for c in chunks {
        for i in 0..c.trace.len() {
            let mut row = vec![
                c.patient_id.clone(),
                c.index.to_string(),
                c.start.format(TIMESTAMP_FORMAT).to_string(),
                c.valid.to_string(),
                i.to_string(),
            ];
            row.extend(names.iter().map(|n| num(c.trace.channels()[*n][i])));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|source| DatasetError::Io { path: "<chunks>".into(), source })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{align_resample, detect_exercise, RawRecordStream};
    use chrono::Duration;

    #[test]
    fn series_csv_round_trips() {
        let start = parse_timestamp("2016-05-01T08:00:00").unwrap();
        let mut raw = RawRecordStream::new("p7");
        for k in 0..20 {
            if k != 5 {
                raw.push("cgm", start + Duration::minutes(5 * k), 100.5 + k as f64 / 3.0);
            }
            raw.push("steps", start + Duration::minutes(5 * k), 17.0 * k as f64);
        }
        raw.push("basalBolus", start + Duration::minutes(20), 0.0725);
        let series = detect_exercise(&align_resample(&raw, start, start + Duration::minutes(100)).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_series_csv(&series, &mut buf).unwrap();
        let back = read_series_csv("p7", buf.as_slice()).unwrap();
        assert_eq!(back, series);

        let mut again = Vec::new();
        write_series_csv(&back, &mut again).unwrap();
        assert_eq!(buf, again);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("timestamp,activityLevel,basalBolus,"));
        assert!(text.contains(",filled\n"));
    }
}
