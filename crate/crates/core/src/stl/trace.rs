use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use thiserror::Error;

/// Default sampling period in minutes.
pub const DEFAULT_STEP_MINUTES: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("trace has no channels")]
    NoChannels,
    #[error("trace channels must hold at least one sample")]
    Empty,
    #[error("channel `{name}` has {found} samples, expected {expected}")]
    LengthMismatch { name: String, found: usize, expected: usize },
    #[error("sampling step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("channel `{0}` contains a non-finite sample")]
    NonFinite(String),
}

/// Multivariate signal sampled on a uniform grid: sample `i` of every
/// channel is taken at `start + i * step` minutes.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    start: NaiveDateTime,
    step: f64,
    len: usize,
    channels: BTreeMap<String, Vec<f64>>,
}

impl Trace {
    pub fn new(
        start: NaiveDateTime,
        step: f64,
        channels: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self, TraceError> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(TraceError::InvalidStep(step));
        }
        let expected = channels.values().next().ok_or(TraceError::NoChannels)?.len();
        if expected == 0 {
            return Err(TraceError::Empty);
        }
        for (name, samples) in &channels {
            if samples.len() != expected {
                return Err(TraceError::LengthMismatch {
                    name: name.clone(),
                    found: samples.len(),
                    expected,
                });
            }
            if samples.iter().any(|v| !v.is_finite()) {
                return Err(TraceError::NonFinite(name.clone()));
            }
        }
        Ok(Self { start, step, len: expected, channels })
    }

    /// Trace on the default 5-minute grid starting at the Unix epoch.
    pub fn from_channels<I, S>(channels: I) -> Result<Self, TraceError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let channels = channels.into_iter().map(|(k, v)| (k.into(), v)).collect();
        Self::new(NaiveDateTime::default(), DEFAULT_STEP_MINUTES, channels)
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Time offset of the last sample.
    pub fn horizon(&self) -> f64 {
        (self.len - 1) as f64 * self.step
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.get(name).map(Vec::as_slice)
    }

    pub fn channels(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.channels
    }

    /// Grid index for a time offset, if it lies on the grid inside the trace.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        if !t.is_finite() || t < 0.0 {
            return None;
        }
        let k = (t / self.step).round();
        let on_grid = (k * self.step - t).abs() <= 1e-9 * t.abs().max(1.0);
        (on_grid && (k as usize) < self.len).then_some(k as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_channels() {
        let err = Trace::from_channels([("a", vec![1.0, 2.0]), ("b", vec![1.0])]).unwrap_err();
        assert!(matches!(err, TraceError::LengthMismatch { .. }));
        assert_eq!(Trace::from_channels([("a", vec![])]).unwrap_err(), TraceError::Empty);
        assert_eq!(
            Trace::from_channels(Vec::<(String, Vec<f64>)>::new()).unwrap_err(),
            TraceError::NoChannels
        );
    }

    #[test]
    fn grid_lookup() {
        let tr = Trace::from_channels([("a", vec![0.0; 12])]).unwrap();
        assert_eq!(tr.index_of(0.0), Some(0));
        assert_eq!(tr.index_of(55.0), Some(11));
        assert_eq!(tr.index_of(60.0), None);
        assert_eq!(tr.index_of(2.5), None);
        assert_eq!(tr.index_of(-5.0), None);
        assert_eq!(tr.horizon(), 55.0);
    }
}
