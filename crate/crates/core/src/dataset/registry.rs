use serde::{Deserialize, Serialize};

use crate::stl::VariableId;

/// Data columns of the per-patient input CSV, in header order (after
/// `timestamp`).
pub const CSV_COLUMNS: [&str; 13] = [
    "cgm",
    "totalBolus",
    "mealBolus",
    "basalBolus",
    "corrBolus",
    "meal",
    "smbg",
    "smbgHypo",
    "hr",
    "steps",
    "calories",
    "distance",
    "activityLevel",
];

/// How raw events inside a 5-minute window collapse into one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Last observation in the window.
    Last,
    Sum,
    Mean,
    Max,
    /// Computed from other channels after alignment.
    Derived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelInfo {
    pub name: VariableId,
    pub aggregation: Aggregation,
    /// Default search range for thresholds on this channel.
    pub range: (f64, f64),
}

/// The set of signal channels known to the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableRegistry {
    channels: Vec<ChannelInfo>,
}

impl Default for VariableRegistry {
    fn default() -> Self {
        use Aggregation::*;
        let table: [(&str, Aggregation, (f64, f64)); 14] = [
            ("cgm", Last, (0.0, 400.0)),
            ("totalBolus", Sum, (0.0, 20.0)),
            ("mealBolus", Sum, (0.0, 20.0)),
            ("basalBolus", Sum, (0.0, 1.0)),
            ("corrBolus", Sum, (0.0, 20.0)),
            ("meal", Sum, (0.0, 200.0)),
            ("smbg", Last, (0.0, 400.0)),
            ("smbgHypo", Max, (0.0, 1.0)),
            ("hr", Mean, (0.0, 220.0)),
            ("steps", Sum, (0.0, 1500.0)),
            ("calories", Sum, (0.0, 100.0)),
            ("distance", Sum, (0.0, 1.0)),
            ("activityLevel", Max, (0.0, 4.0)),
            ("exercising", Derived, (0.0, 1.0)),
        ];
        Self {
            channels: table
                .into_iter()
                .map(|(name, aggregation, range)| ChannelInfo {
                    name: VariableId::new(name).expect("static channel names are valid"),
                    aggregation,
                    range,
                })
                .collect(),
        }
    }
}

impl VariableRegistry {
    pub fn new(channels: Vec<ChannelInfo>) -> Self {
        Self { channels }
    }

    pub fn channels(&self) -> &[ChannelInfo] {
        &self.channels
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|c| c.name.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&ChannelInfo> {
        self.channels.iter().find(|c| c.name.as_str() == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Restricts the registry to `names`, keeping registry order. Unknown
    /// names are ignored.
    pub fn subset<S: AsRef<str>>(&self, names: &[S]) -> Self {
        Self {
            channels: self
                .channels
                .iter()
                .filter(|c| names.iter().any(|n| n.as_ref() == c.name.as_str()))
                .cloned()
                .collect(),
        }
    }
}
