use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{to_millis, TimeUnit};

/// How often a query emits a result (the `EVERY` clause).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Frequency {
    pub number: u64,
    pub unit: TimeUnit,
}

impl Frequency {
    pub fn new(number: u64, unit: TimeUnit) -> Self {
        Frequency { number, unit }
    }

    pub fn millis(&self) -> Result<u64, ModelError> {
        to_millis(self.number, self.unit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationFunction {
    Min,
    Max,
    Mean,
}

impl AggregationFunction {
    pub const ALL: [AggregationFunction; 3] = [
        AggregationFunction::Min,
        AggregationFunction::Max,
        AggregationFunction::Mean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AggregationFunction::Min => "min",
            AggregationFunction::Max => "max",
            AggregationFunction::Mean => "mean",
        }
    }
}

impl fmt::Display for AggregationFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregationFunction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "min" => Ok(AggregationFunction::Min),
            "max" => Ok(AggregationFunction::Max),
            "mean" => Ok(AggregationFunction::Mean),
            other => Err(format!("unknown aggregation `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    /// `[trigger - duration, trigger)`, moving with every trigger.
    Sliding,
    /// `[anchor - duration, trigger)`, anchored at execution start.
    Landmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowSpec {
    pub kind: WindowKind,
    pub number: u64,
    pub unit: TimeUnit,
}

impl WindowSpec {
    pub fn sliding(number: u64, unit: TimeUnit) -> Self {
        WindowSpec {
            kind: WindowKind::Sliding,
            number,
            unit,
        }
    }

    pub fn landmark(number: u64, unit: TimeUnit) -> Self {
        WindowSpec {
            kind: WindowKind::Landmark,
            number,
            unit,
        }
    }

    pub fn duration_millis(&self) -> Result<u64, ModelError> {
        to_millis(self.number, self.unit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HistoricSource {
    pub provider: String,
    pub database: String,
    pub series: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceSpec {
    pub historic: Option<HistoricSource>,
    pub stream: Option<String>,
}

/// A parsed query: frequency, aggregation, window and sources.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuerySpec {
    pub frequency: Frequency,
    pub aggregation: AggregationFunction,
    pub attribute: String,
    pub window: WindowSpec,
    pub sources: SourceSpec,
}

impl fmt::Display for QuerySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::render_query(self))
    }
}
