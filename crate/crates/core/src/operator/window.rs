use serde::{Deserialize, Serialize};

use crate::error::OperatorError;
use crate::model::{Interval, Timestamp};
use crate::query::{AggregationFunction, Frequency, QuerySpec, WindowKind, WindowSpec};

/// Everything a window-aggregate operator needs, derived from a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub trigger: Frequency,
    pub window: WindowSpec,
    pub aggregation: AggregationFunction,
    pub attribute: String,
    /// How long after a trigger instant stragglers are still waited for.
    pub allowed_lateness_ms: u64,
    /// How far before the split the live stream reaches when no historic
    /// source backs the window. `None` means the stream is complete.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub live_retention_ms: Option<u64>,
    /// Execution start, the trigger origin and landmark anchor. Defaults to
    /// the clock reading when the operator starts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Timestamp>,
    /// Last instant at which a trigger may fire.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until: Option<Timestamp>,
    /// History/live boundary. Defaults to `start`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Timestamp>,
}

impl OperatorConfig {
    pub fn from_spec(spec: &QuerySpec) -> Self {
        OperatorConfig {
            trigger: spec.frequency,
            window: spec.window,
            aggregation: spec.aggregation,
            attribute: spec.attribute.clone(),
            allowed_lateness_ms: 0,
            live_retention_ms: None,
            start: None,
            until: None,
            split: None,
        }
    }

    /// Trigger period and window duration in milliseconds.
    pub fn periods(&self) -> Result<(u64, u64), OperatorError> {
        let f = self.trigger.millis()?;
        let d = self.window.duration_millis()?;
        if f == 0 || d == 0 {
            return Err(OperatorError::InvalidConfig(
                "frequency and window duration must be positive".into(),
            ));
        }
        if self.attribute.is_empty() {
            return Err(OperatorError::InvalidConfig("attribute is empty".into()));
        }
        Ok((f, d))
    }
}

/// The extent of the window evaluated at `trigger`. Sliding windows end at
/// the trigger and reach back one duration; landmark windows reach back one
/// duration from the anchor.
pub fn window_extent(spec: &WindowSpec, trigger: Timestamp, anchor: Timestamp) -> Result<Interval, OperatorError> {
    let d = spec.duration_millis()?;
    let start = match spec.kind {
        WindowKind::Sliding => trigger.saturating_sub(d),
        WindowKind::Landmark => anchor.min(trigger).saturating_sub(d),
    };
    Ok(Interval::new(start, trigger)?)
}

/// History/live boundary. Never moves backwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Watermark {
    split: Timestamp,
}

impl Watermark {
    pub fn new(split: Timestamp) -> Self {
        Watermark { split }
    }

    pub fn split(&self) -> Timestamp {
        self.split
    }

    pub fn advance_to(&mut self, t: Timestamp) {
        self.split = self.split.max(t);
    }
}
