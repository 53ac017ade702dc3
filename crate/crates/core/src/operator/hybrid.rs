use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::OperatorError;
use crate::model::{Interval, TimeUnit, Timestamp, Tuple, Value};
use crate::store::{Connection, HistoricQuery};

use super::{LiveBuffer, OperatorConfig, PartialAggregate, Watermark};

/// One evaluated window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub trigger: Timestamp,
    pub window: Interval,
    pub count: u64,
    pub value: Option<f64>,
    pub hist_count: u64,
    pub live_count: u64,
}

/// Evaluates one window by merging a historic partial over the part of the
/// window before the split with a live partial over the rest.
///
/// Without a historic connection the live buffer serves the whole window;
/// if `live_retention_ms` says the stream does not reach back that far, the
/// gap is reported as [`OperatorError::IncompleteWindow`].
pub fn hybrid_evaluate<C: Connection + ?Sized>(
    window: Interval,
    watermark: Watermark,
    live: &LiveBuffer,
    historic: Option<&mut C>,
    config: &OperatorConfig,
) -> Result<WindowResult, OperatorError> {
    let split = watermark.split();
    let function = config.aggregation;
    let (hist, live_range) = match historic {
        Some(conn) => {
            let hist_end = window.end.min(split);
            let mut hist = PartialAggregate::empty(function);
            if window.start < hist_end {
                let len = hist_end.0 - window.start.0;
                let query = HistoricQuery {
                    function,
                    value: config.attribute.clone(),
                    start: window.start,
                    end: hist_end,
                    // one bucket spanning the whole sub-interval
                    group_by_number: len.div_ceil(1000),
                    group_by_unit: TimeUnit::Seconds,
                };
                for row in conn.query_to_historic(&query)? {
                    hist = hist.merge(&PartialAggregate::from_aggregate_row(&row, function))?;
                }
            }
            let live_start = window.start.max(split).min(window.end);
            (hist, Interval::new(live_start, window.end)?)
        }
        None => {
            if let Some(retention) = config.live_retention_ms {
                let reach = split.saturating_sub(retention);
                if window.start < reach {
                    return Err(OperatorError::IncompleteWindow {
                        uncovered: Interval::new(window.start, reach.min(window.end))?,
                    });
                }
            }
            (PartialAggregate::empty(function), window)
        }
    };
    let live_part = live.partial(live_range, function);
    let total = hist.merge(&live_part)?;
    Ok(WindowResult {
        trigger: window.end,
        window,
        count: total.count(),
        value: total.finalize(),
        hist_count: hist.count(),
        live_count: live_part.count(),
    })
}

/// What an operator emits per trigger: a result or an error record.
#[derive(Debug, Clone, PartialEq)]
pub enum SinkRecord {
    Result(WindowResult),
    Error {
        trigger: Timestamp,
        message: String,
        uncovered: Option<Interval>,
    },
}

#[derive(Serialize, Deserialize)]
struct ResultLine {
    trigger_ts: u64,
    win_start: u64,
    win_end: u64,
    count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    hist_count: u64,
    live_count: u64,
}

#[derive(Serialize, Deserialize)]
struct ErrorLine {
    trigger_ts: u64,
    error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    uncovered_start: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    uncovered_end: Option<u64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnyLine {
    Error(ErrorLine),
    Result(ResultLine),
}

impl SinkRecord {
    pub fn trigger(&self) -> Timestamp {
        match self {
            SinkRecord::Result(r) => r.trigger,
            SinkRecord::Error { trigger, .. } => *trigger,
        }
    }

    pub fn from_error(trigger: Timestamp, err: &OperatorError) -> Self {
        let uncovered = match err {
            OperatorError::IncompleteWindow { uncovered } => Some(*uncovered),
            _ => None,
        };
        SinkRecord::Error {
            trigger,
            message: err.to_string(),
            uncovered,
        }
    }

    /// One NDJSON line without the trailing newline.
    pub fn to_ndjson(&self) -> String {
        let out = match self {
            SinkRecord::Result(r) => serde_json::to_string(&ResultLine {
                trigger_ts: r.trigger.0,
                win_start: r.window.start.0,
                win_end: r.window.end.0,
                count: r.count,
                value: r.value,
                hist_count: r.hist_count,
                live_count: r.live_count,
            }),
            SinkRecord::Error {
                trigger,
                message,
                uncovered,
            } => serde_json::to_string(&ErrorLine {
                trigger_ts: trigger.0,
                error: message.clone(),
                uncovered_start: uncovered.map(|u| u.start.0),
                uncovered_end: uncovered.map(|u| u.end.0),
            }),
        };
        out.expect("record fields always serialize")
    }

    pub fn from_ndjson(line: &str) -> Result<Self, OperatorError> {
        let parsed: AnyLine =
            serde_json::from_str(line).map_err(|e| OperatorError::BadRecord(e.to_string()))?;
        Ok(match parsed {
            AnyLine::Result(r) => SinkRecord::Result(WindowResult {
                trigger: Timestamp(r.trigger_ts),
                window: Interval::new(Timestamp(r.win_start), Timestamp(r.win_end))?,
                count: r.count,
                value: r.value,
                hist_count: r.hist_count,
                live_count: r.live_count,
            }),
            AnyLine::Error(e) => SinkRecord::Error {
                trigger: Timestamp(e.trigger_ts),
                message: e.error,
                uncovered: match (e.uncovered_start, e.uncovered_end) {
                    (Some(s), Some(t)) => Some(Interval::new(Timestamp(s), Timestamp(t))?),
                    _ => None,
                },
            },
        })
    }
}

fn int(v: u64) -> Value {
    Value::Int(v as i64)
}

fn get_u64(t: &Tuple, key: &str) -> Result<Option<u64>, OperatorError> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Int(i)) if *i >= 0 => Ok(Some(*i as u64)),
        Some(other) => Err(OperatorError::BadRecord(format!("`{key}` is {other:?}"))),
    }
}

fn need_u64(t: &Tuple, key: &str) -> Result<u64, OperatorError> {
    get_u64(t, key)?.ok_or_else(|| OperatorError::BadRecord(format!("missing `{key}`")))
}

impl SinkRecord {
    /// Encodes the record as a tuple for transport over a broker queue:
    /// `ts` is the trigger instant and `src` the emitting stage.
    pub fn to_tuple(&self, stage: &str) -> Tuple {
        let mut attrs = BTreeMap::new();
        match self {
            SinkRecord::Result(r) => {
                attrs.insert("win_start".to_string(), int(r.window.start.0));
                attrs.insert("win_end".to_string(), int(r.window.end.0));
                attrs.insert("count".to_string(), int(r.count));
                attrs.insert("hist_count".to_string(), int(r.hist_count));
                attrs.insert("live_count".to_string(), int(r.live_count));
                if let Some(v) = r.value {
                    attrs.insert("value".to_string(), Value::Float(v));
                }
            }
            SinkRecord::Error {
                message, uncovered, ..
            } => {
                attrs.insert("error".to_string(), Value::Str(message.clone()));
                if let Some(u) = uncovered {
                    attrs.insert("uncovered_start".to_string(), int(u.start.0));
                    attrs.insert("uncovered_end".to_string(), int(u.end.0));
                }
            }
        }
        Tuple::new(self.trigger(), stage, attrs).expect("record attributes are non-empty and unreserved")
    }

    pub fn from_tuple(t: &Tuple) -> Result<Self, OperatorError> {
        let trigger = t.timestamp();
        if let Some(err) = t.get("error") {
            let message = match err {
                Value::Str(s) => s.clone(),
                Value::Char(c) => c.to_string(),
                other => return Err(OperatorError::BadRecord(format!("`error` is {other:?}"))),
            };
            let uncovered = match (get_u64(t, "uncovered_start")?, get_u64(t, "uncovered_end")?) {
                (Some(s), Some(e)) => Some(Interval::new(Timestamp(s), Timestamp(e))?),
                _ => None,
            };
            return Ok(SinkRecord::Error {
                trigger,
                message,
                uncovered,
            });
        }
        let value = match t.get("value") {
            None => None,
            Some(v) => Some(
                v.as_f64()
                    .ok_or_else(|| OperatorError::BadRecord(format!("`value` is {v:?}")))?,
            ),
        };
        Ok(SinkRecord::Result(WindowResult {
            trigger,
            window: Interval::new(Timestamp(need_u64(t, "win_start")?), Timestamp(need_u64(t, "win_end")?))?,
            count: need_u64(t, "count")?,
            value,
            hist_count: need_u64(t, "hist_count")?,
            live_count: need_u64(t, "live_count")?,
        }))
    }
}
