//! Tuple-oriented stream data model shared by every stage of the engine.
//!
//! Timestamps are milliseconds since the UTC Unix epoch. Intervals are
//! half-open (`[start, end)`) everywhere, so equal-width buckets with a
//! common origin partition the timeline.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::error::ModelError;

/// Milliseconds since the UTC Unix epoch.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_millis(ms: u64) -> Self {
        Timestamp(ms)
    }

    pub fn millis(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, ms: u64) -> Self {
        Timestamp(self.0.saturating_sub(ms))
    }

    pub fn saturating_add(self, ms: u64) -> Self {
        Timestamp(self.0.saturating_add(ms))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An atomic attribute value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
    Char(char),
}

impl Value {
    /// Numeric view used by aggregations. Strings and chars have none.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(x) => Some(*x),
            Value::Str(_) | Value::Char(_) => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Value::Int(_) | Value::Float(_))
    }

    fn to_json(&self) -> Json {
        match self {
            Value::Int(i) => Json::from(*i),
            // Non-finite floats have no JSON form and encode as null.
            Value::Float(x) => serde_json::Number::from_f64(*x).map_or(Json::Null, Json::Number),
            Value::Str(s) => Json::String(s.clone()),
            Value::Char(c) => Json::String(c.to_string()),
        }
    }

    fn from_json(key: &str, json: Json) -> Result<Value, ModelError> {
        match json {
            Json::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(Value::Int(i))
                } else if n.is_u64() {
                    Err(ModelError::Decode(format!("attribute {key}: integer out of range")))
                } else {
                    Ok(Value::Float(n.as_f64().unwrap_or(f64::NAN)))
                }
            }
            Json::String(s) => {
                let mut chars = s.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Ok(Value::Char(c)),
                    _ => Ok(Value::Str(s)),
                }
            }
            other => Err(ModelError::Decode(format!(
                "attribute {key}: unsupported value {other}"
            ))),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

/// Keys with fixed meaning in the NDJSON tuple encoding.
pub const TS_KEY: &str = "ts";
pub const SRC_KEY: &str = "src";

/// A timestamped set of attribute/value pairs produced by one source.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuple {
    timestamp: Timestamp,
    source_id: String,
    attributes: BTreeMap<String, Value>,
}

impl Tuple {
    pub fn new(
        timestamp: Timestamp,
        source_id: impl Into<String>,
        attributes: BTreeMap<String, Value>,
    ) -> Result<Self, ModelError> {
        if attributes.is_empty() {
            return Err(ModelError::EmptyTuple);
        }
        if let Some(k) = attributes.keys().find(|k| *k == TS_KEY || *k == SRC_KEY) {
            return Err(ModelError::ReservedAttribute(k.clone()));
        }
        Ok(Tuple {
            timestamp,
            source_id: source_id.into(),
            attributes,
        })
    }

    /// Convenience constructor from `(name, value)` pairs. Later duplicates win.
    pub fn from_pairs<K, V, I>(
        timestamp: Timestamp,
        source_id: impl Into<String>,
        pairs: I,
    ) -> Result<Self, ModelError>
    where
        K: Into<String>,
        V: Into<Value>,
        I: IntoIterator<Item = (K, V)>,
    {
        let attributes = pairs
            .into_iter()
            .map(|(k, v)| (k.into(), v.into()))
            .collect();
        Tuple::new(timestamp, source_id, attributes)
    }

    pub fn timestamp(&self) -> Timestamp {
        self.timestamp
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn attributes(&self) -> &BTreeMap<String, Value> {
        &self.attributes
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.attributes.get(name)
    }

    /// Returns a copy of this tuple moved to another timestamp.
    pub fn with_timestamp(&self, timestamp: Timestamp) -> Tuple {
        Tuple {
            timestamp,
            ..self.clone()
        }
    }

    /// Encodes as one NDJSON line (no trailing newline): `ts`, `src`, then
    /// attributes in name order.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::with_capacity(64);
        out.push_str("{\"ts\":");
        out.push_str(&self.timestamp.0.to_string());
        out.push_str(",\"src\":");
        out.push_str(&Json::String(self.source_id.clone()).to_string());
        for (k, v) in &self.attributes {
            out.push(',');
            out.push_str(&Json::String(k.clone()).to_string());
            out.push(':');
            out.push_str(&v.to_json().to_string());
        }
        out.push('}');
        out
    }

    pub fn from_ndjson(line: &str) -> Result<Tuple, ModelError> {
        let json: Json = serde_json::from_str(line.trim())
            .map_err(|e| ModelError::Decode(e.to_string()))?;
        let Json::Object(map) = json else {
            return Err(ModelError::Decode("tuple must be a JSON object".into()));
        };
        let mut ts = None;
        let mut src = None;
        let mut attributes = BTreeMap::new();
        for (k, v) in map {
            match k.as_str() {
                TS_KEY => {
                    ts = Some(v.as_u64().ok_or_else(|| {
                        ModelError::Decode("`ts` must be a non-negative integer".into())
                    })?)
                }
                SRC_KEY => match v {
                    Json::String(s) => src = Some(s),
                    _ => return Err(ModelError::Decode("`src` must be a string".into())),
                },
                _ => {
                    let value = Value::from_json(&k, v)?;
                    attributes.insert(k, value);
                }
            }
        }
        let ts = ts.ok_or_else(|| ModelError::Decode("missing `ts`".into()))?;
        Tuple::new(Timestamp(ts), src.unwrap_or_default(), attributes)
    }
}

/// Granularity of durations in query text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Seconds,
    Minutes,
    Hours,
    Days,
}

impl TimeUnit {
    pub const ALL: [TimeUnit; 4] = [
        TimeUnit::Seconds,
        TimeUnit::Minutes,
        TimeUnit::Hours,
        TimeUnit::Days,
    ];

    pub fn millis(self) -> u64 {
        match self {
            TimeUnit::Seconds => 1_000,
            TimeUnit::Minutes => 60_000,
            TimeUnit::Hours => 3_600_000,
            TimeUnit::Days => 86_400_000,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TimeUnit::Seconds => "seconds",
            TimeUnit::Minutes => "minutes",
            TimeUnit::Hours => "hours",
            TimeUnit::Days => "days",
        }
    }
}

impl fmt::Display for TimeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TimeUnit {
    type Err = ModelError;

    /// Accepts singular and plural forms, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "second" | "seconds" => Ok(TimeUnit::Seconds),
            "minute" | "minutes" => Ok(TimeUnit::Minutes),
            "hour" | "hours" => Ok(TimeUnit::Hours),
            "day" | "days" => Ok(TimeUnit::Days),
            _ => Err(ModelError::UnknownTimeUnit(s.to_string())),
        }
    }
}

/// `n` units in milliseconds; overflow is reported, never wrapped.
pub fn to_millis(n: u64, unit: TimeUnit) -> Result<u64, ModelError> {
    n.checked_mul(unit.millis())
        .ok_or(ModelError::Overflow { n, unit })
}

/// Half-open time interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Interval {
    pub fn new(start: Timestamp, end: Timestamp) -> Result<Self, ModelError> {
        if start > end {
            return Err(ModelError::InvalidInterval { start, end });
        }
        Ok(Interval { start, end })
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t < self.end
    }

    pub fn len_millis(&self) -> u64 {
        self.end.0 - self.start.0
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// The bucket `[origin + k*w, origin + (k+1)*w)` containing `t`.
pub fn bucket_of(t: Timestamp, width: u64, origin: Timestamp) -> Result<Interval, ModelError> {
    if width == 0 {
        return Err(ModelError::ZeroBucketWidth);
    }
    if t < origin {
        return Err(ModelError::BeforeOrigin { t, origin });
    }
    let k = (t.0 - origin.0) / width;
    let start = origin.0 + k * width;
    let end = start
        .checked_add(width)
        .ok_or(ModelError::TimestampOverflow)?;
    Ok(Interval {
        start: Timestamp(start),
        end: Timestamp(end),
    })
}

/// One grouped aggregation result: `(bucket start, tuple count, result)`.
///
/// `count` is a float on the wire; it always holds an integral value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub bucket_start: Timestamp,
    pub count: f64,
    pub result: Option<f64>,
}

impl AggregateRow {
    pub fn empty(bucket_start: Timestamp) -> Self {
        AggregateRow {
            bucket_start,
            count: 0.0,
            result: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn to_millis_examples() {
        assert_eq!(to_millis(10, TimeUnit::Minutes).unwrap(), 600_000);
        assert_eq!(to_millis(0, TimeUnit::Hours).unwrap(), 0);
        assert_eq!(to_millis(120, TimeUnit::Days).unwrap(), 10_368_000_000);
        assert!(matches!(
            to_millis(u64::MAX / 2, TimeUnit::Seconds),
            Err(ModelError::Overflow { .. })
        ));
    }

    #[test]
    fn bucket_examples() {
        let b = bucket_of(Timestamp(90_000), 60_000, Timestamp(0)).unwrap();
        assert_eq!((b.start.0, b.end.0), (60_000, 120_000));
        let b = bucket_of(Timestamp(0), 1_000, Timestamp(0)).unwrap();
        assert_eq!((b.start.0, b.end.0), (0, 1_000));
        let b = bucket_of(Timestamp(119_999), 60_000, Timestamp(0)).unwrap();
        assert_eq!((b.start.0, b.end.0), (60_000, 120_000));
    }

    #[test]
    fn bucket_preconditions() {
        assert!(bucket_of(Timestamp(5), 0, Timestamp(0)).is_err());
        assert!(bucket_of(Timestamp(5), 10, Timestamp(6)).is_err());
    }

    #[test]
    fn interval_is_half_open() {
        let iv = Interval::new(Timestamp(10), Timestamp(20)).unwrap();
        assert!(iv.contains(Timestamp(10)));
        assert!(iv.contains(Timestamp(19)));
        assert!(!iv.contains(Timestamp(20)));
        assert!(Interval::new(Timestamp(2), Timestamp(1)).is_err());
    }

    #[test]
    fn tuple_needs_an_attribute() {
        assert!(matches!(
            Tuple::new(Timestamp(1), "a", BTreeMap::new()),
            Err(ModelError::EmptyTuple)
        ));
        assert!(Tuple::from_pairs(Timestamp(1), "a", [("ts", 1.0)]).is_err());
    }

    #[test]
    fn ndjson_layout() {
        let t = Tuple::from_pairs(
            Timestamp(1500),
            "thing-1",
            [("upload_speed", Value::Float(2.5)), ("hops", Value::Int(3))],
        )
        .unwrap();
        assert_eq!(
            t.to_ndjson(),
            r#"{"ts":1500,"src":"thing-1","hops":3,"upload_speed":2.5}"#
        );
        // unknown keys become attributes; missing src decodes as empty
        let t = Tuple::from_ndjson(r#"{"v": 4.0, "ts": 7, "tag": "ab", "c": "x"}"#).unwrap();
        assert_eq!(t.timestamp(), Timestamp(7));
        assert_eq!(t.source_id(), "");
        assert_eq!(t.get("v"), Some(&Value::Float(4.0)));
        assert_eq!(t.get("tag"), Some(&Value::Str("ab".into())));
        assert_eq!(t.get("c"), Some(&Value::Char('x')));
    }

    #[test]
    fn ndjson_rejects_bad_input() {
        assert!(Tuple::from_ndjson("not json").is_err());
        assert!(Tuple::from_ndjson(r#"{"src":"a","v":1}"#).is_err());
        assert!(Tuple::from_ndjson(r#"{"ts":-4,"v":1}"#).is_err());
        assert!(Tuple::from_ndjson(r#"{"ts":4}"#).is_err());
        assert!(Tuple::from_ndjson(r#"{"ts":4,"v":[1]}"#).is_err());
    }

    fn value_strategy() -> impl Strategy<Value = Value> {
        prop_oneof![
            any::<i64>().prop_map(Value::Int),
            (-1e12f64..1e12).prop_map(Value::Float),
            "[a-z ]{2,8}".prop_map(Value::Str),
            proptest::char::range('a', 'z').prop_map(Value::Char),
        ]
    }

    proptest! {
        #[test]
        fn ndjson_round_trip(
            ts in 0u64..4_000_000_000_000,
            src in "[a-z0-9-]{0,10}",
            attrs in proptest::collection::btree_map("[a-z_]{1,8}", value_strategy(), 1..5),
        ) {
            prop_assume!(!attrs.contains_key("ts") && !attrs.contains_key("src"));
            let t = Tuple::new(Timestamp(ts), src, attrs).unwrap();
            let back = Tuple::from_ndjson(&t.to_ndjson()).unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn buckets_partition_timeline(t in 0u64..1_000_000_000, w in 1u64..100_000, origin in 0u64..1_000_000) {
            prop_assume!(t >= origin);
            let b = bucket_of(Timestamp(t), w, Timestamp(origin)).unwrap();
            prop_assert!(b.start.0 <= t && t < b.end.0);
            prop_assert_eq!((b.start.0 - origin) % w, 0);
            // the neighbouring buckets do not contain t
            if b.start.0 >= origin + w {
                let prev = bucket_of(Timestamp(b.start.0 - 1), w, Timestamp(origin)).unwrap();
                prop_assert_eq!(prev.end, b.start);
            }
            let next = bucket_of(b.end, w, Timestamp(origin)).unwrap();
            prop_assert_eq!(next.start, b.end);
        }
    }
}
