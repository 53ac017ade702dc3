use std::path::PathBuf;

use thiserror::Error;

use crate::model::{Interval, TimeUnit, Timestamp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{n} {unit} does not fit in a millisecond timestamp")]
    Overflow { n: u64, unit: TimeUnit },
    #[error("timestamp arithmetic overflowed")]
    TimestampOverflow,
    #[error("bucket width must be positive")]
    ZeroBucketWidth,
    #[error("timestamp {t} precedes bucket origin {origin}")]
    BeforeOrigin { t: Timestamp, origin: Timestamp },
    #[error("interval start {start} is after end {end}")]
    InvalidInterval { start: Timestamp, end: Timestamp },
    #[error("tuple has no attributes")]
    EmptyTuple,
    #[error("`{0}` is reserved and cannot be used as an attribute name")]
    ReservedAttribute(String),
    #[error("unknown time unit `{0}`")]
    UnknownTimeUnit(String),
    #[error("cannot decode tuple: {0}")]
    Decode(String),
}

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error("queue `{0}` already declared with a different configuration")]
    ConfigConflict(String),
    #[error("queue `{0}` is closed")]
    Closed(String),
    #[error("queue `{0}` does not exist")]
    UnknownQueue(String),
    #[error("queue `{0}` already has a consumer")]
    ConsumerExists(String),
    #[error("invalid queue configuration: {0}")]
    InvalidConfig(String),
    #[error("spill i/o on {path}: {source}")]
    Spill {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt spill segment {path}: {source}")]
    CorruptSpill {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown series {0}")]
    UnknownSeries(String),
    #[error("unknown historic provider `{0}`")]
    UnknownProvider(String),
    #[error("invalid series reference: {0}")]
    InvalidRef(String),
    #[error("attribute `{attribute}` is never numeric in series {series}")]
    NotNumeric { series: String, attribute: String },
    #[error("invalid historic query: {0}")]
    InvalidQuery(String),
    #[error("connection is closed")]
    ConnectionClosed,
    #[error("store i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt segment {path} line {line}: {source}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("partial aggregates for {left} and {right} cannot be merged")]
    FunctionMismatch { left: String, right: String },
    #[error("non-finite value {0} rejected")]
    NonFinite(f64),
    #[error("window is incomplete: {uncovered} is covered by neither history nor the live buffer")]
    IncompleteWindow { uncovered: Interval },
    #[error("sink closed: {0}")]
    SinkClosed(String),
    #[error("invalid operator configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed result record: {0}")]
    BadRecord(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("query cannot be planned: {}", .0.join("; "))]
    Unresolved(Vec<String>),
    #[error("fan-out plans need queries sharing one stream source: {0}")]
    IncompatibleFanOut(String),
    #[error("no queries to plan")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid farm configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
