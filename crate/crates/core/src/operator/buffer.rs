use std::collections::BTreeMap;
use std::ops::Bound;

use crate::model::{Interval, Timestamp, Tuple};
use crate::query::AggregationFunction;

use super::PartialAggregate;

/// Live values of the target attribute, indexed by timestamp so that
/// out-of-order arrivals land in the right windows.
#[derive(Debug, Default, Clone)]
pub struct LiveBuffer {
    values: BTreeMap<Timestamp, Vec<f64>>,
    len: usize,
}

impl LiveBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, ts: Timestamp, v: f64) {
        self.values.entry(ts).or_default().push(v);
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn earliest(&self) -> Option<Timestamp> {
        self.values.keys().next().copied()
    }

    /// Partial aggregate over the values with timestamps in `range`.
    pub fn partial(&self, range: Interval, function: AggregationFunction) -> PartialAggregate {
        let mut p = PartialAggregate::empty(function);
        if range.is_empty() {
            return p;
        }
        for vs in self
            .values
            .range((Bound::Included(range.start), Bound::Excluded(range.end)))
            .map(|(_, vs)| vs)
        {
            for &v in vs {
                // values are checked for finiteness on admission
                p.update(v).expect("buffered values are finite");
            }
        }
        p
    }

    /// Drops every value older than `bound`; returns how many.
    pub fn evict_below(&mut self, bound: Timestamp) -> usize {
        let keep = self.values.split_off(&bound);
        let evicted: usize = self.values.values().map(Vec::len).sum();
        self.values = keep;
        self.len -= evicted;
        evicted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admitted,
    LateDropped,
    /// The tuple lacks a finite numeric value for the attribute.
    Skipped,
}

/// The operator's buffer manager: the live buffer plus drop counters.
#[derive(Debug, Default)]
pub struct BufferManager {
    pub buffer: LiveBuffer,
    pub late_dropped: u64,
    pub skipped: u64,
}

impl BufferManager {
    /// Admits `tuple` iff its timestamp is at least `lower_bound` (the
    /// lower bound of the next window to fire) minus `lateness`.
    pub fn admit(&mut self, tuple: &Tuple, attribute: &str, lower_bound: Timestamp, lateness: u64) -> Admission {
        let ts = tuple.timestamp();
        if ts < lower_bound.saturating_sub(lateness) {
            self.late_dropped += 1;
            return Admission::LateDropped;
        }
        match tuple.get(attribute).and_then(|v| v.as_f64()) {
            Some(v) if v.is_finite() => {
                self.buffer.insert(ts, v);
                Admission::Admitted
            }
            _ => {
                self.skipped += 1;
                Admission::Skipped
            }
        }
    }
}
