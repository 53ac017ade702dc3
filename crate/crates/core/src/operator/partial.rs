use serde::{Deserialize, Serialize};

use crate::error::OperatorError;
use crate::model::AggregateRow;
use crate::query::AggregationFunction;

/// A mergeable accumulator: count plus running sum (mean) or extremum
/// (min/max). The empty partial is the identity of [`merge`](Self::merge).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialAggregate {
    function: AggregationFunction,
    count: u64,
    payload: Option<f64>,
}

impl PartialAggregate {
    pub fn empty(function: AggregationFunction) -> Self {
        PartialAggregate {
            function,
            count: 0,
            payload: None,
        }
    }

    pub fn function(&self) -> AggregationFunction {
        self.function
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Running sum for mean, extremum for min/max; `None` when empty.
    pub fn payload(&self) -> Option<f64> {
        self.payload
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Folds one value in. Non-finite values are rejected and leave the
    /// partial untouched.
    pub fn update(&mut self, v: f64) -> Result<(), OperatorError> {
        if !v.is_finite() {
            return Err(OperatorError::NonFinite(v));
        }
        self.count += 1;
        self.payload = Some(match (self.function, self.payload) {
            (_, None) => v,
            (AggregationFunction::Mean, Some(sum)) => sum + v,
            (AggregationFunction::Min, Some(m)) => m.min(v),
            (AggregationFunction::Max, Some(m)) => m.max(v),
        });
        Ok(())
    }

    pub fn with(mut self, v: f64) -> Result<Self, OperatorError> {
        self.update(v)?;
        Ok(self)
    }

    pub fn merge(&self, other: &PartialAggregate) -> Result<PartialAggregate, OperatorError> {
        if self.function != other.function {
            return Err(OperatorError::FunctionMismatch {
                left: self.function.to_string(),
                right: other.function.to_string(),
            });
        }
        let payload = match (self.payload, other.payload) {
            (None, p) | (p, None) => p,
            (Some(a), Some(b)) => Some(match self.function {
                AggregationFunction::Mean => a + b,
                AggregationFunction::Min => a.min(b),
                AggregationFunction::Max => a.max(b),
            }),
        };
        Ok(PartialAggregate {
            function: self.function,
            count: self.count + other.count,
            payload,
        })
    }

    pub fn finalize(&self) -> Option<f64> {
        let p = self.payload?;
        match self.function {
            AggregationFunction::Mean => Some(p / self.count as f64),
            AggregationFunction::Min | AggregationFunction::Max => Some(p),
        }
    }

    /// Rebuilds the partial a grouped row was computed from. For mean the
    /// sum is recovered as `result * count`.
    pub fn from_aggregate_row(row: &AggregateRow, function: AggregationFunction) -> Self {
        let count = row.count.round().max(0.0) as u64;
        match (count, row.result) {
            (0, _) | (_, None) => PartialAggregate::empty(function),
            (n, Some(r)) => PartialAggregate {
                function,
                count: n,
                payload: Some(match function {
                    AggregationFunction::Mean => r * n as f64,
                    AggregationFunction::Min | AggregationFunction::Max => r,
                }),
            },
        }
    }

    pub fn to_aggregate_row(&self, bucket_start: crate::model::Timestamp) -> AggregateRow {
        AggregateRow {
            bucket_start,
            count: self.count as f64,
            result: self.finalize(),
        }
    }
}
