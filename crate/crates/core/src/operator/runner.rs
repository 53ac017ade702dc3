use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;

use crate::broker::{QueueHandle, Subscription};
use crate::clock::Clock;
use crate::error::{BrokerError, OperatorError};
use crate::model::Timestamp;
use crate::store::Connection;

use super::{hybrid_evaluate, window_extent, Admission, BufferManager, OperatorConfig, SinkRecord, Watermark};

const BATCH: usize = 4096;
const POLL: Duration = Duration::from_millis(20);

/// Live counters of one operator, readable from any thread.
#[derive(Debug, Default)]
pub struct OperatorStats {
    pub tuples_in: AtomicU64,
    pub admitted: AtomicU64,
    pub late_dropped: AtomicU64,
    pub skipped: AtomicU64,
    pub triggers_fired: AtomicU64,
    pub results_out: AtomicU64,
    pub error_records: AtomicU64,
    pub max_trigger_lag_ms: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OperatorStatsSnapshot {
    pub tuples_in: u64,
    pub admitted: u64,
    pub late_dropped: u64,
    pub skipped: u64,
    pub triggers_fired: u64,
    pub results_out: u64,
    pub error_records: u64,
    pub max_trigger_lag_ms: u64,
}

impl OperatorStats {
    pub fn snapshot(&self) -> OperatorStatsSnapshot {
        let get = |a: &AtomicU64| a.load(Ordering::Relaxed);
        OperatorStatsSnapshot {
            tuples_in: get(&self.tuples_in),
            admitted: get(&self.admitted),
            late_dropped: get(&self.late_dropped),
            skipped: get(&self.skipped),
            triggers_fired: get(&self.triggers_fired),
            results_out: get(&self.results_out),
            error_records: get(&self.error_records),
            max_trigger_lag_ms: get(&self.max_trigger_lag_ms),
        }
    }
}

fn bump(a: &AtomicU64) {
    a.fetch_add(1, Ordering::Relaxed);
}

/// What a running operator is wired to.
pub struct OperatorContext {
    /// Stage name, written as `src` on emitted records.
    pub name: String,
    pub input: Subscription,
    pub historic: Option<Box<dyn Connection>>,
    pub sink: QueueHandle,
    pub clock: Arc<dyn Clock>,
    pub stats: Arc<OperatorStats>,
}

/// Runs one window-aggregate operator until its input is closed and
/// drained or its last trigger (`config.until`) has fired. Emits one record
/// per trigger instant `start + k * frequency`, `k >= 1`, then closes the
/// sink.
///
/// On a real clock a trigger fires once the clock passes it by the allowed
/// lateness. On a virtual clock processing time is the largest tuple
/// timestamp consumed so far, which makes runs independent of thread
/// scheduling; when the input closes, every remaining trigger up to `until`
/// fires.
pub fn run_operator(config: &OperatorConfig, mut ctx: OperatorContext) -> Result<OperatorStatsSnapshot, OperatorError> {
    let outcome = Runner::new(config, &mut ctx).and_then(|mut r| r.run());
    if let Some(conn) = ctx.historic.as_mut() {
        conn.close();
    }
    ctx.sink.close();
    outcome.map(|_| ctx.stats.snapshot())
}

struct Runner<'a> {
    config: &'a OperatorConfig,
    ctx: &'a mut OperatorContext,
    frequency: u64,
    lateness: u64,
    start: Timestamp,
    watermark: Watermark,
    next_k: u64,
    manager: BufferManager,
    event_max: Option<Timestamp>,
}

impl<'a> Runner<'a> {
    fn new(config: &'a OperatorConfig, ctx: &'a mut OperatorContext) -> Result<Self, OperatorError> {
        let (frequency, _) = config.periods()?;
        let start = config.start.unwrap_or_else(|| ctx.clock.now());
        Ok(Runner {
            config,
            frequency,
            lateness: config.allowed_lateness_ms,
            start,
            watermark: Watermark::new(config.split.unwrap_or(start)),
            next_k: 1,
            manager: BufferManager::default(),
            event_max: None,
            ctx,
        })
    }

    /// The next trigger instant, or `None` once past `until`.
    fn next_trigger(&self) -> Option<Timestamp> {
        let t = self
            .next_k
            .checked_mul(self.frequency)
            .and_then(|o| self.start.0.checked_add(o))
            .map(Timestamp)?;
        match self.config.until {
            Some(u) if t > u => None,
            _ => Some(t),
        }
    }

    fn lower_bound(&self) -> Timestamp {
        match self.next_trigger() {
            Some(t) => window_extent(&self.config.window, t, self.start)
                .map(|w| w.start)
                .unwrap_or(t),
            None => Timestamp(u64::MAX),
        }
    }

    fn run(&mut self) -> Result<(), OperatorError> {
        let virtual_time = self.ctx.clock.is_virtual();
        loop {
            let Some(next) = self.next_trigger() else {
                return Ok(());
            };
            let timeout = if virtual_time {
                POLL
            } else {
                let due = next.saturating_add(self.lateness);
                Duration::from_millis(due.0.saturating_sub(self.ctx.clock.now().0)).min(POLL)
            };
            let closed = match self.ctx.input.recv_batch(BATCH, timeout) {
                Ok(batch) => {
                    self.admit_all(batch, virtual_time)?;
                    false
                }
                Err(BrokerError::Closed(_)) => true,
                Err(e) => return Err(e.into()),
            };
            let horizon = match (virtual_time, closed) {
                (true, false) => self.event_max.unwrap_or(self.start).saturating_sub(self.lateness),
                (true, true) => self.config.until.unwrap_or(self.event_max.unwrap_or(self.start)),
                (false, false) => self.ctx.clock.now().saturating_sub(self.lateness),
                (false, true) => self.ctx.clock.now(),
            };
            self.fire_through(horizon, !virtual_time)?;
            if closed {
                return Ok(());
            }
        }
    }

    /// Admits a batch. On virtual time each tuple first advances
    /// processing time, so triggers fire at the same point of the stream
    /// however the batch was cut.
    fn admit_all(&mut self, batch: Vec<crate::model::Tuple>, virtual_time: bool) -> Result<(), OperatorError> {
        self.ctx
            .stats
            .tuples_in
            .fetch_add(batch.len() as u64, Ordering::Relaxed);
        for t in &batch {
            self.event_max = self.event_max.max(Some(t.timestamp()));
            if virtual_time {
                self.fire_through(t.timestamp().saturating_sub(self.lateness), false)?;
            }
            let bound = self.lower_bound();
            let stats = &self.ctx.stats;
            match self
                .manager
                .admit(t, &self.config.attribute, bound, self.lateness)
            {
                Admission::Admitted => bump(&stats.admitted),
                Admission::LateDropped => bump(&stats.late_dropped),
                Admission::Skipped => bump(&stats.skipped),
            }
        }
        Ok(())
    }

    fn fire_through(&mut self, horizon: Timestamp, measure_lag: bool) -> Result<(), OperatorError> {
        while let Some(trigger) = self.next_trigger().filter(|t| *t <= horizon) {
            let record = match self.evaluate(trigger) {
                Ok(r) => SinkRecord::Result(r),
                Err(e) => {
                    log::warn!("{}: trigger {trigger}: {e}", self.ctx.name);
                    SinkRecord::from_error(trigger, &e)
                }
            };
            let stats = &self.ctx.stats;
            bump(&stats.triggers_fired);
            if measure_lag {
                let lag = self
                    .ctx
                    .clock
                    .now()
                    .0
                    .saturating_sub(trigger.0.saturating_add(self.lateness));
                stats.max_trigger_lag_ms.fetch_max(lag, Ordering::Relaxed);
            }
            let is_error = matches!(record, SinkRecord::Error { .. });
            self.ctx
                .sink
                .publish(record.to_tuple(&self.ctx.name))
                .map_err(|e| OperatorError::SinkClosed(e.to_string()))?;
            bump(if is_error { &stats.error_records } else { &stats.results_out });
            self.next_k += 1;
            self.evict();
        }
        Ok(())
    }

    fn evaluate(&mut self, trigger: Timestamp) -> Result<super::WindowResult, OperatorError> {
        let window = window_extent(&self.config.window, trigger, self.start)?;
        let historic = self.ctx.historic.as_deref_mut();
        hybrid_evaluate(window, self.watermark, &self.manager.buffer, historic, self.config)
    }

    fn evict(&mut self) {
        let mut bound = self.lower_bound().saturating_sub(self.lateness);
        if self.ctx.historic.is_some() {
            // history serves everything before the split
            bound = bound.max(self.watermark.split());
        }
        self.manager.buffer.evict_below(bound);
    }
}
