use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::broker::QueueHandle;
use crate::clock::VirtualClock;
use crate::error::SimError;
use crate::model::{Timestamp, Tuple};

/// Replay pace relative to the log's own inter-arrival times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Speed {
    /// As fast as possible.
    Unbounded,
    Factor(f64),
}

impl std::str::FromStr for Speed {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "inf" | "max" | "unbounded" => Ok(Speed::Unbounded),
            other => match other.parse::<f64>() {
                Ok(f) if f.is_infinite() && f > 0.0 => Ok(Speed::Unbounded),
                Ok(f) if f > 0.0 && f.is_finite() => Ok(Speed::Factor(f)),
                _ => Err(format!("speed must be a positive number or `inf`, got `{s}`")),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    pub speed: Speed,
    /// Advanced to each tuple's timestamp before it is published.
    pub clock: Option<VirtualClock>,
    /// Shifts timestamps so that the first tuple lands here.
    pub rebase: Option<Timestamp>,
    /// Close the queue once the log is exhausted (or replay is cancelled).
    pub close_when_done: bool,
    /// Stops the replay early when set.
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions {
            speed: Speed::Unbounded,
            clock: None,
            rebase: None,
            close_when_done: false,
            cancel: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReplayReport {
    pub published: u64,
    pub malformed: u64,
    pub first_ts: Option<Timestamp>,
    pub last_ts: Option<Timestamp>,
}

/// Publishes the tuples of an NDJSON log in file order, pacing them by
/// their original inter-arrival times divided by the speed factor.
/// Malformed lines are skipped and counted.
pub fn replay_log(path: &Path, queue: &QueueHandle, options: &ReplayOptions) -> Result<ReplayReport, SimError> {
    let io = |source| SimError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut report = ReplayReport::default();
    let started = Instant::now();
    let mut origin: Option<u64> = None;
    let mut batch: Vec<Tuple> = Vec::new();
    let cancelled = || options.cancel.as_ref().is_some_and(|c| c.load(Ordering::Relaxed));
    for line in reader.lines() {
        if cancelled() {
            break;
        }
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let tuple = match Tuple::from_ndjson(&line) {
            Ok(t) => t,
            Err(e) => {
                log::debug!("{}: skipping malformed line: {e}", path.display());
                report.malformed += 1;
                continue;
            }
        };
        let orig = tuple.timestamp().0;
        let first = *origin.get_or_insert(orig);
        let tuple = match options.rebase {
            Some(base) => tuple.with_timestamp(Timestamp((base.0 + orig).saturating_sub(first))),
            None => tuple,
        };
        if let Speed::Factor(f) = options.speed {
            let due = Duration::from_secs_f64(orig.saturating_sub(first) as f64 / 1000.0 / f);
            if due > started.elapsed() && !batch.is_empty() {
                queue.publish_batch(std::mem::take(&mut batch))?;
            }
            while due > started.elapsed() && !cancelled() {
                std::thread::sleep((due - started.elapsed()).min(Duration::from_millis(50)));
            }
        }
        let ts = tuple.timestamp();
        report.first_ts.get_or_insert(ts);
        report.last_ts = Some(ts);
        report.published += 1;
        match &options.clock {
            // the clock must never run ahead of what has been published
            Some(clock) => {
                queue.publish(tuple)?;
                clock.advance_to(ts);
            }
            None if options.speed == Speed::Unbounded => {
                batch.push(tuple);
                if batch.len() >= 4096 {
                    queue.publish_batch(std::mem::take(&mut batch))?;
                }
            }
            None => queue.publish(tuple)?,
        }
    }
    if !batch.is_empty() {
        queue.publish_batch(batch)?;
    }
    if options.close_when_done {
        queue.close();
    }
    Ok(report)
}
