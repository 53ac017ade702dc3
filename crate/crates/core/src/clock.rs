//! Time sources. Correctness tests run on [`VirtualClock`]; throughput
//! runs use [`SystemClock`].

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::model::Timestamp;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;

    /// Virtual clocks only move when told to; operators then derive their
    /// processing time from the data they consume.
    fn is_virtual(&self) -> bool {
        false
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        let ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Timestamp(ms)
    }
}

/// A manually advanced clock shared between threads.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock(Arc<AtomicU64>);

impl VirtualClock {
    pub fn new(start: Timestamp) -> Self {
        VirtualClock(Arc::new(AtomicU64::new(start.0)))
    }

    /// Moves the clock forward to `t`; earlier instants are ignored.
    pub fn advance_to(&self, t: Timestamp) {
        self.0.fetch_max(t.0, Ordering::AcqRel);
    }

    pub fn advance_by(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::AcqRel);
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.0.load(Ordering::Acquire))
    }

    fn is_virtual(&self) -> bool {
        true
    }
}
