//! In-process message broker: named single-consumer FIFO queues with a
//! bounded in-memory buffer. Overflow either spills to disk (default) or
//! blocks the publisher; nothing is dropped.
//!
//! Once a queue has spilled, later publishes also go to disk until the
//! spilled backlog is consumed, so delivery order always equals publish
//! order.

mod spill;

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::BrokerError;
use crate::model::Tuple;
use spill::{SpillLog, SEGMENT_LIMIT};

/// Environment variable naming the default spill root.
pub const SPILL_ENV: &str = "HSTREAM_SPILL";

pub const DEFAULT_MEMORY_CAPACITY: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OverflowPolicy {
    #[default]
    Spill,
    Block,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueueConfig {
    pub name: String,
    pub memory_capacity: usize,
    /// Spill root; this queue's segments live in `<spill_directory>/<name>/`.
    pub spill_directory: PathBuf,
    pub overflow_policy: OverflowPolicy,
}

impl QueueConfig {
    pub fn new(name: impl Into<String>, memory_capacity: usize, spill_directory: impl Into<PathBuf>) -> Self {
        QueueConfig {
            name: name.into(),
            memory_capacity,
            spill_directory: spill_directory.into(),
            overflow_policy: OverflowPolicy::Spill,
        }
    }

    pub fn with_policy(mut self, policy: OverflowPolicy) -> Self {
        self.overflow_policy = policy;
        self
    }

    fn queue_dir(&self) -> PathBuf {
        self.spill_directory.join(&self.name)
    }
}

/// Counters for one queue. At quiescence
/// `published == delivered + in_memory + on_disk`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueStats {
    pub published: u64,
    pub delivered: u64,
    pub spilled: u64,
    pub in_memory: u64,
    pub on_disk: u64,
}

struct State {
    memory: VecDeque<Tuple>,
    spill: SpillLog,
    on_disk: u64,
    closed: bool,
    has_consumer: bool,
    published: u64,
    delivered: u64,
    spilled: u64,
}

struct Queue {
    config: QueueConfig,
    state: Mutex<State>,
    not_empty: Condvar,
    not_full: Condvar,
}

impl Queue {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn publish_many<I>(&self, tuples: I) -> Result<usize, BrokerError>
    where
        I: IntoIterator<Item = Tuple>,
    {
        let cap = self.config.memory_capacity;
        let mut st = self.lock();
        let mut n = 0;
        for tuple in tuples {
            if st.closed {
                return Err(BrokerError::Closed(self.config.name.clone()));
            }
            match self.config.overflow_policy {
                OverflowPolicy::Spill => {
                    if st.on_disk > 0 || st.memory.len() >= cap {
                        st.spill.append(&tuple)?;
                        st.on_disk += 1;
                        st.spilled += 1;
                    } else {
                        st.memory.push_back(tuple);
                    }
                }
                OverflowPolicy::Block => {
                    while st.memory.len() >= cap && !st.closed {
                        self.not_empty.notify_one();
                        st = self.not_full.wait(st).unwrap_or_else(|p| p.into_inner());
                    }
                    if st.closed {
                        return Err(BrokerError::Closed(self.config.name.clone()));
                    }
                    st.memory.push_back(tuple);
                }
            }
            st.published += 1;
            n += 1;
        }
        drop(st);
        self.not_empty.notify_one();
        Ok(n)
    }

    /// Moves spilled tuples back into memory when memory has run dry.
    fn refill(&self, st: &mut State) -> Result<(), BrokerError> {
        if st.memory.is_empty() && st.on_disk > 0 {
            let room = self.config.memory_capacity;
            let State { spill, memory, .. } = st;
            let moved = spill.read_into(memory, room)?;
            st.on_disk -= moved as u64;
        }
        Ok(())
    }

    fn take(&self, max: usize, timeout: Duration) -> Result<Vec<Tuple>, BrokerError> {
        let deadline = Instant::now() + timeout;
        let mut st = self.lock();
        loop {
            self.refill(&mut st)?;
            if !st.memory.is_empty() {
                let n = max.min(st.memory.len());
                let batch: Vec<Tuple> = st.memory.drain(..n).collect();
                st.delivered += n as u64;
                drop(st);
                self.not_full.notify_all();
                return Ok(batch);
            }
            if st.closed {
                return Err(BrokerError::Closed(self.config.name.clone()));
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(Vec::new());
            }
            st = self
                .not_empty
                .wait_timeout(st, deadline - now)
                .unwrap_or_else(|p| p.into_inner())
                .0;
        }
    }

    fn close(&self) {
        self.lock().closed = true;
        self.not_empty.notify_all();
        self.not_full.notify_all();
    }

    fn stats(&self) -> QueueStats {
        let st = self.lock();
        QueueStats {
            published: st.published,
            delivered: st.delivered,
            spilled: st.spilled,
            in_memory: st.memory.len() as u64,
            on_disk: st.on_disk,
        }
    }
}

/// Shared handle to a declared queue.
#[derive(Clone)]
pub struct QueueHandle(Arc<Queue>);

impl std::fmt::Debug for QueueHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QueueHandle")
            .field("name", &self.0.config.name)
            .finish()
    }
}

impl PartialEq for QueueHandle {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl QueueHandle {
    pub fn name(&self) -> &str {
        &self.0.config.name
    }

    pub fn config(&self) -> &QueueConfig {
        &self.0.config
    }

    /// Enqueues one tuple. Under the block policy this waits for space.
    pub fn publish(&self, tuple: Tuple) -> Result<(), BrokerError> {
        self.0.publish_many(std::iter::once(tuple)).map(|_| ())
    }

    /// Enqueues tuples in order under a single lock acquisition.
    pub fn publish_batch(&self, tuples: Vec<Tuple>) -> Result<usize, BrokerError> {
        self.0.publish_many(tuples)
    }

    /// Attaches the single consumer of this queue.
    pub fn subscribe(&self) -> Result<Subscription, BrokerError> {
        let mut st = self.0.lock();
        if st.has_consumer {
            return Err(BrokerError::ConsumerExists(self.name().to_string()));
        }
        st.has_consumer = true;
        Ok(Subscription {
            queue: Arc::clone(&self.0),
        })
    }

    /// Rejects further publishes. Buffered tuples remain deliverable.
    pub fn close(&self) {
        self.0.close();
    }

    pub fn is_closed(&self) -> bool {
        self.0.lock().closed
    }

    pub fn stats(&self) -> QueueStats {
        self.0.stats()
    }

    #[cfg(test)]
    pub(crate) fn spill_segments(&self) -> usize {
        self.0.lock().spill.segment_count()
    }
}

/// The consuming end of a queue. Dropping it frees the consumer slot.
pub struct Subscription {
    queue: Arc<Queue>,
}

impl std::fmt::Debug for Subscription {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Subscription")
            .field("queue", &self.queue.config.name)
            .finish()
    }
}

impl Subscription {
    pub fn queue_name(&self) -> &str {
        &self.queue.config.name
    }

    /// Next tuple, `Ok(None)` on timeout, `Err(Closed)` once the queue is
    /// closed and fully drained.
    pub fn recv_timeout(&self, timeout: Duration) -> Result<Option<Tuple>, BrokerError> {
        Ok(self.queue.take(1, timeout)?.into_iter().next())
    }

    pub fn try_recv(&self) -> Result<Option<Tuple>, BrokerError> {
        self.recv_timeout(Duration::ZERO)
    }

    /// Up to `max` tuples; waits at most `timeout` for the first one.
    pub fn recv_batch(&self, max: usize, timeout: Duration) -> Result<Vec<Tuple>, BrokerError> {
        self.queue.take(max.max(1), timeout)
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        self.queue.lock().has_consumer = false;
    }
}

/// Registry of named queues sharing one spill root.
pub struct Broker {
    spill_root: PathBuf,
    queues: Mutex<HashMap<String, QueueHandle>>,
}

impl Broker {
    pub fn new(spill_root: impl Into<PathBuf>) -> Self {
        Broker {
            spill_root: spill_root.into(),
            queues: Mutex::new(HashMap::new()),
        }
    }

    /// Spill root from `HSTREAM_SPILL`, else a per-process temp directory.
    pub fn from_env() -> Self {
        let root = std::env::var_os(SPILL_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| {
                std::env::temp_dir().join(format!("hstream-spill-{}", std::process::id()))
            });
        Broker::new(root)
    }

    pub fn spill_root(&self) -> &Path {
        &self.spill_root
    }

    /// A spill-policy config rooted at this broker's spill directory.
    pub fn queue_config(&self, name: &str, memory_capacity: usize) -> QueueConfig {
        QueueConfig::new(name, memory_capacity, &self.spill_root)
    }

    fn registry(&self) -> MutexGuard<'_, HashMap<String, QueueHandle>> {
        self.queues.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Declares a queue. Re-declaring with an identical config returns the
    /// existing handle.
    pub fn declare_queue(&self, config: QueueConfig) -> Result<QueueHandle, BrokerError> {
        if config.memory_capacity == 0 {
            return Err(BrokerError::InvalidConfig(format!(
                "queue `{}`: memory_capacity must be at least 1",
                config.name
            )));
        }
        if config.name.is_empty() || config.name.contains(['/', '\\']) || config.name.starts_with('.') {
            return Err(BrokerError::InvalidConfig(format!(
                "queue name `{}` is not a valid directory name",
                config.name
            )));
        }
        let mut queues = self.registry();
        if let Some(existing) = queues.get(&config.name) {
            return if existing.config() == &config {
                Ok(existing.clone())
            } else {
                Err(BrokerError::ConfigConflict(config.name))
            };
        }
        let dir = config.queue_dir();
        // A freshly declared queue is empty; stale segments are discarded.
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|source| BrokerError::Spill {
                path: dir.clone(),
                source,
            })?;
        }
        let queue = Queue {
            state: Mutex::new(State {
                memory: VecDeque::new(),
                spill: SpillLog::new(dir, SEGMENT_LIMIT),
                on_disk: 0,
                closed: false,
                has_consumer: false,
                published: 0,
                delivered: 0,
                spilled: 0,
            }),
            config,
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
        };
        let handle = QueueHandle(Arc::new(queue));
        queues.insert(handle.name().to_string(), handle.clone());
        Ok(handle)
    }

    pub fn queue(&self, name: &str) -> Option<QueueHandle> {
        self.registry().get(name).cloned()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.registry().contains_key(name)
    }

    pub fn queue_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.registry().keys().cloned().collect();
        names.sort();
        names
    }

    /// Closes and forgets a queue, removing its spill segments.
    pub fn delete_queue(&self, name: &str) -> Result<(), BrokerError> {
        let handle = self
            .registry()
            .remove(name)
            .ok_or_else(|| BrokerError::UnknownQueue(name.to_string()))?;
        handle.close();
        handle.0.lock().spill.remove_all();
        Ok(())
    }
}
