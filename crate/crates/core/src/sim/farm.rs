use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::broker::{Broker, QueueConfig, QueueHandle, QueueStats, Subscription};
use crate::clock::{Clock, SystemClock};
use crate::error::{BrokerError, SimError};
use crate::model::{Timestamp, Tuple};

use super::{generate_tuple, thing_id, thing_rng, ClockMode, FarmConfig, FarmStream, Topology};

const BATCH: usize = 4096;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LatencySummary {
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

impl LatencySummary {
    /// Nearest-rank percentiles; sorts `samples`.
    pub fn from_samples(samples: &mut [u64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_unstable();
        let rank = |p: f64| {
            let idx = ((p / 100.0) * samples.len() as f64).ceil() as usize;
            samples[idx.clamp(1, samples.len()) - 1] as f64
        };
        LatencySummary {
            p50: rank(50.0),
            p95: rank(95.0),
            p99: rank(99.0),
            max: *samples.last().expect("non-empty") as f64,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QueueReport {
    pub name: String,
    #[serde(flatten)]
    pub stats: QueueStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub things: usize,
    pub period_ms: u64,
    pub duration_ms: u64,
    pub topology: Topology,
    pub consumers: usize,
    pub clock: ClockMode,
    pub published: u64,
    pub delivered: u64,
    pub elapsed_ms: u64,
    /// Delivered tuples per wall-clock second.
    pub throughput: f64,
    /// Publish-to-delivery latency; real-clock runs only.
    pub latency_ms: Option<LatencySummary>,
    /// Lateness of publications against their schedule; real-clock runs only.
    pub jitter_ms: Option<LatencySummary>,
    pub queues: Vec<QueueReport>,
    pub complete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const REPORT_CSV_HEADER: &str =
    "things,topology,consumers,period_ms,duration_ms,clock,published,delivered,elapsed_ms,throughput,p50_ms,p95_ms,p99_ms,complete";

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// One CSV row matching [`REPORT_CSV_HEADER`].
    pub fn to_csv_row(&self) -> String {
        let lat = self.latency_ms.unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{:.1},{},{},{},{}",
            self.things,
            self.topology.as_str(),
            self.consumers,
            self.period_ms,
            self.duration_ms,
            match self.clock {
                ClockMode::Virtual => "virtual",
                ClockMode::Real => "real",
            },
            self.published,
            self.delivered,
            self.elapsed_ms,
            self.throughput,
            lat.p50,
            lat.p95,
            lat.p99,
            self.complete
        )
    }
}

struct ConsumerResult {
    delivered: u64,
    latencies: Vec<u64>,
}

/// Drains every subscription until all queues are closed and empty.
fn consume(subs: Vec<Subscription>, real: bool) -> Result<ConsumerResult, BrokerError> {
    let clock = SystemClock;
    let mut open: Vec<bool> = vec![true; subs.len()];
    let mut remaining = subs.len();
    let mut delivered = 0;
    let mut latencies = Vec::new();
    let single = subs.len() == 1;
    while remaining > 0 {
        let mut got = 0;
        for (i, sub) in subs.iter().enumerate() {
            if !open[i] {
                continue;
            }
            let wait = if single { Duration::from_millis(20) } else { Duration::ZERO };
            match sub.recv_batch(BATCH, wait) {
                Ok(batch) => {
                    got += batch.len();
                    delivered += batch.len() as u64;
                    if real {
                        let now = clock.now().0;
                        latencies.extend(batch.iter().map(|t| now.saturating_sub(t.timestamp().0)));
                    }
                }
                Err(BrokerError::Closed(_)) => {
                    open[i] = false;
                    remaining -= 1;
                }
                Err(e) => return Err(e),
            }
        }
        if got == 0 && !single {
            thread::sleep(Duration::from_micros(500));
        }
    }
    Ok(ConsumerResult {
        delivered,
        latencies,
    })
}

/// Runs the farm against `broker`, with the farm queues split round-robin
/// over the consumer threads, and reports counts, throughput and latency.
///
/// Invalid configurations are errors. Broker failures mid-run abort the
/// run and yield a report with `complete = false`.
pub fn run_farm(config: &FarmConfig, broker: &Broker) -> Result<RunReport, SimError> {
    config.validate()?;
    let started = Instant::now();
    let mut report = RunReport {
        things: config.things,
        period_ms: config.period_ms,
        duration_ms: config.duration_ms,
        topology: config.topology,
        consumers: config.effective_consumers(),
        clock: config.clock,
        published: 0,
        delivered: 0,
        elapsed_ms: 0,
        throughput: 0.0,
        latency_ms: None,
        jitter_ms: None,
        queues: Vec::new(),
        complete: false,
        error: None,
    };

    let mut queues = Vec::new();
    let mut subs = Vec::new();
    for name in config.queue_names() {
        let declared = broker
            .declare_queue(QueueConfig::new(name, config.queue_capacity, broker.spill_root()))
            .and_then(|q| q.subscribe().map(|s| (q, s)));
        match declared {
            Ok((q, s)) => {
                queues.push(q);
                subs.push(s);
            }
            Err(e) => {
                report.error = Some(e.to_string());
                return Ok(report);
            }
        }
    }

    let real = config.clock == ClockMode::Real;
    let n = report.consumers;
    let mut shares: Vec<Vec<Subscription>> = (0..n).map(|_| Vec::new()).collect();
    for (i, sub) in subs.into_iter().enumerate() {
        shares[i % n].push(sub);
    }
    let consumers: Vec<_> = shares
        .into_iter()
        .enumerate()
        .map(|(i, share)| {
            thread::Builder::new()
                .name(format!("farm-consumer-{i}"))
                .spawn(move || consume(share, real))
                .expect("spawn consumer")
        })
        .collect();

    let publish_result = match config.clock {
        ClockMode::Virtual => publish_virtual(config, &queues),
        ClockMode::Real => publish_real(config, &queues).map(|jitter| {
            report.jitter_ms = Some(LatencySummary::from_samples(&mut jitter.into_iter().collect::<Vec<_>>()));
        }),
    };
    for q in &queues {
        q.close();
    }
    let consumed = consumers
        .into_iter()
        .map(|c| c.join().expect("consumer thread panicked"))
        .try_fold(ConsumerResult { delivered: 0, latencies: Vec::new() }, |mut acc, r| {
            let r = r?;
            acc.delivered += r.delivered;
            acc.latencies.extend(r.latencies);
            Ok::<_, BrokerError>(acc)
        });

    report.elapsed_ms = started.elapsed().as_millis() as u64;
    report.queues = queues
        .iter()
        .map(|q| QueueReport {
            name: q.name().to_string(),
            stats: q.stats(),
        })
        .collect();
    report.published = report.queues.iter().map(|q| q.stats.published).sum();
    match consumed {
        Ok(mut c) => {
            report.delivered = c.delivered;
            if real {
                report.latency_ms = Some(LatencySummary::from_samples(&mut c.latencies));
            }
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    if let Err(e) = publish_result {
        report.error = Some(e.to_string());
    }
    report.throughput = report.delivered as f64 / (report.elapsed_ms.max(1) as f64 / 1000.0);
    report.complete = report.error.is_none();
    Ok(report)
}

fn publish_virtual(config: &FarmConfig, queues: &[QueueHandle]) -> Result<(), BrokerError> {
    let mut stream = FarmStream::new(config);
    match config.topology {
        Topology::SharedQueue => loop {
            let batch: Vec<Tuple> = stream.by_ref().take(BATCH).map(|(_, t)| t).collect();
            if batch.is_empty() {
                return Ok(());
            }
            queues[0].publish_batch(batch)?;
        },
        Topology::QueuePerThing => {
            for (i, t) in stream {
                queues[i].publish(t)?;
            }
            Ok(())
        }
    }
}

/// Publishes on the wall clock from a few threads, each owning a slice of
/// the things. Returns per-publication lateness in milliseconds.
fn publish_real(config: &FarmConfig, queues: &[QueueHandle]) -> Result<Vec<u64>, BrokerError> {
    let threads = config.publishers.clamp(1, config.things);
    let start = Instant::now();
    let wall0 = SystemClock.now().0;
    let abort = Arc::new(AtomicBool::new(false));
    let handles: Vec<_> = (0..threads)
        .map(|p| {
            let config = config.clone();
            let queues = queues.to_vec();
            let abort = Arc::clone(&abort);
            thread::Builder::new()
                .name(format!("farm-publisher-{p}"))
                .spawn(move || {
                    let r = publisher(&config, &queues, p, threads, start, wall0, &abort);
                    if r.is_err() {
                        abort.store(true, Ordering::SeqCst);
                    }
                    r
                })
                .expect("spawn publisher")
        })
        .collect();
    let mut jitter = Vec::new();
    let mut first_err = None;
    for h in handles {
        match h.join().expect("publisher panicked") {
            Ok(j) => jitter.extend(j),
            Err(e) => first_err = first_err.or(Some(e)),
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(jitter),
    }
}

fn publisher(
    config: &FarmConfig,
    queues: &[QueueHandle],
    index: usize,
    stride: usize,
    start: Instant,
    wall0: u64,
    abort: &AtomicBool,
) -> Result<Vec<u64>, BrokerError> {
    let mine: Vec<usize> = (index..config.things).step_by(stride).collect();
    let mut rngs: Vec<_> = mine.iter().map(|&i| thing_rng(config.seed, i)).collect();
    let ids: Vec<String> = mine.iter().map(|&i| thing_id(i)).collect();
    let mut next_k = vec![0u64; mine.len()];
    let n = config.tuples_per_thing();
    let mut jitter = Vec::with_capacity(mine.len() * n as usize);
    let mut shared_batch = Vec::new();
    loop {
        if abort.load(Ordering::Relaxed) {
            return Ok(jitter);
        }
        let now = start.elapsed().as_millis() as u64;
        let mut next_due = u64::MAX;
        for (slot, &thing) in mine.iter().enumerate() {
            let offset = config.offset(thing);
            let mut per_thing = Vec::new();
            while next_k[slot] < n && offset + next_k[slot] * config.period_ms <= now {
                let due = offset + next_k[slot] * config.period_ms;
                jitter.push(now - due);
                let t = generate_tuple(&ids[slot], &config.attributes, &mut rngs[slot], Timestamp(wall0 + now));
                match config.topology {
                    Topology::SharedQueue => shared_batch.push(t),
                    Topology::QueuePerThing => per_thing.push(t),
                }
                next_k[slot] += 1;
            }
            if !per_thing.is_empty() {
                queues[thing].publish_batch(per_thing)?;
            }
            if next_k[slot] < n {
                next_due = next_due.min(offset + next_k[slot] * config.period_ms);
            }
        }
        if !shared_batch.is_empty() {
            queues[0].publish_batch(std::mem::take(&mut shared_batch))?;
        }
        if next_due == u64::MAX {
            return Ok(jitter);
        }
        let now = start.elapsed().as_millis() as u64;
        if next_due > now {
            thread::sleep(Duration::from_millis(next_due - now));
        }
    }
}
