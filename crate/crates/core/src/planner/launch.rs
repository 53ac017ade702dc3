use std::io::Write;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::broker::{Broker, QueueConfig, QueueHandle, QueueStats, Subscription};
use crate::clock::Clock;
use crate::error::BrokerError;
use crate::model::Timestamp;
use crate::operator::{run_operator, OperatorContext, OperatorStats, SinkRecord};
use crate::store::{Connection, HistoricProvider, HistoricStore, SeriesRef};

use super::{PipelinePlan, SplitPolicy, Stage};

const BATCH: usize = 4096;
const POLL: Duration = Duration::from_millis(20);

/// Shared services a pipeline runs against.
#[derive(Clone)]
pub struct Runtime {
    pub broker: Arc<Broker>,
    pub store: Option<Arc<HistoricStore>>,
    pub clock: Arc<dyn Clock>,
}

/// Per-run settings that are not part of the plan.
pub struct RunOptions {
    pub start: Option<Timestamp>,
    pub until: Option<Timestamp>,
    /// Receives one NDJSON line per result.
    pub output: Box<dyn Write + Send>,
    /// Optional `(trigger_ts, value)` CSV for plotting.
    pub plot_csv: Option<Box<dyn Write + Send>>,
}

impl RunOptions {
    pub fn new(output: Box<dyn Write + Send>) -> Self {
        RunOptions {
            start: None,
            until: None,
            output,
            plot_csv: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineState {
    Starting,
    Running,
    Stopped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageStatus {
    pub name: String,
    pub tuples_in: u64,
    pub tuples_out: u64,
    pub triggers_fired: u64,
    pub late_dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PipelineStatus {
    pub id: String,
    pub state: PipelineState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cause: Option<String>,
    pub stages: Vec<StageStatus>,
    /// Milliseconds from launch to the first result written.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_output_ms: Option<u64>,
}

#[derive(Default)]
struct StageCounters {
    name: String,
    tuples_in: AtomicU64,
    tuples_out: AtomicU64,
    operator: OnceLock<Arc<OperatorStats>>,
}

struct Shared {
    state: Mutex<(PipelineState, Option<String>)>,
    stages: Vec<StageCounters>,
    stop: AtomicBool,
    running: AtomicUsize,
    launched: Instant,
    first_output: OnceLock<Duration>,
}

impl Shared {
    fn fail(&self, cause: String) {
        let mut st = self.state.lock().unwrap_or_else(|p| p.into_inner());
        if st.0 != PipelineState::Failed {
            log::error!("pipeline stage failed: {cause}");
            *st = (PipelineState::Failed, Some(cause));
        }
        self.stop.store(true, Ordering::SeqCst);
    }

    fn stage_done(&self) {
        if self.running.fetch_sub(1, Ordering::SeqCst) == 1 {
            let mut st = self.state.lock().unwrap_or_else(|p| p.into_inner());
            if st.0 != PipelineState::Failed {
                st.0 = PipelineState::Stopped;
            }
        }
    }
}

/// A launched (or failed-to-launch) pipeline.
pub struct PipelineHandle {
    id: String,
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
    /// Operator inputs with no upstream stage; closed on stop.
    idle_inputs: Vec<QueueHandle>,
    queues: Vec<QueueHandle>,
}

impl PipelineHandle {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn status(&self) -> PipelineStatus {
        let (state, cause) = self
            .shared
            .state
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .clone();
        let stages = self
            .shared
            .stages
            .iter()
            .map(|c| {
                let op = c.operator.get().map(|o| o.snapshot());
                StageStatus {
                    name: c.name.clone(),
                    tuples_in: op.map_or_else(|| c.tuples_in.load(Ordering::Relaxed), |o| o.tuples_in),
                    tuples_out: op.map_or_else(
                        || c.tuples_out.load(Ordering::Relaxed),
                        |o| o.results_out + o.error_records,
                    ),
                    triggers_fired: op.map_or(0, |o| o.triggers_fired),
                    late_dropped: op.map_or(0, |o| o.late_dropped),
                }
            })
            .collect();
        PipelineStatus {
            id: self.id.clone(),
            state,
            cause,
            stages,
            first_output_ms: self.first_output_after().map(|d| d.as_millis() as u64),
        }
    }

    /// Time from launch to the first result written, if any yet.
    pub fn first_output_after(&self) -> Option<Duration> {
        self.shared.first_output.get().copied()
    }

    pub fn queue_stats(&self) -> Vec<(String, QueueStats)> {
        self.queues
            .iter()
            .map(|q| (q.name().to_string(), q.stats()))
            .collect()
    }

    /// Graceful stop: the Fetch stage forwards what is already queued and
    /// closes its output; downstream stages drain, fire due triggers and
    /// finish.
    pub fn stop(mut self) -> PipelineStatus {
        self.shared.stop.store(true, Ordering::SeqCst);
        for q in &self.idle_inputs {
            q.close();
        }
        self.join()
    }

    /// Waits for the pipeline to finish on its own, e.g. after its source
    /// queue was closed or its last trigger fired.
    pub fn wait(mut self) -> PipelineStatus {
        self.join()
    }

    fn join(&mut self) -> PipelineStatus {
        for t in self.threads.drain(..) {
            if t.join().is_err() {
                self.shared.fail("stage thread panicked".into());
            }
        }
        self.status()
    }
}

impl Drop for PipelineHandle {
    fn drop(&mut self) {
        if !self.threads.is_empty() {
            self.shared.stop.store(true, Ordering::SeqCst);
            for q in &self.idle_inputs {
                q.close();
            }
            for t in self.threads.drain(..) {
                let _ = t.join();
            }
        }
    }
}

/// A stage ready to run: subscriptions taken, connections open.
enum Ready {
    Fetch {
        input: Subscription,
        output: QueueHandle,
    },
    Duplicator {
        input: Subscription,
        outputs: Vec<QueueHandle>,
    },
    Operator {
        config: crate::operator::OperatorConfig,
        ctx: OperatorContext,
    },
    Sink {
        inputs: Vec<Subscription>,
    },
}

/// Declares the plan's queues, wires every stage and starts one thread per
/// stage. If any stage cannot start, queues this call created are removed
/// and the handle reports `failed` with the cause.
pub fn launch(plan: &PipelinePlan, runtime: &Runtime, options: RunOptions) -> PipelineHandle {
    let shared = Arc::new(Shared {
        state: Mutex::new((PipelineState::Starting, None)),
        stages: plan
            .stages
            .iter()
            .map(|s| StageCounters {
                name: s.name().to_string(),
                ..Default::default()
            })
            .collect(),
        stop: AtomicBool::new(false),
        running: AtomicUsize::new(0),
        launched: Instant::now(),
        first_output: OnceLock::new(),
    });
    let mut created = Vec::new();
    let wired = wire(plan, runtime, &options, &mut created, &shared);
    let (ready, queues, idle_inputs) = match wired {
        Ok(w) => w,
        Err(cause) => {
            for name in &created {
                let _ = runtime.broker.delete_queue(name);
            }
            shared.fail(cause);
            return PipelineHandle {
                id: plan.id.clone(),
                shared,
                threads: Vec::new(),
                idle_inputs: Vec::new(),
                queues: Vec::new(),
            };
        }
    };

    if runtime.clock.is_virtual() {
        // nothing will ever arrive; let the operators run to `until`
        for q in &idle_inputs {
            q.close();
        }
    }
    shared.running.store(ready.len(), Ordering::SeqCst);
    let mut output = Some(options.output);
    let mut plot = options.plot_csv;
    let fan_out = plan.result_queues().len() > 1;
    let threads = ready
        .into_iter()
        .enumerate()
        .map(|(i, stage)| {
            let shared = Arc::clone(&shared);
            let name = format!("{}-{}", plan.id, plan.stages[i].name());
            let out = match stage {
                Ready::Sink { .. } => output.take(),
                _ => None,
            };
            let plot = match stage {
                Ready::Sink { .. } => plot.take(),
                _ => None,
            };
            std::thread::Builder::new()
                .name(name)
                .spawn(move || {
                    let counters = &shared.stages[i];
                    let result = match stage {
                        Ready::Fetch { input, output } => run_fetch(&shared, counters, input, output),
                        Ready::Duplicator { input, outputs } => run_duplicator(counters, input, outputs),
                        Ready::Operator { config, ctx } => run_operator(&config, ctx)
                            .map(|_| ())
                            .map_err(|e| e.to_string()),
                        Ready::Sink { inputs } => run_sink(
                            &shared,
                            counters,
                            inputs,
                            out.expect("sink owns the output"),
                            plot,
                            fan_out,
                        ),
                    };
                    if let Err(cause) = result {
                        shared.fail(format!("{}: {cause}", counters.name));
                    }
                    shared.stage_done();
                })
                .expect("spawn stage thread")
        })
        .collect();
    {
        let mut st = shared.state.lock().unwrap_or_else(|p| p.into_inner());
        if st.0 == PipelineState::Starting {
            st.0 = PipelineState::Running;
        }
    }
    PipelineHandle {
        id: plan.id.clone(),
        shared,
        threads,
        idle_inputs,
        queues,
    }
}

type Wired = (Vec<Ready>, Vec<QueueHandle>, Vec<QueueHandle>);

fn wire(
    plan: &PipelinePlan,
    runtime: &Runtime,
    options: &RunOptions,
    created: &mut Vec<String>,
    shared: &Arc<Shared>,
) -> Result<Wired, String> {
    let broker = &runtime.broker;
    let mut queues = Vec::new();
    for pq in &plan.queues {
        if let Some(existing) = broker.queue(&pq.name) {
            if !existing.is_closed() {
                return Err(format!("queue `{}` is in use by a running pipeline", pq.name));
            }
            // left over from an earlier run of the same query
            broker.delete_queue(&pq.name).map_err(|e| e.to_string())?;
        }
        let config = QueueConfig::new(pq.name.clone(), pq.memory_capacity, broker.spill_root())
            .with_policy(pq.overflow_policy);
        let q = broker.declare_queue(config).map_err(|e| e.to_string())?;
        created.push(pq.name.clone());
        queues.push(q);
    }
    let queue = |name: &str| -> Result<QueueHandle, String> {
        broker
            .queue(name)
            .ok_or_else(|| BrokerError::UnknownQueue(name.to_string()).to_string())
    };
    let subscribe = |name: &str| -> Result<Subscription, String> {
        queue(name)?.subscribe().map_err(|e| e.to_string())
    };

    let has_fetch = plan.stages.iter().any(|s| matches!(s, Stage::Fetch { .. }));
    let mut idle_inputs = Vec::new();
    let mut ready = Vec::new();
    for (i, stage) in plan.stages.iter().enumerate() {
        ready.push(match stage {
            Stage::Fetch { source, output, .. } => {
                let src = match broker.queue(source) {
                    Some(q) => q,
                    None => {
                        let q = broker
                            .declare_queue(broker.queue_config(source, crate::broker::DEFAULT_MEMORY_CAPACITY))
                            .map_err(|e| e.to_string())?;
                        created.push(source.clone());
                        q
                    }
                };
                Ready::Fetch {
                    input: src.subscribe().map_err(|e| e.to_string())?,
                    output: queue(output)?,
                }
            }
            Stage::Duplicator { input, outputs, .. } => Ready::Duplicator {
                input: subscribe(input)?,
                outputs: outputs.iter().map(|o| queue(o)).collect::<Result<_, _>>()?,
            },
            Stage::Operator {
                name,
                input,
                historic,
                split_policy,
                config,
                output,
                ..
            } => {
                let mut config = config.clone();
                config.start = options.start;
                config.until = options.until;
                let historic: Option<Box<dyn Connection>> = match historic {
                    None => None,
                    Some(h) => {
                        let store = runtime
                            .store
                            .as_ref()
                            .ok_or_else(|| "query needs a historic store but none is open".to_string())?;
                        let series = SeriesRef::from(h);
                        let conn = store
                            .provider(&h.provider)
                            .and_then(|p| p.connect(&series))
                            .map_err(|e| e.to_string())?;
                        if !has_fetch {
                            // no live stream: history serves every window
                            config.split = Some(Timestamp(u64::MAX));
                        } else if *split_policy == SplitPolicy::HistoryEnd {
                            let range = store.time_range(&series).map_err(|e| e.to_string())?;
                            config.split = range.map(|(_, last)| last.saturating_add(1));
                        }
                        Some(conn)
                    }
                };
                if !has_fetch {
                    idle_inputs.push(queue(input)?);
                }
                let stats = Arc::new(OperatorStats::default());
                let _ = shared.stages[i].operator.set(Arc::clone(&stats));
                Ready::Operator {
                    config,
                    ctx: OperatorContext {
                        name: name.clone(),
                        input: subscribe(input)?,
                        historic,
                        sink: queue(output)?,
                        clock: Arc::clone(&runtime.clock),
                        stats,
                    },
                }
            }
            Stage::Sink { inputs, .. } => Ready::Sink {
                inputs: inputs.iter().map(|q| subscribe(q)).collect::<Result<_, _>>()?,
            },
        });
    }
    Ok((ready, queues, idle_inputs))
}

fn run_fetch(shared: &Shared, counters: &StageCounters, input: Subscription, output: QueueHandle) -> Result<(), String> {
    let forward = |batch: Vec<crate::model::Tuple>| -> Result<(), String> {
        let n = batch.len() as u64;
        counters.tuples_in.fetch_add(n, Ordering::Relaxed);
        output.publish_batch(batch).map_err(|e| e.to_string())?;
        counters.tuples_out.fetch_add(n, Ordering::Relaxed);
        Ok(())
    };
    let result = loop {
        if shared.stop.load(Ordering::SeqCst) {
            // forward what is already queued, then stop
            break loop {
                match input.recv_batch(BATCH, Duration::ZERO) {
                    Ok(b) if b.is_empty() => break Ok(()),
                    Ok(b) => {
                        if let Err(e) = forward(b) {
                            break Err(e);
                        }
                    }
                    Err(BrokerError::Closed(_)) => break Ok(()),
                    Err(e) => break Err(e.to_string()),
                }
            };
        }
        match input.recv_batch(BATCH, POLL) {
            Ok(b) if b.is_empty() => {}
            Ok(b) => forward(b)?,
            Err(BrokerError::Closed(_)) => break Ok(()),
            Err(e) => break Err(e.to_string()),
        }
    };
    output.close();
    result
}

fn run_duplicator(counters: &StageCounters, input: Subscription, outputs: Vec<QueueHandle>) -> Result<(), String> {
    let result = loop {
        match input.recv_batch(BATCH, POLL) {
            Ok(b) if b.is_empty() => {}
            Ok(b) => {
                counters.tuples_in.fetch_add(b.len() as u64, Ordering::Relaxed);
                for out in &outputs {
                    let n = out.publish_batch(b.clone()).map_err(|e| e.to_string())?;
                    counters.tuples_out.fetch_add(n as u64, Ordering::Relaxed);
                }
            }
            Err(BrokerError::Closed(_)) => break Ok(()),
            Err(e) => break Err(e.to_string()),
        }
    };
    for out in &outputs {
        out.close();
    }
    result
}

/// Writes records from every result queue, merged by trigger instant and
/// then query index so output order does not depend on thread timing.
fn run_sink(
    shared: &Shared,
    counters: &StageCounters,
    inputs: Vec<Subscription>,
    mut output: Box<dyn Write + Send>,
    mut plot: Option<Box<dyn Write + Send>>,
    fan_out: bool,
) -> Result<(), String> {
    let io = |e: std::io::Error| e.to_string();
    if let Some(p) = plot.as_mut() {
        let header = if fan_out { "query,trigger_ts,value\n" } else { "trigger_ts,value\n" };
        p.write_all(header.as_bytes()).map_err(io)?;
    }
    let mut heads: Vec<Option<SinkRecord>> = vec![None; inputs.len()];
    let mut open = vec![true; inputs.len()];
    loop {
        for (i, sub) in inputs.iter().enumerate() {
            while open[i] && heads[i].is_none() {
                match sub.recv_timeout(POLL) {
                    Ok(Some(t)) => {
                        counters.tuples_in.fetch_add(1, Ordering::Relaxed);
                        heads[i] = Some(SinkRecord::from_tuple(&t).map_err(|e| e.to_string())?);
                    }
                    Ok(None) => {
                        if inputs.len() == 1 {
                            continue;
                        }
                        // another queue may be ready; come back later
                        break;
                    }
                    Err(BrokerError::Closed(_)) => open[i] = false,
                    Err(e) => return Err(e.to_string()),
                }
            }
        }
        let waiting = (0..inputs.len()).any(|i| open[i] && heads[i].is_none());
        if waiting {
            continue;
        }
        let next = (0..inputs.len())
            .filter(|i| heads[*i].is_some())
            .min_by_key(|i| (heads[*i].as_ref().map(|r| r.trigger()), *i));
        let Some(i) = next else {
            break;
        };
        let record = heads[i].take().expect("head present");
        let mut line = record.to_ndjson();
        if fan_out {
            line.replace_range(..1, &format!("{{\"query\":{i},"));
        }
        line.push('\n');
        output.write_all(line.as_bytes()).map_err(io)?;
        output.flush().map_err(io)?;
        let _ = shared.first_output.set(shared.launched.elapsed());
        if let (Some(p), SinkRecord::Result(r)) = (plot.as_mut(), &record) {
            let value = r.value.map(|v| v.to_string()).unwrap_or_default();
            let row = if fan_out {
                format!("{i},{},{value}\n", r.trigger.0)
            } else {
                format!("{},{value}\n", r.trigger.0)
            };
            p.write_all(row.as_bytes()).map_err(io)?;
        }
        counters.tuples_out.fetch_add(1, Ordering::Relaxed);
    }
    if let Some(p) = plot.as_mut() {
        p.flush().map_err(io)?;
    }
    output.flush().map_err(io)
}
