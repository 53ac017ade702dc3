//! Compiles queries into pipelines of broker-connected stages and runs
//! them.
//!
//! A single query becomes `Fetch -> Operator -> Sink`. Several queries over
//! one stream share a Fetch whose output a Duplicator copies into one
//! dedicated input queue per operator; their results are merged in trigger
//! order by one Sink.

mod launch;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::broker::{OverflowPolicy, DEFAULT_MEMORY_CAPACITY};
use crate::error::PlanError;
use crate::operator::OperatorConfig;
use crate::query::{render_query, validate, Catalog, HistoricSource, QuerySpec, WindowKind};

pub use launch::{launch, PipelineHandle, PipelineState, PipelineStatus, Runtime, RunOptions, StageStatus};

/// Where the history/live boundary sits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPolicy {
    /// The operator start time.
    #[default]
    Start,
    /// Just after the newest tuple stored in the historic series.
    HistoryEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub queue_capacity: usize,
    pub overflow_policy: OverflowPolicy,
    pub allowed_lateness_ms: u64,
    pub split_policy: SplitPolicy,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            queue_capacity: DEFAULT_MEMORY_CAPACITY,
            overflow_policy: OverflowPolicy::Spill,
            allowed_lateness_ms: 0,
            split_policy: SplitPolicy::Start,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedQueue {
    pub name: String,
    pub memory_capacity: usize,
    pub overflow_policy: OverflowPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Stage {
    /// Moves tuples from an external stream queue into the pipeline.
    Fetch {
        name: String,
        source: String,
        output: String,
    },
    /// Copies every tuple into each output queue.
    Duplicator {
        name: String,
        input: String,
        outputs: Vec<String>,
    },
    Operator {
        name: String,
        /// Fed by the Fetch or Duplicator stage; history-only queries have
        /// no upstream and the queue stays empty.
        input: String,
        historic: Option<HistoricSource>,
        split_policy: SplitPolicy,
        /// The window was a tumbling one: sliding with duration = frequency.
        tumbling: bool,
        config: OperatorConfig,
        output: String,
    },
    Sink {
        name: String,
        inputs: Vec<String>,
    },
}

impl Stage {
    pub fn name(&self) -> &str {
        match self {
            Stage::Fetch { name, .. }
            | Stage::Duplicator { name, .. }
            | Stage::Operator { name, .. }
            | Stage::Sink { name, .. } => name,
        }
    }
}

/// A compiled pipeline. Stages are listed upstream first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelinePlan {
    pub id: String,
    pub queries: Vec<String>,
    pub stages: Vec<Stage>,
    pub queues: Vec<PlannedQueue>,
}

impl PipelinePlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plans always serialize")
    }

    pub fn result_queues(&self) -> Vec<&str> {
        self.stages
            .iter()
            .find_map(|s| match s {
                Stage::Sink { inputs, .. } => Some(inputs.iter().map(String::as_str).collect()),
                _ => None,
            })
            .unwrap_or_default()
    }
}

/// `q` followed by 12 hex digits of the SHA-256 of the canonical query text.
pub fn pipeline_id(canonical: &[String]) -> String {
    let digest = Sha256::digest(canonical.join("\n").as_bytes());
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("q{hex}")
}

pub fn plan(spec: &QuerySpec, catalog: &Catalog, options: &PlanOptions) -> Result<PipelinePlan, PlanError> {
    plan_fanout(std::slice::from_ref(spec), catalog, options)
}

/// Plans several queries over one shared stream as a single pipeline.
pub fn plan_fanout(specs: &[QuerySpec], catalog: &Catalog, options: &PlanOptions) -> Result<PipelinePlan, PlanError> {
    if specs.is_empty() {
        return Err(PlanError::Empty);
    }
    let problems: Vec<String> = specs
        .iter()
        .enumerate()
        .flat_map(|(i, spec)| {
            validate(spec, catalog).into_iter().map(move |d| {
                if specs.len() > 1 {
                    format!("query {}: {d}", i + 1)
                } else {
                    d.to_string()
                }
            })
        })
        .collect();
    if !problems.is_empty() {
        return Err(PlanError::Unresolved(problems));
    }
    let stream = specs[0].sources.stream.clone();
    if specs.len() > 1 {
        if stream.is_none() {
            return Err(PlanError::IncompatibleFanOut("queries have no stream source".into()));
        }
        if let Some(other) = specs.iter().find(|s| s.sources.stream != stream) {
            return Err(PlanError::IncompatibleFanOut(format!(
                "`{}` and `{}`",
                stream.as_deref().unwrap_or_default(),
                other.sources.stream.as_deref().unwrap_or("no stream")
            )));
        }
    }

    let queries: Vec<String> = specs.iter().map(render_query).collect();
    let id = pipeline_id(&queries);
    let fan_out = specs.len() > 1;
    let mut stages = Vec::new();
    let mut queue_names = Vec::new();

    let op_inputs: Vec<String> = match &stream {
        None => vec![format!("{id}.op0")],
        Some(source) if !fan_out => {
            let q = format!("{id}.op0");
            stages.push(Stage::Fetch {
                name: "fetch".into(),
                source: source.clone(),
                output: q.clone(),
            });
            vec![q]
        }
        Some(source) => {
            let fetched = format!("{id}.fetch");
            let outputs: Vec<String> = (0..specs.len()).map(|i| format!("{id}.op{i}")).collect();
            stages.push(Stage::Fetch {
                name: "fetch".into(),
                source: source.clone(),
                output: fetched.clone(),
            });
            stages.push(Stage::Duplicator {
                name: "dup".into(),
                input: fetched.clone(),
                outputs: outputs.clone(),
            });
            queue_names.push(fetched);
            outputs
        }
    };

    let mut results = Vec::new();
    for (i, (spec, input)) in specs.iter().zip(op_inputs).enumerate() {
        let output = if fan_out {
            format!("results.{id}.{i}")
        } else {
            format!("results.{id}")
        };
        let mut config = OperatorConfig::from_spec(spec);
        config.allowed_lateness_ms = options.allowed_lateness_ms;
        config.live_retention_ms = catalog.live_retention_ms;
        let tumbling = spec.window.kind == WindowKind::Sliding
            && spec.window.duration_millis()? == spec.frequency.millis()?;
        queue_names.push(input.clone());
        queue_names.push(output.clone());
        results.push(output.clone());
        stages.push(Stage::Operator {
            name: format!("op{i}"),
            input,
            historic: spec.sources.historic.clone(),
            split_policy: options.split_policy,
            tumbling,
            config,
            output,
        });
    }
    stages.push(Stage::Sink {
        name: "sink".into(),
        inputs: results,
    });

    let queues = queue_names
        .into_iter()
        .map(|name| PlannedQueue {
            name,
            memory_capacity: options.queue_capacity,
            overflow_policy: options.overflow_policy,
        })
        .collect();
    Ok(PipelinePlan {
        id,
        queries,
        stages,
        queues,
    })
}
