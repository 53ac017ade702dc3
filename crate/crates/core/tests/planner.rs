mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{SharedBuf, FASTEST_DOWNLOAD, NEUBOT_QUERIES};
use hstream_core::broker::Broker;
use hstream_core::clock::{SystemClock, VirtualClock};
use hstream_core::error::PlanError;
use hstream_core::operator::{run_operator, OperatorContext, OperatorStats, SinkRecord};
use hstream_core::planner::{
    launch, plan, plan_fanout, PipelineState, PlanOptions, RunOptions, Runtime, Stage,
};
use hstream_core::query::{parse_query, Catalog, HistoricSource, WindowKind};
use hstream_core::store::{HistoricStore, SeriesRef};
use hstream_core::{Timestamp, Tuple};

const ORIGIN: u64 = 1_600_000_000_000;

struct Env {
    _dir: tempfile::TempDir,
    broker: Arc<Broker>,
    store: Arc<HistoricStore>,
}

fn env() -> Env {
    let dir = tempfile::tempdir().unwrap();
    let broker = Arc::new(Broker::new(dir.path().join("spill")));
    let store = Arc::new(HistoricStore::open(dir.path().join("store")).unwrap());
    for (p, s) in [("influxdb", "speedtest"), ("cassandra", "speedtests")] {
        let name = SeriesRef::new(p, "neubot", s).unwrap();
        store.register(&name).unwrap();
        let t = Tuple::from_pairs(Timestamp(ORIGIN - 1_000), "h", [("download_speed", 1.0), ("upload_speed", 2.0)])
            .unwrap();
        store.ingest(&name, &[t]).unwrap();
    }
    broker.declare_queue(broker.queue_config("neubotspeed", 1000)).unwrap();
    Env {
        _dir: dir,
        broker,
        store,
    }
}

fn catalog(e: &Env) -> Catalog {
    let mut c = e.store.catalog();
    c.queues.extend(e.broker.queue_names());
    c
}

fn tuple(ts: u64, v: f64) -> Tuple {
    Tuple::from_pairs(Timestamp(ts), "thing-0", [("download_speed", v)]).unwrap()
}

#[test]
fn neubot_query_plans_as_chain() {
    let e = env();
    let spec = parse_query(NEUBOT_QUERIES[0]).unwrap();
    let p = plan(&spec, &catalog(&e), &PlanOptions::default()).unwrap();
    assert!(p.id.starts_with('q') && p.id.len() == 13);
    let kinds: Vec<&str> = p.stages.iter().map(|s| s.name()).collect();
    assert_eq!(kinds, vec!["fetch", "op0", "sink"]);
    match &p.stages[1] {
        Stage::Operator {
            historic, config, output, tumbling, ..
        } => {
            assert_eq!(
                historic.as_ref(),
                Some(&HistoricSource {
                    provider: "influxdb".into(),
                    database: "neubot".into(),
                    series: "speedtest".into()
                })
            );
            assert_eq!(config.attribute, "download_speed");
            assert_eq!(config.trigger.millis().unwrap(), 20_000);
            assert_eq!(config.window.duration_millis().unwrap(), 600_000);
            assert_eq!(output, &format!("results.{}", p.id));
            assert!(!tumbling);
        }
        other => panic!("unexpected stage {other:?}"),
    }
    assert!(matches!(&p.stages[0], Stage::Fetch { source, .. } if source == "neubotspeed"));
    // every edge has exactly one queue
    assert_eq!(p.queues.len(), 2);
    // pure function of its inputs
    assert_eq!(p, plan(&spec, &catalog(&e), &PlanOptions::default()).unwrap());
    let json: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
    assert_eq!(json["stages"][0]["kind"], "fetch");
}

#[test]
fn stream_only_and_tumbling() {
    let e = env();
    let spec = parse_query("every 2 minutes compute the min value of x of the last 2 minutes from streaming rabbitmq queue neubotspeed").unwrap();
    let p = plan(&spec, &catalog(&e), &PlanOptions::default()).unwrap();
    match &p.stages[1] {
        Stage::Operator {
            historic, tumbling, config, ..
        } => {
            assert!(historic.is_none());
            assert!(tumbling);
            assert_eq!(config.window.kind, WindowKind::Sliding);
        }
        other => panic!("unexpected stage {other:?}"),
    }
}

#[test]
fn unresolved_sources_are_reported() {
    let e = env();
    let spec = parse_query("every 2 minutes compute the min value of x of the last 2 minutes from influxdb database nope series s and streaming rabbitmq queue missing").unwrap();
    match plan(&spec, &catalog(&e), &PlanOptions::default()) {
        Err(PlanError::Unresolved(diags)) => {
            assert!(diags.iter().any(|d| d.contains("missing")));
            assert!(diags.iter().any(|d| d.contains("influxdb/nope/s")));
        }
        other => panic!("expected unresolved, got {other:?}"),
    }
}

fn runtime(e: &Env, clock: Arc<dyn hstream_core::clock::Clock>) -> Runtime {
    Runtime {
        broker: Arc::clone(&e.broker),
        store: Some(Arc::clone(&e.store)),
        clock,
    }
}

#[test]
fn launch_then_stop_drains() {
    let e = env();
    let spec = parse_query(NEUBOT_QUERIES[1]).unwrap();
    let p = plan(&spec, &catalog(&e), &PlanOptions::default()).unwrap();
    let out = SharedBuf::default();
    let h = launch(&p, &runtime(&e, Arc::new(SystemClock)), RunOptions::new(Box::new(out.clone())));
    assert_eq!(h.status().state, PipelineState::Running);
    let source = e.broker.queue("neubotspeed").unwrap();
    for i in 0..100 {
        source.publish(tuple(ORIGIN + i, 1.0)).unwrap();
    }
    let deadline = Instant::now() + Duration::from_secs(10);
    while h.status().stages[0].tuples_in < 100 && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(5));
    }
    assert_eq!(h.status().stages[0].tuples_in, 100);
    let queues: Vec<_> = p.queues.iter().map(|q| e.broker.queue(&q.name).unwrap()).collect();
    let status = h.stop();
    assert_eq!(status.state, PipelineState::Stopped);
    for q in &queues {
        let s = q.stats();
        assert_eq!(s.delivered, s.published, "queue {}", q.name());
    }
    assert_eq!(status.stages[0].tuples_out, status.stages[1].tuples_in);
    let frozen = status.stages.clone();
    std::thread::sleep(Duration::from_millis(30));
    assert_eq!(status.stages, frozen);
    // the source queue's consumer slot is free again
    assert!(source.subscribe().is_ok());
}

#[test]
fn missing_series_rolls_back() {
    let e = env();
    let spec = parse_query(NEUBOT_QUERIES[0]).unwrap();
    let p = plan(&spec, &catalog(&e), &PlanOptions::default()).unwrap();
    let empty_store = Arc::new(HistoricStore::open(e._dir.path().join("other")).unwrap());
    let rt = Runtime {
        broker: Arc::clone(&e.broker),
        store: Some(empty_store),
        clock: Arc::new(SystemClock),
    };
    let h = launch(&p, &rt, RunOptions::new(Box::new(std::io::sink())));
    let status = h.status();
    assert_eq!(status.state, PipelineState::Failed);
    assert!(status.cause.unwrap().contains("speedtest"));
    for q in &p.queues {
        assert!(!e.broker.contains(&q.name), "{} left behind", q.name);
    }
    assert!(e.broker.contains("neubotspeed"));
}

#[test]
fn shared_source_is_rejected() {
    let e = env();
    let cat = catalog(&e);
    let a = plan(&parse_query(NEUBOT_QUERIES[1]).unwrap(), &cat, &PlanOptions::default()).unwrap();
    let b = plan(&parse_query(NEUBOT_QUERIES[3]).unwrap(), &cat, &PlanOptions::default()).unwrap();
    let rt = runtime(&e, Arc::new(SystemClock));
    let first = launch(&a, &rt, RunOptions::new(Box::new(std::io::sink())));
    let second = launch(&b, &rt, RunOptions::new(Box::new(std::io::sink())));
    assert_eq!(second.status().state, PipelineState::Failed);
    assert!(second.status().cause.unwrap().contains("already has a consumer"));
    assert_eq!(first.status().state, PipelineState::Running);
    assert_eq!(first.stop().state, PipelineState::Stopped);
}

fn log_20_minutes() -> Vec<Tuple> {
    (0..240u64)
        .map(|i| tuple(ORIGIN + i * 5_000, ((i * 7919) % 1000) as f64 / 10.0))
        .collect()
}

/// Planned pipeline output for `log` under a virtual clock.
fn run_planned(e: &Env, text: &str, log: &[Tuple]) -> String {
    let spec = parse_query(text).unwrap();
    let p = plan(&spec, &catalog(e), &PlanOptions::default()).unwrap();
    let out = SharedBuf::default();
    let mut opts = RunOptions::new(Box::new(out.clone()));
    opts.start = Some(Timestamp(ORIGIN));
    opts.until = Some(Timestamp(ORIGIN + 20 * 60_000));
    let clock = VirtualClock::new(Timestamp(ORIGIN));
    let h = launch(&p, &runtime(e, Arc::new(clock.clone())), opts);
    let source = e.broker.queue("neubotspeed").unwrap();
    for t in log {
        clock.advance_to(t.timestamp());
        source.publish(t.clone()).unwrap();
    }
    source.close();
    let status = h.wait();
    assert_eq!(status.state, PipelineState::Stopped, "{:?}", status.cause);
    out.text()
}

#[test]
fn planner_adds_no_semantics() {
    let e = env();
    let log = log_20_minutes();
    let planned = run_planned(&e, FASTEST_DOWNLOAD, &log);

    // the same operator driven directly
    let spec = parse_query(FASTEST_DOWNLOAD).unwrap();
    let mut config = hstream_core::operator::OperatorConfig::from_spec(&spec);
    config.start = Some(Timestamp(ORIGIN));
    config.until = Some(Timestamp(ORIGIN + 20 * 60_000));
    let broker = Broker::new(e._dir.path().join("direct"));
    let input = broker.declare_queue(broker.queue_config("in", 1000)).unwrap();
    let sink = broker.declare_queue(broker.queue_config("out", 1000)).unwrap();
    for t in &log {
        input.publish(t.clone()).unwrap();
    }
    input.close();
    run_operator(
        &config,
        OperatorContext {
            name: "op0".into(),
            input: input.subscribe().unwrap(),
            historic: None,
            sink: sink.clone(),
            clock: Arc::new(VirtualClock::new(Timestamp(ORIGIN))),
            stats: Arc::new(OperatorStats::default()),
        },
    )
    .unwrap();
    let sub = sink.subscribe().unwrap();
    let mut direct = String::new();
    while let Ok(Some(t)) = sub.try_recv() {
        direct.push_str(&SinkRecord::from_tuple(&t).unwrap().to_ndjson());
        direct.push('\n');
    }
    assert_eq!(planned.lines().count(), 10);
    assert_eq!(planned, direct);
}

#[test]
fn relaunch_reuses_id_and_is_deterministic() {
    let e = env();
    let log = log_20_minutes();
    let first = run_planned(&e, FASTEST_DOWNLOAD, &log);
    e.broker.delete_queue("neubotspeed").unwrap();
    e.broker.declare_queue(e.broker.queue_config("neubotspeed", 1000)).unwrap();
    let second = run_planned(&e, FASTEST_DOWNLOAD, &log);
    assert_eq!(first, second);
}

#[test]
fn fan_out_merges_in_trigger_order() {
    let e = env();
    let texts = ["min", "mean", "max"].map(|f| {
        format!("every 3 seconds compute the {f} value of download_speed of the last 3 seconds from streaming rabbitmq queue neubotspeed")
    });
    let specs: Vec<_> = texts.iter().map(|t| parse_query(t).unwrap()).collect();
    let p = plan_fanout(&specs, &catalog(&e), &PlanOptions::default()).unwrap();
    let names: Vec<&str> = p.stages.iter().map(|s| s.name()).collect();
    assert_eq!(names, vec!["fetch", "dup", "op0", "op1", "op2", "sink"]);
    assert_eq!(p.result_queues().len(), 3);

    let out = SharedBuf::default();
    let mut opts = RunOptions::new(Box::new(out.clone()));
    opts.start = Some(Timestamp(ORIGIN));
    opts.until = Some(Timestamp(ORIGIN + 30_000));
    let clock = VirtualClock::new(Timestamp(ORIGIN));
    let h = launch(&p, &runtime(&e, Arc::new(clock)), opts);
    let source = e.broker.queue("neubotspeed").unwrap();
    for i in 0..300u64 {
        source.publish(tuple(ORIGIN + i * 100, (i % 17) as f64)).unwrap();
    }
    source.close();
    assert_eq!(h.wait().state, PipelineState::Stopped);
    let lines: Vec<serde_json::Value> = out.text().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 30);
    for (k, chunk) in lines.chunks(3).enumerate() {
        for (i, l) in chunk.iter().enumerate() {
            assert_eq!(l["query"], i);
            assert_eq!(l["trigger_ts"], ORIGIN + (k as u64 + 1) * 3_000);
        }
        let (min, mean, max) = (chunk[0]["value"].as_f64(), chunk[1]["value"].as_f64(), chunk[2]["value"].as_f64());
        assert!(min <= mean && mean <= max);
    }

    // different streams cannot share a fetch
    let other = parse_query("every 3 seconds compute the min value of download_speed of the last 3 seconds from influxdb database neubot series speedtest").unwrap();
    assert!(matches!(
        plan_fanout(&[specs[0].clone(), other], &catalog(&e), &PlanOptions::default()),
        Err(PlanError::IncompatibleFanOut(_))
    ));
}

#[test]
fn history_only_query_runs_to_until() {
    let e = env();
    let spec = parse_query("every 1 minutes compute the mean value of download_speed of the last 1 days from influxdb database neubot series speedtest").unwrap();
    let p = plan(&spec, &catalog(&e), &PlanOptions::default()).unwrap();
    assert!(!p.stages.iter().any(|s| matches!(s, Stage::Fetch { .. })));
    let out = SharedBuf::default();
    let mut opts = RunOptions::new(Box::new(out.clone()));
    opts.start = Some(Timestamp(ORIGIN));
    opts.until = Some(Timestamp(ORIGIN + 3 * 60_000));
    let h = launch(&p, &runtime(&e, Arc::new(VirtualClock::new(Timestamp(ORIGIN)))), opts);
    assert_eq!(h.wait().state, PipelineState::Stopped);
    let text = out.text();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().all(|l| l.contains("\"hist_count\":1")));
}
