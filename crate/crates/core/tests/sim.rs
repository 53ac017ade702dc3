use std::io::Write;
use std::time::Instant;

use hstream_core::broker::Broker;
use hstream_core::clock::{Clock, VirtualClock};
use hstream_core::sim::{
    replay_log, run_farm, write_farm_log, ClockMode, FarmConfig, ReplayOptions, Speed, Topology,
};
use hstream_core::Timestamp;

fn broker() -> (tempfile::TempDir, Broker) {
    let dir = tempfile::tempdir().unwrap();
    let b = Broker::new(dir.path());
    (dir, b)
}

#[test]
fn three_things_shared_queue() {
    let (_d, b) = broker();
    let r = run_farm(&FarmConfig::new(3, 100, 10_000), &b).unwrap();
    assert!(r.complete);
    assert_eq!((r.published, r.delivered), (300, 300));
    assert_eq!(r.queues.len(), 1);
    assert!(r.latency_ms.is_none());
}

#[test]
fn queue_per_thing_counts() {
    let (_d, b) = broker();
    let mut c = FarmConfig::new(10, 100, 10_000);
    c.topology = Topology::QueuePerThing;
    let r = run_farm(&c, &b).unwrap();
    assert_eq!(r.queues.len(), 10);
    assert!(r.queues.iter().all(|q| q.stats.published == 100 && q.stats.delivered == 100));
    assert_eq!(r.delivered, 1_000);
}

#[test]
fn consumers_split_queues() {
    let (_d, b) = broker();
    let mut c = FarmConfig::new(10, 100, 10_000);
    c.topology = Topology::QueuePerThing;
    c.consumers = 3;
    c.clock = ClockMode::Real;
    c.duration_ms = 1_000;
    let r = run_farm(&c, &b).unwrap();
    assert_eq!(r.consumers, 3);
    assert_eq!((r.published, r.delivered), (100, 100));

    // a shared queue has a single consumer however many are asked for
    let (_d, b) = broker();
    let mut c = FarmConfig::new(3, 100, 1_000);
    c.consumers = 4;
    let r = run_farm(&c, &b).unwrap();
    assert_eq!((r.consumers, r.delivered), (1, 30));

    c.consumers = 0;
    assert!(run_farm(&c, &b).is_err());
}

#[test]
fn rate_accounting_with_uneven_duration() {
    let (_d, b) = broker();
    let c = FarmConfig::new(7, 30, 1_000);
    let r = run_farm(&c, &b).unwrap();
    assert_eq!(r.published, 7 * (1_000 / 30));
    assert_eq!(r.delivered, r.published);
}

#[test]
fn real_clock_one_khz_for_five_seconds() {
    let (_d, b) = broker();
    let mut c = FarmConfig::new(1, 1, 5_000);
    c.clock = ClockMode::Real;
    let started = Instant::now();
    let r = run_farm(&c, &b).unwrap();
    assert!(started.elapsed().as_secs_f64() >= 4.9);
    assert!(r.complete, "{:?}", r.error);
    assert_eq!((r.published, r.delivered), (5_000, 5_000));
    let lat = r.latency_ms.unwrap();
    assert!(lat.p50 <= lat.p95 && lat.p95 <= lat.p99 && lat.p99 <= lat.max);
    assert!(r.jitter_ms.is_some());
    assert!(r.to_csv_row().starts_with("1,shared,1,1,5000,real,5000,5000,"));
}

#[test]
fn broker_rejection_marks_report_incomplete() {
    let (_d, b) = broker();
    let c = FarmConfig::new(2, 10, 100);
    let q = b.declare_queue(b.queue_config("farm", 5)).unwrap();
    let _held = q.subscribe().unwrap();
    let r = run_farm(&c, &b).unwrap();
    assert!(!r.complete);
    assert!(r.error.is_some());
}

fn write_log(lines: &[String]) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    for l in lines {
        writeln!(f, "{l}").unwrap();
    }
    f
}

#[test]
fn replay_unbounded_and_malformed() {
    let (_d, b) = broker();
    let mut cfg = FarmConfig::new(1, 10, 1_000);
    cfg.start_ms = 1_000_000;
    let mut buf = Vec::new();
    write_farm_log(&cfg, &mut buf).unwrap();
    let mut lines: Vec<String> = String::from_utf8(buf).unwrap().lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 100);
    let f = write_log(&lines);
    let q = b.declare_queue(b.queue_config("replay", 1_000)).unwrap();
    let r = replay_log(f.path(), &q, &ReplayOptions::default()).unwrap();
    assert_eq!((r.published, r.malformed), (100, 0));
    assert_eq!(q.stats().published, 100);

    lines.insert(10, "{not json".into());
    lines.insert(20, "{\"ts\":5}".into());
    let f = write_log(&lines);
    let q = b.declare_queue(b.queue_config("replay2", 1_000)).unwrap();
    let clock = VirtualClock::new(Timestamp(0));
    let opts = ReplayOptions {
        clock: Some(clock.clone()),
        rebase: Some(Timestamp(5_000_000)),
        close_when_done: true,
        ..Default::default()
    };
    let r = replay_log(f.path(), &q, &opts).unwrap();
    assert_eq!((r.published, r.malformed), (100, 2));
    assert_eq!(r.first_ts, Some(Timestamp(5_000_000)));
    assert_eq!(clock.now(), Timestamp(5_000_000 + 990));
    assert!(q.is_closed());
}

#[test]
fn replay_at_double_speed() {
    let (_d, b) = broker();
    // ten seconds of log, one tuple every 250 ms
    let mut cfg = FarmConfig::new(1, 250, 10_250);
    cfg.start_ms = 1_600_000_000_000;
    let mut buf = Vec::new();
    write_farm_log(&cfg, &mut buf).unwrap();
    let f = write_log(&String::from_utf8(buf).unwrap().lines().map(str::to_string).collect::<Vec<_>>());
    let q = b.declare_queue(b.queue_config("paced", 1_000)).unwrap();
    let started = Instant::now();
    let opts = ReplayOptions {
        speed: Speed::Factor(2.0),
        ..Default::default()
    };
    let r = replay_log(f.path(), &q, &opts).unwrap();
    let secs = started.elapsed().as_secs_f64();
    assert_eq!(r.published, 41);
    assert!((4.5..=5.5).contains(&secs), "replay took {secs}s");
}

#[test]
fn speed_parsing() {
    assert_eq!("inf".parse::<Speed>().unwrap(), Speed::Unbounded);
    assert_eq!("2".parse::<Speed>().unwrap(), Speed::Factor(2.0));
    assert!("0".parse::<Speed>().is_err());
    assert!("-1".parse::<Speed>().is_err());
}
