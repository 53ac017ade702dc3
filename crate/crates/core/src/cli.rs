//! The `hstream` command line: ingest histories, run queries over replayed
//! logs or simulated farms, benchmark the broker and inspect plans.
//!
//! Exit codes: 0 on success, 1 for usage and query errors, 2 for runtime
//! failures.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::broker::{Broker, DEFAULT_MEMORY_CAPACITY, SPILL_ENV};
use crate::clock::{Clock, SystemClock, VirtualClock};
use crate::model::{Timestamp, Tuple};
use crate::planner::{launch, plan_fanout, PipelineState, PlanOptions, RunOptions, Runtime, SplitPolicy};
use crate::query::{parse_queries, Catalog, QuerySpec};
use crate::sim::{
    replay_log, run_farm, write_farm_log, ClockMode, FarmConfig, FarmStream, ReplayOptions, RunReport, Speed,
    Topology, REPORT_CSV_HEADER,
};
use crate::store::{input, HistoricStore, SeriesRef, STORE_ENV};

const DEFAULT_STORE: &str = "hstream-store";

#[derive(Debug, Parser)]
#[command(name = "hstream", version, about = "Hybrid stream/history query engine")]
pub struct Cli {
    /// Historic store root.
    #[arg(long, global = true, env = STORE_ENV, default_value = DEFAULT_STORE)]
    store: PathBuf,
    /// Broker spill root. Defaults to a per-process temporary directory.
    #[arg(long, global = true, env = SPILL_ENV)]
    spill: Option<PathBuf>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Store an NDJSON or CSV tuple file in a historic series.
    Ingest(IngestArgs),
    /// Run queries over a replayed log, a simulated farm or history alone.
    Query(QueryArgs),
    /// Print the pipeline plan of queries as JSON.
    Explain(ExplainArgs),
    /// Run simulated farms through the broker and report throughput.
    Bench(BenchArgs),
    /// Replay a tuple log through a broker queue and report the counts.
    Replay(ReplayArgs),
    /// Write a synthetic tuple log produced by a virtual-clock farm.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    provider: String,
    #[arg(long = "db")]
    database: String,
    #[arg(long)]
    series: String,
    /// Malformed lines tolerated before the ingest is refused.
    #[arg(long, default_value_t = 0)]
    max_malformed: usize,
    /// NDJSON file, or CSV when the extension is `.csv`.
    file: PathBuf,
}

#[derive(Debug, Args)]
struct QuerySource {
    /// Query text; `-` reads standard input.
    query: Option<String>,
    /// File of queries separated by blank lines.
    #[arg(long, short = 'f', conflicts_with = "query")]
    file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    /// Grace period after each trigger for late tuples, e.g. `2s`.
    #[arg(long, value_parser = parse_millis, default_value = "0s")]
    lateness: u64,
    /// History/live boundary.
    #[arg(long, value_enum, default_value = "start")]
    split: SplitArg,
    /// In-memory capacity of each pipeline queue.
    #[arg(long, default_value_t = DEFAULT_MEMORY_CAPACITY)]
    queue_capacity: usize,
    /// How far back the live stream reaches, e.g. `10m`. Unbounded by default.
    #[arg(long, value_parser = parse_millis)]
    live_retention: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Start,
    HistoryEnd,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[command(flatten)]
    source: QuerySource,
    #[command(flatten)]
    plan: PlanArgs,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").multiple(false))]
struct QueryArgs {
    #[command(flatten)]
    source: QuerySource,
    #[command(flatten)]
    plan: PlanArgs,
    /// NDJSON tuple log replayed into the query's stream queue.
    #[arg(long, group = "input")]
    log: Option<PathBuf>,
    /// Farm configuration (TOML) publishing into the query's stream queue.
    #[arg(long, group = "input")]
    farm: Option<PathBuf>,
    #[arg(long, value_parser = parse_clock, default_value = "virtual")]
    clock: ClockMode,
    /// Replay pace on the real clock: a factor or `inf`.
    #[arg(long, default_value = "1")]
    speed: Speed,
    /// Execution start (ms since the epoch). Virtual runs default to the
    /// first log timestamp or the farm start.
    #[arg(long)]
    start: Option<u64>,
    /// Run length, e.g. `20m`; the last trigger fires at start + duration.
    #[arg(long, value_parser = parse_millis)]
    duration: Option<u64>,
    /// NDJSON results file. Defaults to standard output.
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
    /// Also write `(trigger_ts, value)` rows to this CSV file.
    #[arg(long)]
    plot_csv: Option<PathBuf>,
    /// Print the plan JSON instead of running.
    #[arg(long)]
    explain: bool,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Farm configuration (TOML); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    things: Option<usize>,
    #[arg(long, value_parser = parse_millis)]
    period: Option<u64>,
    #[arg(long, value_parser = parse_millis)]
    duration: Option<u64>,
    #[arg(long, value_parser = parse_topology)]
    topology: Option<Topology>,
    #[arg(long, value_parser = parse_clock)]
    clock: Option<ClockMode>,
    /// Consumer threads, at most one per queue.
    #[arg(long)]
    consumers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Axes to sweep, e.g. `--matrix things=3,800 topology=shared,per-thing`.
    /// Keys: things, period, duration, topology, consumers, clock.
    #[arg(long, num_args = 1..)]
    matrix: Vec<String>,
    /// Write the reports as a JSON array here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write CSV rows here instead of standard output.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    log: PathBuf,
    #[arg(long, default_value = "replay")]
    queue: String,
    /// A factor or `inf`.
    #[arg(long, default_value = "inf")]
    speed: Speed,
    /// Shift timestamps so the first tuple lands at this instant.
    #[arg(long)]
    rebase: Option<u64>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Farm configuration (TOML); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    things: Option<usize>,
    #[arg(long, value_parser = parse_millis)]
    period: Option<u64>,
    #[arg(long, value_parser = parse_millis)]
    duration: Option<u64>,
    /// First timestamp (ms since the epoch).
    #[arg(long)]
    start: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
}

fn parse_millis(s: &str) -> Result<u64, String> {
    humantime::parse_duration(s)
        .map(|d| d.as_millis() as u64)
        .map_err(|e| format!("invalid duration `{s}`: {e}"))
}

fn parse_clock(s: &str) -> Result<ClockMode, String> {
    s.parse()
}

fn parse_topology(s: &str) -> Result<Topology, String> {
    s.parse()
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Entry point of the `hstream` binary.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = match &e {
                CliError::Usage(m) | CliError::Runtime(m) => m,
            };
            eprintln!("error: {msg}");
            ExitCode::from(e.code())
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let broker = || {
        Arc::new(match &cli.spill {
            Some(root) => Broker::new(root),
            None => Broker::new(std::env::temp_dir().join(format!("hstream-spill-{}", std::process::id()))),
        })
    };
    match &cli.command {
        Command::Ingest(args) => cmd_ingest(&cli.store, args),
        Command::Query(args) => {
            let broker = broker();
            let result = cmd_query(&cli.store, &broker, args);
            cleanup(&cli, &broker);
            result
        }
        Command::Explain(args) => {
            let specs = read_queries(&args.source)?;
            let plan = explain_plan(&cli.store, &specs, &args.plan)?;
            println!("{}", plan.to_json());
            Ok(())
        }
        Command::Bench(args) => cmd_bench(&cli, args),
        Command::Replay(args) => {
            let broker = broker();
            let result = cmd_replay(&broker, args);
            cleanup(&cli, &broker);
            result
        }
        Command::Generate(args) => cmd_generate(args),
    }
}

/// Removes the per-process spill directory; user-supplied roots are kept.
fn cleanup(cli: &Cli, broker: &Broker) {
    if cli.spill.is_none() {
        let _ = std::fs::remove_dir_all(broker.spill_root());
    }
}

fn cmd_ingest(store_root: &Path, args: &IngestArgs) -> Result<(), CliError> {
    let name = SeriesRef::new(&args.provider, &args.database, &args.series).map_err(usage)?;
    let parsed = input::read_path(&args.file).map_err(runtime)?;
    if parsed.malformed.len() > args.max_malformed {
        let first = &parsed.malformed[0];
        return Err(runtime(format!(
            "{} malformed lines in {} (limit {}); first at line {}: {}",
            parsed.malformed.len(),
            args.file.display(),
            args.max_malformed,
            first.line,
            first.reason
        )));
    }
    if !parsed.malformed.is_empty() {
        eprintln!("skipped {} malformed lines", parsed.malformed.len());
    }
    let store = HistoricStore::open(store_root).map_err(runtime)?;
    if !store.is_registered(&name) {
        store.register(&name).map_err(usage)?;
    }
    let added = store.ingest(&name, &parsed.tuples).map_err(runtime)?;
    let duplicates = parsed.tuples.len() - added;
    if duplicates > 0 {
        println!("ingested {added} ({duplicates} duplicates)");
    } else {
        println!("ingested {added}");
    }
    Ok(())
}

fn read_queries(source: &QuerySource) -> Result<Vec<QuerySpec>, CliError> {
    let text = match (&source.query, &source.file) {
        (Some(q), None) if q == "-" => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).map_err(runtime)?;
            s
        }
        (Some(q), None) => q.clone(),
        (None, Some(path)) => std::fs::read_to_string(path)
            .map_err(|e| runtime(format!("cannot read {}: {e}", path.display())))?,
        _ => return Err(usage("give a query, `-` for standard input, or --file")),
    };
    parse_queries(&text).map_err(usage)
}

fn plan_options(args: &PlanArgs) -> PlanOptions {
    PlanOptions {
        queue_capacity: args.queue_capacity,
        allowed_lateness_ms: args.lateness,
        split_policy: match args.split {
            SplitArg::Start => SplitPolicy::Start,
            SplitArg::HistoryEnd => SplitPolicy::HistoryEnd,
        },
        ..PlanOptions::default()
    }
}

fn catalog_for(store: Option<&HistoricStore>, specs: &[QuerySpec], args: &PlanArgs) -> Catalog {
    let mut catalog = store.map(HistoricStore::catalog).unwrap_or_default();
    catalog.queues.extend(specs.iter().filter_map(|s| s.sources.stream.clone()));
    catalog.live_retention_ms = args.live_retention;
    catalog
}

fn open_store_if_present(root: &Path) -> Result<Option<Arc<HistoricStore>>, CliError> {
    if root.exists() {
        HistoricStore::open(root).map(Arc::new).map(Some).map_err(runtime)
    } else {
        Ok(None)
    }
}

fn explain_plan(
    store_root: &Path,
    specs: &[QuerySpec],
    args: &PlanArgs,
) -> Result<crate::planner::PipelinePlan, CliError> {
    let store = open_store_if_present(store_root)?;
    let catalog = catalog_for(store.as_deref(), specs, args);
    plan_fanout(specs, &catalog, &plan_options(args)).map_err(usage)
}

fn create(path: &Path) -> Result<Box<dyn Write + Send>, CliError> {
    let f = File::create(path).map_err(|e| runtime(format!("cannot create {}: {e}", path.display())))?;
    Ok(Box::new(BufWriter::new(f)))
}

/// First timestamp in an NDJSON log.
fn first_timestamp(path: &Path) -> Result<Option<Timestamp>, CliError> {
    let f = File::open(path).map_err(|e| runtime(format!("cannot open {}: {e}", path.display())))?;
    for line in BufReader::new(f).lines() {
        let line = line.map_err(runtime)?;
        if let Ok(t) = Tuple::from_ndjson(&line) {
            return Ok(Some(t.timestamp()));
        }
    }
    Ok(None)
}

fn interrupt_flag() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let f = Arc::clone(&flag);
    // fails only if a handler is already installed, e.g. in tests
    let _ = ctrlc::set_handler(move || f.store(true, Ordering::SeqCst));
    flag
}

fn cmd_query(store_root: &Path, broker: &Arc<Broker>, args: &QueryArgs) -> Result<(), CliError> {
    let specs = read_queries(&args.source)?;
    let store = open_store_if_present(store_root)?;
    let catalog = catalog_for(store.as_deref(), &specs, &args.plan);
    let plan = plan_fanout(&specs, &catalog, &plan_options(&args.plan)).map_err(usage)?;
    if args.explain {
        println!("{}", plan.to_json());
        return Ok(());
    }
    let stream = specs[0].sources.stream.clone();
    if stream.is_none() && (args.log.is_some() || args.farm.is_some()) {
        return Err(usage("the query has no stream source to feed --log or --farm into"));
    }
    if stream.is_some() && args.log.is_none() && args.farm.is_none() {
        return Err(usage("the query reads a stream: give --log or --farm"));
    }
    let farm = match &args.farm {
        Some(path) => {
            let mut farm = FarmConfig::load(path).map_err(usage)?;
            if farm.topology != Topology::SharedQueue {
                return Err(usage("a farm feeding a query must use the shared_queue topology"));
            }
            farm.queue = stream.clone().expect("checked above");
            farm.clock = args.clock;
            Some(farm)
        }
        None => None,
    };

    let virtual_time = args.clock == ClockMode::Virtual;
    let start = match (args.start, virtual_time) {
        (Some(s), _) => Timestamp(s),
        (None, false) => SystemClock.now(),
        (None, true) => match (&args.log, &farm) {
            (Some(log), _) => first_timestamp(log)?.unwrap_or(Timestamp::ZERO),
            (None, Some(f)) => Timestamp(f.start_ms),
            (None, None) => return Err(usage("a history-only virtual run needs --start")),
        },
    };
    let duration = args.duration.or(farm.as_ref().map(|f| f.duration_ms));
    if stream.is_none() && duration.is_none() {
        return Err(usage("a history-only run needs --duration"));
    }
    let until = duration.map(|d| start.saturating_add(d));

    let vclock = VirtualClock::new(start);
    let clock: Arc<dyn Clock> = if virtual_time {
        Arc::new(vclock.clone())
    } else {
        Arc::new(SystemClock)
    };
    let source = match &stream {
        Some(name) => Some(
            broker
                .declare_queue(broker.queue_config(name, args.plan.queue_capacity))
                .map_err(runtime)?,
        ),
        None => None,
    };
    let output: Box<dyn Write + Send> = match &args.output {
        Some(p) => create(p)?,
        None => Box::new(io::stdout()),
    };
    let mut options = RunOptions::new(output);
    options.start = Some(start);
    options.until = until;
    options.plot_csv = args.plot_csv.as_deref().map(create).transpose()?;
    let rt = Runtime {
        broker: Arc::clone(broker),
        store,
        clock,
    };
    let handle = launch(&plan, &rt, options);
    if handle.status().state == PipelineState::Failed {
        return Err(runtime(handle.status().cause.unwrap_or_default()));
    }

    let cancel = interrupt_flag();
    if !virtual_time {
        if let Some(until) = until {
            let c = Arc::clone(&cancel);
            std::thread::spawn(move || {
                let wait = until.0.saturating_sub(SystemClock.now().0);
                std::thread::sleep(Duration::from_millis(wait));
                c.store(true, Ordering::SeqCst);
            });
        }
    }

    let fed = match (&source, &args.log, &farm) {
        (Some(q), Some(log), _) => {
            let opts = ReplayOptions {
                speed: if virtual_time { Speed::Unbounded } else { args.speed },
                clock: virtual_time.then(|| vclock.clone()),
                rebase: if virtual_time { args.start.map(Timestamp) } else { Some(start) },
                close_when_done: true,
                cancel: Some(Arc::clone(&cancel)),
            };
            replay_log(log, q, &opts).map(|r| {
                if r.malformed > 0 {
                    eprintln!("skipped {} malformed log lines", r.malformed);
                }
            })
        }
        (Some(q), None, Some(f)) => {
            let mut f = f.clone();
            f.start_ms = start.0;
            feed_farm(&f, q, virtual_time.then_some(&vclock), &cancel)
        }
        _ => {
            while !virtual_time && !cancel.load(Ordering::SeqCst) {
                std::thread::sleep(Duration::from_millis(20));
            }
            Ok(())
        }
    };
    if let Some(q) = &source {
        q.close();
    }
    let status = if stream.is_none() && !virtual_time {
        handle.stop()
    } else {
        handle.wait()
    };
    fed.map_err(runtime)?;
    match status.state {
        PipelineState::Failed => Err(runtime(status.cause.unwrap_or_else(|| "pipeline failed".into()))),
        _ => Ok(()),
    }
}

/// Publishes a farm's tuples into `queue`: instantly on a virtual clock,
/// paced on the wall clock otherwise.
fn feed_farm(
    config: &FarmConfig,
    queue: &crate::broker::QueueHandle,
    clock: Option<&VirtualClock>,
    cancel: &AtomicBool,
) -> Result<(), crate::error::SimError> {
    config.validate()?;
    let started = Instant::now();
    let origin = config.start_ms;
    for (_, t) in FarmStream::new(config) {
        if cancel.load(Ordering::Relaxed) {
            break;
        }
        let ts = t.timestamp();
        match clock {
            Some(c) => {
                queue.publish(t)?;
                c.advance_to(ts);
            }
            None => {
                let due = Duration::from_millis(ts.0 - origin);
                while due > started.elapsed() && !cancel.load(Ordering::Relaxed) {
                    std::thread::sleep((due - started.elapsed()).min(Duration::from_millis(50)));
                }
                queue.publish(t)?;
            }
        }
    }
    Ok(())
}

fn farm_from_flags(
    config: Option<&Path>,
    things: Option<usize>,
    period: Option<u64>,
    duration: Option<u64>,
    seed: Option<u64>,
) -> Result<FarmConfig, CliError> {
    let mut farm = match config {
        Some(p) => FarmConfig::load(p).map_err(usage)?,
        None => FarmConfig::new(1, 1_000, 60_000),
    };
    if let Some(n) = things {
        farm.things = n;
    }
    if let Some(p) = period {
        farm.period_ms = p;
    }
    if let Some(d) = duration {
        farm.duration_ms = d;
    }
    if let Some(s) = seed {
        farm.seed = s;
    }
    Ok(farm)
}

/// Expands `key=v1,v2` axes into one configuration per combination.
fn expand_matrix(base: &FarmConfig, axes: &[String]) -> Result<Vec<FarmConfig>, CliError> {
    let mut configs = vec![base.clone()];
    for axis in axes {
        let (key, values) = axis
            .split_once('=')
            .ok_or_else(|| usage(format!("matrix axis `{axis}` is not key=v1,v2")))?;
        let mut next = Vec::new();
        for c in &configs {
            for v in values.split(',').map(str::trim).filter(|v| !v.is_empty()) {
                let mut c = c.clone();
                match key {
                    "things" => c.things = v.parse().map_err(|_| usage(format!("bad things `{v}`")))?,
                    "period" => c.period_ms = parse_millis(v).map_err(usage)?,
                    "duration" => c.duration_ms = parse_millis(v).map_err(usage)?,
                    "topology" => c.topology = v.parse().map_err(usage)?,
                    "consumers" => c.consumers = v.parse().map_err(|_| usage(format!("bad consumers `{v}`")))?,
                    "clock" => c.clock = v.parse().map_err(usage)?,
                    other => return Err(usage(format!("unknown matrix axis `{other}`"))),
                }
                next.push(c);
            }
        }
        configs = next;
    }
    Ok(configs)
}

fn cmd_bench(cli: &Cli, args: &BenchArgs) -> Result<(), CliError> {
    let mut base = farm_from_flags(args.config.as_deref(), args.things, args.period, args.duration, args.seed)?;
    if let Some(t) = args.topology {
        base.topology = t;
    }
    if let Some(c) = args.clock {
        base.clock = c;
    }
    if let Some(n) = args.consumers {
        base.consumers = n;
    }
    let configs = expand_matrix(&base, &args.matrix)?;
    for c in &configs {
        c.validate().map_err(usage)?;
    }
    let mut csv: Box<dyn Write> = match &args.csv {
        Some(p) => create(p)?,
        None => Box::new(io::stdout()),
    };
    writeln!(csv, "{REPORT_CSV_HEADER}").map_err(runtime)?;
    let mut reports: Vec<RunReport> = Vec::new();
    for (i, config) in configs.iter().enumerate() {
        let root = match &cli.spill {
            Some(r) => r.join(format!("bench-{i}")),
            None => std::env::temp_dir().join(format!("hstream-bench-{}-{i}", std::process::id())),
        };
        let broker = Broker::new(&root);
        let report = run_farm(config, &broker).map_err(usage)?;
        let _ = std::fs::remove_dir_all(&root);
        writeln!(csv, "{}", report.to_csv_row()).map_err(runtime)?;
        csv.flush().map_err(runtime)?;
        reports.push(report);
    }
    if let Some(p) = &args.json {
        let mut out = create(p)?;
        let json = serde_json::to_string_pretty(&reports).map_err(runtime)?;
        writeln!(out, "{json}").map_err(runtime)?;
        out.flush().map_err(runtime)?;
    }
    match reports.iter().find(|r| !r.complete) {
        Some(r) => Err(runtime(format!(
            "run with {} things incomplete: {}",
            r.things,
            r.error.clone().unwrap_or_default()
        ))),
        None => Ok(()),
    }
}

fn cmd_replay(broker: &Broker, args: &ReplayArgs) -> Result<(), CliError> {
    let queue = broker
        .declare_queue(broker.queue_config(&args.queue, DEFAULT_MEMORY_CAPACITY))
        .map_err(usage)?;
    let sub = queue.subscribe().map_err(runtime)?;
    let consumer = std::thread::spawn(move || {
        let mut n = 0u64;
        while let Ok(batch) = sub.recv_batch(4096, Duration::from_millis(20)) {
            n += batch.len() as u64;
        }
        n
    });
    let started = Instant::now();
    let opts = ReplayOptions {
        speed: args.speed,
        rebase: args.rebase.map(Timestamp),
        close_when_done: true,
        cancel: Some(interrupt_flag()),
        ..Default::default()
    };
    let result = replay_log(&args.log, &queue, &opts);
    queue.close();
    let delivered = consumer.join().map_err(|_| runtime("consumer panicked"))?;
    let report = result.map_err(runtime)?;
    let summary = serde_json::json!({
        "published": report.published,
        "delivered": delivered,
        "malformed": report.malformed,
        "first_ts": report.first_ts,
        "last_ts": report.last_ts,
        "elapsed_ms": started.elapsed().as_millis() as u64,
    });
    println!("{summary}");
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let mut farm = farm_from_flags(args.config.as_deref(), args.things, args.period, args.duration, args.seed)?;
    if let Some(s) = args.start {
        farm.start_ms = s;
    }
    farm.validate().map_err(usage)?;
    let mut out: Box<dyn Write> = match &args.output {
        Some(p) => create(p)?,
        None => Box::new(BufWriter::new(io::stdout())),
    };
    let n = write_farm_log(&farm, &mut out).map_err(runtime)?;
    out.flush().map_err(runtime)?;
    log::info!("wrote {n} tuples");
    Ok(())
}
