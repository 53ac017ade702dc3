//! C ABI over `hstream-core`.
//!
//! Every function returns an [`HsStatus`]. On failure a message is kept
//! per thread and can be read with [`hs_last_error`]. Objects are opaque
//! handles released with their `_free` function; strings returned through
//! out-parameters are released with [`hs_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use hstream_core::broker::{Broker, DEFAULT_MEMORY_CAPACITY};
use hstream_core::clock::VirtualClock;
use hstream_core::planner::{launch, plan_fanout, PipelineState, PlanOptions, RunOptions, Runtime};
use hstream_core::query::{parse_query, render_query, AggregationFunction, Catalog, QuerySpec};
use hstream_core::sim::{replay_log, ReplayOptions};
use hstream_core::store::{input, HistoricQuery, HistoricStore, SeriesRef};
use hstream_core::{TimeUnit, Timestamp, Tuple};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    StoreError = 4,
    PlanError = 5,
    RuntimeError = 6,
    InvalidArgument = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsAggregation {
    Mean = 0,
    Min = 1,
    Max = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsTimeUnit {
    Seconds = 0,
    Minutes = 1,
    Hours = 2,
    Days = 3,
}

/// One bucket of a grouped historic query. `has_result` is 0 for an
/// empty bucket, in which case `result` is NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsAggregateRow {
    pub bucket_start_ms: u64,
    pub count: f64,
    pub result: f64,
    pub has_result: u8,
}

/// A parsed query.
pub struct HsQuery {
    spec: QuerySpec,
}

/// An open historic store.
pub struct HsStore {
    store: Arc<HistoricStore>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(HsStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn fail(status: HsStatus, e: impl ToString) -> Failure {
    Failure(status, e.to_string())
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> HsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {msg}"));
            HsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(fail(HsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(HsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut()
        .ok_or_else(|| fail(HsStatus::NullPointer, format!("{what} is null")))
}

fn c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| fail(HsStatus::RuntimeError, "output contains a NUL byte"))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn hs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn hs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses one query.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hs_query_parse(text: *const c_char, out: *mut *mut HsQuery) -> HsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let spec = parse_query(str_arg(text, "text")?).map_err(|e| fail(HsStatus::ParseError, e))?;
        *out = Box::into_raw(Box::new(HsQuery { spec }));
        Ok(())
    })
}

/// Canonical single-line rendering of a parsed query.
///
/// # Safety
/// `query` must come from [`hs_query_parse`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_query_render(query: *const HsQuery, out: *mut *mut c_char) -> HsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let q = query.as_ref().ok_or_else(|| fail(HsStatus::NullPointer, "query is null"))?;
        *out = c_string(render_query(&q.spec))?;
        Ok(())
    })
}

/// The parsed query as JSON.
///
/// # Safety
/// `query` must come from [`hs_query_parse`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_query_to_json(query: *const HsQuery, out: *mut *mut c_char) -> HsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let q = query.as_ref().ok_or_else(|| fail(HsStatus::NullPointer, "query is null"))?;
        let json = serde_json::to_string(&q.spec).map_err(|e| fail(HsStatus::RuntimeError, e))?;
        *out = c_string(json)?;
        Ok(())
    })
}

/// # Safety
/// `query` must come from [`hs_query_parse`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn hs_query_free(query: *mut HsQuery) {
    if !query.is_null() {
        drop(Box::from_raw(query));
    }
}

/// Opens (creating if needed) a historic store rooted at `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hs_store_open(path: *const c_char, out: *mut *mut HsStore) -> HsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let store = HistoricStore::open(str_arg(path, "path")?).map_err(|e| fail(HsStatus::StoreError, e))?;
        *out = Box::into_raw(Box::new(HsStore { store: Arc::new(store) }));
        Ok(())
    })
}

/// # Safety
/// `store` must come from [`hs_store_open`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn hs_store_free(store: *mut HsStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

unsafe fn series_arg(provider: *const c_char, database: *const c_char, series: *const c_char) -> FfiResult<SeriesRef> {
    SeriesRef::new(
        str_arg(provider, "provider")?,
        str_arg(database, "database")?,
        str_arg(series, "series")?,
    )
    .map_err(|e| fail(HsStatus::InvalidArgument, e))
}

/// Ingests NDJSON tuples into a series, registering it when new. Any
/// malformed line rejects the whole batch. `added` receives the number of
/// tuples stored after de-duplication.
///
/// # Safety
/// String arguments must be NUL-terminated; `store` and `added` valid.
#[no_mangle]
pub unsafe extern "C" fn hs_store_ingest_ndjson(
    store: *const HsStore,
    provider: *const c_char,
    database: *const c_char,
    series: *const c_char,
    ndjson: *const c_char,
    added: *mut usize,
) -> HsStatus {
    guard(|| {
        let added = out_arg(added, "added")?;
        let store = &store.as_ref().ok_or_else(|| fail(HsStatus::NullPointer, "store is null"))?.store;
        let name = series_arg(provider, database, series)?;
        let parsed = input::read_ndjson(str_arg(ndjson, "ndjson")?.as_bytes())
            .map_err(|e| fail(HsStatus::InvalidArgument, e))?;
        if let Some(m) = parsed.malformed.first() {
            return Err(fail(HsStatus::InvalidArgument, format!("line {}: {}", m.line, m.reason)));
        }
        if !store.is_registered(&name) {
            store.register(&name).map_err(|e| fail(HsStatus::StoreError, e))?;
        }
        *added = store.ingest(&name, &parsed.tuples).map_err(|e| fail(HsStatus::StoreError, e))?;
        Ok(())
    })
}

/// Grouped aggregation over `[start_ms, end_ms)`. Rows are written to
/// `rows` (capacity `cap`); `len` always receives the total row count, and
/// `HS_STATUS_BUFFER_TOO_SMALL` is returned when it exceeds `cap`. Pass
/// `cap = 0` to size the buffer first.
///
/// # Safety
/// String arguments must be NUL-terminated; `rows` must hold `cap` rows.
#[no_mangle]
pub unsafe extern "C" fn hs_store_query_to_historic(
    store: *const HsStore,
    provider: *const c_char,
    database: *const c_char,
    series: *const c_char,
    function: HsAggregation,
    attribute: *const c_char,
    start_ms: u64,
    end_ms: u64,
    group_by_number: u64,
    group_by_unit: HsTimeUnit,
    rows: *mut HsAggregateRow,
    cap: usize,
    len: *mut usize,
) -> HsStatus {
    guard(|| {
        let len = out_arg(len, "len")?;
        let store = &store.as_ref().ok_or_else(|| fail(HsStatus::NullPointer, "store is null"))?.store;
        let name = series_arg(provider, database, series)?;
        let q = HistoricQuery {
            function: match function {
                HsAggregation::Mean => AggregationFunction::Mean,
                HsAggregation::Min => AggregationFunction::Min,
                HsAggregation::Max => AggregationFunction::Max,
            },
            value: str_arg(attribute, "attribute")?.to_string(),
            start: Timestamp(start_ms),
            end: Timestamp(end_ms),
            group_by_number,
            group_by_unit: match group_by_unit {
                HsTimeUnit::Seconds => TimeUnit::Seconds,
                HsTimeUnit::Minutes => TimeUnit::Minutes,
                HsTimeUnit::Hours => TimeUnit::Hours,
                HsTimeUnit::Days => TimeUnit::Days,
            },
        };
        let result = store.query_to_historic(&name, &q).map_err(|e| fail(HsStatus::StoreError, e))?;
        *len = result.len();
        if result.len() > cap {
            return Err(fail(
                HsStatus::BufferTooSmall,
                format!("{} rows do not fit in {cap}", result.len()),
            ));
        }
        if rows.is_null() && !result.is_empty() {
            return Err(fail(HsStatus::NullPointer, "rows is null"));
        }
        for (i, r) in result.iter().enumerate() {
            rows.add(i).write(HsAggregateRow {
                bucket_start_ms: r.bucket_start.0,
                count: r.count,
                result: r.result.unwrap_or(f64::NAN),
                has_result: r.result.is_some() as u8,
            });
        }
        Ok(())
    })
}

fn catalog(store: Option<&HistoricStore>, specs: &[QuerySpec]) -> Catalog {
    let mut catalog = store.map(HistoricStore::catalog).unwrap_or_default();
    catalog
        .queues
        .extend(specs.iter().filter_map(|s| s.sources.stream.clone()));
    catalog
}

fn parse_all(text: &str) -> FfiResult<Vec<QuerySpec>> {
    hstream_core::query::parse_queries(text).map_err(|e| fail(HsStatus::ParseError, e))
}

/// Plans queries (blank-line separated) and returns the plan as JSON.
/// `store` may be NULL for stream-only queries.
///
/// # Safety
/// `queries` must be NUL-terminated; `store` valid or NULL; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn hs_plan_explain(
    store: *const HsStore,
    queries: *const c_char,
    out: *mut *mut c_char,
) -> HsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let specs = parse_all(str_arg(queries, "queries")?)?;
        let store = store.as_ref().map(|s| &*s.store);
        let plan = plan_fanout(&specs, &catalog(store, &specs), &PlanOptions::default())
            .map_err(|e| fail(HsStatus::PlanError, e))?;
        *out = c_string(plan.to_json())?;
        Ok(())
    })
}

#[derive(Clone, Default)]
struct Collected(Arc<Mutex<Vec<u8>>>);

impl Write for Collected {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

fn first_timestamp(path: &Path) -> FfiResult<Option<Timestamp>> {
    let f = std::fs::File::open(path).map_err(|e| fail(HsStatus::RuntimeError, format!("{}: {e}", path.display())))?;
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| fail(HsStatus::RuntimeError, e))?;
        if let Ok(t) = Tuple::from_ndjson(&line) {
            return Ok(Some(t.timestamp()));
        }
    }
    Ok(None)
}

static RUN_SEQ: AtomicU64 = AtomicU64::new(0);

/// Runs queries over an NDJSON log on a virtual clock starting at the
/// log's first timestamp and returns the result lines as one NDJSON
/// string. `duration_ms = 0` runs until the last logged timestamp.
///
/// # Safety
/// String arguments must be NUL-terminated; `store` valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn hs_run_query_log(
    store: *const HsStore,
    queries: *const c_char,
    log_path: *const c_char,
    duration_ms: u64,
    out: *mut *mut c_char,
) -> HsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let specs = parse_all(str_arg(queries, "queries")?)?;
        let log = Path::new(str_arg(log_path, "log_path")?);
        let store = store.as_ref().map(|s| Arc::clone(&s.store));
        let plan = plan_fanout(&specs, &catalog(store.as_deref(), &specs), &PlanOptions::default())
            .map_err(|e| fail(HsStatus::PlanError, e))?;
        let stream = specs[0]
            .sources
            .stream
            .clone()
            .ok_or_else(|| fail(HsStatus::InvalidArgument, "the queries read no stream"))?;

        let start = first_timestamp(log)?.unwrap_or(Timestamp::ZERO);
        let clock = VirtualClock::new(start);
        let spill = std::env::temp_dir().join(format!(
            "hstream-ffi-{}-{}",
            std::process::id(),
            RUN_SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        let broker = Arc::new(Broker::new(&spill));
        let source = broker
            .declare_queue(broker.queue_config(&stream, DEFAULT_MEMORY_CAPACITY))
            .map_err(|e| fail(HsStatus::RuntimeError, e))?;
        let buf = Collected::default();
        let mut options = RunOptions::new(Box::new(buf.clone()));
        options.start = Some(start);
        options.until = (duration_ms > 0).then(|| start.saturating_add(duration_ms));
        let runtime = Runtime {
            broker: Arc::clone(&broker),
            store,
            clock: Arc::new(clock.clone()),
        };
        let handle = launch(&plan, &runtime, options);
        let replay = ReplayOptions {
            clock: Some(clock),
            close_when_done: true,
            ..Default::default()
        };
        let fed = replay_log(log, &source, &replay);
        source.close();
        let status = handle.wait();
        let _ = std::fs::remove_dir_all(&spill);
        fed.map_err(|e| fail(HsStatus::RuntimeError, e))?;
        if status.state == PipelineState::Failed {
            return Err(fail(
                HsStatus::RuntimeError,
                status.cause.unwrap_or_else(|| "pipeline failed".into()),
            ));
        }
        let text = String::from_utf8(buf.0.lock().unwrap().clone()).map_err(|e| fail(HsStatus::RuntimeError, e))?;
        *out = c_string(text)?;
        Ok(())
    })
}
