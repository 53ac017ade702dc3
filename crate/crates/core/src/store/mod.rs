//! Embedded time-series store answering grouped aggregation queries over
//! ingested tuple histories.
//!
//! Layout: `<root>/<provider>/<database>/<series>/<segment>.ndjson`, each
//! segment an append-only NDJSON log in ingest order. The time index is
//! rebuilt in memory when the store is opened.
//!
//! Access mirrors a provider/connection protocol: a [`HistoricProvider`]
//! hands out [`Connection`]s that stay open across many
//! [`Connection::query_to_historic`] calls until closed. Both registered
//! provider names (`influxdb`, `cassandra`) are served by the embedded
//! engine; remote back ends plug in by implementing the two traits.

pub mod input;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::StoreError;
use crate::model::{to_millis, AggregateRow, TimeUnit, Timestamp, Tuple, Value};
use crate::operator::PartialAggregate;
use crate::query::{AggregationFunction, AttributeKind, Catalog, HistoricSource, SeriesInfo};

/// Environment variable naming the default store root.
pub const STORE_ENV: &str = "HSTREAM_STORE";

pub const DEFAULT_PROVIDERS: [&str; 2] = ["influxdb", "cassandra"];

/// Lines per segment file before a new one is started.
const SEGMENT_LINES: u64 = 1_000_000;

/// Upper bound on buckets per query.
pub const MAX_BUCKETS: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeriesRef {
    pub provider: String,
    pub database: String,
    pub series: String,
}

fn valid_component(s: &str) -> bool {
    !s.is_empty() && s != "." && s != ".." && !s.contains(['/', '\\'])
}

impl SeriesRef {
    pub fn new(
        provider: impl Into<String>,
        database: impl Into<String>,
        series: impl Into<String>,
    ) -> Result<Self, StoreError> {
        let r = SeriesRef {
            provider: provider.into(),
            database: database.into(),
            series: series.into(),
        };
        for part in [&r.provider, &r.database, &r.series] {
            if !valid_component(part) {
                return Err(StoreError::InvalidRef(format!(
                    "`{part}` is not a valid provider, database or series name"
                )));
            }
        }
        Ok(r)
    }

    fn dir(&self, root: &Path) -> PathBuf {
        root.join(&self.provider)
            .join(&self.database)
            .join(&self.series)
    }
}

impl fmt::Display for SeriesRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.provider, self.database, self.series)
    }
}

impl From<&HistoricSource> for SeriesRef {
    fn from(h: &HistoricSource) -> Self {
        SeriesRef {
            provider: h.provider.clone(),
            database: h.database.clone(),
            series: h.series.clone(),
        }
    }
}

impl From<&SeriesRef> for HistoricSource {
    fn from(r: &SeriesRef) -> Self {
        HistoricSource {
            provider: r.provider.clone(),
            database: r.database.clone(),
            series: r.series.clone(),
        }
    }
}

/// A grouped aggregation over `[start, end)`, bucketed from `start` in
/// steps of `group_by_number` × `group_by_unit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoricQuery {
    pub function: AggregationFunction,
    pub value: String,
    pub start: Timestamp,
    pub end: Timestamp,
    pub group_by_number: u64,
    pub group_by_unit: TimeUnit,
}

impl HistoricQuery {
    fn bucket_width(&self) -> Result<u64, StoreError> {
        if self.start > self.end {
            return Err(StoreError::InvalidQuery(format!(
                "start {} is after end {}",
                self.start, self.end
            )));
        }
        if self.group_by_number == 0 {
            return Err(StoreError::InvalidQuery("group_by_number must be at least 1".into()));
        }
        let width = to_millis(self.group_by_number, self.group_by_unit)?;
        let buckets = (self.end.0 - self.start.0).div_ceil(width);
        if buckets > MAX_BUCKETS {
            return Err(StoreError::InvalidQuery(format!(
                "{buckets} buckets exceed the limit of {MAX_BUCKETS}"
            )));
        }
        Ok(width)
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct AttributeStats {
    numeric: u64,
    non_numeric: u64,
}

#[derive(Default)]
struct SeriesData {
    /// Sorted by timestamp; equal timestamps keep ingest order.
    rows: Vec<Tuple>,
    attributes: BTreeMap<String, AttributeStats>,
    segment_index: u64,
    segment_lines: u64,
}

impl SeriesData {
    fn contains(&self, t: &Tuple) -> bool {
        let ts = t.timestamp();
        let lo = self.rows.partition_point(|r| r.timestamp() < ts);
        self.rows[lo..]
            .iter()
            .take_while(|r| r.timestamp() == ts)
            .any(|r| r == t)
    }

    fn note_attributes(&mut self, t: &Tuple) {
        for (k, v) in t.attributes() {
            let s = self.attributes.entry(k.clone()).or_default();
            if v.is_numeric() {
                s.numeric += 1;
            } else {
                s.non_numeric += 1;
            }
        }
    }

    fn range(&self, start: Timestamp, end: Timestamp) -> &[Tuple] {
        let lo = self.rows.partition_point(|r| r.timestamp() < start);
        let hi = self.rows.partition_point(|r| r.timestamp() < end);
        &self.rows[lo..hi.max(lo)]
    }
}

struct Series {
    name: SeriesRef,
    dir: PathBuf,
    data: RwLock<SeriesData>,
    skipped_non_numeric: AtomicU64,
}

impl Series {
    fn read(&self) -> std::sync::RwLockReadGuard<'_, SeriesData> {
        self.data.read().unwrap_or_else(|p| p.into_inner())
    }

    fn load(name: SeriesRef, dir: PathBuf) -> Result<Series, StoreError> {
        let mut segments: Vec<(u64, PathBuf)> = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io(&dir))? {
            let path = entry.map_err(io(&dir))?.path();
            let index = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_suffix(".ndjson"))
                .and_then(|n| n.parse::<u64>().ok());
            if let Some(i) = index {
                segments.push((i, path));
            }
        }
        segments.sort();

        let mut data = SeriesData::default();
        for (index, path) in &segments {
            let file = File::open(path).map_err(io(path))?;
            let mut lines = 0;
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io(path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let t = Tuple::from_ndjson(&line).map_err(|source| StoreError::Corrupt {
                    path: path.clone(),
                    line: n + 1,
                    source,
                })?;
                data.note_attributes(&t);
                data.rows.push(t);
                lines += 1;
            }
            data.segment_index = *index;
            data.segment_lines = lines;
        }
        data.rows.sort_by_key(Tuple::timestamp);
        Ok(Series {
            name,
            dir,
            data: RwLock::new(data),
            skipped_non_numeric: AtomicU64::new(0),
        })
    }

    fn ingest(&self, tuples: &[Tuple]) -> Result<usize, StoreError> {
        let mut data = self.data.write().unwrap_or_else(|p| p.into_inner());
        let mut fresh: Vec<Tuple> = Vec::new();
        let mut seen_in_batch: HashSet<String> = HashSet::new();
        for t in tuples {
            if data.contains(t) {
                continue;
            }
            if seen_in_batch.insert(t.to_ndjson()) {
                fresh.push(t.clone());
            }
        }
        if fresh.is_empty() {
            return Ok(0);
        }

        // Persist before publishing to the in-memory index.
        let mut remaining = fresh.as_slice();
        while !remaining.is_empty() {
            if data.segment_lines >= SEGMENT_LINES {
                data.segment_index += 1;
                data.segment_lines = 0;
            }
            let room = (SEGMENT_LINES - data.segment_lines) as usize;
            let (chunk, rest) = remaining.split_at(room.min(remaining.len()));
            let path = self.dir.join(format!("{:06}.ndjson", data.segment_index));
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(io(&path))?;
            let mut w = BufWriter::new(file);
            for t in chunk {
                w.write_all(t.to_ndjson().as_bytes()).map_err(io(&path))?;
                w.write_all(b"\n").map_err(io(&path))?;
            }
            let file = w.into_inner().map_err(|e| io(&path)(e.into_error()))?;
            file.sync_data().map_err(io(&path))?;
            data.segment_lines += chunk.len() as u64;
            remaining = rest;
        }

        let n = fresh.len();
        let needs_sort = match (data.rows.last(), fresh.first()) {
            (Some(l), Some(f)) => l.timestamp() > f.timestamp(),
            _ => false,
        } || fresh.windows(2).any(|w| w[0].timestamp() > w[1].timestamp());
        for t in &fresh {
            data.note_attributes(t);
        }
        data.rows.extend(fresh);
        if needs_sort {
            data.rows.sort_by_key(Tuple::timestamp);
        }
        Ok(n)
    }

    fn query(&self, q: &HistoricQuery) -> Result<Vec<AggregateRow>, StoreError> {
        let width = q.bucket_width()?;
        let data = self.read();
        if let Some(stats) = data.attributes.get(&q.value) {
            if stats.numeric == 0 {
                return Err(StoreError::NotNumeric {
                    series: self.name.to_string(),
                    attribute: q.value.clone(),
                });
            }
        }
        let span = q.end.0 - q.start.0;
        let buckets = span.div_ceil(width) as usize;
        let mut acc = vec![PartialAggregate::empty(q.function); buckets];
        let mut skipped = 0u64;
        for t in data.range(q.start, q.end) {
            let Some(v) = t.get(&q.value) else {
                continue;
            };
            let k = ((t.timestamp().0 - q.start.0) / width) as usize;
            match v {
                Value::Int(_) | Value::Float(_) => {
                    let x = v.as_f64().expect("numeric");
                    if acc[k].update(x).is_err() {
                        skipped += 1;
                    }
                }
                Value::Str(_) | Value::Char(_) => skipped += 1,
            }
        }
        if skipped > 0 {
            self.skipped_non_numeric.fetch_add(skipped, Ordering::Relaxed);
        }
        Ok(acc
            .iter()
            .enumerate()
            .map(|(k, p)| p.to_aggregate_row(Timestamp(q.start.0 + k as u64 * width)))
            .collect())
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// The embedded store: a set of registered series under one root.
pub struct HistoricStore {
    root: PathBuf,
    providers: BTreeSet<String>,
    series: RwLock<BTreeMap<SeriesRef, Arc<Series>>>,
}

impl HistoricStore {
    /// Opens (or creates) a store, reloading every series found on disk
    /// under a known provider.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        Self::open_with_providers(root, DEFAULT_PROVIDERS)
    }

    pub fn open_with_providers<I, S>(root: impl Into<PathBuf>, providers: I) -> Result<Self, StoreError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io(&root))?;
        let providers: BTreeSet<String> = providers.into_iter().map(Into::into).collect();
        let mut series = BTreeMap::new();
        for provider in &providers {
            let pdir = root.join(provider);
            if !pdir.is_dir() {
                continue;
            }
            for db in subdirs(&pdir)? {
                for s in subdirs(&pdir.join(&db))? {
                    let name = SeriesRef::new(provider.clone(), db.clone(), s)?;
                    let dir = name.dir(&root);
                    let loaded = Series::load(name.clone(), dir)?;
                    series.insert(name, Arc::new(loaded));
                }
            }
        }
        Ok(HistoricStore {
            root,
            providers,
            series: RwLock::new(series),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn providers(&self) -> impl Iterator<Item = &str> {
        self.providers.iter().map(String::as_str)
    }

    /// Registers a series, creating its directory. Idempotent.
    pub fn register(&self, name: &SeriesRef) -> Result<(), StoreError> {
        if !self.providers.contains(&name.provider) {
            return Err(StoreError::UnknownProvider(name.provider.clone()));
        }
        let mut map = self.series.write().unwrap_or_else(|p| p.into_inner());
        if map.contains_key(name) {
            return Ok(());
        }
        let dir = name.dir(&self.root);
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        map.insert(
            name.clone(),
            Arc::new(Series {
                name: name.clone(),
                dir,
                data: RwLock::new(SeriesData::default()),
                skipped_non_numeric: AtomicU64::new(0),
            }),
        );
        Ok(())
    }

    pub fn is_registered(&self, name: &SeriesRef) -> bool {
        self.series
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .contains_key(name)
    }

    pub fn series_refs(&self) -> Vec<SeriesRef> {
        self.series
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .keys()
            .cloned()
            .collect()
    }

    fn get(&self, name: &SeriesRef) -> Result<Arc<Series>, StoreError> {
        self.series
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(name)
            .cloned()
            .ok_or_else(|| StoreError::UnknownSeries(name.to_string()))
    }

    /// Appends tuples durably; tuples identical to stored ones (same
    /// timestamp, source and attributes) are skipped. Returns how many
    /// were new.
    pub fn ingest(&self, name: &SeriesRef, tuples: &[Tuple]) -> Result<usize, StoreError> {
        self.get(name)?.ingest(tuples)
    }

    pub fn query_to_historic(
        &self,
        name: &SeriesRef,
        q: &HistoricQuery,
    ) -> Result<Vec<AggregateRow>, StoreError> {
        self.get(name)?.query(q)
    }

    pub fn len(&self, name: &SeriesRef) -> Result<usize, StoreError> {
        Ok(self.get(name)?.read().rows.len())
    }

    /// Earliest and latest stored timestamps.
    pub fn time_range(&self, name: &SeriesRef) -> Result<Option<(Timestamp, Timestamp)>, StoreError> {
        let s = self.get(name)?;
        let data = s.read();
        Ok(data
            .rows
            .first()
            .zip(data.rows.last())
            .map(|(a, b)| (a.timestamp(), b.timestamp())))
    }

    /// Values of the target attribute skipped because they were not
    /// numeric (or not finite), summed over all queries so far.
    pub fn skipped_non_numeric(&self, name: &SeriesRef) -> Result<u64, StoreError> {
        Ok(self.get(name)?.skipped_non_numeric.load(Ordering::Relaxed))
    }

    pub fn open_connection(self: &Arc<Self>, name: &SeriesRef) -> Result<EmbeddedConnection, StoreError> {
        let series = self.get(name)?;
        Ok(EmbeddedConnection {
            series: Some(series),
            name: name.clone(),
        })
    }

    /// A provider proxy for one of the registered provider names.
    pub fn provider(self: &Arc<Self>, name: &str) -> Result<EmbeddedProvider, StoreError> {
        if !self.providers.contains(name) {
            return Err(StoreError::UnknownProvider(name.to_string()));
        }
        Ok(EmbeddedProvider {
            name: name.to_string(),
            store: Arc::clone(self),
        })
    }

    /// Providers, series and attribute kinds, for query validation.
    pub fn catalog(&self) -> Catalog {
        let mut catalog = Catalog {
            providers: self.providers.clone(),
            ..Catalog::default()
        };
        for (name, series) in self.series.read().unwrap_or_else(|p| p.into_inner()).iter() {
            let data = series.read();
            let attributes = data
                .attributes
                .iter()
                .map(|(k, s)| {
                    let kind = if s.numeric > 0 {
                        AttributeKind::Numeric
                    } else {
                        AttributeKind::NonNumeric
                    };
                    (k.clone(), kind)
                })
                .collect();
            catalog
                .series
                .insert(HistoricSource::from(name), SeriesInfo { attributes });
        }
        catalog
    }
}

fn subdirs(dir: &Path) -> Result<Vec<String>, StoreError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io(dir))? {
        let entry = entry.map_err(io(dir))?;
        if entry.file_type().map_err(io(dir))?.is_dir() {
            if let Some(name) = entry.file_name().to_str() {
                out.push(name.to_string());
            }
        }
    }
    out.sort();
    Ok(out)
}

/// An open session against one series.
pub trait Connection: Send {
    fn series(&self) -> &SeriesRef;
    fn query_to_historic(&mut self, q: &HistoricQuery) -> Result<Vec<AggregateRow>, StoreError>;
    fn close(&mut self);
    fn is_open(&self) -> bool;
}

/// Proxy for one store back end.
pub trait HistoricProvider: Send + Sync {
    fn name(&self) -> &str;
    fn connect(&self, series: &SeriesRef) -> Result<Box<dyn Connection>, StoreError>;
}

pub struct EmbeddedConnection {
    series: Option<Arc<Series>>,
    name: SeriesRef,
}

impl Connection for EmbeddedConnection {
    fn series(&self) -> &SeriesRef {
        &self.name
    }

    fn query_to_historic(&mut self, q: &HistoricQuery) -> Result<Vec<AggregateRow>, StoreError> {
        self.series
            .as_ref()
            .ok_or(StoreError::ConnectionClosed)?
            .query(q)
    }

    fn close(&mut self) {
        self.series = None;
    }

    fn is_open(&self) -> bool {
        self.series.is_some()
    }
}

pub struct EmbeddedProvider {
    name: String,
    store: Arc<HistoricStore>,
}

impl HistoricProvider for EmbeddedProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn connect(&self, series: &SeriesRef) -> Result<Box<dyn Connection>, StoreError> {
        if series.provider != self.name {
            return Err(StoreError::UnknownSeries(series.to_string()));
        }
        Ok(Box::new(self.store.open_connection(series)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> (tempfile::TempDir, Arc<HistoricStore>, SeriesRef) {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(HistoricStore::open(dir.path()).unwrap());
        let name = SeriesRef::new("influxdb", "neubot", "speedtest").unwrap();
        store.register(&name).unwrap();
        (dir, store, name)
    }

    fn t(ts: u64, v: f64) -> Tuple {
        Tuple::from_pairs(Timestamp(ts), "s", [("v", v)]).unwrap()
    }

    fn q(function: AggregationFunction, start: u64, end: u64, minutes: u64) -> HistoricQuery {
        HistoricQuery {
            function,
            value: "v".into(),
            start: Timestamp(start),
            end: Timestamp(end),
            group_by_number: minutes,
            group_by_unit: TimeUnit::Minutes,
        }
    }

    #[test]
    fn ingest_dedups() {
        let (_d, store, name) = store();
        let batch = vec![t(0, 2.0), t(30_000, 4.0), t(90_000, 6.0)];
        assert_eq!(store.ingest(&name, &batch).unwrap(), 3);
        assert_eq!(store.ingest(&name, &batch).unwrap(), 0);
        // duplicates inside one batch count once
        assert_eq!(store.ingest(&name, &[t(5, 1.0), t(5, 1.0), t(4, 1.0), t(5, 1.0)]).unwrap(), 2);
        assert_eq!(store.len(&name).unwrap(), 5);
        let other = SeriesRef::new("influxdb", "neubot", "nope").unwrap();
        assert!(matches!(store.ingest(&other, &batch), Err(StoreError::UnknownSeries(_))));
    }

    #[test]
    fn grouped_query_examples() {
        let (_d, store, name) = store();
        store
            .ingest(&name, &[t(0, 2.0), t(30_000, 4.0), t(90_000, 6.0)])
            .unwrap();
        let rows = store
            .query_to_historic(&name, &q(AggregationFunction::Mean, 0, 120_000, 1))
            .unwrap();
        assert_eq!(
            rows,
            vec![
                AggregateRow { bucket_start: Timestamp(0), count: 2.0, result: Some(3.0) },
                AggregateRow { bucket_start: Timestamp(60_000), count: 1.0, result: Some(6.0) },
            ]
        );
        let rows = store
            .query_to_historic(&name, &q(AggregationFunction::Max, 0, 60_000, 1))
            .unwrap();
        assert_eq!(
            rows,
            vec![AggregateRow { bucket_start: Timestamp(0), count: 2.0, result: Some(4.0) }]
        );
    }

    #[test]
    fn empty_series_yields_empty_buckets() {
        let (_d, store, name) = store();
        let rows = store
            .query_to_historic(&name, &q(AggregationFunction::Min, 1_000, 181_000, 1))
            .unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.count == 0.0 && r.result.is_none()));
        assert_eq!(rows[2].bucket_start, Timestamp(121_000));
        assert!(store
            .query_to_historic(&name, &q(AggregationFunction::Min, 5, 5, 1))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn type_errors_and_skips() {
        let (_d, store, name) = store();
        let text = |ts: u64, v: &str| Tuple::from_pairs(Timestamp(ts), "s", [("label", v), ("mixed", v)]).unwrap();
        store.ingest(&name, &[text(1, "abc"), text(2, "de")]).unwrap();
        let mut query = q(AggregationFunction::Max, 0, 10, 1);
        query.value = "label".into();
        assert!(matches!(
            store.query_to_historic(&name, &query),
            Err(StoreError::NotNumeric { .. })
        ));
        store
            .ingest(&name, &[Tuple::from_pairs(Timestamp(3), "s", [("mixed", 9.0)]).unwrap()])
            .unwrap();
        query.value = "mixed".into();
        let rows = store.query_to_historic(&name, &query).unwrap();
        assert_eq!((rows[0].count, rows[0].result), (1.0, Some(9.0)));
        assert_eq!(store.skipped_non_numeric(&name).unwrap(), 2);
    }

    #[test]
    fn invalid_queries() {
        let (_d, store, name) = store();
        assert!(matches!(
            store.query_to_historic(&name, &q(AggregationFunction::Max, 10, 5, 1)),
            Err(StoreError::InvalidQuery(_))
        ));
        assert!(matches!(
            store.query_to_historic(&name, &q(AggregationFunction::Max, 0, 5, 0)),
            Err(StoreError::InvalidQuery(_))
        ));
        let mut huge = q(AggregationFunction::Max, 0, u64::MAX / 2, 1);
        huge.group_by_unit = TimeUnit::Seconds;
        assert!(store.query_to_historic(&name, &huge).is_err());
    }

    #[test]
    fn connections() {
        let (_d, store, name) = store();
        store.ingest(&name, &[t(0, 2.0), t(30_000, 4.0)]).unwrap();
        let provider = store.provider("influxdb").unwrap();
        let mut a = provider.connect(&name).unwrap();
        let mut b = provider.connect(&name).unwrap();
        let first = a.query_to_historic(&q(AggregationFunction::Mean, 0, 60_000, 1)).unwrap();
        let second = a.query_to_historic(&q(AggregationFunction::Min, 0, 60_000, 1)).unwrap();
        assert_eq!(first[0].result, Some(3.0));
        assert_eq!(second[0].result, Some(2.0));
        a.close();
        assert!(!a.is_open());
        assert!(matches!(
            a.query_to_historic(&q(AggregationFunction::Mean, 0, 60_000, 1)),
            Err(StoreError::ConnectionClosed)
        ));
        assert!(b.is_open());
        assert!(b.query_to_historic(&q(AggregationFunction::Mean, 0, 60_000, 1)).is_ok());

        let unknown = SeriesRef::new("influxdb", "x", "y").unwrap();
        assert!(provider.connect(&unknown).is_err());
        assert!(store.provider("mongo").is_err());
    }

    #[test]
    fn reopen_restores_series() {
        let dir = tempfile::tempdir().unwrap();
        let name = SeriesRef::new("cassandra", "neubot", "speedtests").unwrap();
        let query = q(AggregationFunction::Mean, 0, 600_000, 2);
        let before = {
            let store = HistoricStore::open(dir.path()).unwrap();
            store.register(&name).unwrap();
            store.ingest(&name, &[t(50_000, 1.0), t(10_000, 3.0)]).unwrap();
            store.ingest(&name, &[t(400_000, 5.5)]).unwrap();
            store.query_to_historic(&name, &query).unwrap()
        };
        let store = HistoricStore::open(dir.path()).unwrap();
        assert!(store.is_registered(&name));
        assert_eq!(store.query_to_historic(&name, &query).unwrap(), before);
        assert_eq!(store.ingest(&name, &[t(10_000, 3.0)]).unwrap(), 0);
        assert_eq!(
            store.time_range(&name).unwrap(),
            Some((Timestamp(10_000), Timestamp(400_000)))
        );
    }

    #[test]
    fn register_validates() {
        let (_d, store, _) = store();
        let bad = SeriesRef::new("mongo", "a", "b").unwrap();
        assert!(matches!(store.register(&bad), Err(StoreError::UnknownProvider(_))));
        assert!(SeriesRef::new("influxdb", "..", "b").is_err());
        assert!(SeriesRef::new("influxdb", "", "b").is_err());
    }

    #[test]
    fn catalog_lists_attributes() {
        let (_d, store, name) = store();
        store.ingest(&name, &[t(1, 1.0)]).unwrap();
        let cat = store.catalog();
        let info = &cat.series[&HistoricSource::from(&name)];
        assert_eq!(info.attributes.get("v"), Some(&AttributeKind::Numeric));
        assert!(cat.providers.contains("cassandra"));
    }
}
