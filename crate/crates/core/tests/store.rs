use std::sync::Arc;

use hstream_core::model::{bucket_of, to_millis};
use hstream_core::query::AggregationFunction;
use hstream_core::store::{HistoricQuery, HistoricStore, SeriesRef};
use hstream_core::{AggregateRow, TimeUnit, Timestamp, Tuple, Value};
use proptest::prelude::*;

/// Naive scan, filter, group, aggregate.
fn oracle(rows: &[(u64, Value)], q: &HistoricQuery) -> Vec<AggregateRow> {
    let width = to_millis(q.group_by_number, q.group_by_unit).unwrap();
    let mut out = Vec::new();
    let mut b = q.start.0;
    while b < q.end.0 {
        let hi = (b + width).min(q.end.0);
        let vs: Vec<f64> = rows
            .iter()
            .filter(|(t, _)| *t >= b && *t < hi)
            .filter_map(|(t, v)| {
                assert_eq!(bucket_of(Timestamp(*t), width, q.start).unwrap().start, Timestamp(b));
                v.as_f64()
            })
            .collect();
        let result = if vs.is_empty() {
            None
        } else {
            Some(match q.function {
                AggregationFunction::Min => vs.iter().cloned().fold(f64::INFINITY, f64::min),
                AggregationFunction::Max => vs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                AggregationFunction::Mean => vs.iter().sum::<f64>() / vs.len() as f64,
            })
        };
        out.push(AggregateRow {
            bucket_start: Timestamp(b),
            count: vs.len() as f64,
            result,
        });
        b += width;
    }
    out
}

fn value_strategy() -> impl Strategy<Value = Value> {
    prop_oneof![
        8 => (-1e6f64..1e6).prop_map(Value::Float),
        3 => (-1000i64..1000).prop_map(Value::Int),
        1 => "[a-z]{2,4}".prop_map(Value::Str),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]
    #[test]
    fn query_matches_oracle(
        raw in prop::collection::vec((0u64..600_000, value_strategy()), 1..300),
        f in prop::sample::select(AggregationFunction::ALL.to_vec()),
        (a, b) in (0u64..700_000, 0u64..700_000),
        n in 1u64..5,
        unit in prop::sample::select(vec![TimeUnit::Seconds, TimeUnit::Minutes]),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(HistoricStore::open(dir.path()).unwrap());
        let name = SeriesRef::new("cassandra", "db", "s").unwrap();
        store.register(&name).unwrap();
        let tuples: Vec<Tuple> = raw
            .iter()
            .map(|(t, v)| Tuple::from_pairs(Timestamp(*t), "s", [("v", v.clone())]).unwrap())
            .collect();
        store.ingest(&name, &tuples).unwrap();
        let q = HistoricQuery {
            function: f,
            value: "v".into(),
            start: Timestamp(a.min(b)),
            end: Timestamp(a.max(b)),
            group_by_number: n,
            group_by_unit: unit,
        };
        // duplicates are stored once
        let mut unique: Vec<(u64, Value)> = Vec::new();
        for (t, v) in &raw {
            if !unique.iter().any(|(u, w)| u == t && w == v) {
                unique.push((*t, v.clone()));
            }
        }
        if unique.iter().all(|(_, v)| !v.is_numeric()) {
            prop_assert!(store.query_to_historic(&name, &q).is_err());
            return Ok(());
        }
        let got = store.query_to_historic(&name, &q).unwrap();
        let want = oracle(&unique, &q);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert_eq!(g.bucket_start, w.bucket_start);
            prop_assert_eq!(g.count, w.count);
            match (g.result, w.result) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1e-300)),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }
}
