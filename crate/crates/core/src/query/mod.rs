//! The query language: lexing, parsing, canonical rendering and
//! validation against a catalog of known stores and queues.
//!
//! See [`parser`] for the accepted productions.

mod ast;
mod lexer;
pub mod parser;
mod validate;

use std::fmt;

use thiserror::Error;

pub use ast::{
    AggregationFunction, Frequency, HistoricSource, QuerySpec, SourceSpec, WindowKind, WindowSpec,
};
pub use lexer::Position;
pub use parser::{is_reserved, parse_queries, parse_query};
pub use validate::{validate, AttributeKind, Catalog, Diagnostic, SeriesInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryErrorKind {
    Lexical,
    Syntax,
    Semantic,
}

impl fmt::Display for QueryErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryErrorKind::Lexical => "lexical",
            QueryErrorKind::Syntax => "syntax",
            QueryErrorKind::Semantic => "semantic",
        })
    }
}

/// A positioned parse failure. `expected` lists acceptable tokens for
/// syntax errors and is empty otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} error at line {line}, column {column}: {message}")]
pub struct QueryError {
    pub kind: QueryErrorKind,
    pub line: usize,
    pub column: usize,
    pub offset: usize,
    pub found: String,
    pub expected: Vec<String>,
    pub message: String,
}

impl QueryError {
    fn new(
        kind: QueryErrorKind,
        pos: Position,
        found: String,
        expected: Vec<String>,
        message: String,
    ) -> Self {
        QueryError {
            kind,
            line: pos.line,
            column: pos.column,
            offset: pos.offset,
            found,
            expected,
            message,
        }
    }
}

/// Canonical single-line rendering with lowercase keywords.
pub fn render_query(spec: &QuerySpec) -> String {
    let mut out = format!(
        "every {} {} compute the {} value of {} ",
        spec.frequency.number, spec.frequency.unit, spec.aggregation, spec.attribute
    );
    match spec.window.kind {
        WindowKind::Sliding => out.push_str(&format!(
            "of the last {} {}",
            spec.window.number, spec.window.unit
        )),
        WindowKind::Landmark => out.push_str(&format!(
            "starting {} {} ago",
            spec.window.number, spec.window.unit
        )),
    }
    if spec.sources.historic.is_some() || spec.sources.stream.is_some() {
        out.push_str(" from");
    }
    if let Some(h) = &spec.sources.historic {
        out.push_str(&format!(
            " {} database {} series {}",
            h.provider, h.database, h.series
        ));
        if spec.sources.stream.is_some() {
            out.push_str(" and");
        }
    }
    if let Some(q) = &spec.sources.stream {
        out.push_str(&format!(" streaming rabbitmq queue {q}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TimeUnit;
    use proptest::prelude::*;

    const Q1: &str = "EVERY 20 seconds compute the mean value of download_speed of the last 10 minutes FROM influxdb database neubot series speedtest and streaming rabbitmq queue neubotspeed";

    #[test]
    fn renders_canonical_text() {
        let spec = parse_query(Q1).unwrap();
        assert_eq!(
            render_query(&spec),
            "every 20 seconds compute the mean value of download_speed of the last 10 minutes from influxdb database neubot series speedtest and streaming rabbitmq queue neubotspeed"
        );
    }

    #[test]
    fn renders_landmark_and_stream_only() {
        let spec = QuerySpec {
            frequency: Frequency::new(30, TimeUnit::Seconds),
            aggregation: AggregationFunction::Mean,
            attribute: "upload_speed".into(),
            window: WindowSpec::landmark(10, TimeUnit::Days),
            sources: SourceSpec {
                historic: None,
                stream: Some("neubotspeed".into()),
            },
        };
        let text = render_query(&spec);
        assert!(text.contains("starting 10 days ago"));
        assert!(!text.contains("database"));
        assert!(!text.contains("series"));
        assert_eq!(parse_query(&text).unwrap(), spec);
    }

    #[test]
    fn parse_is_deterministic() {
        assert_eq!(parse_query(Q1).unwrap(), parse_query(Q1).unwrap());
    }

    fn ident() -> impl Strategy<Value = String> {
        "[a-zA-Z_][a-zA-Z0-9_.-]{0,12}".prop_filter("reserved", |s| !is_reserved(s))
    }

    fn unit() -> impl Strategy<Value = TimeUnit> {
        prop::sample::select(TimeUnit::ALL.to_vec())
    }

    prop_compose! {
        fn spec()(
            f in 1u64..10_000, fu in unit(),
            agg in prop::sample::select(AggregationFunction::ALL.to_vec()),
            attribute in ident(),
            landmark in any::<bool>(), w in 1u64..10_000, wu in unit(),
            provider in "[a-z][a-z0-9_]{0,8}".prop_filter("reserved", |s| !is_reserved(s)),
            database in ident(), series in ident(), queue in ident(),
            shape in 0u8..4,
        ) -> QuerySpec {
            let historic = HistoricSource { provider, database, series };
            let (historic, stream) = match shape {
                0 => (Some(historic), None),
                1 => (None, Some(queue)),
                2 => (Some(historic), Some(queue)),
                _ => (None, None),
            };
            QuerySpec {
                frequency: Frequency::new(f, fu),
                aggregation: agg,
                attribute,
                window: if landmark { WindowSpec::landmark(w, wu) } else { WindowSpec::sliding(w, wu) },
                sources: SourceSpec { historic, stream },
            }
        }
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(s in spec()) {
            prop_assert_eq!(parse_query(&render_query(&s)).unwrap(), s);
        }
    }
}
