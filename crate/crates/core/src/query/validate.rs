use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::ast::{HistoricSource, QuerySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttributeKind {
    Numeric,
    /// Present in the series but never carrying a numeric value.
    NonNumeric,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeriesInfo {
    pub attributes: BTreeMap<String, AttributeKind>,
}

/// What a query may reference: historic providers and series, stream
/// queues, and how far back the live stream is retained.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub providers: BTreeSet<String>,
    pub series: BTreeMap<HistoricSource, SeriesInfo>,
    pub queues: BTreeSet<String>,
    /// `None` means the live buffer is unbounded.
    pub live_retention_ms: Option<u64>,
}

impl Catalog {
    pub fn with_queue(mut self, name: impl Into<String>) -> Self {
        self.queues.insert(name.into());
        self
    }

    pub fn with_provider(mut self, name: impl Into<String>) -> Self {
        self.providers.insert(name.into());
        self
    }

    pub fn with_series(mut self, source: HistoricSource, info: SeriesInfo) -> Self {
        self.providers.insert(source.provider.clone());
        self.series.insert(source, info);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    NoSource,
    ZeroFrequency,
    ZeroWindow,
    EmptyAttribute,
    UnknownQueue(String),
    UnknownProvider(String),
    UnknownSeries(String),
    UnknownAttribute { attribute: String, series: String },
    NonNumericAttribute { attribute: String, series: String },
    HistoricSourceRequired { window_ms: u64, retention_ms: u64 },
    DurationOverflow,
}

fn series_name(h: &HistoricSource) -> String {
    format!("{}/{}/{}", h.provider, h.database, h.series)
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::NoSource => write!(f, "query names neither a historic nor a stream source"),
            Diagnostic::ZeroFrequency => write!(f, "frequency must be at least 1"),
            Diagnostic::ZeroWindow => write!(f, "window length must be at least 1"),
            Diagnostic::EmptyAttribute => write!(f, "attribute name is empty"),
            Diagnostic::UnknownQueue(q) => write!(f, "unknown stream queue: {q}"),
            Diagnostic::UnknownProvider(p) => write!(f, "unknown historic provider: {p}"),
            Diagnostic::UnknownSeries(s) => write!(f, "unknown series: {s}"),
            Diagnostic::UnknownAttribute { attribute, series } => {
                write!(f, "unknown attribute: {attribute} in series {series}")
            }
            Diagnostic::NonNumericAttribute { attribute, series } => {
                write!(f, "attribute {attribute} is not numeric in series {series}")
            }
            Diagnostic::HistoricSourceRequired {
                window_ms,
                retention_ms,
            } => write!(
                f,
                "window of {window_ms} ms exceeds live retention of {retention_ms} ms: a historic source is required"
            ),
            Diagnostic::DurationOverflow => write!(f, "duration overflows the millisecond range"),
        }
    }
}

/// Returns every reason `spec` cannot run against `catalog`; empty means
/// executable.
pub fn validate(spec: &QuerySpec, catalog: &Catalog) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if spec.frequency.number == 0 {
        out.push(Diagnostic::ZeroFrequency);
    }
    if spec.window.number == 0 {
        out.push(Diagnostic::ZeroWindow);
    }
    if spec.attribute.is_empty() {
        out.push(Diagnostic::EmptyAttribute);
    }
    if spec.frequency.millis().is_err() || spec.window.duration_millis().is_err() {
        out.push(Diagnostic::DurationOverflow);
    }
    if spec.sources.historic.is_none() && spec.sources.stream.is_none() {
        out.push(Diagnostic::NoSource);
    }

    if let Some(q) = &spec.sources.stream {
        if !catalog.queues.contains(q) {
            out.push(Diagnostic::UnknownQueue(q.clone()));
        }
    }

    match &spec.sources.historic {
        Some(h) => {
            if !catalog.providers.contains(&h.provider) {
                out.push(Diagnostic::UnknownProvider(h.provider.clone()));
            } else {
                match catalog.series.get(h) {
                    None => out.push(Diagnostic::UnknownSeries(series_name(h))),
                    Some(info) if !info.attributes.is_empty() => {
                        match info.attributes.get(&spec.attribute) {
                            None => out.push(Diagnostic::UnknownAttribute {
                                attribute: spec.attribute.clone(),
                                series: series_name(h),
                            }),
                            Some(AttributeKind::NonNumeric) => {
                                out.push(Diagnostic::NonNumericAttribute {
                                    attribute: spec.attribute.clone(),
                                    series: series_name(h),
                                })
                            }
                            Some(AttributeKind::Numeric) => {}
                        }
                    }
                    Some(_) => {}
                }
            }
        }
        None => {
            if let (Some(retention_ms), Ok(window_ms)) =
                (catalog.live_retention_ms, spec.window.duration_millis())
            {
                if window_ms > retention_ms {
                    out.push(Diagnostic::HistoricSourceRequired {
                        window_ms,
                        retention_ms,
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_query;

    fn neubot() -> HistoricSource {
        HistoricSource {
            provider: "influxdb".into(),
            database: "neubot".into(),
            series: "speedtest".into(),
        }
    }

    fn catalog() -> Catalog {
        let mut info = SeriesInfo::default();
        info.attributes
            .insert("download_speed".into(), AttributeKind::Numeric);
        info.attributes.insert("isp".into(), AttributeKind::NonNumeric);
        Catalog::default()
            .with_series(neubot(), info)
            .with_queue("neubotspeed")
    }

    #[test]
    fn resolvable_spec_has_no_diagnostics() {
        let spec = parse_query("EVERY 20 seconds compute the mean value of download_speed of the last 10 minutes FROM influxdb database neubot series speedtest and streaming rabbitmq queue neubotspeed").unwrap();
        assert!(validate(&spec, &catalog()).is_empty());
    }

    #[test]
    fn unknown_queue() {
        let spec = parse_query("every 1 seconds compute the max of download_speed of the last 1 minutes from streaming rabbitmq queue nope").unwrap();
        let diags = validate(&spec, &catalog());
        assert_eq!(diags, vec![Diagnostic::UnknownQueue("nope".into())]);
        assert_eq!(diags[0].to_string(), "unknown stream queue: nope");
    }

    #[test]
    fn historic_required_beyond_retention() {
        // retention 5 min: a 10 minute stream-only window needs history,
        // a 5 minute one does not.
        let mut cat = catalog();
        cat.live_retention_ms = Some(300_000);
        let long = parse_query("every 1 seconds compute the max of download_speed of the last 10 minutes from streaming rabbitmq queue neubotspeed").unwrap();
        assert_eq!(
            validate(&long, &cat),
            vec![Diagnostic::HistoricSourceRequired {
                window_ms: 600_000,
                retention_ms: 300_000
            }]
        );
        let short = parse_query("every 1 seconds compute the max of download_speed of the last 5 minutes from streaming rabbitmq queue neubotspeed").unwrap();
        assert!(validate(&short, &cat).is_empty());
        let hybrid = parse_query("every 1 seconds compute the max of download_speed of the last 10 minutes from influxdb database neubot series speedtest and streaming rabbitmq queue neubotspeed").unwrap();
        assert!(validate(&hybrid, &cat).is_empty());
    }

    #[test]
    fn attribute_checks() {
        let spec = parse_query("every 1 seconds compute the max of isp of the last 1 minutes from influxdb database neubot series speedtest").unwrap();
        assert!(matches!(
            validate(&spec, &catalog())[..],
            [Diagnostic::NonNumericAttribute { .. }]
        ));
        let spec = parse_query("every 1 seconds compute the max of latency of the last 1 minutes from influxdb database neubot series speedtest").unwrap();
        assert_eq!(
            validate(&spec, &catalog())[0].to_string(),
            "unknown attribute: latency in series influxdb/neubot/speedtest"
        );
    }

    #[test]
    fn unknown_provider_and_series() {
        let spec = parse_query("every 1 seconds compute the max of x of the last 1 minutes from mongo database a series b").unwrap();
        assert_eq!(
            validate(&spec, &catalog()),
            vec![Diagnostic::UnknownProvider("mongo".into())]
        );
        let spec = parse_query("every 1 seconds compute the max of x of the last 1 minutes from influxdb database a series b").unwrap();
        assert_eq!(
            validate(&spec, &catalog()),
            vec![Diagnostic::UnknownSeries("influxdb/a/b".into())]
        );
    }
}
