//! LL(1) recursive-descent parser for query text.
//!
//! ```text
//! query    := EVERY INT UNIT COMPUTE [THE] AGG [VALUE] OF [THE] IDENT window [FROM sources]
//! window   := OF [THE] LAST INT UNIT | STARTING INT UNIT AGO
//! sources  := historic [AND stream] | stream
//! historic := PROVIDER DATABASE IDENT SERIES IDENT
//! stream   := STREAMING RABBITMQ QUEUE IDENT
//! ```
//!
//! A query without FROM parses with no sources; planning rejects it.
//! Keywords are case-insensitive; identifiers keep their case except
//! provider names, which are lowercased.

use super::ast::{
    AggregationFunction, Frequency, HistoricSource, QuerySpec, SourceSpec, WindowKind, WindowSpec,
};
use super::lexer::{tokenize, Token, TokenKind};
use super::{QueryError, QueryErrorKind};
use crate::model::{to_millis, TimeUnit};

/// Words that cannot be used as identifiers.
pub const RESERVED: &[&str] = &[
    "every", "compute", "the", "value", "of", "last", "starting", "ago", "from", "and",
    "streaming", "rabbitmq", "queue", "database", "series",
];

pub fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|k| k.eq_ignore_ascii_case(word))
}

const UNITS: &[&str] = &["seconds", "minutes", "hours", "days"];

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if tok.kind != TokenKind::Eof {
            self.pos += 1;
        }
        tok
    }

    fn error(&self, tok: &Token, expected: &[&str]) -> QueryError {
        let found = match tok.kind {
            TokenKind::Eof => "end of input".to_string(),
            _ => tok.text.clone(),
        };
        let message = format!("found `{found}`, expected {}", expected.join(" | "));
        QueryError::new(
            QueryErrorKind::Syntax,
            tok.pos,
            found,
            expected.iter().map(|s| s.to_string()).collect(),
            message,
        )
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().kind, TokenKind::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    fn accept(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.accept(kw) {
            Ok(())
        } else {
            Err(self.error(self.peek(), &[kw]))
        }
    }

    fn expect_int(&mut self, what: &str) -> Result<(u64, Token), QueryError> {
        let tok = self.bump();
        match tok.kind {
            TokenKind::Int(n) => Ok((n, tok)),
            _ => Err(self.error(&tok, &[what])),
        }
    }

    fn expect_unit(&mut self) -> Result<TimeUnit, QueryError> {
        let tok = self.bump();
        match &tok.kind {
            TokenKind::Word(w) => w.parse().map_err(|_| self.error(&tok, UNITS)),
            _ => Err(self.error(&tok, UNITS)),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<String, QueryError> {
        let tok = self.bump();
        match &tok.kind {
            TokenKind::Word(w) if !is_reserved(w) => Ok(w.clone()),
            _ => Err(self.error(&tok, &[what])),
        }
    }

    /// A positive count followed by a unit whose product fits in milliseconds.
    fn duration(&mut self, what: &str) -> Result<(u64, TimeUnit), QueryError> {
        let (n, tok) = self.expect_int(what)?;
        let unit = self.expect_unit()?;
        if n == 0 {
            return Err(QueryError::new(
                QueryErrorKind::Semantic,
                tok.pos,
                tok.text,
                vec![],
                format!("{what} must be at least 1"),
            ));
        }
        if to_millis(n, unit).is_err() {
            return Err(QueryError::new(
                QueryErrorKind::Semantic,
                tok.pos,
                tok.text,
                vec![],
                format!("{n} {unit} overflows the millisecond range"),
            ));
        }
        Ok((n, unit))
    }

    fn aggregation(&mut self) -> Result<AggregationFunction, QueryError> {
        let tok = self.bump();
        match &tok.kind {
            TokenKind::Word(w) => w.parse().map_err(|msg: String| {
                QueryError::new(
                    QueryErrorKind::Semantic,
                    tok.pos,
                    tok.text.clone(),
                    vec!["min".into(), "max".into(), "mean".into()],
                    msg,
                )
            }),
            _ => Err(self.error(&tok, &["min", "max", "mean"])),
        }
    }

    fn window(&mut self) -> Result<WindowSpec, QueryError> {
        if self.accept("of") {
            self.accept("the");
            self.expect("last")?;
            let (n, unit) = self.duration("window length")?;
            Ok(WindowSpec {
                kind: WindowKind::Sliding,
                number: n,
                unit,
            })
        } else if self.accept("starting") {
            let (n, unit) = self.duration("window start")?;
            self.expect("ago")?;
            Ok(WindowSpec {
                kind: WindowKind::Landmark,
                number: n,
                unit,
            })
        } else {
            Err(self.error(self.peek(), &["of", "starting"]))
        }
    }

    fn stream(&mut self) -> Result<String, QueryError> {
        self.expect("rabbitmq")?;
        self.expect("queue")?;
        self.expect_ident("queue name")
    }

    fn sources(&mut self) -> Result<SourceSpec, QueryError> {
        if self.accept("streaming") {
            return Ok(SourceSpec {
                historic: None,
                stream: Some(self.stream()?),
            });
        }
        let provider = match &self.peek().kind {
            TokenKind::Word(w) if !is_reserved(w) => {
                let p = w.to_ascii_lowercase();
                self.bump();
                p
            }
            _ => return Err(self.error(self.peek(), &["provider name", "streaming"])),
        };
        self.expect("database")?;
        let database = self.expect_ident("database name")?;
        self.expect("series")?;
        let series = self.expect_ident("series name")?;
        let stream = if self.accept("and") {
            self.expect("streaming")?;
            Some(self.stream()?)
        } else {
            None
        };
        Ok(SourceSpec {
            historic: Some(HistoricSource {
                provider,
                database,
                series,
            }),
            stream,
        })
    }

    fn query(&mut self) -> Result<QuerySpec, QueryError> {
        self.expect("every")?;
        let (number, unit) = self.duration("frequency")?;
        self.expect("compute")?;
        self.accept("the");
        let aggregation = self.aggregation()?;
        self.accept("value");
        self.expect("of")?;
        self.accept("the");
        let attribute = self.expect_ident("attribute name")?;
        let window = self.window()?;
        let has_from = self.accept("from");
        let sources = if has_from { self.sources()? } else { SourceSpec::default() };
        if self.peek().kind != TokenKind::Eof {
            let expected: &[&str] = if !has_from {
                &["from", "end of input"]
            } else if sources.stream.is_none() {
                &["and", "end of input"]
            } else {
                &["end of input"]
            };
            return Err(self.error(self.peek(), expected));
        }
        Ok(QuerySpec {
            frequency: Frequency::new(number, unit),
            aggregation,
            attribute,
            window,
            sources,
        })
    }
}

/// Parses one query.
pub fn parse_query(text: &str) -> Result<QuerySpec, QueryError> {
    let tokens = tokenize(text)?;
    Parser { tokens, pos: 0 }.query()
}

/// Parses a document holding one query per blank-line separated block.
/// Error positions refer to the whole document.
pub fn parse_queries(text: &str) -> Result<Vec<QuerySpec>, QueryError> {
    let mut specs = Vec::new();
    let mut block = String::new();
    let mut block_start = 0usize;
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            if !block.trim().is_empty() {
                specs.push(parse_block(&block, block_start)?);
            }
            block.clear();
            block_start = i + 1;
        } else {
            block.push_str(line);
            block.push('\n');
        }
    }
    if !block.trim().is_empty() {
        specs.push(parse_block(&block, block_start)?);
    }
    Ok(specs)
}

fn parse_block(block: &str, first_line: usize) -> Result<QuerySpec, QueryError> {
    parse_query(block).map_err(|mut e| {
        e.line += first_line;
        e
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expected_units_listed() {
        let err = parse_query("EVERY 5 bananas compute the mean value of x of the last 1 minutes FROM streaming rabbitmq queue q").unwrap_err();
        assert_eq!(err.kind, QueryErrorKind::Syntax);
        assert_eq!(err.found, "bananas");
        assert_eq!(err.expected, vec!["seconds", "minutes", "hours", "days"]);
        assert_eq!((err.line, err.column), (1, 9));
    }

    #[test]
    fn unknown_aggregation_is_semantic() {
        let err = parse_query("every 5 seconds compute the median value of x of the last 1 minutes from streaming rabbitmq queue q").unwrap_err();
        assert_eq!(err.kind, QueryErrorKind::Semantic);
        assert_eq!(err.found, "median");
    }

    #[test]
    fn zero_frequency_rejected() {
        let err = parse_query("every 0 seconds compute the max of x of the last 1 minutes from streaming rabbitmq queue q").unwrap_err();
        assert_eq!(err.kind, QueryErrorKind::Semantic);
    }

    #[test]
    fn window_overflow_rejected() {
        let err = parse_query("every 1 seconds compute the max of x of the last 999999999999999 days from streaming rabbitmq queue q").unwrap_err();
        assert_eq!(err.kind, QueryErrorKind::Semantic);
    }

    #[test]
    fn reserved_words_are_not_identifiers() {
        let err = parse_query("every 1 seconds compute the max of series of the last 1 minutes from streaming rabbitmq queue q").unwrap_err();
        assert_eq!(err.kind, QueryErrorKind::Syntax);
        assert_eq!(err.found, "series");
    }

    #[test]
    fn trailing_tokens_rejected() {
        let err = parse_query("every 1 seconds compute the max of x of the last 1 minutes from streaming rabbitmq queue q extra").unwrap_err();
        assert_eq!(err.found, "extra");
        let err = parse_query("every 1 seconds compute the max of x of the last 1 minutes from").unwrap_err();
        assert_eq!(err.found, "end of input");
    }

    #[test]
    fn from_clause_is_optional() {
        let spec = parse_query("EVERY 2 minutes compute the max value of download_speed of the last 8 minutes").unwrap();
        assert_eq!(spec.sources, SourceSpec::default());
        assert_eq!(spec.window, WindowSpec::sliding(8, TimeUnit::Minutes));
        let err = parse_query("every 1 seconds compute the max of x of the last 1 minutes streaming").unwrap_err();
        assert_eq!(err.expected, vec!["from".to_string(), "end of input".to_string()]);
    }

    #[test]
    fn singular_units_and_mixed_case() {
        let spec = parse_query("Every 1 Minute COMPUTE THE MAX OF Speed OF THE LAST 1 hour FROM InfluxDB DATABASE Db SERIES S").unwrap();
        assert_eq!(spec.frequency, Frequency::new(1, TimeUnit::Minutes));
        assert_eq!(spec.attribute, "Speed");
        let h = spec.sources.historic.unwrap();
        assert_eq!((h.provider.as_str(), h.database.as_str()), ("influxdb", "Db"));
    }

    #[test]
    fn multi_block_document() {
        let doc = "every 1 seconds compute the max of x of the last 1 minutes\nfrom streaming rabbitmq queue q\n\n\nevery 2 seconds compute the min of y starting 1 days ago from streaming rabbitmq queue q\n";
        let specs = parse_queries(doc).unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[1].window.kind, WindowKind::Landmark);

        let bad = "every 1 seconds compute the max of x of the last 1 minutes from streaming rabbitmq queue q\n\nevery 2 lightyears";
        let err = parse_queries(bad).unwrap_err();
        assert_eq!((err.line, err.column), (3, 9));
    }
}
