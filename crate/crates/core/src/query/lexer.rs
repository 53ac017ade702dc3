use super::{QueryError, QueryErrorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub offset: usize,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    /// Identifier or keyword; keywords are recognised by the parser.
    Word(String),
    Int(u64),
    Eof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub pos: Position,
}

fn is_word_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, QueryError> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    let (mut line, mut column) = (1usize, 1usize);

    while let Some(&(offset, c)) = chars.peek() {
        let pos = Position {
            offset,
            line,
            column,
        };
        if c.is_whitespace() {
            chars.next();
            if c == '\n' {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
            continue;
        }

        let mut lexeme = String::new();
        if c.is_ascii_digit() {
            while let Some(&(_, d)) = chars.peek() {
                if !d.is_ascii_alphanumeric() {
                    break;
                }
                lexeme.push(d);
                chars.next();
            }
            column += lexeme.chars().count();
            let Ok(n) = lexeme.parse::<u64>() else {
                return Err(QueryError::new(
                    QueryErrorKind::Lexical,
                    pos,
                    lexeme.clone(),
                    vec![],
                    format!("invalid integer `{lexeme}`"),
                ));
            };
            tokens.push(Token {
                kind: TokenKind::Int(n),
                text: lexeme,
                pos,
            });
        } else if is_word_start(c) {
            while let Some(&(_, d)) = chars.peek() {
                if !is_word_char(d) {
                    break;
                }
                lexeme.push(d);
                chars.next();
            }
            column += lexeme.chars().count();
            tokens.push(Token {
                kind: TokenKind::Word(lexeme.clone()),
                text: lexeme,
                pos,
            });
        } else {
            return Err(QueryError::new(
                QueryErrorKind::Lexical,
                pos,
                c.to_string(),
                vec![],
                format!("unexpected character `{c}`"),
            ));
        }
    }

    let end = Position {
        offset: text.len(),
        line,
        column,
    };
    tokens.push(Token {
        kind: TokenKind::Eof,
        text: String::new(),
        pos: end,
    });
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_track_lines() {
        let toks = tokenize("EVERY 20\n  seconds").unwrap();
        assert_eq!(toks.len(), 4);
        assert_eq!(toks[1].kind, TokenKind::Int(20));
        assert_eq!((toks[2].pos.line, toks[2].pos.column), (2, 3));
        assert_eq!(toks[3].kind, TokenKind::Eof);
    }

    #[test]
    fn rejects_stray_characters() {
        let err = tokenize("EVERY 5 ; minutes").unwrap_err();
        assert_eq!(err.kind, QueryErrorKind::Lexical);
        assert_eq!(err.found, ";");
        assert_eq!(err.column, 9);
    }

    #[test]
    fn rejects_malformed_numbers() {
        assert_eq!(tokenize("12ab").unwrap_err().kind, QueryErrorKind::Lexical);
        assert_eq!(
            tokenize("99999999999999999999999").unwrap_err().kind,
            QueryErrorKind::Lexical
        );
    }
}
