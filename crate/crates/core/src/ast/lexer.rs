use super::{AstError, RawToken, SourceSpan, TokenKind};

pub(crate) const KEYWORDS: &[&str] = &["fn", "if", "else", "while", "return"];

const TWO_CHAR_OPERATORS: &[&str] = &["==", "!=", "<=", ">=", "&&", "||"];
const ONE_CHAR_OPERATORS: &str = "=<>+-*/%!";
const PUNCTUATION: &str = "(){},;";

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn pos(&self) -> (u32, u32) {
        (self.line, self.col)
    }
}

/// Splits mini-language source into tokens with inclusive 1-based spans.
///
/// Columns count Unicode scalar values. Whitespace separates tokens and is
/// otherwise ignored; string literals may hold any character except a raw
/// newline.
pub fn lex(text: &str) -> Result<Vec<RawToken>, AstError> {
    let mut cur = Cursor {
        chars: text.chars().peekable(),
        line: 1,
        col: 1,
    };
    let mut tokens = Vec::new();

    while let Some(c) = cur.peek() {
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        let (line, col) = cur.pos();
        let mut buf = String::new();
        let kind = if c.is_ascii_alphabetic() || c == '_' {
            while let Some(c) = cur.peek().filter(|c| c.is_ascii_alphanumeric() || *c == '_') {
                buf.push(c);
                cur.bump();
            }
            if KEYWORDS.contains(&buf.as_str()) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            }
        } else if c.is_ascii_digit() {
            lex_number(&mut cur, &mut buf)?;
            TokenKind::NumberLiteral
        } else if c == '"' {
            lex_string(&mut cur, &mut buf, line, col)?;
            TokenKind::StringLiteral
        } else if PUNCTUATION.contains(c) {
            buf.push(c);
            cur.bump();
            TokenKind::Punctuation
        } else if ONE_CHAR_OPERATORS.contains(c) || c == '&' || c == '|' {
            buf.push(c);
            cur.bump();
            if let Some(next) = cur.peek() {
                let pair: String = [c, next].iter().collect();
                if TWO_CHAR_OPERATORS.contains(&pair.as_str()) {
                    buf.push(next);
                    cur.bump();
                }
            }
            if buf == "&" || buf == "|" {
                return Err(AstError::Lex { line, col, found: c });
            }
            TokenKind::Operator
        } else {
            return Err(AstError::Lex { line, col, found: c });
        };

        // Tokens never span lines except string literals, which reject raw
        // newlines, so the end column is the column of the last character.
        let end_col = col + buf.chars().count() as u32 - 1;
        tokens.push(RawToken {
            text: buf,
            span: SourceSpan {
                start_line: line,
                start_col: col,
                end_line: line,
                end_col,
            },
            kind,
        });
    }
    Ok(tokens)
}

fn lex_number(cur: &mut Cursor<'_>, buf: &mut String) -> Result<(), AstError> {
    while let Some(c) = cur.peek().filter(char::is_ascii_digit) {
        buf.push(c);
        cur.bump();
    }
    if cur.peek() == Some('.') {
        let (line, col) = cur.pos();
        buf.push('.');
        cur.bump();
        let mut any = false;
        while let Some(c) = cur.peek().filter(char::is_ascii_digit) {
            buf.push(c);
            cur.bump();
            any = true;
        }
        if !any {
            return Err(AstError::Lex { line, col, found: '.' });
        }
    }
    if let Some(c) = cur.peek().filter(|c| c.is_ascii_alphabetic() || *c == '_') {
        let (line, col) = cur.pos();
        return Err(AstError::Lex { line, col, found: c });
    }
    Ok(())
}

fn lex_string(cur: &mut Cursor<'_>, buf: &mut String, line: u32, col: u32) -> Result<(), AstError> {
    buf.push('"');
    cur.bump();
    loop {
        match cur.peek() {
            None => return Err(AstError::Lex { line, col, found: '"' }),
            Some('\n') => {
                let (l, c) = cur.pos();
                return Err(AstError::Lex { line: l, col: c, found: '\n' });
            }
            Some('"') => {
                buf.push('"');
                cur.bump();
                return Ok(());
            }
            Some('\\') => {
                buf.push('\\');
                cur.bump();
                match cur.peek() {
                    Some('\n') | None => return Err(AstError::Lex { line, col, found: '"' }),
                    Some(c) => {
                        buf.push(c);
                        cur.bump();
                    }
                }
            }
            Some(c) => {
                buf.push(c);
                cur.bump();
            }
        }
    }
}
