//! Recursive-descent parser for coefficient expressions.
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := base ('^' factor)?
//! base   := number | ident | '(' expr ')' | func '(' expr ')' | '-' base
//! func   := exp | log | sin | cos | sqrt
//! ident  := x1 .. x9
//! ```

use super::{Expr, Func, MAX_VARS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        offset: usize,
        expected: Vec<&'static str>,
        found: String,
    },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("`{name}` at offset {offset} takes exactly one argument")]
    Arity { offset: usize, name: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::Arity { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn next(&mut self) -> Result<(usize, Tok), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            return Ok((start, Tok::End));
        };
        if c.is_ascii_digit() || c == b'.' {
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                end += 1;
            }
            // optional exponent: e[+-]digits
            if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                let mut k = end + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    end = k;
                }
            }
            let text = &self.src[start..end];
            self.pos = end;
            return text.parse::<f64>().map(|v| (start, Tok::Num(v))).map_err(|_| {
                ParseError::Syntax {
                    offset: start,
                    expected: vec!["number"],
                    found: format!("`{text}`"),
                }
            });
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                end += 1;
            }
            self.pos = end;
            return Ok((start, Tok::Ident(self.src[start..end].to_string())));
        }
        if b"+-*/^(),".contains(&c) {
            self.pos += 1;
            return Ok((start, Tok::Op(c as char)));
        }
        let ch = self.src[start..].chars().next().unwrap_or('?');
        Err(ParseError::Syntax {
            offset: start,
            expected: vec!["number", "identifier", "operator"],
            found: format!("`{ch}`"),
        })
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    offset: usize,
    max_dim: usize,
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Op(c) => format!("`{c}`"),
        Tok::End => "end of input".to_string(),
    }
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, max_dim: usize) -> Result<Self, ParseError> {
        let mut lexer = Lexer { src, pos: 0 };
        let (offset, tok) = lexer.next()?;
        Ok(Parser {
            lexer,
            tok,
            offset,
            max_dim,
        })
    }

    fn bump(&mut self) -> Result<(), ParseError> {
        let (offset, tok) = self.lexer.next()?;
        self.offset = offset;
        self.tok = tok;
        Ok(())
    }

    fn error(&self, expected: Vec<&'static str>) -> ParseError {
        ParseError::Syntax {
            offset: self.offset,
            expected,
            found: describe(&self.tok),
        }
    }

    fn expect(&mut self, op: char, label: &'static str) -> Result<(), ParseError> {
        if self.tok == Tok::Op(op) {
            self.bump()
        } else {
            Err(self.error(vec![label]))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.tok {
                Tok::Op('+') => {
                    self.bump()?;
                    lhs = lhs + self.term()?;
                }
                Tok::Op('-') => {
                    self.bump()?;
                    lhs = lhs - self.term()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.tok {
                Tok::Op('*') => {
                    self.bump()?;
                    lhs = lhs * self.factor()?;
                }
                Tok::Op('/') => {
                    self.bump()?;
                    lhs = lhs / self.factor()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.base()?;
        if self.tok == Tok::Op('^') {
            self.bump()?;
            let exponent = self.factor()?;
            Ok(base.pow(&exponent))
        } else {
            Ok(base)
        }
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Expr::constant(v))
            }
            Tok::Op('-') => {
                self.bump()?;
                Ok(-self.base()?)
            }
            Tok::Op('(') => {
                self.bump()?;
                let inner = self.expr()?;
                self.expect(')', "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let at = self.offset;
                self.bump()?;
                if let Some(func) = Func::from_name(&name) {
                    if self.tok != Tok::Op('(') {
                        return Err(self.error(vec!["`(`"]));
                    }
                    self.bump()?;
                    if self.tok == Tok::Op(')') {
                        return Err(ParseError::Arity { offset: at, name });
                    }
                    let arg = self.expr()?;
                    if self.tok == Tok::Op(',') {
                        return Err(ParseError::Arity { offset: at, name });
                    }
                    self.expect(')', "`)`")?;
                    return Ok(Expr::call(func, &arg));
                }
                let index = variable_index(&name)
                    .filter(|&i| i < self.max_dim)
                    .ok_or(ParseError::UnknownIdentifier {
                        offset: at,
                        name: name.clone(),
                    })?;
                if self.tok == Tok::Op('(') {
                    return Err(ParseError::Arity { offset: at, name });
                }
                Ok(Expr::var(index))
            }
            _ => Err(self.error(vec!["number", "identifier", "`(`", "`-`"])),
        }
    }
}

fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.len() != 1 {
        return None;
    }
    let d = digits.parse::<usize>().ok()?;
    (1..=MAX_VARS).contains(&d).then(|| d - 1)
}

/// Parse an expression over `x1..x9`.
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    parse_in_dim(source, MAX_VARS)
}

/// Parse an expression that may only reference `x1..x{dim}`.
pub fn parse_in_dim(source: &str, dim: usize) -> Result<Expr, ParseError> {
    let mut p = Parser::new(source, dim.min(MAX_VARS))?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return Err(p.error(vec!["operator", "end of input"]));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syntax_error_reports_offset_and_expectations() {
        match parse("x1 + * 2") {
            Err(ParseError::Syntax {
                offset, expected, ..
            }) => {
                assert_eq!(offset, 5);
                assert!(expected.contains(&"number"));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(parse("(x1 + 2").unwrap_err().offset(), 7);
        assert_eq!(parse("x1 x2").unwrap_err().offset(), 3);
        assert!(matches!(parse(""), Err(ParseError::Syntax { offset: 0, .. })));
    }

    #[test]
    fn unknown_identifiers() {
        assert!(matches!(
            parse("y + 1"),
            Err(ParseError::UnknownIdentifier { offset: 0, .. })
        ));
        assert!(matches!(parse("x0"), Err(ParseError::UnknownIdentifier { .. })));
        assert!(matches!(parse("x10"), Err(ParseError::UnknownIdentifier { .. })));
        assert!(matches!(
            parse_in_dim("x1 + x3", 2),
            Err(ParseError::UnknownIdentifier { offset: 5, .. })
        ));
        assert!(parse_in_dim("x1 + x2", 2).is_ok());
    }

    #[test]
    fn arity_errors() {
        assert!(matches!(parse("exp()"), Err(ParseError::Arity { .. })));
        assert!(matches!(parse("sin(1, 2)"), Err(ParseError::Arity { .. })));
        assert!(matches!(parse("x1(2)"), Err(ParseError::Arity { .. })));
    }

    #[test]
    fn numbers() {
        assert_eq!(parse("1.5e-3").unwrap().as_const(), Some(1.5e-3));
        assert_eq!(parse(".25").unwrap().as_const(), Some(0.25));
        assert!(parse("1.2.3").is_err());
    }
}
