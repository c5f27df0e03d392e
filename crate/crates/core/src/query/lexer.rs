use std::fmt;

use super::{Position, QueryError};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    /// Backtick-quoted identifier; never treated as a keyword.
    Quoted(String),
    Str(String),
    Int(i64),
    Float(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Colon,
    Comma,
    Dot,
    Semicolon,
    Minus,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Quoted(s) => write!(f, "identifier `{s}`"),
            Tok::Str(_) => f.write_str("string literal"),
            Tok::Int(i) => write!(f, "integer {i}"),
            Tok::Float(x) => write!(f, "number {x}"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Semicolon => f.write_str("`;`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Lt => f.write_str("`<`"),
            Tok::Le => f.write_str("`<=`"),
            Tok::Gt => f.write_str("`>`"),
            Tok::Ge => f.write_str("`>=`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Ne => f.write_str("`<>`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Position,
}

impl Token {
    /// Case-insensitive keyword test. Quoted identifiers never match.
    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.tok, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn pos(&self) -> Position {
        Position {
            line: self.line,
            column: self.column,
        }
    }
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, QueryError> {
    let mut cur = Cursor {
        chars: text.chars().peekable(),
        line: 1,
        column: 1,
    };
    let mut out = Vec::new();
    while let Some(c) = cur.peek() {
        let pos = cur.pos();
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '/' {
            cur.bump();
            if cur.peek() == Some('/') {
                while let Some(c) = cur.peek() {
                    if c == '\n' {
                        break;
                    }
                    cur.bump();
                }
                continue;
            }
            return Err(QueryError::syntax(pos, "unexpected `/`"));
        }
        let tok = match c {
            '(' => single(&mut cur, Tok::LParen),
            ')' => single(&mut cur, Tok::RParen),
            '[' => single(&mut cur, Tok::LBracket),
            ']' => single(&mut cur, Tok::RBracket),
            '{' => single(&mut cur, Tok::LBrace),
            '}' => single(&mut cur, Tok::RBrace),
            ':' => single(&mut cur, Tok::Colon),
            ',' => single(&mut cur, Tok::Comma),
            '.' => single(&mut cur, Tok::Dot),
            ';' => single(&mut cur, Tok::Semicolon),
            '-' => single(&mut cur, Tok::Minus),
            '=' => single(&mut cur, Tok::Eq),
            '<' => {
                cur.bump();
                match cur.peek() {
                    Some('=') => single(&mut cur, Tok::Le),
                    Some('>') => single(&mut cur, Tok::Ne),
                    _ => Tok::Lt,
                }
            }
            '>' => {
                cur.bump();
                if cur.peek() == Some('=') {
                    single(&mut cur, Tok::Ge)
                } else {
                    Tok::Gt
                }
            }
            '!' => {
                cur.bump();
                if cur.peek() == Some('=') {
                    single(&mut cur, Tok::Ne)
                } else {
                    return Err(QueryError::syntax(pos, "expected `!=`"));
                }
            }
            '"' | '\'' => lex_string(&mut cur, c, pos)?,
            '`' => {
                cur.bump();
                let mut s = String::new();
                loop {
                    match cur.bump() {
                        Some('`') => break,
                        Some(c) => s.push(c),
                        None => return Err(QueryError::syntax(pos, "unterminated quoted identifier")),
                    }
                }
                if s.is_empty() {
                    return Err(QueryError::syntax(pos, "empty quoted identifier"));
                }
                Tok::Quoted(s)
            }
            c if c.is_ascii_digit() => lex_number(&mut cur, pos)?,
            c if c.is_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(c) = cur.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        s.push(c);
                        cur.bump();
                    } else {
                        break;
                    }
                }
                Tok::Ident(s)
            }
            other => return Err(QueryError::syntax(pos, format!("unexpected character `{other}`"))),
        };
        out.push(Token { tok, pos });
    }
    Ok(out)
}

fn single(cur: &mut Cursor<'_>, tok: Tok) -> Tok {
    cur.bump();
    tok
}

fn lex_string(cur: &mut Cursor<'_>, quote: char, pos: Position) -> Result<Tok, QueryError> {
    cur.bump();
    let mut s = String::new();
    loop {
        match cur.bump() {
            None => return Err(QueryError::syntax(pos, "unterminated string literal")),
            Some(c) if c == quote => return Ok(Tok::Str(s)),
            Some('\\') => {
                let esc_pos = cur.pos();
                match cur.bump() {
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some('r') => s.push('\r'),
                    Some('\\') => s.push('\\'),
                    Some('"') => s.push('"'),
                    Some('\'') => s.push('\''),
                    _ => return Err(QueryError::syntax(esc_pos, "invalid escape sequence")),
                }
            }
            Some(c) => s.push(c),
        }
    }
}

fn lex_number(cur: &mut Cursor<'_>, pos: Position) -> Result<Tok, QueryError> {
    let mut s = String::new();
    let mut is_float = false;
    while let Some(c) = cur.peek() {
        if c.is_ascii_digit() {
            s.push(c);
            cur.bump();
        } else {
            break;
        }
    }
    if cur.peek() == Some('.') {
        // `1.` followed by a digit is a float; anything else leaves the dot
        let mut ahead = cur.chars.clone();
        ahead.next();
        if ahead.peek().is_some_and(|c| c.is_ascii_digit()) {
            is_float = true;
            s.push('.');
            cur.bump();
            while let Some(c) = cur.peek() {
                if c.is_ascii_digit() {
                    s.push(c);
                    cur.bump();
                } else {
                    break;
                }
            }
        }
    }
    if matches!(cur.peek(), Some('e' | 'E')) {
        let mut ahead = cur.chars.clone();
        ahead.next();
        let next = ahead.next();
        let next2 = ahead.next();
        let exp_ok = match next {
            Some(c) if c.is_ascii_digit() => true,
            Some('+' | '-') => next2.is_some_and(|c| c.is_ascii_digit()),
            _ => false,
        };
        if exp_ok {
            is_float = true;
            s.push('e');
            cur.bump();
            if let Some(sign @ ('+' | '-')) = cur.peek() {
                s.push(sign);
                cur.bump();
            }
            while let Some(c) = cur.peek() {
                if c.is_ascii_digit() {
                    s.push(c);
                    cur.bump();
                } else {
                    break;
                }
            }
        }
    }
    if cur.peek().is_some_and(|c| c.is_alphabetic() || c == '_') {
        return Err(QueryError::syntax(cur.pos(), "identifier cannot start with a digit"));
    }
    if is_float {
        s.parse::<f64>()
            .map(Tok::Float)
            .map_err(|_| QueryError::syntax(pos, "invalid number"))
    } else {
        s.parse::<i64>()
            .map(Tok::Int)
            .map_err(|_| QueryError::syntax(pos, "integer out of range"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn edge_arrows_stay_split() {
        assert_eq!(
            toks("(a)<-[:X]-(b)-[]->(c)"),
            vec![
                Tok::LParen,
                Tok::Ident("a".into()),
                Tok::RParen,
                Tok::Lt,
                Tok::Minus,
                Tok::LBracket,
                Tok::Colon,
                Tok::Ident("X".into()),
                Tok::RBracket,
                Tok::Minus,
                Tok::LParen,
                Tok::Ident("b".into()),
                Tok::RParen,
                Tok::Minus,
                Tok::LBracket,
                Tok::RBracket,
                Tok::Minus,
                Tok::Gt,
                Tok::LParen,
                Tok::Ident("c".into()),
                Tok::RParen,
            ]
        );
    }

    #[test]
    fn literals() {
        assert_eq!(
            toks(r#"'it\'s' "a\"b" 42 4.5 1e-3 2.0E2"#),
            vec![
                Tok::Str("it's".into()),
                Tok::Str("a\"b".into()),
                Tok::Int(42),
                Tok::Float(4.5),
                Tok::Float(1e-3),
                Tok::Float(200.0),
            ]
        );
        assert_eq!(toks("n.x<>1"), toks("n.x != 1"));
    }

    #[test]
    fn positions_are_one_based() {
        let t = tokenize("MATCH\n  (n)").unwrap();
        assert_eq!(t[1].pos, Position { line: 2, column: 3 });
        let err = tokenize("MATCH (n)\nRETURN n $").unwrap_err();
        assert_eq!(err.position(), Some(Position { line: 2, column: 10 }));
    }
}
