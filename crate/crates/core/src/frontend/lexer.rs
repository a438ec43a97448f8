//! Hand-rolled lexer for the Move subset.

use crate::diag::Span;
use crate::frontend::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(u128),
    /// `0x`-prefixed address literal, stored lowercase without the prefix.
    AddressLit(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Lt,
    Gt,
    Le,
    Ge,
    EqEq,
    Neq,
    Implies,
    AndAnd,
    OrOr,
    Not,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Comma,
    Semi,
    Colon,
    ColonColon,
    Dot,
    Amp,
    AmpMut,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(n) => format!("integer `{n}`"),
            Tok::AddressLit(a) => format!("address `0x{a}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Lt => "<",
            Tok::Gt => ">",
            Tok::Le => "<=",
            Tok::Ge => ">=",
            Tok::EqEq => "==",
            Tok::Neq => "!=",
            Tok::Implies => "==>",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            Tok::Not => "!",
            Tok::Assign => "=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::ColonColon => "::",
            Tok::Dot => ".",
            Tok::Amp => "&",
            Tok::AmpMut => "&mut",
            _ => "?",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpannedTok {
    pub tok: Tok,
    pub span: Span,
}

pub fn lex(source: &str) -> Result<Vec<SpannedTok>, ParseError> {
    let mut toks = Vec::new();
    let bytes = source.as_bytes();
    let mut i = 0;
    let mut line: u32 = 1;
    let mut col: u32 = 1;

    macro_rules! push {
        ($tok:expr, $span:expr, $len:expr) => {{
            toks.push(SpannedTok {
                tok: $tok,
                span: $span,
            });
            i += $len;
            col += $len as u32;
        }};
    }

    while i < bytes.len() {
        let c = bytes[i] as char;
        let span = Span::new(line, col);
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            '/' if bytes.get(i + 1) == Some(&b'*') => {
                i += 2;
                col += 2;
                loop {
                    if i + 1 >= bytes.len() {
                        return Err(ParseError::syntax(span, "unterminated block comment"));
                    }
                    if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                        i += 2;
                        col += 2;
                        break;
                    }
                    if bytes[i] == b'\n' {
                        line += 1;
                        col = 1;
                    } else {
                        col += 1;
                    }
                    i += 1;
                }
            }
            '{' => push!(Tok::LBrace, span, 1),
            '}' => push!(Tok::RBrace, span, 1),
            '(' => push!(Tok::LParen, span, 1),
            ')' => push!(Tok::RParen, span, 1),
            '[' => push!(Tok::LBracket, span, 1),
            ']' => push!(Tok::RBracket, span, 1),
            ',' => push!(Tok::Comma, span, 1),
            ';' => push!(Tok::Semi, span, 1),
            '.' => push!(Tok::Dot, span, 1),
            '+' => push!(Tok::Plus, span, 1),
            '-' => push!(Tok::Minus, span, 1),
            '*' => push!(Tok::Star, span, 1),
            '/' => push!(Tok::Slash, span, 1),
            '%' => push!(Tok::Percent, span, 1),
            ':' => {
                if bytes.get(i + 1) == Some(&b':') {
                    push!(Tok::ColonColon, span, 2)
                } else {
                    push!(Tok::Colon, span, 1)
                }
            }
            '=' => {
                if source[i..].starts_with("==>") {
                    push!(Tok::Implies, span, 3)
                } else if source[i..].starts_with("==") {
                    push!(Tok::EqEq, span, 2)
                } else {
                    push!(Tok::Assign, span, 1)
                }
            }
            '!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    push!(Tok::Neq, span, 2)
                } else {
                    push!(Tok::Not, span, 1)
                }
            }
            '<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    push!(Tok::Le, span, 2)
                } else {
                    push!(Tok::Lt, span, 1)
                }
            }
            '>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    push!(Tok::Ge, span, 2)
                } else {
                    push!(Tok::Gt, span, 1)
                }
            }
            '&' => {
                if source[i..].starts_with("&mut") {
                    push!(Tok::AmpMut, span, 4)
                } else if bytes.get(i + 1) == Some(&b'&') {
                    push!(Tok::AndAnd, span, 2)
                } else {
                    push!(Tok::Amp, span, 1)
                }
            }
            '|' => {
                if bytes.get(i + 1) == Some(&b'|') {
                    push!(Tok::OrOr, span, 2)
                } else {
                    return Err(ParseError::syntax(span, "unexpected character `|`"));
                }
            }
            '0' if bytes.get(i + 1) == Some(&b'x') || bytes.get(i + 1) == Some(&b'X') => {
                let start = i + 2;
                let mut end = start;
                while end < bytes.len() && (bytes[end] as char).is_ascii_hexdigit() {
                    end += 1;
                }
                if end == start {
                    return Err(ParseError::syntax(span, "malformed address literal"));
                }
                let text = source[start..end].to_ascii_lowercase();
                let len = end - i;
                push!(Tok::AddressLit(text), span, len);
            }
            '0'..='9' => {
                let start = i;
                let mut end = i;
                while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'_') {
                    end += 1;
                }
                // Swallow an integer width suffix if present.
                for suffix in ["u128", "u64", "u8"] {
                    if source[end..].starts_with(suffix) {
                        end += suffix.len();
                        break;
                    }
                }
                let digits: String = source[start..end]
                    .chars()
                    .take_while(|c| c.is_ascii_digit() || *c == '_')
                    .filter(|c| c.is_ascii_digit())
                    .collect();
                let value: u128 = digits
                    .parse()
                    .map_err(|_| ParseError::syntax(span, "integer literal out of range"))?;
                let len = end - start;
                push!(Tok::Int(value), span, len);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                let mut end = i;
                while end < bytes.len()
                    && ((bytes[end] as char).is_ascii_alphanumeric() || bytes[end] == b'_')
                {
                    end += 1;
                }
                let text = source[start..end].to_string();
                let len = end - start;
                push!(Tok::Ident(text), span, len);
            }
            other => {
                return Err(ParseError::syntax(
                    span,
                    format!("unexpected character `{other}`"),
                ));
            }
        }
    }
    toks.push(SpannedTok {
        tok: Tok::Eof,
        span: Span::new(line, col),
    });
    Ok(toks)
}
