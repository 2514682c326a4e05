//! Text grammar for screen schemas.
//!
//! ```text
//! schema   := ws? (element ws?)*
//! element  := CLASS (ws (STRING | "<mask>"))? ws INT ws INT ws INT ws INT (ws "(" schema ")")?
//! CLASS    := [A-Z][A-Z0-9_]*
//! STRING   := double-quoted, escapes \" \\ \n
//! INT      := 0|[1-9][0-9]{0,2}
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{mask::MASK_TOKEN, ElementClass, QuantBox, ScreenSchema, UiElement};

/// Order in which the four coordinates of a box are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordOrder {
    /// `ymin xmin ymax xmax`
    #[default]
    Yxyx,
    /// `xmin ymin xmax ymax`
    Xyxy,
}

impl CoordOrder {
    /// Reorders raw coordinates into a box, validating range and ordering.
    pub fn to_box(self, raw: [u16; 4]) -> Result<QuantBox, super::SchemaError> {
        match self {
            CoordOrder::Yxyx => QuantBox::new(raw[0], raw[1], raw[2], raw[3]),
            CoordOrder::Xyxy => QuantBox::new(raw[1], raw[0], raw[3], raw[2]),
        }
    }

    pub fn to_raw(self, b: &QuantBox) -> [u16; 4] {
        match self {
            CoordOrder::Yxyx => [b.ymin(), b.xmin(), b.ymax(), b.xmax()],
            CoordOrder::Xyxy => [b.xmin(), b.ymin(), b.xmax(), b.ymax()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("unterminated string")]
    UnterminatedString,
    #[error("invalid escape sequence \\{0}")]
    InvalidEscape(char),
    #[error("integer with leading zero")]
    LeadingZero,
    #[error("coordinate {0} out of range 0..=999")]
    CoordinateOutOfRange(u64),
    #[error("ymax < ymin")]
    InvertedY,
    #[error("xmax < xmin")]
    InvertedX,
    #[error("unbalanced parentheses")]
    UnbalancedParen,
    #[error("expected {expected}, found {found}")]
    UnexpectedToken { expected: &'static str, found: &'static str },
    #[error("empty payload")]
    EmptyPayload,
}

/// Parse failure with the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

impl ParseError {
    fn new(kind: ParseErrorKind, offset: usize) -> Self {
        Self { kind, offset }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token<'a> {
    Class(&'a str),
    Str(String),
    Mask,
    Int(u16),
    Open,
    Close,
}

impl Token<'_> {
    fn describe(&self) -> &'static str {
        match self {
            Token::Class(_) => "class name",
            Token::Str(_) => "string",
            Token::Mask => "mask token",
            Token::Int(_) => "integer",
            Token::Open => "'('",
            Token::Close => "')'",
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek_char() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    /// A word token must be followed by whitespace, a parenthesis or the end.
    fn expect_boundary(&self) -> Result<(), ParseError> {
        match self.peek_char() {
            None | Some('(') | Some(')') => Ok(()),
            Some(c) if c.is_whitespace() => Ok(()),
            Some(c) => Err(ParseError::new(ParseErrorKind::UnexpectedChar(c), self.pos)),
        }
    }

    fn next_token(&mut self) -> Result<Option<(Token<'a>, usize)>, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let Some(c) = self.peek_char() else {
            return Ok(None);
        };
        let tok = match c {
            '(' => {
                self.pos += 1;
                Token::Open
            }
            ')' => {
                self.pos += 1;
                Token::Close
            }
            '"' => {
                let s = self.lex_string()?;
                self.expect_boundary()?;
                Token::Str(s)
            }
            'A'..='Z' => {
                let len = self.src[start..]
                    .bytes()
                    .take_while(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || *b == b'_')
                    .count();
                self.pos += len;
                self.expect_boundary()?;
                Token::Class(&self.src[start..self.pos])
            }
            '0'..='9' => {
                let digits = &self.src[start..];
                let len = digits.bytes().take_while(u8::is_ascii_digit).count();
                let digits = &digits[..len];
                if len > 1 && digits.starts_with('0') {
                    return Err(ParseError::new(ParseErrorKind::LeadingZero, start));
                }
                let value = digits.parse::<u64>().unwrap_or(u64::MAX);
                if value > u64::from(super::QUANT_MAX) {
                    return Err(ParseError::new(ParseErrorKind::CoordinateOutOfRange(value), start));
                }
                self.pos += len;
                self.expect_boundary()?;
                Token::Int(value as u16)
            }
            '<' if self.src[start..].starts_with(MASK_TOKEN) => {
                self.pos += MASK_TOKEN.len();
                self.expect_boundary()?;
                Token::Mask
            }
            other => return Err(ParseError::new(ParseErrorKind::UnexpectedChar(other), start)),
        };
        Ok(Some((tok, start)))
    }

    fn lex_string(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        self.pos += 1;
        let mut out = String::new();
        let mut chars = self.src[self.pos..].char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.pos += i + 1;
                    return Ok(out);
                }
                '\\' => match chars.next() {
                    Some((_, '"')) => out.push('"'),
                    Some((_, '\\')) => out.push('\\'),
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, e)) => {
                        return Err(ParseError::new(ParseErrorKind::InvalidEscape(e), self.pos + i))
                    }
                    None => break,
                },
                c => out.push(c),
            }
        }
        Err(ParseError::new(ParseErrorKind::UnterminatedString, start))
    }
}

struct Frame {
    siblings: Vec<UiElement>,
    parent: UiElement,
    open_offset: usize,
}

pub fn parse_schema(text: &str) -> Result<ScreenSchema, ParseError> {
    parse_schema_with(text, CoordOrder::default())
}

pub fn parse_schema_with(text: &str, order: CoordOrder) -> Result<ScreenSchema, ParseError> {
    let mut lexer = Lexer::new(text);
    let mut stack: Vec<Frame> = Vec::new();
    let mut current: Vec<UiElement> = Vec::new();
    // An element was just completed and may open a child block.
    let mut can_open = false;

    while let Some((tok, offset)) = lexer.next_token()? {
        match tok {
            Token::Class(name) => {
                let el = parse_element(&mut lexer, name, offset, order)?;
                current.push(el);
                can_open = true;
            }
            Token::Open if can_open => {
                let parent = current.pop().expect("element just pushed");
                stack.push(Frame { siblings: std::mem::take(&mut current), parent, open_offset: offset });
                can_open = false;
            }
            Token::Open => {
                return Err(ParseError::new(
                    ParseErrorKind::UnexpectedToken { expected: "class name", found: "'('" },
                    offset,
                ))
            }
            Token::Close => {
                let Some(frame) = stack.pop() else {
                    return Err(ParseError::new(ParseErrorKind::UnbalancedParen, offset));
                };
                let children = std::mem::replace(&mut current, frame.siblings);
                current.push(frame.parent.with_children(children));
                can_open = false;
            }
            other => {
                return Err(ParseError::new(
                    ParseErrorKind::UnexpectedToken { expected: "class name", found: other.describe() },
                    offset,
                ))
            }
        }
    }
    if let Some(frame) = stack.last() {
        return Err(ParseError::new(ParseErrorKind::UnbalancedParen, frame.open_offset));
    }
    Ok(ScreenSchema::new(current))
}

fn parse_element(
    lexer: &mut Lexer<'_>,
    name: &str,
    start: usize,
    order: CoordOrder,
) -> Result<UiElement, ParseError> {
    let class = ElementClass::new(name).expect("lexer only yields valid class names");
    let mut payload = None;
    let mut masked = false;
    let mut coords = [0u16; 4];
    let mut n = 0;
    while n < 4 {
        let Some((tok, offset)) = lexer.next_token()? else {
            return Err(ParseError::new(
                ParseErrorKind::UnexpectedToken { expected: "integer", found: "end of input" },
                lexer.pos,
            ));
        };
        match tok {
            Token::Int(v) => {
                coords[n] = v;
                n += 1;
            }
            Token::Str(s) if n == 0 && payload.is_none() && !masked => {
                if s.trim().is_empty() {
                    return Err(ParseError::new(ParseErrorKind::EmptyPayload, offset));
                }
                payload = Some(s);
            }
            Token::Mask if n == 0 && payload.is_none() && !masked => masked = true,
            other => {
                return Err(ParseError::new(
                    ParseErrorKind::UnexpectedToken { expected: "integer", found: other.describe() },
                    offset,
                ))
            }
        }
    }
    let bbox = order.to_box(coords).map_err(|_| {
        let (ymin, ymax) = match order {
            CoordOrder::Yxyx => (coords[0], coords[2]),
            CoordOrder::Xyxy => (coords[1], coords[3]),
        };
        let kind = if ymax < ymin { ParseErrorKind::InvertedY } else { ParseErrorKind::InvertedX };
        ParseError::new(kind, start)
    })?;
    let mut el = UiElement::new(class, bbox);
    if masked {
        el.mask();
    } else if let Some(p) = payload {
        el.set_payload(Some(p)).expect("checked non-empty");
    }
    Ok(el)
}

pub fn serialize_schema(schema: &ScreenSchema) -> String {
    serialize_schema_with(schema, CoordOrder::default())
}

pub fn serialize_schema_with(schema: &ScreenSchema, order: CoordOrder) -> String {
    let mut out = String::new();
    write_elements(&mut out, &schema.elements, order);
    out
}

fn write_elements(out: &mut String, elements: &[UiElement], order: CoordOrder) {
    for (i, el) in elements.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(el.class.as_str());
        if el.is_masked() {
            out.push(' ');
            out.push_str(MASK_TOKEN);
        } else if let Some(p) = el.payload() {
            out.push_str(" \"");
            escape_into(out, p);
            out.push('"');
        }
        let [a, b, c, d] = order.to_raw(&el.bbox);
        let _ = write!(out, " {a} {b} {c} {d}");
        if !el.children.is_empty() {
            out.push_str(" ( ");
            write_elements(out, &el.children, order);
            out.push_str(" )");
        }
    }
}

fn escape_into(out: &mut String, s: &str) {
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
}
