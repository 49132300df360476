//! ISO-10303-21 text: writer and a small reader for our own output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ifc::model::{Entity, IfcModel, StepHeader, Value};

pub const ENVELOPE_START: &str = "ISO-10303-21;";
pub const ENVELOPE_END: &str = "END-ISO-10303-21;";

/// Up to 12 significant digits; exponent form outside `[1e-3, 1e7)`.
pub fn format_real(x: f64) -> String {
    if !x.is_finite() || x == 0.0 {
        return "0.".into();
    }
    let a = x.abs();
    if (1e-3..1e7).contains(&a) {
        let k = a.log10().floor() as i32 + 1;
        let decimals = (12 - k).clamp(0, 15) as usize;
        let mut s = format!("{x:.decimals$}");
        if s.contains('.') {
            while s.ends_with('0') {
                s.pop();
            }
        } else {
            s.push('.');
        }
        s
    } else {
        let s = format!("{x:.11E}");
        let (m, e) = s.split_once('E').unwrap_or((&s, "0"));
        let mut m = m.to_string();
        while m.ends_with('0') {
            m.pop();
        }
        format!("{m}E{e}")
    }
}

/// Apostrophe-delimited string with `''`, `\\` and `\X2\` escapes.
pub fn encode_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '\'' => out.push_str("''"),
            '\\' => out.push_str("\\\\"),
            ' '..='~' => out.push(c),
            _ => {
                out.push_str("\\X2\\");
                while i < chars.len() && !(' '..='~').contains(&chars[i]) {
                    let mut buf = [0u16; 2];
                    for u in chars[i].encode_utf16(&mut buf) {
                        let _ = write!(out, "{u:04X}");
                    }
                    i += 1;
                }
                out.push_str("\\X0\\");
                continue;
            }
        }
        i += 1;
    }
    out.push('\'');
    out
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Ref(i) => {
            let _ = write!(out, "#{i}");
        }
        Value::Str(s) => out.push_str(&encode_string(s)),
        Value::Enum(e) => {
            let _ = write!(out, ".{e}.");
        }
        Value::Real(x) => out.push_str(&format_real(*x)),
        Value::Int(i) => {
            let _ = write!(out, "{i}");
        }
        Value::List(xs) => {
            out.push('(');
            for (k, x) in xs.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write_value(out, x);
            }
            out.push(')');
        }
        Value::Typed(t, x) => {
            out.push_str(t);
            out.push('(');
            write_value(out, x);
            out.push(')');
        }
        Value::Unset => out.push('$'),
        Value::Derived => out.push('*'),
    }
}

fn write_args(out: &mut String, args: &[Value]) {
    out.push('(');
    for (k, a) in args.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        write_value(out, a);
    }
    out.push(')');
}

fn str_list(xs: &[String]) -> Value {
    Value::List(xs.iter().map(|s| Value::Str(s.clone())).collect())
}

pub fn to_step_string(model: &IfcModel) -> String {
    let h = &model.header;
    let mut out = String::new();
    out.push_str(ENVELOPE_START);
    out.push_str("\nHEADER;\n");
    let header_lines = [
        ("FILE_DESCRIPTION", vec![str_list(&h.description), Value::str(&h.implementation_level)]),
        (
            "FILE_NAME",
            vec![
                Value::str(&h.file_name),
                Value::str(&h.time_stamp),
                str_list(&h.author),
                str_list(&h.organization),
                Value::str(&h.preprocessor),
                Value::str(&h.originating_system),
                Value::str(&h.authorization),
            ],
        ),
        ("FILE_SCHEMA", vec![str_list(&h.schema)]),
    ];
    for (name, args) in header_lines {
        out.push_str(name);
        write_args(&mut out, &args);
        out.push_str(";\n");
    }
    out.push_str("ENDSEC;\nDATA;\n");
    for (id, e) in &model.entities {
        let _ = write!(out, "#{id}={}", e.ty);
        write_args(&mut out, &e.args);
        out.push_str(";\n");
    }
    out.push_str("ENDSEC;\n");
    out.push_str(ENVELOPE_END);
    out.push('\n');
    out
}

pub fn write_step(model: &IfcModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_step_string(model)).map_err(|e| Error::io(path, e))
}

/// Location of the first token the reader could not accept.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Keyword(String),
    Id(u32),
    Str(String),
    Enum(String),
    Real(f64),
    Int(i64),
    Dollar,
    Star,
    LParen,
    RParen,
    Comma,
    Semi,
    Eq,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn err(&self, message: impl Into<String>) -> SyntaxError {
        SyntaxError {
            line: self.line,
            column: self.col,
            message: message.into(),
        }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = *self.src.get(self.pos)?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_space(&mut self) -> std::result::Result<(), SyntaxError> {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'/') if self.src.get(self.pos + 1) == Some(&b'*') => {
                    self.bump();
                    self.bump();
                    loop {
                        match self.bump() {
                            Some(b'*') if self.peek() == Some(b'/') => {
                                self.bump();
                                break;
                            }
                            Some(_) => {}
                            None => return Err(self.err("unterminated comment")),
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    /// Next token with its starting line and column.
    fn next(&mut self) -> std::result::Result<Option<(Tok, usize, usize)>, SyntaxError> {
        self.skip_space()?;
        let (line, col) = (self.line, self.col);
        let Some(c) = self.peek() else { return Ok(None) };
        let tok = match c {
            b'(' => {
                self.bump();
                Tok::LParen
            }
            b')' => {
                self.bump();
                Tok::RParen
            }
            b',' => {
                self.bump();
                Tok::Comma
            }
            b';' => {
                self.bump();
                Tok::Semi
            }
            b'=' => {
                self.bump();
                Tok::Eq
            }
            b'$' => {
                self.bump();
                Tok::Dollar
            }
            b'*' => {
                self.bump();
                Tok::Star
            }
            b'#' => {
                self.bump();
                let start = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.bump();
                }
                let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                Tok::Id(s.parse().map_err(|_| self.err("bad instance id"))?)
            }
            b'\'' => {
                self.bump();
                Tok::Str(self.string()?)
            }
            b'.' if self.src.get(self.pos + 1).is_some_and(|c| c.is_ascii_alphabetic()) => {
                self.bump();
                let start = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_') {
                    self.bump();
                }
                let s = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
                if self.bump() != Some(b'.') {
                    return Err(self.err("unterminated enumeration"));
                }
                Tok::Enum(s)
            }
            b'0'..=b'9' | b'-' | b'+' | b'.' => self.number()?,
            c if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self
                    .peek()
                    .is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_' || c == b'-')
                {
                    self.bump();
                }
                Tok::Keyword(String::from_utf8_lossy(&self.src[start..self.pos]).to_ascii_uppercase())
            }
            other => return Err(self.err(format!("unexpected character {:?}", other as char))),
        };
        Ok(Some((tok, line, col)))
    }

    fn number(&mut self) -> std::result::Result<Tok, SyntaxError> {
        let start = self.pos;
        if matches!(self.peek(), Some(b'-' | b'+')) {
            self.bump();
        }
        let mut real = false;
        while let Some(c) = self.peek() {
            match c {
                b'0'..=b'9' => {}
                b'.' => real = true,
                b'E' | b'e' => {
                    real = true;
                    self.bump();
                    if matches!(self.peek(), Some(b'-' | b'+')) {
                        self.bump();
                    }
                    continue;
                }
                _ => break,
            }
            self.bump();
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        if real {
            // "1." and "1.E5" are valid STEP reals
            let fixed = s.replacen(".E", ".0E", 1);
            let fixed = if fixed.ends_with('.') { format!("{fixed}0") } else { fixed };
            fixed
                .parse()
                .map(Tok::Real)
                .map_err(|_| self.err(format!("bad real {s:?}")))
        } else {
            s.parse().map(Tok::Int).map_err(|_| self.err(format!("bad integer {s:?}")))
        }
    }

    fn string(&mut self) -> std::result::Result<String, SyntaxError> {
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(self.err("unterminated string")),
                Some(b'\'') => {
                    if self.peek() == Some(b'\'') {
                        self.bump();
                        out.push('\'');
                    } else {
                        return Ok(out);
                    }
                }
                Some(b'\\') => match self.peek() {
                    Some(b'\\') => {
                        self.bump();
                        out.push('\\');
                    }
                    Some(b'X') if self.src[self.pos..].starts_with(b"X2\\") => {
                        for _ in 0..3 {
                            self.bump();
                        }
                        let mut units = Vec::new();
                        while !self.src[self.pos..].starts_with(b"\\X0\\") {
                            let hex = self.src.get(self.pos..self.pos + 4).ok_or_else(|| self.err("bad \\X2\\ escape"))?;
                            let hex = std::str::from_utf8(hex).map_err(|_| self.err("bad \\X2\\ escape"))?;
                            units.push(u16::from_str_radix(hex, 16).map_err(|_| self.err("bad \\X2\\ escape"))?);
                            for _ in 0..4 {
                                self.bump();
                            }
                        }
                        for _ in 0..4 {
                            self.bump();
                        }
                        out.push_str(&String::from_utf16(&units).map_err(|_| self.err("bad UTF-16 in string"))?);
                    }
                    _ => out.push('\\'),
                },
                Some(c) if c < 0x80 => out.push(c as char),
                Some(_) => return Err(self.err("non-ASCII byte in string")),
            }
        }
    }
}

/// Parsed file: header records and data entities. Ids defined more than
/// once are listed in `duplicates`; the first definition wins.
#[derive(Debug, Clone, Default)]
pub struct ParsedStep {
    pub header: Vec<(String, Vec<Value>)>,
    pub entities: BTreeMap<u32, Entity>,
    pub duplicates: Vec<u32>,
}

impl ParsedStep {
    pub fn schema(&self) -> Vec<String> {
        self.header
            .iter()
            .find(|(n, _)| n == "FILE_SCHEMA")
            .and_then(|(_, a)| a.first())
            .and_then(|v| v.as_list())
            .map(|l| l.iter().filter_map(|v| v.as_str().map(String::from)).collect())
            .unwrap_or_default()
    }

    pub fn ids_of(&self, ty: &str) -> Vec<u32> {
        self.entities
            .iter()
            .filter(|(_, e)| e.ty == ty)
            .map(|(&i, _)| i)
            .collect()
    }

    pub fn get(&self, id: u32) -> Option<&Entity> {
        self.entities.get(&id)
    }

    /// Data section of an in-memory model, without writing it out.
    pub fn from_model(model: &IfcModel) -> ParsedStep {
        ParsedStep {
            header: Vec::new(),
            entities: model.entities.clone(),
            duplicates: Vec::new(),
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn err_at(&self, message: impl Into<String>) -> SyntaxError {
        let (line, column) = self.toks.get(self.pos).map(|t| (t.1, t.2)).unwrap_or(self.end);
        SyntaxError {
            line,
            column,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn take(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.0.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: &Tok, what: &str) -> std::result::Result<(), SyntaxError> {
        if self.peek() == Some(want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err_at(format!("expected {what}")))
        }
    }

    fn keyword(&mut self, want: &str) -> std::result::Result<(), SyntaxError> {
        match self.peek() {
            Some(Tok::Keyword(k)) if k == want => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err_at(format!("expected {want}"))),
        }
    }

    fn args(&mut self) -> std::result::Result<Vec<Value>, SyntaxError> {
        self.expect(&Tok::LParen, "'('")?;
        let mut out = Vec::new();
        if self.peek() == Some(&Tok::RParen) {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(self.value()?);
            match self.take() {
                Some(Tok::Comma) => {}
                Some(Tok::RParen) => return Ok(out),
                _ => {
                    self.pos -= 1;
                    return Err(self.err_at("expected ',' or ')'"));
                }
            }
        }
    }

    fn value(&mut self) -> std::result::Result<Value, SyntaxError> {
        match self.peek().cloned() {
            Some(Tok::LParen) => Ok(Value::List(self.args()?)),
            Some(Tok::Keyword(k)) => {
                self.pos += 1;
                let mut inner = self.args()?;
                if inner.len() != 1 {
                    return Err(self.err_at("typed parameter needs one value"));
                }
                Ok(Value::Typed(k, Box::new(inner.remove(0))))
            }
            Some(t) => {
                self.pos += 1;
                Ok(match t {
                    Tok::Id(i) => Value::Ref(i),
                    Tok::Str(s) => Value::Str(s),
                    Tok::Enum(e) => Value::Enum(e),
                    Tok::Real(x) => Value::Real(x),
                    Tok::Int(i) => Value::Int(i),
                    Tok::Dollar => Value::Unset,
                    Tok::Star => Value::Derived,
                    _ => {
                        self.pos -= 1;
                        return Err(self.err_at("expected a value"));
                    }
                })
            }
            None => Err(self.err_at("unexpected end of file")),
        }
    }
}

pub fn parse_step(text: &str) -> std::result::Result<ParsedStep, SyntaxError> {
    let mut lx = Lexer {
        src: text.as_bytes(),
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut toks = Vec::new();
    while let Some(t) = lx.next()? {
        toks.push(t);
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end: (lx.line, lx.col),
    };
    let mut out = ParsedStep::default();
    p.keyword("ISO-10303-21")?;
    p.expect(&Tok::Semi, "';'")?;
    p.keyword("HEADER")?;
    p.expect(&Tok::Semi, "';'")?;
    loop {
        match p.take() {
            Some(Tok::Keyword(k)) if k == "ENDSEC" => break,
            Some(Tok::Keyword(k)) => {
                let args = p.args()?;
                p.expect(&Tok::Semi, "';'")?;
                out.header.push((k, args));
            }
            _ => {
                p.pos -= 1;
                return Err(p.err_at("expected header record or ENDSEC"));
            }
        }
    }
    p.expect(&Tok::Semi, "';'")?;
    p.keyword("DATA")?;
    p.expect(&Tok::Semi, "';'")?;
    loop {
        match p.take() {
            Some(Tok::Keyword(k)) if k == "ENDSEC" => break,
            Some(Tok::Id(id)) => {
                p.expect(&Tok::Eq, "'='")?;
                let ty = match p.take() {
                    Some(Tok::Keyword(k)) => k,
                    _ => {
                        p.pos -= 1;
                        return Err(p.err_at("expected entity type"));
                    }
                };
                let args = p.args()?;
                p.expect(&Tok::Semi, "';'")?;
                if out.entities.contains_key(&id) {
                    out.duplicates.push(id);
                } else {
                    out.entities.insert(id, Entity { ty, args });
                }
            }
            _ => {
                p.pos = p.pos.saturating_sub(1);
                return Err(p.err_at("expected entity instance or ENDSEC"));
            }
        }
    }
    p.expect(&Tok::Semi, "';'")?;
    p.keyword("END-ISO-10303-21")?;
    p.expect(&Tok::Semi, "';'")?;
    if p.pos < p.toks.len() {
        return Err(p.err_at("trailing content after END-ISO-10303-21"));
    }
    Ok(out)
}

/// Header with our fixed view definition and schema.
pub fn default_header(file_name: &str, time_stamp: &str, author: &str, organization: &str) -> StepHeader {
    let tool = format!("pointbim {}", env!("CARGO_PKG_VERSION"));
    StepHeader {
        description: vec!["ViewDefinition [DesignTransferView_V1.0]".into()],
        implementation_level: "2;1".into(),
        file_name: file_name.into(),
        time_stamp: time_stamp.into(),
        author: vec![author.into()],
        organization: vec![organization.into()],
        preprocessor: tool.clone(),
        originating_system: tool,
        authorization: String::new(),
        schema: vec!["IFC4".into()],
    }
}
