//! Tokenising helpers shared by the line-oriented file formats.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::net::{AddrRange, Name, NodeId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// One non-blank, non-comment line split into whitespace-separated words.
/// Columns are 1-based byte offsets.
#[derive(Debug, Clone)]
pub(crate) struct Line<'a> {
    pub number: usize,
    pub words: Vec<(usize, &'a str)>,
}

pub(crate) fn lines(text: &str) -> impl Iterator<Item = Line<'_>> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let content = raw.split('#').next().unwrap_or("");
        let words: Vec<(usize, &str)> = content
            .split_whitespace()
            .map(|w| (w.as_ptr() as usize - raw.as_ptr() as usize + 1, w))
            .collect();
        (!words.is_empty()).then_some(Line { number: i + 1, words })
    })
}

impl<'a> Line<'a> {
    pub fn error(&self, column: usize, message: impl Into<String>) -> ParseError {
        ParseError { line: self.number, column, message: message.into() }
    }

    pub fn keyword(&self) -> &'a str {
        self.words[0].1
    }

    /// Words after the keyword, split into positional words and `key=value`
    /// pairs. Keys may not repeat.
    pub fn fields(&self) -> Result<Fields<'a>, ParseError> {
        let (last_col, last) = self.words[self.words.len() - 1];
        let mut f = Fields {
            line: self.number,
            end: last_col + last.len(),
            positional: Vec::new(),
            named: BTreeMap::new(),
        };
        for &(col, w) in &self.words[1..] {
            match w.split_once('=') {
                Some((k, v)) => {
                    if f.named.insert(k, (col, v)).is_some() {
                        return Err(self.error(col, format!("duplicate key `{k}`")));
                    }
                }
                None => f.positional.push((col, w)),
            }
        }
        Ok(f)
    }
}

pub(crate) struct Fields<'a> {
    line: usize,
    /// Column just past the last word; missing keys are reported here.
    end: usize,
    pub positional: Vec<(usize, &'a str)>,
    named: BTreeMap<&'a str, (usize, &'a str)>,
}

impl<'a> Fields<'a> {
    fn err(&self, column: usize, message: impl Into<String>) -> ParseError {
        ParseError { line: self.line, column, message: message.into() }
    }

    pub fn take(&mut self, key: &str) -> Option<(usize, &'a str)> {
        self.named.remove(key)
    }

    pub fn require(&mut self, key: &str) -> Result<(usize, &'a str), ParseError> {
        self.take(key).ok_or_else(|| self.err(self.end, format!("missing `{key}=`")))
    }

    pub fn parsed<T>(
        &mut self,
        key: &str,
        what: &str,
        f: impl Fn(&str) -> Option<T>,
    ) -> Result<T, ParseError> {
        let (col, v) = self.require(key)?;
        f(v).ok_or_else(|| self.err(col, format!("invalid {what} `{v}`")))
    }

    pub fn optional<T>(
        &mut self,
        key: &str,
        what: &str,
        f: impl Fn(&str) -> Option<T>,
    ) -> Result<Option<T>, ParseError> {
        match self.take(key) {
            None => Ok(None),
            Some((col, v)) => f(v).map(Some).ok_or_else(|| self.err(col, format!("invalid {what} `{v}`"))),
        }
    }

    /// Rejects leftover named fields.
    pub fn finish(self) -> Result<(), ParseError> {
        match self.named.iter().next() {
            Some((k, (col, _))) => Err(self.err(*col, format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}

/// Decimal, or hexadecimal with a `0x` prefix. Underscores are ignored.
pub fn parse_u64(s: &str) -> Option<u64> {
    let s = s.replace('_', "");
    match s.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

pub(crate) fn parse_node(s: &str) -> Option<NodeId> {
    s.parse().ok().map(NodeId)
}

/// `node:addr`.
pub(crate) fn parse_name(s: &str) -> Option<Name> {
    let (n, a) = s.split_once(':')?;
    Name::checked(parse_node(n)?, parse_u64(a)?).ok()
}

/// `base:size`.
pub(crate) fn parse_range(s: &str) -> Option<AddrRange> {
    let (b, n) = s.split_once(':')?;
    AddrRange::new(parse_u64(b)?, parse_u64(n)?).ok()
}

pub(crate) fn fmt_range(r: &AddrRange) -> String {
    format!("{:#x}:{:#x}", r.base(), r.size())
}
