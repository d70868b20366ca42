//! Flat `key = value` text used by config and scenario files.
//!
//! One pair per line; `#` starts a comment; blank lines are ignored. Keys may
//! repeat, callers decide whether that is allowed.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected `key = value`, found `{line}`") })?;
        let key = k.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::Parse { line: i + 1, msg: format!("bad key `{key}`") });
        }
        out.push(Entry { line: i + 1, key: key.to_string(), value: v.trim().to_string() });
    }
    Ok(out)
}

impl Entry {
    fn err(&self, what: &str) -> Error {
        Error::Config(format!("line {}: {} `{}` for `{}`", self.line, what, self.value, self.key))
    }

    pub fn f64(&self) -> Result<f64> {
        self.value.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| self.err("expected a number, found"))
    }

    pub fn usize(&self) -> Result<usize> {
        self.value.parse().map_err(|_| self.err("expected a non-negative integer, found"))
    }

    pub fn u32(&self) -> Result<u32> {
        self.value.parse().map_err(|_| self.err("expected a non-negative integer, found"))
    }

    pub fn u64(&self) -> Result<u64> {
        self.value.parse().map_err(|_| self.err("expected a non-negative integer, found"))
    }

    pub fn bool(&self) -> Result<bool> {
        match self.value.as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(self.err("expected true or false, found")),
        }
    }

    /// Comma separated numbers.
    pub fn list(&self) -> Result<Vec<f64>> {
        self.value
            .split(',')
            .map(|v| v.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| self.err("expected comma separated numbers, found"))
    }

    pub fn pair(&self) -> Result<(f64, f64)> {
        match self.list()?.as_slice() {
            &[a, b] => Ok((a, b)),
            _ => Err(self.err("expected two numbers, found")),
        }
    }
}
